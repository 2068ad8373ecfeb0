import pytest
from fastapi.testclient import TestClient

from clustersort.api import ServiceState, create_app
from clustersort.synthetic import SyntheticSpec, generate_synthetic, write_dataset


@pytest.fixture
def client(tmp_path):
    spec = SyntheticSpec(
        class_count=4, total=800, zipf_exponent=1.0, dim=8,
        cluster_sigma=0.1, noise_fraction=0.05, rng_seed=3,
    )
    dataset = generate_synthetic(spec)
    features = tmp_path / "features.mcft"
    labels = tmp_path / "labels.csv"
    write_dataset(dataset, features, labels)
    app = create_app(tmp_path / "projects")
    client = TestClient(app)
    resp = client.post(
        "/projects",
        json={
            "feature_path": str(features),
            "labels_path": str(labels),
            "schedule": [64, 16],
        },
    )
    assert resp.status_code == 200
    client.project_id = resp.json()["project_id"]
    client.dataset = dataset
    return client


def start_iteration(client):
    resp = client.post(f"/projects/{client.project_id}/iterations")
    assert resp.status_code == 200
    return resp.json()


def grow_via_api(client, cluster_id):
    resp = client.post(f"/clusters/{cluster_id}/grow-sessions")
    assert resp.status_code == 200
    sid = resp.json()["session_id"]
    while True:
        probe = client.get(f"/grow-sessions/{sid}/next-probe").json()
        if probe["done"]:
            break
        page = probe["page"]
        verdict = "match" if page == 0 else "no_match"
        resp = client.post(
            f"/grow-sessions/{sid}/pages/{page}/verdict", json={"verdict": verdict}
        )
        assert resp.status_code == 200
    resp = client.post(f"/grow-sessions/{sid}/commit")
    assert resp.status_code == 200
    return sid, resp.json()


def test_create_and_iterate(client):
    body = start_iteration(client)
    assert body["iteration"] == 1
    assert body["m"] == 64
    assert body["clusters"]

    listing = client.get(
        f"/projects/{client.project_id}/clusters", params={"status": "proposed"}
    ).json()
    assert {c["cluster_id"] for c in listing["clusters"]} == set(body["clusters"])


def test_approve_then_conflict(client):
    body = start_iteration(client)
    cid = body["clusters"][0]
    resp = client.post(f"/clusters/{cid}/approve")
    assert resp.status_code == 200
    assert resp.json()["status"] == "validated"
    resp = client.post(f"/clusters/{cid}/approve")
    assert resp.status_code == 409


def test_unknown_ids_404(client):
    assert client.post("/clusters/nope/approve").status_code == 404
    assert client.get("/grow-sessions/nope/next-probe").status_code == 404
    assert client.post("/projects/nope/iterations").status_code == 404


def test_members_dissimilar_order(client):
    body = start_iteration(client)
    cid = body["clusters"][0]
    plain = client.get(f"/clusters/{cid}/members").json()["members"]
    ordered = client.get(
        f"/clusters/{cid}/members", params={"order": "dissimilar"}
    ).json()["members"]
    assert sorted(plain) == sorted(ordered)
    assert plain != ordered or len(plain) <= 2


def test_page_out_of_range_404(client):
    body = start_iteration(client)
    cid = body["clusters"][0]
    client.post(f"/clusters/{cid}/approve")
    sid = client.post(f"/clusters/{cid}/grow-sessions").json()["session_id"]
    resp = client.get(f"/grow-sessions/{sid}/pages/99999")
    assert resp.status_code == 404


def test_out_of_order_verdict_400(client):
    body = start_iteration(client)
    cid = body["clusters"][0]
    client.post(f"/clusters/{cid}/approve")
    sid = client.post(f"/clusters/{cid}/grow-sessions").json()["session_id"]
    probe = client.get(f"/grow-sessions/{sid}/next-probe").json()
    wrong = probe["page"] + 2
    resp = client.post(
        f"/grow-sessions/{sid}/pages/{wrong}/verdict", json={"verdict": "match"}
    )
    assert resp.status_code == 400


def test_full_flow_tree_labeling_metrics(client):
    while True:
        body = start_iteration(client)
        if body.get("done"):
            break
        for cid in body["clusters"]:
            client.post(f"/clusters/{cid}/approve")
        for cid in body["clusters"]:
            grow_via_api(client, cid)

    resp = client.post(f"/projects/{client.project_id}/tree")
    assert resp.status_code == 200
    tree = resp.json()
    leaves = [n for n in tree["nodes"].values() if n["cluster_refs"]]
    assert leaves

    leaf = leaves[0]["node_id"]
    resp = client.post(f"/nodes/{leaf}/name", json={"name": "copepods"})
    assert resp.status_code == 200
    assert resp.json()["nodes"][leaf]["name"] == "copepods"
    resp = client.post(f"/nodes/{leaf}/name", json={"name": "a/b"})
    assert resp.status_code == 400

    resp = client.get(f"/projects/{client.project_id}/labeling")
    assert resp.status_code == 200
    assert resp.text.startswith("object_id,label_path\n")
    assert "copepods" in resp.text

    metrics = client.get(f"/projects/{client.project_id}/metrics").json()
    assert metrics["clusters"]["grown"] >= 1
    assert metrics["events"] > 0


def test_commit_idempotent_over_http(client):
    body = start_iteration(client)
    for cid in body["clusters"]:
        client.post(f"/clusters/{cid}/approve")
    cid = body["clusters"][0]
    sid, first = grow_via_api(client, cid)
    again = client.post(f"/grow-sessions/{sid}/commit")
    assert again.status_code == 200
    assert again.json() == first


def test_remove_disables_binary_search(client):
    body = start_iteration(client)
    for cid in body["clusters"]:
        client.post(f"/clusters/{cid}/approve")
    cid = body["clusters"][0]
    sid = client.post(f"/clusters/{cid}/grow-sessions").json()["session_id"]
    probe = client.get(f"/grow-sessions/{sid}/next-probe").json()
    page = client.get(f"/grow-sessions/{sid}/pages/{probe['page']}").json()
    target = page["objects"][0]
    resp = client.post(f"/grow-sessions/{sid}/remove/{target}")
    assert resp.status_code == 200
    assert resp.json()["mode"] == "turtle"
    assert client.get(f"/grow-sessions/{sid}/next-probe").status_code == 409
    # bulk-accept the remainder of the current page, then commit
    current = resp.json()["current_page"]
    resp = client.post(
        f"/grow-sessions/{sid}/pages/{current}/verdict", json={"verdict": "match"}
    )
    assert resp.status_code == 200
    commit = client.post(f"/grow-sessions/{sid}/commit")
    assert commit.status_code == 200
    assert target not in commit.json()["added"]
