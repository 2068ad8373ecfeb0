"""Feature store: binary feature file I/O, object identity, and distances.

The on-disk feature format (MCFT) is bit-exact: little-endian header
``magic "MCFT" | version u32 | count u64 | dim u32`` followed by one record
per object: ``id_len u16 | id utf-8 | dim x float32``.  Labels and dataset
roles live in a separate CSV sidecar (``object_id,role,label``) because they
have a different lifecycle than the vectors.
"""

from __future__ import annotations

import csv
import enum
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DuplicateIdError, FormatError

MAGIC = b"MCFT"
VERSION = 1

_HEADER = struct.Struct("<4sIQI")
_ID_LEN = struct.Struct("<H")


class DatasetRole(enum.Enum):
    """Provenance of an object within a project."""

    UNLABELED = "unlabeled"
    VALIDATION = "validation"
    TRAINING = "training"
    INDICATOR = "indicator"


@dataclass(frozen=True)
class ObjectRecord:
    """One image-derived object: id, feature vector, optional prior label."""

    object_id: str
    features: np.ndarray
    prior_label: str | None = None
    dataset_role: DatasetRole = DatasetRole.UNLABELED


class FeatureStore:
    """Immutable, indexed collection of feature vectors.

    Vectors are held as a single float32 matrix; all distance math is done
    in float64.  Instances are safe for concurrent reads once constructed.
    """

    def __init__(self, dimensionality: int, ids: Sequence[str], features: np.ndarray):
        if dimensionality <= 0:
            raise ValueError(f"dimensionality must be positive, got {dimensionality}")
        features = np.asarray(features, dtype=np.float32)
        if features.ndim != 2 or features.shape[1] != dimensionality:
            raise ValueError(
                f"feature matrix shape {features.shape} does not match dim {dimensionality}"
            )
        if len(ids) != features.shape[0]:
            raise ValueError("id list and feature matrix disagree on record count")
        if not np.all(np.isfinite(features)):
            raise ValueError("feature vectors must be finite")
        self.dimensionality = int(dimensionality)
        self._ids: list[str] = list(ids)
        self._index: dict[str, int] = {}
        for i, oid in enumerate(self._ids):
            if oid in self._index:
                raise DuplicateIdError(f"duplicate object id {oid!r}")
            self._index[oid] = i
        self._features = features
        self._features.setflags(write=False)
        self.labels: dict[str, str] = {}
        self.roles: dict[str, DatasetRole] = {}

    # -- basic access ----------------------------------------------------

    @property
    def count(self) -> int:
        return len(self._ids)

    @property
    def ids(self) -> list[str]:
        return list(self._ids)

    def __contains__(self, object_id: str) -> bool:
        return object_id in self._index

    def __len__(self) -> int:
        return len(self._ids)

    def index_of(self, object_id: str) -> int:
        return self._index[object_id]

    def vector(self, object_id: str) -> np.ndarray:
        """Feature vector for one object (float32 view)."""
        return self._features[self._index[object_id]]

    def matrix(self, object_ids: Iterable[str] | None = None) -> np.ndarray:
        """Feature rows for the given ids (all records when omitted)."""
        if object_ids is None:
            return self._features
        rows = [self._index[oid] for oid in object_ids]
        return self._features[rows]

    def record(self, object_id: str) -> ObjectRecord:
        return ObjectRecord(
            object_id=object_id,
            features=self.vector(object_id),
            prior_label=self.labels.get(object_id),
            dataset_role=self.roles.get(object_id, DatasetRole.UNLABELED),
        )


def euclidean_distance(a: np.ndarray, b: np.ndarray) -> float:
    """L2 distance between two feature vectors, accumulated in float64."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    d = a - b
    return math.sqrt(float(np.dot(d, d)))


def save_features(store: FeatureStore, path: str | Path) -> None:
    """Write a store to an MCFT file; reloading yields a bit-identical store."""
    path = Path(path)
    feats = store.matrix()
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, VERSION, store.count, store.dimensionality))
        for i, oid in enumerate(store.ids):
            raw = oid.encode("utf-8")
            if len(raw) > 0xFFFF:
                raise ValueError(f"object id too long: {len(raw)} bytes")
            f.write(_ID_LEN.pack(len(raw)))
            f.write(raw)
            f.write(feats[i].astype("<f4", copy=False).tobytes())


def load_features(path: str | Path) -> FeatureStore:
    """Read an MCFT file into a store.

    Raises FormatError on bad magic/version or truncation, DuplicateIdError
    on repeated ids, and ValueError on non-finite vector entries.
    """
    path = Path(path)
    data = path.read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: file shorter than header")
    magic, version, count, dim = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if dim == 0:
        raise FormatError(f"{path}: zero dimensionality")

    ids: list[str] = []
    rows = np.empty((count, dim), dtype=np.float32)
    offset = _HEADER.size
    vec_bytes = 4 * dim
    for i in range(count):
        if offset + _ID_LEN.size > len(data):
            raise FormatError(f"{path}: truncated at record {i} (id length)")
        (id_len,) = _ID_LEN.unpack_from(data, offset)
        offset += _ID_LEN.size
        if offset + id_len + vec_bytes > len(data):
            raise FormatError(f"{path}: truncated at record {i}")
        ids.append(data[offset : offset + id_len].decode("utf-8"))
        offset += id_len
        rows[i] = np.frombuffer(data, dtype="<f4", count=dim, offset=offset)
        offset += vec_bytes
    if offset != len(data):
        raise FormatError(f"{path}: {len(data) - offset} trailing bytes")

    if not np.all(np.isfinite(rows)):
        raise ValueError(f"{path}: non-finite feature values")
    return FeatureStore(dim, ids, rows)


def save_labels(
    path: str | Path,
    rows: Iterable[tuple[str, DatasetRole, str]],
) -> None:
    """Write the labels sidecar: CSV ``object_id,role,label``, UTF-8, LF."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["object_id", "role", "label"])
        for oid, role, label in rows:
            writer.writerow([oid, role.value, label])


def load_labels(path: str | Path) -> dict[str, tuple[DatasetRole, str]]:
    """Read a labels sidecar into ``{object_id: (role, label)}``."""
    out: dict[str, tuple[DatasetRole, str]] = {}
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != ["object_id", "role", "label"]:
            raise FormatError(f"{path}: unexpected sidecar header {header}")
        for row in reader:
            if not row:
                continue
            if len(row) != 3:
                raise FormatError(f"{path}: malformed sidecar row {row}")
            oid, role, label = row
            if oid in out:
                raise DuplicateIdError(f"duplicate object id {oid!r} in sidecar")
            out[oid] = (DatasetRole(role), label)
    return out


def attach_labels(store: FeatureStore, sidecar: dict[str, tuple[DatasetRole, str]]) -> None:
    """Attach sidecar roles/labels to a store (ids absent from the store are ignored)."""
    for oid, (role, label) in sidecar.items():
        if oid in store:
            store.roles[oid] = role
            if label:
                store.labels[oid] = label
