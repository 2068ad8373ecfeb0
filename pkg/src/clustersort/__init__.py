"""clustersort: density-seeded clustering and interactive mass annotation."""

from .clustering import (
    ClusteringParams,
    CondensedTreeNode,
    SeedSet,
    build_mst,
    cluster_unassigned,
    condense_tree,
    core_distance,
    extract_seeds,
    mutual_reachability,
)
from .errors import (
    BusyError,
    ClusterSortError,
    DuplicateIdError,
    FormatError,
    InsufficientPointsError,
    ProtocolError,
    StateError,
    StructureError,
    UndefinedError,
)
from .events import AnnotationEvent, EventLog
from .hierarchy import (
    Hierarchy,
    HierarchyNode,
    Labeling,
    build_upgma,
    export_labeling,
    merge_nodes,
    move_node,
    rename_node,
    tree_stats,
)
from .lifecycle import (
    BoundarySearch,
    Cluster,
    ClusterStatus,
    GrowMode,
    GrowSession,
    PageVerdict,
    Verdict,
    accept_candidate,
    commit_grow,
    dissimilar_display_order,
    growth_queue,
    make_cluster,
    next_probe,
    open_grow_session,
    record_page_verdict,
    remove_candidate,
    validate_cluster,
)
from .metrics import (
    correspondence_matrix,
    macro_precision,
    precision,
    predominant_label_agreement,
    relative_overlap,
    segment_sessions,
    throughput,
)
from .project import Project
from .store import (
    DatasetRole,
    FeatureStore,
    ObjectRecord,
    euclidean_distance,
    load_features,
    load_labels,
    save_features,
    save_labels,
)

__version__ = "0.1.0"
