"""Exception hierarchy shared by all clustersort modules."""


class ClusterSortError(Exception):
    """Base class for all clustersort errors."""


class FormatError(ClusterSortError):
    """Feature file is malformed: bad magic, bad version, or truncated payload."""


class DuplicateIdError(ClusterSortError):
    """Two records share the same object id."""


class InsufficientPointsError(ClusterSortError):
    """Not enough points for the requested neighborhood or cluster size."""


class StateError(ClusterSortError):
    """Operation applied to an object in the wrong lifecycle state."""


class ProtocolError(ClusterSortError):
    """Out-of-order or duplicate interaction with a grow session."""


class StructureError(ClusterSortError):
    """Tree edit would break the tree structure (cycle, ancestor merge)."""


class UndefinedError(ClusterSortError):
    """Metric is undefined for the given input (empty denominator)."""


class BusyError(ClusterSortError):
    """A clustering job is already running for this project."""
