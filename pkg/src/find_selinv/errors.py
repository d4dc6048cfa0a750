"""Exception types shared across the package."""


class SelInvError(Exception):
    """Base class for errors raised by this package."""


class SingularPivotError(SelInvError):
    """An elimination pivot fell below the singularity tolerance.

    Carries the mesh node of the offending pivot and, when known, the
    cluster label of the merge that was being processed.
    """

    def __init__(self, message, node=None, cluster=None):
        super().__init__(message)
        self.node = node
        self.cluster = cluster


class NotPositiveDefiniteError(SelInvError):
    """A Cholesky-based kernel hit a non-positive pivot."""


class ClusterConsistencyError(SelInvError):
    """Children node sets do not partition their parent cluster."""


class TreeStateError(SelInvError):
    """A tree operation was called before its prerequisites were computed."""


class StructureMismatchError(SelInvError):
    """Block input violates the sparsity structure required by a kernel."""
