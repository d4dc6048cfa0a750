"""Selected inversion of sparse structurally-symmetric operators on 2D meshes.

Core surface:

- :mod:`find_selinv.mesh`       mesh, cluster tree, node sets
- :mod:`find_selinv.operators`  sparse operators, dense blocks, Matrix Market I/O
- :mod:`find_selinv.kernels`    elimination kernels and the flop-cost model
- :mod:`find_selinv.solver`     upward/downward passes and extraction
- :mod:`find_selinv.rgf`        block-tridiagonal baseline
- :mod:`find_selinv.oracle`     dense ground truth and elimination tracer
- :mod:`find_selinv.bench`      benchmark harness, fits, reports
- :mod:`find_selinv.api`        FastAPI service; :mod:`find_selinv.cli` client
"""

from .errors import (
    ClusterConsistencyError,
    NotPositiveDefiniteError,
    SelInvError,
    SingularPivotError,
    StructureMismatchError,
    TreeStateError,
)
from .kernels import FlopLedger, flop_model
from .mesh import Mesh, build_cluster_tree, build_mesh
from .operators import SparseOperator, assemble_A, assemble_sigma
from .solver import SelectedInverse, SolverConfig, solve

__version__ = "0.1.0"

__all__ = [
    "ClusterConsistencyError",
    "FlopLedger",
    "Mesh",
    "NotPositiveDefiniteError",
    "SelInvError",
    "SelectedInverse",
    "SingularPivotError",
    "SolverConfig",
    "SparseOperator",
    "StructureMismatchError",
    "TreeStateError",
    "assemble_A",
    "assemble_sigma",
    "build_cluster_tree",
    "build_mesh",
    "flop_model",
    "solve",
    "__version__",
]
