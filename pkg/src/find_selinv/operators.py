"""Sparse mesh operators, dense sub-blocks, and Matrix Market I/O.

The operator A = (E - H) + contact terms lives on the 5-point stencil
pattern of a mesh: self-edges plus nearest-neighbor hops, with optional
contact self-energies on the diagonal of the first and last mesh
columns.  The scattering matrix shares the pattern of A or a subset of
it (typically the diagonal).  Structural symmetry -- entry (i,j) stored
iff (j,i) stored -- is required throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.io

from .mesh import Mesh


@dataclass
class DenseBlock:
    """A dense complex matrix whose rows and columns carry mesh-node labels."""

    row_labels: np.ndarray
    col_labels: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.row_labels = np.asarray(self.row_labels, dtype=np.int64)
        self.col_labels = np.asarray(self.col_labels, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.complex128)
        if self.values.shape != (self.row_labels.size, self.col_labels.size):
            raise ValueError(
                f"block shape {self.values.shape} does not match labels "
                f"({self.row_labels.size},{self.col_labels.size})"
            )
        for labels in (self.row_labels, self.col_labels):
            if labels.size != np.unique(labels).size:
                raise ValueError("block labels contain duplicates")
        if self.values.size and not np.all(np.isfinite(self.values.view(np.float64))):
            raise ValueError("block contains non-finite values")

    @property
    def shape(self):
        return self.values.shape


class SparseOperator:
    """Structurally sparse complex operator indexed by mesh-node ids.

    Stored as CSR with explicit zeros kept, so the structural pattern is
    independent of the values.
    """

    def __init__(self, matrix: sp.spmatrix):
        m = matrix.tocsr().astype(np.complex128, copy=False)
        if m.shape[0] != m.shape[1]:
            raise ValueError("operator must be square")
        m.sum_duplicates()
        self.matrix = m
        self._adjacency = None

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def from_coo(cls, n: int, rows, cols, vals) -> "SparseOperator":
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.complex128)
        if rows.size and (rows.min() < 0 or rows.max() >= n or cols.min() < 0 or cols.max() >= n):
            raise ValueError("entry index out of range")
        return cls(sp.coo_matrix((vals, (rows, cols)), shape=(n, n)))

    def pattern(self) -> sp.csr_matrix:
        """Boolean pattern of stored entries (including explicit zeros)."""
        p = self.matrix.copy()
        p.data = np.ones_like(p.data, dtype=np.complex128)
        return sp.csr_matrix((np.ones(p.nnz, dtype=np.int8), p.indices, p.indptr), shape=p.shape)

    def adjacency(self) -> sp.csr_matrix:
        """Off-diagonal stored pattern; this drives all boundary-set logic."""
        if self._adjacency is None:
            c = self.matrix.tocoo()
            off = c.row != c.col
            self._adjacency = sp.csr_matrix(
                (np.ones(int(off.sum()), dtype=np.int8), (c.row[off], c.col[off])),
                shape=c.shape,
            )
        return self._adjacency

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def is_hermitian(self, rtol: float = 1e-12) -> bool:
        d = self.matrix - self.matrix.getH()
        if d.nnz == 0:
            return True
        scale = np.abs(self.matrix.data).max() if self.matrix.nnz else 1.0
        return np.abs(d.data).max() <= rtol * max(scale, 1.0)


def assemble_A(
    mesh: Mesh,
    onsite,
    hop_x: complex,
    hop_y: complex,
    energy: float,
    contact=None,
) -> SparseOperator:
    """Assemble A on the 5-point stencil.

    ``A_ii = energy - onsite_i + contact_i`` with contact terms applied only
    on the first and last mesh columns; ``A_ij`` is ``hop_x``/``hop_y`` for
    horizontal/vertical stencil neighbors.  ``onsite`` is a scalar or a
    length-n array; ``contact`` is a scalar or a dict node->value whose keys
    must lie on the contact columns.
    """
    n = mesh.n
    onsite = np.asarray(onsite, dtype=np.complex128)
    if onsite.ndim == 0:
        onsite = np.full(n, complex(onsite))
    if onsite.shape != (n,):
        raise ValueError(f"onsite must have length {n}, got {onsite.shape}")

    diag = energy - onsite
    if contact is not None:
        contact_cols = {0, mesh.nx - 1}
        if isinstance(contact, dict):
            for node, val in contact.items():
                x, _ = mesh.node_xy(int(node))
                if x not in contact_cols:
                    raise ValueError(f"contact node {node} is not on a device-edge column")
                diag[int(node)] += val
        else:
            ids = np.arange(n)
            xs = ids % mesh.nx
            edge = np.isin(xs, sorted(contact_cols))
            diag[edge] += complex(contact)

    ids = np.arange(n, dtype=np.int64).reshape(mesh.ny, mesh.nx)
    hl, hr = ids[:, :-1].ravel(), ids[:, 1:].ravel()
    vl, vh = ids[:-1, :].ravel(), ids[1:, :].ravel()
    rows = np.concatenate([ids.ravel(), hl, hr, vl, vh])
    cols = np.concatenate([ids.ravel(), hr, hl, vh, vl])
    vals = np.concatenate(
        [
            diag,
            np.full(hl.size, hop_x, dtype=np.complex128),
            np.full(hl.size, hop_x, dtype=np.complex128),
            np.full(vl.size, hop_y, dtype=np.complex128),
            np.full(vl.size, hop_y, dtype=np.complex128),
        ]
    )
    return SparseOperator.from_coo(n, rows, cols, vals)


def assemble_sigma(
    mesh: Mesh,
    mode: str = "diagonal",
    diagonal=None,
    hop_x: complex = 0.0,
    hop_y: complex = 0.0,
) -> SparseOperator:
    """Assemble the scattering matrix on the diagonal or the full stencil.

    The resulting pattern is always a subset of the pattern of any
    operator assembled by :func:`assemble_A` on the same mesh.
    """
    n = mesh.n
    if diagonal is None:
        diagonal = 1.0
    diagonal = np.asarray(diagonal, dtype=np.complex128)
    if diagonal.ndim == 0:
        diagonal = np.full(n, complex(diagonal))
    if diagonal.shape != (n,):
        raise ValueError(f"diagonal must have length {n}, got {diagonal.shape}")

    if mode == "diagonal":
        ids = np.arange(n, dtype=np.int64)
        return SparseOperator.from_coo(n, ids, ids, diagonal)
    if mode == "stencil":
        return assemble_A(mesh, -diagonal, hop_x, hop_y, energy=0.0)
    raise ValueError(f"unknown sigma mode {mode!r}")


def check_structural_symmetry(op: SparseOperator) -> bool:
    """True iff entry (i,j) is stored exactly when (j,i) is stored."""
    p = op.pattern()
    return (p != p.T).nnz == 0


def check_pattern_subset(sigma: SparseOperator, a: SparseOperator) -> bool:
    """True iff sigma's stored pattern is contained in a's."""
    diff = sigma.pattern() - sigma.pattern().multiply(a.pattern())
    return diff.nnz == 0


def extract_block(op: SparseOperator, rows, cols) -> DenseBlock:
    """Dense sub-block of the operator over ordered node-label lists."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    for labels in (rows, cols):
        if labels.size and (labels.min() < 0 or labels.max() >= op.n):
            raise ValueError("block label out of range")
    values = np.zeros((rows.size, cols.size), dtype=np.complex128)
    if rows.size and cols.size:
        # O(nnz of the selected rows): scatter through a column lookup
        # instead of slicing csr columns.
        sub = op.matrix[rows].tocoo()
        lookup = np.full(op.n, -1, dtype=np.int64)
        lookup[cols] = np.arange(cols.size)
        local = lookup[sub.col]
        keep = local >= 0
        values[sub.row[keep], local[keep]] = sub.data[keep]
    return DenseBlock(rows, cols, values)


def write_matrix_market(path, op: SparseOperator, mesh: Mesh | None = None) -> None:
    """Write in coordinate complex general format.

    When a mesh is given, a ``%%mesh nx ny`` comment line records the grid
    so the file round-trips through :func:`read_matrix_market`.
    """
    comment = f"%mesh {mesh.nx} {mesh.ny}" if mesh is not None else ""
    scipy.io.mmwrite(path, op.matrix.tocoo(), comment=comment, field="complex", symmetry="general")


def read_matrix_market(path) -> tuple[SparseOperator, tuple[int, int] | None]:
    """Read an operator and, if present, the ``%%mesh nx ny`` header."""
    dims = None
    with open(path, "r") as fh:
        for line in fh:
            if not line.startswith("%"):
                break
            if line.startswith("%%mesh"):
                parts = line.split()
                if len(parts) >= 3:
                    dims = (int(parts[1]), int(parts[2]))
    m = scipy.io.mmread(path)
    return SparseOperator(sp.csr_matrix(m)), dims
