"""Cartesian mesh, nested-dissection cluster tree, and node-set machinery.

The mesh is an ``nx`` x ``ny`` grid with row-major node ids
(``id = x + nx*y``) and 5-point adjacency.  A binary cluster tree is built
by recursive bisection; every cluster carries four node sets:

- ``nodes``          the cluster itself (set C),
- ``boundary``       nodes of C with a stencil neighbor outside C (set B),
- ``inner``          C minus B (set I),
- ``private_inner``  the inner nodes eliminated when the cluster is formed
                     by merging its children (set S); for a leaf this is
                     all of its inner nodes.

Boundary sets are derived from the *actual* sparsity pattern of the
operator, not from geometry, so nodes on the physical edge of the mesh
(with missing neighbors) shrink B automatically.

Complement clusters mirror the basic ones for the downward elimination
pass: for a cluster C the complement is M \\ C, and its boundary is the
set of nodes adjacent to C from the outside.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ClusterConsistencyError, TreeStateError


@dataclass(frozen=True)
class Mesh:
    """A 2D Cartesian grid with row-major node numbering."""

    nx: int
    ny: int

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ValueError(f"mesh dimensions must be positive, got {self.nx}x{self.ny}")

    @property
    def n(self) -> int:
        return self.nx * self.ny

    def node_id(self, x: int, y: int) -> int:
        if not (0 <= x < self.nx and 0 <= y < self.ny):
            raise ValueError(f"coordinates ({x},{y}) outside {self.nx}x{self.ny} mesh")
        return x + self.nx * y

    def node_xy(self, node: int) -> tuple[int, int]:
        if not (0 <= node < self.n):
            raise ValueError(f"node id {node} out of range")
        return node % self.nx, node // self.nx

    def neighbors(self, node: int) -> np.ndarray:
        """Stencil neighbors of one node, ascending."""
        x, y = self.node_xy(node)
        out = []
        if y > 0:
            out.append(node - self.nx)
        if x > 0:
            out.append(node - 1)
        if x < self.nx - 1:
            out.append(node + 1)
        if y < self.ny - 1:
            out.append(node + self.nx)
        return np.array(out, dtype=np.int64)

    def adjacency(self) -> sp.csr_matrix:
        """Boolean off-diagonal 5-point adjacency pattern (n x n)."""
        ids = np.arange(self.n, dtype=np.int64).reshape(self.ny, self.nx)
        hl, hr = ids[:, :-1].ravel(), ids[:, 1:].ravel()
        vl, vh = ids[:-1, :].ravel(), ids[1:, :].ravel()
        rows = np.concatenate([hl, hr, vl, vh])
        cols = np.concatenate([hr, hl, vh, vl])
        pattern = sp.coo_matrix(
            (np.ones(rows.size, dtype=np.int8), (rows, cols)), shape=(self.n, self.n)
        )
        return pattern.tocsr()


def build_mesh(nx: int, ny: int) -> Mesh:
    return Mesh(nx, ny)


@dataclass(eq=False)
class Cluster:
    """A rectangular cluster of mesh nodes.

    ``label`` follows heap order: root is 1, the children of cluster g are
    2g and 2g+1 (lower-coordinate half first).  Node-set fields are filled
    by :func:`annotate_boundaries`; each is an ascending id array.
    """

    label: int
    x0: int
    y0: int
    width: int
    height: int
    level: int
    split_axis: str | None = None
    children: tuple = ()
    parent: "Cluster | None" = field(default=None, repr=False)
    nodes: np.ndarray = field(default=None, repr=False)
    boundary: np.ndarray | None = field(default=None, repr=False)
    inner: np.ndarray | None = field(default=None, repr=False)
    private_inner: np.ndarray | None = field(default=None, repr=False)

    @property
    def is_leaf(self) -> bool:
        return not self.children

    @property
    def size(self) -> int:
        return self.width * self.height


@dataclass
class ComplementCluster:
    """Downward-pass node sets for the complement M \\ C of a basic cluster.

    ``label`` is the negative of the basic cluster's label.  ``boundary``
    is the set of outside nodes adjacent to C; ``private_inner`` is the
    set eliminated when the complement data is formed by merging the
    parent complement with the sibling.
    """

    label: int
    boundary: np.ndarray
    private_inner: np.ndarray


class ClusterTree:
    """Binary nested-dissection tree over a mesh."""

    def __init__(self, mesh: Mesh, root: Cluster, leaf_max: int):
        self.mesh = mesh
        self.root = root
        self.leaf_max = leaf_max
        self.by_label: dict[int, Cluster] = {}
        self.leaves: list[Cluster] = []
        for c in self.clusters():
            self.by_label[c.label] = c
            if c.is_leaf:
                self.leaves.append(c)
        self.annotated = False

    def clusters(self):
        """Preorder traversal."""
        stack = [self.root]
        while stack:
            c = stack.pop()
            yield c
            stack.extend(reversed(c.children))

    def bottom_up(self):
        """Children before parents (by descending level, then label)."""
        return sorted(self.by_label.values(), key=lambda c: (-c.level, c.label))

    def sibling(self, cluster: Cluster) -> Cluster:
        if cluster.parent is None:
            raise TreeStateError("root has no sibling")
        a, b = cluster.parent.children
        return b if a is cluster else a


def _rect_nodes(mesh: Mesh, x0: int, y0: int, w: int, h: int) -> np.ndarray:
    ys = np.arange(y0, y0 + h, dtype=np.int64) * mesh.nx
    xs = np.arange(x0, x0 + w, dtype=np.int64)
    return (ys[:, None] + xs[None, :]).ravel()


def build_cluster_tree(mesh: Mesh, leaf_max: int) -> ClusterTree:
    """Build the basic cluster tree by recursive bisection.

    Each split bisects the cluster's longer side (ties split along x)
    into a ceil half (lower coordinates, left child) and a floor half.
    Recursion stops when both sides are <= ``leaf_max``.
    """
    if leaf_max < 1:
        raise ValueError(f"leaf_max must be >= 1, got {leaf_max}")

    def make(label, x0, y0, w, h, level):
        c = Cluster(label, x0, y0, w, h, level, nodes=_rect_nodes(mesh, x0, y0, w, h))
        if w <= leaf_max and h <= leaf_max:
            return c
        if w >= h:
            c.split_axis = "x"
            wl = (w + 1) // 2
            left = make(2 * label, x0, y0, wl, h, level + 1)
            right = make(2 * label + 1, x0 + wl, y0, w - wl, h, level + 1)
        else:
            c.split_axis = "y"
            hl = (h + 1) // 2
            left = make(2 * label, x0, y0, w, hl, level + 1)
            right = make(2 * label + 1, x0, y0 + hl, w, h - hl, level + 1)
        left.parent = c
        right.parent = c
        c.children = (left, right)
        return c

    root = make(1, 0, 0, mesh.nx, mesh.ny, 0)
    return ClusterTree(mesh, root, leaf_max)


def boundary_nodes(pattern: sp.spmatrix, cluster_nodes) -> np.ndarray:
    """Nodes of the cluster with at least one neighbor outside it.

    ``pattern`` is the operator's boolean off-diagonal adjacency.
    """
    n = pattern.shape[0]
    nodes = np.asarray(cluster_nodes, dtype=np.int64)
    if nodes.size and (nodes.min() < 0 or nodes.max() >= n):
        raise ValueError("cluster contains node ids outside the pattern's range")
    inside = np.zeros(n, dtype=np.float64)
    inside[nodes] = 1.0
    outside_hits = pattern @ (1.0 - inside)
    return nodes[outside_hits[nodes] > 0]


def adjacent_nodes(pattern: sp.spmatrix, cluster_nodes) -> np.ndarray:
    """Nodes outside the cluster adjacent to it: the complement's boundary."""
    n = pattern.shape[0]
    nodes = np.asarray(cluster_nodes, dtype=np.int64)
    inside = np.zeros(n, dtype=np.float64)
    inside[nodes] = 1.0
    hits = pattern @ inside
    mask = (hits > 0) & (inside == 0)
    return np.nonzero(mask)[0].astype(np.int64)


def private_inner_nodes(parent: Cluster, left: Cluster, right: Cluster) -> np.ndarray:
    """(B_left U B_right) minus B_parent; stored on the parent as S."""
    if parent.children != (left, right):
        raise ClusterConsistencyError(
            f"clusters {left.label},{right.label} are not the children of {parent.label}"
        )
    merged = np.sort(np.concatenate([left.nodes, right.nodes]))
    if merged.size != parent.nodes.size or not np.array_equal(merged, np.sort(parent.nodes)):
        raise ClusterConsistencyError(
            f"children of cluster {parent.label} do not partition it"
        )
    for c in (parent, left, right):
        if c.boundary is None:
            raise TreeStateError("boundary sets must be computed first")
    union = np.union1d(left.boundary, right.boundary)
    s = np.setdiff1d(union, parent.boundary, assume_unique=True)
    parent.private_inner = s
    return s


def annotate_boundaries(tree: ClusterTree, pattern: sp.spmatrix) -> None:
    """Fill boundary / inner / private-inner sets from an operator pattern."""
    for c in tree.bottom_up():
        c.boundary = boundary_nodes(pattern, c.nodes)
        c.inner = np.setdiff1d(c.nodes, c.boundary, assume_unique=True)
        if c.is_leaf:
            c.private_inner = c.inner
        else:
            private_inner_nodes(c, *c.children)
    tree.annotated = True


def complement_boundary_sets(
    tree: ClusterTree, pattern: sp.spmatrix
) -> dict[int, ComplementCluster]:
    """Boundary and private-inner sets for every complement (negative) cluster.

    The complement of cluster g is keyed by -g.  Its private-inner set is
    the part of B(complement of parent) U B(sibling) that is not on the
    complement's own boundary; for the root both sets are empty.
    """
    if not tree.annotated:
        raise TreeStateError("annotate_boundaries must run before complement sets")
    empty = np.array([], dtype=np.int64)
    out: dict[int, ComplementCluster] = {}
    for c in tree.clusters():
        if c.parent is None:
            out[-c.label] = ComplementCluster(-c.label, empty, empty)
            continue
        b = adjacent_nodes(pattern, c.nodes)
        parent_b = out[-c.parent.label].boundary
        sibling_b = tree.sibling(c).boundary
        merged = np.union1d(parent_b, sibling_b)
        s = np.setdiff1d(merged, b, assume_unique=True)
        out[-c.label] = ComplementCluster(-c.label, b, s)
    return out


def dump_tree(tree: ClusterTree) -> str:
    """Human-readable listing of the tree (label, level, set sizes)."""
    lines = []
    for c in sorted(tree.by_label.values(), key=lambda c: (c.level, c.label)):
        nb = len(c.boundary) if c.boundary is not None else -1
        ns = len(c.private_inner) if c.private_inner is not None else -1
        lines.append(
            f"cluster {c.label:>4d}  level {c.level}  "
            f"rect ({c.x0},{c.y0})+{c.width}x{c.height}  "
            f"|C|={c.size:<5d} |B|={nb:<4d} |S|={ns}"
        )
    return "\n".join(lines)


def tree_to_dot(tree: ClusterTree) -> str:
    """DOT digraph of the cluster tree for debugging."""
    rows = ["digraph clusters {"]
    for c in tree.by_label.values():
        nb = len(c.boundary) if c.boundary is not None else "?"
        rows.append(f'  c{c.label} [label="{c.label}\\n|C|={c.size} |B|={nb}"];')
        for ch in c.children:
            rows.append(f"  c{c.label} -> c{ch.label};")
    rows.append("}")
    return "\n".join(rows)
