"""Nested-dissection selected inversion: upward/downward passes and extraction.

The upward pass walks the basic cluster tree from the leaves, eliminating
each cluster's private inner nodes and storing the updated operator block
U (and scattering block R) over its boundary set.  The downward pass
mirrors it on the complement clusters: the data for the complement of a
cluster is formed by merging the parent's complement data with the
sibling's upward data.  Once the complement data of a leaf is known, the
inverse block over the leaf follows from one last elimination, and the
scattering sandwich gives the lesser-function block.

Per-cluster blocks are stored with ascending node-id labels; merge inputs
are permuted into [S_left, S_right, B_left, B_right] layout for the
structured kernels and permuted back on output.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import SingularPivotError
from .kernels import (
    BLOCK_KERNELS,
    EliminationInput,
    FlopLedger,
    block_kernel_update,
    cholesky_schur_update,
    flop_model,
    ldlt_schur_update,
    schur_update,
    sigma_update,
    sigma_update_optimized,
    symmetric_sparse_update,
)
from .mesh import (
    Cluster,
    ClusterTree,
    adjacent_nodes,
    annotate_boundaries,
    build_cluster_tree,
    complement_boundary_sets,
)
from .operators import DenseBlock, SparseOperator, check_pattern_subset, check_structural_symmetry, extract_block

KERNEL_NAMES = ("naive",) + BLOCK_KERNELS + ("cholesky", "ldlt", "symmetric_sparse")
_HERMITIAN_KERNELS = {"cholesky", "symmetric_sparse"}


@dataclass
class SolverConfig:
    kernel: str = "naive"
    use_symmetry: bool = False
    compute_gless: bool = True
    compute_offdiag: bool = False
    tiling: str = "full-leaves"
    leaf_max: int = 2
    pivot_rtol: float = 1e-12
    sigma_mode: str = "auto"  # "auto" | "general"
    debug_checks: bool = False

    def __post_init__(self):
        if self.kernel not in KERNEL_NAMES:
            raise ValueError(f"unknown kernel {self.kernel!r}; choose from {KERNEL_NAMES}")
        if self.tiling not in ("full-leaves", "half-leaves"):
            raise ValueError(f"unknown tiling {self.tiling!r}")
        if self.kernel in _HERMITIAN_KERNELS:
            self.use_symmetry = True


@dataclass
class ClusterData:
    """Updated operator and scattering blocks over one cluster's boundary."""

    u: DenseBlock
    r: DenseBlock | None = None


@dataclass
class SelectedInverse:
    gr_diag: np.ndarray
    gless_diag: np.ndarray | None
    offdiag: dict | None
    ledger: FlopLedger
    timings: dict = field(default_factory=dict)
    stats: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Merge machinery
# ---------------------------------------------------------------------------


def _merge_matrix(op: SparseOperator, left: np.ndarray, right: np.ndarray, u_left, u_right):
    """[[U_left, op(left,right)], [op(right,left), U_right]] over left+right."""
    p, q = left.size, right.size
    out = np.zeros((p + q, p + q), dtype=np.complex128)
    if p:
        out[:p, :p] = u_left
    if q:
        out[p:, p:] = u_right
    if p and q:
        out[:p, p:] = extract_block(op, left, right).values
        out[p:, :p] = extract_block(op, right, left).values
    return out


def _merge_permutation(left: np.ndarray, right: np.ndarray, s_set: np.ndarray, b_set: np.ndarray):
    """Indices rearranging a merged matrix into [S_l, S_r, B_l, B_r] order."""
    labels = np.concatenate([left, right])
    in_s_left = np.isin(left, s_set)
    in_s_right = np.isin(right, s_set)
    pos_left = np.arange(left.size)
    pos_right = left.size + np.arange(right.size)
    perm = np.concatenate(
        [
            pos_left[in_s_left],
            pos_right[in_s_right],
            pos_left[~in_s_left],
            pos_right[~in_s_right],
        ]
    )
    s_split = int(in_s_left.sum())
    b_split = int((~in_s_left).sum())
    new_labels = labels[perm]
    s_count = s_split + int(in_s_right.sum())
    if s_count != s_set.size or new_labels.size - s_count != b_set.size:
        raise RuntimeError("merge labels do not split into the given S and B sets")
    return perm, new_labels, s_count, s_split, b_split


def _run_a_kernel(inp: EliminationInput, config: SolverConfig, ledger, want_factor, downward):
    strict = config.debug_checks and not downward
    kernel = config.kernel
    if kernel == "ldlt":
        return ldlt_schur_update(inp, ledger, want_factor, pivot_rtol=config.pivot_rtol)
    if inp.s_split is None:
        if kernel in _HERMITIAN_KERNELS:
            return cholesky_schur_update(inp, ledger, want_factor, pivot_rtol=config.pivot_rtol)
        return schur_update(inp, ledger, pivot_rtol=config.pivot_rtol)
    if kernel == "naive":
        return schur_update(inp, ledger, pivot_rtol=config.pivot_rtol)
    if kernel == "cholesky":
        return cholesky_schur_update(inp, ledger, want_factor, pivot_rtol=config.pivot_rtol)
    if kernel == "symmetric_sparse":
        return symmetric_sparse_update(
            inp, ledger, want_factor, strict=strict, pivot_rtol=config.pivot_rtol
        )
    return block_kernel_update(
        inp, kernel, ledger, want_factor=want_factor, strict=strict, pivot_rtol=config.pivot_rtol
    )


def _run_sigma(inp: EliminationInput, smat, l_fac, config, ledger, sigma_hermitian, downward):
    s = inp.s
    sss, ssb = smat[:s, :s], smat[:s, s:]
    sbs, sbb = smat[s:, :s], smat[s:, s:]
    strict = config.debug_checks and not downward
    if config.sigma_mode != "general":
        if config.kernel in _HERMITIAN_KERNELS and sigma_hermitian:
            return sigma_update_optimized(
                sss, ssb, sbs, sbb, l_fac, inp.s_split, inp.b_split, {"symmetric"}, ledger
            )
        if config.kernel in BLOCK_KERNELS and inp.s_split is not None:
            return sigma_update_optimized(
                sss, ssb, sbs, sbb, l_fac, inp.s_split, inp.b_split, {"sparse"}, ledger,
                strict=strict,
            )
    return sigma_update(sss, ssb, sbs, sbb, l_fac, ledger)


class _Engine:
    """Shared state of one solve: operators, tree, config, ledger, stats."""

    def __init__(self, a, sigma, tree, complements, config, ledger):
        self.a = a
        self.sigma = sigma
        self.tree = tree
        self.complements = complements
        self.config = config
        self.ledger = ledger
        self.sigma_hermitian = sigma.is_hermitian() if sigma is not None else False
        self.stats = {"upward_exception_entries": 0, "downward_exception_entries": 0}

    def eliminate(
        self,
        left,
        right,
        u_left,
        u_right,
        r_left,
        r_right,
        s_set,
        b_set,
        split: bool,
        downward: bool,
        cluster_label: int,
    ):
        """One merge + elimination; returns (U, R, l_factor, b_labels)."""
        amat = _merge_matrix(self.a, left, right, u_left, u_right)
        perm, labels, s_count, s_split, b_split = _merge_permutation(left, right, s_set, b_set)
        amat = amat[np.ix_(perm, perm)]
        want_sigma = self.config.compute_gless
        inp = EliminationInput(
            ass=amat[:s_count, :s_count],
            asb=amat[:s_count, s_count:],
            abs_=amat[s_count:, :s_count],
            abb=amat[s_count:, s_count:],
            s_labels=labels[:s_count],
            b_labels=labels[s_count:],
            s_split=s_split if split else None,
            b_split=b_split if split else None,
        )
        if split:
            key = "downward_exception_entries" if downward else "upward_exception_entries"
            self.stats[key] += inp.structure_exception_count()
        try:
            res = _run_a_kernel(inp, self.config, self.ledger, want_sigma, downward)
        except SingularPivotError as exc:
            exc.cluster = cluster_label
            raise
        rmat_b = None
        if want_sigma:
            smat = _merge_matrix(self.sigma, left, right, r_left, r_right)
            smat = smat[np.ix_(perm, perm)]
            rmat_b = _run_sigma(
                inp, smat, res.l, self.config, self.ledger, self.sigma_hermitian, downward
            )
        return res.u, rmat_b, res.l, labels[s_count:]

    def store(self, u, rmat, b_labels, expected_b) -> ClusterData:
        order = np.argsort(b_labels, kind="stable")
        labels = b_labels[order]
        if self.config.debug_checks and not np.array_equal(labels, expected_b):
            raise AssertionError("boundary labels do not match the cluster's boundary set")
        ub = DenseBlock(labels, labels, u[np.ix_(order, order)])
        rb = None
        if rmat is not None:
            rb = DenseBlock(labels, labels, rmat[np.ix_(order, order)])
        return ClusterData(ub, rb)


# ---------------------------------------------------------------------------
# Passes
# ---------------------------------------------------------------------------


def _prepare(tree: ClusterTree, a: SparseOperator):
    if not tree.annotated:
        annotate_boundaries(tree, a.adjacency())


def upward_pass(
    tree: ClusterTree,
    a: SparseOperator,
    sigma: SparseOperator | None,
    config: SolverConfig,
    ledger: FlopLedger | None = None,
    engine: _Engine | None = None,
) -> dict[int, ClusterData]:
    """Eliminate private inner nodes leaves-to-root; data for every
    non-root basic cluster."""
    _prepare(tree, a)
    if engine is None:
        ledger = ledger if ledger is not None else FlopLedger()
        complements = complement_boundary_sets(tree, a.adjacency())
        engine = _Engine(a, sigma, tree, complements, config, ledger)
    data: dict[int, ClusterData] = {}
    empty = np.array([], dtype=np.int64)
    for c in tree.bottom_up():
        if c.parent is None:
            continue
        if c.is_leaf:
            # leaves seed from the original operator entries
            s_set, b_set = c.private_inner, c.boundary
            order = np.concatenate([s_set, b_set])
            seed = extract_block(a, order, order).values
            rseed = (
                extract_block(engine.sigma, order, order).values
                if config.compute_gless
                else None
            )
            u, rmat, _, b_labels = engine.eliminate(
                order, empty, seed, np.zeros((0, 0), np.complex128),
                rseed, np.zeros((0, 0), np.complex128),
                s_set, b_set, split=False, downward=False, cluster_label=c.label,
            )
            data[c.label] = engine.store(u, rmat, b_labels, c.boundary)
            continue
        i, j = c.children
        u, rmat, _, b_labels = engine.eliminate(
            i.boundary,
            j.boundary,
            data[i.label].u.values,
            data[j.label].u.values,
            data[i.label].r.values if config.compute_gless else None,
            data[j.label].r.values if config.compute_gless else None,
            c.private_inner,
            c.boundary,
            split=True,
            downward=False,
            cluster_label=c.label,
        )
        data[c.label] = engine.store(u, rmat, b_labels, c.boundary)
    return data


def downward_pass(
    tree: ClusterTree,
    a: SparseOperator,
    sigma: SparseOperator | None,
    cluster_data: dict[int, ClusterData],
    config: SolverConfig,
    ledger: FlopLedger | None = None,
    engine: _Engine | None = None,
    leaf_callback=None,
    keep_all: bool = True,
) -> dict[int, ClusterData]:
    """Complement-cluster elimination, root-to-leaves.

    ``leaf_callback(leaf, neg_data)`` fires as soon as a leaf's complement
    data is available; with ``keep_all`` False the negative data is freed
    once a subtree is done (the upward data stays).
    """
    _prepare(tree, a)
    if engine is None:
        ledger = ledger if ledger is not None else FlopLedger()
        complements = complement_boundary_sets(tree, a.adjacency())
        engine = _Engine(a, sigma, tree, complements, config, ledger)
    complements = engine.complements
    data: dict[int, ClusterData] = {}
    empty_block = DenseBlock(
        np.array([], dtype=np.int64), np.array([], dtype=np.int64), np.zeros((0, 0))
    )

    def process(c: Cluster):
        comp = complements[-c.label]
        if c.parent is None:
            data[-c.label] = ClusterData(
                empty_block, empty_block if config.compute_gless else None
            )
        else:
            parent_comp = data[-c.parent.label]
            sib = engine.tree.sibling(c)
            sib_data = cluster_data[sib.label]
            left = complements[-c.parent.label].boundary
            right = sib.boundary
            u, rmat, _, b_labels = engine.eliminate(
                left,
                right,
                parent_comp.u.values,
                sib_data.u.values,
                parent_comp.r.values if config.compute_gless else None,
                sib_data.r.values if config.compute_gless else None,
                comp.private_inner,
                comp.boundary,
                split=True,
                downward=True,
                cluster_label=-c.label,
            )
            data[-c.label] = engine.store(u, rmat, b_labels, comp.boundary)
        if c.is_leaf:
            if leaf_callback is not None:
                leaf_callback(c, data[-c.label])
        else:
            for child in c.children:
                process(child)
        if not keep_all and c.parent is not None:
            del data[-c.label]

    process(tree.root)
    return data


# ---------------------------------------------------------------------------
# Leaf extraction
# ---------------------------------------------------------------------------


def _invert(mat: np.ndarray, ledger: FlopLedger, label: int) -> np.ndarray:
    try:
        inv = np.linalg.inv(mat) if mat.size else mat.copy()
    except np.linalg.LinAlgError as exc:
        raise SingularPivotError(f"singular final block: {exc}", cluster=label) from exc
    ledger.add("dense_inverse", flop_model("dense_inverse", c=mat.shape[0]))
    return inv


def _final_elimination(a, sigma, leaf, ring, neg: ClusterData, ledger, want_sigma, pivot_rtol):
    """Eliminate the leaf's adjacent set against the leaf; the final U and R."""
    nodes = leaf.nodes
    inp = EliminationInput(
        ass=neg.u.values,
        asb=extract_block(a, ring, nodes).values,
        abs_=extract_block(a, nodes, ring).values,
        abb=extract_block(a, nodes, nodes).values,
        s_labels=ring,
        b_labels=nodes,
    )
    try:
        res = schur_update(inp, ledger, pivot_rtol=pivot_rtol)
    except SingularPivotError as exc:
        exc.cluster = leaf.label
        raise
    r_f = None
    if want_sigma:
        r_f = sigma_update(
            neg.r.values,
            extract_block(sigma, ring, nodes).values,
            extract_block(sigma, nodes, ring).values,
            extract_block(sigma, nodes, nodes).values,
            res.l,
            ledger,
        )
    return res.u, r_f


def leaf_extract_gr(
    leaf: Cluster,
    a: SparseOperator,
    neg: ClusterData,
    ring: np.ndarray,
    ledger: FlopLedger | None = None,
    pivot_rtol: float = 1e-12,
) -> DenseBlock:
    """Full inverse block over one leaf cluster from its complement data."""
    ledger = ledger if ledger is not None else FlopLedger()
    u_f, _ = _final_elimination(a, None, leaf, ring, neg, ledger, False, pivot_rtol)
    return DenseBlock(leaf.nodes, leaf.nodes, _invert(u_f, ledger, leaf.label))


def leaf_extract_gless(
    leaf: Cluster,
    a: SparseOperator,
    sigma: SparseOperator,
    neg: ClusterData,
    ring: np.ndarray,
    ledger: FlopLedger | None = None,
    pivot_rtol: float = 1e-12,
) -> DenseBlock:
    """Lesser-function block over one leaf: sandwich the final scattering
    block between the leaf inverse block and its conjugate."""
    ledger = ledger if ledger is not None else FlopLedger()
    u_f, r_f = _final_elimination(a, sigma, leaf, ring, neg, ledger, True, pivot_rtol)
    g = _invert(u_f, ledger, leaf.label)
    gless = (g @ r_f) @ g.conj().T
    ledger.add("gless_sandwich", flop_model("gless_sandwich", c=g.shape[0]))
    return DenseBlock(leaf.nodes, leaf.nodes, gless)


def leaf_extract_offdiag(
    leaf: Cluster,
    a: SparseOperator,
    neg: ClusterData,
    ring: np.ndarray,
    g: np.ndarray,
    ledger: FlopLedger | None = None,
) -> dict:
    """Inverse entries between the leaf and its adjacent set via one
    back-substitution step each way; only stencil-adjacent pairs are kept.
    Pairs inside the leaf come for free from the leaf block."""
    ledger = ledger if ledger is not None else FlopLedger()
    nodes = leaf.nodes
    out = {}
    adjacency = a.adjacency()
    sub = adjacency[nodes][:, nodes].tocoo()
    for i, j in zip(sub.row, sub.col):
        out[(int(nodes[i]), int(nodes[j]))] = complex(g[i, j])
    if ring.size:
        a_bc = extract_block(a, ring, nodes).values
        a_cb = extract_block(a, nodes, ring).values
        u_ring = neg.u.values
        g_bc = -np.linalg.solve(u_ring, a_bc @ g)
        g_cb = -np.linalg.solve(u_ring.conj().T, (g @ a_cb).conj().T).conj().T
        ledger.add("offdiag_backsub", flop_model("offdiag_backsub", t=ring.size, c=nodes.size))
        cross = adjacency[ring][:, nodes].tocoo()
        for i, j in zip(cross.row, cross.col):
            u, v = int(ring[i]), int(nodes[j])
            out[(u, v)] = complex(g_bc[i, j])
            out[(v, u)] = complex(g_cb[j, i])
    return out


def _extended_extraction(engine: _Engine, leaf: Cluster, neg: ClusterData, want_sigma: bool):
    """Invert the trailing system over ring+leaf in one shot (half-leaves)."""
    ring = engine.complements[-leaf.label].boundary
    nodes = leaf.nodes
    labels = np.concatenate([ring, nodes])
    m = _merge_matrix(
        engine.a, ring, nodes, neg.u.values, extract_block(engine.a, nodes, nodes).values
    )
    g_t = _invert(m, engine.ledger, leaf.label)
    gless_t = None
    if want_sigma:
        smat = _merge_matrix(
            engine.sigma,
            ring,
            nodes,
            neg.r.values,
            extract_block(engine.sigma, nodes, nodes).values,
        )
        gless_t = (g_t @ smat) @ g_t.conj().T
        engine.ledger.add("gless_sandwich", flop_model("gless_sandwich", c=labels.size))
    return g_t, gless_t, labels


# ---------------------------------------------------------------------------
# Tiling
# ---------------------------------------------------------------------------


@dataclass
class TilingPlan:
    mode: str
    selected: list
    extended: bool


def select_tiling(tree: ClusterTree, mode: str = "full-leaves") -> TilingPlan:
    """Choose the leaves to extract and the extraction style.

    Half-leaves mode keeps every leaf on the mesh boundary and a
    checkerboard half of the interior ones; each selected leaf is
    extracted together with its adjacent ring so that all diagonal
    entries and every stencil edge of the mesh stay covered.  Non-uniform
    leaves fall back to full extraction with a warning.
    """
    leaves = list(tree.leaves)
    if mode == "full-leaves":
        return TilingPlan("full-leaves", leaves, extended=False)
    if mode != "half-leaves":
        raise ValueError(f"unknown tiling mode {mode!r}")
    w = {(c.width, c.height) for c in leaves}
    if len(w) != 1:
        warnings.warn("non-uniform leaves; falling back to full-leaves tiling")
        return TilingPlan("full-leaves", leaves, extended=False)
    (lw, lh) = w.pop()
    if max(lw, lh) > 2:
        # with fatter leaves an unselected interior leaf has nodes no
        # adjacent ring can reach, so the halved plan cannot stay exact
        warnings.warn("half-leaves tiling needs leaves of side <= 2; using full-leaves")
        return TilingPlan("full-leaves", leaves, extended=False)
    ntx = tree.mesh.nx // lw
    nty = tree.mesh.ny // lh
    selected = []
    for c in leaves:
        ti, tj = c.x0 // lw, c.y0 // lh
        on_edge = ti == 0 or tj == 0 or ti == ntx - 1 or tj == nty - 1
        if on_edge or (ti + tj) % 2 == 0:
            selected.append(c)
    return TilingPlan("half-leaves", selected, extended=True)


def tiling_edge_coverage(tree: ClusterTree, a: SparseOperator, plan: TilingPlan):
    """(covered, all) directed stencil pairs under an extraction plan."""
    adjacency = a.adjacency()
    coo = adjacency.tocoo()
    all_pairs = {(int(i), int(j)) for i, j in zip(coo.row, coo.col)}
    covered = set()
    for leaf in plan.selected:
        region = (
            np.concatenate([adjacent_nodes(adjacency, leaf.nodes), leaf.nodes])
            if plan.extended
            else leaf.nodes
        )
        sub = adjacency[region][:, region].tocoo()
        for i, j in zip(sub.row, sub.col):
            covered.add((int(region[i]), int(region[j])))
        if not plan.extended:
            ring = adjacent_nodes(adjacency, leaf.nodes)
            cross = adjacency[ring][:, leaf.nodes].tocoo()
            for i, j in zip(cross.row, cross.col):
                covered.add((int(ring[i]), int(leaf.nodes[j])))
                covered.add((int(leaf.nodes[j]), int(ring[i])))
    return covered, all_pairs


# ---------------------------------------------------------------------------
# Top-level solve
# ---------------------------------------------------------------------------


def solve(
    mesh, a: SparseOperator, sigma: SparseOperator | None, config: SolverConfig
) -> SelectedInverse:
    """Run the full selected inversion on one operator (and scattering)."""
    t0 = time.perf_counter()
    if a.n != mesh.n:
        raise ValueError(f"operator size {a.n} does not match mesh with {mesh.n} nodes")
    if not check_structural_symmetry(a):
        raise ValueError("operator pattern is not structurally symmetric")
    if config.compute_gless:
        if sigma is None:
            raise ValueError("compute_gless requires a scattering matrix")
        if sigma.n != a.n:
            raise ValueError("scattering matrix size mismatch")
        if not check_pattern_subset(sigma, a):
            raise ValueError("scattering pattern exceeds the operator pattern")
    if config.kernel == "ldlt":
        d = a.matrix - a.matrix.T
        scale = max(np.abs(a.matrix.data).max() if a.matrix.nnz else 1.0, 1.0)
        if d.nnz and np.abs(d.data).max() > 1e-10 * scale:
            raise ValueError("ldlt kernel requires a (complex-)symmetric operator")
    elif config.use_symmetry and not a.is_hermitian():
        raise ValueError("use_symmetry requires a Hermitian operator")

    tree = build_cluster_tree(mesh, config.leaf_max)
    annotate_boundaries(tree, a.adjacency())
    complements = complement_boundary_sets(tree, a.adjacency())
    ledger = FlopLedger()
    engine = _Engine(a, sigma, tree, complements, config, ledger)
    t1 = time.perf_counter()

    pos_data = upward_pass(tree, a, sigma, config, engine=engine)
    t2 = time.perf_counter()

    plan = select_tiling(tree, config.tiling)
    selected_labels = {c.label for c in plan.selected}
    n = mesh.n
    gr_diag = np.zeros(n, dtype=np.complex128)
    filled = np.zeros(n, dtype=bool)
    gless_diag = np.zeros(n, dtype=np.complex128) if config.compute_gless else None
    offdiag: dict = {} if (config.compute_offdiag or plan.extended) else None
    adjacency = a.adjacency()

    def harvest_diag(labels, g_diag_vals, gless_diag_vals):
        new = ~filled[labels]
        take = labels[new]
        gr_diag[take] = g_diag_vals[new]
        if gless_diag is not None:
            gless_diag[take] = gless_diag_vals[new]
        filled[take] = True

    def harvest_pairs(labels, g_full):
        sub = adjacency[labels][:, labels].tocoo()
        for i, j in zip(sub.row, sub.col):
            key = (int(labels[i]), int(labels[j]))
            if key not in offdiag:
                offdiag[key] = complex(g_full[i, j])

    def on_leaf(leaf, neg):
        if plan.extended:
            if leaf.label not in selected_labels:
                return
            g_t, gless_t, labels = _extended_extraction(engine, leaf, neg, config.compute_gless)
            harvest_diag(
                labels,
                np.diagonal(g_t).copy(),
                np.diagonal(gless_t).copy() if gless_t is not None else None,
            )
            harvest_pairs(labels, g_t)
            return
        ring = complements[-leaf.label].boundary
        u_f, r_f = _final_elimination(
            a, sigma, leaf, ring, neg, ledger, config.compute_gless, config.pivot_rtol
        )
        g = _invert(u_f, ledger, leaf.label)
        gless = None
        if config.compute_gless:
            gless = (g @ r_f) @ g.conj().T
            ledger.add("gless_sandwich", flop_model("gless_sandwich", c=g.shape[0]))
        harvest_diag(
            leaf.nodes,
            np.diagonal(g).copy(),
            np.diagonal(gless).copy() if gless is not None else None,
        )
        if config.compute_offdiag:
            pairs = leaf_extract_offdiag(leaf, a, neg, ring, g, ledger)
            for key, val in pairs.items():
                if key not in offdiag:
                    offdiag[key] = val

    downward_pass(
        tree, a, sigma, pos_data, config, engine=engine, leaf_callback=on_leaf, keep_all=False
    )
    t3 = time.perf_counter()

    if not filled.all():
        missing = np.nonzero(~filled)[0]
        raise RuntimeError(f"extraction did not cover nodes {missing[:8]}...")
    if offdiag is not None and not config.compute_offdiag:
        # extended extraction computes pairs as a by-product; drop them unless asked
        offdiag = None

    timings = {
        "tree": t1 - t0,
        "upward": t2 - t1,
        "downward_extract": t3 - t2,
        "total": t3 - t0,
    }
    return SelectedInverse(
        gr_diag=gr_diag,
        gless_diag=gless_diag,
        offdiag=offdiag,
        ledger=ledger,
        timings=timings,
        stats=dict(engine.stats),
    )


# ---------------------------------------------------------------------------
# CSV export
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return format(x, ".17g")


def diag_to_csv(result: SelectedInverse, mesh) -> str:
    lines = ["node,x,y,re_gr,im_gr,re_gless,im_gless"]
    for node in range(mesh.n):
        x, y = mesh.node_xy(node)
        g = result.gr_diag[node]
        row = f"{node},{x},{y},{_fmt(g.real)},{_fmt(g.imag)}"
        if result.gless_diag is not None:
            gl = result.gless_diag[node]
            row += f",{_fmt(gl.real)},{_fmt(gl.imag)}"
        else:
            row += ",,"
        lines.append(row)
    return "\n".join(lines) + "\n"


def offdiag_to_csv(result: SelectedInverse) -> str:
    lines = ["i,j,re,im"]
    if result.offdiag:
        for (i, j) in sorted(result.offdiag):
            v = result.offdiag[(i, j)]
            lines.append(f"{i},{j},{_fmt(v.real)},{_fmt(v.imag)}")
    return "\n".join(lines) + "\n"
