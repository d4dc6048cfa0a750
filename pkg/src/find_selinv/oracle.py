"""Brute-force ground truth: dense inverses and a partial-elimination tracer.

The tracer materializes the full matrices of a set-by-set Gaussian
elimination, so every intermediate block the fast solver keeps (the
updated operator and scattering blocks over each boundary set) can be
compared against an independent dense computation.  Elimination is
pivot-free across sets by construction: sets are eliminated in the given
order, so fixtures must be conditioned well enough that every pivot
block is safely invertible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SingularPivotError
from .mesh import ClusterTree, ComplementCluster


def dense_gr_diag(a: np.ndarray) -> np.ndarray:
    """Diagonal of the dense inverse."""
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("operator must be a square matrix")
    try:
        inv = np.linalg.inv(a)
    except np.linalg.LinAlgError as exc:
        raise SingularPivotError(f"dense inversion failed: {exc}") from exc
    return np.ascontiguousarray(np.diagonal(inv))


def dense_gless_diag(a: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """Diagonal of A^{-1} S A^{-H}, computed by two dense solves."""
    a = np.asarray(a, dtype=np.complex128)
    sigma = np.asarray(sigma, dtype=np.complex128)
    if sigma.shape != a.shape:
        raise ValueError("scattering matrix must match the operator's shape")
    try:
        x = np.linalg.solve(a, sigma)
        # right-divide by A^H: G = X A^{-H} = (A^{-1} X^H)^H
        gless = np.linalg.solve(a, x.conj().T).conj().T
    except np.linalg.LinAlgError as exc:
        raise SingularPivotError(f"dense solve failed: {exc}") from exc
    return np.ascontiguousarray(np.diagonal(gless))


@dataclass(frozen=True)
class TraceStep:
    """One elimination stage: eliminate set S, then record the (B,B) block."""

    label: int
    s_nodes: np.ndarray
    b_nodes: np.ndarray


@dataclass
class TraceRecord:
    label: int
    s_nodes: np.ndarray
    b_nodes: np.ndarray
    u: np.ndarray
    r: np.ndarray | None
    a_before: np.ndarray
    a_after: np.ndarray
    sigma_before: np.ndarray | None
    sigma_after: np.ndarray | None


@dataclass
class EliminationTrace:
    a0: np.ndarray
    sigma0: np.ndarray | None
    records: list = field(default_factory=list)

    def by_label(self) -> dict:
        return {rec.label: rec for rec in self.records}


def partial_elimination_trace(a, sigma, steps) -> EliminationTrace:
    """Dense simulation of a consistent elimination ordering.

    Every step eliminates its private set S against all remaining nodes
    and snapshots the full matrices; the (B,B) blocks after the step are
    the dense counterparts of the solver's per-cluster data.
    """
    a = np.array(a, dtype=np.complex128)
    n = a.shape[0]
    sigma_cur = None if sigma is None else np.array(sigma, dtype=np.complex128)
    trace = EliminationTrace(a.copy(), None if sigma_cur is None else sigma_cur.copy())

    eliminated = np.zeros(n, dtype=bool)
    a_cur = a
    for step in steps:
        s = np.asarray(step.s_nodes, dtype=np.int64)
        b = np.asarray(step.b_nodes, dtype=np.int64)
        if s.size and eliminated[s].any():
            raise ValueError(f"step {step.label}: ordering is not a partition (set reuse)")
        if b.size and eliminated[b].any():
            raise ValueError(f"step {step.label}: boundary nodes already eliminated")
        a_before = a_cur.copy()
        sigma_before = None if sigma_cur is None else sigma_cur.copy()
        if s.size:
            remaining = np.nonzero(~eliminated)[0]
            rest = np.setdiff1d(remaining, s, assume_unique=True)
            ass = a_cur[np.ix_(s, s)]
            l_fac = np.linalg.solve(ass.T, a_cur[np.ix_(rest, s)].T).T
            a_new = a_cur.copy()
            a_new[np.ix_(rest, rest)] -= l_fac @ a_cur[np.ix_(s, rest)]
            a_new[np.ix_(rest, s)] = 0.0
            a_cur = a_new
            if sigma_cur is not None:
                t = sigma_cur.copy()
                t[rest, :] -= l_fac @ sigma_cur[s, :]
                sigma_new = t.copy()
                sigma_new[:, rest] -= t[:, s] @ l_fac.conj().T
                sigma_cur = sigma_new
            eliminated[s] = True
        trace.records.append(
            TraceRecord(
                label=step.label,
                s_nodes=s,
                b_nodes=b,
                u=a_cur[np.ix_(b, b)].copy(),
                r=None if sigma_cur is None else sigma_cur[np.ix_(b, b)].copy(),
                a_before=a_before,
                a_after=a_cur.copy(),
                sigma_before=sigma_before,
                sigma_after=None if sigma_cur is None else sigma_cur.copy(),
            )
        )
    return trace


def consistent_ordering(
    tree: ClusterTree,
    complements: dict[int, ComplementCluster],
    target_label: int,
    swap_same_level: bool = False,
) -> list[TraceStep]:
    """Elimination steps of the augmented tree for one target leaf.

    Basic clusters hanging off the root-to-target path come first, level
    by level from the deepest up; complement clusters along the path
    follow, ending with the complement of the target itself.  The
    remaining nodes after all steps are the target's adjacent set and the
    target cluster.  ``swap_same_level`` reverses the order of clusters
    within each level, producing a second valid ordering for
    share-equality checks.
    """
    target = tree.by_label[target_label]
    if not target.is_leaf:
        raise ValueError(f"target cluster {target_label} is not a leaf")

    path = []
    node = target
    while node is not None:
        path.append(node)
        node = node.parent

    # Augmented-tree depth: the complement of the target is the root
    # (depth 0), the complement of path[i] sits at depth i, and the
    # sibling subtree of path[i] hangs one level below it.  Eliminating
    # deepest level first yields a valid elimination order; any order of
    # clusters within one level is equally valid.
    entries = []  # (depth, tiebreak label, s_nodes, b_nodes)

    def add_basic(cluster, depth):
        entries.append((depth, cluster.label, cluster.private_inner, cluster.boundary))
        for child in cluster.children:
            add_basic(child, depth + 1)

    for i, cluster in enumerate(path[:-1]):  # every path node except the root
        comp = complements[-cluster.label]
        entries.append((i, -cluster.label, comp.private_inner, comp.boundary))
        add_basic(tree.sibling(cluster), i + 1)

    entries.sort(key=lambda e: (-e[0], -e[1] if swap_same_level else e[1]))
    return [TraceStep(label, s, b) for _, label, s, b in entries]
