"""Block-tridiagonal recursive Green's function baseline.

The mesh operator is blocked by x-lines (one block per mesh row y), which
makes A block tridiagonal with diagonal inter-line coupling blocks for
the 5-point stencil.  A forward recurrence of left-connected blocks plus
a backward recurrence give the inverse diagonal; the lesser-function
diagonal additionally carries left- and right-connected scattering blocks
and is validated against the dense oracle rather than any closed form.

Cost scales as O(Nx^3 Ny): a fixed number of Nx x Nx inversions and
products per line.  Diagonal coupling applications are not counted,
consistent with the multiplication-only convention of the cost model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingularPivotError
from .kernels import FlopLedger
from .mesh import Mesh
from .operators import SparseOperator, extract_block


@dataclass
class BlockTridiagonal:
    """Line blocks of the operator: D_i = A(line_i, line_i),
    E_i = A(line_i, line_{i+1}), F_i = A(line_{i+1}, line_i)."""

    diag: list
    upper: list
    lower: list
    lines: list

    @property
    def num_blocks(self) -> int:
        return len(self.diag)


def block_partition(op: SparseOperator, mesh: Mesh) -> BlockTridiagonal:
    """Tile the operator by mesh rows; entries beyond neighboring lines
    are rejected."""
    if op.n != mesh.n:
        raise ValueError("operator size does not match the mesh")
    coo = op.matrix.tocoo()
    line_of = coo.row // mesh.nx
    line_of_col = coo.col // mesh.nx
    if np.any(np.abs(line_of - line_of_col) > 1):
        raise ValueError("operator pattern is not block tridiagonal over mesh lines")
    lines = [
        np.arange(y * mesh.nx, (y + 1) * mesh.nx, dtype=np.int64) for y in range(mesh.ny)
    ]
    diag = [extract_block(op, ln, ln).values for ln in lines]
    upper = [
        extract_block(op, lines[i], lines[i + 1]).values for i in range(mesh.ny - 1)
    ]
    lower = [
        extract_block(op, lines[i + 1], lines[i]).values for i in range(mesh.ny - 1)
    ]
    return BlockTridiagonal(diag, upper, lower, lines)


def reassemble(bt: BlockTridiagonal) -> np.ndarray:
    """Dense matrix from the blocks (round-trip check helper)."""
    n = sum(ln.size for ln in bt.lines)
    out = np.zeros((n, n), dtype=np.complex128)
    for i, ln in enumerate(bt.lines):
        out[np.ix_(ln, ln)] = bt.diag[i]
        if i + 1 < len(bt.lines):
            out[np.ix_(ln, bt.lines[i + 1])] = bt.upper[i]
            out[np.ix_(bt.lines[i + 1], ln)] = bt.lower[i]
    return out


def _is_diag(block: np.ndarray) -> bool:
    return _offdiag_count(block) == 0


def _offdiag_count(block: np.ndarray) -> int:
    k = min(block.shape)
    return int(np.count_nonzero(block) - np.count_nonzero(np.diagonal(block[:k, :k])))


def _inv(block: np.ndarray, ledger: FlopLedger, where: str) -> np.ndarray:
    try:
        out = np.linalg.inv(block)
    except np.linalg.LinAlgError as exc:
        raise SingularPivotError(f"singular recurrence block at line {where}") from exc
    ledger.add("rgf", block.shape[0] ** 3)
    return out


def _sandwich(left: np.ndarray, mid: np.ndarray, right: np.ndarray, ledger: FlopLedger):
    """left @ mid @ right with free diagonal applications."""
    t = mid
    if _is_diag(left):
        t = np.diagonal(left)[:, None] * t
    else:
        ledger.add("rgf", left.shape[0] ** 2 * t.shape[1])
        t = left @ t
    if _is_diag(right):
        t = t * np.diagonal(right)[None, :]
    else:
        ledger.add("rgf", t.shape[0] * right.shape[0] * right.shape[1])
        t = t @ right
    return t


def _forward_blocks(bt: BlockTridiagonal, ledger: FlopLedger):
    """Left-connected inverse blocks g_i."""
    g = [None] * bt.num_blocks
    g[0] = _inv(bt.diag[0], ledger, "0")
    for i in range(1, bt.num_blocks):
        coupled = bt.diag[i] - _sandwich(bt.lower[i - 1], g[i - 1], bt.upper[i - 1], ledger)
        g[i] = _inv(coupled, ledger, str(i))
    return g


def rgf_gr_diag(bt: BlockTridiagonal, ledger: FlopLedger | None = None) -> np.ndarray:
    """Inverse diagonal by the forward/backward block recurrences."""
    ledger = ledger if ledger is not None else FlopLedger()
    nb = bt.num_blocks
    g = _forward_blocks(bt, ledger)
    n = sum(ln.size for ln in bt.lines)
    out = np.zeros(n, dtype=np.complex128)
    g_full = g[nb - 1]
    out[bt.lines[nb - 1]] = np.diagonal(g_full)
    for i in range(nb - 2, -1, -1):
        t = _sandwich(bt.upper[i], g_full, bt.lower[i], ledger)
        gt = g[i] @ t
        ledger.add("rgf", 2 * g[i].shape[0] ** 3)
        g_full = g[i] + gt @ g[i]
        out[bt.lines[i]] = np.diagonal(g_full)
    return out


def _connected_sigma(bt, sigma_bt, g_conn, ledger, reverse: bool):
    """Scattering blocks with everything on one side eliminated.

    Walking forward (reverse=False) the factor at line i is
    F_{i-1} g_{i-1}; walking backward it is E_i g_{i+1}.
    """
    nb = bt.num_blocks
    order = range(nb - 1, -1, -1) if reverse else range(nb)
    s_conn = [None] * nb
    prev = None
    for i in order:
        if prev is None:
            s_conn[i] = sigma_bt.diag[i].copy()
        else:
            if reverse:
                coup_a = bt.upper[i]  # A(line_i, line_{i+1})
                sig_sb = sigma_bt.lower[i]  # S(line_{i+1}, line_i)
                sig_bs = sigma_bt.upper[i]
            else:
                coup_a = bt.lower[i - 1]  # A(line_i, line_{i-1})
                sig_sb = sigma_bt.upper[i - 1]  # S(line_{i-1}, line_i)
                sig_bs = sigma_bt.lower[i - 1]
            if _is_diag(coup_a):
                l_fac = np.diagonal(coup_a)[:, None] * g_conn[prev]
            else:
                l_fac = coup_a @ g_conn[prev]
                ledger.add("rgf", coup_a.shape[0] ** 2 * g_conn[prev].shape[1])
            lh = l_fac.conj().T
            term = sigma_bt.diag[i] + (l_fac @ s_conn[prev]) @ lh
            ledger.add("rgf", 2 * l_fac.shape[0] ** 3)
            if np.count_nonzero(sig_sb):
                term = term - l_fac @ sig_sb
            if np.count_nonzero(sig_bs):
                term = term - sig_bs @ lh
            s_conn[i] = term
        prev = i
    return s_conn


def rgf_gless_diag(
    bt: BlockTridiagonal, sigma_bt: BlockTridiagonal, ledger: FlopLedger | None = None
) -> np.ndarray:
    """Lesser-function diagonal from two scattering sweeps plus the
    fully-connected diagonal blocks."""
    ledger = ledger if ledger is not None else FlopLedger()
    nb = bt.num_blocks
    g_left = _forward_blocks(bt, ledger)
    # right-connected inverse blocks
    g_right = [None] * nb
    g_right[nb - 1] = _inv(bt.diag[nb - 1], ledger, str(nb - 1))
    for i in range(nb - 2, -1, -1):
        coupled = bt.diag[i] - _sandwich(bt.upper[i], g_right[i + 1], bt.lower[i], ledger)
        g_right[i] = _inv(coupled, ledger, str(i))

    s_left = _connected_sigma(bt, sigma_bt, g_left, ledger, reverse=False)
    s_right = _connected_sigma(bt, sigma_bt, g_right, ledger, reverse=True)

    n = sum(ln.size for ln in bt.lines)
    out = np.zeros(n, dtype=np.complex128)
    for i in range(nb):
        u_i = bt.diag[i].copy()
        if i > 0:
            u_i -= _sandwich(bt.lower[i - 1], g_left[i - 1], bt.upper[i - 1], ledger)
        if i + 1 < nb:
            u_i -= _sandwich(bt.upper[i], g_right[i + 1], bt.lower[i], ledger)
        r_i = s_left[i] + s_right[i] - sigma_bt.diag[i]
        g_ii = _inv(u_i, ledger, str(i))
        out[bt.lines[i]] = np.diagonal((g_ii @ r_i) @ g_ii.conj().T)
        ledger.add("rgf", 2 * g_ii.shape[0] ** 3)
    return out
