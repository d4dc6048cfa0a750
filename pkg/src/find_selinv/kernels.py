"""Dense block-elimination kernels and the multiplication-count cost model.

Every elimination step in the solver reduces to one Schur-complement
update,

    U = A(B,B) - A(B,S) A(S,S)^{-1} A(S,B),

optionally followed by the scattering-matrix update

    R = S(B,B) - L S(S,B) - S(B,S) L^H + L S(S,S) L^H,
    L = A(B,S) A(S,S)^{-1}.

The kernels here are algebraic rearrangements of that single update that
exploit the block sparsity of merge inputs (zero cross blocks, diagonal
coupling blocks) and/or Hermitian symmetry.  All variants produce the
same U up to roundoff; they differ in operation order and cost.

Cost accounting: the ledger counts *multiplications only*, using the
idealized per-operation counts of standard dense kernels (LU of an
n x n block: n^3/3, a triangular solve with k right-hand sides: k n^2/2,
a p x q by q x r product: pqr, and so on).  Counts are exact rational
numbers.  Structured kernels are costed by their closed-form polynomials
in m = s/2 and n = b/2; unequal splits are costed at the half sizes, and
entries that fall outside the nominal structure (the corner cases of the
downward pass) are folded in exactly but never counted.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .errors import NotPositiveDefiniteError, SingularPivotError, StructureMismatchError
from .operators import DenseBlock

DEFAULT_PIVOT_RTOL = 1e-12


# ---------------------------------------------------------------------------
# Flop ledger and closed-form cost model
# ---------------------------------------------------------------------------


@dataclass
class FlopLedger:
    """Counted multiplications, mergeable, with a per-kernel breakdown."""

    multiplications: Fraction = Fraction(0)
    by_kernel: dict = field(default_factory=dict)

    def add(self, kernel: str, count) -> None:
        count = Fraction(count)
        self.multiplications += count
        self.by_kernel[kernel] = self.by_kernel.get(kernel, Fraction(0)) + count

    def merge(self, other: "FlopLedger") -> None:
        self.multiplications += other.multiplications
        for k, v in other.by_kernel.items():
            self.by_kernel[k] = self.by_kernel.get(k, Fraction(0)) + v

    def __add__(self, other: "FlopLedger") -> "FlopLedger":
        out = FlopLedger(self.multiplications, dict(self.by_kernel))
        out.merge(other)
        return out

    def as_float(self) -> float:
        return float(self.multiplications)


def _mn_model(coeff3, coeff21, coeff12):
    def f(m, n):
        return coeff3 * m**3 + coeff21 * m**2 * n + coeff12 * m * n**2

    return f


def _sb_model(c3, c21, c12):
    def f(s, b):
        return c3 * s**3 + c21 * s**2 * b + c12 * s * b**2

    return f


_F = Fraction
_MODELS_SB = {
    "naive_dense": _sb_model(_F(1, 3), 1, 1),
    "sigma_naive": _sb_model(0, 1, 3),
    "cholesky": _sb_model(_F(1, 6), _F(1, 2), _F(1, 2)),
    "cholesky_with_factor": _sb_model(_F(1, 6), 1, _F(1, 2)),
    "ldlt": _sb_model(_F(1, 6), _F(1, 2), _F(1, 2)),
    "ldlt_with_factor": _sb_model(_F(1, 6), 1, _F(1, 2)),
    "sigma_sparse": _sb_model(0, _F(1, 2), 2),
    "sigma_sparse_alt": _sb_model(0, 1, _F(3, 2)),
    "sigma_symmetric": _sb_model(_F(1, 6), 1, _F(3, 2)),
}
_MODELS_MN = {
    "parallel_inverse": _mn_model(_F(8, 3), 4, 4),
    "sequential_inverse": _mn_model(_F(4, 3), 5, 4),
    "block_lu": _mn_model(_F(4, 3), 4, 5),
    "naive_lu": _mn_model(_F(8, 3), _F(13, 2), 4),
    "parallel_inverse_with_factor": _mn_model(_F(8, 3), 6, 4),
    "sequential_inverse_with_factor": _mn_model(_F(4, 3), 5, 4),
    "block_lu_with_factor": _mn_model(_F(4, 3), 5, 4),
    "naive_lu_with_factor": _mn_model(_F(8, 3), _F(15, 2), 4),
    "symmetric_sparse": _mn_model(_F(2, 3), 2, _F(5, 2)),
    "symmetric_sparse_with_factor": _mn_model(_F(2, 3), 6, _F(5, 2)),
}

BLOCK_KERNELS = ("parallel_inverse", "sequential_inverse", "block_lu", "naive_lu")


def flop_model(kernel: str, m=None, n=None, s=None, b=None, c=None, t=None) -> Fraction:
    """Closed-form multiplication count of one kernel invocation.

    Structured kernels take half-block sizes (m, n); dense kernels take
    the full set sizes (s, b); ``dense_inverse`` and ``gless_sandwich``
    take one block size c; ``offdiag_backsub`` takes (t, c).
    """
    if kernel in _MODELS_SB:
        if s is None or b is None:
            raise ValueError(f"kernel {kernel!r} needs sizes s and b")
        return Fraction(_MODELS_SB[kernel](Fraction(s), Fraction(b)))
    if kernel in _MODELS_MN:
        if m is None or n is None:
            if s is None or b is None:
                raise ValueError(f"kernel {kernel!r} needs sizes (m, n) or (s, b)")
            m, n = Fraction(s, 2), Fraction(b, 2)
        return Fraction(_MODELS_MN[kernel](Fraction(m), Fraction(n)))
    if kernel == "dense_inverse":
        if c is None:
            raise ValueError("dense_inverse needs size c")
        return Fraction(c) ** 3
    if kernel == "gless_sandwich":
        if c is None:
            raise ValueError("gless_sandwich needs size c")
        return 2 * Fraction(c) ** 3
    if kernel == "offdiag_backsub":
        if t is None or c is None:
            raise ValueError("offdiag_backsub needs sizes t and c")
        t, c = Fraction(t), Fraction(c)
        return 2 * (t**2 * c + t * c**2)
    raise ValueError(f"unknown kernel {kernel!r}")


# ---------------------------------------------------------------------------
# Elimination input
# ---------------------------------------------------------------------------


@dataclass
class EliminationInput:
    """The four dense blocks of one elimination step.

    ``s_split``/``b_split`` mark the left/right partition of the private
    inner and boundary sets (sizes m_l = s_split, n_l = b_split); they are
    None for unpartitioned steps (leaf seeds, final leaf extraction),
    where only the dense kernels apply.
    """

    ass: np.ndarray
    asb: np.ndarray
    abs_: np.ndarray
    abb: np.ndarray
    s_labels: np.ndarray = None
    b_labels: np.ndarray = None
    s_split: int | None = None
    b_split: int | None = None

    def __post_init__(self):
        s, b = self.ass.shape[0], self.abb.shape[0]
        if self.ass.shape != (s, s) or self.abb.shape != (b, b):
            raise ValueError("corner blocks must be square")
        if self.asb.shape != (s, b) or self.abs_.shape != (b, s):
            raise ValueError("off-diagonal blocks have inconsistent shapes")
        if self.s_labels is None:
            self.s_labels = np.arange(s, dtype=np.int64)
        if self.b_labels is None:
            self.b_labels = np.arange(b, dtype=np.int64)

    @property
    def s(self) -> int:
        return self.ass.shape[0]

    @property
    def b(self) -> int:
        return self.abb.shape[0]

    def structure_exception_count(self) -> int:
        """Entries outside the nominal merge structure (corner cases)."""
        if self.s_split is None or self.b_split is None:
            return 0
        ml, nl = self.s_split, self.b_split
        bblk = self.ass[:ml, ml:]
        cblk = self.ass[ml:, :ml]
        count = _offdiag_nnz(bblk) + _offdiag_nnz(cblk)
        count += np.count_nonzero(self.asb[:ml, nl:]) + np.count_nonzero(self.asb[ml:, :nl])
        count += np.count_nonzero(self.abs_[:nl, ml:]) + np.count_nonzero(self.abs_[nl:, :ml])
        return int(count)


@dataclass
class EliminationResult:
    """U (and optionally the explicit factor L) of one elimination step."""

    u: np.ndarray
    l: np.ndarray | None = None
    factor: object = None
    s_labels: np.ndarray = None
    b_labels: np.ndarray = None

    def u_block(self) -> DenseBlock:
        return DenseBlock(self.b_labels, self.b_labels, self.u)

    def l_block(self) -> DenseBlock:
        return DenseBlock(self.b_labels, self.s_labels, self.l)


# ---------------------------------------------------------------------------
# Numeric helpers
# ---------------------------------------------------------------------------


def _offdiag_nnz(block: np.ndarray) -> int:
    k = min(block.shape)
    total = np.count_nonzero(block)
    return int(total - np.count_nonzero(np.diagonal(block[:k, :k])))


def _pivot_scale(a: np.ndarray) -> float:
    return float(np.abs(a).max()) if a.size else 0.0


def _lu(a: np.ndarray, labels, rtol: float):
    """LU factor with a relative singular-pivot check."""
    if a.shape[0] == 0:
        return None
    scale = _pivot_scale(a)
    if scale == 0.0:
        raise SingularPivotError("zero pivot block", node=int(labels[0]))
    lu, piv = la.lu_factor(a, check_finite=False)
    diag = np.abs(np.diagonal(lu))
    bad = np.nonzero(diag < rtol * scale)[0]
    if bad.size:
        raise SingularPivotError(
            f"singular pivot at elimination position {bad[0]}",
            node=int(labels[min(int(bad[0]), len(labels) - 1)]),
        )
    return lu, piv


def _solve(lu, rhs: np.ndarray) -> np.ndarray:
    """A^{-1} @ rhs given the LU of A."""
    if lu is None or rhs.shape[1] == 0:
        return rhs.astype(np.complex128, copy=True)
    return la.lu_solve(lu, rhs, check_finite=False)


def _rsolve(lhs: np.ndarray, lu) -> np.ndarray:
    """lhs @ A^{-1} given the LU of A (transpose solve)."""
    if lu is None or lhs.shape[0] == 0:
        return lhs.astype(np.complex128, copy=True)
    return la.lu_solve(lu, lhs.T, trans=1, check_finite=False).T


def _csr(block: np.ndarray) -> sp.csr_matrix:
    return sp.csr_matrix(block)

def _sxd(spmat, dense: np.ndarray) -> np.ndarray:
    """sparse @ dense."""
    return np.asarray(spmat.dot(dense))


def _dxs(dense: np.ndarray, spmat) -> np.ndarray:
    """dense @ sparse."""
    return np.asarray(spmat.T.dot(dense.T)).T


def _hermitize_check(a: np.ndarray, name: str, rtol: float = 1e-10) -> None:
    if a.size == 0:
        return
    scale = max(_pivot_scale(a), 1.0)
    if np.abs(a - a.conj().T).max() > rtol * scale:
        raise ValueError(f"{name} is not Hermitian")


def _symmetric_check(a: np.ndarray, name: str, rtol: float = 1e-10) -> None:
    if a.size == 0:
        return
    scale = max(_pivot_scale(a), 1.0)
    if np.abs(a - a.T).max() > rtol * scale:
        raise ValueError(f"{name} is not symmetric")


def _cholesky(a: np.ndarray):
    if a.shape[0] == 0:
        return np.zeros((0, 0), dtype=np.complex128)
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(str(exc)) from exc


def _tri_solve(g: np.ndarray, rhs: np.ndarray, lower: bool, unit_diagonal=False) -> np.ndarray:
    if g.shape[0] == 0 or rhs.shape[1] == 0:
        return rhs.astype(np.complex128, copy=True)
    return la.solve_triangular(
        g, rhs, lower=lower, unit_diagonal=unit_diagonal, check_finite=False
    )


def _ldlt_nopivot(a: np.ndarray, labels, rtol: float):
    """Unpivoted L D L^T factorization (plain transpose, complex allowed)."""
    n = a.shape[0]
    lower = np.eye(n, dtype=np.complex128)
    d = np.zeros(n, dtype=np.complex128)
    scale = max(_pivot_scale(a), 0.0)
    for k in range(n):
        row = lower[k, :k]
        d[k] = a[k, k] - (row * d[:k]) @ row
        if abs(d[k]) < rtol * scale or scale == 0.0:
            raise SingularPivotError(
                f"zero diagonal pivot at elimination position {k}", node=int(labels[k])
            )
        if k + 1 < n:
            lower[k + 1 :, k] = (a[k + 1 :, k] - lower[k + 1 :, :k] @ (d[:k] * row)) / d[k]
    return lower, d


def _split_blocks(inp: EliminationInput):
    ml, nl = inp.s_split, inp.b_split
    a11 = inp.ass[:ml, :ml]
    b12 = inp.ass[:ml, ml:]
    c21 = inp.ass[ml:, :ml]
    d22 = inp.ass[ml:, ml:]
    w = inp.asb[:ml, :nl]
    x = inp.asb[:ml, nl:]
    y = inp.asb[ml:, :nl]
    z = inp.asb[ml:, nl:]
    p = inp.abs_[:nl, :ml]
    q = inp.abs_[:nl, ml:]
    r = inp.abs_[nl:, :ml]
    s = inp.abs_[nl:, ml:]
    return a11, b12, c21, d22, w, x, y, z, p, q, r, s


def _check_strict(inp: EliminationInput) -> None:
    bad = inp.structure_exception_count()
    if bad:
        raise StructureMismatchError(
            f"{bad} entries violate the merge sparsity structure"
        )


# ---------------------------------------------------------------------------
# Dense (naive) kernels
# ---------------------------------------------------------------------------


def schur_update(
    inp: EliminationInput, ledger: FlopLedger, pivot_rtol: float = DEFAULT_PIVOT_RTOL
) -> EliminationResult:
    """Plain dense Schur-complement update; also returns the explicit factor.

    The factor L = A(B,S) A(S,S)^{-1} falls out of the chosen operation
    order at no extra cost and is what the scattering update consumes.
    """
    s, b = inp.s, inp.b
    if s == 0:
        u = inp.abb.astype(np.complex128, copy=True)
        l_fac = np.zeros((b, 0), dtype=np.complex128)
        return EliminationResult(u, l_fac, s_labels=inp.s_labels, b_labels=inp.b_labels)
    lu = _lu(inp.ass, inp.s_labels, pivot_rtol)
    l_fac = _rsolve(inp.abs_, lu)
    u = inp.abb - l_fac @ inp.asb
    ledger.add("naive_dense", flop_model("naive_dense", s=s, b=b))
    return EliminationResult(u, l_fac, factor=lu, s_labels=inp.s_labels, b_labels=inp.b_labels)


def sigma_update(sss, ssb, sbs, sbb, l_fac, ledger: FlopLedger) -> np.ndarray:
    """General scattering update R given the explicit factor L."""
    s = sss.shape[0]
    b = sbb.shape[0]
    if s == 0:
        return sbb.astype(np.complex128, copy=True)
    lh = l_fac.conj().T
    r = sbb - l_fac @ ssb - sbs @ lh + (l_fac @ sss) @ lh
    ledger.add("sigma_naive", flop_model("sigma_naive", s=s, b=b))
    return r


# ---------------------------------------------------------------------------
# Sparsity-structured kernels
# ---------------------------------------------------------------------------


def block_kernel_update(
    inp: EliminationInput,
    method: str,
    ledger: FlopLedger,
    want_factor: bool = False,
    strict: bool = False,
    pivot_rtol: float = DEFAULT_PIVOT_RTOL,
) -> EliminationResult:
    """Structured Schur update exploiting zero cross blocks.

    ``method`` selects the block-inverse rearrangement.  Entries outside
    the nominal structure are folded in through sparse corrections and do
    not enter the count; with ``strict`` they raise instead.  With
    ``want_factor`` the update is applied from the left so the explicit
    factor L comes out (slightly different cost for some methods).
    """
    if method not in BLOCK_KERNELS:
        raise ValueError(f"unknown block kernel {method!r}")
    if inp.s_split is None or inp.b_split is None:
        raise ValueError("block kernels need a left/right partition")
    if strict:
        _check_strict(inp)
    s, b = inp.s, inp.b
    if s == 0:
        u = inp.abb.astype(np.complex128, copy=True)
        return EliminationResult(
            u, np.zeros((b, 0), dtype=np.complex128), s_labels=inp.s_labels, b_labels=inp.b_labels
        )
    key = method + ("_with_factor" if want_factor else "")
    impl = {
        "parallel_inverse": _parallel_update,
        "sequential_inverse": _sequential_update,
        "block_lu": _block_lu_update,
        "naive_lu": _naive_lu_update,
    }[method]
    u, l_fac = impl(inp, want_factor, pivot_rtol)
    ledger.add(key, flop_model(key, s=s, b=b))
    return EliminationResult(u, l_fac, s_labels=inp.s_labels, b_labels=inp.b_labels)


def _apply_abs(inp: EliminationInput, m_blocks) -> np.ndarray:
    """A(B,S) @ M with the dense diagonal blocks and sparse cross blocks."""
    _, _, _, _, _, _, _, _, p, q, r, s = _split_blocks(inp)
    m_top, m_bot = m_blocks
    u_top = p @ m_top
    u_bot = s @ m_bot
    if np.count_nonzero(q):
        u_top = u_top + _sxd(_csr(q), m_bot)
    if np.count_nonzero(r):
        u_bot = u_bot + _sxd(_csr(r), m_top)
    return np.vstack([u_top, u_bot])


def _apply_asb(inp: EliminationInput, l_fac: np.ndarray) -> np.ndarray:
    """L @ A(S,B) with the dense diagonal blocks and sparse cross blocks."""
    ml, nl = inp.s_split, inp.b_split
    _, _, _, _, w, x, y, z, *_ = _split_blocks(inp)
    left = l_fac[:, :ml] @ w
    right = l_fac[:, ml:] @ z
    if np.count_nonzero(y):
        left = left + _dxs(l_fac[:, ml:], _csr(y))
    if np.count_nonzero(x):
        right = right + _dxs(l_fac[:, :ml], _csr(x))
    return np.hstack([left, right])


def _parallel_update(inp: EliminationInput, want_factor: bool, rtol: float):
    a11, b12, c21, d22, w, x, y, z, p, q, r, s_ = _split_blocks(inp)
    ml = inp.s_split
    sl, sr = inp.s_labels[:ml], inp.s_labels[ml:]
    lu_a = _lu(a11, sl, rtol)
    lu_d = _lu(d22, sr, rtol)
    dc = _solve(lu_d, c21)
    ab = _solve(lu_a, b12)
    a_t = a11 - _sxd(_csr(b12), dc) if b12.size else a11.copy()
    d_t = d22 - _sxd(_csr(c21), ab) if c21.size else d22.copy()
    lu_at = _lu(a_t, sl, rtol)
    lu_dt = _lu(d_t, sr, rtol)

    if not want_factor:
        t_aw = _solve(lu_at, w)
        t_dz = _solve(lu_dt, z)
        m11, m22 = t_aw, t_dz
        m21 = -(dc @ t_aw)
        m12 = -(ab @ t_dz)
        if np.count_nonzero(y):
            t_dy = _solve(lu_dt, y)
            m11 = m11 - ab @ t_dy
            m21 = m21 + t_dy
        if np.count_nonzero(x):
            t_ax = _solve(lu_at, x)
            m12 = m12 + t_ax
            m22 = m22 - dc @ t_ax
        u = inp.abb - _apply_abs(inp, (np.hstack([m11, m12]), np.hstack([m21, m22])))
        return u, None

    l11 = _rsolve(p - _sxd(_csr(q), dc) if np.count_nonzero(q) else p, lu_at)
    l12 = _rsolve((q if np.count_nonzero(q) else 0) - (p @ ab), lu_dt)
    l21 = _rsolve((r if np.count_nonzero(r) else 0) - (s_ @ dc), lu_at)
    l22 = _rsolve(s_ - (_sxd(_csr(r), ab) if np.count_nonzero(r) else 0), lu_dt)
    l_fac = np.block([[l11, l12], [l21, l22]])
    u = inp.abb - _apply_asb(inp, l_fac)
    return u, l_fac


def _sequential_update(inp: EliminationInput, want_factor: bool, rtol: float):
    a11, b12, c21, d22, w, x, y, z, p, q, r, s_ = _split_blocks(inp)
    ml = inp.s_split
    sl, sr = inp.s_labels[:ml], inp.s_labels[ml:]
    if ml == 0:
        ai = np.zeros((0, 0), dtype=np.complex128)
    else:
        scale = _pivot_scale(a11)
        if scale == 0.0:
            raise SingularPivotError("zero pivot block", node=int(sl[0]))
        ai = np.linalg.inv(a11)
    csr_b, csr_c = _csr(b12), _csr(c21)
    aib = _dxs(ai, csr_b)
    d_t = d22 - _sxd(csr_c, aib) if c21.size else d22.copy()
    lu_dt = _lu(d_t, sr, rtol)

    if not want_factor:
        t_dz = _solve(lu_dt, z)
        t_aw = ai @ w
        t_dcaw = _solve(lu_dt, _sxd(csr_c, t_aw)) if c21.size else np.zeros_like(y)
        m11 = t_aw + aib @ t_dcaw
        m21 = -t_dcaw
        m12 = -aib @ t_dz
        m22 = t_dz
        if np.count_nonzero(y):
            t_dy = _solve(lu_dt, y)
            m11 = m11 - aib @ t_dy
            m21 = m21 + t_dy
        if np.count_nonzero(x):
            aix = ai @ x
            t_dcax = _solve(lu_dt, _sxd(csr_c, aix))
            m12 = m12 + aix + aib @ t_dcax
            m22 = m22 - t_dcax
        u = inp.abb - _apply_abs(inp, (np.hstack([m11, m12]), np.hstack([m21, m22])))
        return u, None

    pai = p @ ai
    rai = _sxd(_csr(r), ai) if np.count_nonzero(r) else np.zeros((r.shape[0], ml))
    cai = _sxd(csr_c, ai) if c21.size else np.zeros((d22.shape[0], ml))
    l12 = _rsolve((q if np.count_nonzero(q) else 0) - _dxs(pai, csr_b), lu_dt)
    l11 = pai - l12 @ cai
    l22 = _rsolve(s_ - _dxs(rai, csr_b), lu_dt)
    l21 = rai - l22 @ cai
    l_fac = np.block([[l11, l12], [l21, l22]])
    u = inp.abb - _apply_asb(inp, l_fac)
    return u, l_fac


def _block_lu_update(inp: EliminationInput, want_factor: bool, rtol: float):
    a11, b12, c21, d22, w, x, y, z, p, q, r, s_ = _split_blocks(inp)
    ml = inp.s_split
    sl, sr = inp.s_labels[:ml], inp.s_labels[ml:]
    lu_a = _lu(a11, sl, rtol)
    aib = _solve(lu_a, b12)
    csr_c = _csr(c21)
    d_t = d22 - _sxd(csr_c, aib) if c21.size else d22.copy()
    lu_dt = _lu(d_t, sr, rtol)

    f11 = _rsolve(p, lu_a)
    f12 = _rsolve((q if np.count_nonzero(q) else 0) - _dxs(f11, _csr(b12)), lu_dt)
    f21 = _rsolve(r, lu_a) if np.count_nonzero(r) else np.zeros((r.shape[0], ml))
    f22 = _rsolve(s_ - _dxs(f21, _csr(b12)), lu_dt)

    if want_factor:
        l11 = f11 - _rsolve(_dxs(f12, csr_c), lu_a)
        l21 = f21 - _rsolve(_dxs(f22, csr_c), lu_a)
        l_fac = np.block([[l11, f12], [l21, f22]])
        u = inp.abb - _apply_asb(inp, l_fac)
        return u, l_fac

    aiw = _solve(lu_a, w)
    g21 = y - _sxd(csr_c, aiw) if c21.size else y.copy()
    g22 = z - _sxd(csr_c, _solve(lu_a, x)) if np.count_nonzero(x) else z
    u_tl = f11 @ w + f12 @ g21
    u_tr = f12 @ g22
    u_bl = f21 @ w + f22 @ g21
    u_br = f22 @ g22
    if np.count_nonzero(x):
        csr_x = _csr(x)
        u_tl = u_tl  # x only enters the right column blocks
        u_tr = u_tr + _dxs(f11, csr_x)
        u_br = u_br + _dxs(f21, csr_x)
    u = inp.abb - np.block([[u_tl, u_tr], [u_bl, u_br]])
    return u, None


def _naive_lu_update(inp: EliminationInput, want_factor: bool, rtol: float):
    lu_s = _lu(inp.ass, inp.s_labels, rtol)
    if want_factor:
        l_fac = _rsolve(inp.abs_, lu_s)
        u = inp.abb - _apply_asb(inp, l_fac)
        return u, l_fac
    m = _solve(lu_s, inp.asb)
    ml = inp.s_split
    u = inp.abb - _apply_abs(inp, (m[:ml], m[ml:]))
    return u, None


# ---------------------------------------------------------------------------
# Symmetric kernels
# ---------------------------------------------------------------------------


def cholesky_schur_update(
    inp: EliminationInput,
    ledger: FlopLedger,
    want_factor: bool = False,
    pivot_rtol: float = DEFAULT_PIVOT_RTOL,
) -> EliminationResult:
    """Schur update through a Cholesky factorization of A(S,S).

    Requires Hermitian positive-definite A(S,S) and A(B,S) = A(S,B)^H;
    halves the dense count.
    """
    s, b = inp.s, inp.b
    if s == 0:
        return EliminationResult(
            inp.abb.astype(np.complex128, copy=True),
            np.zeros((b, 0), dtype=np.complex128),
            s_labels=inp.s_labels,
            b_labels=inp.b_labels,
        )
    _hermitize_check(inp.ass, "A(S,S)")
    if np.abs(inp.abs_ - inp.asb.conj().T).max() > 1e-10 * max(_pivot_scale(inp.asb), 1.0):
        raise ValueError("A(B,S) is not the conjugate transpose of A(S,B)")
    g = _cholesky(inp.ass)
    t = _tri_solve(g, inp.asb, lower=True)
    u = inp.abb - t.conj().T @ t
    l_fac = None
    if want_factor:
        m = _tri_solve(g.conj().T, t, lower=False)
        l_fac = m.conj().T
        ledger.add("cholesky", flop_model("cholesky_with_factor", s=s, b=b))
    else:
        ledger.add("cholesky", flop_model("cholesky", s=s, b=b))
    return EliminationResult(u, l_fac, factor=g, s_labels=inp.s_labels, b_labels=inp.b_labels)


def ldlt_schur_update(
    inp: EliminationInput,
    ledger: FlopLedger,
    want_factor: bool = False,
    pivot_rtol: float = DEFAULT_PIVOT_RTOL,
) -> EliminationResult:
    """Schur update through an unpivoted L D L^T factorization of A(S,S).

    Works for symmetric indefinite blocks but may lose accuracy on small
    pivots; a vanishing diagonal pivot raises rather than being rescued
    by diagonal pivoting.
    """
    s, b = inp.s, inp.b
    if s == 0:
        return EliminationResult(
            inp.abb.astype(np.complex128, copy=True),
            np.zeros((b, 0), dtype=np.complex128),
            s_labels=inp.s_labels,
            b_labels=inp.b_labels,
        )
    _symmetric_check(inp.ass, "A(S,S)")
    if np.abs(inp.abs_ - inp.asb.T).max() > 1e-10 * max(_pivot_scale(inp.asb), 1.0):
        raise ValueError("A(B,S) is not the transpose of A(S,B)")
    lower, d = _ldlt_nopivot(inp.ass, inp.s_labels, pivot_rtol)
    t = _tri_solve(lower, inp.asb, lower=True, unit_diagonal=True)
    u = inp.abb - t.T @ (t / d[:, None])
    l_fac = None
    if want_factor:
        m = _tri_solve(lower.T, t / d[:, None], lower=False, unit_diagonal=True)
        l_fac = m.T
        ledger.add("ldlt", flop_model("ldlt_with_factor", s=s, b=b))
    else:
        ledger.add("ldlt", flop_model("ldlt", s=s, b=b))
    return EliminationResult(
        u, l_fac, factor=(lower, d), s_labels=inp.s_labels, b_labels=inp.b_labels
    )


def symmetric_sparse_update(
    inp: EliminationInput,
    ledger: FlopLedger,
    want_factor: bool = False,
    strict: bool = False,
    pivot_rtol: float = DEFAULT_PIVOT_RTOL,
) -> EliminationResult:
    """Block-Cholesky update combining symmetry with the merge sparsity.

    A(S,S) is factored blockwise so that G^{-1} A(S,B) keeps a zero
    upper-right block; with both optimizations the count drops to
    (2/3)m^3 + 2m^2n + (5/2)mn^2.
    """
    if inp.s_split is None or inp.b_split is None:
        raise ValueError("symmetric_sparse_update needs a left/right partition")
    if strict:
        _check_strict(inp)
    s, b = inp.s, inp.b
    if s == 0:
        return EliminationResult(
            inp.abb.astype(np.complex128, copy=True),
            np.zeros((b, 0), dtype=np.complex128),
            s_labels=inp.s_labels,
            b_labels=inp.b_labels,
        )
    _hermitize_check(inp.ass, "A(S,S)")
    if np.abs(inp.abs_ - inp.asb.conj().T).max() > 1e-10 * max(_pivot_scale(inp.asb), 1.0):
        raise ValueError("A(B,S) is not the conjugate transpose of A(S,B)")
    ml = inp.s_split
    a11 = inp.ass[:ml, :ml]
    a12 = inp.ass[:ml, ml:]
    a22 = inp.ass[ml:, ml:]
    g1 = _cholesky(a11)
    k = _tri_solve(g1, a12, lower=True)
    g2 = _cholesky(a22 - k.conj().T @ k)
    g_full = np.zeros((s, s), dtype=np.complex128)
    g_full[:ml, :ml] = g1
    g_full[ml:, :ml] = k.conj().T
    g_full[ml:, ml:] = g2
    t = _tri_solve(g_full, inp.asb, lower=True)
    u = inp.abb - t.conj().T @ t
    l_fac = None
    if want_factor:
        m = _tri_solve(g_full.conj().T, t, lower=False)
        l_fac = m.conj().T
        ledger.add("symmetric_sparse", flop_model("symmetric_sparse_with_factor", s=s, b=b))
    else:
        ledger.add("symmetric_sparse", flop_model("symmetric_sparse", s=s, b=b))
    return EliminationResult(
        u, l_fac, factor=g_full, s_labels=inp.s_labels, b_labels=inp.b_labels
    )


# ---------------------------------------------------------------------------
# Structured scattering updates
# ---------------------------------------------------------------------------


def sigma_update_optimized(
    sss,
    ssb,
    sbs,
    sbb,
    l_fac,
    s_split: int,
    b_split: int,
    flags,
    ledger: FlopLedger,
    strict: bool = False,
    ordering: str = "right",
) -> np.ndarray:
    """Scattering update exploiting block-diagonal couplings or symmetry.

    ``flags`` is {"sparse"} or {"symmetric"}; the two optimizations are
    not combined.  With the sparse flag, S(S,B)/S(B,S) are block diagonal
    and the cross blocks of S(S,S) are diagonal (off-structure entries
    are folded in sparsely, or rejected under ``strict``).  ``ordering``
    selects which side of the three-factor term is grouped first; the
    default "right" grouping costs (1/2)s^2 b + 2 s b^2.
    """
    flags = frozenset(flags)
    s = sss.shape[0]
    b = sbb.shape[0]
    if flags == frozenset({"sparse"}):
        if s_split is None or b_split is None:
            raise ValueError("sparse sigma update needs a left/right partition")
        if s == 0:
            return sbb.astype(np.complex128, copy=True)
        s1, n1 = s_split, b_split
        off_sb = np.count_nonzero(ssb[:s1, n1:]) + np.count_nonzero(ssb[s1:, :n1])
        off_bs = np.count_nonzero(sbs[:n1, s1:]) + np.count_nonzero(sbs[n1:, :s1])
        cross = _offdiag_nnz(sss[:s1, s1:]) + _offdiag_nnz(sss[s1:, :s1])
        if strict and (off_sb or off_bs or cross):
            raise ValueError("scattering blocks violate the sparse-flag structure")
        lh = l_fac.conj().T
        t2 = np.zeros((b, b), dtype=np.complex128)
        t2[:, :n1] = l_fac[:, :s1] @ ssb[:s1, :n1]
        t2[:, n1:] = l_fac[:, s1:] @ ssb[s1:, n1:]
        if off_sb:
            t2[:, n1:] += _dxs(l_fac[:, :s1], _csr(ssb[:s1, n1:]))
            t2[:, :n1] += _dxs(l_fac[:, s1:], _csr(ssb[s1:, :n1]))
        t3 = np.zeros((b, b), dtype=np.complex128)
        t3[:n1, :] = sbs[:n1, :s1] @ lh[:s1, :]
        t3[n1:, :] = sbs[n1:, s1:] @ lh[s1:, :]
        if off_bs:
            t3[:n1, :] += _sxd(_csr(sbs[:n1, s1:]), lh[s1:, :])
            t3[n1:, :] += _sxd(_csr(sbs[n1:, :s1]), lh[:s1, :])
        ls = np.zeros((b, s), dtype=np.complex128)
        ls[:, :s1] = l_fac[:, :s1] @ sss[:s1, :s1]
        ls[:, s1:] = l_fac[:, s1:] @ sss[s1:, s1:]
        if np.count_nonzero(sss[s1:, :s1]):
            ls[:, :s1] += _dxs(l_fac[:, s1:], _csr(sss[s1:, :s1]))
        if np.count_nonzero(sss[:s1, s1:]):
            ls[:, s1:] += _dxs(l_fac[:, :s1], _csr(sss[:s1, s1:]))
        r = sbb - t2 - t3 + ls @ lh
        key = "sigma_sparse" if ordering == "right" else "sigma_sparse_alt"
        ledger.add("sigma_sparse", flop_model(key, s=s, b=b))
        return r
    if flags == frozenset({"symmetric"}):
        if s == 0:
            return sbb.astype(np.complex128, copy=True)
        _hermitize_check(sss, "S(S,S)")
        if np.abs(sbs - ssb.conj().T).max() > 1e-10 * max(_pivot_scale(ssb), 1.0):
            raise ValueError("S(B,S) is not the conjugate transpose of S(S,B)")
        k = _cholesky(sss)
        lk = l_fac @ k
        t2 = l_fac @ ssb
        r = sbb - t2 - t2.conj().T + lk @ lk.conj().T
        ledger.add("sigma_symmetric", flop_model("sigma_symmetric", s=s, b=b))
        return r
    raise ValueError(
        "flags must be exactly {'sparse'} or {'symmetric'}; combining them is not supported"
    )
