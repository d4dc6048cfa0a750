"""Shared fixture builders: conditioned random operators on the stencil."""

import numpy as np
import pytest

from find_selinv.kernels import EliminationInput
from find_selinv.mesh import build_mesh
from find_selinv.operators import SparseOperator


def stencil_operator(nx, ny, seed, kind="general"):
    """Random operator on the 5-point pattern, diagonally dominant.

    kind: "general" (complex, structurally symmetric), "hermitian_pd",
    "real_spd", or "complex_symmetric".
    """
    mesh = build_mesh(nx, ny)
    rng = np.random.default_rng(seed)
    adj = mesh.adjacency().tocoo()
    mask = adj.row < adj.col
    rows, cols = adj.row[mask], adj.col[mask]
    m = rows.size
    degree = np.asarray(mesh.adjacency().sum(axis=1)).ravel()

    if kind == "general":
        hop = rng.standard_normal(m) + 1j * rng.standard_normal(m)
        back = rng.standard_normal(m) + 1j * rng.standard_normal(m)
        diag = degree * 1.6 + 1.0 + rng.random(mesh.n) + 1j * (1.0 + rng.random(mesh.n))
    elif kind == "hermitian_pd":
        hop = rng.standard_normal(m) + 1j * rng.standard_normal(m)
        back = hop.conj()
        diag = degree * (np.abs(hop).max() + 0.3) + 1.0 + rng.random(mesh.n)
    elif kind == "real_spd":
        hop = rng.standard_normal(m)
        back = hop
        diag = degree * (np.abs(hop).max() + 0.3) + 1.0 + rng.random(mesh.n)
    elif kind == "complex_symmetric":
        hop = rng.standard_normal(m) + 1j * rng.standard_normal(m)
        back = hop.copy()
        diag = degree * 1.6 + 1.0 + rng.random(mesh.n) + 1j * (1.0 + rng.random(mesh.n))
    else:
        raise ValueError(kind)

    ids = np.arange(mesh.n)
    op = SparseOperator.from_coo(
        mesh.n,
        np.concatenate([ids, rows, cols]),
        np.concatenate([ids, cols, rows]),
        np.concatenate([diag.astype(complex), hop, back]),
    )
    return mesh, op


def stencil_sigma(mesh, seed, mode="diagonal", hermitian=False):
    rng = np.random.default_rng(seed)
    ids = np.arange(mesh.n)
    if mode == "diagonal":
        if hermitian:
            vals = 1.0 + rng.random(mesh.n)
        else:
            vals = rng.standard_normal(mesh.n) + 1j * rng.standard_normal(mesh.n)
        return SparseOperator.from_coo(mesh.n, ids, ids, vals.astype(complex))
    adj = mesh.adjacency().tocoo()
    mask = adj.row < adj.col
    rows, cols = adj.row[mask], adj.col[mask]
    hop = rng.standard_normal(rows.size) + 1j * rng.standard_normal(rows.size)
    back = hop.conj() if hermitian else rng.standard_normal(rows.size) + 1j * rng.standard_normal(rows.size)
    if hermitian:
        degree = np.asarray(mesh.adjacency().sum(axis=1)).ravel()
        diag = degree * (np.abs(hop).max() + 0.3) + 1.0 + rng.random(mesh.n)
    else:
        diag = rng.standard_normal(mesh.n) + 1j * rng.standard_normal(mesh.n)
    return SparseOperator.from_coo(
        mesh.n,
        np.concatenate([ids, rows, cols]),
        np.concatenate([ids, cols, rows]),
        np.concatenate([diag.astype(complex), hop, back]),
    )


def structured_elimination_input(ml, mr, nl, nr, seed, kind="general"):
    """Merge-shaped input: diagonal cross blocks, zero off couplings."""
    rng = np.random.default_rng(seed)

    def rnd(p, q):
        return rng.standard_normal((p, q)) + 1j * rng.standard_normal((p, q))

    k = min(ml, mr)
    a = rnd(ml, ml) + 4 * max(ml, mr, 1) * np.eye(ml)
    d = rnd(mr, mr) + 4 * max(ml, mr, 1) * np.eye(mr)
    b = np.zeros((ml, mr), complex)
    c = np.zeros((mr, ml), complex)
    if k:
        b[:k, :k] = np.diag(rnd(k, 1).ravel())
        c[:k, :k] = np.diag(rnd(k, 1).ravel())
    w, z = rnd(ml, nl), rnd(mr, nr)
    p_, s_ = rnd(nl, ml), rnd(nr, mr)
    abb = rnd(nl + nr, nl + nr) + 4 * (nl + nr) * np.eye(nl + nr)

    if kind in ("hermitian_pd", "real_spd", "complex_symmetric"):
        if kind == "real_spd":
            a, d, b, w, z, abb = (x.real.astype(complex) for x in (a, d, b, w, z, abb))
        if kind == "complex_symmetric":
            a, d = (a + a.T) / 2, (d + d.T) / 2
            c = b.T.copy()
            p_, s_ = w.T.copy(), z.T.copy()
            abb = (abb + abb.T) / 2
        else:
            a, d = (a + a.conj().T) / 2, (d + d.conj().T) / 2
            c = b.conj().T.copy()
            p_, s_ = w.conj().T.copy(), z.conj().T.copy()
            abb = (abb + abb.conj().T) / 2
    ass = np.block([[a, b], [c, d]])
    asb = np.block([[w, np.zeros((ml, nr))], [np.zeros((mr, nl)), z]])
    abs_ = np.block([[p_, np.zeros((nl, mr))], [np.zeros((nr, ml)), s_]])
    if kind in ("hermitian_pd", "real_spd"):
        full = np.block([[ass, asb], [abs_, abb]])
        wmin = np.linalg.eigvalsh(full).min()
        if wmin < 1.0:
            shift = (1.0 - wmin) * np.eye(full.shape[0])
            ass = ass + shift[: ass.shape[0], : ass.shape[0]]
            abb = abb + shift[ass.shape[0] :, ass.shape[0] :]
    return EliminationInput(ass=ass, asb=asb, abs_=abs_, abb=abb, s_split=ml, b_split=nl)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
