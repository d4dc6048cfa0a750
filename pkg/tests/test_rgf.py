import numpy as np
import pytest

from find_selinv.kernels import FlopLedger
from find_selinv.mesh import build_mesh
from find_selinv.operators import SparseOperator, assemble_sigma
from find_selinv.oracle import dense_gless_diag, dense_gr_diag
from find_selinv.rgf import block_partition, reassemble, rgf_gless_diag, rgf_gr_diag
from find_selinv.solver import SolverConfig, solve
from tests.conftest import stencil_operator, stencil_sigma


def test_block_partition_1xk_scalar_blocks():
    mesh, a = stencil_operator(1, 5, seed=0)
    bt = block_partition(a, mesh)
    assert bt.num_blocks == 5
    assert all(d.shape == (1, 1) for d in bt.diag)


def test_block_partition_4x4_shapes():
    mesh, a = stencil_operator(4, 4, seed=1)
    bt = block_partition(a, mesh)
    assert len(bt.diag) == 4 and all(d.shape == (4, 4) for d in bt.diag)
    assert len(bt.upper) == 3 and len(bt.lower) == 3


def test_block_partition_roundtrip():
    mesh, a = stencil_operator(5, 4, seed=2)
    bt = block_partition(a, mesh)
    assert np.abs(reassemble(bt) - a.to_dense()).max() == 0.0


def test_block_partition_rejects_wide_coupling():
    mesh = build_mesh(2, 3)
    op = SparseOperator.from_coo(6, [0, 0, 4], [0, 4, 0], [1.0, 1.0, 1.0])
    with pytest.raises(ValueError):
        block_partition(op, mesh)


def test_rgf_diagonal_operator():
    mesh = build_mesh(3, 3)
    ids = np.arange(9)
    a = SparseOperator.from_coo(9, ids, ids, 2.0 + np.arange(9.0))
    bt = block_partition(a, mesh)
    assert np.allclose(rgf_gr_diag(bt), 1.0 / (2.0 + np.arange(9.0)))


def test_rgf_matches_dense_oracle():
    for nx, ny in [(4, 4), (6, 5), (2, 9)]:
        mesh, a = stencil_operator(nx, ny, seed=nx * ny)
        bt = block_partition(a, mesh)
        gr = rgf_gr_diag(bt)
        ref = dense_gr_diag(a.to_dense())
        assert np.max(np.abs(gr - ref) / np.abs(ref)) < 1e-10


def test_rgf_matches_find_solver():
    mesh, a = stencil_operator(8, 8, seed=3)
    bt = block_partition(a, mesh)
    gr = rgf_gr_diag(bt)
    res = solve(mesh, a, None, SolverConfig(kernel="naive", compute_gless=False))
    assert np.max(np.abs(gr - res.gr_diag) / np.abs(gr)) < 1e-10


def test_rgf_gless_zero_sigma():
    mesh, a = stencil_operator(4, 3, seed=4)
    bt = block_partition(a, mesh)
    zero = SparseOperator.from_coo(12, np.arange(12), np.arange(12), np.zeros(12))
    assert np.abs(rgf_gless_diag(bt, block_partition(zero, mesh))).max() == 0.0


def test_rgf_gless_identity_operator():
    mesh = build_mesh(3, 4)
    ids = np.arange(12)
    a = SparseOperator.from_coo(12, ids, ids, np.ones(12))
    sig = assemble_sigma(mesh, "diagonal", np.arange(1.0, 13.0))
    gl = rgf_gless_diag(block_partition(a, mesh), block_partition(sig, mesh))
    assert np.allclose(gl, np.arange(1.0, 13.0))


def test_rgf_gless_matches_dense_oracle():
    for nx, ny, mode in [(4, 4, "diagonal"), (6, 5, "stencil"), (3, 7, "stencil")]:
        mesh, a = stencil_operator(nx, ny, seed=10 + nx + ny)
        sigma = stencil_sigma(mesh, seed=20 + nx, mode=mode)
        gl = rgf_gless_diag(block_partition(a, mesh), block_partition(sigma, mesh))
        ref = dense_gless_diag(a.to_dense(), sigma.to_dense())
        assert np.max(np.abs(gl - ref) / np.abs(ref)) < 1e-10


def test_rgf_ledger_scales_like_nx_cubed_ny():
    counts = {}
    for n in [4, 8, 16]:
        mesh, a = stencil_operator(n, n, seed=n)
        led = FlopLedger()
        rgf_gr_diag(block_partition(a, mesh), led)
        counts[n] = led.as_float()
    # doubling N multiplies the count by ~16
    assert 12 < counts[16] / counts[8] < 20
