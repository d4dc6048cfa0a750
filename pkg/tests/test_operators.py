import numpy as np
import pytest

from find_selinv.mesh import build_mesh
from find_selinv.operators import (
    DenseBlock,
    SparseOperator,
    assemble_A,
    assemble_sigma,
    check_pattern_subset,
    check_structural_symmetry,
    extract_block,
    read_matrix_market,
    write_matrix_market,
)
from tests.conftest import stencil_operator


def test_assemble_1x1():
    mesh = build_mesh(1, 1)
    a = assemble_A(mesh, onsite=0.0, hop_x=-1.0, hop_y=-1.0, energy=2.0)
    assert np.array_equal(a.to_dense(), [[2.0]])


def test_assemble_2x1_symmetric_by_construction():
    mesh = build_mesh(2, 1)
    a = assemble_A(mesh, onsite=0.0, hop_x=-1.0, hop_y=0.0, energy=0.0)
    assert np.array_equal(a.to_dense(), [[0, -1], [-1, 0]])


def test_assemble_4x4_pattern_counts():
    mesh = build_mesh(4, 4)
    a = assemble_A(mesh, onsite=0.0, hop_x=-1.0, hop_y=-1.0, energy=1.0, contact=0.5j)
    coo = a.matrix.tocoo()
    diag = int(np.sum(coo.row == coo.col))
    off = coo.nnz - diag
    assert diag == 16
    assert off == 48  # 2 * (3*4 + 4*3) stencil edges


def test_assemble_contact_columns_only():
    mesh = build_mesh(4, 3)
    a = assemble_A(mesh, onsite=0.0, hop_x=-1.0, hop_y=-1.0, energy=0.0, contact=1j)
    dense = a.to_dense()
    for node in range(mesh.n):
        x, _ = mesh.node_xy(node)
        expected = 1j if x in (0, 3) else 0.0
        assert dense[node, node] == expected
    with pytest.raises(ValueError):
        assemble_A(mesh, 0.0, -1.0, -1.0, 0.0, contact={5: 1j})  # x=1 column


def test_assemble_onsite_length_checked():
    mesh = build_mesh(3, 3)
    with pytest.raises(ValueError):
        assemble_A(mesh, onsite=np.zeros(4), hop_x=-1, hop_y=-1, energy=0.0)


def test_sigma_diagonal_identity_pattern():
    mesh = build_mesh(3, 3)
    s = assemble_sigma(mesh, "diagonal", np.ones(9))
    assert s.matrix.nnz == 9
    assert check_structural_symmetry(s)


def test_sigma_stencil_mirrors_a_pattern():
    mesh = build_mesh(4, 3)
    a = assemble_A(mesh, 0.0, -1.0, -1.0, 1.0)
    s = assemble_sigma(mesh, "stencil", np.ones(12), hop_x=0.5, hop_y=0.25)
    assert (s.pattern() != a.pattern()).nnz == 0
    assert check_pattern_subset(s, a)


def test_sigma_contact_style_fixture():
    # anti-Hermitian contact-only scattering is a valid diagonal input
    mesh = build_mesh(4, 4)
    gamma = np.zeros(16, complex)
    for node in range(16):
        if node % 4 in (0, 3):
            gamma[node] = 1j
    s = assemble_sigma(mesh, "diagonal", gamma)
    a = assemble_A(mesh, 0.0, -1.0, -1.0, 1.0)
    assert check_pattern_subset(s, a)


def test_structural_symmetry_detects_lone_entry():
    op = SparseOperator.from_coo(3, [0], [1], [1.0])
    assert not check_structural_symmetry(op)
    mesh, a = stencil_operator(5, 4, seed=3)
    assert check_structural_symmetry(a)


def test_extract_block_empty_rows():
    mesh, a = stencil_operator(3, 3, seed=0)
    blk = extract_block(a, np.array([], dtype=np.int64), np.array([1, 2]))
    assert blk.values.shape == (0, 2)


def test_extract_block_identity():
    op = SparseOperator.from_coo(6, range(6), range(6), np.ones(6))
    blk = extract_block(op, [3, 5], [3, 5])
    assert np.array_equal(blk.values, np.eye(2))


def test_extract_block_interface_diagonal():
    # private-inner cross couplings between the root's halves are diagonal
    from find_selinv.mesh import annotate_boundaries, build_cluster_tree

    mesh, a = stencil_operator(4, 4, seed=1)
    tree = build_cluster_tree(mesh, 2)
    annotate_boundaries(tree, a.adjacency())
    root = tree.root
    s_left = np.intersect1d(root.private_inner, root.children[0].boundary)
    s_right = np.intersect1d(root.private_inner, root.children[1].boundary)
    blk = extract_block(a, s_left, s_right).values
    off = blk - np.diag(np.diagonal(blk))
    assert np.count_nonzero(off) == 0


def test_extract_block_roundtrip_full():
    mesh, a = stencil_operator(4, 5, seed=9)
    blk = extract_block(a, np.arange(20), np.arange(20))
    assert np.array_equal(blk.values, a.to_dense())


def test_extract_block_label_range():
    mesh, a = stencil_operator(2, 2, seed=0)
    with pytest.raises(ValueError):
        extract_block(a, [0, 9], [0])


def test_dense_block_validation():
    with pytest.raises(ValueError):
        DenseBlock([0, 0], [1], np.zeros((2, 1)))
    with pytest.raises(ValueError):
        DenseBlock([0], [1], np.array([[np.nan]]))
    with pytest.raises(ValueError):
        DenseBlock([0, 1], [1], np.zeros((1, 1)))


def test_hermitian_and_spd_regimes():
    mesh, h = stencil_operator(4, 4, seed=5, kind="hermitian_pd")
    assert h.is_hermitian()
    assert np.linalg.eigvalsh(h.to_dense()).min() > 0
    mesh, g = stencil_operator(4, 4, seed=5, kind="general")
    assert not g.is_hermitian()


def test_matrix_market_roundtrip(tmp_path):
    mesh, a = stencil_operator(4, 3, seed=8)
    path = tmp_path / "a.mtx"
    write_matrix_market(path, a, mesh)
    lines = path.read_text().splitlines()
    assert lines[1] == "%%mesh 4 3"
    op, dims = read_matrix_market(path)
    assert dims == (4, 3)
    assert np.abs(op.to_dense() - a.to_dense()).max() == 0.0
    assert op.matrix.nnz == a.matrix.nnz


def test_matrix_market_without_mesh(tmp_path):
    mesh, a = stencil_operator(2, 2, seed=8)
    path = tmp_path / "b.mtx"
    write_matrix_market(path, a)
    op, dims = read_matrix_market(path)
    assert dims is None
    assert np.abs(op.to_dense() - a.to_dense()).max() == 0.0
