import logging

import numpy as np
import pytest
import scipy.sparse as sp

import twogridmfe as tg
from twogridmfe import sparse
from twogridmfe.sparse import AssemblyPattern, residual_scale


@pytest.fixture
def spd_matrix(rng):
    b = rng.normal(size=(50, 50))
    return sp.csr_matrix(b.T @ b + np.eye(50))


def test_triplets_sum_duplicates_and_drop_zeros():
    matrix = tg.from_triplets([0, 0, 1, 1, 1], [0, 0, 1, 0, 0], [1.0, 2.0, 5.0, 1.0, -1.0], (2, 2))
    np.testing.assert_array_equal(matrix.toarray(), [[3.0, 0.0], [0.0, 5.0]])
    assert matrix.nnz == 2


def test_triplets_are_order_independent(rng):
    rows = rng.integers(0, 20, size=400)
    cols = rng.integers(0, 20, size=400)
    values = rng.normal(size=400)
    reference = tg.from_triplets(rows, cols, values, (20, 20))
    perm = rng.permutation(400)
    shuffled = tg.from_triplets(rows[perm], cols[perm], values[perm], (20, 20))

    np.testing.assert_array_equal(shuffled.indptr, reference.indptr)
    np.testing.assert_array_equal(shuffled.indices, reference.indices)
    np.testing.assert_array_equal(shuffled.data, reference.data)
    for i in range(20):
        assert np.all(np.diff(reference.indices[reference.indptr[i] : reference.indptr[i + 1]]) > 0)


def test_triplet_validation():
    with pytest.raises(tg.InvalidArgumentError):
        tg.from_triplets([0, 1], [0], [1.0, 1.0], (2, 2))
    with pytest.raises(tg.InvalidArgumentError):
        tg.from_triplets([0, 2], [0, 0], [1.0, 1.0], (2, 2))


def test_pattern_reuse(rng):
    pattern = AssemblyPattern.from_index_pairs(np.array([0, 1, 0, 1]), np.array([0, 1, 0, 0]), (2, 2))
    assert pattern.nnz == 3
    np.testing.assert_array_equal(pattern.assemble([1.0, 2.0, 3.0, 4.0]).toarray(), [[4.0, 0.0], [4.0, 2.0]])
    np.testing.assert_array_equal(pattern.assemble([0.0, 1.0, 0.0, 0.0]).toarray(), [[0.0, 0.0], [0.0, 1.0]])
    with pytest.raises(tg.InvalidArgumentError):
        pattern.assemble(rng.normal(size=3))


def test_compose_block(rng):
    a = sp.csr_matrix(rng.normal(size=(3, 3)))
    b = sp.csr_matrix(rng.normal(size=(3, 2)))
    c = sp.csr_matrix(rng.normal(size=(2, 3)))
    d = sp.csr_matrix(rng.normal(size=(2, 2)))
    x = rng.normal(size=5)

    matrix = tg.compose_block([[(a, 2.0), (b, -1.0)], [(c, 1.0), (d, 0.5)]])
    expected = np.concatenate([2.0 * a @ x[:3] - b @ x[3:], c @ x[:3] + 0.5 * d @ x[3:]])
    np.testing.assert_allclose(matrix @ x, expected, atol=1e-14)


def test_compose_block_absent_blocks():
    eye = sp.identity(3, format="csr")
    matrix = tg.compose_block([[(eye, 1.0), (eye, 0.0)], [(None, 1.0), (eye, 1.0)]])
    assert matrix.shape == (6, 6)
    np.testing.assert_array_equal(matrix.toarray(), np.eye(6))
    assert matrix.nnz == 6


def test_compose_block_rejects_nonconformal():
    with pytest.raises(tg.InvalidArgumentError):
        tg.compose_block([[(sp.identity(3), 1.0), (sp.identity(2), 1.0)], [(None, 1.0), (sp.identity(2), 1.0)]])
    with pytest.raises(tg.InvalidArgumentError):
        tg.compose_block([[(sp.identity(3), 1.0)]])
    with pytest.raises(tg.InvalidArgumentError):
        tg.compose_block([[(sp.identity(3), 1.0), (None, 1.0)], [(None, 1.0), (None, 1.0)]])


@pytest.mark.parametrize(
    ("matrix", "b", "expected"),
    [
        (sp.identity(3, format="csr"), np.array([1.0, 2.0, 3.0]), np.array([1.0, 2.0, 3.0])),
        (sp.csr_matrix([[2.0, 1.0], [1.0, 2.0]]), np.array([3.0, 3.0]), np.array([1.0, 1.0])),
    ],
)
def test_solve_small_systems(matrix, b, expected):
    np.testing.assert_allclose(tg.solve(matrix, b), expected, atol=1e-14)


def test_solve_meets_residual_bound(spd_matrix, rng):
    b = rng.normal(size=50)
    x = tg.solve(spd_matrix, b, tol=1e-10)
    assert np.linalg.norm(spd_matrix @ x - b) <= 1e-10 * residual_scale(b)


def test_iterative_path(monkeypatch, spd_matrix, rng):
    monkeypatch.setattr(sparse, "DIRECT_SOLVER_LIMIT", 0)
    b = rng.normal(size=50)
    x = tg.solve(spd_matrix, b, tol=1e-8)
    np.testing.assert_allclose(x, np.linalg.solve(spd_matrix.toarray(), b), rtol=1e-5)


def test_singular_matrix_raises():
    with pytest.raises(tg.LinearSolverError):
        tg.solve(sp.csr_matrix([[1.0, 1.0], [1.0, 1.0]]), np.array([1.0, 0.0]))


@pytest.mark.parametrize(
    ("matrix", "b", "tol"),
    [
        (sp.csr_matrix(np.ones((2, 3))), np.ones(2), 1e-10),
        (sp.identity(2, format="csr"), np.ones(3), 1e-10),
        (sp.identity(2, format="csr"), np.ones(2), 0.0),
    ],
)
def test_solve_rejects_invalid_arguments(matrix, b, tol):
    with pytest.raises(tg.InvalidArgumentError):
        tg.solve(matrix, b, tol=tol)


def test_residual_scale_is_right_hand_side_norm():
    assert residual_scale(np.zeros(2)) == 1.0
    assert residual_scale(np.array([0.3, 0.4])) == 1.0
    assert residual_scale(np.array([3.0, 4.0])) == pytest.approx(5.0)


@pytest.fixture
def cancelling_system():
    """x = (1, 1) solves a system whose right-hand side is tiny next to || |A| |x| ||."""
    return sp.csr_matrix([[1e8, -1e8], [0.0, 1.0]]), np.array([0.0, 1.0])


def test_rounding_floor(cancelling_system):
    matrix, _ = cancelling_system
    floor = sparse.rounding_floor(matrix, np.ones(2))
    assert floor == pytest.approx(sparse.ROUNDING_SLACK * np.finfo(float).eps * np.hypot(2e8, 1.0))


def test_residual_inside_rounding_floor_is_accepted_with_warning(monkeypatch, cancelling_system, caplog):
    matrix, b = cancelling_system
    monkeypatch.setattr(sparse, "_solve_direct", lambda csc, rhs, tol: np.array([1.0 + 1e-15, 1.0]))
    with caplog.at_level(logging.WARNING):
        x = tg.solve(matrix, b, tol=1e-10)
    assert x[0] == 1.0 + 1e-15
    assert "rounding floor" in caplog.text


def test_residual_above_rounding_floor_raises(monkeypatch, cancelling_system):
    matrix, b = cancelling_system
    monkeypatch.setattr(sparse, "_solve_direct", lambda csc, rhs, tol: np.array([1.0 + 1e-12, 1.0]))
    with pytest.raises(tg.LinearSolverError) as excinfo:
        tg.solve(matrix, b, tol=1e-10)
    assert excinfo.value.residual == pytest.approx(1e-4, rel=1e-3)


def test_block_system_round_trip(rng):
    mass = sp.identity(4, format="csr") * 2.0
    stiffness = sp.diags([1.0, 2.0, 3.0, 4.0], format="csr")
    system = tg.BlockSystem(
        blocks=[[(mass, 1.0), (stiffness, -1.0)], [(stiffness, 1.0), (mass, 1.0)]],
        rhs=(rng.normal(size=4), np.zeros(4)),
    )
    u, s = system.solve()
    assert u.shape == s.shape == (4,)
    np.testing.assert_allclose(system.matrix() @ np.concatenate([u, s]), system.rhs_vector(), atol=1e-12)
    np.testing.assert_allclose(stiffness @ u + mass @ s, 0.0, atol=1e-12)
