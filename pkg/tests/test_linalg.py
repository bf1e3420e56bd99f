import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sgnn.errors import ContractError, ShapeError
from sgnn.linalg import frobenius_norm, matmul, matrix_angle, svd, sym_eig


def triple_loop(a, b):
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            s = 0.0
            for t in range(a.shape[1]):
                s += a[i, t] * b[t, j]
            out[i, j] = s
    return out


def test_matmul_examples():
    b = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(matmul(np.eye(2), b), b)
    assert np.array_equal(matmul(b, [[0.0], [1.0]]), [[2.0], [4.0]])
    with pytest.raises(ShapeError):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_matmul_matches_triple_loop():
    rng = np.random.default_rng(0)
    for _ in range(200):
        m, k, n = rng.integers(1, 7, size=3)
        a, b = rng.standard_normal((m, k)), rng.standard_normal((k, n))
        ref = triple_loop(a, b)
        assert np.linalg.norm(matmul(a, b) - ref) <= 1e-12 * max(1.0, np.linalg.norm(ref))


def test_frobenius_examples():
    assert frobenius_norm(np.zeros((3, 2))) == 0.0
    assert frobenius_norm(np.eye(3)) == pytest.approx(math.sqrt(3), abs=1e-15)
    assert frobenius_norm([[3.0, 4.0]]) == 5.0


def test_svd_diagonal_and_rank_one():
    r = svd(np.diag([3.0, 1.0]))
    assert np.allclose(r.sigma, [3.0, 1.0], atol=1e-14)
    assert np.allclose(np.abs(r.u), np.eye(2)) and np.allclose(np.abs(r.vt), np.eye(2))
    u, v = np.array([1.0, 2.0, 3.0]), np.array([0.5, -1.0])
    assert svd(np.outer(u, v)).rank == 1


@pytest.mark.parametrize("shape", [(6, 4), (4, 6), (30, 30), (60, 20), (1, 5), (5, 1)])
def test_svd_against_numpy(shape):
    a = np.random.default_rng(sum(shape)).standard_normal(shape)
    r = svd(a)
    recon = (r.u * r.sigma) @ r.vt
    assert np.linalg.norm(recon - a) <= 1e-8 * max(1.0, np.linalg.norm(a))
    assert np.all(np.diff(r.sigma) <= 0) and np.all(r.sigma >= 0)
    assert np.allclose(r.u.T @ r.u, np.eye(r.u.shape[1]), atol=1e-8)
    assert np.allclose(r.vt @ r.vt.T, np.eye(r.vt.shape[0]), atol=1e-8)
    assert np.allclose(r.sigma, np.linalg.svd(a, compute_uv=False), atol=1e-10)


def test_svd_sign_convention():
    r = svd(np.random.default_rng(1).standard_normal((7, 4)))
    for col in r.u.T:
        first = col[np.abs(col) > 1e-10][0]
        assert first > 0


def test_svd_rank_deficient_has_orthonormal_u():
    rng = np.random.default_rng(2)
    a = rng.standard_normal((8, 2)) @ rng.standard_normal((2, 5))
    r = svd(a)
    assert r.rank == 2
    assert np.allclose(r.u.T @ r.u, np.eye(5), atol=1e-8)
    assert np.linalg.norm((r.u * r.sigma) @ r.vt - a) <= 1e-8 * np.linalg.norm(a)


def test_sym_eig_examples():
    r = sym_eig(np.diag([5.0, 2.0, -1.0]))
    assert np.allclose(r.values, [5.0, 2.0, -1.0])
    r = sym_eig(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert np.allclose(r.values, [1.0, -1.0], atol=1e-14)
    assert np.allclose(np.abs(r.vectors), 1 / math.sqrt(2))
    with pytest.raises(ContractError):
        sym_eig(np.array([[0.0, 1.0], [0.0, 0.0]]))


@pytest.mark.parametrize("n", [1, 2, 8, 25, 60])
def test_sym_eig_residual_and_oracle(n):
    g = np.random.default_rng(n).standard_normal((n, n))
    a = g + g.T
    r = sym_eig(a)
    scale = max(1.0, np.linalg.norm(a))
    assert np.linalg.norm(a @ r.vectors - r.vectors * r.values) <= 1e-8 * scale
    assert np.allclose(r.vectors.T @ r.vectors, np.eye(n), atol=1e-8)
    assert np.linalg.norm((r.vectors * r.values) @ r.vectors.T - a) <= 1e-8 * scale
    assert np.allclose(r.values, np.linalg.eigvalsh(a)[::-1], atol=1e-9)


def test_matrix_angle_examples():
    b = np.array([[1.0, 2.0], [0.0, -1.0]])
    assert matrix_angle(b, b) == pytest.approx(0.0, abs=1e-7)
    assert matrix_angle(b, -b) == pytest.approx(math.pi)
    assert matrix_angle(np.eye(2), [[0.0, 1.0], [1.0, 0.0]]) == pytest.approx(math.pi / 2)
    with pytest.raises(ContractError):
        matrix_angle(b, np.zeros((2, 2)))


@given(st.integers(0, 10_000), st.floats(0.1, 10.0), st.floats(0.1, 10.0))
def test_matrix_angle_symmetric_and_scale_invariant(seed, s1, s2):
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal((3, 4)), rng.standard_normal((3, 4))
    theta = matrix_angle(a, b)
    assert theta == pytest.approx(matrix_angle(b, a), abs=1e-12)
    assert theta == pytest.approx(matrix_angle(s1 * a, s2 * b), abs=1e-9)


@given(st.integers(0, 10_000), st.integers(1, 9), st.integers(1, 9))
def test_svd_reconstruction_property(seed, m, n):
    a = np.random.default_rng(seed).standard_normal((m, n))
    r = svd(a)
    assert np.linalg.norm((r.u * r.sigma) @ r.vt - a) <= 1e-8 * max(1.0, np.linalg.norm(a))
