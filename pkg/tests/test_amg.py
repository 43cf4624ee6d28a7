"""Strength of connection, C/F splitting, direct interpolation, two-level cycle."""

import numpy as np
import pytest

from conftest import random_spd, tridiag
from gnla.amg import (cf_split_greedy, direct_interpolation, soc_abs,
                      soc_classic, soc_sa, step, two_level_solve)
from gnla.kernels import jacobi_reference
from gnla.sparse import diag, from_dense, spmv_csr


def five_point_laplace(m: int):
    """2-D 5-point Poisson matrix on an m-by-m grid (Dirichlet)."""
    n = m * m
    dense = np.zeros((n, n))
    for i in range(m):
        for j in range(m):
            k = i * m + j
            dense[k, k] = 4.0
            for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                a, b = i + di, j + dj
                if 0 <= a < m and 0 <= b < m:
                    dense[k, a * m + b] = -1.0
    return from_dense(dense)


def test_step_activation():
    assert np.array_equal(step(np.array([-1.0, 0.0, 0.5])), [0.0, 0.0, 1.0])


def test_soc_sa_values():
    A = from_dense(np.array([[4.0, -2.0], [-2.0, 1.0]]))
    S = soc_sa(A).to_dense()
    assert S[0, 1] == pytest.approx(4.0 / 4.0)
    assert S[0, 0] == pytest.approx(1.0)


def test_soc_sa_diagonal_scaling_invariance():
    # S(DAD) = S(A) for any positive diagonal scaling D
    rng = np.random.default_rng(0)
    A = random_spd(rng, 20, 0.3)
    d = rng.uniform(0.5, 2.0, 20)
    A_scaled = from_dense(np.outer(d, d) * A.to_dense())
    assert np.allclose(soc_sa(A_scaled).to_dense(), soc_sa(A).to_dense(),
                       rtol=1e-13, atol=1e-13)


def test_soc_classic_known_pattern():
    # anisotropic 9-point stencil: only N/S survive tau = 0.25
    dense = np.array([
        [1.068, -0.533, 0.266, -0.1335],
        [-0.533, 1.068, -0.1335, 0.266],
        [0.266, -0.1335, 1.068, -0.533],
        [-0.1335, 0.266, -0.533, 1.068]])
    S = soc_classic(from_dense(dense), 0.25).to_dense()
    # N/S is strong; the positive E/W entry has a negative ratio and drops out;
    # the corner ratio 0.1335/0.533 = 0.2505 sits just above tau and survives
    assert S[0, 1] == 1.0 and S[0, 2] == 0.0 and S[0, 3] == 1.0


def test_soc_classic_positive_scaling_invariance():
    rng = np.random.default_rng(1)
    A = tridiag(15)
    S = soc_classic(A, 0.25).to_dense()
    scale = rng.uniform(0.5, 3.0)
    S2 = soc_classic(from_dense(scale * A.to_dense()), 0.25).to_dense()
    assert np.allclose(S, S2, atol=1e-13)


def test_soc_classic_no_negative_offdiag_raises():
    A = from_dense(np.array([[2.0, 1.0], [1.0, 2.0]]))
    with pytest.raises(ValueError):
        soc_classic(A)


def test_soc_classic_tau_validation():
    with pytest.raises(ValueError):
        soc_classic(tridiag(5), tau=0.0)


def test_soc_abs_pattern():
    A = tridiag(6)
    S = soc_abs(A, 0.5).to_dense()
    assert np.array_equal(S, (np.abs(A.to_dense()) >= 1.0) * (1 - np.eye(6)))


def test_cf_split_is_maximal_independent_set():
    A = five_point_laplace(6)
    S = soc_classic(A, 0.25)
    cf = cf_split_greedy(S)
    dense = S.to_dense()
    C = np.flatnonzero(cf.labels == "C")
    # no two C vertices strongly connected; every F vertex touches a C vertex
    for i in C:
        for j in C:
            if i != j:
                assert dense[i, j] == 0.0 and dense[j, i] == 0.0
    for i in np.flatnonzero(cf.labels == "F"):
        assert any(dense[i, j] != 0 or dense[j, i] != 0 for j in C)


def test_direct_interpolation_c_rows_are_unit():
    A = five_point_laplace(5)
    S = soc_classic(A, 0.25)
    cf = cf_split_greedy(S)
    _, P = direct_interpolation(A, S, cf)
    for i, k in cf.coarse_index.items():
        row = np.zeros(cf.num_coarse)
        row[k] = 1.0
        assert np.array_equal(P[i], row)


def test_direct_interpolation_f_rows_sum_to_one_on_zero_rowsum():
    # 1-D periodic Laplacian has zero row sums; interpolation preserves constants
    n = 16
    dense = 2.0 * np.eye(n)
    for i in range(n):
        dense[i, (i + 1) % n] = -1.0
        dense[i, (i - 1) % n] = -1.0
    A = from_dense(dense)
    S = soc_classic(A, 0.25)
    cf = cf_split_greedy(S)
    _, P = direct_interpolation(A, S, cf)
    fine = np.flatnonzero(cf.labels == "F")
    assert np.allclose(P[fine].sum(axis=1), 1.0, atol=1e-12)


def test_direct_interpolation_pattern_mismatch_raises():
    A = tridiag(5)
    S = soc_classic(five_point_laplace(3), 0.25)
    with pytest.raises(ValueError):
        direct_interpolation(A, S, cf_split_greedy(soc_classic(A, 0.25)))


def test_two_level_beats_plain_jacobi():
    A = tridiag(63)
    b = np.ones(63)
    x, residuals = two_level_solve(A, b, iters=30, collect_residuals=True)
    assert residuals[-1] < 1e-8
    x_j = jacobi_reference(A, b, np.zeros(63), 2.0 / 3.0, 30)
    assert np.linalg.norm(b - spmv_csr(A, x_j)) > 1e-2


def test_two_level_monotone_residuals():
    A = tridiag(31)
    _, residuals = two_level_solve(A, np.ones(31), iters=8, collect_residuals=True)
    assert all(b < a for a, b in zip(residuals, residuals[1:]))
