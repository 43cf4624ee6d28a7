"""GNN kernels against their direct reference implementations."""

import numpy as np
import pytest

from conftest import random_spd, tridiag
from gnla.kernels import (chebyshev_reference, gnn_chebyshev, gnn_jacobi,
                          gnn_power_method, gnn_spmv, gnn_weighted_norm,
                          jacobi_reference, power_method_reference,
                          weighted_norm_reference)
from gnla.sparse import from_dense, identity, spmv_csr


def test_spmv_identity():
    x = np.array([1.0, 2.0, 3.0])
    assert np.array_equal(gnn_spmv(identity(3), x), x)


@pytest.mark.parametrize("self_edges", [True, False])
def test_spmv_matches_reference(self_edges):
    rng = np.random.default_rng(0)
    A = random_spd(rng, 30, 0.2)
    x = rng.standard_normal(30)
    got = gnn_spmv(A, x, self_edges=self_edges)
    assert np.allclose(got, spmv_csr(A, x), rtol=1e-14, atol=1e-14)


def test_spmv_dimension_mismatch():
    with pytest.raises(ValueError):
        gnn_spmv(identity(3), np.ones(4))


def test_weighted_norm_identity_weight():
    x = np.array([3.0, 4.0])
    assert gnn_weighted_norm(identity(2), x) == pytest.approx(5.0, abs=1e-14)


def test_weighted_norm_matches_reference():
    rng = np.random.default_rng(1)
    W = random_spd(rng, 25, 0.2)
    x = rng.standard_normal(25)
    got = gnn_weighted_norm(W, x)
    assert got == pytest.approx(weighted_norm_reference(W, x), rel=1e-12)


def test_weighted_norm_rejects_indefinite():
    W = from_dense(np.array([[-1.0]]))
    with pytest.raises(ValueError):
        gnn_weighted_norm(W, np.array([1.0]))


def test_jacobi_matches_reference_bitwise():
    rng = np.random.default_rng(2)
    A = random_spd(rng, 20, 0.3)
    b = rng.standard_normal(20)
    x0 = rng.standard_normal(20)
    got = gnn_jacobi(A, b, x0, 2.0 / 3.0, 15)
    want = jacobi_reference(A, b, x0, 2.0 / 3.0, 15)
    assert np.array_equal(got, want)


def test_jacobi_zero_diagonal_raises():
    A = from_dense(np.array([[0.0, 1.0], [1.0, 2.0]]))
    with pytest.raises(ValueError):
        gnn_jacobi(A, np.ones(2), np.zeros(2), 1.0, 1)


def test_jacobi_converges_on_dominant_system():
    A = tridiag(12)
    b = np.ones(12)
    x = gnn_jacobi(A, b, np.zeros(12), 2.0 / 3.0, 1500)
    assert np.linalg.norm(b - spmv_csr(A, x)) < 1e-10


def test_chebyshev_matches_reference_bitwise():
    A = tridiag(15)
    lam = 2.0 - 2.0 * np.cos(np.pi * np.array([1, 15]) / 16)
    b = np.arange(1.0, 16.0)
    got = gnn_chebyshev(A, b, np.zeros(15), lam[0], lam[1], 10)
    want = chebyshev_reference(A, b, np.zeros(15), lam[0], lam[1], 10)
    assert np.array_equal(got, want)


def test_chebyshev_beats_jacobi():
    A = tridiag(31)
    lam = 2.0 - 2.0 * np.cos(np.pi * np.array([1, 31]) / 32)
    b = np.ones(31)
    x_c = chebyshev_reference(A, b, np.zeros(31), lam[0], lam[1], 30)
    x_j = jacobi_reference(A, b, np.zeros(31), 2.0 / 3.0, 30)
    assert (np.linalg.norm(b - spmv_csr(A, x_c))
            < np.linalg.norm(b - spmv_csr(A, x_j)))


def test_chebyshev_degenerate_spectrum_raises():
    with pytest.raises(ValueError):
        gnn_chebyshev(identity(3), np.ones(3), np.zeros(3), 1.0, 1.0, 5)
    with pytest.raises(ValueError):
        gnn_chebyshev(identity(3), np.ones(3), np.zeros(3), -1.0, 1.0, 5)


def test_power_method_diagonal_matrix():
    A = from_dense(np.diag([1.0, 3.0, 2.0]))
    v, lam = gnn_power_method(A, np.ones(3), 100)
    assert lam == pytest.approx(3.0, rel=1e-10)
    assert abs(v[1]) == pytest.approx(1.0, rel=1e-8)


def test_power_method_matches_reference_bitwise():
    rng = np.random.default_rng(4)
    A = random_spd(rng, 18, 0.3)
    b0 = rng.standard_normal(18)
    v_g, lam_g = gnn_power_method(A, b0, 50)
    v_r, lam_r = power_method_reference(A, b0, 50)
    assert np.array_equal(v_g, v_r)
    assert lam_g == lam_r


def test_power_method_zero_start_raises():
    with pytest.raises(ValueError):
        gnn_power_method(identity(3), np.zeros(3), 5)
