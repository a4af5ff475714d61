"""Subspace losses and Gaussian divergences: oracles, identities, validation."""

import math

import numpy as np
import pytest

from spikedpca import (
    alignment_loss,
    build_covariance,
    kl_gaussian,
    kl_spiked,
    sine_squared_loss,
)


def _unit(rng, N):
    v = rng.standard_normal(N)
    return v / np.linalg.norm(v)


def _frame(rng, N, M):
    q, r = np.linalg.qr(rng.standard_normal((N, M)))
    return q * np.sign(np.diag(r))


def test_loss_oracles():
    e1 = np.array([1.0, 0.0])
    e2 = np.array([0.0, 1.0])
    assert alignment_loss(e1, e1) == 0.0
    assert alignment_loss(e1, -e1) == 0.0
    assert alignment_loss(e1, e2) == 2.0
    assert sine_squared_loss(e1, e2) == 1.0
    assert sine_squared_loss(e1, -e1) == 0.0


def test_loss_identities_random_pairs():
    rng = np.random.default_rng(100)
    for _ in range(300):
        N = int(rng.integers(2, 25))
        a, b = _unit(rng, N), _unit(rng, N)
        L = alignment_loss(a, b)
        assert 0.0 <= L <= 2.0
        direct = min(float(np.sum((a - b) ** 2)), float(np.sum((a + b) ** 2)))
        assert abs(L - direct) < 1e-12
        Ls = sine_squared_loss(a, b)
        assert abs(Ls - (L - L * L / 4.0)) < 1e-12
        assert abs(Ls - (1.0 - float(a @ b) ** 2)) < 1e-12


def test_loss_input_validation():
    with pytest.raises(ValueError):
        alignment_loss(np.array([1.0, 1.0]), np.array([1.0, 0.0]))
    with pytest.raises(ValueError):
        sine_squared_loss(np.array([0.0, 0.0]), np.array([1.0, 0.0]))
    with pytest.raises(ValueError):
        alignment_loss(np.array([1.0, 0.0, 0.0]), np.array([1.0, 0.0]))


def test_kl_spiked_zero_on_identical_frames():
    rng = np.random.default_rng(5)
    for _ in range(20):
        theta = _frame(rng, 12, 2)
        assert abs(kl_spiked(theta, theta, [3.0, 1.0], 7)) < 1e-10


def test_kl_spiked_orthogonal_oracle():
    t1 = np.array([[1.0], [0.0]])
    t2 = np.array([[0.0], [1.0]])
    # n/2 * eta(1) * lambda = 1/2 * 1/2 * 1
    assert math.isclose(kl_spiked(t1, t2, [1.0], 1), 0.25, rel_tol=1e-12)


def test_kl_spiked_linear_in_sample_size():
    rng = np.random.default_rng(11)
    t1, t2 = _frame(rng, 10, 2), _frame(rng, 10, 2)
    lam = [4.0, 1.5]
    one = kl_spiked(t1, t2, lam, 1)
    assert math.isclose(kl_spiked(t1, t2, lam, 9), 9.0 * one, rel_tol=1e-12)


def test_kl_spiked_matches_dense_gaussian_formula():
    rng = np.random.default_rng(17)
    for _ in range(30):
        N = int(rng.integers(3, 16))
        M = int(rng.integers(1, min(4, N)))
        lam = np.sort(rng.uniform(0.5, 10.0, M))[::-1]
        lam += np.arange(M, 0, -1) * 0.05   # enforce strict separation
        t1, t2 = _frame(rng, N, M), _frame(rng, N, M)
        n = int(rng.integers(1, 20))
        spiked = kl_spiked(t1, t2, lam, n)
        s1 = build_covariance(lam, t1).matrix()
        s2 = build_covariance(lam, t2).matrix()
        dense = kl_gaussian(s1, s2, n)
        assert abs(spiked - dense) <= 1e-8 * max(1.0, abs(dense))


def test_kl_spiked_validation():
    t1 = np.array([[1.0], [0.0]])
    t2 = np.array([[0.0], [1.0]])
    with pytest.raises(ValueError):
        kl_spiked(t1, t2, [1.0, 2.0], 1)
    with pytest.raises(ValueError):
        kl_spiked(t1, t2, [-1.0], 1)
    with pytest.raises(ValueError):
        kl_spiked(t1, t2, [1.0], 0)
    with pytest.raises(ValueError):
        kl_spiked(np.array([[0.6], [0.6]]), t2, [1.0], 1)


def test_kl_gaussian_diagonal_oracle():
    val = kl_gaussian(np.diag([2.0, 1.0]), np.eye(2), 1)
    assert math.isclose(val, 0.5 * (1.0 - math.log(2.0)), rel_tol=1e-12)
    assert kl_gaussian(np.eye(3), np.eye(3), 5) == 0.0


def test_kl_gaussian_nonnegative_random():
    rng = np.random.default_rng(23)
    for _ in range(50):
        N = int(rng.integers(2, 10))
        a = rng.standard_normal((N, N))
        b = rng.standard_normal((N, N))
        s1 = a @ a.T + 0.5 * np.eye(N)
        s2 = b @ b.T + 0.5 * np.eye(N)
        assert kl_gaussian(s1, s2, 3) >= 0.0


def test_kl_gaussian_validation():
    asym = np.array([[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(ValueError):
        kl_gaussian(asym, np.eye(2), 1)
    with pytest.raises(ValueError):
        kl_gaussian(np.diag([1.0, -1.0]), np.eye(2), 1)
    with pytest.raises(ValueError):
        kl_gaussian(np.eye(2), np.eye(3), 1)
