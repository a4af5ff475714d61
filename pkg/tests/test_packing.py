"""Packing constructions and the Fano / two-point lower-bound machinery."""

import itertools
import math

import numpy as np
import pytest

from spikedpca import (
    C1_PACKING,
    InfeasibleRegimeError,
    fano_bound,
    kl_spiked,
    polar_sphere_family,
    sign_vector_packing,
    signal_strength,
    single_coordinate_family,
    support_packing,
    two_point_family,
)


def test_sign_vector_packing_nine_coordinates():
    pack = sign_vector_packing(9)
    assert pack.m0 == 2
    assert pack.count == 144
    assert pack.exhaustive
    v = pack.vectors
    assert v.shape == (144, 9)
    assert np.allclose(np.linalg.norm(v, axis=1), 1.0)
    gram = v @ v.T
    off = gram[~np.eye(144, dtype=bool)]
    # pairwise distance >= 1 means inner products at most 1/2
    assert np.max(off) <= 0.5 + 1e-12


def test_sign_vector_packing_one_sparse():
    pack = sign_vector_packing(5)
    assert pack.m0 == 1
    assert pack.count == 10          # all of +-e_j survive
    assert pack.exhaustive
    with pytest.raises(InfeasibleRegimeError):
        sign_vector_packing(4)


def test_sign_vector_packing_truncation():
    pack = sign_vector_packing(9, max_candidates=10)
    assert not pack.exhaustive
    assert pack.candidates_scanned == 10
    assert pack.count <= 10


def test_support_packing_oracle():
    pack = support_packing(6, 2, 0)
    assert pack.supports == ((0, 1), (2, 3), (4, 5))
    assert pack.count == 3
    assert pack.exhaustive


def test_support_packing_overlap_property():
    pack = support_packing(30, 6, 2)
    assert pack.count >= 2
    for sup in pack.supports:
        assert len(sup) == 6
        assert sup == tuple(sorted(sup))
    for a, b in itertools.combinations(pack.supports, 2):
        assert len(set(a) & set(b)) <= 2
    with pytest.raises(ValueError):
        support_packing(5, 6, 0)
    with pytest.raises(ValueError):
        support_packing(10, 3, -1)


def test_single_coordinate_family_geometry():
    fam = single_coordinate_family(10, 2, 1, 1.0, [2.0, 2.0])
    assert fam.kind == "single-coordinate"
    assert fam.cardinality == 8
    assert math.isclose(fam.radius, 0.999, rel_tol=1e-12)
    assert math.isclose(fam.loss_floor, 2.0 * 0.999 ** 2, rel_tol=1e-12)
    assert math.isclose(fam.min_pairwise_loss, fam.loss_floor, rel_tol=1e-12)
    for th in fam.members:
        assert np.allclose(th.T @ th, np.eye(2), atol=1e-12)
        assert np.sum(np.abs(th[:, 0])) <= 2.0 + 1e-12


def test_single_coordinate_family_infeasible():
    with pytest.raises(InfeasibleRegimeError):
        single_coordinate_family(3, 2, 1, 1.0, [2.0, 2.0])
    with pytest.raises(InfeasibleRegimeError):
        single_coordinate_family(10, 2, 1, 1.0, [1.0, 2.0])


def test_polar_sphere_family_bounded_below():
    fam = polar_sphere_family(7, 30, 1, 1, [2.0], 1.0, [4.0], "bounded-below")
    assert fam.regime == "bounded-below"
    assert fam.sphere_dim == 9       # floor(7 h(2)) = floor(28/3)
    assert fam.cardinality == 144
    assert math.isclose(fam.radius ** 2, C1_PACKING, rel_tol=1e-12)
    assert math.isclose(fam.loss_floor, C1_PACKING, rel_tol=1e-12)
    assert fam.min_pairwise_loss >= fam.loss_floor - 1e-12
    expected = 0.5 * 7 * signal_strength(2.0) * C1_PACKING
    assert math.isclose(fam.expected_kl, expected, rel_tol=1e-12)
    assert np.max(np.abs(fam.kl_to_base - fam.expected_kl)) < 1e-10


def test_polar_sphere_family_remaining_regimes():
    cases = [
        dict(n=20, N=15, M=1, nu=1, lambdas=[2.0], q=1.0, radii=[4.0],
             regime="N-dominated", m=14),
        dict(n=20, N=20, M=1, nu=1, lambdas=[2.0], q=1.0, radii=[1.5],
             regime="sparsity-dominated", m=15),
        dict(n=30, N=40, M=1, nu=1, lambdas=[2.0], q=1.0, radii=[1.3],
             regime="log-sparse", alpha=0.5, m=8),
    ]
    for case in cases:
        m = case.pop("m")
        fam = polar_sphere_family(**case)
        assert fam.sphere_dim == m
        assert 0.0 < fam.radius < 1.0
        assert fam.cardinality >= 2
        assert fam.min_pairwise_loss >= fam.loss_floor - 1e-12
        assert np.max(np.abs(fam.kl_to_base - fam.expected_kl)) < 1e-10
        Cq = case["radii"][0] ** case["q"]
        for th in fam.members:
            assert np.allclose(th.T @ th, np.eye(case["M"]), atol=1e-12)
            mass = np.sum(np.abs(th[:, 0]) ** case["q"])
            assert mass <= Cq * (1.0 + 1e-9)


def test_polar_sphere_family_log_sparse_varies_supports():
    fam = polar_sphere_family(30, 40, 1, 1, [2.0], 1.0, [1.3], "log-sparse",
                              alpha=0.5)
    assert fam.details["support_count"] > 1
    assert fam.cardinality == fam.details["sign_count"] * fam.details["support_count"]


def test_polar_sphere_family_infeasible_cases():
    with pytest.raises(InfeasibleRegimeError):
        # nh = 1: sphere dimension collapses below 5
        polar_sphere_family(2, 30, 1, 1, [1.0], 1.0, [4.0], "bounded-below")
    with pytest.raises(InfeasibleRegimeError):
        # nh = 1 with N - M = 199: squared radius lands above 1
        polar_sphere_family(2, 200, 1, 1, [1.0], 1.0, [4.0], "N-dominated")
    with pytest.raises(InfeasibleRegimeError):
        # members would need lq mass ~3.3 against a budget of 1.5
        polar_sphere_family(10, 60, 1, 1, [2.0], 1.0, [1.5], "N-dominated")
    with pytest.raises(ValueError):
        polar_sphere_family(7, 30, 1, 1, [2.0], 1.0, [4.0], "no-such-regime")
    with pytest.raises(ValueError):
        polar_sphere_family(30, 40, 1, 1, [2.0], 1.0, [1.3], "log-sparse",
                            alpha=2.0)


def test_two_point_family_oracle():
    fam = two_point_family(100, 10, 2, 1, 2, [3.0, 1.0])
    assert fam.cardinality == 2
    assert math.isclose(fam.radius ** 2, 0.04, rel_tol=1e-12)
    assert math.isclose(fam.loss_floor, 0.04, rel_tol=1e-12)
    assert math.isclose(fam.details["g"], 0.5, rel_tol=1e-12)
    assert math.isclose(fam.details["sym_kl_expected"], 2.0, rel_tol=1e-12)
    k12 = kl_spiked(fam.members[0], fam.members[1], [3.0, 1.0], 100)
    k21 = kl_spiked(fam.members[1], fam.members[0], [3.0, 1.0], 100)
    assert abs(k12 + k21 - 2.0) < 1e-10
    for th in fam.members:
        assert np.allclose(th.T @ th, np.eye(2), atol=1e-12)


def test_two_point_family_validation():
    with pytest.raises(ValueError):
        two_point_family(100, 10, 1, 1, 2, [3.0])
    with pytest.raises(ValueError):
        two_point_family(100, 10, 2, 1, 1, [3.0, 1.0])
    with pytest.raises(InfeasibleRegimeError):
        two_point_family(1, 10, 2, 1, 2, [1.2, 1.0])  # n g too small


def test_fano_bound_two_point_oracle():
    fam = two_point_family(100, 10, 2, 1, 2, [3.0, 1.0])
    value = fano_bound(fam, [3.0, 1.0], 100, fam.loss_floor / 4.0)
    # delta/4 exp(-1) with delta = r^2/4 and n g r^2 = 2
    expected = 1.0 / (8.0 * math.e * 100 * 0.5)
    assert math.isclose(value, expected, rel_tol=1e-10)


def test_fano_bound_many_members_formula():
    fam = polar_sphere_family(7, 30, 1, 1, [2.0], 1.0, [4.0], "bounded-below")
    delta = fam.loss_floor / 4.0
    value = fano_bound(fam, [2.0], 7, delta)
    kls = fam.kl_values([2.0], 7)
    expected = delta * max(0.0, 1.0 - (float(np.mean(kls)) + math.log(2.0))
                           / math.log(fam.cardinality))
    assert math.isclose(value, expected, rel_tol=1e-12)
    assert 0.0 < value <= delta

    # heavily divergent members drive the bound to its zero clip
    tiny = single_coordinate_family(10, 1, 1, 1.0, [2.0])
    assert fano_bound(tiny, [5.0], 50, tiny.loss_floor / 4.0) == 0.0
    with pytest.raises(ValueError):
        fano_bound(tiny, [5.0], 50, 0.0)
