import itertools

import numpy as np
import pytest

from rfisim import (
    DimensionMismatchError,
    EmpiricalMeasure,
    InvalidSpecError,
    SupportCapError,
    prokhorov,
    wasserstein2,
)

RNG = np.random.default_rng(7)


def brute_force_w2(xs: np.ndarray, ys: np.ndarray) -> float:
    """Independent oracle: minimum over all permutations for uniform clouds."""
    n = xs.shape[0]
    d2 = ((xs[:, None, :] - ys[None, :, :]) ** 2).sum(-1)
    best = min(
        d2[np.arange(n), list(perm)].sum() for perm in itertools.permutations(range(n))
    )
    return float(np.sqrt(best / n))


def test_w2_single_atoms():
    mu = EmpiricalMeasure(np.array([[0.0]]))
    nu = EmpiricalMeasure(np.array([[1.0]]))
    assert wasserstein2(mu, nu).w2 == 1.0


def test_w2_two_point_assignment():
    mu = EmpiricalMeasure(np.array([[0.0], [2.0]]))
    nu = EmpiricalMeasure(np.array([[1.0], [3.0]]))
    res = wasserstein2(mu, nu)
    # enumeration: matching 0->1, 2->3 costs 1+1, the crossing costs 1+25
    assert res.w2 == 1.0
    assert np.allclose(res.coupling.plan, np.array([[0.5, 0.0], [0.0, 0.5]]))


def test_w2_self_distance_diagonal_coupling():
    pts = RNG.normal(size=(5, 2))
    mu = EmpiricalMeasure(pts)
    res = wasserstein2(mu, mu)
    assert res.w2 == 0.0
    assert np.allclose(res.coupling.plan, np.eye(5) / 5)


def test_w2_matches_permutation_oracle():
    for _ in range(10):
        xs = RNG.normal(size=(7, 3))
        ys = RNG.normal(size=(7, 3))
        mu, nu = EmpiricalMeasure(xs), EmpiricalMeasure(ys)
        res = wasserstein2(mu, nu)
        assert abs(res.w2 - brute_force_w2(xs, ys)) <= 1e-12
        res.coupling.validate(mu, nu)


def test_w2_weighted_collapse_consistency():
    # duplicated uniform support equals collapsed weighted support
    tgt = EmpiricalMeasure(RNG.normal(size=(3, 2)))
    pts = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 1.0]])
    uni = EmpiricalMeasure(pts)
    wgt = EmpiricalMeasure(np.array([[0.0, 0.0], [1.0, 1.0]]), np.array([2 / 3, 1 / 3]))
    a = wasserstein2(uni, tgt)
    b = wasserstein2(wgt, tgt)
    assert abs(a.w2 - b.w2) <= 1e-9
    b.coupling.validate(wgt, tgt)


def test_w2_jensen_mean_bound():
    for _ in range(5):
        mu = EmpiricalMeasure(RNG.normal(size=(6, 3)))
        nu = EmpiricalMeasure(RNG.normal(size=(6, 3)))
        w2 = wasserstein2(mu, nu).w2
        assert w2 >= np.linalg.norm(mu.mean() - nu.mean()) - 1e-9


def test_metric_axioms_small_clouds():
    clouds = [EmpiricalMeasure(RNG.normal(size=(4, 2))) for _ in range(3)]
    a, b, c = clouds
    for metric in (lambda u, v: wasserstein2(u, v).w2, prokhorov):
        assert metric(a, b) == metric(b, a)
        assert metric(a, c) <= metric(a, b) + metric(b, c) + 1e-9
        assert metric(a, a) <= 1e-12


def test_prokhorov_examples():
    d0 = EmpiricalMeasure(np.array([[0.0]]))
    d1 = EmpiricalMeasure(np.array([[1.0]]))
    assert prokhorov(d0, d1) == 1.0
    mu = EmpiricalMeasure(np.array([[0.0], [1.0]]))
    assert prokhorov(mu, mu) == 0.0
    shifted = EmpiricalMeasure(np.array([[0.1], [1.1]]))
    assert abs(prokhorov(mu, shifted) - 0.1) <= 1e-12


def test_prokhorov_distant_atoms_capped_at_one():
    d0 = EmpiricalMeasure(np.array([[0.0]]))
    far = EmpiricalMeasure(np.array([[37.0]]))
    assert prokhorov(d0, far) == 1.0


def test_prokhorov_weight_mismatch_atoms():
    # same support, different weights: distance equals the unmatched mass
    mu = EmpiricalMeasure(np.array([[0.0], [1.0]]), np.array([0.7, 0.3]))
    nu = EmpiricalMeasure(np.array([[0.0], [1.0]]), np.array([0.4, 0.6]))
    # 0.3 of mass must cross distance 1: min unmatched mass beyond eps<1 is 0.3
    assert abs(prokhorov(mu, nu) - 0.3) <= 1e-12


def test_prokhorov_in_unit_interval():
    for _ in range(10):
        mu = EmpiricalMeasure(RNG.normal(size=(5, 2)) * 10)
        nu = EmpiricalMeasure(RNG.normal(size=(4, 2)) * 10)
        assert 0.0 <= prokhorov(mu, nu) <= 1.0


def test_prokhorov_support_cap():
    mu = EmpiricalMeasure(RNG.normal(size=(20, 1)))
    with pytest.raises(SupportCapError, match="subsample"):
        prokhorov(mu, mu, cap=16)


def test_measure_validation():
    with pytest.raises(InvalidSpecError):
        EmpiricalMeasure(np.empty((0, 2)))
    with pytest.raises(InvalidSpecError):
        EmpiricalMeasure(np.array([[np.inf]]))
    with pytest.raises(InvalidSpecError):
        EmpiricalMeasure(np.array([[0.0], [1.0]]), np.array([0.8, 0.3]))
    with pytest.raises(InvalidSpecError):
        EmpiricalMeasure(np.array([[0.0], [1.0]]), np.array([-0.2, 1.2]))


def test_dimension_mismatch():
    mu = EmpiricalMeasure(np.zeros((2, 2)))
    nu = EmpiricalMeasure(np.zeros((2, 3)))
    with pytest.raises(DimensionMismatchError):
        wasserstein2(mu, nu)
    with pytest.raises(DimensionMismatchError):
        prokhorov(mu, nu)


def test_subsample_deterministic_and_uniform():
    mu = EmpiricalMeasure(RNG.normal(size=(100, 2)))
    a = mu.subsample(16)
    b = mu.subsample(16)
    assert np.array_equal(a.support, b.support)
    assert a.n == 16 and a.is_uniform
