import numpy as np
import pytest

from rfisim import (
    Delta,
    DeterministicRandomMap,
    EmpiricalMeasure,
    EnsembleConfig,
    GaugeWindowError,
    Hyperplane,
    InvalidSpecError,
    LinearGauge,
    TableGauge,
    fit_rate,
    identity_map,
    linear_gauge_window,
    markov_discrepancy,
    projector_map,
    psi2,
    subregularity_check,
    theta_envelope_fraction,
    theta_from_linear_gauge,
)

RNG = np.random.default_rng(55)


def test_markov_discrepancy_zero_at_invariant_cloud():
    h = Hyperplane([1.0, 0.0], 0.0)
    m = DeterministicRandomMap(projector_map(h))
    pts = np.column_stack([np.zeros(6), RNG.normal(size=6)])  # on the plane
    pi = EmpiricalMeasure(pts)
    assert markov_discrepancy(m, pi, pi, n_xi=4, seed=0) == 0.0


def test_markov_discrepancy_identity_always_zero():
    m = DeterministicRandomMap(identity_map(2))
    mu = EmpiricalMeasure(RNG.normal(size=(5, 2)))
    pi = EmpiricalMeasure(RNG.normal(size=(5, 2)))
    assert markov_discrepancy(m, mu, pi, n_xi=3, seed=1) == 0.0


def test_markov_discrepancy_single_coupling_hand_value():
    # single-atom measures: the only coupling pairs (1,1) with its projection,
    # and psi2(x, Px, Px, Px) = |x - Px|^2 = squared distance to the plane
    h = Hyperplane([1.0, 0.0], 0.0)
    m = DeterministicRandomMap(projector_map(h))
    x = np.array([[1.0, 1.0]])
    mu = EmpiricalMeasure(x)
    pi = EmpiricalMeasure(h.project(x))
    val = markov_discrepancy(m, mu, pi, n_xi=2, seed=2)
    assert abs(val - 1.0) <= 1e-12


def test_subregularity_contraction_consistency():
    # synthetic contraction trace: Psi = sqrt(c) W2, step = (1-r) W2
    c, r = 0.09, 0.7
    w2 = 3.0 * r ** np.arange(30)
    psi = np.sqrt(c) * w2
    steps = (1 - r) * w2
    gauge = LinearGauge(kappa=1.0 / np.sqrt(c), alpha=(1 + r) / 2, eps=0.0)
    res = subregularity_check(psi, steps, w2, gauge)
    assert res.holds and not res.inconclusive
    assert np.isclose(res.q_hat, np.sqrt(c) / (1 - r))
    assert np.isclose(res.kappa_hat, 1.0 / np.sqrt(c))
    # the theorem-form gauge constant (q(1-r))^-1 matches kappa_hat here
    assert np.isclose(1.0 / (res.q_hat * (1 - r)), res.kappa_hat)


def test_subregularity_identity_inconclusive():
    zeros = np.zeros(10)
    res = subregularity_check(zeros, zeros, zeros, LinearGauge(2.0, 0.5, 0.0))
    assert res.inconclusive and not res.holds


def test_theta_from_linear_gauge_values():
    assert theta_from_linear_gauge(kappa=1.0, eps=0.0, alpha=0.5) == 0.0
    assert np.isclose(theta_from_linear_gauge(np.sqrt(2.0), 0.0, 0.5), np.sqrt(0.5))
    assert np.isclose(theta_from_linear_gauge(1.0, 0.1, 2.0 / 3.0), np.sqrt(0.6))


def test_theta_window_errors():
    with pytest.raises(GaugeWindowError, match="window"):
        theta_from_linear_gauge(kappa=0.5, eps=0.0, alpha=0.5)  # below sqrt(tau)
    with pytest.raises(GaugeWindowError):
        theta_from_linear_gauge(kappa=4.0, eps=0.1, alpha=0.5)  # above sqrt(tau/eps)
    lo, hi = linear_gauge_window(0.5, 0.0)
    assert lo == 1.0 and hi == np.inf


def test_gauge_specs():
    with pytest.raises(GaugeWindowError):
        LinearGauge(kappa=0.1, alpha=0.5, eps=0.0)
    g = TableGauge((0.0, 1.0, 2.0), (0.0, 0.5, 2.0))
    assert g(1.5) == 1.25
    with pytest.raises(InvalidSpecError):
        TableGauge((0.0, 1.0), (0.5, 1.0))  # rho(0) != 0
    with pytest.raises(InvalidSpecError):
        TableGauge((0.0, 1.0, 0.5), (0.0, 1.0, 2.0))


def test_fit_rate_exact_geometric():
    ks = np.arange(20)
    rep = fit_rate(list(zip(ks, 2.0 * 0.5**ks)))
    assert np.isclose(rep.c_hat, 0.5, rtol=1e-12)
    assert np.isclose(rep.beta_hat, 2.0, rtol=1e-9)
    assert rep.classification == "Q-linear"
    assert rep.r_squared > 0.999999


def test_fit_rate_sublinear():
    ks = np.arange(1, 60)
    rep = fit_rate(list(zip(ks, 1.0 / ks)))
    assert rep.classification == "sublinear"


def test_fit_rate_inconclusive_below_floor():
    rep = fit_rate([(k, 1e-12) for k in range(10)])
    assert rep.classification == "inconclusive"
    rep2 = fit_rate([(0, 1.0), (1, 0.5), (2, 0.25)])
    assert rep2.classification == "inconclusive"


def test_fit_rate_shift_equivariance():
    ks = np.arange(15)
    ds = 1.7 * 0.6**ks * np.exp(0.01 * RNG.normal(size=15))
    r1 = fit_rate(list(zip(ks, ds)))
    r2 = fit_rate(list(zip(ks, 100.0 * ds)))
    assert np.isclose(r1.c_hat, r2.c_hat, rtol=1e-12)
    assert np.isclose(100.0 * r1.beta_hat, r2.beta_hat, rtol=1e-9)


def test_fit_rate_uses_longest_window():
    ks = np.arange(30)
    ds = 2.0 * 0.5**ks
    ds[ks >= 20] = 1e-12  # below floor after k=20
    rep = fit_rate(list(zip(ks, ds)))
    assert rep.fit_window == (0, 19)
    assert rep.classification == "Q-linear"


def test_theta_envelope_fraction():
    w = 1.0 * 0.8 ** np.arange(10)
    assert theta_envelope_fraction(w, theta_factor=0.9, slack=0.0) == 1.0
    assert theta_envelope_fraction(w, theta_factor=0.5, slack=0.0) == 0.0
    assert np.isnan(theta_envelope_fraction(np.zeros(5), 0.9, 0.0))


def test_psi2_zero_only_for_equal_displacements():
    x, y = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    assert psi2(x, y, x - 0.5, y - 0.5) == 0.0
