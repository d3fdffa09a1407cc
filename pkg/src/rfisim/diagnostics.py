"""Measure-level convergence diagnostics.

Computes the coupling-averaged transport discrepancy of a random map
against an estimated invariant cloud, checks the subregularity inequality
chain along a run, and fits geometric rates to distance traces.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from . import rng
from .errors import GaugeWindowError, InvalidSpecError
from .measures import EmpiricalMeasure, wasserstein2
from .random_maps import RandomMap
from .regularity import psi2

_FLOOR = 1e-9


def linear_gauge_window(alpha: float, eps: float) -> Tuple[float, float]:
    """Admissible constants for a linear subregularity gauge at (alpha, eps)."""
    if not 0.0 < alpha < 1.0:
        raise InvalidSpecError(f"alpha must lie in (0,1), got {alpha}")
    if eps < 0.0:
        raise InvalidSpecError(f"violation must be nonnegative, got {eps}")
    tau = (1.0 - alpha) / alpha
    lo = np.sqrt(tau / (1.0 + eps))
    hi = np.inf if eps == 0.0 else np.sqrt(tau / eps)
    return float(lo), float(hi)


def theta_from_linear_gauge(kappa: float, eps: float, alpha: float) -> float:
    """Per-step contraction factor sqrt(1 + eps - (1-alpha)/(alpha kappa^2)).

    kappa must lie in the admissible window; at the lower edge the factor is
    0, at the upper edge it reaches 1.
    """
    lo, hi = linear_gauge_window(alpha, eps)
    if not lo <= kappa <= hi:
        raise GaugeWindowError(kappa, lo, hi)
    tau = (1.0 - alpha) / alpha
    return float(np.sqrt(max(1.0 + eps - tau / kappa**2, 0.0)))


@dataclass(frozen=True)
class LinearGauge:
    """rho(t) = kappa * t, admissible for the certified (alpha, eps)."""

    kappa: float
    alpha: float
    eps: float = 0.0

    def __post_init__(self):
        if self.kappa <= 0:
            raise InvalidSpecError("gauge constant must be positive")
        lo, hi = linear_gauge_window(self.alpha, self.eps)
        if not lo <= self.kappa <= hi:
            raise GaugeWindowError(self.kappa, lo, hi)

    def window(self) -> Tuple[float, float]:
        return linear_gauge_window(self.alpha, self.eps)

    def theta_factor(self) -> float:
        return theta_from_linear_gauge(self.kappa, self.eps, self.alpha)

    def __call__(self, t):
        return self.kappa * np.asarray(t, dtype=np.float64)


@dataclass(frozen=True)
class TableGauge:
    """Monotone interpolation through given (t, rho(t)) nodes."""

    ts: tuple
    rhos: tuple

    def __post_init__(self):
        ts = np.asarray(self.ts, dtype=np.float64)
        rhos = np.asarray(self.rhos, dtype=np.float64)
        if ts.size < 2 or ts.size != rhos.size:
            raise InvalidSpecError("table gauge needs matching t and rho nodes (>= 2)")
        if np.any(np.diff(ts) <= 0) or np.any(np.diff(rhos) <= 0):
            raise InvalidSpecError("table gauge nodes must be strictly increasing")
        if ts[0] != 0.0 or rhos[0] != 0.0:
            raise InvalidSpecError("a gauge satisfies rho(0) = 0; first node must be the origin")

    def __call__(self, t):
        return np.interp(np.asarray(t, dtype=np.float64), self.ts, self.rhos)


GaugeSpec = Union[LinearGauge, TableGauge]


@dataclass
class SubregularityResult:
    holds: bool
    q_hat: float
    kappa_hat: float
    n_used: int
    inconclusive: bool = False

    def as_dict(self):
        return {
            "holds": self.holds,
            "q_hat": self.q_hat,
            "kappa_hat": self.kappa_hat,
            "n_used": self.n_used,
            "inconclusive": self.inconclusive,
        }


def markov_discrepancy(
    rmap: RandomMap,
    mu: EmpiricalMeasure,
    pi_hat: EmpiricalMeasure,
    n_xi: int,
    seed: int,
    step_offset: int = 0,
) -> float:
    """Coupling-averaged expected transport discrepancy of mu against pi_hat.

    Couples mu to pi_hat optimally in W2, then averages
    psi2(x, y, Phi(x,xi), Phi(y,xi)) over shared draws along the coupling.
    pi_hat stands in for the nearest invariant measure; zero at an exactly
    invariant cloud of a deterministic map.
    """
    if n_xi < 1:
        raise InvalidSpecError("n_xi must be at least 1")
    res = wasserstein2(mu, pi_hat)
    rows, cols, mass = res.coupling.pairs()
    x = mu.support[rows]
    y = pi_hat.support[cols]
    n_pairs = x.shape[0]
    acc = np.zeros(n_pairs)
    for t in range(n_xi):
        words = rng.draw_words_batch(
            seed, rng.PSI_MC, step_offset + t, 0, n_pairs, rmap.words_per_draw
        )
        fx = rmap.transform(words, x)
        fy = rmap.transform(words, y)
        acc += psi2(x, y, fx, fy)
    per_pair = acc / n_xi
    return float(np.sqrt(max(float(mass @ per_pair), 0.0)))


def subregularity_check(
    psi_values: Sequence[float],
    w2_steps: Sequence[float],
    w2_to_inv: Sequence[float],
    gauge: GaugeSpec,
    floor: float = _FLOOR,
) -> SubregularityResult:
    """Empirical check of the two subregularity inequalities along one run.

    q_hat is the worst observed ratio in Psi(mu_k) >= q W2(mu_{k+1}, mu_k);
    kappa_hat the worst in W2(mu_k, pi_hat) <= kappa Psi(mu_k).  Steps below
    the numerical floor are excluded; with a linear gauge the check also
    requires kappa_hat to be compatible with the gauge's admissible window.
    """
    psi_values = np.asarray(psi_values, dtype=np.float64)
    w2_steps = np.asarray(w2_steps, dtype=np.float64)
    w2_to_inv = np.asarray(w2_to_inv, dtype=np.float64)
    if not (psi_values.shape == w2_steps.shape == w2_to_inv.shape):
        raise InvalidSpecError("psi_values, w2_steps and w2_to_inv must be aligned")

    mask_q = w2_steps > floor
    mask_k = psi_values > floor
    if not np.any(mask_q) or not np.any(mask_k):
        return SubregularityResult(
            holds=False, q_hat=float("nan"), kappa_hat=float("nan"), n_used=0, inconclusive=True
        )
    q_hat = float(np.min(psi_values[mask_q] / w2_steps[mask_q]))
    kappa_hat = float(np.max(w2_to_inv[mask_k] / psi_values[mask_k]))
    holds = np.isfinite(kappa_hat)
    if holds and isinstance(gauge, LinearGauge):
        lo, hi = gauge.window()
        # subregularity constants are upward-closed, so only the upper edge binds
        holds = max(kappa_hat, lo) <= hi
    return SubregularityResult(
        holds=bool(holds),
        q_hat=q_hat,
        kappa_hat=kappa_hat,
        n_used=int(np.sum(mask_q & mask_k)),
    )


@dataclass
class RateReport:
    """Fitted geometric decay of a distance trace."""

    c_hat: float
    beta_hat: float
    fit_window: Tuple[int, int]
    r_squared: float
    classification: str  # Q-linear | R-linear | sublinear | none | inconclusive

    def as_dict(self):
        return {
            "c_hat": self.c_hat,
            "beta_hat": self.beta_hat,
            "fit_window": list(self.fit_window),
            "r_squared": self.r_squared,
            "classification": self.classification,
        }


_Q_SLACK = 1.1  # per-step ratio slack for Q-linearity
_ENV_SLACK = 1.15  # envelope slack for R-linearity


def fit_rate(dists: Sequence[Tuple[int, float]], floor: float = _FLOOR) -> RateReport:
    """Least-squares geometric fit log d_k ~ k on the longest window above the floor.

    Q-linear needs every per-step ratio within slack of the fitted factor;
    R-linear only the envelope d_k <= beta c^k within slack; a decreasing
    trace that fits neither is sublinear.
    """
    pairs = [(int(k), float(d)) for k, d in dists if np.isfinite(d)]
    ks = np.array([k for k, _ in pairs], dtype=np.float64)
    vals = np.array([d for _, d in pairs], dtype=np.float64)

    above = vals > floor
    best_lo = best_hi = -1
    i = 0
    while i < above.size:
        if above[i]:
            j = i
            while j + 1 < above.size and above[j + 1]:
                j += 1
            if j - i > best_hi - best_lo:
                best_lo, best_hi = i, j
            i = j + 1
        else:
            i += 1
    n_win = best_hi - best_lo + 1 if best_lo >= 0 else 0
    if n_win < 5:
        return RateReport(float("nan"), float("nan"), (0, 0), float("nan"), "inconclusive")

    kw = ks[best_lo : best_hi + 1]
    dw = vals[best_lo : best_hi + 1]
    logd = np.log(dw)
    slope, intercept = np.polyfit(kw, logd, 1)
    pred = slope * kw + intercept
    ss_res = float(np.sum((logd - pred) ** 2))
    ss_tot = float(np.sum((logd - logd.mean()) ** 2))
    r_squared = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    c_hat = float(np.exp(slope))
    beta_hat = float(np.exp(intercept))

    classification = "none"
    if 0.0 < c_hat < 1.0:
        dk = np.diff(kw)
        ratios = dw[1:] / dw[:-1]
        env_ok = bool(np.all(dw <= beta_hat * (c_hat**kw) * _ENV_SLACK))
        q_ok = env_ok and bool(np.all(ratios <= (c_hat**dk) * _Q_SLACK))
        if q_ok:
            classification = "Q-linear"
        elif env_ok:
            classification = "R-linear"
        elif dw[-1] < dw[0]:
            classification = "sublinear"
    elif dw[-1] < dw[0]:
        classification = "sublinear"
    return RateReport(c_hat, beta_hat, (int(kw[0]), int(kw[-1])), r_squared, classification)


def theta_envelope_fraction(
    w2_to_inv: Sequence[float], theta_factor: float, slack: float, floor: float = _FLOOR
) -> float:
    """Fraction of steps satisfying W2(mu_{k+1}, pi) <= theta(W2(mu_k, pi)) + slack.

    Only steps whose current distance exceeds the floor are counted.
    """
    w = np.asarray(w2_to_inv, dtype=np.float64)
    if w.size < 2:
        return float("nan")
    cur, nxt = w[:-1], w[1:]
    mask = cur > floor
    if not np.any(mask):
        return float("nan")
    ok = nxt[mask] <= theta_factor * cur[mask] + slack
    return float(np.mean(ok))
