"""Named experiments: problem builders, the run pipeline, and file emission.

Each scenario builds a random map family from the master seed, simulates an
ensemble, and writes four artifacts into the output directory:

* ``residuals.csv``   per-step mean and percentiles of the step length
* ``histogram.csv``   histogram of per-chain step lengths, final 80% of steps
* ``w2_trace.csv``    transport distance to the invariant estimate and the
                      Markov transport discrepancy along the run
* ``report.json``     regularity certification, fitted rates, subregularity
                      check, noise constants, flags and the echoed config

The involution scenario additionally writes ``cesaro.csv``.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from . import rng
from .config import ScenarioConfig
from .diagnostics import (
    LinearGauge,
    fit_rate,
    linear_gauge_window,
    markov_discrepancy,
    subregularity_check,
    theta_envelope_fraction,
    theta_from_linear_gauge,
)
from .engine import Delta, EnsembleConfig, GaussianCloud, boundedness_monitor, invariant_estimate, simulate
from .errors import ConfigError, InvalidSpecError
from .measures import EmpiricalMeasure, wasserstein2
from .operators import AffineSubspace, Hyperplane, QuadraticFn, compose_fb, scale_map
from .random_maps import (
    AdditiveGaussianMap,
    DeterministicRandomMap,
    NoisyAffineDRMap,
    NoisyHyperplaneMap,
    cyclic_noisy_hyperplanes,
    noise_constants,
)
from .regularity import (
    PairSampler,
    certify_afne_expectation,
    contraction_alpha,
    dr_violation_bound,
    fb_violation_bound,
)

NOISE_MC_SAMPLES = 20_000
MAX_NOISE_CONST_PLANES = 8
ENVELOPE_FLOOR = 1e-6
ENVELOPE_SLACK = 1.2


def _fmt(x) -> str:
    return format(float(x), ".17g")


def write_csv(path: str, header: List[str], rows) -> None:
    """RFC-4180 output: CRLF line endings, header row, 17 significant digits."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\r\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\r\n")


def detect_plateau(
    mean_residual: np.ndarray, ma_window: int = 20, look_back: int = 50, tol: float = 0.01
) -> Tuple[Optional[int], Optional[float]]:
    """First step where the 20-step moving average moved by <1% over 50 steps.

    Returns (step index k, plateau level = median residual from there on), or
    (None, None) when no plateau is reached.
    """
    r = np.asarray(mean_residual, dtype=np.float64)
    if r.size < ma_window + look_back:
        return None, None
    ma = np.convolve(r, np.ones(ma_window) / ma_window, mode="valid")
    for i in range(look_back, ma.size):
        past = ma[i - look_back]
        if past > 0 and abs(ma[i] - past) < tol * past:
            k = i + ma_window  # residual index (1-based step count)
            return k, float(np.median(r[k - 1 :]))
    return None, None


# --- problem construction -----------------------------------------------------


def _problem_gaussians(seed: int, slot: int, count: int) -> np.ndarray:
    words = rng.draw_words(seed, rng.PROBLEM, 0, slot, rng.gaussian_words_needed(count))
    return rng.gaussians_from_words(words)[:count]


def _random_system(seed: int, m: int, n: int):
    """Random consistent system with unit row normals: rows, rhs, solution."""
    rows = np.empty((m, n))
    rhs = np.empty(m)
    for j in range(m):
        g = _problem_gaussians(seed, j, n + 1)
        rows[j] = g[:n]
        rhs[j] = g[n]
    norms = np.linalg.norm(rows, axis=1)
    rows /= norms[:, None]
    rhs /= norms
    xbar = np.linalg.lstsq(rows, rhs, rcond=None)[0]
    return rows, rhs, xbar


def _unit_offset(seed: int, slot: int, n: int) -> np.ndarray:
    g = _problem_gaussians(seed, slot, n)
    return g / np.linalg.norm(g)


@dataclass
class ScenarioSetup:
    rmap: object
    default_initial: object
    cert_alpha: float
    cert_center: np.ndarray
    eps_bound: Optional[float]
    meta: dict
    planes: Optional[list] = None  # NoisyHyperplaneMap components, for noise constants


def build_scenario(cfg: ScenarioConfig) -> ScenarioSetup:
    if cfg.scenario == "fig1_cyclic":
        rows, rhs, xbar = _random_system(cfg.seed, cfg.m, cfg.n)
        rmap = cyclic_noisy_hyperplanes(rows, rhs, cfg.sigma_dir, cfg.sigma_off, anchor=xbar)
        alpha = cfg.m / (cfg.m + 1.0)  # composition of m firmly nonexpansive projectors
        return ScenarioSetup(
            rmap=rmap,
            default_initial=Delta(tuple(np.zeros(cfg.n))),
            cert_alpha=alpha,
            cert_center=xbar,
            eps_bound=None,
            meta={
                "kind": "cyclic projections onto perturbed hyperplanes",
                "m": cfg.m,
                "n": cfg.n,
                "anchor_norm": float(np.linalg.norm(xbar)),
                "noise_scale": cfg.sigma_off * np.sqrt(cfg.m),
            },
            planes=list(rmap.components),
        )

    if cfg.scenario == "noisy_hyperplane":
        rows, rhs, xbar = _random_system(cfg.seed, cfg.m, cfg.n)
        if cfg.m == 1:
            rmap = NoisyHyperplaneMap(
                Hyperplane(rows[0], rhs[0]), cfg.sigma_dir, cfg.sigma_off, anchor=xbar
            )
            planes = [rmap]
        else:
            rmap = cyclic_noisy_hyperplanes(rows, rhs, cfg.sigma_dir, cfg.sigma_off, anchor=xbar)
            planes = list(rmap.components)
        start = xbar + _unit_offset(cfg.seed, cfg.m, cfg.n)
        return ScenarioSetup(
            rmap=rmap,
            default_initial=Delta(tuple(start)),
            cert_alpha=cfg.m / (cfg.m + 1.0),
            cert_center=xbar,
            eps_bound=None,
            meta={"kind": "perturbed hyperplane projections", "m": cfg.m, "n": cfg.n},
            planes=planes,
        )

    if cfg.scenario == "sgd_strongly_convex":
        n = cfg.n
        gmat = _problem_gaussians(cfg.seed, 0, n * n).reshape(n, n)
        v = np.linalg.qr(gmat)[0]
        eigs = np.linspace(1.0, 3.0, n)
        q = v @ np.diag(eigs) @ v.T
        c = _problem_gaussians(cfg.seed, 1, n)
        f = QuadraticFn(q, c)
        t = cfg.step_t if cfg.step_t is not None else abs(f.tau_hypo) / f.lipschitz**2
        rmap = AdditiveGaussianMap(compose_fb(f, None, t), scale=t * cfg.sigma_off)
        x_star = np.linalg.solve(f.Q, -f.c)
        start = x_star + 2.0 * _unit_offset(cfg.seed, 2, n)
        bound = fb_violation_bound(tau_f=f.tau_hypo, tau_g=0.0, L=f.lipschitz, t=t)
        r_step = float(max(abs(1.0 - t * eigs[0]), abs(1.0 - t * eigs[-1])))
        return ScenarioSetup(
            rmap=rmap,
            default_initial=Delta(tuple(start)),
            cert_alpha=2.0 / 3.0,
            cert_center=x_star,
            eps_bound=bound,
            meta={
                "kind": "stochastic gradient descent on a strongly convex quadratic",
                "n": n,
                "step_t": t,
                "tau_f": f.tau_hypo,
                "lipschitz": f.lipschitz,
                "fb_violation_bound": bound,
                "deterministic_step_ratio": r_step,
            },
        )

    if cfg.scenario == "stochastic_dr_affine":
        m, n = cfg.m, cfg.n
        if 2 * m >= n:
            raise ConfigError("stochastic_dr_affine needs 2*m < n so the subspaces intersect", field="m")
        a1 = np.vstack([_problem_gaussians(cfg.seed, j, n) for j in range(m)])
        a2 = np.vstack([_problem_gaussians(cfg.seed, m + j, n) for j in range(m)])
        b1 = _problem_gaussians(cfg.seed, 2 * m, m)
        b2 = _problem_gaussians(cfg.seed, 2 * m + 1, m)
        sub1 = AffineSubspace(a1, b1)
        sub2 = AffineSubspace(a2, b2)
        rmap = NoisyAffineDRMap(sub1, sub2, cfg.sigma_off)
        x_feas = np.linalg.lstsq(np.vstack([a1, a2]), np.concatenate([b1, b2]), rcond=None)[0]
        return ScenarioSetup(
            rmap=rmap,
            default_initial=Delta(tuple(np.zeros(n))),
            cert_alpha=0.5,
            cert_center=x_feas,
            eps_bound=dr_violation_bound(0.0, 0.0),
            meta={"kind": "Douglas-Rachford on two affine subspaces with offset noise", "m": m, "n": n},
        )

    if cfg.scenario == "involution":
        rmap = DeterministicRandomMap(scale_map(cfg.n, -1.0))
        return ScenarioSetup(
            rmap=rmap,
            default_initial=Delta(tuple(np.ones(cfg.n))),
            cert_alpha=0.5,
            cert_center=np.zeros(cfg.n),
            eps_bound=None,
            meta={"kind": "coordinate involution", "n": cfg.n},
        )

    if cfg.scenario == "custom":
        rows = np.array([a for a, _ in cfg.hyperplanes], dtype=np.float64)
        rhs = np.array([b for _, b in cfg.hyperplanes], dtype=np.float64)
        if rows.ndim != 2:
            raise ConfigError("custom hyperplanes must share one dimension", field="hyperplanes")
        rmap = cyclic_noisy_hyperplanes(rows, rhs, cfg.sigma_dir, cfg.sigma_off, anchor=None)
        m = rows.shape[0]
        return ScenarioSetup(
            rmap=rmap,
            default_initial=Delta(tuple(np.zeros(rows.shape[1]))),
            cert_alpha=m / (m + 1.0),
            cert_center=np.zeros(rows.shape[1]),
            eps_bound=None,
            meta={"kind": "user-specified perturbed hyperplanes", "m": m, "n": rows.shape[1]},
            planes=list(rmap.components),
        )

    raise ConfigError(f"unknown scenario {cfg.scenario!r}", field="scenario")


def _initial_from_spec(cfg: ScenarioConfig, setup: ScenarioSetup):
    if cfg.initial is None:
        return setup.default_initial
    if cfg.initial.kind == "delta":
        return Delta(cfg.initial.point)
    return GaussianCloud(cfg.initial.mean, cfg.initial.sigma)


# --- trace computation ---------------------------------------------------------


@dataclass
class TraceBundle:
    steps: List[int]
    w2_to_pi: np.ndarray
    w2_steps: np.ndarray  # between consecutive selected snapshots
    psi: np.ndarray
    ot_floor: float
    psi_at_pi: float


def compute_traces(run, rmap, cfg: ScenarioConfig, pi_hat: EmpiricalMeasure) -> TraceBundle:
    snaps = run.snapshots
    if len(snaps) > cfg.max_trace:
        sel = np.unique(np.linspace(0, len(snaps) - 1, cfg.max_trace).astype(int))
    else:
        sel = np.arange(len(snaps))
    size = min(cfg.w2_sample_cap, run.config.n_chains)
    pi_sub = pi_hat.subsample(size)
    subs = [snaps[i][1].subsample(size) for i in sel]
    steps = [snaps[i][0] for i in sel]

    w2_to_pi = np.array([wasserstein2(s, pi_sub).w2 for s in subs])
    w2_steps = np.array(
        [wasserstein2(subs[i + 1], subs[i]).w2 for i in range(len(subs) - 1)]
    )
    psi = np.array(
        [
            markov_discrepancy(rmap, s, pi_sub, cfg.psi_n_xi, cfg.seed, step_offset=i * cfg.psi_n_xi)
            for i, s in enumerate(subs)
        ]
    )
    # sampling-error scale of the OT estimates: distance between two disjoint
    # halves of the pooled invariant cloud
    half = pi_hat.n // 2
    if half >= 2:
        a = EmpiricalMeasure(pi_hat.support[:half])
        b = EmpiricalMeasure(pi_hat.support[half : 2 * half])
        ot_floor = wasserstein2(a.subsample(size), b.subsample(size)).w2
    else:
        ot_floor = 0.0
    psi_at_pi = markov_discrepancy(
        rmap, pi_sub, pi_sub, cfg.psi_n_xi, cfg.seed, step_offset=(len(subs) + 1) * cfg.psi_n_xi
    )
    return TraceBundle(steps, w2_to_pi, w2_steps, psi, float(ot_floor), float(psi_at_pi))


# --- the pipeline ---------------------------------------------------------------


def run_scenario(cfg: ScenarioConfig, out_dir: Optional[str] = None) -> int:
    """Run one named scenario end to end; returns the process exit code."""
    out = out_dir or cfg.output_dir
    os.makedirs(out, exist_ok=True)
    flags: List[str] = []

    setup = build_scenario(cfg)
    ecfg = EnsembleConfig(
        n_chains=cfg.n_chains,
        n_iters=cfg.n_iters,
        seed=cfg.seed,
        initial=_initial_from_spec(cfg, setup),
        snapshot_every=cfg.snapshot_every,
        burn_in=cfg.burn_in,
    )
    run = simulate(setup.rmap, ecfg, n_workers=cfg.workers)

    # (a) residuals.csv
    ks = np.arange(1, cfg.n_iters + 1)
    write_csv(
        os.path.join(out, "residuals.csv"),
        ["k", "mean_residual", "p10", "p50", "p90"],
        np.column_stack([ks, run.residual_stats]),
    )

    # (b) histogram.csv over the final 80% of iterations
    r0 = int(np.floor(0.2 * cfg.n_iters))
    tail = run.residual_norms[r0:].ravel()
    lo, hi = float(tail.min()), float(tail.max())
    if lo == hi:
        counts, edges = np.array([tail.size]), np.array([lo, hi])
    else:
        counts, edges = np.histogram(tail, bins=40)
    write_csv(
        os.path.join(out, "histogram.csv"),
        ["bin_lo", "bin_hi", "count"],
        zip(edges[:-1], edges[1:], counts),
    )

    # invariant estimate and (c) w2_trace.csv
    pi_hat = invariant_estimate(run)
    traces = compute_traces(run, setup.rmap, cfg, pi_hat)
    write_csv(
        os.path.join(out, "w2_trace.csv"),
        ["k", "w2_to_pi_hat", "psi_hat"],
        zip(traces.steps, traces.w2_to_pi, traces.psi),
    )

    # cesaro.csv for the involution
    if cfg.scenario == "involution":
        _write_cesaro(cfg, run, out)

    # noise constants where the map family has perturbed hyperplanes
    nc_report = None
    r_hat = None
    if setup.planes is not None:
        per_plane = [
            noise_constants(p, NOISE_MC_SAMPLES, cfg.seed)
            for p in setup.planes[:MAX_NOISE_CONST_PLANES]
        ]
        c_min = min(nc.c_hat for nc in per_plane)
        flagged = any(nc.flagged for nc in per_plane)
        nc_report = {
            "per_plane": [nc.as_dict() for nc in per_plane],
            "c_min": c_min,
            "flagged": flagged,
            "planes_evaluated": len(per_plane),
        }
        if flagged:
            flags.append("noise_constants_not_significantly_positive")
        else:
            m_planes = len(setup.planes)
            r_hat = float((1.0 - c_min) ** (m_planes / 2.0))

    # regularity certification
    alpha = cfg.reg_alpha if cfg.reg_alpha is not None else setup.cert_alpha
    if r_hat is not None and cfg.reg_alpha is None:
        alpha = contraction_alpha(r_hat)
    sampler = PairSampler(center=tuple(setup.cert_center), radius=1.0)
    cert = certify_afne_expectation(
        setup.rmap,
        alpha=alpha,
        sampler=sampler,
        n_pairs=cfg.n_pairs,
        n_xi=cfg.n_xi,
        seed=cfg.seed,
        eps_bound=setup.eps_bound,
    )

    # rate fitting
    plateau_k, plateau_level = detect_plateau(run.residual_stats[:, 0])
    if cfg.scenario == "fig1_cyclic":
        cut = plateau_k if plateau_k is not None else cfg.n_iters
        rate = fit_rate(list(zip(ks[: cut - 1], run.residual_stats[: cut - 1, 0])))
    else:
        rate = fit_rate(list(zip(traces.steps, traces.w2_to_pi)))
    rate_w2 = fit_rate(list(zip(traces.steps, traces.w2_to_pi)))

    # subregularity along the trace
    eps_used = min(cert.eps_hat, 0.999)
    lo_w, hi_w = linear_gauge_window(alpha, eps_used)
    kappa_pred = 1.0 / np.sqrt(nc_report["c_min"]) if (nc_report and not nc_report["flagged"]) else 2.0 * lo_w
    gauge = LinearGauge(kappa=float(np.clip(kappa_pred, lo_w, hi_w if np.isfinite(hi_w) else kappa_pred + 1.0)), alpha=alpha, eps=eps_used)
    subreg = subregularity_check(traces.psi[:-1], traces.w2_steps, traces.w2_to_pi[:-1], gauge)
    if subreg.inconclusive:
        flags.append("subregularity_inconclusive")

    # gauge-envelope fraction with the measured kappa fed back into theta
    theta_info = None
    if not subreg.inconclusive and np.isfinite(subreg.kappa_hat):
        kappa_used = float(np.clip(subreg.kappa_hat, lo_w, hi_w))
        theta = theta_from_linear_gauge(kappa_used, eps_used, alpha)
        frac = theta_envelope_fraction(
            traces.w2_to_pi, theta, slack=3.0 * traces.ot_floor
        )
        theta_info = {
            "kappa_used": kappa_used,
            "theta_factor": theta,
            "slack": 3.0 * traces.ot_floor,
            "fraction": frac,
        }

    # geometric envelope against the measured contraction modulus
    envelope = None
    if r_hat is not None:
        dks = np.diff(np.asarray(traces.steps, dtype=np.float64))
        cur = traces.w2_to_pi[:-1]
        nxt = traces.w2_to_pi[1:]
        mask = cur > ENVELOPE_FLOOR
        if np.any(mask):
            ok = nxt[mask] <= (r_hat ** dks[mask]) * cur[mask] * ENVELOPE_SLACK
            envelope = {
                "r_hat": r_hat,
                "fraction": float(np.mean(ok)),
                "floor": ENVELOPE_FLOOR,
                "n_steps": int(mask.sum()),
            }

    bound_rep = boundedness_monitor(run)

    report = {
        "config": cfg.echo(),
        "seed": cfg.seed,
        "scenario_meta": setup.meta,
        "noise_constants": nc_report,
        "regularity": cert.as_dict() | {"alpha_used": alpha},
        "rate": rate.as_dict(),
        "rate_w2": rate_w2.as_dict(),
        "subregularity": subreg.as_dict()
        | {"gauge_kappa": gauge.kappa, "gauge_window": [lo_w, hi_w if np.isfinite(hi_w) else None]},
        "theta_envelope": theta_info,
        "contraction_envelope": envelope,
        "plateau": {
            "detected": plateau_k is not None,
            "index": plateau_k,
            "level": plateau_level,
            "noise_scale": setup.meta.get("noise_scale"),
        },
        "boundedness": {
            "bounded": bound_rep.bounded,
            "m_hat": bound_rep.m_hat,
            "slope": bound_rep.slope,
        },
        "ot_floor": traces.ot_floor,
        "psi_at_pi_hat": traces.psi_at_pi,
        "flags": flags,
    }
    with open(os.path.join(out, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")

    return 4 if flags else 0


def _write_cesaro(cfg: ScenarioConfig, run, out: str) -> None:
    """Masses of the running-average law at the two involution atoms."""
    if cfg.snapshot_every != 1:
        raise InvalidSpecError("involution cesaro output needs snapshot_every=1")
    x0 = np.asarray(run.snapshots[0][1].support[0])
    rows = []
    neg = 0
    pos = 0
    per = run.config.n_chains
    for k in range(1, cfg.n_iters + 1):
        snap = run.snapshots[k][1].support
        neg += int(np.sum(np.all(snap == -x0, axis=1)))
        pos += int(np.sum(np.all(snap == x0, axis=1)))
        total = k * per
        rows.append((k, neg / total, pos / total))
    write_csv(os.path.join(out, "cesaro.csv"), ["k", "mass_minus", "mass_plus"], rows)
