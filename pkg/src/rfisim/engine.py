"""Ensemble simulation of random function iterations.

An ensemble of independent chains approximates the law of the iterate at
every step by a uniform point cloud.  Chains are advanced in vectorized
blocks; the random words for chain c at step k are addressed, not drawn in
sequence, so results are bitwise independent of how chains are split
across workers.  All statistical reductions happen on merged, canonically
ordered arrays for the same reason.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Tuple, Union

import numpy as np

from . import rng
from .errors import DimensionMismatchError, InvalidSpecError, NumericBlowupError
from .measures import EmpiricalMeasure
from .random_maps import RandomMap


@dataclass(frozen=True)
class Delta:
    point: tuple

    def build(self, n_chains: int, dim: int, seed: int) -> np.ndarray:
        p = np.asarray(self.point, dtype=np.float64).reshape(-1)
        if p.shape[0] != dim:
            raise DimensionMismatchError(dim, p.shape[0], "initial point")
        return np.tile(p, (n_chains, 1))


@dataclass(frozen=True)
class GaussianCloud:
    mean: tuple
    sigma: float

    def build(self, n_chains: int, dim: int, seed: int) -> np.ndarray:
        m = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        if m.shape[0] != dim:
            raise DimensionMismatchError(dim, m.shape[0], "initial mean")
        nw = rng.gaussian_words_needed(dim)
        words = rng.draw_words_batch(seed, rng.INIT, 0, 0, n_chains, nw)
        g = rng.gaussians_from_words(words)[:, :dim]
        return m + self.sigma * g


@dataclass(frozen=True)
class ExplicitCloud:
    points: tuple

    def build(self, n_chains: int, dim: int, seed: int) -> np.ndarray:
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.shape != (n_chains, dim):
            raise InvalidSpecError(
                f"explicit cloud must have shape ({n_chains}, {dim}), got {pts.shape}"
            )
        return pts.copy()


InitialCloud = Union[Delta, GaussianCloud, ExplicitCloud]


@dataclass(frozen=True)
class EnsembleConfig:
    n_chains: int
    n_iters: int
    seed: int
    initial: InitialCloud
    snapshot_every: int = 1
    burn_in: int = 0

    def __post_init__(self):
        if self.n_chains < 1:
            raise InvalidSpecError("n_chains must be at least 1")
        if self.n_iters < 1:
            raise InvalidSpecError("n_iters must be at least 1")
        if self.snapshot_every < 1:
            raise InvalidSpecError("snapshot_every must be at least 1")
        if not 0 <= self.burn_in < self.n_iters:
            raise InvalidSpecError("burn_in must satisfy 0 <= burn_in < n_iters")


@dataclass
class EnsembleRun:
    """One simulated ensemble: snapshot clouds plus per-step statistics."""

    config: EnsembleConfig
    snapshots: List[Tuple[int, EmpiricalMeasure]]
    residual_stats: np.ndarray  # rows k=1..n_iters: mean, p10, p50, p90 of |X_k - X_{k-1}|
    residual_norms: np.ndarray  # (n_iters, n_chains)
    expectation_trace: np.ndarray  # (n_iters + 1,) mean of |X_k|
    final_cloud: EmpiricalMeasure

    def snapshot_steps(self) -> List[int]:
        return [k for k, _ in self.snapshots]


def _snapshot_steps(cfg: EnsembleConfig) -> List[int]:
    return [k for k in range(cfg.n_iters + 1) if k % cfg.snapshot_every == 0]


def simulate(rmap: RandomMap, cfg: EnsembleConfig, n_workers: int = 1) -> EnsembleRun:
    """Run the iteration X_{k+1} = T_{xi_k} X_k over an ensemble of chains.

    Chain c at step k consumes exactly the draw addressed by
    ``(cfg.seed, ENGINE, step=k, slot=c)``; identical seeds give bitwise
    identical runs for any ``n_workers``.
    """
    dim = rmap.dim
    x0 = cfg.initial.build(cfg.n_chains, dim, cfg.seed)
    snap_steps = _snapshot_steps(cfg)
    snap_index = {k: i for i, k in enumerate(snap_steps)}

    snaps = np.empty((len(snap_steps), cfg.n_chains, dim))
    residuals = np.empty((cfg.n_iters, cfg.n_chains))
    norms = np.empty((cfg.n_iters + 1, cfg.n_chains))
    final = np.empty((cfg.n_chains, dim))

    def run_block(c0: int, c1: int):
        x = x0[c0:c1]
        norms[0, c0:c1] = np.linalg.norm(x, axis=1)
        if 0 in snap_index:
            snaps[snap_index[0], c0:c1] = x
        with np.errstate(over="ignore", invalid="ignore"):
            for k in range(cfg.n_iters):
                words = rng.draw_words_batch(
                    cfg.seed, rng.ENGINE, k, c0, c1 - c0, rmap.words_per_draw
                )
                x_next = rmap.transform(words, x)
                if not np.all(np.isfinite(x_next)):
                    bad = int(np.nonzero(~np.isfinite(x_next).all(axis=1))[0][0])
                    raise NumericBlowupError(c0 + bad, k + 1)
                residuals[k, c0:c1] = np.linalg.norm(x_next - x, axis=1)
                norms[k + 1, c0:c1] = np.linalg.norm(x_next, axis=1)
                x = x_next
                if (k + 1) in snap_index:
                    snaps[snap_index[k + 1], c0:c1] = x
        final[c0:c1] = x

    if n_workers <= 1 or cfg.n_chains == 1:
        run_block(0, cfg.n_chains)
    else:
        n_workers = min(n_workers, cfg.n_chains)
        bounds = np.linspace(0, cfg.n_chains, n_workers + 1).astype(int)
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            futures = [
                pool.submit(run_block, int(bounds[i]), int(bounds[i + 1]))
                for i in range(n_workers)
                if bounds[i] < bounds[i + 1]
            ]
            for f in futures:
                f.result()

    stats = np.column_stack(
        [residuals.mean(axis=1), np.percentile(residuals, [10, 50, 90], axis=1).T]
    )
    snapshots = [
        (k, EmpiricalMeasure(snaps[i].copy())) for i, k in enumerate(snap_steps)
    ]
    return EnsembleRun(
        config=cfg,
        snapshots=snapshots,
        residual_stats=stats,
        residual_norms=residuals,
        expectation_trace=norms.mean(axis=1),
        final_cloud=EmpiricalMeasure(final),
    )


def cesaro(run: EnsembleRun) -> List[Tuple[int, EmpiricalMeasure]]:
    """Running averages of the iterate laws: the k-th entry pools the clouds
    of steps 1..k with equal weight.

    Requires snapshots at every step.
    """
    if run.config.snapshot_every != 1:
        raise InvalidSpecError("cesaro averages need snapshot_every=1")
    n_chains = run.config.n_chains
    clouds = [m.support for k, m in run.snapshots if k >= 1]
    pooled = np.concatenate(clouds, axis=0)
    out = []
    for k in range(1, len(clouds) + 1):
        out.append((k, EmpiricalMeasure(pooled[: k * n_chains])))
    return out


@dataclass
class BoundednessReport:
    bounded: bool
    m_hat: float
    slope: float


def boundedness_monitor(run: EnsembleRun) -> BoundednessReport:
    """Check the finite-expectation premise behind invariant-measure existence.

    The post-burn-in trace of E|X_k| must not drift upward: either its
    least-squares slope is nonpositive, or its maximum stays within 5% of
    its median (a noisy plateau).
    """
    trace = run.expectation_trace[run.config.burn_in :]
    ks = np.arange(trace.size, dtype=np.float64)
    slope = float(np.polyfit(ks, trace, 1)[0]) if trace.size > 1 else 0.0
    bounded = slope <= 0.0 or float(trace.max()) <= 1.05 * float(np.median(trace))
    return BoundednessReport(bounded=bool(bounded), m_hat=float(run.expectation_trace.max()), slope=slope)


def invariant_estimate(run: EnsembleRun, tail_fraction: float = 0.2) -> EmpiricalMeasure:
    """Estimate the invariant cloud by pooling the late snapshots.

    Pools the last ceil(tail_fraction * m) of the m post-burn-in snapshots.
    This is an estimator justified by convergence in distribution, not
    ground truth.
    """
    tail = [m for k, m in run.snapshots if k > run.config.burn_in]
    if not tail:
        tail = [run.final_cloud]
    n_keep = max(1, int(np.ceil(len(tail) * tail_fraction)))
    keep = tail[-n_keep:]
    return EmpiricalMeasure(np.concatenate([m.support for m in keep], axis=0))


def coupled_distance_trace(
    rmap: RandomMap, cfg: EnsembleConfig, other_initial: InitialCloud, n_workers: int = 1
) -> np.ndarray:
    """Per-chain distances |X_k - Y_k| of two ensembles driven by shared draws.

    Both ensembles consume the same addressed index draws, differing only in
    their initial clouds; rows are steps k=0..n_iters, columns chains.
    """
    dim = rmap.dim
    x = cfg.initial.build(cfg.n_chains, dim, cfg.seed)
    y = other_initial.build(cfg.n_chains, dim, cfg.seed)
    dists = np.empty((cfg.n_iters + 1, cfg.n_chains))
    dists[0] = np.linalg.norm(x - y, axis=1)
    for k in range(cfg.n_iters):
        words = rng.draw_words_batch(cfg.seed, rng.ENGINE, k, 0, cfg.n_chains, rmap.words_per_draw)
        x = rmap.transform(words, x)
        y = rmap.transform(words, y)
        dists[k + 1] = np.linalg.norm(x - y, axis=1)
    return dists
