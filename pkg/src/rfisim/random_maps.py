"""Random self-mappings: index/noise distributions plus the update rule.

A :class:`RandomMap` couples an index distribution with a builder that
turns one realized draw into a deterministic map.  Each family also
implements a vectorized ``transform`` used by the ensemble engine: given
the raw words of a batch of draws and a batch of states, it advances every
state under its own draw in one shot.  Both paths consume the identical
word stream, so a single ``sample_index``/``apply`` exactly reproduces any
chain/step of a simulated ensemble.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from . import rng
from .errors import DimensionMismatchError, InvalidSpecError
from .operators import (
    AffineSubspace,
    DeterministicMap,
    Hyperplane,
    as_point,
    compose_cyclic,
)

_WEIGHT_TOL = 1e-12


# --- index distribution descriptors -----------------------------------------


@dataclass(frozen=True)
class DeterministicDist:
    """Point mass on a single map."""


@dataclass(frozen=True)
class CategoricalDist:
    weights: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if np.any(w < 0):
            raise InvalidSpecError("categorical weights must be nonnegative")
        if abs(w.sum() - 1.0) > _WEIGHT_TOL:
            raise InvalidSpecError(f"categorical weights must sum to 1 within {_WEIGHT_TOL:g}")


@dataclass(frozen=True)
class GaussianNoiseDist:
    """Gaussian perturbation of a hyperplane: normal direction and offset."""

    sigma_dir: float
    sigma_off: float

    def __post_init__(self):
        if self.sigma_dir < 0 or self.sigma_off < 0:
            raise InvalidSpecError("noise scales must be nonnegative")


@dataclass(frozen=True)
class ProductDist:
    components: tuple


@dataclass
class IndexSample:
    """One realized draw: a categorical index and/or realized noise."""

    draw_id: int
    index: Optional[int] = None
    xi: Optional[np.ndarray] = None
    zeta: Optional[float] = None
    parts: Optional[List["IndexSample"]] = None


@dataclass
class RngState:
    """Per-chain cursor into the addressed random stream."""

    seed: int
    component: int = rng.ENGINE
    chain: int = 0
    draw_id: int = 0


# --- random map families -----------------------------------------------------


class RandomMap(ABC):
    """An index distribution together with the update rule Phi(x, i) = T_i x."""

    dim: int
    words_per_draw: int

    @property
    @abstractmethod
    def index_dist(self):
        """Descriptor of the underlying index distribution."""

    @abstractmethod
    def decode(self, words: np.ndarray, draw_id: int = 0) -> IndexSample:
        """Turn the raw words of one draw into a realized sample."""

    @abstractmethod
    def realize(self, sample: IndexSample) -> DeterministicMap:
        """The builder: realized sample -> deterministic map."""

    def transform(self, words: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Vectorized batch update; row b of ``x`` moves under draw ``words[b]``."""
        out = np.empty_like(x)
        for b in range(x.shape[0]):
            out[b] = self.realize(self.decode(words[b]))(x[b])
        return out


class DeterministicRandomMap(RandomMap):
    """Degenerate distribution: always the same map."""

    def __init__(self, mapping: DeterministicMap):
        self.mapping = mapping
        self.dim = mapping.dim
        self.words_per_draw = 0

    @property
    def index_dist(self):
        return DeterministicDist()

    def decode(self, words, draw_id: int = 0) -> IndexSample:
        return IndexSample(draw_id=draw_id, index=0)

    def realize(self, sample: IndexSample) -> DeterministicMap:
        return self.mapping

    def transform(self, words, x):
        return self.mapping(x)


class CategoricalRandomMap(RandomMap):
    """Finite family of maps selected with fixed probabilities."""

    def __init__(self, maps: Sequence[DeterministicMap], weights: Sequence[float]):
        maps = list(maps)
        if not maps:
            raise InvalidSpecError("categorical map needs at least one entry")
        if len(maps) != len(weights):
            raise InvalidSpecError("one weight per map required")
        self._dist = CategoricalDist(tuple(float(w) for w in weights))
        self.maps = maps
        self.dim = maps[0].dim
        for m in maps[1:]:
            if m.dim != self.dim:
                raise DimensionMismatchError(self.dim, m.dim, "categorical entry")
        self._cum = np.cumsum(np.asarray(weights, dtype=np.float64))
        self.words_per_draw = 1

    @property
    def index_dist(self):
        return self._dist

    def _indices(self, words: np.ndarray) -> np.ndarray:
        u = rng.uniforms_from_words(words)
        return np.minimum(np.searchsorted(self._cum, u, side="left"), len(self.maps) - 1)

    def decode(self, words, draw_id: int = 0) -> IndexSample:
        idx = int(self._indices(np.atleast_1d(words[..., 0]))[0])
        return IndexSample(draw_id=draw_id, index=idx)

    def realize(self, sample: IndexSample) -> DeterministicMap:
        return self.maps[sample.index]

    def transform(self, words, x):
        idx = self._indices(words[:, 0])
        out = np.empty_like(x)
        for i, mapping in enumerate(self.maps):
            mask = idx == i
            if np.any(mask):
                out[mask] = mapping(x[mask])
        return out


class NoisyHyperplaneMap(RandomMap):
    """Exact projector onto a randomly perturbed hyperplane.

    The realized map for noise (xi, zeta) sends x to the projection onto
    ``{y : <a + xi, y - anchor> = zeta}``; the anchor is a fixed point of the
    unperturbed hyperplane.  Noise normals are clipped at 6 sigma so that
    ``1 / ||a + xi||^2`` stays bounded.
    """

    def __init__(self, plane: Hyperplane, sigma_dir: float, sigma_off: float, anchor=None):
        self.plane = plane
        self.dim = plane.dim
        self._dist = GaussianNoiseDist(float(sigma_dir), float(sigma_off))
        if anchor is None:
            anchor = plane.anchor()
        self.anchor = as_point(anchor, self.dim)
        if abs(self.anchor @ plane.a - plane.b) > 1e-8 * (1.0 + abs(plane.b)):
            raise InvalidSpecError("anchor must lie on the unperturbed hyperplane")
        self._n_gauss = self.dim + 1
        self.words_per_draw = rng.gaussian_words_needed(self._n_gauss)

    @property
    def index_dist(self):
        return self._dist

    def _noise(self, words: np.ndarray):
        g = rng.bounded_gaussians_from_words(words[..., : self.words_per_draw])
        xi = self._dist.sigma_dir * g[..., : self.dim]
        zeta = self._dist.sigma_off * g[..., self.dim]
        return xi, zeta

    def decode(self, words, draw_id: int = 0) -> IndexSample:
        xi, zeta = self._noise(words)
        return IndexSample(draw_id=draw_id, xi=xi, zeta=float(zeta))

    def realize(self, sample: IndexSample) -> DeterministicMap:
        a_pert = self.plane.a + sample.xi
        zeta = sample.zeta
        anchor = self.anchor
        norm2 = float(a_pert @ a_pert)

        def proj(x):
            t = ((x - anchor) @ a_pert - zeta) / norm2
            return x - np.multiply.outer(t, a_pert)

        return DeterministicMap(self.dim, proj, "noisy-hyperplane")

    def transform(self, words, x):
        xi, zeta = self._noise(words)
        a_pert = self.plane.a + xi
        norm2 = np.einsum("bi,bi->b", a_pert, a_pert)
        t = (np.einsum("bi,bi->b", a_pert, x - self.anchor) - zeta) / norm2
        return x - t[:, None] * a_pert


class ProductRandomMap(RandomMap):
    """Independent component draws whose realized maps compose in list order."""

    def __init__(self, components: Sequence[RandomMap]):
        components = list(components)
        if not components:
            raise InvalidSpecError("product needs at least one component")
        self.components = components
        self.dim = components[0].dim
        for c in components[1:]:
            if c.dim != self.dim:
                raise DimensionMismatchError(self.dim, c.dim, "product component")
        self._offsets = np.cumsum([0] + [c.words_per_draw for c in components])
        self.words_per_draw = int(self._offsets[-1])

    @property
    def index_dist(self):
        return ProductDist(tuple(c.index_dist for c in self.components))

    def decode(self, words, draw_id: int = 0) -> IndexSample:
        parts = [
            c.decode(words[..., self._offsets[i] : self._offsets[i + 1]], draw_id)
            for i, c in enumerate(self.components)
        ]
        return IndexSample(draw_id=draw_id, parts=parts)

    def realize(self, sample: IndexSample) -> DeterministicMap:
        return compose_cyclic([c.realize(p) for c, p in zip(self.components, sample.parts)])

    def transform(self, words, x):
        for i, c in enumerate(self.components):
            x = c.transform(words[:, self._offsets[i] : self._offsets[i + 1]], x)
        return x


class AdditiveGaussianMap(RandomMap):
    """T_xi x = base(x) + scale * xi with standard normal xi."""

    def __init__(self, base: DeterministicMap, scale: float):
        self.base = base
        self.dim = base.dim
        self.scale = float(scale)
        self._dist = GaussianNoiseDist(abs(self.scale), 0.0)
        self.words_per_draw = rng.gaussian_words_needed(self.dim)

    @property
    def index_dist(self):
        return self._dist

    def _noise(self, words):
        g = rng.gaussians_from_words(words[..., : self.words_per_draw])
        return self.scale * g[..., : self.dim]

    def decode(self, words, draw_id: int = 0) -> IndexSample:
        return IndexSample(draw_id=draw_id, xi=self._noise(words))

    def realize(self, sample: IndexSample) -> DeterministicMap:
        shift = sample.xi
        return DeterministicMap(self.dim, lambda x: self.base(x) + shift, "additive-noise")

    def transform(self, words, x):
        return self.base(x) + self._noise(words)


class NoisyAffineDRMap(RandomMap):
    """Douglas-Rachford step where the first reflected set has a noisy offset.

    Realizes 0.5 (R_f(R_{g,zeta} x) + x) with g's right-hand side perturbed
    by zeta ~ N(0, sigma_off^2 I) each draw.
    """

    def __init__(self, f_set: AffineSubspace, g_set: AffineSubspace, sigma_off: float):
        if f_set.dim != g_set.dim:
            raise DimensionMismatchError(f_set.dim, g_set.dim, "affine subspace")
        self.f_set = f_set
        self.g_set = g_set
        self.dim = f_set.dim
        self._dist = GaussianNoiseDist(0.0, float(sigma_off))
        self._n_gauss = g_set.m
        self.words_per_draw = rng.gaussian_words_needed(self._n_gauss)

    @property
    def index_dist(self):
        return self._dist

    def _noise(self, words):
        g = rng.bounded_gaussians_from_words(words[..., : self.words_per_draw])
        return self._dist.sigma_off * g[..., : self._n_gauss]

    def decode(self, words, draw_id: int = 0) -> IndexSample:
        return IndexSample(draw_id=draw_id, zeta=None, xi=self._noise(words))

    def _step(self, x, zeta):
        rg = 2.0 * self.g_set.project_shifted(x, zeta) - x
        rf = 2.0 * self.f_set.project(rg) - rg
        return 0.5 * (rf + x)

    def realize(self, sample: IndexSample) -> DeterministicMap:
        zeta = sample.xi
        return DeterministicMap(self.dim, lambda x: self._step(x, zeta), "noisy-dr")

    def transform(self, words, x):
        return self._step(x, self._noise(words))


def cyclic_noisy_hyperplanes(
    rows: np.ndarray, rhs: np.ndarray, sigma_dir: float, sigma_off: float, anchor=None
) -> ProductRandomMap:
    """Cyclic composition of perturbed projectors, one per (row, rhs) pair.

    ``anchor``, when given, must solve every equation and is shared by all
    hyperplanes; otherwise each hyperplane uses its own minimum-norm anchor.
    """
    rows = np.asarray(rows, dtype=np.float64)
    rhs = np.asarray(rhs, dtype=np.float64)
    comps = [
        NoisyHyperplaneMap(Hyperplane(rows[j], rhs[j]), sigma_dir, sigma_off, anchor=anchor)
        for j in range(rows.shape[0])
    ]
    return ProductRandomMap(comps)


# --- draw plumbing ------------------------------------------------------------


def sample_index(rmap: RandomMap, state: RngState) -> IndexSample:
    """Draw one realized index/noise sample and advance the cursor.

    Identical ``(seed, component, chain, draw_id)`` always produce the same
    sample, and the draw at ``(seed, ENGINE, chain=c, draw_id=k)`` is the one
    the engine consumes for chain c at step k.
    """
    words = rng.draw_words(
        state.seed, state.component, state.draw_id, state.chain, max(rmap.words_per_draw, 4)
    )
    sample = rmap.decode(words, draw_id=state.draw_id)
    state.draw_id += 1
    return sample


def apply(rmap: RandomMap, sample: IndexSample, x) -> np.ndarray:
    """Evaluate the realized map at a point: X_{k+1} = T_{xi_k} X_k."""
    x = as_point(x, rmap.dim)
    return rmap.realize(sample)(x)


@dataclass
class NoiseConstants:
    """Monte Carlo estimates of the perturbation's angular and offset energy."""

    c_hat: float
    d_hat: float
    c_se: float
    d_se: float
    n_mc: int
    flagged: bool

    def as_dict(self):
        return {
            "c_hat": self.c_hat,
            "d_hat": self.d_hat,
            "c_se": self.c_se,
            "d_se": self.d_se,
            "n_mc": self.n_mc,
            "flagged": self.flagged,
        }


def noise_constants(
    nmap: NoisyHyperplaneMap, n_mc: int, seed: int, component: int = rng.NOISE_MC
) -> NoiseConstants:
    """Estimate the contraction constant c and offset energy d of a noisy
    hyperplane projector.

    c is the smallest eigenvalue of the empirical matrix
    ``E[(a+xi)(a+xi)^T / ||a+xi||^2]`` (the infimum of the quadratic form over
    unit vectors is exactly that eigenvalue), d the plain Monte Carlo mean of
    ``(b+zeta)^2 / ||a+xi||^2``.  Standard errors come from the per-sample
    values; the estimate is flagged when c is not significantly positive,
    since the contraction argument needs c > 0.
    """
    if n_mc < 1000:
        raise InvalidSpecError(f"n_mc must be at least 1000, got {n_mc}")
    words = rng.draw_words_batch(seed, component, 0, 0, n_mc, nmap.words_per_draw)
    xi, zeta = nmap._noise(words)
    a_pert = nmap.plane.a + xi
    norm2 = np.einsum("bi,bi->b", a_pert, a_pert)
    scaled = a_pert / norm2[:, None]
    m_hat = a_pert.T @ scaled / n_mc
    evals, evecs = np.linalg.eigh(0.5 * (m_hat + m_hat.T))
    c_hat = float(evals[0])
    z = evecs[:, 0]
    c_samples = (a_pert @ z) ** 2 / norm2
    c_se = float(np.std(c_samples, ddof=1) / np.sqrt(n_mc))
    d_samples = (nmap.plane.b + zeta) ** 2 / norm2
    d_hat = float(np.mean(d_samples))
    d_se = float(np.std(d_samples, ddof=1) / np.sqrt(n_mc))
    flagged = c_hat <= max(1e-12, 3.0 * c_se)
    return NoiseConstants(c_hat, d_hat, c_se, d_se, n_mc, flagged)
