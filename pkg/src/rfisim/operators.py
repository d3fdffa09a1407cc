"""Deterministic building blocks: projectors, prox steps, reflectors, compositions.

Points are plain 1-D float arrays; every operation also accepts stacked
inputs of shape ``(..., n)`` and acts on the last axis, which is what the
ensemble engine relies on.  All objects here are immutable after
construction and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
import scipy.linalg

from .errors import DimensionMismatchError, InvalidSpecError, SolverError

_SYM_TOL = 1e-12
_RANK_TOL = 1e-10


def as_point(x, dim: Optional[int] = None) -> np.ndarray:
    """Validate and return a finite 1-D float64 point."""
    p = np.asarray(x, dtype=np.float64)
    if p.ndim == 0:
        p = p.reshape(1)
    if p.ndim != 1:
        raise InvalidSpecError(f"a point must be 1-D, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise InvalidSpecError("point has non-finite coordinates")
    if dim is not None and p.shape[0] != dim:
        raise DimensionMismatchError(dim, p.shape[0], "point")
    return p


def _check_last_axis(x: np.ndarray, dim: int, what: str = "input") -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != dim:
        raise DimensionMismatchError(dim, x.shape[-1], what)
    return x


@dataclass(frozen=True)
class DeterministicMap:
    """A self-mapping on R^n, evaluable at single points or stacked batches."""

    dim: int
    fn: Callable[[np.ndarray], np.ndarray]
    label: str = "map"

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.fn(_check_last_axis(x, self.dim, self.label))

    def __repr__(self):  # pragma: no cover - cosmetic
        return f"DeterministicMap({self.label}, dim={self.dim})"


def identity_map(dim: int) -> DeterministicMap:
    return DeterministicMap(dim, lambda x: x, "identity")


def scale_map(dim: int, factor: float) -> DeterministicMap:
    """T x = factor * x.  factor=-1 gives the coordinate involution."""
    s = float(factor)
    return DeterministicMap(dim, lambda x: s * x, f"scale({s})")


def constant_map(point) -> DeterministicMap:
    p = as_point(point)
    return DeterministicMap(
        p.shape[0], lambda x: np.broadcast_to(p, x.shape).copy(), "constant"
    )


class QuadraticFn:
    """f(x) = 0.5 x'Qx + c'x + offset with Q symmetrized on construction.

    ``lipschitz`` is the gradient's Lipschitz constant max|eig(Q)| and
    ``tau_hypo`` the hypomonotonicity violation -eig_min(Q) of the gradient:
    negative tau_hypo means the gradient is strongly monotone, positive
    means the function is nonconvex with that much hypomonotonicity.
    """

    def __init__(self, Q, c=None, offset: float = 0.0):
        Q = np.asarray(Q, dtype=np.float64)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise InvalidSpecError(f"Q must be square, got shape {Q.shape}")
        if not np.all(np.isfinite(Q)):
            raise InvalidSpecError("Q has non-finite entries")
        self.Q = 0.5 * (Q + Q.T)
        self.dim = Q.shape[0]
        self.c = as_point(c, self.dim) if c is not None else np.zeros(self.dim)
        self.offset = float(offset)
        evals = np.linalg.eigvalsh(self.Q)
        self.eig_min = float(evals[0])
        self.eig_max = float(evals[-1])
        self._prox_factor = None

    @property
    def lipschitz(self) -> float:
        return max(abs(self.eig_min), abs(self.eig_max))

    @property
    def tau_hypo(self) -> float:
        return -self.eig_min

    def value(self, x) -> np.ndarray:
        x = _check_last_axis(x, self.dim)
        return 0.5 * np.einsum("...i,ij,...j->...", x, self.Q, x) + x @ self.c + self.offset

    def grad(self, x) -> np.ndarray:
        x = _check_last_axis(x, self.dim)
        return x @ self.Q + self.c

    def prox_point(self, x) -> np.ndarray:
        """Solve (I + Q) p = x - c; requires I + Q positive definite."""
        if self._prox_factor is None:
            smallest = 1.0 + self.eig_min
            if smallest <= 0.0:
                raise SolverError(
                    f"I + Q is not positive definite (smallest eigenvalue {smallest:.6g})"
                )
            self._prox_factor = scipy.linalg.cho_factor(
                np.eye(self.dim) + self.Q, lower=True
            )
        x = _check_last_axis(x, self.dim)
        rhs = (x - self.c).reshape(-1, self.dim).T
        sol = scipy.linalg.cho_solve(self._prox_factor, rhs).T
        return sol.reshape(x.shape)


class Hyperplane:
    """{x : <a, x> = b} with closed-form projection."""

    def __init__(self, a, b: float):
        self.a = as_point(a)
        self.b = float(b)
        self.dim = self.a.shape[0]
        self._norm2 = float(self.a @ self.a)
        if self._norm2 == 0.0:
            raise InvalidSpecError("hyperplane normal must be nonzero")

    def project(self, x) -> np.ndarray:
        x = _check_last_axis(x, self.dim)
        t = (x @ self.a - self.b) / self._norm2
        return x - t[..., None] * self.a

    def anchor(self) -> np.ndarray:
        """The minimum-norm point on the hyperplane."""
        return (self.b / self._norm2) * self.a


class AffineSubspace:
    """{x : Ax = b} for full-row-rank A; projection uses a QR factor cached
    at construction since it is applied once per iteration."""

    def __init__(self, A, b):
        A = np.asarray(A, dtype=np.float64)
        if A.ndim != 2:
            raise InvalidSpecError(f"A must be a matrix, got shape {A.shape}")
        if not np.all(np.isfinite(A)):
            raise InvalidSpecError("A has non-finite entries")
        self.A = A
        self.m, self.dim = A.shape
        self.b = as_point(b, self.m)
        # rank-revealing check for full row rank
        r_diag = np.abs(np.diag(scipy.linalg.qr(A, mode="r", pivoting=True)[0]))
        if self.m > self.dim or r_diag.size < self.m or r_diag[-1] <= _RANK_TOL * r_diag[0]:
            raise InvalidSpecError(
                f"A must have full row rank (tolerance {_RANK_TOL:g})"
            )
        # A^T = Q R with orthonormal Q (n x m): P(x) = x - Q R^-T (Ax - b)
        self._q, self._r = scipy.linalg.qr(A.T, mode="economic")

    def project(self, x) -> np.ndarray:
        return self.project_shifted(x, 0.0)

    def project_shifted(self, x, delta_b) -> np.ndarray:
        """Project onto {x : Ax = b + delta_b} reusing the cached factor."""
        x = _check_last_axis(x, self.dim)
        res = x @ self.A.T - (self.b + delta_b)
        z = scipy.linalg.solve_triangular(self._r.T, res.reshape(-1, self.m).T, lower=True)
        corr = (self._q @ z).T.reshape(x.shape)
        return x - corr


class Box:
    """{x : lo <= x <= hi} componentwise."""

    def __init__(self, lo, hi):
        self.lo = as_point(lo)
        self.hi = as_point(hi, self.lo.shape[0])
        if np.any(self.lo > self.hi):
            raise InvalidSpecError("box needs lo <= hi componentwise")
        self.dim = self.lo.shape[0]

    def project(self, x) -> np.ndarray:
        x = _check_last_axis(x, self.dim)
        return np.clip(x, self.lo, self.hi)


class Ball:
    """Closed Euclidean ball of positive radius."""

    def __init__(self, center, radius: float):
        self.center = as_point(center)
        self.radius = float(radius)
        if not self.radius > 0:
            raise InvalidSpecError("ball radius must be positive")
        self.dim = self.center.shape[0]

    def project(self, x) -> np.ndarray:
        x = _check_last_axis(x, self.dim)
        d = x - self.center
        norm = np.linalg.norm(d, axis=-1)
        scale = np.where(norm > self.radius, self.radius / np.where(norm == 0, 1.0, norm), 1.0)
        return self.center + scale[..., None] * d


ConvexSet = Union[Hyperplane, AffineSubspace, Box, Ball]
ProxArg = Union[ConvexSet, QuadraticFn, None]


def project(spec: ConvexSet, x) -> np.ndarray:
    """Euclidean nearest point of the set; idempotent."""
    return spec.project(x)


def grad_step(f: QuadraticFn, t: float, x) -> np.ndarray:
    """x - t * grad f(x) for step size t > 0."""
    if not t > 0:
        raise InvalidSpecError(f"step size must be positive, got {t}")
    return np.asarray(x, dtype=np.float64) - t * f.grad(x)


def prox(g: ProxArg, x) -> np.ndarray:
    """Proximal point of g at x.

    Indicator of a convex set gives the projector; a quadratic gives the
    resolvent (I+Q)^-1 (x - c); None stands for the zero function on all of
    R^n, whose prox is the identity.
    """
    if g is None:
        return np.asarray(x, dtype=np.float64)
    if isinstance(g, QuadraticFn):
        return g.prox_point(x)
    return g.project(x)


def reflect(g: ProxArg, x) -> np.ndarray:
    """2 prox(g, x) - x; an involution across affine sets."""
    x = np.asarray(x, dtype=np.float64)
    return 2.0 * prox(g, x) - x


def _dim_of(obj: ProxArg) -> Optional[int]:
    return None if obj is None else obj.dim


def compose_fb(f: QuadraticFn, g: ProxArg, t: float) -> DeterministicMap:
    """Forward-backward map: x -> prox(g, x - t grad f(x))."""
    if not t > 0:
        raise InvalidSpecError(f"step size must be positive, got {t}")
    gdim = _dim_of(g)
    if gdim is not None and gdim != f.dim:
        raise DimensionMismatchError(f.dim, gdim, "backward term")
    return DeterministicMap(f.dim, lambda x: prox(g, grad_step(f, t, x)), "forward-backward")


def compose_dr(f: ProxArg, g: ProxArg) -> DeterministicMap:
    """Douglas-Rachford map: x -> 0.5 (reflect(f, reflect(g, x)) + x)."""
    dims = [d for d in (_dim_of(f), _dim_of(g)) if d is not None]
    if not dims:
        raise InvalidSpecError("Douglas-Rachford needs at least one non-trivial term")
    if len(set(dims)) > 1:
        raise DimensionMismatchError(dims[0], dims[1], "Douglas-Rachford term")
    dim = dims[0]
    return DeterministicMap(
        dim, lambda x: 0.5 * (reflect(f, reflect(g, x)) + x), "douglas-rachford"
    )


def compose_cyclic(maps: Sequence[DeterministicMap]) -> DeterministicMap:
    """Apply the given maps in list order (maps[0] first)."""
    maps = list(maps)
    if not maps:
        raise InvalidSpecError("cannot compose an empty list of maps")
    dim = maps[0].dim
    for m in maps[1:]:
        if m.dim != dim:
            raise DimensionMismatchError(dim, m.dim, "composed map")

    def run(x):
        for m in maps:
            x = m(x)
        return x

    return DeterministicMap(dim, run, f"cyclic[{len(maps)}]")


def relax(mapping: DeterministicMap, lam: float) -> DeterministicMap:
    """(1 - lam) Id + lam T for lam in (0, 1)."""
    if not 0.0 < lam < 1.0:
        raise InvalidSpecError(f"relaxation parameter must lie in (0,1), got {lam}")
    return DeterministicMap(
        mapping.dim,
        lambda x: (1.0 - lam) * np.asarray(x, dtype=np.float64) + lam * mapping(x),
        f"relax({lam})",
    )


def projector_map(spec: ConvexSet) -> DeterministicMap:
    return DeterministicMap(spec.dim, spec.project, f"projector[{type(spec).__name__}]")
