"""Empirical measures and the two metrics used on them.

``wasserstein2`` solves the transport problem exactly: equal-size uniform
clouds go through the assignment solver, general weighted supports through
an LP.  ``prokhorov`` evaluates the coupling characterization of the
Prokhorov-Levy distance: for a threshold eps, the least coupling mass that
must travel farther than eps is one minus a bipartite max-flow, and the
distance is found by scanning eps over the pairwise distances, where that
objective is piecewise constant.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linear_sum_assignment, linprog
from scipy.spatial.distance import cdist

from .errors import DimensionMismatchError, InvalidSpecError, SolverError, SupportCapError

_WEIGHT_TOL = 1e-12
_MARGINAL_TOL = 1e-9
_FLOW_SCALE = 2**52  # exact int64 capacities at ~1e-16 weight resolution


class EmpiricalMeasure:
    """A weighted point cloud: support (n, dim) with weights summing to one."""

    def __init__(self, support, weights=None):
        support = np.asarray(support, dtype=np.float64)
        if support.ndim == 1:
            support = support[:, None]
        if support.ndim != 2 or support.shape[0] == 0:
            raise InvalidSpecError(f"support must be a nonempty (n, dim) array, got {support.shape}")
        if not np.all(np.isfinite(support)):
            raise InvalidSpecError("support contains non-finite points")
        n = support.shape[0]
        if weights is None:
            weights = np.full(n, 1.0 / n)
        else:
            weights = np.asarray(weights, dtype=np.float64)
            if weights.shape != (n,):
                raise InvalidSpecError("weights must match the number of support points")
            if np.any(weights < 0):
                raise InvalidSpecError("weights must be nonnegative")
            if abs(weights.sum() - 1.0) > _WEIGHT_TOL:
                raise InvalidSpecError(f"weights must sum to 1 within {_WEIGHT_TOL:g}")
        self.support = support
        self.weights = weights

    @classmethod
    def from_points(cls, points) -> "EmpiricalMeasure":
        return cls(points)

    @property
    def n(self) -> int:
        return self.support.shape[0]

    @property
    def dim(self) -> int:
        return self.support.shape[1]

    @property
    def is_uniform(self) -> bool:
        return bool(np.all(np.abs(self.weights - 1.0 / self.n) <= _WEIGHT_TOL))

    def mean(self) -> np.ndarray:
        return self.weights @ self.support

    def subsample(self, cap: int) -> "EmpiricalMeasure":
        """Deterministic reduction to at most ``cap`` uniform points.

        Uses systematic (quantile) resampling against the weights, so the
        result approximates the measure and is reproducible.
        """
        if self.n <= cap and self.is_uniform:
            return self
        cum = np.cumsum(self.weights)
        targets = (np.arange(cap) + 0.5) / cap
        idx = np.searchsorted(cum, targets, side="left")
        idx = np.minimum(idx, self.n - 1)
        return EmpiricalMeasure(self.support[idx])


@dataclass
class Coupling:
    """A transport plan between two empirical measures."""

    plan: np.ndarray
    cost: float  # total squared-distance transport cost of the plan

    def validate(self, mu: EmpiricalMeasure, nu: EmpiricalMeasure, tol: float = _MARGINAL_TOL):
        if self.plan.shape != (mu.n, nu.n):
            raise InvalidSpecError("coupling plan shape does not match the measures")
        if np.any(self.plan < -tol):
            raise InvalidSpecError("coupling plan has negative mass")
        if np.max(np.abs(self.plan.sum(axis=1) - mu.weights)) > tol:
            raise InvalidSpecError("row marginals do not match mu")
        if np.max(np.abs(self.plan.sum(axis=0) - nu.weights)) > tol:
            raise InvalidSpecError("column marginals do not match nu")

    def pairs(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Indices and masses of the nonzero plan entries."""
        rows, cols = np.nonzero(self.plan)
        return rows, cols, self.plan[rows, cols]


@dataclass
class W2Result:
    w2: float
    coupling: Coupling


def _check_same_dim(mu: EmpiricalMeasure, nu: EmpiricalMeasure):
    if mu.dim != nu.dim:
        raise DimensionMismatchError(mu.dim, nu.dim, "measure support")


def _canonicalize_assignment(cost: np.ndarray, perm: np.ndarray) -> np.ndarray:
    """Resolve cost ties deterministically, preferring the lexicographically
    smaller permutation among swap-equivalent optima."""
    perm = perm.copy()
    n = perm.shape[0]
    changed = True
    passes = 0
    while changed and passes < n:
        changed = False
        passes += 1
        for i in range(n - 1):
            for j in range(i + 1, n):
                if perm[i] > perm[j]:
                    cur = cost[i, perm[i]] + cost[j, perm[j]]
                    swp = cost[i, perm[j]] + cost[j, perm[i]]
                    if swp == cur:
                        perm[i], perm[j] = perm[j], perm[i]
                        changed = True
    return perm


def _w2_assignment(mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> W2Result:
    d2 = cdist(mu.support, nu.support, "sqeuclidean")
    rows, cols = linear_sum_assignment(d2)
    perm = _canonicalize_assignment(d2, cols)
    n = mu.n
    plan = np.zeros((n, n))
    plan[np.arange(n), perm] = 1.0 / n
    total = float(d2[np.arange(n), perm].sum() / n)
    return W2Result(float(np.sqrt(max(total, 0.0))), Coupling(plan, total))


def _w2_transport_lp(mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> W2Result:
    n, m = mu.n, nu.n
    if n * m > 4_000_000:
        raise SolverError(
            f"transport LP with {n}x{m} variables is too large; subsample the measures"
        )
    d2 = cdist(mu.support, nu.support, "sqeuclidean")
    row_marg = sp.kron(sp.eye(n), np.ones((1, m)), format="csc")
    col_marg = sp.kron(np.ones((1, n)), sp.eye(m), format="csc")
    # last column constraint is redundant given the rows; drop it
    a_eq = sp.vstack([row_marg, col_marg[:-1]]).tocsc()
    b_eq = np.concatenate([mu.weights, nu.weights[:-1]])
    res = linprog(d2.ravel(), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if not res.success:
        raise SolverError(f"transport LP failed: {res.message}")
    plan = res.x.reshape(n, m)
    plan[plan < 0] = 0.0
    total = float((plan * d2).sum())
    return W2Result(float(np.sqrt(max(total, 0.0))), Coupling(plan, total))


def wasserstein2(mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> W2Result:
    """Exact Wasserstein-2 distance and an optimal coupling."""
    _check_same_dim(mu, nu)
    if mu.n == nu.n and mu.is_uniform and nu.is_uniform:
        return _w2_assignment(mu, nu)
    return _w2_transport_lp(mu, nu)


class _Dinic:
    """Plain max-flow on int64 capacities; nodes are dense ints."""

    def __init__(self, n_nodes: int):
        self.n = n_nodes
        self.to: List[int] = []
        self.cap: List[int] = []
        self.head: List[List[int]] = [[] for _ in range(n_nodes)]

    def add_edge(self, u: int, v: int, capacity: int):
        self.head[u].append(len(self.to))
        self.to.append(v)
        self.cap.append(capacity)
        self.head[v].append(len(self.to))
        self.to.append(u)
        self.cap.append(0)

    def max_flow(self, s: int, t: int) -> int:
        flow = 0
        INF = 1 << 62
        while True:
            level = [-1] * self.n
            level[s] = 0
            queue = [s]
            for u in queue:
                for eid in self.head[u]:
                    v = self.to[eid]
                    if self.cap[eid] > 0 and level[v] < 0:
                        level[v] = level[u] + 1
                        queue.append(v)
            if level[t] < 0:
                return flow
            it = [0] * self.n

            def dfs(u: int, pushed: int) -> int:
                if u == t:
                    return pushed
                while it[u] < len(self.head[u]):
                    eid = self.head[u][it[u]]
                    v = self.to[eid]
                    if self.cap[eid] > 0 and level[v] == level[u] + 1:
                        got = dfs(v, min(pushed, self.cap[eid]))
                        if got > 0:
                            self.cap[eid] -= got
                            self.cap[eid ^ 1] += got
                            return got
                    it[u] += 1
                return 0

            while True:
                pushed = dfs(s, INF)
                if pushed == 0:
                    break
                flow += pushed


def _min_unmatched_mass(d: np.ndarray, wu: np.ndarray, wv: np.ndarray, eps: float) -> float:
    """Least coupling mass forced onto pairs with distance > eps (closed-ball
    reading: pairs at exactly eps count as matched)."""
    n, m = d.shape
    net = _Dinic(n + m + 2)
    src, snk = n + m, n + m + 1
    caps_u = np.rint(wu * _FLOW_SCALE).astype(np.int64)
    caps_v = np.rint(wv * _FLOW_SCALE).astype(np.int64)
    for i in range(n):
        if caps_u[i] > 0:
            net.add_edge(src, i, int(caps_u[i]))
    for j in range(m):
        if caps_v[j] > 0:
            net.add_edge(n + j, snk, int(caps_v[j]))
    ii, jj = np.nonzero(d <= eps)
    for i, j in zip(ii.tolist(), jj.tolist()):
        net.add_edge(i, n + j, 1 << 60)
    matched = net.max_flow(src, snk) / _FLOW_SCALE
    return float(min(max(1.0 - matched, 0.0), 1.0))


def prokhorov(mu: EmpiricalMeasure, nu: EmpiricalMeasure, cap: int = 512) -> float:
    """Prokhorov-Levy distance between finite-support measures.

    The minimum mass outside the eps-matched pairs is piecewise constant in
    eps between consecutive pairwise distances, so a bisection over the
    sorted distances plus one interior check is exact.
    """
    _check_same_dim(mu, nu)
    if mu.n + nu.n > cap:
        raise SupportCapError(
            f"combined support {mu.n + nu.n} exceeds cap {cap}; "
            "subsample the measures first"
        )
    d = cdist(mu.support, nu.support)
    ds = np.unique(d)

    def mass(eps: float) -> float:
        return _min_unmatched_mass(d, mu.weights, nu.weights, eps)

    # smallest index with mass(ds[j]) <= ds[j]; the predicate is monotone
    lo, hi = 0, ds.size - 1
    if mass(ds[hi]) > ds[hi]:
        ft = None
    else:
        while lo < hi:
            mid = (lo + hi) // 2
            if mass(ds[mid]) <= ds[mid]:
                hi = mid
            else:
                lo = mid + 1
        ft = lo
    if ft is None:
        # crossing lies beyond the largest distance
        return max(float(ds[-1]), mass(ds[-1]))
    prev_lo = 0.0 if ft == 0 else float(ds[ft - 1])
    prev_m = 1.0 if ft == 0 else mass(ds[ft - 1])
    cand = max(prev_lo, prev_m)
    return cand if cand < ds[ft] else float(ds[ft])
