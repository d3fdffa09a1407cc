"""Scenario configuration: strict JSON parsing with documented defaults.

Unknown keys are errors (with a nearest-key suggestion), out-of-range
values are rejected with the offending field named, and every default that
was filled in is visible in the echoed config, which re-parses to an
identical configuration.
"""

from __future__ import annotations

import difflib
import json
from dataclasses import asdict, dataclass, field
from typing import Optional, Tuple

from .errors import ConfigError

SCENARIOS = (
    "fig1_cyclic",
    "noisy_hyperplane",
    "sgd_strongly_convex",
    "stochastic_dr_affine",
    "involution",
    "custom",
)

# global engine defaults; scenarios override only where noted in the README
_ENGINE_DEFAULTS = {"n_chains": 2000, "n_iters": 3000, "seed": 42, "snapshot_every": 1}
_SCENARIO_ENGINE_OVERRIDES = {
    "fig1_cyclic": {"snapshot_every": 25},
    "noisy_hyperplane": {"n_iters": 400},
    "sgd_strongly_convex": {"n_iters": 300},
    "stochastic_dr_affine": {"n_iters": 300},
    "involution": {"n_iters": 100},
}
_DIM_DEFAULTS = {
    "fig1_cyclic": (50, 60),
    "noisy_hyperplane": (1, 10),
    "sgd_strongly_convex": (0, 8),
    "stochastic_dr_affine": (2, 6),
    "involution": (0, 1),
    "custom": (0, 0),
}
_NOISE_DEFAULTS = {
    "fig1_cyclic": (1e-8, 1e-8),
    "noisy_hyperplane": (1.0, 1e-7),
    "sgd_strongly_convex": (0.0, 1e-2),
    "stochastic_dr_affine": (0.0, 1e-4),
    "involution": (0.0, 0.0),
    "custom": (0.0, 0.0),
}


@dataclass(frozen=True)
class InitialSpec:
    kind: str  # delta | gaussian
    point: Optional[Tuple[float, ...]] = None
    mean: Optional[Tuple[float, ...]] = None
    sigma: Optional[float] = None


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str
    m: int
    n: int
    sigma_dir: float
    sigma_off: float
    n_chains: int
    n_iters: int
    seed: int
    snapshot_every: int
    burn_in: int
    initial: Optional[InitialSpec]
    step_t: Optional[float]
    reg_alpha: Optional[float]
    n_pairs: int
    n_xi: int
    output_dir: str
    workers: int
    w2_sample_cap: int
    psi_n_xi: int
    max_trace: int
    hyperplanes: Optional[Tuple[Tuple[Tuple[float, ...], float], ...]]

    def echo(self) -> dict:
        """Fully-defaulted dict form; re-parsing it reproduces this config."""
        out = {
            "scenario": self.scenario,
            "dims": {"m": self.m, "n": self.n},
            "noise": {"sigma_dir": self.sigma_dir, "sigma_off": self.sigma_off},
            "engine": {
                "n_chains": self.n_chains,
                "n_iters": self.n_iters,
                "seed": self.seed,
                "snapshot_every": self.snapshot_every,
                "burn_in": self.burn_in,
            },
            "step_t": self.step_t,
            "regularity": {
                "alpha": self.reg_alpha,
                "n_pairs": self.n_pairs,
                "n_xi": self.n_xi,
            },
            "output_dir": self.output_dir,
            "workers": self.workers,
            "w2": {
                "sample_cap": self.w2_sample_cap,
                "psi_n_xi": self.psi_n_xi,
                "max_trace": self.max_trace,
            },
        }
        if self.initial is not None:
            init = {"kind": self.initial.kind}
            if self.initial.point is not None:
                init["point"] = list(self.initial.point)
            if self.initial.mean is not None:
                init["mean"] = list(self.initial.mean)
            if self.initial.sigma is not None:
                init["sigma"] = self.initial.sigma
            out["engine"]["initial"] = init
        if self.hyperplanes is not None:
            out["hyperplanes"] = [{"a": list(a), "b": b} for a, b in self.hyperplanes]
        return out


def _reject_unknown(section: dict, allowed, where: str):
    for key in section:
        if key not in allowed:
            hint = difflib.get_close_matches(key, allowed, n=1)
            suggestion = f"; did you mean '{hint[0]}'?" if hint else ""
            raise ConfigError(f"unknown key '{key}' in {where}{suggestion}", field=key)


def _get(section: dict, key: str, default, kind, where: str, minimum=None):
    val = section.get(key, default)
    if val is None:
        return None
    if kind is int:
        if isinstance(val, bool) or not isinstance(val, int):
            raise ConfigError(f"expected an integer in {where}, got {val!r}", field=key)
    elif kind is float:
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise ConfigError(f"expected a number in {where}, got {val!r}", field=key)
        val = float(val)
    elif kind is str and not isinstance(val, str):
        raise ConfigError(f"expected a string in {where}, got {val!r}", field=key)
    if minimum is not None and val < minimum:
        raise ConfigError(f"{key} must be >= {minimum}, got {val}", field=key)
    return val


def _parse_initial(section: Optional[dict]) -> Optional[InitialSpec]:
    if section is None:
        return None
    _reject_unknown(section, ("kind", "point", "mean", "sigma"), "engine.initial")
    kind = _get(section, "kind", None, str, "engine.initial")
    if kind not in ("delta", "gaussian"):
        raise ConfigError(f"initial.kind must be 'delta' or 'gaussian', got {kind!r}", field="kind")
    point = section.get("point")
    mean = section.get("mean")
    sigma = _get(section, "sigma", None, float, "engine.initial", minimum=0.0)
    if kind == "delta":
        if point is None:
            raise ConfigError("delta initial needs 'point'", field="point")
        return InitialSpec("delta", point=tuple(float(v) for v in point))
    if mean is None or sigma is None:
        raise ConfigError("gaussian initial needs 'mean' and 'sigma'", field="mean")
    return InitialSpec("gaussian", mean=tuple(float(v) for v in mean), sigma=sigma)


def parse_config_dict(doc: dict) -> ScenarioConfig:
    if not isinstance(doc, dict):
        raise ConfigError("top-level document must be an object")
    top_keys = (
        "scenario",
        "dims",
        "noise",
        "engine",
        "step_t",
        "regularity",
        "output_dir",
        "workers",
        "w2",
        "hyperplanes",
    )
    _reject_unknown(doc, top_keys, "the top level")
    scenario = _get(doc, "scenario", None, str, "the top level")
    if scenario not in SCENARIOS:
        hint = difflib.get_close_matches(str(scenario), SCENARIOS, n=1)
        suggestion = f"; did you mean '{hint[0]}'?" if hint else ""
        raise ConfigError(f"unknown scenario {scenario!r}{suggestion}", field="scenario")

    dims = doc.get("dims", {}) or {}
    _reject_unknown(dims, ("m", "n"), "section 'dims'")
    m_def, n_def = _DIM_DEFAULTS[scenario]
    m = _get(dims, "m", m_def, int, "section 'dims'", minimum=0)
    n = _get(dims, "n", n_def, int, "section 'dims'", minimum=1)
    if scenario in ("fig1_cyclic", "noisy_hyperplane") and m < 1:
        raise ConfigError("this scenario needs at least one hyperplane (dims.m >= 1)", field="m")
    if scenario in ("fig1_cyclic", "noisy_hyperplane", "stochastic_dr_affine") and m >= n:
        raise ConfigError("dims must satisfy m < n for an underdetermined system", field="m")

    noise = doc.get("noise", {}) or {}
    _reject_unknown(noise, ("sigma_dir", "sigma_off"), "section 'noise'")
    sd_def, so_def = _NOISE_DEFAULTS[scenario]
    sigma_dir = _get(noise, "sigma_dir", sd_def, float, "section 'noise'", minimum=0.0)
    sigma_off = _get(noise, "sigma_off", so_def, float, "section 'noise'", minimum=0.0)

    engine = doc.get("engine", {}) or {}
    _reject_unknown(
        engine,
        ("n_chains", "n_iters", "seed", "snapshot_every", "burn_in", "initial"),
        "section 'engine'",
    )
    overrides = _SCENARIO_ENGINE_OVERRIDES.get(scenario, {})
    n_chains = _get(engine, "n_chains", _ENGINE_DEFAULTS["n_chains"], int, "engine", minimum=1)
    n_iters = _get(
        engine, "n_iters", overrides.get("n_iters", _ENGINE_DEFAULTS["n_iters"]), int, "engine", minimum=1
    )
    seed = _get(engine, "seed", _ENGINE_DEFAULTS["seed"], int, "engine", minimum=0)
    snapshot_every = _get(
        engine,
        "snapshot_every",
        overrides.get("snapshot_every", _ENGINE_DEFAULTS["snapshot_every"]),
        int,
        "engine",
        minimum=1,
    )
    burn_in = _get(engine, "burn_in", n_iters // 2, int, "engine", minimum=0)
    if burn_in >= n_iters:
        raise ConfigError("burn_in must be smaller than n_iters", field="burn_in")
    initial = _parse_initial(engine.get("initial"))

    step_t = _get(doc, "step_t", None, float, "the top level")
    if step_t is not None and step_t <= 0:
        raise ConfigError("step_t must be positive", field="step_t")

    reg = doc.get("regularity", {}) or {}
    _reject_unknown(reg, ("alpha", "n_pairs", "n_xi"), "section 'regularity'")
    reg_alpha = _get(reg, "alpha", None, float, "regularity")
    if reg_alpha is not None and not 0.0 < reg_alpha < 1.0:
        raise ConfigError("regularity.alpha must lie in (0,1)", field="alpha")
    n_pairs = _get(reg, "n_pairs", 500, int, "regularity", minimum=1)
    n_xi = _get(reg, "n_xi", 200, int, "regularity", minimum=1)

    w2 = doc.get("w2", {}) or {}
    _reject_unknown(w2, ("sample_cap", "psi_n_xi", "max_trace"), "section 'w2'")
    w2_sample_cap = _get(w2, "sample_cap", 512, int, "w2", minimum=8)
    psi_n_xi = _get(w2, "psi_n_xi", 64, int, "w2", minimum=1)
    max_trace = _get(w2, "max_trace", 500, int, "w2", minimum=10)

    output_dir = _get(doc, "output_dir", "out", str, "the top level")
    workers = _get(doc, "workers", 1, int, "the top level", minimum=1)

    hyperplanes = None
    if doc.get("hyperplanes") is not None:
        planes = doc["hyperplanes"]
        if not isinstance(planes, list) or not planes:
            raise ConfigError("hyperplanes must be a nonempty list", field="hyperplanes")
        parsed = []
        for i, hp in enumerate(planes):
            _reject_unknown(hp, ("a", "b"), f"hyperplanes[{i}]")
            if "a" not in hp or "b" not in hp:
                raise ConfigError(f"hyperplanes[{i}] needs 'a' and 'b'", field="hyperplanes")
            parsed.append((tuple(float(v) for v in hp["a"]), float(hp["b"])))
        hyperplanes = tuple(parsed)
    if scenario == "custom" and hyperplanes is None:
        raise ConfigError("custom scenario needs an explicit 'hyperplanes' list", field="hyperplanes")

    return ScenarioConfig(
        scenario=scenario,
        m=m,
        n=n,
        sigma_dir=sigma_dir,
        sigma_off=sigma_off,
        n_chains=n_chains,
        n_iters=n_iters,
        seed=seed,
        snapshot_every=snapshot_every,
        burn_in=burn_in,
        initial=initial,
        step_t=step_t,
        reg_alpha=reg_alpha,
        n_pairs=n_pairs,
        n_xi=n_xi,
        output_dir=output_dir,
        workers=workers,
        w2_sample_cap=w2_sample_cap,
        psi_n_xi=psi_n_xi,
        max_trace=max_trace,
        hyperplanes=hyperplanes,
    )


def parse_config(path: str) -> ScenarioConfig:
    """Parse a UTF-8 JSON configuration file; unknown keys are errors."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}")
    return parse_config_dict(doc)
