"""Failure-scenario generators: combinatorial masks, Bernoulli draws, clipping.

Masks use 1 for a working sensor and 0 for a lost one.  Every random draw
comes from a stream derived from ``(seed, name, index)`` so scenario ``j``
does not depend on how many scenarios are generated or in what order.
"""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
import math
from dataclasses import dataclass

import numpy as np

from ._rng import derive_rng
from .errors import CombinatorialGuardError, InvalidConfigError
from .inverse import ScenarioSet

GUARD = 1_000_000
G0 = 9.80665
DEFAULT_TIER_RULE = {0: 0.05, 1: 0.05, 2: 0.3, 3: 0.5}


def one_out_scenarios(n_y):
    """``n_y`` masks, mask ``j`` losing sensor ``j``."""
    if n_y < 1:
        raise ValueError("n_y must be >= 1")
    return ScenarioSet("deterministic_masks", 1.0 - np.eye(n_y), {"generator": "one_out", "k": 1})


def k_out_scenarios(n_y, k, among=None, guard=GUARD):
    """All masks with exactly ``k`` lost sensors, in lexicographic order.

    ``among`` restricts the lost sensors to a subset of indices (e.g. the
    support of a design); other sensors always survive.
    """
    idx = np.arange(n_y) if among is None else np.asarray(sorted(among), dtype=int)
    if not 0 <= k <= idx.size:
        raise ValueError(f"k must lie in [0, {idx.size}]")
    count = math.comb(idx.size, k)
    if count > guard:
        raise CombinatorialGuardError(
            f"C({idx.size}, {k}) = {count} masks exceed the guard of {guard}; sample scenarios instead"
        )
    masks = np.ones((count, n_y))
    for r, lost in enumerate(itertools.combinations(idx.tolist(), k)):
        masks[r, list(lost)] = 0.0
    return ScenarioSet("deterministic_masks", masks, {"generator": "k_out", "k": k})


@dataclass(frozen=True, eq=False)
class PoFMap:
    """Per-sensor failure probabilities."""

    q: np.ndarray
    level_rule: dict | None = None

    def __post_init__(self):
        q = np.array(self.q, dtype=float)
        if q.ndim != 1 or np.any(~np.isfinite(q)) or np.any(q < 0) or np.any(q > 1):
            raise ValueError("failure probabilities must be a vector in [0, 1]")
        q.setflags(write=False)
        object.__setattr__(self, "q", q)

    @property
    def survival(self):
        return 1.0 - self.q

    @property
    def n_y(self):
        return self.q.size


def tiered_pof(model, level_rule):
    """Assign ``q_i`` from the level of sensor ``i``'s node."""
    levels = model.sensor_levels() if hasattr(model, "sensor_levels") else np.asarray(model, dtype=int)
    rule = {int(k): float(v) for k, v in level_rule.items()}
    missing = sorted(set(np.unique(levels).tolist()) - set(rule))
    if missing:
        raise InvalidConfigError(f"level rule has no failure probability for level(s) {missing}")
    return PoFMap(np.array([rule[int(lv)] for lv in levels]), rule)


def bernoulli_scenarios(pof, n_samps, seed):
    """``n_samps`` masks; sensor ``i`` fails independently with ``q_i``."""
    if n_samps < 1:
        raise ValueError("n_samps must be >= 1")
    q = pof.q if isinstance(pof, PoFMap) else np.asarray(pof, dtype=float)
    masks = np.empty((n_samps, q.size))
    for j in range(n_samps):
        masks[j] = derive_rng(seed, "bernoulli", j).random(q.size) >= q
    meta = {
        "generator": "bernoulli",
        "seed": int(seed),
        "n_samps": int(n_samps),
        "failure_frequency": (1.0 - masks.mean(axis=0)).tolist(),
    }
    return ScenarioSet("deterministic_masks", masks, meta)


# ---------------------------------------------------------------------------
# clipping


@dataclass(frozen=True, eq=False)
class ClippingConfig:
    """Force distribution and clipping threshold (in g)."""

    threshold: float
    force_mean: np.ndarray
    force_covariance: np.ndarray
    n_realizations: int = 100
    seed: int = 0

    def __post_init__(self):
        if not self.threshold > 0:
            raise InvalidConfigError("clipping threshold must be positive")
        if self.n_realizations < 1:
            raise InvalidConfigError("n_realizations must be >= 1")
        mean = np.array(self.force_mean, dtype=float)
        cov = np.array(self.force_covariance, dtype=float)
        if cov.shape != (mean.size, mean.size) or not np.allclose(cov, cov.T):
            raise InvalidConfigError("force covariance must be a symmetric n_theta x n_theta matrix")
        if np.linalg.eigvalsh(cov)[0] < -1e-12 * max(1.0, np.abs(cov).max()):
            raise InvalidConfigError("force covariance must be positive semidefinite")
        object.__setattr__(self, "force_mean", mean)
        object.__setattr__(self, "force_covariance", cov)

    @classmethod
    def isotropic(cls, threshold, n_theta, std, n_realizations=100, seed=0):
        return cls(threshold, np.zeros(n_theta), std**2 * np.eye(n_theta), n_realizations, seed)

    def covariance_factor(self):
        lam, V = np.linalg.eigh(self.force_covariance)
        return V * np.sqrt(np.clip(lam, 0.0, None))


def standard_draws(n_theta, n_realizations, seed):
    """Standard normal force draws, one stream per realization."""
    return np.stack([derive_rng(seed, "force", j).standard_normal(n_theta) for j in range(n_realizations)])


def force_realizations(clip):
    z = standard_draws(clip.force_mean.size, clip.n_realizations, clip.seed)
    return clip.force_mean + z @ clip.covariance_factor().T


def clipping_scenarios(frf, clip):
    """Masks losing every sensor whose amplitude ``|t_i^T theta|`` exceeds the threshold.

    Returns the scenario set and the per-sensor clipping occurrence (percent).
    """
    T = frf.entries if hasattr(frf, "entries") else np.asarray(frf, dtype=float)
    theta = force_realizations(clip)
    response = np.abs(theta @ T.T)
    masks = (response <= clip.threshold * G0).astype(float)
    occurrence = 100.0 * (1.0 - masks.mean(axis=0))
    meta = {
        "generator": "clipping",
        "seed": int(clip.seed),
        "threshold_g": float(clip.threshold),
        "n_realizations": int(clip.n_realizations),
        "occurrence_percent": occurrence.tolist(),
    }
    return ScenarioSet("deterministic_masks", masks, meta), occurrence


def tune_force_std(frf, levels, threshold, n_realizations, seed, target_rate=0.9,
                   level=None, rtol=1e-6):
    """Smallest isotropic force std giving the ``level`` tier a median clip rate >= target.

    The clip rate of each sensor is nondecreasing in the std for a zero-mean
    force, so bisection on ``log(std)`` with fixed standard draws converges.
    """
    T = frf.entries if hasattr(frf, "entries") else np.asarray(frf, dtype=float)
    levels = np.asarray(levels)
    level = int(levels.max()) if level is None else level
    rows = T[levels == level]
    if rows.size == 0:
        raise InvalidConfigError(f"no sensors on level {level}")
    unit = np.abs(standard_draws(T.shape[1], n_realizations, seed) @ rows.T)

    def rate(std):
        return float(np.median((std * unit > threshold * G0).mean(axis=0)))

    lo, hi = 1e-12, 1.0
    while rate(hi) < target_rate:
        lo, hi = hi, hi * 10.0
        if hi > 1e300:
            raise InvalidConfigError("clipping target rate is unreachable")
    while hi / lo > 1.0 + rtol:
        mid = math.sqrt(lo * hi)
        if rate(mid) >= target_rate:
            hi = mid
        else:
            lo = mid
    return hi


def tier_rates(occurrence, levels):
    """``{level: (min, median, max)}`` clipping rates (percent) per tier."""
    levels = np.asarray(levels)
    return {
        int(lv): tuple(float(f(occurrence[levels == lv])) for f in (np.min, np.median, np.max))
        for lv in np.unique(levels)
    }


# ---------------------------------------------------------------------------
# export


def config_hash(obj):
    text = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_jsonable)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    raise TypeError(f"cannot serialise {type(x).__name__}")


def write_scenarios(scenarios, csv_path, json_path, seed=None, config=None):
    """Compact CSV (entries different from 1 only) plus a JSON summary."""
    E = scenarios.entries
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["scenario_id", "sensor_id", "value"])
        for j, i in zip(*np.nonzero(E != 1.0)):
            writer.writerow([int(j), int(i), repr(float(E[j, i]))])
    lost = 1.0 - E
    summary = {
        "kind": scenarios.kind,
        "n_scenarios": scenarios.n_scenarios,
        "n_y": scenarios.n_y,
        "seed": seed,
        "config_hash": config_hash(config) if config is not None else None,
        "lost_per_scenario_mean": float(lost.sum(axis=1).mean()),
        "occurrence_percent": (100.0 * lost.mean(axis=0)).tolist(),
        "metadata": scenarios.metadata,
    }
    with open(json_path, "w") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True, default=_jsonable)
        fh.write("\n")


def read_scenarios(csv_path, json_path):
    with open(json_path) as fh:
        summary = json.load(fh)
    E = np.ones((summary["n_scenarios"], summary["n_y"]))
    with open(csv_path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            E[int(row["scenario_id"]), int(row["sensor_id"])] = float(row["value"])
    if E.shape[0] == 0:
        raise InvalidConfigError(f"{csv_path}: scenario file is empty")
    return ScenarioSet(summary["kind"], E, summary.get("metadata") or {})
