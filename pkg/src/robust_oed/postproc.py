"""Design performance over failure scenarios and parameter draws.

Fractional weights are read as measurement precisions: a sensor with weight
``w_i`` observes with noise variance ``sigma^2 / w_i``, so the weighted
least squares error covariance is exactly ``sigma^2 (T^T W T)^{-1}``.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from ._rng import content_rng, derive_rng
from .errors import IllPosedError, InvalidConfigError
from .inverse import Design, NoiseModel, wls_estimate
from .structural_model import EPS_RANK

METRICS = ("logdet", "empirical_mse", "empirical_pmse")
POLICIES = ("exclude", "zero", "error")


@dataclass
class PerformanceReport:
    per_scenario: np.ndarray
    excluded_count: int
    mean: float
    median: float
    worst: float
    no_failure_value: float
    metric: str
    policy: str = "exclude"
    seeds: dict = field(default_factory=dict)
    config_hash: str | None = None
    metadata: dict = field(default_factory=dict)

    @classmethod
    def from_values(cls, values, ok, metric, policy, no_failure_value, **kw):
        values = np.asarray(values, dtype=float)
        ok = np.asarray(ok, dtype=bool)
        excluded = int(np.count_nonzero(~ok))
        inc = values[ok]
        if policy == "zero":
            per = np.where(ok, values, 0.0)
            pool = per
        else:
            per = np.where(ok, values, np.nan)
            pool = inc
        mean = float(pool.mean()) if pool.size else math.nan
        median = float(np.median(pool)) if pool.size else math.nan
        worst = float(inc.max()) if inc.size else math.nan
        return cls(per, excluded, mean, median, worst, float(no_failure_value), metric, policy, **kw)

    def summary(self):
        return {
            "metric": self.metric,
            "policy": self.policy,
            "n_scenarios": int(self.per_scenario.size),
            "excluded_count": self.excluded_count,
            "mean": self.mean,
            "median": self.median,
            "worst": self.worst,
            "no_failure_value": self.no_failure_value,
        }

    def to_dict(self):
        return {
            **self.summary(),
            "per_scenario": [None if math.isnan(v) else v for v in self.per_scenario.tolist()],
            "seeds": self.seeds,
            "config_hash": self.config_hash,
            "metadata": self.metadata,
        }

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["scenario_id", "metric", "value"])
            for j, v in enumerate(self.per_scenario.tolist()):
                writer.writerow([j, self.metric, repr(v)])


def write_summary_csv(reports, path):
    """``design,metric,statistic,value`` rows for a dict ``{label: report}``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["design", "metric", "statistic", "value"])
        for label, rep in reports.items():
            for stat in ("mean", "median", "worst", "no_failure_value", "excluded_count"):
                writer.writerow([label, rep.metric, stat, repr(getattr(rep, stat))])


@dataclass(frozen=True, eq=False)
class NominalParameterDistribution:
    mean: np.ndarray
    covariance: np.ndarray
    n_draws: int = 100
    seed: int = 0

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float)
        cov = np.array(self.covariance, dtype=float)
        if cov.shape != (mean.size, mean.size) or not np.allclose(cov, cov.T):
            raise InvalidConfigError("covariance must be a symmetric n_theta x n_theta matrix")
        try:
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise InvalidConfigError("covariance must be positive definite") from exc
        if self.n_draws < 1:
            raise InvalidConfigError("n_draws must be >= 1")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    def sample(self):
        z = derive_rng(self.seed, "theta0").standard_normal((self.n_draws, self.mean.size))
        return self.mean + z @ np.linalg.cholesky(self.covariance).T


# ---------------------------------------------------------------------------


def _entries(frf):
    return frf.entries if hasattr(frf, "entries") else np.asarray(frf, dtype=float)


def _check_policy(policy):
    if policy not in POLICIES:
        raise InvalidConfigError(f"unknown ill-posed policy {policy!r}")


def _support_view(frf, design, scenarios):
    """Restrict to the design support (zero-weight rows carry no information)."""
    T = _entries(frf)
    w = design.weights
    sup = np.flatnonzero(w > 0)
    E = scenarios.entries if hasattr(scenarios, "entries") else np.atleast_2d(scenarios)
    if E.shape[1] != T.shape[0]:
        raise ValueError(f"scenarios have {E.shape[1]} sensors, model has {T.shape[0]}")
    return T, sup, w[sup], E[:, sup]


def logdet_over_scenarios(frf, design, scenarios, noise=NoiseModel(), fractional_renorm=False,
                          illposed_policy="exclude", eps_rank=EPS_RANK):
    """Per-scenario ``log det`` of the dropout covariance.

    With ``fractional_renorm`` the surviving weights are rescaled to the
    pre-failure weight sum.  Identical restricted masks are evaluated once.
    """
    _check_policy(illposed_policy)
    T, sup, w, E = _support_view(frf, design, scenarios)
    if E.shape[0] == 0:
        raise InvalidConfigError("scenario set is empty")
    Ts = T[sup]
    uniq, inverse = np.unique(E, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    W = uniq * w
    if fractional_renorm:
        tot = W.sum(axis=1)
        W = W * np.divide(w.sum(), tot, out=np.zeros_like(tot), where=tot > 0)[:, None]
    ones = np.ones(sup.size)
    ld, ok_u, _ = kernels.logdet_batch(Ts, ones, W, eps_rank)
    const = T.shape[1] * math.log(noise.variance)
    vals, ok = (const - ld)[inverse], ok_u[inverse]
    if illposed_policy == "error" and not ok.all():
        bad = int(np.flatnonzero(~ok)[0])
        raise IllPosedError(scenario=bad, message=f"scenario {bad} leaves the design ill-posed")
    ld0, ok0, _ = kernels.logdet_batch(Ts, w, ones[None, :], eps_rank)
    nofail = const - ld0[0] if ok0[0] else math.nan
    return PerformanceReport.from_values(
        vals, ok, "logdet", illposed_policy, nofail,
        metadata={"fractional_renorm": bool(fractional_renorm), "unique_masks": int(uniq.shape[0])},
    )


# ---------------------------------------------------------------------------
# Monte Carlo errors


def _noise_block(rng, n_rows, n_test, chunk=4096):
    """``n_rows x n_test`` standard normals, generated test-by-test."""
    out = np.empty((n_rows, n_test))
    for s in range(0, n_test, chunk):
        e = min(s + chunk, n_test)
        out[:, s:e] = rng.standard_normal((e - s, n_rows)).T
    return out


def _errors(T, w, theta0, sigma, rng, n_test, mask=None):
    """Estimator errors ``theta_hat - theta0``.

    ``theta0`` may be one parameter vector (result ``n_theta x n_test``) or a
    stack of ``K`` of them (result ``K x n_theta x n_test``); noise for draw
    ``k`` is generated after that of draws ``0..k-1``.
    """
    eff = w if mask is None else w * np.asarray(mask, dtype=float)
    act = np.flatnonzero(eff > 0)
    thetas = np.atleast_2d(theta0)
    K = thetas.shape[0]
    z = np.hstack([_noise_block(rng, act.size, n_test) for _ in range(K)])
    y = np.zeros((T.shape[0], K * n_test))
    y[act] = np.repeat(T[act] @ thetas.T, n_test, axis=1) + sigma * z / np.sqrt(eff[act])[:, None]
    est = wls_estimate(T, y, eff).reshape(T.shape[1], K, n_test)
    err = est.transpose(1, 0, 2) - thetas[:, :, None]
    return err[0] if np.ndim(theta0) == 1 else err


def empirical_mse(frf, design, theta0, noise, n_test, seed, mask=None):
    """Mean of ``||theta_hat - theta0||^2`` over ``n_test`` noisy data sets."""
    T = _entries(frf)
    err = _errors(T, design.weights, np.asarray(theta0, float), noise.sigma, derive_rng(seed, "mse"), n_test, mask)
    return float(np.mean(np.sum(err**2, axis=0)))


def empirical_pmse(frf, design, theta0, noise, n_test, seed, mask=None):
    """Mean of ``||T theta_hat - T theta0||^2`` over ``n_test`` noisy data sets."""
    T = _entries(frf)
    err = _errors(T, design.weights, np.asarray(theta0, float), noise.sigma, derive_rng(seed, "mse"), n_test, mask)
    return float(np.mean(np.sum((T @ err) ** 2, axis=0)))


def _mse_pmse(T, Ts, w, thetas, sigma, rng, n_test, mask=None):
    """Draw-averaged MSE and PMSE; each draw's mean is taken over ``n_test``."""
    err = _errors(Ts, w, thetas, sigma, rng, n_test, mask)
    mse = np.mean(np.sum(err**2, axis=1), axis=1)
    pmse = np.mean(np.sum(np.einsum("ij,kjt->kit", T, err) ** 2, axis=1), axis=1)
    return float(np.mean(mse)), float(np.mean(pmse))


def mse_over_failures(frf, design, scenarios, dist, noise, n_test, seed,
                      illposed_policy="exclude", threads=1, eps_rank=EPS_RANK):
    """Per-scenario MSE and PMSE averaged over the parameter draws.

    Noise streams are keyed by the content of the support-restricted mask,
    so duplicate scenarios get identical values and the result does not
    depend on ``threads``.  Returns ``(mse_report, pmse_report)``.
    """
    _check_policy(illposed_policy)
    T, sup, w, E = _support_view(frf, design, scenarios)
    Ts = T[sup]
    thetas = dist.sample()
    uniq, inverse = np.unique(E, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    _, ok_u, _ = kernels.logdet_batch(Ts, w, uniq, eps_rank)
    if illposed_policy == "error" and not ok_u.all():
        bad = int(np.flatnonzero(~ok_u[inverse])[0])
        raise IllPosedError(scenario=bad, message=f"scenario {bad} leaves the design ill-posed")
    key = sup.astype("<i8").tobytes() + w.astype("<f8").tobytes()

    def cell(u):
        if not ok_u[u]:
            return math.nan, math.nan
        rng = content_rng(seed, "mse_over_failures", key + np.packbits(uniq[u] > 0).tobytes())
        return _mse_pmse(T, Ts, w, thetas, noise.sigma, rng, n_test, uniq[u])

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            cells = list(pool.map(cell, range(uniq.shape[0])))
    else:
        cells = [cell(u) for u in range(uniq.shape[0])]
    cells = np.array(cells, dtype=float).reshape(-1, 2)
    ok = ok_u[inverse]

    nofail = [math.nan, math.nan]
    full = np.ones(sup.size)
    _, ok0, _ = kernels.logdet_batch(Ts, w, full[None, :], eps_rank)
    if ok0[0]:
        rng = content_rng(seed, "mse_over_failures", key + np.packbits(full > 0).tobytes())
        nofail = list(_mse_pmse(T, Ts, w, thetas, noise.sigma, rng, n_test))
    seeds = {"seed": int(seed), "theta0_seed": int(dist.seed)}
    meta = {"n_draws": dist.n_draws, "n_test": int(n_test), "unique_masks": int(uniq.shape[0])}
    return tuple(
        PerformanceReport.from_values(
            cells[inverse, k], ok, metric, illposed_policy, nofail[k], seeds=dict(seeds), metadata=dict(meta)
        )
        for k, metric in enumerate(("empirical_mse", "empirical_pmse"))
    )


# ---------------------------------------------------------------------------
# baselines


def capped_scale(u, target):
    """Weights ``min(1, s u)`` with the scale ``s`` chosen so they sum to ``target``."""
    u = np.asarray(u, dtype=float)
    if target >= np.count_nonzero(u > 0):
        return (u > 0).astype(float)
    order = np.sort(u)[::-1]
    # with the k largest capped at 1 the rest scale as s*u
    for k in range(order.size):
        rest = order[k:].sum()
        s = (target - k) / rest if rest > 0 else math.inf
        if k == order.size - 1 or s * order[k] <= 1.0:
            break
    return np.minimum(1.0, s * u)


def random_designs(n_y, support_size, count, seed, kind="fractional", budget_fraction=1.0):
    """Random baseline designs on random supports of size ``support_size``.

    Fractional designs draw ``U[0, 1)`` weights on the support and rescale
    them (capped at 1) to sum to ``support_size * budget_fraction``; binary
    designs put unit weight on the support.  Budget and costs are taken as
    that weight sum and ones.
    """
    if not 1 <= support_size <= n_y:
        raise ValueError(f"support_size must lie in [1, {n_y}]")
    if kind not in ("fractional", "binary"):
        raise ValueError(f"unknown design kind {kind!r}")
    target = support_size * (budget_fraction if kind == "fractional" else 1.0)
    out = []
    for k in range(count):
        rng = derive_rng(seed, "random_design", k)
        sup = np.sort(rng.choice(n_y, size=support_size, replace=False))
        w = np.zeros(n_y)
        if kind == "binary":
            w[sup] = 1.0
        else:
            w[sup] = capped_scale(rng.random(support_size), target)
        out.append(Design(w, np.ones(n_y), max(target, w.sum())))
    return out
