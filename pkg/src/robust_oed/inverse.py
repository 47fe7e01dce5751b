"""Weighted least squares and design-dependent covariance operators."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from .errors import IllPosedError, InsufficientDataError
from .structural_model import EPS_RANK

TAU_BIN = 1e-6
SCENARIO_KINDS = ("survival_probabilities", "deterministic_masks")


def _vector(x, name):
    a = np.array(x, dtype=float, copy=True)
    if a.ndim != 1:
        raise ValueError(f"{name} must be a 1-D vector")
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Design:
    """Sensor weights in [0, 1] with per-sensor costs and a total budget."""

    weights: np.ndarray
    costs: np.ndarray = None
    budget: float = None

    def __post_init__(self):
        w = _vector(self.weights, "weights")
        object.__setattr__(self, "weights", w)
        if np.any(~np.isfinite(w)) or np.any(w < 0) or np.any(w > 1):
            raise ValueError("design weights must lie in [0, 1]")
        c = np.ones_like(w) if self.costs is None else _vector(self.costs, "costs")
        if c.shape != w.shape:
            raise ValueError("costs and weights must have the same length")
        if np.any(c <= 0):
            raise ValueError("sensor costs must be positive")
        object.__setattr__(self, "costs", c)
        budget = float(c.sum()) if self.budget is None else float(self.budget)
        if not budget > 0:
            raise ValueError("budget must be positive")
        object.__setattr__(self, "budget", budget)

    @property
    def n_y(self):
        return self.weights.shape[0]

    def is_binary(self, tol=TAU_BIN):
        w = self.weights
        return bool(np.all(np.minimum(w, 1.0 - w) <= tol))

    def feasible(self):
        return bool(self.costs @ self.weights <= self.budget * (1.0 + 1e-12))

    def support(self):
        return np.flatnonzero(self.weights > 0)

    def cost(self):
        return float(self.costs @ self.weights)

    def with_weights(self, weights):
        return Design(weights, self.costs, self.budget)

    @classmethod
    def uniform(cls, n_y, budget, costs=None):
        """Uniform feasible point ``w_i = min(1, b / sum(c))``."""
        c = np.ones(n_y) if costs is None else np.asarray(costs, dtype=float)
        return cls(np.full(n_y, min(1.0, budget / c.sum())), c, budget)

    def to_dict(self):
        return {
            "weights": self.weights.tolist(),
            "costs": self.costs.tolist(),
            "budget": self.budget,
            "binary": self.is_binary(),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(data["weights"], data.get("costs"), data.get("budget"))


@dataclass(frozen=True, eq=False)
class ScenarioSet:
    """Stack of diagonal failure operators, one row per scenario.

    ``kind == "deterministic_masks"`` rows are 0/1 (0 = sensor lost);
    ``kind == "survival_probabilities"`` rows hold ``1 - q_i``.
    """

    kind: str
    entries: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in SCENARIO_KINDS:
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        # large mask stacks are adopted without a copy when already float64
        e = np.asarray(self.entries, dtype=float)
        if e is self.entries and e.flags.writeable and e.size < 1_000_000:
            e = e.copy()
        if e.ndim == 1:
            e = e[None, :]
        if e.ndim != 2:
            raise ValueError("scenario entries must be a 2-D array")
        if np.any(~np.isfinite(e)) or np.any(e < 0) or np.any(e > 1):
            raise ValueError("scenario entries must lie in [0, 1]")
        if self.kind == "deterministic_masks" and np.any((e != 0) & (e != 1)):
            raise ValueError("deterministic masks must be strictly 0/1")
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    @property
    def n_scenarios(self):
        return self.entries.shape[0]

    @property
    def n_y(self):
        return self.entries.shape[1]

    def __len__(self):
        return self.n_scenarios


@dataclass(frozen=True)
class NoiseModel:
    """i.i.d. Gaussian noise with standard deviation ``sigma``."""

    sigma: float = 1.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("noise sigma must be positive")

    @property
    def variance(self):
        return self.sigma**2


# ---------------------------------------------------------------------------


def _entries(frf):
    return frf.entries if hasattr(frf, "entries") else np.asarray(frf, dtype=float)


def _weights(design):
    return design.weights if isinstance(design, Design) else np.asarray(design, dtype=float)


def information_matrix(frf, weights):
    """``sum_i weights_i t_i t_i^T``."""
    T = _entries(frf)
    return (T * np.asarray(weights, dtype=float)[:, None]).T @ T


def check_well_posed(M, eps_rank=EPS_RANK, scenario=None):
    """Raise :class:`IllPosedError` unless ``cond(M) < 1/eps_rank``."""
    lam = np.linalg.eigvalsh(M)
    if not (lam[-1] > 0 and lam[0] > eps_rank * lam[-1]):
        rank = int(np.sum(lam > eps_rank * max(lam[-1], 0.0))) if lam[-1] > 0 else 0
        raise IllPosedError(rank, scenario=scenario)


def _spd_inverse(M):
    c = la.cho_factor(M, lower=True)
    return la.cho_solve(c, np.eye(M.shape[0]))


def wls_estimate(frf, data, design, mask=None, eps_rank=EPS_RANK):
    """Minimise ``sum_i m_i w_i (y_i - t_i^T theta)^2``.

    ``data`` may be a single observation vector or an ``n_y x K`` stack of
    them; the estimate has the matching shape.  Solved by SVD-based least
    squares on the row-scaled system.
    """
    T = _entries(frf)
    y = np.asarray(data, dtype=float)
    if y.shape[0] != T.shape[0]:
        raise ValueError(f"data must have {T.shape[0]} rows, got {y.shape[0]}")
    eff = _weights(design) if mask is None else _weights(design) * np.asarray(mask, dtype=float)
    active = eff > 0
    sq = np.sqrt(eff[active])
    A = T[active] * sq[:, None]
    if A.shape[0] == 0:
        raise IllPosedError(0)
    s = np.linalg.svd(A, compute_uv=False)
    lam = s**2
    if lam.size < T.shape[1] or not (lam[0] > 0 and lam[-1] > eps_rank * lam[0]):
        rank = int(np.sum(lam > eps_rank * lam[0])) if lam.size and lam[0] > 0 else 0
        raise IllPosedError(rank)
    b = y[active] * (sq[:, None] if y.ndim == 2 else sq)
    theta, *_ = np.linalg.lstsq(A, b, rcond=None)
    return theta


def covariance(frf, design, noise, eps_rank=EPS_RANK):
    """``sigma^2 (T^T W T)^{-1}``."""
    M = information_matrix(frf, _weights(design))
    check_well_posed(M, eps_rank)
    return noise.variance * _spd_inverse(M)


def dropout_covariance(frf, design, survival, noise, eps_rank=EPS_RANK):
    """``sigma^2 (sum_i s_i w_i t_i t_i^T)^{-1}`` for survival probabilities ``s``."""
    s = np.asarray(survival, dtype=float)
    M = information_matrix(frf, _weights(design) * s)
    check_well_posed(M, eps_rank)
    return noise.variance * _spd_inverse(M)


def logdet_spd(C):
    c, _ = la.cho_factor(C, lower=True)
    return 2.0 * float(np.sum(np.log(np.diag(c))))


def estimate_noise_variance(frf, data, design, survival, theta_hat):
    """Survival-weighted residual mean square, divisor ``n_eff - n_theta``.

    ``n_eff`` counts observations with ``survival_i * w_i > 0``.
    """
    T = _entries(frf)
    eff = _weights(design) * np.asarray(survival, dtype=float)
    n_eff = int(np.count_nonzero(eff > 0))
    dof = n_eff - T.shape[1]
    if dof <= 0:
        raise InsufficientDataError(
            f"{n_eff} active observations for {T.shape[1]} parameters: no residual degrees of freedom"
        )
    r = np.asarray(data, dtype=float) - T @ np.asarray(theta_hat, dtype=float)
    return float(eff @ r**2 / dof)
