"""Log-determinant OED criteria, the double-well penalty, and their gradients.

All three criterion kinds reduce to averages of
``log det(sigma^2 M(s)^{-1}) = n_theta * log(sigma^2) - log det M(s)`` over a
stack of scenario weight rows ``s`` (all ones, a survival vector, or a set
of failure masks), so they share one batch kernel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import IllPosedError
from .inverse import Design, NoiseModel, ScenarioSet
from .structural_model import EPS_RANK

KINDS = ("classical_logdet", "pof_logdet", "scenario_avg_logdet")
ILLPOSED_POLICIES = ("exclude", "zero", "error")


@dataclass(frozen=True, eq=False)
class Criterion:
    kind: str
    noise: NoiseModel = NoiseModel()
    survival: np.ndarray = None
    scenarios: ScenarioSet = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown criterion kind {self.kind!r}")
        if (self.survival is not None) != (self.kind == "pof_logdet"):
            raise ValueError("survival is required for (and only for) pof_logdet")
        if (self.scenarios is not None) != (self.kind == "scenario_avg_logdet"):
            raise ValueError("scenarios are required for (and only for) scenario_avg_logdet")
        if self.survival is not None:
            s = np.array(self.survival, dtype=float)
            if s.ndim != 1 or np.any(s < 0) or np.any(s > 1):
                raise ValueError("survival must be a vector of probabilities")
            s.setflags(write=False)
            object.__setattr__(self, "survival", s)
        if self.scenarios is not None and self.scenarios.n_scenarios == 0:
            raise ValueError("scenario set is empty")

    @classmethod
    def classical(cls, noise=NoiseModel()):
        return cls("classical_logdet", noise)

    @classmethod
    def pof(cls, survival, noise=NoiseModel()):
        return cls("pof_logdet", noise, survival=survival)

    @classmethod
    def scenario_avg(cls, scenarios, noise=NoiseModel()):
        return cls("scenario_avg_logdet", noise, scenarios=scenarios)

    def scenario_rows(self, n_y):
        if self.kind == "classical_logdet":
            return np.ones((1, n_y))
        if self.kind == "pof_logdet":
            rows = self.survival[None, :]
        else:
            rows = self.scenarios.entries
        if rows.shape[1] != n_y:
            raise ValueError(f"criterion defined for {rows.shape[1]} sensors, design has {n_y}")
        return rows


def _weights(design):
    return design.weights if isinstance(design, Design) else np.asarray(design, dtype=float)


def _entries(frf):
    return frf.entries if hasattr(frf, "entries") else np.asarray(frf, dtype=float)


def evaluate_terms(criterion, frf, design, quad=False, eps_rank=EPS_RANK):
    """Per-scenario ``log det C`` values (NaN where ill-posed) and ok flags.

    With ``quad`` also returns ``Q[j, i] = t_i^T M_j^{-1} t_i``.
    """
    T = _entries(frf)
    w = _weights(design)
    rows = criterion.scenario_rows(T.shape[0])
    logdet_m, ok, Q = kernels.logdet_batch(T, w, rows, eps_rank, quad=quad)
    terms = T.shape[1] * np.log(criterion.noise.variance) - logdet_m
    return (terms, ok, Q) if quad else (terms, ok)


def evaluate(criterion, frf, design, illposed_policy="error", eps_rank=EPS_RANK):
    """Scalar criterion value.

    Ill-posed scenario terms raise (``"error"``), are dropped from the mean
    (``"exclude"``), or count as zero (``"zero"``).
    """
    if illposed_policy not in ILLPOSED_POLICIES:
        raise ValueError(f"unknown ill-posed policy {illposed_policy!r}")
    terms, ok = evaluate_terms(criterion, frf, design, eps_rank=eps_rank)
    if not ok.all():
        bad = int(np.flatnonzero(~ok)[0])
        if illposed_policy == "error" or criterion.kind != "scenario_avg_logdet":
            raise IllPosedError(scenario=bad if criterion.kind == "scenario_avg_logdet" else None)
        if illposed_policy == "zero":
            return float(np.where(ok, terms, 0.0).mean())
        if not ok.any():
            raise IllPosedError(message="every scenario term is ill-posed")
        return float(terms[ok].mean())
    return float(terms.mean())


def value_and_gradient(criterion, frf, design, eps_rank=EPS_RANK):
    """Criterion value and ``d criterion / d w`` (analytic)."""
    T = _entries(frf)
    rows = criterion.scenario_rows(T.shape[0])
    logdet_m, ok, inv = kernels.factor_batch(T, _weights(design), rows, eps_rank, want_inv=True)
    if not ok.all():
        bad = int(np.flatnonzero(~ok)[0])
        raise IllPosedError(scenario=bad if criterion.kind == "scenario_avg_logdet" else None)
    terms = T.shape[1] * np.log(criterion.noise.variance) - logdet_m
    grad = -kernels.weighted_quad_sum(T, rows, inv) / rows.shape[0]
    return float(terms.mean()), grad


def gradient(criterion, frf, design, eps_rank=EPS_RANK):
    return value_and_gradient(criterion, frf, design, eps_rank)[1]


def double_well(design):
    w = _weights(design)
    return float(np.sum(w * (1.0 - w)))


def double_well_gradient(design):
    return 1.0 - 2.0 * _weights(design)
