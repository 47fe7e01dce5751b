"""Reference comparators for the asymptotic dropout formulation.

* the non-asymptotic covariance ``sigma^2 E[(T^T W Xi T)^{-1}]`` by Monte
  Carlo over Bernoulli survival masks ``Xi``;
* the criterion ``E[det(T^T D T)^{1/n_theta}]`` for a constant failure
  probability ``q``, either as a series over failed-row subsets truncated
  at a given number of failures, or by Monte Carlo.

Subsets always remove observation rows (sensors), never parameters.
Rank-deficient subsets contribute a zero determinant.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from ._rng import derive_rng
from .errors import CombinatorialGuardError, IllPosedError, InvalidConfigError
from .structural_model import EPS_RANK

GUARD = 1_000_000
MIN_ACCEPTANCE = 0.01


@dataclass(frozen=True)
class HAConfig:
    q: float
    truncation_order: int = 0
    mc_samples: int = 100_000
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.q <= 1:
            raise InvalidConfigError("q must lie in [0, 1]")
        if self.truncation_order < 0:
            raise InvalidConfigError("truncation_order must be >= 0")
        if self.mc_samples < 1:
            raise InvalidConfigError("mc_samples must be >= 1")


@dataclass
class NonAsymptoticResult:
    covariance: np.ndarray
    standard_error: np.ndarray
    acceptance_rate: float
    n_accepted: int
    n_rejected: int


def _entries(frf):
    return frf.entries if hasattr(frf, "entries") else np.asarray(frf, dtype=float)


def _support_rows(frf, design):
    T = _entries(frf)
    w = design.weights if hasattr(design, "weights") else np.asarray(design, dtype=float)
    return T[w > 0]


def _root_dets(Ts, masks, eps_rank=EPS_RANK):
    """``det(T^T diag(mask) T)^{1/p}`` per mask row, zero when rank deficient."""
    p = Ts.shape[1]
    ld, ok, _ = kernels.logdet_batch(Ts, np.ones(Ts.shape[0]), masks, eps_rank)
    return np.where(ok, np.exp(np.where(ok, ld, 0.0) / p), 0.0)


def _unique_counts(masks):
    uniq, counts = np.unique(masks, axis=0, return_counts=True)
    return uniq, counts


def non_asymptotic_covariance_mc(frf, design, survival, noise, n_mc, seed, eps_rank=EPS_RANK):
    """Monte Carlo estimate of ``sigma^2 E[(T^T W Xi T)^{-1}]``.

    Ill-posed draws are rejected and counted.  Returns the estimate with its
    per-entry standard errors.
    """
    T = _entries(frf)
    w = design.weights if hasattr(design, "weights") else np.asarray(design, dtype=float)
    s = np.asarray(survival, dtype=float)
    if n_mc < 1:
        raise InvalidConfigError("n_mc must be >= 1")
    masks = (derive_rng(seed, "nonasymptotic").random((n_mc, T.shape[0])) < s).astype(float)
    uniq, counts = _unique_counts(masks)
    inv, ok = kernels.inverse_batch(T, w, uniq, eps_rank)
    n_acc = int(counts[ok].sum())
    rate = n_acc / n_mc
    if rate < MIN_ACCEPTANCE:
        raise IllPosedError(
            message=f"only {rate:.2%} of sampled masks are well-posed; raise the survival probabilities"
        )
    inv, counts = inv[ok], counts[ok]
    if inv.shape[0] == 1:
        mean = inv[0]
        var = np.zeros_like(mean)
    else:
        mean = np.tensordot(counts, inv, axes=1) / n_acc
        dev = inv - mean
        var = np.tensordot(counts, dev**2, axes=1) / max(n_acc - 1, 1)
    return NonAsymptoticResult(
        covariance=noise.variance * mean,
        standard_error=noise.variance * np.sqrt(var / n_acc),
        acceptance_rate=rate,
        n_accepted=n_acc,
        n_rejected=n_mc - n_acc,
    )


def ha_criterion_truncated(frf, design, ha, guard=GUARD):
    """Series over failed-row subsets of the design support, up to ``truncation_order`` failures."""
    Ts = _support_rows(frf, design)
    n, p = Ts.shape
    if ha.truncation_order > n - p:
        raise InvalidConfigError(
            f"truncation_order {ha.truncation_order} exceeds support size minus n_theta ({n - p})"
        )
    order = ha.truncation_order
    total = sum(math.comb(n, k) for k in range(order + 1))
    if total > guard:
        raise CombinatorialGuardError(f"{total} subsets exceed the guard of {guard}")
    q = ha.q
    value = 0.0
    for k in range(order + 1):
        weight = q**k * (1.0 - q) ** (n - k)
        if weight == 0.0:
            continue
        masks = np.ones((math.comb(n, k), n))
        for r, lost in enumerate(itertools.combinations(range(n), k)):
            masks[r, list(lost)] = 0.0
        value += weight * float(_root_dets(Ts, masks).sum())
    return value


def ha_criterion_mc(frf, design, ha):
    """Monte Carlo mean of ``det(T^T D T)^{1/n_theta}`` and its standard error."""
    Ts = _support_rows(frf, design)
    masks = (derive_rng(ha.seed, "ha_mc").random((ha.mc_samples, Ts.shape[0])) >= ha.q).astype(float)
    uniq, counts = _unique_counts(masks)
    vals = _root_dets(Ts, uniq)
    mean = float(counts @ vals / ha.mc_samples)
    if ha.mc_samples < 2:
        return mean, math.nan
    var = float(counts @ (vals - mean) ** 2 / (ha.mc_samples - 1))
    return mean, math.sqrt(var / ha.mc_samples)
