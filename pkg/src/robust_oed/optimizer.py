"""Projected-gradient solver for the relaxed design problem and the gamma sweep.

The relaxed objective is ``criterion(w) + gamma * sum_i w_i (1 - w_i)`` over
``{w in [0, 1]^n : c^T w <= b}``.  Binary designs come out of a sweep over
``gamma``; greedy rounding and exhaustive enumeration serve as baselines.
"""

from __future__ import annotations

import csv
import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import criteria, kernels
from .errors import CombinatorialGuardError, IllPosedError, InfeasibleError, InvalidConfigError
from .inverse import Design
from .structural_model import EPS_RANK

GUARD = 1_000_000
TRACE_COLUMNS = ("iter", "objective", "criterion", "penalty", "step", "proj_grad_norm")


@dataclass(frozen=True)
class OptimizerConfig:
    max_iters: int = 2000
    grad_tol: float = 1e-8
    ftol: float = 1e-10
    stall_window: int = 10
    c1: float = 1e-4
    shrink: float = 0.5
    max_backtracks: int = 40
    init: str = "uniform_feasible"
    seed: int = 0

    def __post_init__(self):
        if self.max_iters < 0 or self.max_backtracks < 1:
            raise InvalidConfigError("max_iters must be >= 0 and max_backtracks >= 1")
        if self.stall_window < 1:
            raise InvalidConfigError("stall_window must be >= 1")
        if not (self.grad_tol > 0 and self.c1 > 0 and self.ftol >= 0):
            raise InvalidConfigError("tolerances must be positive")
        if not 0 < self.shrink < 1:
            raise InvalidConfigError("armijo shrink must lie in (0, 1)")
        if self.init not in ("uniform_feasible", "given"):
            raise InvalidConfigError(f"unknown init {self.init!r}")


@dataclass(frozen=True)
class GammaSweepConfig:
    gamma_min: float = 1e-1
    gamma_max: float = 1e5
    count: int = 100
    binary_tol: float = 1e-3

    def __post_init__(self):
        if self.count < 1:
            raise InvalidConfigError("gamma count must be >= 1")
        if not 0 < self.gamma_min <= self.gamma_max:
            raise InvalidConfigError("need 0 < gamma_min <= gamma_max")
        if self.count >= 2 and not self.gamma_min < self.gamma_max:
            raise InvalidConfigError("need gamma_min < gamma_max for a grid")
        if not self.binary_tol > 0:
            raise InvalidConfigError("binary_tol must be positive")

    def grid(self):
        if self.count == 1:
            return np.array([self.gamma_min])
        return np.logspace(np.log10(self.gamma_min), np.log10(self.gamma_max), self.count)


# ---------------------------------------------------------------------------
# projection


def project_feasible(v, costs, budget, tol=1e-10):
    """Euclidean projection onto ``{w in [0,1]^n : c^T w <= b}``.

    Bisection on the multiplier ``lam`` of ``w(lam) = clip(v - lam c, 0, 1)``;
    the upper bracket is kept so the result always satisfies the budget.
    """
    v = np.asarray(v, dtype=float)
    c = np.asarray(costs, dtype=float)
    if not budget > 0:
        raise InfeasibleError(f"budget must be positive, got {budget}")
    if np.any(c <= 0):
        raise InfeasibleError("costs must be positive")
    w = np.clip(v, 0.0, 1.0)
    if c @ w <= budget:
        return w
    lo, hi = 0.0, float(np.max(v / c))
    target = tol * budget
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        excess = c @ np.clip(v - mid * c, 0.0, 1.0) - budget
        if excess > 0:
            lo = mid
        else:
            hi = mid
            if -excess <= target:
                break
        if hi - lo <= 4 * np.finfo(float).eps * max(hi, 1.0):
            break
    # w(lam) is linear between breakpoints: solve exactly on the bracketed piece
    z = v - hi * c
    free = (z > 0.0) & (z < 1.0)
    if free.any():
        lam = (c[free] @ v[free] + c[(z >= 1.0)].sum() - budget) / (c[free] @ c[free])
        w = np.clip(v - lam * c, 0.0, 1.0)
        if lo <= lam <= hi and c @ w <= budget * (1.0 + 1e-14):
            return w
    return np.clip(z, 0.0, 1.0)


# ---------------------------------------------------------------------------
# relaxed solve


@dataclass
class RelaxedResult:
    design: Design
    gamma: float
    objective: float
    criterion: float
    penalty: float
    iterations: int
    converged: bool
    proj_grad_norm: float
    warning: str | None = None
    trace: list = field(default_factory=list)

    def write_trace(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(TRACE_COLUMNS)
            for row in self.trace:
                writer.writerow([row[0]] + [repr(float(x)) for x in row[1:]])


def _objective(criterion, T, w, gamma):
    """Penalized objective or ``inf`` where the criterion is ill-posed."""
    terms, ok = criteria.evaluate_terms(criterion, T, w)
    if not ok.all():
        return math.inf, math.inf
    crit = float(terms.mean())
    return crit + gamma * float(np.sum(w * (1.0 - w))), crit


def solve_relaxed(frf, criterion, design0, gamma=0.0, config=OptimizerConfig()):
    """Projected gradient descent with BB steps and Armijo backtracking.

    Stops when the projected gradient norm reaches ``grad_tol`` (converged),
    or with a warning when the objective has decreased by less than
    ``ftol * max(1, |f|)`` over the last ``stall_window`` iterations, the
    line search fails, or ``max_iters`` is hit.
    """
    T = frf.entries if hasattr(frf, "entries") else np.asarray(frf, dtype=float)
    c, b = design0.costs, design0.budget
    if config.init == "uniform_feasible":
        w = np.full(design0.n_y, min(1.0, b / c.sum()))
    else:
        w = project_feasible(design0.weights, c, b)
    try:
        crit, g_crit = criteria.value_and_gradient(criterion, T, w)
    except IllPosedError as exc:
        raise IllPosedError(exc.rank, "criterion is ill-posed at the initial design") from exc
    pen = float(np.sum(w * (1.0 - w)))
    f = crit + gamma * pen
    g = g_crit + gamma * (1.0 - 2.0 * w)

    def pg_norm(w, g):
        return float(np.linalg.norm(w - project_feasible(w - g, c, b)))

    pgn = pg_norm(w, g)
    trace = [(0, f, crit, pen, 0.0, pgn)]
    step = 1.0 / max(float(np.max(np.abs(g))), 1e-12)
    w_prev = g_prev = None
    converged, warning, it = pgn <= config.grad_tol, None, 0
    while not converged and it < config.max_iters:
        if w_prev is not None:
            s, y = w - w_prev, g - g_prev
            sy = float(s @ y)
            if sy > 0:
                step = float(s @ s) / sy
            step = min(max(step, 1e-12), 1e12)
        slope_ok = False
        for _ in range(config.max_backtracks):
            w_new = project_feasible(w - step * g, c, b)
            d = w_new - w
            f_new, crit_new = _objective(criterion, T, w_new, gamma)
            if f_new <= f + config.c1 * float(g @ d):
                slope_ok = True
                break
            step *= config.shrink
        if not slope_ok:
            warning = "line search exhausted before reaching grad_tol"
            break
        it += 1
        w_prev, g_prev = w, g
        w, f = w_new, f_new
        crit, g_crit = criteria.value_and_gradient(criterion, T, w)
        pen = float(np.sum(w * (1.0 - w)))
        g = g_crit + gamma * (1.0 - 2.0 * w)
        pgn = pg_norm(w, g)
        trace.append((it, f, crit, pen, step, pgn))
        converged = pgn <= config.grad_tol
        k = config.stall_window
        if not converged and it >= k and trace[-1 - k][1] - f <= config.ftol * max(1.0, abs(f)):
            warning = "objective stalled before reaching grad_tol"
            break
    if not converged and warning is None:
        warning = "max_iters reached"
    return RelaxedResult(
        design=design0.with_weights(w),
        gamma=float(gamma),
        objective=f,
        criterion=crit,
        penalty=pen,
        iterations=it,
        converged=converged,
        proj_grad_norm=pgn,
        warning=warning,
        trace=trace,
    )


# ---------------------------------------------------------------------------
# gamma sweep


@dataclass
class SweepResult:
    design: Design
    selected_index: int | None
    fallback: bool
    results: list
    rows: list
    fractional: Design | None = None

    @property
    def criterion(self):
        return self.rows[self.selected_index]["snapped_criterion"] if not self.fallback else None

    def write_report(self, path):
        cols = ["index", "gamma", "objective", "criterion", "binary_distance", "binary",
                "feasible", "snapped_criterion", "iterations", "converged", "selected"]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(cols)
            for r in self.rows:
                writer.writerow([_fmt(r[k]) for k in cols])


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return int(x)
    if isinstance(x, float):
        return repr(x)
    return x


def snap(design, tol):
    """Round a near-binary design to exact 0/1 or return None."""
    w = design.weights
    if np.all(np.minimum(w, 1.0 - w) <= tol):
        return design.with_weights(np.where(w >= 0.5, 1.0, 0.0))
    return None


def gamma_sweep(frf, criterion, design0, sweep=GammaSweepConfig(), config=OptimizerConfig(),
                warm_start=False, threads=1):
    """Solve across the gamma grid; keep the best binary feasible result.

    Grid points run independently unless ``warm_start`` (then sequentially,
    each starting from the previous solution).  Ordering and selection do
    not depend on ``threads``.
    """
    gammas = sweep.grid()
    if warm_start:
        results, start = [], design0
        cfg = OptimizerConfig(**{**config.__dict__, "init": "given"})
        for k, gmm in enumerate(gammas):
            res = solve_relaxed(frf, criterion, start, gmm, config if k == 0 else cfg)
            results.append(res)
            start = res.design
    elif threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda gmm: solve_relaxed(frf, criterion, design0, gmm, config), gammas))
    else:
        results = [solve_relaxed(frf, criterion, design0, gmm, config) for gmm in gammas]

    rows, best = [], None
    for k, res in enumerate(results):
        w = res.design.weights
        row = {
            "index": k,
            "gamma": float(res.gamma),
            "objective": float(res.objective),
            "criterion": float(res.criterion),
            "binary_distance": float(np.max(np.minimum(w, 1.0 - w))),
            "binary": False,
            "feasible": res.design.feasible(),
            "snapped_criterion": math.nan,
            "iterations": res.iterations,
            "converged": res.converged,
            "selected": False,
        }
        snapped = snap(res.design, sweep.binary_tol)
        if snapped is not None and snapped.feasible():
            row["binary"] = True
            try:
                row["snapped_criterion"] = criteria.evaluate(criterion, frf, snapped)
            except IllPosedError:
                pass
            v = row["snapped_criterion"]
            if not math.isnan(v) and (best is None or v < best[1]):
                best = (k, v, snapped)
        rows.append(row)

    if best is not None:
        rows[best[0]]["selected"] = True
        return SweepResult(best[2], best[0], False, results, rows)
    frac = min(results, key=lambda r: r.criterion)
    return SweepResult(round_design(frac.design), None, True, results, rows, fractional=frac.design)


# ---------------------------------------------------------------------------
# baselines


def round_design(design):
    """Greedy rounding: largest weights first, ties to the lower index."""
    w, c = design.weights, design.costs
    order = np.lexsort((np.arange(w.size), -w))
    out = np.zeros_like(w)
    spent = 0.0
    for i in order:
        if w[i] <= 0:
            break
        if spent + c[i] <= design.budget + 1e-12:
            out[i] = 1.0
            spent += c[i]
    return design.with_weights(out)


def count_feasible_supports(costs, budget):
    """Upper bound on the number of supports with ``sum(c) <= b``."""
    c = np.sort(np.asarray(costs, dtype=float))
    kmax = int(np.searchsorted(np.cumsum(c), budget + 1e-12, side="right"))
    return sum(math.comb(c.size, k) for k in range(kmax + 1))


def exhaustive_binary(frf, criterion, costs, budget, guard=GUARD, chunk=4096):
    """Enumerate every binary feasible design and return the minimiser.

    Ties are broken by the lexicographically smallest support.
    """
    T = frf.entries if hasattr(frf, "entries") else np.asarray(frf, dtype=float)
    n_y = T.shape[0]
    c = np.asarray(costs, dtype=float)
    if not budget > 0:
        raise InfeasibleError(f"budget must be positive, got {budget}")
    n_sup = count_feasible_supports(c, budget)
    if n_sup > guard:
        raise CombinatorialGuardError(
            f"{n_sup} candidate supports exceed the guard of {guard}; use the relaxed solver"
        )
    kmax = int(np.searchsorted(np.cumsum(np.sort(c)), budget + 1e-12, side="right"))
    supports = [
        s for k in range(kmax + 1) for s in itertools.combinations(range(n_y), k)
        if c[list(s)].sum() <= budget + 1e-12
    ]
    supports.sort()
    base = criterion.scenario_rows(n_y)
    values = np.full(len(supports), np.inf)
    ones = np.ones(n_y)
    for start in range(0, len(supports), chunk):
        block = supports[start:start + chunk]
        ind = np.zeros((len(block), n_y))
        for r, s in enumerate(block):
            ind[r, list(s)] = 1.0
        if base.shape[0] == 1:
            ld, ok, _ = kernels.logdet_batch(T, ones, ind * base, EPS_RANK)
            vals = np.where(ok, -ld, np.inf)
        else:
            vals = np.empty(len(block))
            for r in range(len(block)):
                ld, ok, _ = kernels.logdet_batch(T, ind[r], base, EPS_RANK)
                vals[r] = -ld.mean() if ok.all() else np.inf
        values[start:start + len(block)] = vals
    if not np.isfinite(values).any():
        raise IllPosedError(message=f"every one of the {len(supports)} feasible binary designs is ill-posed")
    best = int(np.argmin(values))  # first minimiser = lexicographically smallest support
    w = np.zeros(n_y)
    w[list(supports[best])] = 1.0
    return Design(w, c, budget)
