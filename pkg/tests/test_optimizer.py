import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robust_oed import criteria as cr
from robust_oed import optimizer as op
from robust_oed.errors import CombinatorialGuardError, IllPosedError, InfeasibleError, InvalidConfigError
from robust_oed.inverse import Design, NoiseModel
from robust_oed.scenarios import one_out_scenarios

from conftest import random_frf


def exact_projection(v, c, b):
    """Breakpoint search: w(lam) = clip(v - lam c, 0, 1) is piecewise linear in lam."""
    w = np.clip(v, 0, 1)
    if c @ w <= b:
        return w
    bps = np.unique(np.concatenate([v / c, (v - 1) / c, [0.0]]))
    bps = bps[bps >= 0]
    f = [c @ np.clip(v - lam * c, 0, 1) - b for lam in bps]
    for k in range(len(bps) - 1):
        if f[k] >= 0 >= f[k + 1]:
            lo, hi = bps[k], bps[k + 1]
            # linear on [lo, hi]
            lam = lo + (hi - lo) * f[k] / (f[k] - f[k + 1])
            return np.clip(v - lam * c, 0, 1)
    raise AssertionError("no bracket")


class TestConfig:
    def test_grid(self):
        g = op.GammaSweepConfig().grid()
        assert g.size == 100
        assert g[0] == pytest.approx(0.1) and g[-1] == pytest.approx(1e5)
        assert np.allclose(np.diff(np.log10(g)), 6 / 99)

    @pytest.mark.parametrize("kw", [{"shrink": 1.0}, {"grad_tol": 0.0}, {"init": "random"}])
    def test_invalid_optimizer_config(self, kw):
        with pytest.raises(InvalidConfigError):
            op.OptimizerConfig(**kw)

    def test_invalid_sweep(self):
        with pytest.raises(InvalidConfigError):
            op.GammaSweepConfig(gamma_min=0.0)
        with pytest.raises(InvalidConfigError):
            op.GammaSweepConfig(gamma_min=1.0, gamma_max=1.0, count=5)


class TestProjection:
    def test_feasible_unchanged(self):
        v = np.array([0.1, 0.7, 0.0])
        np.testing.assert_array_equal(op.project_feasible(v, np.ones(3), 2.0), v)

    def test_symmetric_split(self):
        np.testing.assert_allclose(op.project_feasible([2.0, 2.0], [1.0, 1.0], 1.0), [0.5, 0.5], atol=1e-10)

    def test_budget_error(self):
        with pytest.raises(InfeasibleError):
            op.project_feasible([1.0], [1.0], 0.0)

    @settings(max_examples=100, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 20))
    def test_matches_exact_oracle(self, seed, n):
        rng = np.random.default_rng(seed)
        v = rng.uniform(-1.0, 2.0, n)
        c = rng.uniform(0.2, 3.0, n)
        b = rng.uniform(0.05, 1.0) * c.sum()
        w = op.project_feasible(v, c, b)
        np.testing.assert_allclose(w, exact_projection(v, c, b), atol=1e-8)
        assert np.all((w >= 0) & (w <= 1)) and c @ w <= b * (1 + 1e-14)


@pytest.fixture
def orthogonal():
    T = np.vstack([np.eye(3), np.eye(3)])
    return T, Design(np.full(6, 0.5), np.ones(6), 3.0)


class TestSolveRelaxed:
    def test_orthogonal_oracle(self, orthogonal):
        T, d0 = orthogonal
        d0 = Design(np.array([0.9, 0.1, 0.3, 0.0, 0.2, 0.4]) * 0.9, np.ones(6), 3.0)
        res = op.solve_relaxed(T, cr.Criterion.classical(), d0, 0.0, op.OptimizerConfig(init="given"))
        w = res.design.weights
        # optimum: each parameter direction gets total weight 1, objective log det(I) = 0
        np.testing.assert_allclose(w[:3] + w[3:], 1.0, atol=1e-6)
        assert res.objective == pytest.approx(0.0, abs=1e-6)

    def test_start_at_optimum(self, orthogonal):
        T, d0 = orthogonal
        res = op.solve_relaxed(T, cr.Criterion.classical(), d0, 0.0, op.OptimizerConfig(init="given"))
        assert res.iterations <= 1 and res.converged

    def test_trace_monotone_and_feasible(self, rng):
        frf = random_frf(rng, 30, 4)
        d0 = Design.uniform(30, 6.0)
        crit = cr.Criterion.scenario_avg(one_out_scenarios(30))
        for gamma in (0.0, 3.0):
            res = op.solve_relaxed(frf, crit, d0, gamma)
            obj = np.array([row[1] for row in res.trace])
            assert np.all(np.diff(obj) <= 0)
            assert res.design.feasible()
            assert np.all((res.design.weights >= 0) & (res.design.weights <= 1))
        assert res.trace[-1][2] + gamma * res.trace[-1][3] == pytest.approx(res.trace[-1][1])

    def test_descent_at_zero_gamma(self, rng):
        frf = random_frf(rng, 20, 3)
        d0 = Design.uniform(20, 5.0)
        crit = cr.Criterion.classical()
        res = op.solve_relaxed(frf, crit, d0)
        assert res.criterion <= cr.evaluate(crit, frf, d0)

    def test_deterministic(self, rng):
        frf = random_frf(rng, 20, 3)
        d0 = Design.uniform(20, 5.0)
        a = op.solve_relaxed(frf, cr.Criterion.classical(), d0, 1.0)
        b = op.solve_relaxed(frf, cr.Criterion.classical(), d0, 1.0)
        assert a.design.weights.tobytes() == b.design.weights.tobytes()

    def test_illposed_start(self):
        d0 = Design(np.array([1.0, 0.0, 0.0]), budget=1.0)
        with pytest.raises(IllPosedError):
            op.solve_relaxed(np.eye(3), cr.Criterion.classical(), d0, 0.0, op.OptimizerConfig(init="given"))

    def test_trace_csv(self, rng, tmp_path):
        frf = random_frf(rng, 10, 2)
        res = op.solve_relaxed(frf, cr.Criterion.classical(), Design.uniform(10, 3.0), 0.0,
                               op.OptimizerConfig(max_iters=5))
        res.write_trace(tmp_path / "t.csv")
        lines = (tmp_path / "t.csv").read_text().splitlines()
        assert lines[0] == "iter,objective,criterion,penalty,step,proj_grad_norm"
        assert len(lines) == len(res.trace) + 1


class TestSweep:
    def test_single_gamma_is_solve_relaxed(self, rng):
        frf = random_frf(rng, 12, 3)
        d0 = Design.uniform(12, 4.0)
        crit = cr.Criterion.classical()
        sw = op.gamma_sweep(frf, crit, d0, op.GammaSweepConfig(2.0, 2.0, 1))
        res = op.solve_relaxed(frf, crit, d0, 2.0)
        np.testing.assert_array_equal(sw.results[0].design.weights, res.design.weights)

    def test_selected_binary_and_bounded(self, rng):
        frf = random_frf(rng, 12, 3)
        d0 = Design.uniform(12, 4.0)
        crit = cr.Criterion.classical()
        sw = op.gamma_sweep(frf, crit, d0, op.GammaSweepConfig(0.1, 1e3, 12))
        assert not sw.fallback
        assert sw.design.is_binary(0.0) and sw.design.feasible()
        relaxed = op.solve_relaxed(frf, crit, d0).criterion
        assert sw.criterion >= relaxed - 1e-9
        assert sw.rows[sw.selected_index]["selected"]
        assert len(sw.rows) == 12

    def test_fallback_rounds(self, rng):
        frf = random_frf(rng, 12, 3)
        d0 = Design.uniform(12, 4.0)
        sw = op.gamma_sweep(frf, cr.Criterion.classical(), d0, op.GammaSweepConfig(1e-3, 1e-3, 1, binary_tol=1e-300))
        if sw.fallback:
            assert sw.fractional is not None
            assert sw.design.is_binary(0.0) and sw.design.feasible()

    def test_threads_and_warm_start(self, rng, tmp_path):
        frf = random_frf(rng, 12, 3)
        d0 = Design.uniform(12, 4.0)
        crit = cr.Criterion.classical()
        cfg = op.GammaSweepConfig(0.1, 100.0, 6)
        a = op.gamma_sweep(frf, crit, d0, cfg, threads=1)
        b = op.gamma_sweep(frf, crit, d0, cfg, threads=3)
        a.write_report(tmp_path / "a.csv")
        b.write_report(tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        w = op.gamma_sweep(frf, crit, d0, cfg, warm_start=True)
        assert w.design.feasible()


class TestRounding:
    def test_examples(self):
        d = op.round_design(Design([0.9, 0.5, 0.4], budget=2.0))
        np.testing.assert_array_equal(d.weights, [1, 1, 0])

    def test_idempotent(self):
        d = Design([1.0, 0.0, 1.0], budget=2.0)
        np.testing.assert_array_equal(op.round_design(d).weights, d.weights)

    def test_ties_to_lower_index(self):
        d = op.round_design(Design([0.5, 0.5, 0.5, 0.5], budget=2.0))
        np.testing.assert_array_equal(d.weights, [1, 1, 0, 0])

    def test_costs(self):
        d = op.round_design(Design([0.9, 0.8, 0.1], [2.0, 1.0, 1.0], budget=2.0))
        np.testing.assert_array_equal(d.weights, [1, 0, 0])


class TestExhaustive:
    def test_more_sensors_never_hurt(self, rng):
        frf = random_frf(rng, 4, 2)
        d = op.exhaustive_binary(frf, cr.Criterion.classical(), np.ones(4), 4.0)
        np.testing.assert_array_equal(d.weights, np.ones(4))

    def test_independent_enumeration(self, rng):
        frf = random_frf(rng, 10, 3)
        T = frf.entries
        best = min(
            itertools.combinations(range(10), 4),
            key=lambda s: -np.linalg.slogdet(T[list(s)].T @ T[list(s)])[1],
        )
        d = op.exhaustive_binary(frf, cr.Criterion.classical(), np.ones(10), 4.0)
        assert tuple(np.flatnonzero(d.weights)) == best

    def test_robust_criterion(self, rng):
        frf = random_frf(rng, 8, 2)
        crit = cr.Criterion.scenario_avg(one_out_scenarios(8))
        d = op.exhaustive_binary(frf, crit, np.ones(8), 4.0)
        val = cr.evaluate(crit, frf, d)
        for s in itertools.combinations(range(8), 4):
            w = np.zeros(8)
            w[list(s)] = 1.0
            assert val <= cr.evaluate(crit, frf, w) + 1e-12

    def test_tie_break_lexicographic(self):
        T = np.vstack([np.eye(2), np.eye(2)])
        d = op.exhaustive_binary(T, cr.Criterion.classical(), np.ones(4), 2.0)
        np.testing.assert_array_equal(d.weights, [1, 1, 0, 0])

    def test_guard(self, rng):
        frf = random_frf(rng, 60, 2)
        with pytest.raises(CombinatorialGuardError):
            op.exhaustive_binary(frf, cr.Criterion.classical(), np.ones(60), 10.0)

    def test_all_ill_posed(self, rng):
        frf = random_frf(rng, 6, 3)
        with pytest.raises(IllPosedError):
            op.exhaustive_binary(frf, cr.Criterion.classical(), np.ones(6), 2.0)
