import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from robust_oed.errors import IllPosedError, InsufficientDataError
from robust_oed.inverse import (
    Design,
    NoiseModel,
    ScenarioSet,
    covariance,
    dropout_covariance,
    estimate_noise_variance,
    information_matrix,
    wls_estimate,
)

from conftest import random_frf


class TestDesign:
    def test_defaults(self):
        d = Design([0.0, 1.0, 0.5])
        np.testing.assert_array_equal(d.costs, np.ones(3))
        assert d.budget == 3.0 and d.feasible()

    @pytest.mark.parametrize("w", [[-0.1, 0.5], [0.5, 1.2], [np.nan, 0.0]])
    def test_box(self, w):
        with pytest.raises(ValueError):
            Design(w)

    def test_costs_and_budget_validated(self):
        with pytest.raises(ValueError):
            Design([0.5, 0.5], [1.0, 0.0])
        with pytest.raises(ValueError):
            Design([0.5, 0.5], budget=0.0)

    def test_binary_and_feasible(self):
        assert Design([0.0, 1.0, 1.0 - 1e-7]).is_binary()
        assert not Design([0.0, 0.5]).is_binary()
        assert not Design([1.0, 1.0], budget=1.5).feasible()

    def test_uniform(self):
        d = Design.uniform(267, 12.0)
        assert d.feasible() and d.cost() == pytest.approx(12.0)

    def test_immutable(self):
        d = Design([0.5, 0.5])
        with pytest.raises(ValueError):
            d.weights[0] = 1.0


class TestScenarioSet:
    def test_mask_validation(self):
        with pytest.raises(ValueError):
            ScenarioSet("deterministic_masks", [[0.5, 1.0]])
        with pytest.raises(ValueError):
            ScenarioSet("bogus", [[1.0]])
        s = ScenarioSet("survival_probabilities", [0.9, 0.5])
        assert (s.n_scenarios, s.n_y) == (1, 2)


class TestWLS:
    def test_identity(self):
        y = np.array([1.0, -2.0, 3.0])
        np.testing.assert_allclose(wls_estimate(np.eye(3), y, Design(np.ones(3))), y)

    def test_noiseless_recovery(self, rng):
        frf = random_frf(rng, 20, 4)
        theta = rng.standard_normal(4)
        d = Design(rng.uniform(0.1, 1.0, 20))
        np.testing.assert_allclose(wls_estimate(frf, frf.entries @ theta, d), theta, rtol=1e-10)

    def test_normal_equations(self, rng):
        frf = random_frf(rng, 12, 3)
        w = rng.uniform(0.1, 1.0, 12)
        y = rng.standard_normal(12)
        T = frf.entries
        ref = np.linalg.solve(T.T @ (w[:, None] * T), T.T @ (w * y))
        np.testing.assert_allclose(wls_estimate(frf, y, Design(w)), ref, rtol=1e-10)

    def test_mask_equals_row_deletion(self, rng):
        frf = random_frf(rng, 10, 3)
        y = rng.standard_normal(10)
        mask = np.ones(10)
        mask[[2, 7]] = 0.0
        keep = mask > 0
        a = wls_estimate(frf, y, Design(np.ones(10)), mask=mask)
        b = wls_estimate(frf.entries[keep], y[keep], Design(np.ones(8)))
        np.testing.assert_allclose(a, b, rtol=1e-12)

    def test_stacked_data(self, rng):
        frf = random_frf(rng, 10, 3)
        Y = rng.standard_normal((10, 5))
        d = Design(np.ones(10))
        est = wls_estimate(frf, Y, d)
        for k in range(5):
            np.testing.assert_allclose(est[:, k], wls_estimate(frf, Y[:, k], d), rtol=1e-12)

    def test_ill_posed_reports_rank(self, rng):
        frf = random_frf(rng, 6, 3)
        w = np.zeros(6)
        w[:2] = 1.0
        with pytest.raises(IllPosedError) as err:
            wls_estimate(frf, np.ones(6), Design(w))
        assert err.value.rank == 2
        assert err.value.exit_code == 3


class TestCovariance:
    def test_identity(self):
        np.testing.assert_allclose(covariance(np.eye(3), Design(np.ones(3)), NoiseModel(1.0)), np.eye(3))

    def test_scaling(self):
        C = covariance(2.0 * np.eye(2), Design(np.ones(2)), NoiseModel(3.0))
        np.testing.assert_allclose(C, 9.0 / 4.0 * np.eye(2))

    def test_dropout_reductions(self, rng):
        frf = random_frf(rng, 9, 3)
        d = Design(rng.uniform(0.2, 1.0, 9))
        noise = NoiseModel(0.7)
        np.testing.assert_allclose(dropout_covariance(frf, d, np.ones(9), noise), covariance(frf, d, noise),
                                   rtol=1e-14)
        s = np.ones(9)
        s[4] = 0.0
        keep = s > 0
        ref = covariance(frf.entries[keep], Design(d.weights[keep]), noise)
        np.testing.assert_allclose(dropout_covariance(frf, d, s, noise), ref, rtol=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(s=arrays(float, 8, elements=st.floats(0.05, 1.0)))
    def test_failures_never_add_information(self, s):
        rng = np.random.default_rng(3)
        frf = random_frf(rng, 8, 3)
        d = Design(np.ones(8))
        noise = NoiseModel()
        diff = dropout_covariance(frf, d, s, noise) - covariance(frf, d, noise)
        assert np.linalg.eigvalsh(diff)[0] >= -1e-10 * np.abs(diff).max(initial=1.0)

    def test_ill_posed(self):
        with pytest.raises(IllPosedError):
            covariance(np.eye(3), Design([1.0, 1.0, 0.0]), NoiseModel())

    def test_information_matrix(self, rng):
        T = rng.standard_normal((5, 2))
        w = rng.random(5)
        np.testing.assert_allclose(information_matrix(T, w), sum(w[i] * np.outer(T[i], T[i]) for i in range(5)))


class TestNoiseVariance:
    def test_exact_residuals(self):
        T = np.array([[1.0], [1.0], [1.0]])
        y = np.array([1.0, 2.0, 3.0])
        d = Design(np.ones(3))
        theta = wls_estimate(T, y, d)
        # residuals (-1, 0, 1), dof 3 - 1
        assert estimate_noise_variance(T, y, d, np.ones(3), theta) == pytest.approx(1.0)

    def test_insufficient(self):
        T = np.eye(3)
        with pytest.raises(InsufficientDataError):
            estimate_noise_variance(T, np.ones(3), Design(np.ones(3)), np.ones(3), np.ones(3))

    def test_unbiased(self, rng):
        frf = random_frf(rng, 200, 4)
        d = Design(np.ones(200))
        est = []
        for _ in range(100):
            y = frf.entries @ np.ones(4) + 2.0 * rng.standard_normal(200)
            est.append(estimate_noise_variance(frf, y, d, np.ones(200), wls_estimate(frf, y, d)))
        assert np.mean(est) == pytest.approx(4.0, rel=0.1)
