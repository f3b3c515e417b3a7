"""
Tests for the rule learners: kernel ridge Q-learning and zero-order models
"""

import unittest

import numpy as np

from simlab.core import Dataset
from simlab.exceptions import DegenerateArmError, InsufficientDataError
from simlab.models import FixedArmRule, KrrFitter, ZomFitter, fit_zom, get_fitter_for_model
from simlab.models.krr import (
    ArmRegression,
    KrrQModel,
    KrrRule,
    fit_arm_regression,
    fit_krr_q,
    median_bandwidth,
    predict_q,
    predict_q_batch,
    q_matrix,
    rule_from_q,
)
from simlab.propensity import known_uniform
from simlab.simgen import ScenarioSpec, mean_outcome, sample_covariates


def balanced_scenario_data(scenario, n, seed):
    """Scenario data with arms assigned in rotation so every arm is well populated"""
    spec = ScenarioSpec(scenario_id=scenario)
    rng = np.random.default_rng(seed)
    covariates = sample_covariates(spec, n, rng)
    arms = np.arange(n) % 3
    outcomes = mean_outcome(spec, covariates, arms) + rng.standard_normal(n)
    return Dataset(covariates, arms, outcomes, 3)


def _point_model(values):
    # One support point at the origin per arm: Q-hat(0, a) = values[a]
    arms = tuple(ArmRegression(np.zeros((1, 1)), np.array([v]), 1e-2) for v in values)
    return KrrQModel(arms=arms, bandwidth=1.0, ridge=1e-2)


class TestArmRegression(unittest.TestCase):
    """Test cases for single-arm kernel ridge fits"""

    def test_constant_outcomes_are_recovered(self):
        support = np.linspace(-2, 2, 5).reshape(-1, 1)
        arm = fit_arm_regression(support, np.full(5, 3.0), bandwidth=0.5, ridge=1e-8)
        model = KrrQModel(arms=(arm,), bandwidth=0.5, ridge=1e-8)
        self.assertTrue(np.allclose(predict_q_batch(model, support, 0), 3.0, atol=1e-6))

    def test_single_point_arm(self):
        arm = fit_arm_regression(np.array([[0.4, -0.2]]), np.array([2.5]), bandwidth=1.0, ridge=1e-8)
        model = KrrQModel(arms=(arm,), bandwidth=1.0, ridge=1e-8)
        self.assertAlmostEqual(predict_q(model, np.array([0.4, -0.2]), 0), 2.5, delta=1e-4)

    def test_far_point_decays_to_zero(self):
        arm = fit_arm_regression(np.array([[0.0], [0.5]]), np.array([1.0, 2.0]), bandwidth=0.5, ridge=1e-2)
        model = KrrQModel(arms=(arm,), bandwidth=0.5, ridge=1e-2)
        self.assertAlmostEqual(predict_q(model, np.array([50.0]), 0), 0.0, delta=1e-6)

    def test_symmetric_pair_at_midpoint(self):
        arm = fit_arm_regression(np.array([[-1.0], [1.0]]), np.array([2.0, 2.0]), bandwidth=1.0, ridge=1e-2)
        model = KrrQModel(arms=(arm,), bandwidth=1.0, ridge=1e-2)
        self.assertAlmostEqual(arm.weights[0], arm.weights[1], places=12)
        expected = float(np.sum(arm.weights)) * np.exp(-0.5)
        self.assertAlmostEqual(predict_q(model, np.array([0.0]), 0), expected, places=12)

    def test_median_bandwidth(self):
        self.assertAlmostEqual(median_bandwidth(np.array([[0.0], [1.0], [3.0]])), 2.0)

    def test_median_bandwidth_of_identical_points(self):
        with self.assertRaises(ValueError):
            median_bandwidth(np.zeros((4, 2)))


class TestKrrQ(unittest.TestCase):
    """Test cases for the per-arm Q fit and the argmax rule"""

    def test_in_sample_fit_beats_variance(self):
        data = balanced_scenario_data(3, 40, seed=5)
        model = fit_krr_q(data)
        for a in range(3):
            mask = data.treatments == a
            fitted = predict_q_batch(model, data.covariates[mask], a)
            mse = np.mean((data.outcomes[mask] - fitted) ** 2)
            self.assertLess(mse, np.var(data.outcomes[mask]))

    def test_zero_bandwidth(self):
        with self.assertRaises(ValueError):
            fit_krr_q(balanced_scenario_data(3, 12, seed=1), bandwidth=0.0)

    def test_zero_ridge(self):
        with self.assertRaises(ValueError):
            fit_krr_q(balanced_scenario_data(3, 12, seed=1), ridge=0.0)

    def test_common_shift_keeps_the_rule(self):
        # Every arm is observed on the same design, so a shift moves all arms alike
        rng = np.random.default_rng(13)
        covariates = np.vstack([rng.uniform(-2, 2, size=(10, 2))] * 3)
        arms = np.repeat(np.arange(3), 10)
        outcomes = np.sin(covariates[:, 0] + arms) + arms * covariates[:, 1]
        data = Dataset(covariates, arms, outcomes, 3)
        shifted = Dataset(covariates, arms, outcomes + 4.0, 3)

        model = fit_krr_q(data, bandwidth=1.0)
        grid = rng.uniform(-2, 2, size=(200, 2))
        q = np.sort(q_matrix(model, grid), axis=1)
        grid = grid[q[:, -1] - q[:, -2] > 1e-6]
        self.assertGreater(len(grid), 150)

        base = rule_from_q(model).assign(grid)
        moved = rule_from_q(fit_krr_q(shifted, bandwidth=1.0)).assign(grid)
        self.assertTrue(np.array_equal(base, moved))

    def test_predictions_are_lipschitz(self):
        data = balanced_scenario_data(4, 45, seed=9)
        model = fit_krr_q(data, bandwidth=0.8)
        rng = np.random.default_rng(21)
        points = rng.uniform(-2, 2, size=(100, data.p))
        for a in range(3):
            # The kernel slope peaks at exp(-1/2) / h
            bound = np.sum(np.abs(model.arms[a].weights)) * np.exp(-0.5) / model.bandwidth
            for scale in (1e-1, 1e-3, 1e-6):
                step = rng.normal(size=points.shape)
                step *= scale / np.linalg.norm(step, axis=1, keepdims=True)
                change = np.abs(predict_q_batch(model, points + step, a) - predict_q_batch(model, points, a))
                self.assertTrue(np.all(change <= bound * scale + 1e-9))

    def test_thin_arm(self):
        data = Dataset(np.linspace(0, 1, 5), [0, 0, 0, 1, 1], np.zeros(5), 3)
        with self.assertRaises(InsufficientDataError):
            fit_krr_q(data, bandwidth=1.0)

    def test_predict_arm_out_of_range(self):
        with self.assertRaises(ValueError):
            predict_q(_point_model([1.0, 2.0]), np.zeros(1), 2)

    def test_rule_picks_largest_prediction(self):
        self.assertEqual(KrrRule(_point_model([1.0, 3.0, 2.0]))(np.zeros(1)), 1)

    def test_rule_ties_go_to_lowest_arm(self):
        self.assertEqual(KrrRule(_point_model([2.0, 2.0, 1.0]))(np.zeros(1)), 0)
        self.assertEqual(KrrRule(_point_model([0.0, 0.0, 0.0]))(np.zeros(1)), 0)

    def test_batch_assign_matches_single_calls(self):
        data = balanced_scenario_data(1, 30, seed=2)
        rule = KrrFitter().fit(data)
        batch = rule.assign(data.covariates)
        self.assertEqual(list(batch), [rule(x) for x in data.covariates])

    def test_frozen_for_resolves_auto(self):
        data = balanced_scenario_data(3, 20, seed=4)
        frozen = KrrFitter().frozen_for(data)
        self.assertEqual(frozen.bandwidth, median_bandwidth(data.covariates))
        self.assertEqual(frozen.name, "krr")


class TestZom(unittest.TestCase):
    """Test cases for the best single arm"""

    def test_picks_higher_mean(self):
        data = Dataset(np.zeros((4, 1)), [0, 0, 1, 1], [1.0, 2.0, 3.0, 4.0], 2)
        rule = fit_zom(data, known_uniform(2))
        self.assertEqual(rule.fixed_arm, 1)
        self.assertEqual(rule.arm_values, (1.5, 3.5))

    def test_tie_goes_to_arm_zero(self):
        data = Dataset(np.zeros((4, 1)), [0, 0, 1, 1], [2.0, 2.0, 2.0, 2.0], 2)
        self.assertEqual(fit_zom(data, known_uniform(2)).fixed_arm, 0)

    def test_three_arms(self):
        data = Dataset(np.zeros((4, 1)), [0, 1, 2, 2], [5.0, 0.0, 0.0, 0.0], 3)
        rule = fit_zom(data, known_uniform(3))
        self.assertEqual(rule.fixed_arm, 0)
        self.assertEqual(list(rule.assign(np.ones((3, 1)))), [0, 0, 0])

    def test_degenerate_arm(self):
        data = Dataset(np.zeros((3, 1)), [0, 0, 1], [1.0, 2.0, 3.0], 3)
        with self.assertRaises(DegenerateArmError):
            fit_zom(data, known_uniform(3))

    def test_fitter_without_propensity_uses_frequencies(self):
        data = Dataset(np.zeros((4, 1)), [0, 0, 1, 1], [1.0, 2.0, 3.0, 4.0], 2)
        self.assertEqual(ZomFitter().fit(data).fixed_arm, 1)

    def test_row_order_does_not_matter(self):
        data = balanced_scenario_data(2, 30, seed=5)
        shuffled = data.take(np.random.default_rng(1).permutation(data.n))
        for prop in (known_uniform(3), None):
            first = ZomFitter(prop).fit(data)
            second = ZomFitter(prop).fit(shuffled)
            self.assertEqual(first.fixed_arm, second.fixed_arm)
            self.assertTrue(np.allclose(first.arm_values, second.arm_values, rtol=0.0, atol=1e-12))

    def test_fixed_arm_rule(self):
        self.assertEqual(FixedArmRule(1, 2)(np.zeros(1)), 1)
        with self.assertRaises(ValueError):
            FixedArmRule(2, 2)


class TestRegistry(unittest.TestCase):
    """Test cases for fitter lookup"""

    def test_known_models(self):
        self.assertIsInstance(get_fitter_for_model("KRR", ridge=0.1), KrrFitter)
        self.assertIsInstance(get_fitter_for_model("zom"), ZomFitter)

    def test_unknown_model(self):
        with self.assertRaises(ValueError):
            get_fitter_for_model("svm")


if __name__ == '__main__':
    unittest.main()
