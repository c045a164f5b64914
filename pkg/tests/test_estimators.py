import unittest
import sys
import os
import math
import itertools

import numpy as np
from pydantic import ValidationError

# Add the app directory to the Python path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'app'))

from belief import canonicalize, uniform_belief
from contact import contact_toy_model, planted_partition_world
from estimators import (
    build_estimator,
    conservative_value,
    entropy_corrected_value,
    q_hat_entropy_corrected,
    q_hat_pce,
    q_hat_qmdp,
    q_hat_subsample,
    q_hat_unbiased_decomposed,
    q_init_exact,
    rng_for,
    squared_ratio_bias,
    subsample,
)
from exceptions import InsufficientBudgetError, UnsupportedDomainError
from line_world import line_world
from model import InstrumentedModel
from models import EstimatorConfig


class TestEstimatorFormulas(unittest.TestCase):
    """Test the closed-form corrections"""

    def test_entropy_corrected_full_sample(self):
        """Test the squared-ratio correction with k = n"""
        value = entropy_corrected_value(1.0, 0.1, 4, 4, [2, 2])
        self.assertAlmostEqual(value, 1.2)

    def test_corrections_agree_at_full_sample(self):
        """Test both corrections coincide when every hypothesis is sampled"""
        sizes = [3, 1, 6]
        squared = entropy_corrected_value(2.0, 0.1, 10, 10, sizes, "squared-ratio")
        unbiased = entropy_corrected_value(2.0, 0.1, 10, 10, sizes, "u-statistic")

        self.assertAlmostEqual(squared, unbiased)

    def test_squared_ratio_bias_over_every_subset(self):
        """Test the bias term matches the squared-ratio mean over all 2-subsets of 4 hypotheses"""
        labels = [0, 1, 1, 1]
        values = []
        for subset in itertools.combinations(range(4), 2):
            sizes = [sum(1 for i in subset if labels[i] == z) for z in (0, 1)]
            values.append(entropy_corrected_value(0.0, 0.1, 4, 2, sizes))

        exact = 0.1 * (1 ** 2 + 3 ** 2) / 4
        self.assertAlmostEqual(np.mean(values), exact + squared_ratio_bias(0.1, 4, 2, [1, 3]))
        self.assertAlmostEqual(squared_ratio_bias(0.1, 4, 2, [1, 3]), 0.05)
        self.assertEqual(squared_ratio_bias(0.1, 4, 4, [1, 3]), 0.0)

    def test_conservative_kappa_zero(self):
        """Test PCE without shrinkage equals the squared-ratio correction"""
        sizes = [1, 2, 3]
        self.assertAlmostEqual(conservative_value(1.0, 0.1, 30, 6, sizes, kappa=0.0),
                               entropy_corrected_value(1.0, 0.1, 30, 6, sizes))

    def test_conservative_shrinkage_floored(self):
        """Test shrunk partition sizes never go negative"""
        value = conservative_value(1.0, 0.1, 100, 4, [1, 1, 1, 1], kappa=1.0)
        self.assertEqual(value, 1.0)


class TestWorkedExamples(unittest.TestCase):
    """Test the estimators on hand-computed values"""

    def test_entropy_corrected_value(self):
        """Test n=100, k=15, alpha=0.1 with partition sizes {10, 5}"""
        value = entropy_corrected_value(1.0, 0.1, 100, 15, [10, 5])
        self.assertAlmostEqual(value, 59.0 / 9.0, places=9)
        self.assertAlmostEqual(value, 6.5556, places=4)

    def test_subsample_keeps_fifteen_of_a_hundred(self):
        """Test delta=0.15 on 100 hypotheses keeps 15 distinct states"""
        belief = uniform_belief(range(100))
        reduced = subsample(belief, EstimatorConfig().delta_fraction, np.random.default_rng(0))

        self.assertEqual(reduced.n, 100)
        self.assertEqual(reduced.k, 15)

    def test_conservative_shrinkage_at_fifteen_samples(self):
        """Test the default kappa shrinks every partition by 1.22 * sqrt(15)"""
        kappa = EstimatorConfig().kappa
        shrink = kappa * math.sqrt(15)
        self.assertAlmostEqual(shrink, 4.72504, places=5)

        value = conservative_value(1.0, 0.1, 100, 15, [10, 5], kappa)
        expected = 1.0 + 0.1 * (((10 - shrink) * 100 / 15) ** 2 + ((5 - shrink) * 100 / 15) ** 2) / 100
        self.assertAlmostEqual(value, expected, places=9)
        self.assertLess(value, entropy_corrected_value(1.0, 0.1, 100, 15, [10, 5]))

    def test_partition_smaller_than_shrinkage_counts_zero(self):
        """Test a partition of 4 hypotheses vanishes under the k=15 shrinkage"""
        value = conservative_value(1.0, 0.1, 100, 15, [4], 1.22)
        self.assertEqual(value, 1.0)

    def test_line_world_pair_belief(self):
        """Test Q_init and Q^MDP of moving right from a uniform {2, 3} belief"""
        model = InstrumentedModel(line_world(), query_delay=0.0)
        belief = uniform_belief([2, 3])
        right = 1

        self.assertAlmostEqual(q_init_exact(belief, right, model), 1.5)
        self.assertAlmostEqual(q_hat_qmdp(belief, right, model), 1.5)


class TestSubsample(unittest.TestCase):
    """Test reduced-support beliefs"""

    def test_target_size(self):
        """Test ceil(delta * n) distinct states are kept"""
        belief = uniform_belief(range(10))
        reduced = subsample(belief, 0.15, np.random.default_rng(0))

        self.assertEqual(reduced.n, 10)
        self.assertEqual(reduced.k, 2)
        self.assertTrue(set(reduced.belief.support) <= set(belief.support))

    def test_full_fraction_keeps_support(self):
        """Test delta = 1 keeps every state"""
        belief = uniform_belief(range(5))
        reduced = subsample(belief, 1.0, np.random.default_rng(1))

        self.assertEqual(reduced.k, 5)
        self.assertEqual(reduced.belief.support, belief.support)

    def test_padding_when_draws_run_out(self):
        """Test the draw cap pads with the most probable unseen states"""
        belief = uniform_belief(range(8))
        reduced = subsample(belief, 1.0, np.random.default_rng(2), max_draw_factor=1)

        self.assertEqual(reduced.k, 8)
        self.assertLessEqual(reduced.draws, 8)

    def test_padding_prefers_probable_states(self):
        """Test padding adds the most probable states the draws missed"""
        belief = canonicalize([(0, 0.998), (1, 0.001), (2, 0.0005), (3, 0.00025), (4, 0.00025)])
        reduced = subsample(belief, 0.6, np.random.default_rng(0), max_draw_factor=1)

        self.assertLessEqual(reduced.draws, 3)
        self.assertEqual(reduced.belief.support, (0, 1, 2))

    def test_rng_for_is_repeatable(self):
        """Test the per-pair random stream depends only on (seed, key, action)"""
        key = uniform_belief([1, 2]).key

        self.assertEqual(rng_for(3, key, 1).random(), rng_for(3, key, 1).random())
        self.assertNotEqual(rng_for(3, key, 1).random(), rng_for(3, key, 0).random())


class TestLineWorldEstimators(unittest.TestCase):
    """Test estimators against the exact lookahead on the line world"""

    def setUp(self):
        self.model = InstrumentedModel(line_world(), query_delay=0.0)
        self.b0 = self.model.initial_belief()
        self.right = 1

    def test_exact_lookahead(self):
        """Test Q_init of moving right from b0"""
        self.assertAlmostEqual(q_init_exact(self.b0, self.right, self.model), 3.0)

    def test_qmdp_value_and_no_observation_queries(self):
        """Test Q^MDP never asks the observation model"""
        value = q_hat_qmdp(self.b0, self.right, self.model)

        self.assertAlmostEqual(value, 3.0)
        self.assertEqual(self.model.ledger.observation_queries, 0)
        self.assertGreater(self.model.ledger.transition_queries, 0)

    def test_subsample_exhaustive(self):
        """Test subsampling every state with true weights recovers Q_init"""
        cfg = EstimatorConfig(kind="subsample", delta_fraction=1.0, empirical_weights=False)
        value = q_hat_subsample(self.b0, self.right, self.model, None, cfg, rng_for(0, self.b0.key, self.right))

        self.assertAlmostEqual(value, q_init_exact(self.b0, self.right, self.model))

    def test_decomposed_exhaustive(self):
        """Test the decomposed estimator is exact once every pool covers the support"""
        cfg = EstimatorConfig(kind="unbiased-decomposed", sample_budget=3 * self.b0.size)
        value = q_hat_unbiased_decomposed(self.b0, self.right, self.model, None, cfg,
                                          rng_for(0, self.b0.key, self.right))

        self.assertAlmostEqual(value, 3.0)

    def test_decomposed_budget_too_small(self):
        """Test budgets that cannot fill three pools are rejected"""
        cfg = EstimatorConfig(kind="unbiased-decomposed", sample_budget=2)

        with self.assertRaises(InsufficientBudgetError):
            q_hat_unbiased_decomposed(self.b0, self.right, self.model, None, cfg, np.random.default_rng(0))

    def test_entropy_estimators_need_information_gathering(self):
        """Test entropy estimators refuse goal-directed domains"""
        cfg = EstimatorConfig(kind="subsample-entropy-corrected")

        with self.assertRaises(UnsupportedDomainError):
            q_hat_entropy_corrected(self.b0, self.right, self.model, cfg, np.random.default_rng(0))
        with self.assertRaises(UnsupportedDomainError):
            q_hat_pce(self.b0, self.right, self.model, cfg, np.random.default_rng(0))

    def test_estimator_cached_and_counted(self):
        """Test an estimator computes each pair once and counts it"""
        estimator = build_estimator(EstimatorConfig(kind="subsample", seed=4), self.model)

        first = estimator.estimate(self.b0, self.right)
        second = estimator.estimate(self.b0, self.right)
        self.assertEqual(first, second)
        self.assertEqual(self.model.ledger.estimator_calls, 1)

    def test_estimators_leave_transition_cache_alone(self):
        """Test no estimator fills the solver's transition cache"""
        for kind in ("exact", "subsample", "qmdp", "unbiased-decomposed"):
            with self.subTest(kind=kind):
                estimator = build_estimator(EstimatorConfig(kind=kind), self.model)
                estimator.estimate(self.b0, self.right)
                self.assertEqual(self.model.transition_cache, {})
                self.assertEqual(self.model.ledger.belief_transitions_computed, 0)

    def test_unknown_kind_rejected(self):
        """Test unknown estimator kinds fail validation"""
        with self.assertRaises(ValidationError):
            EstimatorConfig(kind="oracle")


class TestContactEstimators(unittest.TestCase):
    """Test entropy estimators on the planted partition"""

    def setUp(self):
        self.world = planted_partition_world()
        self.model = InstrumentedModel(contact_toy_model(self.world), query_delay=0.0)
        self.b0 = self.model.initial_belief()
        self.action = next(a for a in range(self.model.num_actions)
                           if self.model.action_name(a) == "sweep-east-11")

    def test_full_sample_matches_lookahead(self):
        """Test the entropy-corrected estimate with delta = 1 equals Q_init"""
        cfg = EstimatorConfig(kind="subsample-entropy-corrected", delta_fraction=1.0, alpha=self.world.alpha)
        value = q_hat_entropy_corrected(self.b0, self.action, self.model, cfg, rng_for(0, self.b0.key, self.action))

        self.assertAlmostEqual(value, q_init_exact(self.b0, self.action, self.model), places=9)

    def test_pce_kappa_zero_matches_entropy_corrected(self):
        """Test PCE with kappa = 0 reproduces the entropy-corrected estimate on the same draws"""
        ec = EstimatorConfig(kind="subsample-entropy-corrected", alpha=self.world.alpha)
        pce = EstimatorConfig(kind="subsample-pce", alpha=self.world.alpha, kappa=0.0)

        a = q_hat_entropy_corrected(self.b0, self.action, self.model, ec, rng_for(5, self.b0.key, self.action))
        b = q_hat_pce(self.b0, self.action, self.model, pce, rng_for(5, self.b0.key, self.action))
        self.assertAlmostEqual(a, b, places=9)

    def test_pce_not_above_entropy_corrected(self):
        """Test shrinkage can only lower the estimate"""
        ec = EstimatorConfig(kind="subsample-entropy-corrected", alpha=self.world.alpha)
        pce = EstimatorConfig(kind="subsample-pce", alpha=self.world.alpha, kappa=1.22)

        for seed in range(10):
            a = q_hat_entropy_corrected(self.b0, self.action, self.model, ec, rng_for(seed, self.b0.key, self.action))
            b = q_hat_pce(self.b0, self.action, self.model, pce, rng_for(seed, self.b0.key, self.action))
            self.assertLessEqual(b, a + 1e-12)


if __name__ == '__main__':
    unittest.main()
