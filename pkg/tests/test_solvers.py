import unittest
import sys
import os
import math

# Add the app directory to the Python path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'app'))

from belief import compute_belief_transition, point_belief, uniform_belief
from estimators import build_estimator
from exceptions import NoValidPolicyError, PolicyDivergenceError, PolicyExtractionError, UnsupportedDomainError
from full_horizon import fh_lazy, invalid_policy_pairs, prune_forbidden
from grid import GridMap, Pose
from line_world import corridor, line_world
from model import InstrumentedModel
from models import EstimatorConfig, SolverConfig
from navigation import indoor_stochastic_model, outdoor_model
from oracle import value_iteration
from policy import evaluate_policy, extract_policy, policy_from_rule
from qtable import ImproveOutcome, QEntry, QSource, QTable, improve_values
from solvers import SOLVERS, LaoStar, LazyLaoStar, LazyRtdpBel, RtdpBel, lao_star, lazy_lao_star, lazy_rtdp_bel, rtdp_bel

FIXTURES = os.path.join(os.path.dirname(__file__), '..', 'fixtures', 'maps')


def run(domain, solver_cls, estimator="qmdp", eager_validation=False, **options):
    model = InstrumentedModel(domain, query_delay=0.0, eager_validation=eager_validation)
    cfg = SolverConfig(estimator=EstimatorConfig(kind=estimator), **options)
    est = build_estimator(cfg.estimator, model) if solver_cls.lazy else None
    return solver_cls(model, cfg, est).solve()


class TestQTable(unittest.TestCase):
    """Test value bookkeeping"""

    def setUp(self):
        self.model = InstrumentedModel(line_world(), query_delay=0.0)

    def test_goal_belief_worth_zero(self):
        """Test goal beliefs are always worth zero"""
        qtable = QTable()
        self.assertEqual(qtable.value(uniform_belief([4]), self.model), 0.0)

    def test_unknown_belief_uses_inflated_heuristic(self):
        """Test beliefs never initialized are valued by the inflated heuristic"""
        qtable = QTable(inflation=2.0)
        belief = uniform_belief([0, 1, 2])

        self.assertAlmostEqual(qtable.value(belief, self.model), 6.0)

    def test_best_action_tie_breaks_on_lowest_id(self):
        """Test ties between actions go to the lowest action id"""
        qtable = QTable()
        record = qtable.add_record(uniform_belief([0, 1]), {
            1: QEntry(q=2.0, source=QSource.ESTIMATOR),
            0: QEntry(q=2.0, source=QSource.ESTIMATOR),
        })

        self.assertEqual(record.best_action(), 0)
        self.assertEqual(record.value, 2.0)

    def test_discard_action_updates_value(self):
        """Test discarding the best action re-values the belief"""
        qtable = QTable()
        belief = uniform_belief([0, 1])
        qtable.add_record(belief, {
            0: QEntry(q=1.0, source=QSource.ESTIMATOR),
            1: QEntry(q=3.0, source=QSource.ESTIMATOR),
        })

        record = qtable.discard_action(belief, 0)
        self.assertEqual(record.best_action(), 1)
        self.assertEqual(record.value, 3.0)

    def test_discarding_every_action_leaves_dead_end(self):
        """Test a record with no actions left is worth infinity"""
        qtable = QTable()
        belief = uniform_belief([0, 1])
        qtable.add_record(belief, {0: QEntry(q=1.0, source=QSource.ESTIMATOR)})

        record = qtable.discard_action(belief, 0)
        self.assertIsNone(record.best_action())
        self.assertEqual(record.value, math.inf)

    def test_dead_end_record_survives_improvement(self):
        """Test value improvement and tip detection accept a record with no actions"""
        qtable = QTable()
        belief = uniform_belief([0, 1])
        qtable.add_record(belief, {0: QEntry(q=1.0, source=QSource.ESTIMATOR)})
        qtable.discard_action(belief, 0)

        outcome = improve_values([belief], qtable, self.model, lazy_aware=True, epsilon=1e-9)
        self.assertEqual(outcome, ImproveOutcome.CONVERGED)
        self.assertEqual(qtable.get(belief).value, math.inf)

        solver = LazyLaoStar(self.model, SolverConfig(), build_estimator(EstimatorConfig(kind="qmdp"), self.model))
        solver.qtable = qtable
        self.assertFalse(solver._is_tip(belief))
        with self.assertRaises(NoValidPolicyError):
            extract_policy(qtable, belief, self.model)


class TestImproveValues(unittest.TestCase):
    """Test value improvement over one belief next to the goal"""

    def setUp(self):
        self.model = InstrumentedModel(line_world(), query_delay=0.0)
        self.belief = point_belief(3)
        self.left = compute_belief_transition(self.belief, 0, self.model)
        self.right = compute_belief_transition(self.belief, 1, self.model)

    def test_backup_changes_policy(self):
        """Test stale Q-values are recomputed from cached transitions"""
        qtable = QTable()
        record = qtable.add_record(self.belief, {
            0: QEntry(q=3.0, source=QSource.HEURISTIC_LOOKAHEAD, transition=self.left),
            1: QEntry(q=5.0, source=QSource.HEURISTIC_LOOKAHEAD, transition=self.right),
        })

        outcome = improve_values([self.belief], qtable, self.model, lazy_aware=False, epsilon=1e-9)

        self.assertEqual(outcome, ImproveOutcome.POLICY_CHANGED)
        self.assertEqual(record.best_action(), 1)
        self.assertAlmostEqual(record.value, 1.0)
        self.assertEqual(record.entries[1].source, QSource.BACKUP)

    def test_converged_when_nothing_moves(self):
        """Test exact Q-values converge without a policy change"""
        qtable = QTable()
        qtable.add_record(self.belief, {
            0: QEntry(q=3.0, source=QSource.HEURISTIC_LOOKAHEAD, transition=self.left),
            1: QEntry(q=1.0, source=QSource.HEURISTIC_LOOKAHEAD, transition=self.right),
        })

        outcome = improve_values([self.belief], qtable, self.model, lazy_aware=False, epsilon=1e-9)
        self.assertEqual(outcome, ImproveOutcome.CONVERGED)

    def test_unevaluated_argmin(self):
        """Test an estimator-valued argmin stops lazy-aware improvement only"""
        for lazy_aware, expected in ((True, ImproveOutcome.BEST_ACTION_UNEVALUATED),
                                     (False, ImproveOutcome.CONVERGED)):
            with self.subTest(lazy_aware=lazy_aware):
                qtable = QTable()
                record = qtable.add_record(self.belief, {
                    0: QEntry(q=0.5, source=QSource.ESTIMATOR),
                    1: QEntry(q=1.0, source=QSource.HEURISTIC_LOOKAHEAD, transition=self.right),
                })

                outcome = improve_values([self.belief], qtable, self.model, lazy_aware=lazy_aware, epsilon=1e-9)

                self.assertEqual(outcome, expected)
                self.assertEqual(record.entries[0].q, 0.5)
                self.assertEqual(record.entries[0].source, QSource.ESTIMATOR)


class TestExtractPolicy(unittest.TestCase):
    """Test greedy policy extraction"""

    def setUp(self):
        self.model = InstrumentedModel(line_world(), query_delay=0.0)
        self.belief = point_belief(3)

    def test_single_step_policy(self):
        """Test the greedy policy next to the goal is one move right"""
        qtable = QTable()
        qtable.add_record(self.belief, {
            1: QEntry(q=1.0, source=QSource.BACKUP,
                      transition=compute_belief_transition(self.belief, 1, self.model)),
        })

        policy = extract_policy(qtable, self.belief, self.model)

        self.assertEqual([action for _, action in policy.pairs()], [1])
        self.assertAlmostEqual(evaluate_policy(policy, self.model), 1.0)

    def test_unevaluated_best_action(self):
        """Test extraction refuses a best action without a transition"""
        qtable = QTable()
        qtable.add_record(self.belief, {1: QEntry(q=1.0, source=QSource.ESTIMATOR)})

        with self.assertRaises(PolicyExtractionError):
            extract_policy(qtable, self.belief, self.model)

    def test_uninitialized_belief(self):
        """Test extraction refuses beliefs the solver never touched"""
        with self.assertRaises(PolicyExtractionError):
            extract_policy(QTable(), self.belief, self.model)


class TestSolvers(unittest.TestCase):
    """Test the four heuristic-search solvers"""

    def test_solver_registry(self):
        """Test the registry exposes every solver with its laziness flag"""
        self.assertEqual(set(SOLVERS), {"rtdp-bel", "lazy-rtdp-bel", "lao-star", "lazy-lao-star"})
        self.assertTrue(SOLVERS["lazy-rtdp-bel"].lazy)
        self.assertFalse(SOLVERS["lao-star"].lazy)

    def test_lazy_solver_needs_estimator(self):
        """Test lazy solvers refuse to run without an estimator"""
        model = InstrumentedModel(line_world(), query_delay=0.0)
        with self.assertRaises(ValueError):
            LazyLaoStar(model, SolverConfig())

    def test_line_world_values(self):
        """Test every solver converges to the known line-world value"""
        for solver_cls in (RtdpBel, LazyRtdpBel, LaoStar, LazyLaoStar):
            with self.subTest(solver=solver_cls.name):
                result = run(line_world(), solver_cls)

                self.assertTrue(result.converged)
                self.assertAlmostEqual(result.value, 3.0, places=6)
                self.assertIsNotNone(result.policy)
                self.assertAlmostEqual(
                    evaluate_policy(result.policy, InstrumentedModel(line_world(), query_delay=0.0)), 3.0, places=6
                )

    def test_functional_entry_points(self):
        """Test the function forms agree with the solver classes"""
        cfg = SolverConfig()
        results = {}
        for name, solve in (("rtdp-bel", lambda m: rtdp_bel(m, cfg)), ("lao-star", lambda m: lao_star(m, cfg))):
            results[name] = solve(InstrumentedModel(line_world(), query_delay=0.0))
        for name, solve in (("lazy-rtdp-bel", lazy_rtdp_bel), ("lazy-lao-star", lazy_lao_star)):
            model = InstrumentedModel(line_world(), query_delay=0.0)
            results[name] = solve(model, build_estimator(cfg.estimator, model), cfg)

        for name, result in results.items():
            with self.subTest(solver=name):
                self.assertTrue(result.converged)
                self.assertAlmostEqual(result.value, 3.0, places=6)

    def test_policy_moves_right(self):
        """Test the optimal line-world policy only moves right"""
        result = run(line_world(), LaoStar)

        self.assertTrue(all(action == 1 for _, action in result.policy.pairs()))

    def test_matches_oracle_on_slip_grid(self):
        """Test every solver matches value iteration on the 5x5 slip grid"""
        domain = indoor_stochastic_model(GridMap.load(os.path.join(FIXTURES, 'indoor_slip_5x5.map')))
        reference = value_iteration(InstrumentedModel(domain, query_delay=0.0)).value

        for solver_cls in (RtdpBel, LazyRtdpBel, LaoStar, LazyLaoStar):
            with self.subTest(solver=solver_cls.name):
                result = run(domain, solver_cls)
                self.assertTrue(result.converged)
                self.assertAlmostEqual(result.value, reference, places=6)

    def test_backups_never_lower_a_value(self):
        """Test no solver ever decreases a belief value on the line world or the slip grid"""
        domains = {
            "line-world": line_world(),
            "indoor-slip-5x5": indoor_stochastic_model(GridMap.load(os.path.join(FIXTURES, 'indoor_slip_5x5.map'))),
        }
        for domain_name, domain in domains.items():
            for solver_cls in (RtdpBel, LazyRtdpBel, LaoStar, LazyLaoStar):
                with self.subTest(domain=domain_name, solver=solver_cls.name):
                    result = run(domain, solver_cls)
                    self.assertTrue(result.converged)
                    self.assertEqual(result.monotone_violations, 0)

    def test_lazy_evaluates_fewer_transitions(self):
        """Test lazy LAO* computes fewer belief transitions than LAO*"""
        vanilla = run(line_world(), LaoStar)
        lazy = run(line_world(), LazyLaoStar)

        self.assertLess(lazy.ledger.belief_transitions_computed, vanilla.ledger.belief_transitions_computed)
        self.assertGreater(lazy.ledger.estimator_calls, 0)
        self.assertEqual(vanilla.ledger.estimator_calls, 0)

    def test_lazy_evaluates_argmin_only(self):
        """Test lazy solvers only evaluate actions that were the argmin"""
        for solver_cls in (LazyRtdpBel, LazyLaoStar):
            with self.subTest(solver=solver_cls.name):
                result = run(line_world(), solver_cls)
                self.assertTrue(result.evaluation_log)
                self.assertTrue(all(was_argmin for _, _, was_argmin in result.evaluation_log))

    def test_single_action_no_overhead(self):
        """Test lazy solvers never compute more transitions on a forced corridor"""
        for vanilla_cls, lazy_cls in ((RtdpBel, LazyRtdpBel), (LaoStar, LazyLaoStar)):
            with self.subTest(solver=lazy_cls.name):
                vanilla = run(corridor(3), vanilla_cls)
                lazy = run(corridor(3), lazy_cls)

                self.assertAlmostEqual(lazy.value, 3.0)
                self.assertLessEqual(lazy.ledger.belief_transitions_computed,
                                     vanilla.ledger.belief_transitions_computed)
                self.assertEqual(lazy.ledger.estimator_calls, 0)

    def test_goal_initial_belief(self):
        """Test a goal initial belief solves immediately with an empty policy"""
        result = run(line_world(start=(4,)), LaoStar)

        self.assertTrue(result.converged)
        self.assertEqual(result.value, 0.0)
        self.assertTrue(result.policy.is_empty())

    def test_expansion_cap_stops_search(self):
        """Test LAO* reports non-convergence when the expansion cap is hit"""
        result = run(line_world(), LaoStar, max_expansions=1)

        self.assertFalse(result.converged)

    def test_result_to_dict(self):
        """Test solver results serialize with their counters"""
        data = run(line_world(), LazyLaoStar).to_dict()

        self.assertEqual(data['solver'], 'lazy-lao-star')
        self.assertIn('belief_transitions_computed', data)
        self.assertIn('policy_size', data)


class TestPolicyEvaluation(unittest.TestCase):
    """Test exact and sampled policy evaluation"""

    def setUp(self):
        self.world = line_world()
        self.model = InstrumentedModel(self.world, query_delay=0.0)

    def test_left_only_diverges(self):
        """Test a policy that never reaches the goal is rejected"""
        policy = policy_from_rule(self.model, self.world.initial_belief(), lambda b: 0)

        with self.assertRaises(PolicyDivergenceError):
            evaluate_policy(policy, self.model, mode="exact")

    def test_monte_carlo_close_to_exact(self):
        """Test sampled evaluation agrees with the exact cost"""
        policy = policy_from_rule(self.model, self.world.initial_belief(), lambda b: 1)

        exact = evaluate_policy(policy, self.model, mode="exact")
        sampled = evaluate_policy(policy, self.model, mode="monte-carlo", rollouts=2000, seed=3)
        self.assertAlmostEqual(exact, 3.0)
        self.assertAlmostEqual(sampled, exact, delta=0.15)

    def test_unknown_mode(self):
        """Test unknown evaluation modes raise ValueError"""
        policy = policy_from_rule(self.model, self.world.initial_belief(), lambda b: 1)

        with self.assertRaises(ValueError):
            evaluate_policy(policy, self.model, mode="guess")

    def test_policy_to_dict(self):
        """Test policy graphs serialize action names"""
        policy = policy_from_rule(self.model, self.world.initial_belief(), lambda b: 1)
        data = policy.to_dict(self.model)

        self.assertEqual(data['root'], self.world.initial_belief().key)
        self.assertTrue(all(node['action'] == 'right' for node in data['nodes']))


class TestFullHorizon(unittest.TestCase):
    """Test full-horizon lazy validity checking"""

    def setUp(self):
        self.domain = outdoor_model(GridMap.load(os.path.join(FIXTURES, 'outdoor_detour.map')))

    def test_requires_validity_oracle(self):
        """Test domains without a validity oracle are refused"""
        model = InstrumentedModel(line_world(), query_delay=0.0)
        with self.assertRaises(UnsupportedDomainError):
            fh_lazy(LaoStar, model, SolverConfig())

    def test_final_policy_valid_and_optimal(self):
        """Test the validated policy is valid and costs as much as eager validation"""
        model = InstrumentedModel(self.domain, query_delay=0.0)
        cfg = SolverConfig()
        result = fh_lazy(LazyLaoStar, model, cfg, build_estimator(cfg.estimator, model))

        self.assertTrue(result.converged)
        self.assertEqual(result.solver, "fh-lazy-lao-star")
        self.assertGreaterEqual(result.outer_iterations, 1)
        checker = InstrumentedModel(self.domain, query_delay=0.0)
        self.assertEqual(invalid_policy_pairs(result.policy, checker, exhaustive=True), [])

        eager = run(self.domain, LazyLaoStar, eager_validation=True)
        self.assertTrue(eager.converged)
        evaluator = InstrumentedModel(self.domain, query_delay=0.0)
        self.assertAlmostEqual(evaluate_policy(result.policy, evaluator),
                               evaluate_policy(eager.policy, evaluator), places=6)

    def test_cold_start_matches_warm_start(self):
        """Test disabling the warm start reaches the same value"""
        values = []
        for warm in (True, False):
            model = InstrumentedModel(self.domain, query_delay=0.0)
            result = fh_lazy(LaoStar, model, SolverConfig(fh_warm_start=warm))
            self.assertTrue(result.converged)
            values.append(result.value)

        self.assertAlmostEqual(values[0], values[1], places=6)

    def test_single_hazard_takes_two_outer_iterations(self):
        """Test one hazard on the straight route costs exactly one replan and the policy detours"""
        domain = outdoor_model(GridMap.load(os.path.join(FIXTURES, 'outdoor_single_hazard.map')))
        for solver_cls in (LaoStar, LazyLaoStar):
            with self.subTest(solver=solver_cls.name):
                model = InstrumentedModel(domain, query_delay=0.0)
                cfg = SolverConfig()
                estimator = build_estimator(cfg.estimator, model) if solver_cls.lazy else None
                result = fh_lazy(solver_cls, model, cfg, estimator)

                self.assertTrue(result.converged)
                self.assertEqual(result.outer_iterations, 2)
                self.assertAlmostEqual(result.value, 5.5, places=6)
                checker = InstrumentedModel(domain, query_delay=0.0)
                self.assertEqual(invalid_policy_pairs(result.policy, checker, exhaustive=True), [])

    def test_failed_particles_forbid_action_everywhere(self):
        """Test a particle that fails validation bans the action at every belief holding it"""
        model = InstrumentedModel(self.domain, query_delay=0.0)
        grid = self.domain.grid
        forward = next(i for i, p in enumerate(grid.primitives) if p.name == "forward-1")
        blocked = grid.state_id(Pose(3, 1, 0))
        clear = grid.state_id(Pose(3, 2, 0))

        pair = uniform_belief([blocked, clear])
        self.assertFalse(model.check_validity(pair, forward))
        self.assertEqual(model.invalid_support(pair, forward), [blocked])
        self.assertEqual(model.ledger.validity_queries, 2)

        model.forbid_particles(model.invalid_support(pair, forward), forward, pair.observable)
        other = uniform_belief([blocked, grid.state_id(Pose(3, 3, 0))])
        self.assertNotIn(forward, model.available_actions(other))
        self.assertIn(forward, model.available_actions(point_belief(clear)))
        self.assertFalse(model.check_validity(other, forward))
        self.assertEqual(model.ledger.validity_queries, 2)

    def test_prune_forbidden_clears_warm_start(self):
        """Test forbidden actions leave every warm-start record that holds the particle"""
        model = InstrumentedModel(self.domain, query_delay=0.0)
        grid = self.domain.grid
        forward = next(i for i, p in enumerate(grid.primitives) if p.name == "forward-1")
        blocked = grid.state_id(Pose(3, 1, 0))
        holder = uniform_belief([blocked, grid.state_id(Pose(2, 2, 0))])
        bystander = point_belief(grid.state_id(Pose(2, 2, 0)))

        qtable = QTable()
        for belief in (holder, bystander):
            qtable.add_record(belief, {
                forward: QEntry(q=1.0, source=QSource.ESTIMATOR),
                forward + 1: QEntry(q=2.0, source=QSource.ESTIMATOR),
            })
        model.forbid_particles([blocked], forward, holder.observable)

        self.assertEqual(prune_forbidden(qtable, model), 1)
        self.assertNotIn(forward, qtable.get(holder).entries)
        self.assertEqual(qtable.get(holder).value, 2.0)
        self.assertIn(forward, qtable.get(bystander).entries)


if __name__ == '__main__':
    unittest.main()
