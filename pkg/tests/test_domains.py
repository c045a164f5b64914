import unittest
import sys
import os

import numpy as np

# Add the app directory to the Python path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'app'))

from belief import compute_belief_transition
from contact import ContactWorld, contact_toy_model, planted_partition_world, row_world
from exceptions import FixtureError
from grid import (
    GridMap,
    LidarSpec,
    Pose,
    distance_table,
    encode_readings,
    make_primitive,
    raycast,
    raycast_reference,
)
from line_world import corridor, line_world
from model import InstrumentedModel
from navigation import (
    INFO_GATHERING,
    indoor_start_uncertainty_model,
    indoor_stochastic_model,
    outdoor_model,
)
from oracle import enumerate_reachable, value_iteration

FIXTURES = os.path.join(os.path.dirname(__file__), '..', 'fixtures', 'maps')

SLIP_5X5 = """
#####
#S.##
#.~.#
#..G#
#####
"""


def fixture_map(name):
    return GridMap.load(os.path.join(FIXTURES, name))


class TestGridMap(unittest.TestCase):
    """Test map parsing and motion"""

    def setUp(self):
        self.grid = GridMap.from_ascii(SLIP_5X5, name="slip")

    def test_parse_special_cells(self):
        """Test map characters become special cell sets"""
        self.assertEqual(self.grid.width, 5)
        self.assertEqual(self.grid.height, 5)
        self.assertEqual(self.grid.start_cells, ((1, 1),))
        self.assertEqual(self.grid.goal_cells, frozenset({(3, 3)}))
        self.assertEqual(self.grid.slip_cells, frozenset({(2, 2)}))
        self.assertFalse(self.grid.is_free((3, 1)))

    def test_bad_maps_rejected(self):
        """Test malformed maps raise FixtureError"""
        for text in ("#####\n#.?.#\n#####", "#####\n#..#\n#####", "#####\n#....\n#####"):
            with self.subTest(text=text):
                with self.assertRaises(FixtureError):
                    GridMap.from_ascii(text)

    def test_state_id_round_trip(self):
        """Test pose and state id conversion"""
        pose = Pose(3, 2, 5)
        self.assertEqual(self.grid.pose(self.grid.state_id(pose)), pose)

    def test_slip_outcomes(self):
        """Test slipping sideways folds blocked cells back into the intended end"""
        outcomes = self.grid.outcomes(Pose(2, 2, 0), make_primitive("forward-1", 1.0), slip=True)

        self.assertAlmostEqual(outcomes[Pose(3, 2, 0)], 0.75)
        self.assertAlmostEqual(outcomes[Pose(3, 3, 0)], 0.25)

    def test_collision_has_no_outcome(self):
        """Test primitives running into walls are not applicable"""
        self.assertIsNone(self.grid.outcomes(Pose(1, 1, 0), make_primitive("forward-2", 2.0), slip=True))

    def test_unknown_primitive(self):
        """Test unknown primitive names are rejected"""
        with self.assertRaises(FixtureError):
            make_primitive("jump", 1.0)
        with self.assertRaises(FixtureError):
            make_primitive("forward-1", 0.0)

    def test_lidar_spec_validation(self):
        """Test ray counts must divide the heading count"""
        with self.assertRaises(FixtureError):
            LidarSpec(rays=3)

    def test_raycast_readings(self):
        """Test LiDAR distances to the first occupied cell"""
        readings = raycast(self.grid, Pose(1, 1, 0), LidarSpec(rays=8, max_range=10))

        self.assertEqual(readings[0], 2)
        self.assertEqual(readings[2], 1)
        self.assertEqual(readings[4], 1)
        self.assertEqual(readings[6], 3)

    def test_raycast_matches_reference(self):
        """Test the vectorized raycast against cell-by-cell stepping"""
        grid = fixture_map("indoor_slip_15x15.map")
        spec = LidarSpec(rays=4, max_range=6, quantization=2)
        for x, y in grid.free_cells()[::7]:
            for theta in range(8):
                pose = Pose(x, y, theta)
                self.assertEqual(raycast(grid, pose, spec), raycast_reference(grid, pose, spec))

    def test_encode_readings_distinct(self):
        """Test different readings encode to different observations"""
        spec = LidarSpec(rays=2, max_range=3)
        codes = {encode_readings((a, b), spec) for a in range(4) for b in range(4)}
        self.assertEqual(len(codes), 16)

    def test_distance_table(self):
        """Test goal poses cost nothing and walls stay unreachable"""
        dist = distance_table(self.grid)

        self.assertEqual(dist[self.grid.state_id(Pose(3, 3, 2))], 0.0)
        self.assertTrue(np.isinf(dist[self.grid.state_id(Pose(0, 0, 0))]))
        self.assertGreater(dist[self.grid.state_id(Pose(1, 1, 0))], 0.0)

    def test_unreachable_goal(self):
        """Test a walled-off goal is reported"""
        grid = GridMap.from_ascii("#####\n#S#G#\n#####", name="split")
        with self.assertRaises(FixtureError):
            distance_table(grid)

    def test_sidecar_loaded(self):
        """Test map sidecars configure landmarks and hypotheses"""
        grid = fixture_map("outdoor_30.map")

        self.assertEqual(grid.landmark_radius, 1.5)
        self.assertEqual(len(grid.start_cells), 30)
        self.assertEqual(grid.hypothesis_headings, (0,))
        self.assertIn((15, 1), grid.hazard_cells)

    def test_missing_map(self):
        """Test loading a missing map raises FixtureError"""
        with self.assertRaises(FixtureError):
            GridMap.load(os.path.join(FIXTURES, "nowhere.map"))


class TestNavigation(unittest.TestCase):
    """Test the grid navigation models"""

    def test_indoor_known_start(self):
        """Test the stochastic indoor model starts from a point belief"""
        domain = indoor_stochastic_model(fixture_map("indoor_slip_5x5.map"))
        b0 = domain.initial_belief()

        self.assertEqual(b0.size, 1)
        names = [domain.action_name(a) for a in domain.actions(b0)]
        self.assertIn("forward-1", names)
        self.assertNotIn("forward-2", names)

    def test_start_uncertainty_hypotheses(self):
        """Test start uncertainty spreads over every start cell"""
        domain = indoor_start_uncertainty_model(fixture_map("indoor_start_5x5.map"))
        b0 = domain.initial_belief()

        self.assertEqual(b0.size, 2)
        self.assertTrue(b0.is_uniform())

    def test_info_gathering_value(self):
        """Test one cheap turn is enough to tell the two start poses apart"""
        domain = indoor_start_uncertainty_model(fixture_map("indoor_start_5x5.map"), mode=INFO_GATHERING)
        solution = value_iteration(InstrumentedModel(domain, query_delay=0.0))

        self.assertAlmostEqual(solution.value, 0.5)

    def test_info_gathering_heuristic(self):
        """Test the information-gathering heuristic counts hypotheses"""
        domain = indoor_start_uncertainty_model(fixture_map("indoor_start_5x5.map"), mode=INFO_GATHERING,
                                                alpha=0.25)
        self.assertAlmostEqual(domain.heuristic(domain.initial_belief()), 0.5)
        self.assertFalse(domain.is_goal_belief(domain.initial_belief()))

    def test_outdoor_validity(self):
        """Test entering a hazard cell is invalid"""
        domain = outdoor_model(fixture_map("outdoor_detour.map"))
        grid = domain.grid
        forward = next(a for a in range(domain.num_actions) if domain.action_name(a) == "forward-1")

        self.assertTrue(domain.has_validity_oracle)
        self.assertFalse(domain.validity(grid.state_id(Pose(3, 1, 0)), forward))
        self.assertTrue(domain.validity(grid.state_id(Pose(3, 2, 0)), forward))

    def test_landmark_signature(self):
        """Test landmarks within range set their bit"""
        domain = outdoor_model(fixture_map("outdoor_detour.map"))

        self.assertEqual(domain.landmark_signature(Pose(3, 3, 0)), 1)
        self.assertEqual(domain.landmark_signature(Pose(1, 1, 0)), 0)

    def test_euclidean_heuristic(self):
        """Test the Euclidean heuristic measures straight-line distance to the nearest goal cell"""
        grid = fixture_map("indoor_slip_5x5.map")
        euclid = indoor_stochastic_model(grid, heuristic="euclidean")

        self.assertAlmostEqual(euclid.state_heuristic(grid.state_id(Pose(1, 1, 0))), 8 ** 0.5)
        self.assertEqual(euclid.state_heuristic(grid.state_id(Pose(3, 3, 4))), 0.0)

    def test_unknown_mode_rejected(self):
        """Test unknown navigation modes raise FixtureError"""
        with self.assertRaises(FixtureError):
            indoor_start_uncertainty_model(fixture_map("indoor_start_5x5.map"), mode="wander")


class TestContact(unittest.TestCase):
    """Test the contact localization toy"""

    def setUp(self):
        self.model = InstrumentedModel(contact_toy_model(row_world()), query_delay=0.0)
        self.east = 0

    def test_sweep_observations(self):
        """Test a sweep reports cells travelled and the contact bit"""
        world = row_world()
        domain = contact_toy_model(world)
        robot = world.robot

        self.assertEqual(domain.action_name(self.east), "sweep-east-4")
        self.assertEqual(domain.observation(world.cell_id((1, 0)), self.east, robot), {1: 1.0})
        self.assertEqual(domain.observation(world.cell_id((3, 0)), self.east, robot), {5: 1.0})
        self.assertEqual(domain.cost(world.cell_id((2, 0)), self.east, robot), 1.5)

    def test_sweep_splits_every_hypothesis(self):
        """Test one eastward sweep localizes the object in the row world"""
        b0 = self.model.initial_belief()
        transition = compute_belief_transition(b0, self.east, self.model)

        self.assertEqual(len(transition.branches), 3)
        self.assertTrue(all(self.model.is_goal_belief(b.successor) for b in transition.branches))
        self.assertEqual(transition.branch_for(3).successor.observable, (1, 0))

    def test_planted_partition(self):
        """Test sweeping east-11 separates the top row from the rest"""
        model = InstrumentedModel(contact_toy_model(planted_partition_world()), query_delay=0.0)
        b0 = model.initial_belief()
        action = next(a for a in range(model.num_actions) if model.action_name(a) == "sweep-east-11")
        transition = compute_belief_transition(b0, action, model)

        sizes = sorted(b.successor.size for b in transition.branches)
        self.assertEqual(sizes, [1] * 10 + [90])
        self.assertAlmostEqual(max(b.probability for b in transition.branches), 0.9)

    def test_bad_world_rejected(self):
        """Test the robot may not share a cell with a hypothesis"""
        with self.assertRaises(FixtureError):
            ContactWorld(width=3, height=1, hypotheses=((1, 0),), robot=(1, 0))

    def test_oracle_value(self):
        """Test the row world needs exactly one sweep"""
        solution = value_iteration(self.model)
        expected = 0.5 + (0 + 1 + 2) / 3
        self.assertAlmostEqual(solution.value, expected)


class TestOracle(unittest.TestCase):
    """Test the exhaustive reference solver"""

    def test_line_world_value(self):
        """Test value iteration on the line world"""
        solution = value_iteration(InstrumentedModel(line_world(), query_delay=0.0))

        self.assertAlmostEqual(solution.value, 3.0, places=9)
        self.assertGreater(len(solution.pairs()), 0)

    def test_corridor_enumeration(self):
        """Test a forced corridor enumerates a single chain"""
        mdp = enumerate_reachable(InstrumentedModel(corridor(2), query_delay=0.0))

        self.assertEqual(len(mdp), 3)
        self.assertEqual(len(mdp.goals), 1)


if __name__ == '__main__':
    unittest.main()
