import math
import logging
from typing import List

try:
    from .belief import BeliefState, Z_GOAL, point_belief, uniform_belief
    from .exceptions import FixtureError
    from .grid import GridMap, Pose, distance_table, encode_readings, raycast
    from .model import GoalPomdpModel
except ImportError:
    from belief import BeliefState, Z_GOAL, point_belief, uniform_belief
    from exceptions import FixtureError
    from grid import GridMap, Pose, distance_table, encode_readings, raycast
    from model import GoalPomdpModel

logger = logging.getLogger(__name__)

GOAL_DIRECTED = "goal-directed"
INFO_GATHERING = "info-gathering"


class GridNavigationModel(GoalPomdpModel):
    """Robot on a grid with discrete headings, driven by motion primitives.

    A primitive applies identically to every particle and is only available
    from a belief when no non-goal particle would collide. Observations are
    either a LiDAR raycast signature or the set of landmarks in range.
    """

    def __init__(self, grid: GridMap, name: str, mode: str = GOAL_DIRECTED, sensor: str = "lidar",
                 stochastic: bool = False, uncertain_start: bool = False, heuristic: str = "dist",
                 alpha: float = 0.1, validity_oracle: bool = False):
        if mode not in (GOAL_DIRECTED, INFO_GATHERING):
            raise FixtureError(f"Unknown navigation mode: {mode}")
        if sensor not in ("lidar", "landmarks"):
            raise FixtureError(f"Unknown sensor: {sensor}")
        if heuristic not in ("dist", "euclidean"):
            raise FixtureError(f"Unknown navigation heuristic: {heuristic}")
        if not grid.start_cells:
            raise FixtureError(f"Map {grid.name} has no start cells")
        if mode == GOAL_DIRECTED and not grid.goal_cells:
            raise FixtureError(f"Map {grid.name} has no goal cells")

        self.grid = grid
        self.name = name
        self.mode = mode
        self.sensor = sensor
        self.stochastic = stochastic
        self.uncertain_start = uncertain_start
        self.heuristic_kind = heuristic
        self.alpha = alpha
        self.information_gathering = mode == INFO_GATHERING
        self.has_validity_oracle = validity_oracle
        self.num_actions = len(grid.primitives)
        self.num_states = grid.num_states
        self.dist = distance_table(grid, slip=stochastic) if mode == GOAL_DIRECTED else None
        self._initial = self._build_initial_belief()

    def _build_initial_belief(self) -> BeliefState:
        grid = self.grid
        if self.uncertain_start:
            hypotheses = [grid.state_id(Pose(x, y, t))
                          for x, y in grid.start_cells for t in grid.hypothesis_headings]
            return uniform_belief(hypotheses)
        if len(grid.start_cells) != 1:
            raise FixtureError(f"Known-start map {grid.name} needs exactly one start cell")
        x, y = grid.start_cells[0]
        return point_belief(grid.state_id(Pose(x, y, grid.start_heading)))

    def initial_belief(self) -> BeliefState:
        return self._initial

    def is_goal(self, state) -> bool:
        if self.mode != GOAL_DIRECTED:
            return False
        pose = self.grid.pose(state)
        return (pose.x, pose.y) in self.grid.goal_cells

    def actions(self, belief: BeliefState) -> List[int]:
        poses = [self.grid.pose(s) for s in belief.support if not self.is_goal(s)]
        return [
            a for a, primitive in enumerate(self.grid.primitives)
            if all(self.grid.applicable(pose, primitive) for pose in poses)
        ]

    def transition(self, state, action, observable=None):
        outcomes = self.grid.outcomes(self.grid.pose(state), self.grid.primitives[action], self.stochastic)
        if outcomes is None:
            return {}
        return {self.grid.state_id(pose): p for pose, p in outcomes.items()}

    def observation(self, state, action, observable=None):
        if self.is_goal(state):
            return {Z_GOAL: 1.0}
        pose = self.grid.pose(state)
        if self.sensor == "lidar":
            return {encode_readings(raycast(self.grid, pose, self.grid.lidar), self.grid.lidar): 1.0}
        return {self.landmark_signature(pose): 1.0}

    def landmark_signature(self, pose: Pose) -> int:
        radius = self.grid.landmark_radius
        mask = 0
        for i, (lx, ly) in enumerate(self.grid.landmarks):
            if math.hypot(lx - pose.x, ly - pose.y) <= radius:
                mask |= 1 << i
        return mask

    def cost(self, state, action, observable=None):
        return self.grid.primitives[action].cost

    def validity(self, state, action, observable=None) -> bool:
        cells = self.grid.primitives[action].cells(self.grid.pose(state))
        return not any(cell in self.grid.hazard_cells for cell in cells)

    def state_heuristic(self, state, observable=None) -> float:
        if self.mode != GOAL_DIRECTED:
            return 0.0
        if self.heuristic_kind == "euclidean":
            pose = self.grid.pose(state)
            return min(math.hypot(gx - pose.x, gy - pose.y) for gx, gy in self.grid.goal_cells)
        return float(self.dist[state])

    def heuristic(self, belief: BeliefState) -> float:
        if self.information_gathering:
            return self.alpha * belief.size
        return super().heuristic(belief)

    def action_name(self, action: int) -> str:
        return self.grid.primitives[action].name


def indoor_stochastic_model(grid: GridMap, heuristic: str = "dist") -> GridNavigationModel:
    return GridNavigationModel(grid, name=f"indoor-stochastic:{grid.name}", stochastic=True, heuristic=heuristic)


def indoor_start_uncertainty_model(grid: GridMap, mode: str = GOAL_DIRECTED, heuristic: str = "dist",
                                   alpha: float = 0.1) -> GridNavigationModel:
    return GridNavigationModel(grid, name=f"indoor-start:{grid.name}", mode=mode, uncertain_start=True,
                               heuristic=heuristic, alpha=alpha)


def outdoor_model(grid: GridMap, mode: str = GOAL_DIRECTED, heuristic: str = "dist",
                  alpha: float = 0.1) -> GridNavigationModel:
    if not grid.landmarks:
        logger.warning(f"Outdoor map {grid.name} has no landmarks; every observation is uninformative")
    return GridNavigationModel(grid, name=f"outdoor:{grid.name}", mode=mode, sensor="landmarks",
                               uncertain_start=True, heuristic=heuristic, alpha=alpha, validity_oracle=True)
