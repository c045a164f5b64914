from typing import Iterable, Sequence

try:
    from .belief import BeliefState, Z_GOAL, uniform_belief
    from .exceptions import FixtureError
    from .model import GoalPomdpModel
except ImportError:
    from belief import BeliefState, Z_GOAL, uniform_belief
    from exceptions import FixtureError
    from model import GoalPomdpModel

Z_NOT_GOAL = 0

MOVES = {"left": -1, "right": 1}


class LineWorld(GoalPomdpModel):
    """Cells 0..size-1 on a line; unit-cost clamped moves; the robot only senses the goal."""

    name = "line-world"

    def __init__(self, size: int = 5, goal: int = 4, start: Iterable[int] = (0, 1, 2),
                 actions: Sequence[str] = ("left", "right")):
        if not 0 <= goal < size:
            raise FixtureError(f"Goal {goal} outside a line of {size} cells")
        unknown = [a for a in actions if a not in MOVES]
        if unknown:
            raise FixtureError(f"Unknown line-world actions: {unknown}")
        self.size = size
        self.goal = goal
        self.start = tuple(start)
        self.moves = [MOVES[a] for a in actions]
        self.names = list(actions)
        self.num_actions = len(self.moves)
        self.num_states = size

    def initial_belief(self) -> BeliefState:
        return uniform_belief(self.start)

    def transition(self, state, action, observable=None):
        return {min(self.size - 1, max(0, state + self.moves[action])): 1.0}

    def observation(self, state, action, observable=None):
        return {Z_GOAL if state == self.goal else Z_NOT_GOAL: 1.0}

    def cost(self, state, action, observable=None):
        return 1.0

    def is_goal(self, state) -> bool:
        return state == self.goal

    def state_heuristic(self, state, observable=None) -> float:
        return float(abs(self.goal - state))

    def action_name(self, action: int) -> str:
        return self.names[action]


def line_world(size: int = 5, goal: int = 4, start: Iterable[int] = (0, 1, 2),
               actions: Sequence[str] = ("left", "right")) -> LineWorld:
    return LineWorld(size, goal, start, actions)


def corridor(length: int = 2) -> LineWorld:
    """Single-state start, single action: a forced chain of ``length`` steps."""
    return LineWorld(size=length + 1, goal=length, start=(0,), actions=("right",))
