import logging
from dataclasses import dataclass
from typing import List, Tuple

try:
    from .belief import BeliefState, uniform_belief
    from .exceptions import FixtureError
    from .model import GoalPomdpModel
except ImportError:
    from belief import BeliefState, uniform_belief
    from exceptions import FixtureError
    from model import GoalPomdpModel

logger = logging.getLogger(__name__)

DIRECTIONS = {"east": (1, 0), "north": (0, -1), "west": (-1, 0), "south": (0, 1)}

Cell = Tuple[int, int]


@dataclass(frozen=True)
class Sweep:
    direction: str
    length: int

    @property
    def name(self) -> str:
        return f"sweep-{self.direction}-{self.length}"


@dataclass(frozen=True)
class ContactWorld:
    """Rectangular workspace holding one object in one of ``hypotheses`` cells."""

    width: int
    height: int
    hypotheses: Tuple[Cell, ...]
    robot: Cell
    sweep_lengths: Tuple[int, ...] = (3, 6)
    sweep_cost: float = 0.5
    alpha: float = 0.1

    def __post_init__(self):
        if not self.hypotheses:
            raise FixtureError("Contact world needs at least one hypothesis cell")
        if self.robot in self.hypotheses:
            raise FixtureError("Robot cell must not be a hypothesis cell")
        for cell in self.hypotheses + (self.robot,):
            if not self.in_bounds(cell):
                raise FixtureError(f"Cell {cell} lies outside the contact world")
        if any(length < 1 for length in self.sweep_lengths):
            raise FixtureError("Sweep lengths must be positive")

    def in_bounds(self, cell: Cell) -> bool:
        return 0 <= cell[0] < self.width and 0 <= cell[1] < self.height

    def cell_id(self, cell: Cell) -> int:
        return cell[1] * self.width + cell[0]

    def cell(self, cell_id: int) -> Cell:
        y, x = divmod(cell_id, self.width)
        return (x, y)

    @property
    def sweeps(self) -> List[Sweep]:
        return [Sweep(d, length) for d in DIRECTIONS for length in self.sweep_lengths]


class ContactModel(GoalPomdpModel):
    """Localize an object by sweeping the robot until it touches something.

    The hidden state is the object cell and never changes; the observable
    component is the robot cell. A sweep stops next to the object on contact
    or after its full length (or at the workspace edge) without contact. The
    observation packs the number of cells travelled with the contact bit.
    """

    name = "contact"
    information_gathering = True

    def __init__(self, world: ContactWorld):
        self.world = world
        self._sweeps = world.sweeps
        self.num_actions = len(self._sweeps)
        self.num_states = world.width * world.height

    def initial_belief(self) -> BeliefState:
        return uniform_belief((self.world.cell_id(h) for h in self.world.hypotheses), observable=self.world.robot)

    def _sweep(self, target: Cell, action: int, robot: Cell) -> Tuple[int, int]:
        """(cells travelled, contact bit) of ``action`` from ``robot`` with the object at ``target``."""
        sweep = self._sweeps[action]
        dx, dy = DIRECTIONS[sweep.direction]
        travelled = 0
        for k in range(1, sweep.length + 1):
            nxt = (robot[0] + k * dx, robot[1] + k * dy)
            if nxt == target:
                return travelled, 1
            if not self.world.in_bounds(nxt):
                return travelled, 0
            travelled = k
        return travelled, 0

    def transition(self, state, action, observable=None):
        return {state: 1.0}

    def observation(self, state, action, observable=None):
        travelled, contact = self._sweep(self.world.cell(state), action, observable)
        return {travelled * 2 + contact: 1.0}

    def cost(self, state, action, observable=None):
        travelled, _ = self._sweep(self.world.cell(state), action, observable)
        return self.world.sweep_cost + travelled

    def successor_observable(self, belief: BeliefState, action: int, observation: int):
        dx, dy = DIRECTIONS[self._sweeps[action].direction]
        travelled = observation // 2
        robot = belief.observable
        return (robot[0] + travelled * dx, robot[1] + travelled * dy)

    def heuristic(self, belief: BeliefState) -> float:
        return self.world.alpha * belief.size

    def action_name(self, action: int) -> str:
        return self._sweeps[action].name


def contact_toy_model(world: ContactWorld) -> ContactModel:
    return ContactModel(world)


def planted_partition_world(alpha: float = 0.1) -> ContactWorld:
    """100 hypotheses on a 10x10 block with the robot level with its top row.

    Sweeping east from the robot splits the block into the ten cells of that
    row (each found by contact) and the ninety cells it never touches.
    """
    hypotheses = tuple((x, y) for y in range(1, 11) for x in range(1, 11))
    return ContactWorld(width=12, height=12, hypotheses=hypotheses, robot=(0, 1),
                        sweep_lengths=(4, 11), alpha=alpha)


def row_world(alpha: float = 0.1) -> ContactWorld:
    """Three hypotheses in a row directly east of the robot."""
    return ContactWorld(width=5, height=1, hypotheses=((1, 0), (2, 0), (3, 0)), robot=(0, 0),
                        sweep_lengths=(4,), alpha=alpha)
