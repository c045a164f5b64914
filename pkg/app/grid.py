"""ASCII occupancy maps, discrete poses, motion primitives and a 1-D LiDAR.

Map legend: ``#`` occupied, ``.`` free, ``~`` slip, ``!`` hazard,
``L`` landmark, ``G`` goal cell, ``S`` start / hypothesis cell. A sidecar
``<map>.ini`` next to the map carries the sensor, primitive set and start
headings.
"""
import re
import heapq
import logging
import configparser
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, FrozenSet, List, NamedTuple, Optional, Tuple

import numpy as np

try:
    from .exceptions import FixtureError
except ImportError:
    from exceptions import FixtureError

logger = logging.getLogger(__name__)

# Heading index -> (dx, dy); counter-clockwise, y grows downwards.
HEADINGS = [(1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1)]
HEADING_ARRAY = np.array(HEADINGS, dtype=int)
NUM_HEADINGS = len(HEADINGS)

Cell = Tuple[int, int]


class Pose(NamedTuple):
    x: int
    y: int
    theta: int


@dataclass(frozen=True)
class LidarSpec:
    rays: int = 8
    max_range: int = 10
    quantization: int = 1

    def __post_init__(self):
        if self.rays < 1 or NUM_HEADINGS % self.rays != 0:
            raise FixtureError(f"LiDAR needs a ray count dividing {NUM_HEADINGS}, got {self.rays}")
        if self.quantization < 1 or self.max_range < 1:
            raise FixtureError("LiDAR range and quantization must be at least 1")

    @property
    def bins(self) -> int:
        return self.max_range // self.quantization + 1


@dataclass(frozen=True)
class MotionPrimitive:
    name: str
    cost: float
    steps: int = 0
    turn: int = 0

    def cells(self, pose: Pose) -> List[Cell]:
        """Cells entered by the primitive, in order; the start cell is excluded."""
        dx, dy = HEADINGS[pose.theta]
        return [(pose.x + i * dx, pose.y + i * dy) for i in range(1, self.steps + 1)]

    def end_pose(self, pose: Pose) -> Pose:
        dx, dy = HEADINGS[pose.theta]
        return Pose(pose.x + self.steps * dx, pose.y + self.steps * dy,
                    (pose.theta + self.turn) % NUM_HEADINGS)


DEFAULT_PRIMITIVES = {"forward-1": 1.0, "turn-left": 0.5, "turn-right": 0.5, "forward-2": 2.0}


def make_primitive(name: str, cost: float) -> MotionPrimitive:
    if cost <= 0:
        raise FixtureError(f"Primitive {name} needs a positive cost")
    if name == "turn-left":
        return MotionPrimitive(name, cost, turn=1)
    if name == "turn-right":
        return MotionPrimitive(name, cost, turn=-1)
    match = re.fullmatch(r"forward-(\d+)", name)
    if match and int(match.group(1)) > 0:
        return MotionPrimitive(name, cost, steps=int(match.group(1)))
    raise FixtureError(f"Unknown motion primitive: {name}")


@dataclass
class GridMap:
    occupancy: np.ndarray
    slip_cells: FrozenSet[Cell] = frozenset()
    hazard_cells: FrozenSet[Cell] = frozenset()
    landmarks: Tuple[Cell, ...] = ()
    goal_cells: FrozenSet[Cell] = frozenset()
    start_cells: Tuple[Cell, ...] = ()
    lidar: LidarSpec = field(default_factory=LidarSpec)
    primitives: Tuple[MotionPrimitive, ...] = ()
    landmark_radius: float = 2.0
    start_heading: int = 0
    hypothesis_headings: Tuple[int, ...] = (0,)
    name: str = "grid"

    def __post_init__(self):
        if not self.primitives:
            self.primitives = tuple(make_primitive(n, c) for n, c in DEFAULT_PRIMITIVES.items())
        self._validate()

    @property
    def height(self) -> int:
        return self.occupancy.shape[0]

    @property
    def width(self) -> int:
        return self.occupancy.shape[1]

    @property
    def num_states(self) -> int:
        return self.width * self.height * NUM_HEADINGS

    def _validate(self):
        occ = self.occupancy
        if occ.ndim != 2 or occ.shape[0] < 3 or occ.shape[1] < 3:
            raise FixtureError(f"Map {self.name} must be at least 3x3")
        border = np.concatenate([occ[0, :], occ[-1, :], occ[:, 0], occ[:, -1]])
        if not border.all():
            raise FixtureError(f"Map {self.name} border must be fully occupied")
        special = set(self.slip_cells) | set(self.hazard_cells) | set(self.landmarks)
        special |= set(self.goal_cells) | set(self.start_cells)
        for cell in special:
            if not self.is_free(cell):
                raise FixtureError(f"Special cell {cell} in map {self.name} is occupied or out of bounds")

    def in_bounds(self, cell: Cell) -> bool:
        x, y = cell
        return 0 <= x < self.width and 0 <= y < self.height

    def is_free(self, cell: Cell) -> bool:
        return self.in_bounds(cell) and not self.occupancy[cell[1], cell[0]]

    def state_id(self, pose: Pose) -> int:
        return (pose.y * self.width + pose.x) * NUM_HEADINGS + pose.theta

    def pose(self, state: int) -> Pose:
        cell, theta = divmod(state, NUM_HEADINGS)
        y, x = divmod(cell, self.width)
        return Pose(x, y, theta)

    def free_cells(self) -> List[Cell]:
        ys, xs = np.nonzero(~self.occupancy)
        return sorted(zip(xs.tolist(), ys.tolist()), key=lambda c: (c[1], c[0]))

    def applicable(self, pose: Pose, primitive: MotionPrimitive) -> bool:
        return all(self.is_free(cell) for cell in primitive.cells(pose))

    def outcomes(self, pose: Pose, primitive: MotionPrimitive, slip: bool) -> Optional[Dict[Pose, float]]:
        """Successor poses of ``primitive``; None when it collides.

        On a slip cell a moving primitive reaches its intended end with
        probability 0.5 and ends one cell to either side with 0.25 each; a
        sideways cell that is occupied folds back into the intended one.
        """
        if not self.applicable(pose, primitive):
            return None
        end = primitive.end_pose(pose)
        if not slip or primitive.steps == 0 or (pose.x, pose.y) not in self.slip_cells:
            return {end: 1.0}
        result = {end: 0.5}
        for side in (2, -2):
            lx, ly = HEADINGS[(pose.theta + side) % NUM_HEADINGS]
            lateral = Pose(end.x + lx, end.y + ly, end.theta)
            target = lateral if self.is_free((lateral.x, lateral.y)) else end
            result[target] = result.get(target, 0.0) + 0.25
        return result

    @classmethod
    def from_ascii(cls, text: str, sidecar: Optional[configparser.ConfigParser] = None,
                   name: str = "grid") -> 'GridMap':
        rows = [line.rstrip("\n") for line in text.strip("\n").splitlines() if line.strip()]
        if not rows:
            raise FixtureError(f"Map {name} is empty")
        width = len(rows[0])
        if any(len(row) != width for row in rows):
            raise FixtureError(f"Map {name} rows have different lengths")

        occupancy = np.zeros((len(rows), width), dtype=bool)
        slip, hazards, landmarks, goals, starts = set(), set(), [], set(), []
        for y, row in enumerate(rows):
            for x, char in enumerate(row):
                if char == "#":
                    occupancy[y, x] = True
                elif char == "~":
                    slip.add((x, y))
                elif char == "!":
                    hazards.add((x, y))
                elif char == "L":
                    landmarks.append((x, y))
                elif char == "G":
                    goals.add((x, y))
                elif char == "S":
                    starts.append((x, y))
                elif char != ".":
                    raise FixtureError(f"Unknown map character '{char}' at ({x}, {y}) in {name}")

        options = _sidecar_options(sidecar)
        return cls(
            occupancy=occupancy,
            slip_cells=frozenset(slip),
            hazard_cells=frozenset(hazards),
            landmarks=tuple(landmarks),
            goal_cells=frozenset(goals),
            start_cells=tuple(starts),
            name=name,
            **options,
        )

    @classmethod
    def load(cls, path) -> 'GridMap':
        path = Path(path)
        if not path.exists():
            raise FixtureError(f"Map file not found: {path}")
        sidecar = None
        sidecar_path = path.with_suffix(".ini")
        if sidecar_path.exists():
            sidecar = configparser.ConfigParser()
            sidecar.read(sidecar_path)
        logger.info(f"Loading map {path.name}")
        return cls.from_ascii(path.read_text(), sidecar, name=path.stem)


def _int_list(text: str) -> Tuple[int, ...]:
    return tuple(int(part) % NUM_HEADINGS for part in text.split(",") if part.strip())


def _sidecar_options(sidecar: Optional[configparser.ConfigParser]) -> dict:
    if sidecar is None:
        return {}
    options = {}
    try:
        if sidecar.has_section("lidar"):
            section = sidecar["lidar"]
            options["lidar"] = LidarSpec(
                rays=section.getint("rays", 8),
                max_range=section.getint("max_range", 10),
                quantization=section.getint("quantization", 1),
            )
        if sidecar.has_section("primitives"):
            options["primitives"] = tuple(
                make_primitive(name, float(cost)) for name, cost in sidecar["primitives"].items()
            )
        if sidecar.has_section("landmarks"):
            options["landmark_radius"] = sidecar["landmarks"].getfloat("radius", 2.0)
        if sidecar.has_section("start"):
            options["start_heading"] = sidecar["start"].getint("heading", 0) % NUM_HEADINGS
        if sidecar.has_section("hypotheses"):
            options["hypothesis_headings"] = _int_list(sidecar["hypotheses"].get("headings", "0"))
    except ValueError as e:
        raise FixtureError(f"Bad map sidecar value: {str(e)}")
    return options


def raycast(grid: GridMap, pose: Pose, spec: LidarSpec) -> Tuple[int, ...]:
    """Quantized distance to the first occupied cell along each ray, clamped to max range."""
    offsets = np.arange(spec.rays) * (NUM_HEADINGS // spec.rays)
    dirs = HEADING_ARRAY[(pose.theta + offsets) % NUM_HEADINGS]
    steps = np.arange(1, spec.max_range + 1)
    xs = pose.x + dirs[:, :1] * steps
    ys = pose.y + dirs[:, 1:] * steps

    inside = (xs >= 0) & (xs < grid.width) & (ys >= 0) & (ys < grid.height)
    blocked = ~inside
    blocked[inside] = grid.occupancy[ys[inside], xs[inside]]

    hit = blocked.any(axis=1)
    first = blocked.argmax(axis=1)
    readings = np.where(hit, steps[first], spec.max_range)
    return tuple(int(r) for r in readings // spec.quantization)


def raycast_reference(grid: GridMap, pose: Pose, spec: LidarSpec) -> Tuple[int, ...]:
    """Cell-by-cell stepping version of ``raycast``."""
    readings = []
    for i in range(spec.rays):
        dx, dy = HEADINGS[(pose.theta + i * (NUM_HEADINGS // spec.rays)) % NUM_HEADINGS]
        reading = spec.max_range
        for k in range(1, spec.max_range + 1):
            if not grid.is_free((pose.x + k * dx, pose.y + k * dy)):
                reading = k
                break
        readings.append(reading // spec.quantization)
    return tuple(readings)


def encode_readings(readings: Tuple[int, ...], spec: LidarSpec) -> int:
    code = 0
    for reading in reversed(readings):
        code = code * spec.bins + reading
    return code


def distance_table(grid: GridMap, goal_cells=None, slip: bool = True) -> np.ndarray:
    """Cost-to-goal of every pose on the optimistic determinization.

    Each possible outcome of a primitive becomes its own deterministic edge;
    a single backward uniform-cost sweep from the goal poses fills the table.
    Occupied poses stay at infinity.
    """
    goal_cells = grid.goal_cells if goal_cells is None else goal_cells
    if not goal_cells:
        raise FixtureError(f"Map {grid.name} has no goal cells")

    reverse: Dict[int, List[Tuple[int, float]]] = {}
    free_poses = [Pose(x, y, t) for x, y in grid.free_cells() for t in range(NUM_HEADINGS)]
    for pose in free_poses:
        if (pose.x, pose.y) in goal_cells:
            continue
        source = grid.state_id(pose)
        for primitive in grid.primitives:
            outcomes = grid.outcomes(pose, primitive, slip)
            if outcomes is None:
                continue
            for successor in outcomes:
                reverse.setdefault(grid.state_id(successor), []).append((source, primitive.cost))

    dist = np.full(grid.num_states, np.inf)
    queue = []
    for x, y in sorted(goal_cells):
        for t in range(NUM_HEADINGS):
            state = grid.state_id(Pose(x, y, t))
            dist[state] = 0.0
            queue.append((0.0, state))
    heapq.heapify(queue)

    while queue:
        d, state = heapq.heappop(queue)
        if d > dist[state]:
            continue
        for source, cost in reverse.get(state, ()):
            if d + cost < dist[source]:
                dist[source] = d + cost
                heapq.heappush(queue, (d + cost, source))

    unreachable = [pose for pose in free_poses if not np.isfinite(dist[grid.state_id(pose)])]
    if unreachable:
        raise FixtureError(
            f"Goal region of {grid.name} unreachable from {len(unreachable)} free pose(s), e.g. {unreachable[0]}"
        )
    return dist
