import math
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional

try:
    from .belief import BeliefState, BeliefTransition
except ImportError:
    from belief import BeliefState, BeliefTransition

logger = logging.getLogger(__name__)

MONOTONE_TOLERANCE = 1e-9


class QSource(str, Enum):
    HEURISTIC_LOOKAHEAD = "heuristic-lookahead"
    ESTIMATOR = "estimator"
    BACKUP = "backup"


class ImproveOutcome(str, Enum):
    CONVERGED = "converged"
    BEST_ACTION_UNEVALUATED = "best-action-unevaluated"
    POLICY_CHANGED = "policy-changed"


@dataclass
class QEntry:
    q: float
    source: QSource
    transition: Optional[BeliefTransition] = None

    @property
    def evaluated(self) -> bool:
        return self.transition is not None


@dataclass
class BeliefRecord:
    belief: BeliefState
    value: float
    entries: Dict[int, QEntry] = field(default_factory=dict)
    expanded: bool = False

    def best_action(self) -> Optional[int]:
        # Lowest action id wins ties.
        if not self.entries:
            return None
        return min(self.entries, key=lambda a: (self.entries[a].q, a))

    def best_entry(self) -> Optional[QEntry]:
        best = self.best_action()
        return None if best is None else self.entries[best]

    def best_value(self) -> float:
        """Lowest Q-value; a record with no actions left is a dead end."""
        best = self.best_entry()
        return math.inf if best is None else best.q


class QTable:
    """Per-belief Q-values, keyed by BeliefKey.

    Beliefs that were never initialized are absent; their value is the
    inflated heuristic, and goal beliefs are always worth zero.
    """

    def __init__(self, inflation: float = 1.0):
        self.inflation = inflation
        self.records: Dict[str, BeliefRecord] = {}
        self.monotone_violations = 0
        self._goal_flags: Dict[str, bool] = {}

    def __len__(self):
        return len(self.records)

    def __contains__(self, belief: BeliefState) -> bool:
        return belief.key in self.records

    def get(self, belief: BeliefState) -> Optional[BeliefRecord]:
        return self.records.get(belief.key)

    def is_goal(self, belief: BeliefState, model) -> bool:
        flag = self._goal_flags.get(belief.key)
        if flag is None:
            flag = model.is_goal_belief(belief)
            self._goal_flags[belief.key] = flag
        return flag

    def value(self, belief: BeliefState, model) -> float:
        if self.is_goal(belief, model):
            return 0.0
        record = self.records.get(belief.key)
        if record is not None:
            return record.value
        return model.heuristic(belief) * self.inflation

    def lookahead(self, transition: BeliefTransition, model) -> float:
        return transition.expected_cost + sum(
            branch.probability * self.value(branch.successor, model)
            for branch in transition.branches
        )

    def add_record(self, belief: BeliefState, entries: Dict[int, QEntry]) -> BeliefRecord:
        record = BeliefRecord(belief=belief, value=0.0, entries=entries)
        record.value = record.best_value()
        self.records[belief.key] = record
        return record

    def set_value(self, record: BeliefRecord, value: float):
        if value < record.value - MONOTONE_TOLERANCE * max(1.0, abs(record.value)):
            self.monotone_violations += 1
            logger.debug(f"Value of {record.belief.key[:12]} decreased {record.value} -> {value}")
        record.value = value

    def update_q_values(self, record: BeliefRecord, model):
        """Recompute every evaluated action from its cached transition."""
        for entry in record.entries.values():
            if entry.evaluated:
                entry.q = self.lookahead(entry.transition, model)
                entry.source = QSource.BACKUP

    def discard_action(self, belief: BeliefState, action: int) -> Optional[BeliefRecord]:
        record = self.records.get(belief.key)
        if record is None:
            return None
        record.entries.pop(action, None)
        record.value = record.best_value()
        return record


def improve_values(beliefs: Iterable[BeliefState], qtable: QTable, model, lazy_aware: bool,
                   epsilon: float, max_sweeps: int = 10000) -> ImproveOutcome:
    """Bellman backups restricted to evaluated actions' cached transitions.

    Unevaluated (estimator-valued) actions only take part in the argmin. With
    ``lazy_aware`` the routine stops as soon as such an action becomes the
    argmin of some belief.
    """
    records: List[BeliefRecord] = [qtable.records[b.key] for b in beliefs]
    previous = {record.belief.key: record.best_action() for record in records}

    converged = False
    for _ in range(max_sweeps):
        residual = 0.0
        for record in records:
            qtable.update_q_values(record, model)
            best = record.best_entry()
            new_value = record.best_value()
            if new_value != record.value:
                residual = max(residual, abs(new_value - record.value))
            qtable.set_value(record, new_value)
            if lazy_aware and best is not None and not best.evaluated:
                return ImproveOutcome.BEST_ACTION_UNEVALUATED
        if residual <= epsilon:
            converged = True
            break

    if not converged:
        return ImproveOutcome.POLICY_CHANGED
    for record in records:
        if record.best_action() != previous[record.belief.key]:
            return ImproveOutcome.POLICY_CHANGED
    return ImproveOutcome.CONVERGED
