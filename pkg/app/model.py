import time
import logging
from abc import ABC, abstractmethod
from typing import Dict, Hashable, Iterable, List, Optional, Set, Tuple

try:
    from .config import config
    from .belief import BeliefState, BeliefTransition, QueryLedger, Z_GOAL
    from .exceptions import DomainModelError
except ImportError:
    from config import config
    from belief import BeliefState, BeliefTransition, QueryLedger, Z_GOAL
    from exceptions import DomainModelError

logger = logging.getLogger(__name__)


class GoalPomdpModel(ABC):
    """Domain contract for a Goal-POMDP.

    Rows are returned as ``{outcome: probability}`` dicts. ``observation`` is
    called with the post-action state and the pre-action observable
    component. Goal states must be absorbing, cost-free and emit ``Z_GOAL``;
    the instrumented wrapper enforces the first two.
    """

    name = "goal-pomdp"
    information_gathering = False
    has_validity_oracle = False
    num_actions: int = 0
    num_states: int = 0

    @abstractmethod
    def initial_belief(self) -> BeliefState:
        pass

    @abstractmethod
    def transition(self, state: int, action: int, observable: Optional[Hashable] = None) -> Dict[int, float]:
        pass

    @abstractmethod
    def observation(self, state: int, action: int, observable: Optional[Hashable] = None) -> Dict[int, float]:
        pass

    @abstractmethod
    def cost(self, state: int, action: int, observable: Optional[Hashable] = None) -> float:
        pass

    def is_goal(self, state: int) -> bool:
        return False

    def is_goal_belief(self, belief: BeliefState) -> bool:
        if self.information_gathering:
            return belief.size <= 1
        return all(self.is_goal(s) for s in belief.support)

    def state_heuristic(self, state: int, observable: Optional[Hashable] = None) -> float:
        return 0.0

    def heuristic(self, belief: BeliefState) -> float:
        return sum(p * self.state_heuristic(s, belief.observable) for s, p in belief.particles)

    def actions(self, belief: BeliefState) -> List[int]:
        return list(range(self.num_actions))

    def successor_observable(self, belief: BeliefState, action: int, observation: int) -> Optional[Hashable]:
        return belief.observable

    def validity(self, state: int, action: int, observable: Optional[Hashable] = None) -> bool:
        return True

    def action_name(self, action: int) -> str:
        return str(action)


class InstrumentedModel:
    """Per-solve wrapper that counts every expensive model query.

    Holds the state that must not be shared between concurrent runs: the
    query ledger, the (BeliefKey, action) transition cache, validity results,
    the per-belief action blacklist and the particle states known to make an
    action invalid.
    """

    def __init__(self, domain: GoalPomdpModel, query_delay: Optional[float] = None,
                 eager_validation: bool = False):
        self.domain = domain
        self.query_delay = config.QUERY_DELAY if query_delay is None else query_delay
        self.eager_validation = eager_validation
        self.ledger = QueryLedger()
        self.transition_cache: Dict[Tuple[str, int], BeliefTransition] = {}
        self.validity_cache: Dict[Tuple[str, int], bool] = {}
        self.blacklist: Dict[str, Set[int]] = {}
        self.failed_particles: Dict[Tuple[str, int], List[int]] = {}
        self.forbidden: Dict[Tuple[int, Optional[Hashable]], Set[int]] = {}

    # Pass-through attributes
    @property
    def name(self) -> str:
        return self.domain.name

    @property
    def num_actions(self) -> int:
        return self.domain.num_actions

    @property
    def num_states(self) -> int:
        return self.domain.num_states

    @property
    def information_gathering(self) -> bool:
        return self.domain.information_gathering

    @property
    def has_validity_oracle(self) -> bool:
        return self.domain.has_validity_oracle

    def initial_belief(self) -> BeliefState:
        return self.domain.initial_belief()

    def is_goal(self, state: int) -> bool:
        return self.domain.is_goal(state)

    def is_goal_belief(self, belief: BeliefState) -> bool:
        return self.domain.is_goal_belief(belief)

    def heuristic(self, belief: BeliefState) -> float:
        return self.domain.heuristic(belief)

    def state_heuristic(self, state: int, observable: Optional[Hashable] = None) -> float:
        return self.domain.state_heuristic(state, observable)

    def successor_observable(self, belief: BeliefState, action: int, observation: int):
        return self.domain.successor_observable(belief, action, observation)

    def action_name(self, action: int) -> str:
        return self.domain.action_name(action)

    def _pay(self):
        if self.query_delay > 0:
            time.sleep(self.query_delay)

    def _check_row(self, row: Dict[int, float], what: str, state: int, action: int):
        if not row:
            raise DomainModelError(f"Empty {what} row for state {state}, action {action}")
        total = sum(row.values())
        if abs(total - 1.0) > config.SUM_TOLERANCE:
            raise DomainModelError(
                f"{what} row for state {state}, action {action} sums to {total}"
            )

    # Counted queries
    def transition(self, state: int, action: int, observable: Optional[Hashable] = None) -> Dict[int, float]:
        self.ledger.transition_queries += 1
        self._pay()
        if self.domain.is_goal(state):
            return {state: 1.0}
        row = self.domain.transition(state, action, observable)
        self._check_row(row, "transition", state, action)
        return row

    def observation(self, state: int, action: int, observable: Optional[Hashable] = None) -> Dict[int, float]:
        self.ledger.observation_queries += 1
        self._pay()
        row = self.domain.observation(state, action, observable)
        self._check_row(row, "observation", state, action)
        if self.domain.is_goal(state):
            if row.get(Z_GOAL, 0.0) < 1.0 - config.SUM_TOLERANCE:
                raise DomainModelError(f"Goal state {state} must emit the goal observation")
        elif Z_GOAL in row:
            raise DomainModelError(f"Non-goal state {state} emitted the goal observation")
        return row

    def validity(self, state: int, action: int, observable: Optional[Hashable] = None) -> bool:
        self.ledger.validity_queries += 1
        self._pay()
        if self.domain.is_goal(state):
            return True
        return self.domain.validity(state, action, observable)

    def cost(self, state: int, action: int, observable: Optional[Hashable] = None) -> float:
        if self.domain.is_goal(state):
            return 0.0
        return self.domain.cost(state, action, observable)

    def check_validity(self, belief: BeliefState, action: int) -> bool:
        """AND of per-particle validity; every particle is queried once per (belief, action).

        A belief holding a particle already known to make ``action`` invalid
        fails without any query.
        """
        cache_key = (belief.key, action)
        if cache_key in self.validity_cache:
            return self.validity_cache[cache_key]
        if self.touches_forbidden(belief, action):
            self.validity_cache[cache_key] = False
            return False
        failed = [s for s in belief.support if not self.validity(s, action, belief.observable)]
        if failed:
            self.failed_particles[cache_key] = failed
        self.validity_cache[cache_key] = not failed
        return not failed

    def invalid_support(self, belief: BeliefState, action: int) -> List[int]:
        """Particles whose validity query failed for (belief, action)."""
        return list(self.failed_particles.get((belief.key, action), ()))

    # Action set management
    def available_actions(self, belief: BeliefState) -> List[int]:
        banned = self.blacklist.get(belief.key, ())
        return [a for a in self.domain.actions(belief)
                if a not in banned and not self.touches_forbidden(belief, a)]

    def blacklist_action(self, belief: BeliefState, action: int):
        self.blacklist.setdefault(belief.key, set()).add(action)
        logger.info(f"Blacklisted action {self.action_name(action)} at belief {belief.key[:12]}")

    def forbid_particles(self, states: Iterable[int], action: int, observable: Optional[Hashable] = None) -> int:
        """Ban ``action`` at every belief whose support holds one of ``states``; returns how many were new."""
        forbidden = self.forbidden.setdefault((action, observable), set())
        before = len(forbidden)
        forbidden.update(states)
        added = len(forbidden) - before
        if added:
            logger.info(f"Action {self.action_name(action)} forbidden for {added} more particle state(s)")
        return added

    def touches_forbidden(self, belief: BeliefState, action: int) -> bool:
        forbidden = self.forbidden.get((action, belief.observable))
        return bool(forbidden) and not forbidden.isdisjoint(belief.support)

    def evict(self, belief: BeliefState, action: int):
        self.transition_cache.pop((belief.key, action), None)
