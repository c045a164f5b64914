"""Exhaustive reference solutions for small fixtures.

Enumerates every belief reachable from b0 under every available action and
runs Gauss-Seidel value iteration on the resulting belief MDP.
"""
import logging
from collections import deque
from dataclasses import dataclass
from typing import Dict, List, Tuple

try:
    from .belief import BeliefState, BeliefTransition, compute_belief_transition
    from .exceptions import PlannerError
except ImportError:
    from belief import BeliefState, BeliefTransition, compute_belief_transition
    from exceptions import PlannerError

logger = logging.getLogger(__name__)


@dataclass
class BeliefMdp:
    root: BeliefState
    beliefs: Dict[str, BeliefState]
    transitions: Dict[str, Dict[int, BeliefTransition]]
    goals: set

    def __len__(self):
        return len(self.beliefs)


@dataclass
class OracleSolution:
    mdp: BeliefMdp
    values: Dict[str, float]
    sweeps: int

    @property
    def value(self) -> float:
        return self.values[self.mdp.root.key]

    def q_value(self, belief: BeliefState, action: int) -> float:
        transition = self.mdp.transitions[belief.key][action]
        return transition.expected_cost + sum(
            branch.probability * self.values[branch.successor.key] for branch in transition.branches
        )

    def pairs(self) -> List[Tuple[BeliefState, int]]:
        return [
            (self.mdp.beliefs[key], action)
            for key, actions in self.mdp.transitions.items()
            for action in actions
        ]


def enumerate_reachable(model, b0: BeliefState = None, limit: int = 20000) -> BeliefMdp:
    b0 = b0 or model.initial_belief()
    mdp = BeliefMdp(root=b0, beliefs={}, transitions={}, goals=set())
    queue = deque([b0])
    while queue:
        belief = queue.popleft()
        if belief.key in mdp.beliefs:
            continue
        mdp.beliefs[belief.key] = belief
        if model.is_goal_belief(belief):
            mdp.goals.add(belief.key)
            continue
        if len(mdp.beliefs) > limit:
            raise PlannerError(f"More than {limit} reachable beliefs; fixture too large to enumerate")
        mdp.transitions[belief.key] = {}
        for action in model.available_actions(belief):
            transition = compute_belief_transition(belief, action, model)
            mdp.transitions[belief.key][action] = transition
            for branch in transition.branches:
                queue.append(branch.successor)
    logger.info(f"Enumerated {len(mdp)} reachable beliefs of {model.name}")
    return mdp


def value_iteration(model, b0: BeliefState = None, epsilon: float = 1e-12,
                    max_sweeps: int = 100000, limit: int = 20000) -> OracleSolution:
    mdp = enumerate_reachable(model, b0, limit)
    values = {key: 0.0 for key in mdp.beliefs}
    order = sorted(mdp.transitions)

    for sweep in range(1, max_sweeps + 1):
        residual = 0.0
        for key in order:
            best = min(
                t.expected_cost + sum(b.probability * values[b.successor.key] for b in t.branches)
                for t in mdp.transitions[key].values()
            )
            residual = max(residual, abs(best - values[key]))
            values[key] = best
        if residual <= epsilon:
            return OracleSolution(mdp, values, sweep)
    raise PlannerError(f"Value iteration did not reach {epsilon} in {max_sweeps} sweeps")
