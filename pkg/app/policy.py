import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import networkx as nx
import numpy as np

try:
    from .belief import BeliefState, BeliefTransition, compute_belief_transition
    from .exceptions import NoValidPolicyError, PolicyExtractionError, PolicyDivergenceError
except ImportError:
    from belief import BeliefState, BeliefTransition, compute_belief_transition
    from exceptions import NoValidPolicyError, PolicyExtractionError, PolicyDivergenceError

logger = logging.getLogger(__name__)

GOAL_SINK = "__goal__"


@dataclass
class PolicyNode:
    belief: BeliefState
    action: int
    transition: BeliefTransition


@dataclass
class PolicyGraph:
    root: BeliefState
    nodes: Dict[str, PolicyNode] = field(default_factory=dict)

    def __len__(self):
        return len(self.nodes)

    def is_empty(self) -> bool:
        return not self.nodes

    def action_at(self, belief: BeliefState) -> Optional[int]:
        node = self.nodes.get(belief.key)
        return None if node is None else node.action

    def pairs(self):
        """(belief, action) pairs in insertion (breadth-first) order."""
        return [(node.belief, node.action) for node in self.nodes.values()]

    def to_dict(self, model=None):
        name = model.action_name if model is not None else str
        return {
            'root': self.root.key,
            'nodes': [
                {
                    'belief': key,
                    'action': name(node.action),
                    'branches': [
                        [b.observation, b.probability, b.successor.key]
                        for b in node.transition.branches
                    ],
                }
                for key, node in self.nodes.items()
            ],
        }


def extract_policy(qtable, b0: BeliefState, model) -> PolicyGraph:
    """Greedy argmin closure from b0, stopping at goal beliefs."""
    policy = PolicyGraph(root=b0)
    queue = deque([b0])
    while queue:
        belief = queue.popleft()
        if belief.key in policy.nodes or qtable.is_goal(belief, model):
            continue
        record = qtable.get(belief)
        if record is None:
            raise PolicyExtractionError(f"Policy reaches uninitialized belief {belief.key}")
        entry = record.best_entry()
        if entry is None:
            raise NoValidPolicyError(f"Every action is invalid at belief {belief.key}")
        if not entry.evaluated:
            raise PolicyExtractionError(f"Best action at belief {belief.key} is not evaluated")
        policy.nodes[belief.key] = PolicyNode(belief, record.best_action(), entry.transition)
        for branch in entry.transition.branches:
            queue.append(branch.successor)
    return policy


def policy_from_rule(model, b0: BeliefState, rule: Callable[[BeliefState], int],
                     max_nodes: int = 100000) -> PolicyGraph:
    """Policy graph of a fixed belief -> action rule."""
    policy = PolicyGraph(root=b0)
    queue = deque([b0])
    while queue:
        belief = queue.popleft()
        if belief.key in policy.nodes or model.is_goal_belief(belief):
            continue
        if len(policy.nodes) >= max_nodes:
            raise PolicyExtractionError(f"Rule policy exceeded {max_nodes} nodes")
        action = rule(belief)
        transition = compute_belief_transition(belief, action, model)
        policy.nodes[belief.key] = PolicyNode(belief, action, transition)
        for branch in transition.branches:
            queue.append(branch.successor)
    return policy


def _policy_digraph(policy: PolicyGraph, model) -> nx.DiGraph:
    graph = nx.DiGraph()
    graph.add_node(GOAL_SINK)
    for key, node in policy.nodes.items():
        graph.add_node(key)
        for branch in node.transition.branches:
            if model.is_goal_belief(branch.successor):
                graph.add_edge(key, GOAL_SINK)
            elif branch.successor.key in policy.nodes:
                graph.add_edge(key, branch.successor.key)
            else:
                raise PolicyExtractionError(
                    f"Policy is open: successor {branch.successor.key} has no action"
                )
    return graph


def _exact_cost(policy: PolicyGraph, model) -> float:
    graph = _policy_digraph(policy, model)
    terminating = nx.ancestors(graph, GOAL_SINK)
    stuck = [key for key in policy.nodes if key not in terminating]
    if stuck:
        raise PolicyDivergenceError(
            f"{len(stuck)} policy node(s) never reach a goal belief"
        )

    index = {key: i for i, key in enumerate(policy.nodes)}
    size = len(index)
    matrix = np.eye(size)
    costs = np.zeros(size)
    for key, node in policy.nodes.items():
        i = index[key]
        costs[i] = node.transition.expected_cost
        for branch in node.transition.branches:
            j = index.get(branch.successor.key)
            if j is not None:
                matrix[i, j] -= branch.probability
    values = np.linalg.solve(matrix, costs)
    return float(values[index[policy.root.key]])


def _draw(row: Dict[int, float], rng: np.random.Generator) -> int:
    u = rng.random() * sum(row.values())
    acc = 0.0
    last = None
    for outcome, p in row.items():
        acc += p
        last = outcome
        if u < acc:
            return outcome
    return last


def _monte_carlo_cost(policy: PolicyGraph, model, rollouts: int, seed: int, max_steps: int) -> float:
    rng = np.random.default_rng(seed)
    root = policy.root
    root_row = dict(root.particles)
    total = 0.0
    for _ in range(rollouts):
        belief = root
        state = _draw(root_row, rng)
        cost = 0.0
        steps = 0
        while not model.is_goal_belief(belief):
            if steps >= max_steps:
                raise PolicyDivergenceError(f"Rollout exceeded {max_steps} steps")
            node = policy.nodes.get(belief.key)
            if node is None:
                raise PolicyExtractionError(f"Rollout left the policy at {belief.key}")
            cost += model.cost(state, node.action, belief.observable)
            next_state = _draw(model.transition(state, node.action, belief.observable), rng)
            z = _draw(model.observation(next_state, node.action, belief.observable), rng)
            branch = node.transition.branch_for(z)
            if branch is None:
                # z sits in a branch dropped as numerical dust; follow the branch law instead.
                weights = {i: b.probability for i, b in enumerate(node.transition.branches)}
                branch = node.transition.branches[_draw(weights, rng)]
            belief = branch.successor
            state = next_state
            steps += 1
        total += cost
    return total / rollouts


def evaluate_policy(policy: PolicyGraph, model, mode: str = "exact", rollouts: int = 10000,
                    seed: int = 0, max_steps: int = 10000) -> float:
    """Expected cost to reach a goal belief under ``policy``.

    ``exact`` solves the linear cost-to-go system; ``monte-carlo`` averages
    rollouts that sample the true state from b0 and then s' and z from the
    model.
    """
    if policy.is_empty():
        return 0.0
    if mode == "exact":
        return _exact_cost(policy, model)
    if mode == "monte-carlo":
        return _monte_carlo_cost(policy, model, rollouts, seed, max_steps)
    raise ValueError(f"Unknown evaluation mode: {mode}")

