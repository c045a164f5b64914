import time
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

try:
    from .belief import BeliefState, BeliefTransition, QueryLedger, compute_belief_transition
    from .exceptions import NoValidPolicyError, PolicyExtractionError
    from .models import SolverConfig
    from .policy import PolicyGraph, extract_policy
    from .qtable import QEntry, QSource, QTable, BeliefRecord, ImproveOutcome, improve_values
except ImportError:
    from belief import BeliefState, BeliefTransition, QueryLedger, compute_belief_transition
    from exceptions import NoValidPolicyError, PolicyExtractionError
    from models import SolverConfig
    from policy import PolicyGraph, extract_policy
    from qtable import QEntry, QSource, QTable, BeliefRecord, ImproveOutcome, improve_values

logger = logging.getLogger(__name__)


@dataclass
class SolverResult:
    solver: str
    value: float
    policy: Optional[PolicyGraph]
    ledger: QueryLedger
    iterations: int
    wall_time: float
    converged: bool
    outer_iterations: int = 1
    monotone_violations: int = 0
    evaluation_log: List[Tuple[str, int, bool]] = field(default_factory=list, repr=False)
    qtable: Optional[QTable] = field(default=None, repr=False)

    def to_dict(self):
        return {
            'solver': self.solver,
            'value': self.value,
            'converged': self.converged,
            'iterations': self.iterations,
            'outer_iterations': self.outer_iterations,
            'wall_time': self.wall_time,
            'policy_size': len(self.policy) if self.policy is not None else 0,
            'monotone_violations': self.monotone_violations,
            **self.ledger.as_dict(),
        }


class HeuristicSearchSolver:
    """Shared machinery for the four belief-space planners.

    Vanilla solvers evaluate every action the first time a belief is touched.
    Lazy solvers seed Q from the estimator and evaluate an action only while
    it is the argmin at its belief.
    """

    name = "solver"
    lazy = False

    def __init__(self, model, config: Optional[SolverConfig] = None, estimator=None):
        self.model = model
        self.config = config or SolverConfig()
        self.estimator = estimator
        if self.lazy and estimator is None:
            raise ValueError(f"{self.name} needs a Q-value estimator")
        self.qtable: Optional[QTable] = None
        self.evaluation_log: List[Tuple[str, int, bool]] = []
        self.iterations = 0
        self._deadline = 0.0

    def _timed_out(self) -> bool:
        return time.monotonic() > self._deadline

    def _evaluate(self, belief: BeliefState, action: int, was_argmin: bool) -> Optional[BeliefTransition]:
        """Belief transition for (belief, action), or None if eager validation rejects it."""
        model = self.model
        if model.eager_validation and model.has_validity_oracle:
            if not model.check_validity(belief, action):
                model.blacklist_action(belief, action)
                return None
        self.evaluation_log.append((belief.key, action, was_argmin))
        return compute_belief_transition(belief, action, model)

    def _available(self, belief: BeliefState) -> List[int]:
        actions = self.model.available_actions(belief)
        if not actions:
            raise NoValidPolicyError(f"No applicable action left at belief {belief.key}")
        return actions

    def _initialize(self, belief: BeliefState) -> BeliefRecord:
        actions = self._available(belief)
        inflation = self.config.epsilon_inflate
        entries: Dict[int, QEntry] = {}
        if self.lazy and len(actions) > 1:
            for action in actions:
                q = self.estimator.estimate(belief, action) * inflation
                entries[action] = QEntry(q=q, source=QSource.ESTIMATOR)
        else:
            for action in actions:
                transition = self._evaluate(belief, action, was_argmin=len(actions) == 1)
                if transition is None:
                    continue
                q = self.qtable.lookahead(transition, self.model)
                entries[action] = QEntry(q=q, source=QSource.HEURISTIC_LOOKAHEAD, transition=transition)
            if not entries:
                raise NoValidPolicyError(f"Every action is invalid at belief {belief.key}")
        record = self.qtable.add_record(belief, entries)
        record.expanded = True
        return record

    def _select(self, record: BeliefRecord) -> int:
        """Bellman update at one belief; returns the greedy action."""
        if not record.entries:
            raise NoValidPolicyError(f"Greedy policy reaches dead-end belief {record.belief.key}")
        if not self.lazy:
            self.qtable.update_q_values(record, self.model)
            best = record.best_action()
            self.qtable.set_value(record, record.entries[best].q)
            return best

        while True:
            best = record.best_action()
            entry = record.entries[best]
            if not entry.evaluated:
                transition = self._evaluate(record.belief, best, was_argmin=True)
                if transition is None:
                    del record.entries[best]
                    if not record.entries:
                        raise NoValidPolicyError(f"Every action is invalid at belief {record.belief.key}")
                    continue
                entry.transition = transition
            entry.q = self.qtable.lookahead(entry.transition, self.model)
            entry.source = QSource.BACKUP
            if record.best_action() == best:
                break
        self.qtable.set_value(record, record.entries[best].q)
        return best

    def _visit(self, belief: BeliefState) -> Tuple[BeliefRecord, int]:
        record = self.qtable.get(belief)
        if record is None:
            record = self._initialize(belief)
        return record, self._select(record)

    def solve(self, qtable: Optional[QTable] = None) -> SolverResult:
        start = time.monotonic()
        self._deadline = start + self.config.timeout
        self.qtable = qtable if qtable is not None else QTable(inflation=self.config.epsilon_inflate)
        self.iterations = 0
        b0 = self.model.initial_belief()

        logger.info(f"Starting {self.name} on {self.model.name}")
        if self.qtable.is_goal(b0, self.model):
            converged = True
        else:
            converged = self._run(b0)

        policy = None
        try:
            policy = extract_policy(self.qtable, b0, self.model)
        except PolicyExtractionError as e:
            if converged:
                raise
            logger.warning(f"{self.name} stopped with an open policy: {str(e)}")

        result = SolverResult(
            solver=self.name,
            value=self.qtable.value(b0, self.model),
            policy=policy,
            ledger=self.model.ledger.snapshot(),
            iterations=self.iterations,
            wall_time=time.monotonic() - start,
            converged=converged,
            monotone_violations=self.qtable.monotone_violations,
            evaluation_log=list(self.evaluation_log),
            qtable=self.qtable,
        )
        logger.info(
            f"{self.name} finished: V(b0)={result.value:.6f} converged={converged} "
            f"iterations={self.iterations} transitions={result.ledger.belief_transitions_computed}"
        )
        return result

    def _run(self, b0: BeliefState) -> bool:
        raise NotImplementedError


class RtdpBel(HeuristicSearchSolver):
    """Trial-based belief-space RTDP.

    Trials descend by sampling an observation branch with probability
    b_a(z), which matches sampling s ~ b, s' ~ T and z ~ O without spending
    model queries. Every ``convergence_window`` trials the greedy graph from
    b0 is swept once; the run converges when that graph is closed, its
    residual is within epsilon and V(b0) moved less than epsilon since the
    previous checkpoint.
    """

    name = "rtdp-bel"

    def _run(self, b0: BeliefState) -> bool:
        cfg = self.config
        rng = np.random.default_rng(cfg.seed)
        depth_cap = cfg.max_trial_depth or 10 * max(1, self.model.num_states)
        last_value = None

        for trial in range(1, cfg.max_trials + 1):
            if self._timed_out():
                logger.warning(f"{self.name} timed out after {trial - 1} trials")
                return False
            self.iterations = trial
            belief = b0
            for _ in range(depth_cap):
                if self.qtable.is_goal(belief, self.model):
                    break
                record, action = self._visit(belief)
                belief = self._sample_branch(record.entries[action].transition, rng)

            if trial % cfg.convergence_window == 0:
                closed, residual = self._checkpoint(b0)
                value = self.qtable.value(b0, self.model)
                logger.debug(f"{self.name} trial {trial}: V(b0)={value} residual={residual} closed={closed}")
                if (closed and residual <= cfg.epsilon_residual and last_value is not None
                        and abs(value - last_value) < cfg.epsilon_residual):
                    return True
                last_value = value
        return False

    @staticmethod
    def _sample_branch(transition: BeliefTransition, rng: np.random.Generator) -> BeliefState:
        u = rng.random()
        acc = 0.0
        for branch in transition.branches:
            acc += branch.probability
            if u < acc:
                return branch.successor
        return transition.branches[-1].successor

    def _checkpoint(self, b0: BeliefState) -> Tuple[bool, float]:
        """One backup over the greedy graph from b0: (closed, max residual)."""
        closed = True
        residual = 0.0
        seen = set()
        queue = deque([b0])
        while queue:
            belief = queue.popleft()
            if belief.key in seen or self.qtable.is_goal(belief, self.model):
                continue
            seen.add(belief.key)
            record = self.qtable.get(belief)
            if record is None:
                closed = False
                continue
            self.qtable.update_q_values(record, self.model)
            entry = record.best_entry()
            value = record.best_value()
            if value != record.value:
                residual = max(residual, abs(value - record.value))
            self.qtable.set_value(record, value)
            if entry is None:
                continue
            if not entry.evaluated:
                closed = False
                continue
            for branch in entry.transition.branches:
                queue.append(branch.successor)
        return closed, residual


class LazyRtdpBel(RtdpBel):
    name = "lazy-rtdp-bel"
    lazy = True


@dataclass
class SolutionGraph:
    nodes: Dict[str, BeliefState]
    depth: Dict[str, int]
    parents: Dict[str, set]
    tips: List[BeliefState]


class LaoStar(HeuristicSearchSolver):
    """AND/OR search over the greedy partial solution graph G*.

    Tips are expanded deepest first (ties by BeliefKey); after each expansion
    the tip and its ancestors in G* are improved. Once no tips are left, the
    whole of G* is improved and the search resumes whenever the greedy policy
    changes.
    """

    name = "lao-star"

    def _is_tip(self, belief: BeliefState) -> bool:
        record = self.qtable.get(belief)
        if record is None:
            return True
        if not record.entries:
            return False
        if self.lazy:
            return not record.best_entry().evaluated
        return not record.expanded

    def _solution_graph(self, b0: BeliefState) -> SolutionGraph:
        graph = SolutionGraph(nodes={}, depth={b0.key: 0}, parents={}, tips=[])
        queue = deque([b0])
        while queue:
            belief = queue.popleft()
            if belief.key in graph.nodes or self.qtable.is_goal(belief, self.model):
                continue
            graph.nodes[belief.key] = belief
            if self._is_tip(belief):
                graph.tips.append(belief)
                continue
            entry = self.qtable.get(belief).best_entry()
            if entry is None:
                continue
            for branch in entry.transition.branches:
                child = branch.successor
                graph.parents.setdefault(child.key, set()).add(belief.key)
                if child.key not in graph.depth:
                    graph.depth[child.key] = graph.depth[belief.key] + 1
                    queue.append(child)
        return graph

    def _ancestors(self, graph: SolutionGraph, tip: BeliefState) -> List[BeliefState]:
        found = {tip.key}
        stack = [tip.key]
        while stack:
            for parent in graph.parents.get(stack.pop(), ()):
                if parent not in found:
                    found.add(parent)
                    stack.append(parent)
        ordered = sorted(found, key=lambda key: (-graph.depth[key], key))
        return [graph.nodes[key] for key in ordered]

    def _expand(self, tip: BeliefState):
        self._visit(tip)

    def _run(self, b0: BeliefState) -> bool:
        cfg = self.config
        rounds = 0
        while True:
            if self._timed_out():
                logger.warning(f"{self.name} timed out after {self.iterations} expansions")
                return False
            if self.iterations >= cfg.max_expansions or rounds >= cfg.max_expansions:
                logger.warning(f"{self.name} hit the expansion cap")
                return False

            graph = self._solution_graph(b0)
            if graph.tips:
                tip = min(graph.tips, key=lambda b: (-graph.depth[b.key], b.key))
                self._expand(tip)
                self.iterations += 1
                logger.debug(f"{self.name} expanded {tip.key[:12]} at depth {graph.depth[tip.key]}")
                improve_values(self._ancestors(graph, tip), self.qtable, self.model,
                               self.lazy, cfg.epsilon_residual, cfg.max_sweeps)
                continue

            rounds += 1
            ordered = sorted(graph.nodes, key=lambda key: (-graph.depth[key], key))
            outcome = improve_values([graph.nodes[key] for key in ordered], self.qtable, self.model,
                                     self.lazy, cfg.epsilon_residual, cfg.max_sweeps)
            if outcome == ImproveOutcome.CONVERGED:
                return True


class LazyLaoStar(LaoStar):
    name = "lazy-lao-star"
    lazy = True


SOLVERS = {cls.name: cls for cls in (RtdpBel, LazyRtdpBel, LaoStar, LazyLaoStar)}


def rtdp_bel(model, config: Optional[SolverConfig] = None) -> SolverResult:
    return RtdpBel(model, config).solve()


def lazy_rtdp_bel(model, estimator, config: Optional[SolverConfig] = None) -> SolverResult:
    return LazyRtdpBel(model, config, estimator).solve()


def lao_star(model, config: Optional[SolverConfig] = None) -> SolverResult:
    return LaoStar(model, config).solve()


def lazy_lao_star(model, estimator, config: Optional[SolverConfig] = None) -> SolverResult:
    return LazyLaoStar(model, config, estimator).solve()
