import time
import logging
from collections import deque
from typing import List, Optional, Tuple

try:
    from .belief import BeliefState
    from .exceptions import NoValidPolicyError, UnsupportedDomainError
    from .models import SolverConfig
    from .policy import PolicyGraph
    from .solvers import SolverResult
except ImportError:
    from belief import BeliefState
    from exceptions import NoValidPolicyError, UnsupportedDomainError
    from models import SolverConfig
    from policy import PolicyGraph
    from solvers import SolverResult

logger = logging.getLogger(__name__)


def invalid_policy_pairs(policy: PolicyGraph, model, exhaustive: bool = False) -> List[Tuple[BeliefState, int]]:
    """Invalid (belief, action) pairs of ``policy``; validity results are cached per pair.

    By default the policy is walked from its root and the successors of an
    invalid pair are not checked, since execution can never reach them.
    ``exhaustive`` checks every pair.
    """
    if exhaustive:
        return [(b, a) for b, a in policy.pairs() if not model.check_validity(b, a)]

    invalid = []
    seen = set()
    queue = deque([policy.root])
    while queue:
        belief = queue.popleft()
        node = policy.nodes.get(belief.key)
        if node is None or belief.key in seen:
            continue
        seen.add(belief.key)
        if not model.check_validity(belief, node.action):
            invalid.append((belief, node.action))
            continue
        for branch in node.transition.branches:
            queue.append(branch.successor)
    return invalid


def prune_forbidden(qtable, model) -> int:
    """Drop every Q-value whose action is now forbidden at its belief; returns how many went."""
    pruned = 0
    for record in qtable.records.values():
        for action in [a for a in record.entries if model.touches_forbidden(record.belief, a)]:
            qtable.discard_action(record.belief, action)
            model.evict(record.belief, action)
            pruned += 1
    return pruned


def fh_lazy(inner_solver, model, config: Optional[SolverConfig] = None, estimator=None) -> SolverResult:
    """Plan as if every action were valid, then validate only the policy's actions.

    Invalid pairs are blacklisted at their belief, and the particles that
    failed forbid the action at every other belief holding them. The inner
    solver then runs again, warm-started from the previous QTable unless
    ``fh_warm_start`` is off. Stops once the policy validates completely.
    """
    config = config or SolverConfig()
    if not model.has_validity_oracle:
        raise UnsupportedDomainError(f"{model.name} has no action-validity oracle")
    model.eager_validation = False

    start = time.monotonic()
    qtable = None
    result = None
    for iteration in range(1, config.fh_max_iterations + 1):
        remaining = config.timeout - (time.monotonic() - start)
        if remaining <= 0:
            break
        solver = inner_solver(model, config.model_copy(update={'timeout': remaining}), estimator)
        result = solver.solve(qtable)
        result.solver = f"fh-{solver.name}"
        result.outer_iterations = iteration
        if not result.converged or result.policy is None:
            logger.warning(f"Inner {solver.name} did not converge on outer iteration {iteration}")
            break

        invalid = invalid_policy_pairs(result.policy, model)
        if not invalid:
            logger.info(f"fh-{solver.name} validated its policy after {iteration} outer iteration(s)")
            result.ledger = model.ledger.snapshot()
            result.wall_time = time.monotonic() - start
            return result

        logger.info(f"Outer iteration {iteration}: {len(invalid)} invalid policy action(s)")
        for belief, action in invalid:
            model.forbid_particles(model.invalid_support(belief, action), action, belief.observable)
            model.blacklist_action(belief, action)
            model.evict(belief, action)
            if not model.available_actions(belief):
                raise NoValidPolicyError(f"Every action is invalid at belief {belief.key}")
        if config.fh_warm_start:
            pruned = prune_forbidden(result.qtable, model)
            logger.debug(f"Outer iteration {iteration}: pruned {pruned} warm-start Q-value(s)")
        qtable = result.qtable if config.fh_warm_start else None

    if result is None:
        raise NoValidPolicyError("Full-horizon planning ran out of time before the first solve")
    result.converged = False
    result.ledger = model.ledger.snapshot()
    result.wall_time = time.monotonic() - start
    return result
