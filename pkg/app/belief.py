"""Belief states and exact Bayesian belief transitions.

A belief is a finite particle set over integer state ids, optionally paired
with a fully observable component (for example the robot cell in the
contact domain). All constructors go through ``canonicalize`` so equal
distributions always share a key.
"""
import hashlib
import logging
from collections import defaultdict
from dataclasses import dataclass, asdict
from functools import cached_property
from typing import Dict, Hashable, Iterable, List, Optional, Tuple

try:
    from .config import config
    from .exceptions import (
        InvalidBeliefError,
        DomainModelError,
        GoalBeliefError,
        ZeroProbabilityObservationError,
    )
except ImportError:
    from config import config
    from exceptions import (
        InvalidBeliefError,
        DomainModelError,
        GoalBeliefError,
        ZeroProbabilityObservationError,
    )

logger = logging.getLogger(__name__)

# Observation emitted from (and only from) goal states.
Z_GOAL = -1


@dataclass(frozen=True)
class BeliefState:
    particles: Tuple[Tuple[int, float], ...]
    observable: Optional[Hashable] = None

    @cached_property
    def key(self) -> str:
        rho = config.KEY_RESOLUTION
        quantized = tuple((s, round(p / rho)) for s, p in self.particles)
        digest = hashlib.blake2b(repr((self.observable, quantized)).encode(), digest_size=16)
        return digest.hexdigest()

    @property
    def support(self) -> Tuple[int, ...]:
        return tuple(s for s, _ in self.particles)

    @property
    def size(self) -> int:
        return len(self.particles)

    def probability(self, state: int) -> float:
        for s, p in self.particles:
            if s == state:
                return p
        return 0.0

    def is_uniform(self, tolerance: float = 1e-9) -> bool:
        first = self.particles[0][1]
        return all(abs(p - first) <= tolerance for _, p in self.particles)

    def to_dict(self):
        return {
            'key': self.key,
            'observable': self.observable,
            'particles': [[s, p] for s, p in self.particles],
        }


def canonicalize(raw: Iterable[Tuple[int, float]], observable: Optional[Hashable] = None,
                 prune_threshold: Optional[float] = None) -> BeliefState:
    """Merge duplicates, normalize, prune dust, renormalize and sort."""
    tau = config.PRUNE_THRESHOLD if prune_threshold is None else prune_threshold

    merged: Dict[int, float] = defaultdict(float)
    for state, weight in raw:
        if weight < 0:
            raise InvalidBeliefError(f"Negative weight {weight} for state {state}")
        merged[int(state)] += weight

    total = sum(merged.values())
    if total <= 0:
        raise InvalidBeliefError("Belief has no positive weight")

    kept = {s: w / total for s, w in merged.items() if w / total >= tau}
    if not kept:
        raise InvalidBeliefError("Every particle fell below the prune threshold")

    total = sum(kept.values())
    particles = tuple((s, kept[s] / total) for s in sorted(kept))
    return BeliefState(particles=particles, observable=observable)


def point_belief(state: int, observable: Optional[Hashable] = None) -> BeliefState:
    return BeliefState(particles=((int(state), 1.0),), observable=observable)


def uniform_belief(states: Iterable[int], observable: Optional[Hashable] = None) -> BeliefState:
    states = list(states)
    if not states:
        raise InvalidBeliefError("Cannot build a uniform belief over no states")
    return canonicalize(((s, 1.0) for s in states), observable)


@dataclass(frozen=True)
class Branch:
    observation: int
    probability: float
    successor: BeliefState


@dataclass(frozen=True)
class BeliefTransition:
    action: int
    branches: Tuple[Branch, ...]
    expected_cost: float

    def branch_for(self, observation: int) -> Optional[Branch]:
        for branch in self.branches:
            if branch.observation == observation:
                return branch
        return None


@dataclass
class QueryLedger:
    transition_queries: int = 0
    observation_queries: int = 0
    validity_queries: int = 0
    belief_transitions_computed: int = 0
    estimator_calls: int = 0

    def snapshot(self) -> 'QueryLedger':
        return QueryLedger(**asdict(self))

    def as_dict(self) -> Dict[str, int]:
        return asdict(self)


def is_goal_belief(belief: BeliefState, model) -> bool:
    return model.is_goal_belief(belief)


def belief_after_action(belief: BeliefState, action: int, model) -> BeliefState:
    """b_a(s) = sum over s' of T(s', a, s) b(s')."""
    mass: Dict[int, float] = defaultdict(float)
    for state, prob in belief.particles:
        row = model.transition(state, action, belief.observable)
        if not row:
            raise DomainModelError(f"No successors for state {state} under action {action}")
        for successor, p in row.items():
            mass[successor] += prob * p
    return canonicalize(mass.items(), belief.observable)


def observation_distribution(belief_a: BeliefState, action: int, model) -> List[Tuple[int, float]]:
    """b_a(z) = sum over s of b_a(s) O(s, a, z); zero entries omitted."""
    mass: Dict[int, float] = defaultdict(float)
    for state, prob in belief_a.particles:
        row = model.observation(state, action, belief_a.observable)
        for z, p in row.items():
            mass[z] += prob * p
    return [(z, p) for z, p in sorted(mass.items()) if p > 0]


def belief_after_observation(belief_a: BeliefState, action: int, observation: int, model) -> BeliefState:
    weights = []
    for state, prob in belief_a.particles:
        row = model.observation(state, action, belief_a.observable)
        weight = prob * row.get(observation, 0.0)
        if weight > 0:
            weights.append((state, weight))

    if not weights:
        raise ZeroProbabilityObservationError(
            f"Observation {observation} has zero probability after action {action}"
        )
    return canonicalize(weights, model.successor_observable(belief_a, action, observation))


def compute_belief_transition(belief: BeliefState, action: int, model,
                              use_cache: bool = True, allow_goal: bool = False) -> BeliefTransition:
    """Full branch set of one (belief, action) pair.

    Cached transitions live on the instrumented model and are counted once in
    ``belief_transitions_computed``. Uncached calls (estimators, oracles) still
    pay the model queries but leave that counter alone.
    """
    if not allow_goal and model.is_goal_belief(belief):
        raise GoalBeliefError(f"Belief {belief.key} is already a goal belief")

    cache_key = (belief.key, action)
    if use_cache:
        cached = model.transition_cache.get(cache_key)
        if cached is not None:
            return cached

    expected_cost = 0.0
    for state, prob in belief.particles:
        expected_cost += prob * model.cost(state, action, belief.observable)

    belief_a = belief_after_action(belief, action, model)

    joint: Dict[int, Dict[int, float]] = defaultdict(lambda: defaultdict(float))
    for state, prob in belief_a.particles:
        row = model.observation(state, action, belief_a.observable)
        for z, p in row.items():
            if p > 0:
                joint[z][state] += prob * p

    threshold = config.BRANCH_THRESHOLD
    totals = {z: sum(weights.values()) for z, weights in joint.items()}
    kept = sorted(z for z, total in totals.items() if total >= threshold)
    if not kept:
        raise ZeroProbabilityObservationError(
            f"All observation branches vanished for action {action} at belief {belief.key}"
        )

    norm = sum(totals[z] for z in kept)
    branches = tuple(
        Branch(
            observation=z,
            probability=totals[z] / norm,
            successor=canonicalize(
                joint[z].items(), model.successor_observable(belief_a, action, z)
            ),
        )
        for z in kept
    )

    transition = BeliefTransition(action=action, branches=branches, expected_cost=expected_cost)
    if use_cache:
        model.transition_cache[cache_key] = transition
        model.ledger.belief_transitions_computed += 1
    return transition
