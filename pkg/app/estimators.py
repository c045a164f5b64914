"""Cheap surrogates for the one-step lookahead Q_init(b, a).

Every estimator returns a cost-to-go estimate for a (belief, action) pair
without touching the solver's transition cache. Sampling estimators draw
from a random stream derived from (seed, BeliefKey, action), so repeated
calls on the same pair always agree.
"""
import math
import logging
from collections import defaultdict
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, Optional, Tuple

import numpy as np

try:
    from .belief import BeliefState, canonicalize, compute_belief_transition
    from .exceptions import UnsupportedDomainError, InsufficientBudgetError, ConfigError
    from .models import EstimatorConfig
except ImportError:
    from belief import BeliefState, canonicalize, compute_belief_transition
    from exceptions import UnsupportedDomainError, InsufficientBudgetError, ConfigError
    from models import EstimatorConfig

logger = logging.getLogger(__name__)


def rng_for(seed: int, key: str, action: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(key[:16], 16), int(action)]))


@dataclass(frozen=True)
class SubsampledBelief:
    base: str
    belief: BeliefState
    n: int
    k: int
    draws: int


def q_init_exact(belief: BeliefState, action: int, model,
                 heuristic: Optional[Callable[[BeliefState], float]] = None) -> float:
    """C(b, a) + sum over z of P(z | b, a) heur(b_a^z), from the full transition."""
    heuristic = heuristic or model.heuristic
    transition = compute_belief_transition(belief, action, model, use_cache=False)
    return transition.expected_cost + sum(
        branch.probability * heuristic(branch.successor) for branch in transition.branches
    )


def subsample(belief: BeliefState, delta_fraction: float, rng: np.random.Generator,
              max_draw_factor: int = 50, empirical_weights: bool = True) -> SubsampledBelief:
    """Draw states from ``belief`` until ceil(delta * n) distinct states are seen.

    Draws stop at ``max_draw_factor * target``; the remainder is padded with
    the most probable unseen states, each counted once.
    """
    states = np.array(belief.support)
    probs = np.array([p for _, p in belief.particles])
    n = len(states)
    target = min(n, max(1, math.ceil(delta_fraction * n)))
    cap = max_draw_factor * target

    counts: Dict[int, int] = {}
    draws = 0
    while len(counts) < target and draws < cap:
        batch = rng.choice(n, size=min(max(target, 16), cap - draws), p=probs)
        for index in batch:
            draws += 1
            state = int(states[index])
            counts[state] = counts.get(state, 0) + 1
            if len(counts) >= target:
                break

    if len(counts) < target:
        order = sorted(range(n), key=lambda i: (-probs[i], states[i]))
        for i in order:
            if len(counts) >= target:
                break
            counts.setdefault(int(states[i]), 1)

    if empirical_weights:
        weights = counts.items()
    else:
        weights = ((s, belief.probability(s)) for s in counts)
    reduced = canonicalize(weights, belief.observable)
    return SubsampledBelief(base=belief.key, belief=reduced, n=n, k=reduced.size, draws=draws)


def q_hat_subsample(belief: BeliefState, action: int, model,
                    heuristic: Optional[Callable[[BeliefState], float]], cfg: EstimatorConfig,
                    rng: np.random.Generator) -> float:
    """Q_init evaluated on a reduced-support belief; queries only its k particles."""
    heuristic = heuristic or model.heuristic
    reduced = subsample(belief, cfg.delta_fraction, rng, cfg.max_draw_factor, cfg.empirical_weights)
    # A reduced belief made only of goal particles costs nothing from here on.
    transition = compute_belief_transition(reduced.belief, action, model, use_cache=False, allow_goal=True)
    return transition.expected_cost + sum(
        branch.probability * heuristic(branch.successor) for branch in transition.branches
    )


def entropy_corrected_value(cost: float, alpha: float, n: int, k: int,
                            partition_sizes: Iterable[float], correction: str = "squared-ratio") -> float:
    sizes = list(partition_sizes)
    if correction == "u-statistic" and k >= 2:
        scale_pair = n * (n - 1) / (k * (k - 1))
        squares = sum(scale_pair * x * (x - 1) + (n / k) * x for x in sizes)
    else:
        squares = sum(((n / k) * x) ** 2 for x in sizes)
    return cost + alpha * squares / n


def conservative_value(cost: float, alpha: float, n: int, k: int,
                       partition_sizes: Iterable[float], kappa: float) -> float:
    shrink = kappa * math.sqrt(k)
    squares = sum((max(0.0, x - shrink) * n / k) ** 2 for x in partition_sizes)
    return cost + alpha * squares / n


def squared_ratio_bias(alpha: float, n: int, k: int, partition_sizes: Iterable[float]) -> float:
    """Expected overestimate of the squared-ratio correction over uniform k-subsets of n hypotheses.

    Each subsampled partition size is hypergeometric, so the squared form is
    off by (n/k)^2 times its variance, summed over observations.
    """
    if k >= n:
        return 0.0
    excess = 0.0
    for size in partition_sizes:
        share = size / n
        variance = k * share * (1.0 - share) * (n - k) / (n - 1)
        excess += (n / k) ** 2 * variance
    return alpha * excess / n


def partition_counts(belief: BeliefState, action: int, model) -> Tuple[float, Dict[int, float]]:
    """Mean cost and per-observation hypothesis counts over the support of ``belief``."""
    counts: Dict[int, float] = defaultdict(float)
    cost = 0.0
    for state in belief.support:
        cost += model.cost(state, action, belief.observable)
        for successor, p in model.transition(state, action, belief.observable).items():
            for z, o in model.observation(successor, action, belief.observable).items():
                counts[z] += p * o
    return cost / belief.size, dict(counts)


def _require_hypothesis_belief(belief: BeliefState, model):
    if not model.information_gathering:
        raise UnsupportedDomainError("Entropy estimators need an information-gathering domain")
    if not belief.is_uniform():
        raise UnsupportedDomainError("Entropy estimators need unweighted hypothesis particles")


def q_hat_entropy_corrected(belief: BeliefState, action: int, model, cfg: EstimatorConfig,
                            rng: np.random.Generator) -> float:
    _require_hypothesis_belief(belief, model)
    reduced = subsample(belief, cfg.delta_fraction, rng, cfg.max_draw_factor)
    cost, counts = partition_counts(reduced.belief, action, model)
    return entropy_corrected_value(cost, cfg.alpha, reduced.n, reduced.k, counts.values(), cfg.correction)


def q_hat_pce(belief: BeliefState, action: int, model, cfg: EstimatorConfig,
              rng: np.random.Generator) -> float:
    _require_hypothesis_belief(belief, model)
    reduced = subsample(belief, cfg.delta_fraction, rng, cfg.max_draw_factor)
    cost, counts = partition_counts(reduced.belief, action, model)
    return conservative_value(cost, cfg.alpha, reduced.n, reduced.k, counts.values(), cfg.kappa)


def q_hat_qmdp(belief: BeliefState, action: int, model,
               state_heuristic: Optional[Callable] = None) -> float:
    """sum_s b(s) (c(s, a) + sum_s' T(s, a, s') heur(s')); never asks for observations."""
    state_heuristic = state_heuristic or model.state_heuristic
    total = 0.0
    for state, prob in belief.particles:
        row = model.transition(state, action, belief.observable)
        future = sum(p * state_heuristic(successor, belief.observable) for successor, p in row.items())
        total += prob * (model.cost(state, action, belief.observable) + future)
    return total


def decomposed_components(belief: BeliefState, action: int, model, state_heuristic: Optional[Callable],
                          cfg: EstimatorConfig, rng: np.random.Generator):
    """Independent estimates (C, P(z), N(z), D(z)) from three disjoint sample pools.

    heur(b_a^z) = N(z) / D(z) when the belief heuristic is the expectation of
    a state heuristic, so each pool only has to estimate a plain expectation.
    """
    state_heuristic = state_heuristic or model.state_heuristic
    n = belief.size
    budget = cfg.sample_budget if cfg.sample_budget is not None else 3 * math.ceil(cfg.delta_fraction * n)
    if budget < 3:
        raise InsufficientBudgetError(f"Sample budget {budget} cannot be split into three pools")
    per_pool = budget // 3

    memo: Dict[int, Tuple[float, Dict[int, Tuple[float, float]]]] = {}

    def terms(state: int):
        if state not in memo:
            per_z: Dict[int, list] = defaultdict(lambda: [0.0, 0.0])
            for successor, p in model.transition(state, action, belief.observable).items():
                h = state_heuristic(successor, belief.observable)
                for z, o in model.observation(successor, action, belief.observable).items():
                    per_z[z][0] += p * o
                    per_z[z][1] += p * o * h
            memo[state] = (model.cost(state, action, belief.observable),
                           {z: (v[0], v[1]) for z, v in per_z.items()})
        return memo[state]

    states = list(belief.support)
    probs = np.array([p for _, p in belief.particles])

    def pool():
        if per_pool >= n:
            return [(s, p) for s, p in belief.particles]
        picks = rng.choice(n, size=per_pool, p=probs)
        return [(states[i], 1.0 / per_pool) for i in picks]

    first, second, third = pool(), pool(), pool()

    cost = sum(w * terms(s)[0] for s, w in first)
    p_hat: Dict[int, float] = defaultdict(float)
    for s, w in first:
        for z, (pz, _) in terms(s)[1].items():
            p_hat[z] += w * pz
    n_hat: Dict[int, float] = defaultdict(float)
    for s, w in second:
        for z, (_, nz) in terms(s)[1].items():
            n_hat[z] += w * nz
    d_hat: Dict[int, float] = defaultdict(float)
    for s, w in third:
        for z, (pz, _) in terms(s)[1].items():
            d_hat[z] += w * pz
    return cost, dict(p_hat), dict(n_hat), dict(d_hat)


def q_hat_unbiased_decomposed(belief: BeliefState, action: int, model, state_heuristic: Optional[Callable],
                              cfg: EstimatorConfig, rng: np.random.Generator) -> float:
    cost, p_hat, n_hat, d_hat = decomposed_components(belief, action, model, state_heuristic, cfg, rng)
    total = cost
    for z, p in sorted(p_hat.items()):
        d = d_hat.get(z, 0.0)
        if d <= 0:
            continue
        total += p * n_hat.get(z, 0.0) / d
    return total


class QValueEstimator:
    """Seeded, cached estimator bound to one instrumented model.

    Values are computed once per (BeliefKey, action); every computation bumps
    the ledger's ``estimator_calls``.
    """

    kind = "estimator"

    def __init__(self, model, cfg: EstimatorConfig, heuristic: Optional[Callable] = None,
                 state_heuristic: Optional[Callable] = None):
        self.model = model
        self.cfg = cfg
        self.heuristic = heuristic
        self.state_heuristic = state_heuristic
        self.cache: Dict[Tuple[str, int], float] = {}

    def estimate(self, belief: BeliefState, action: int) -> float:
        cache_key = (belief.key, action)
        if cache_key not in self.cache:
            self.model.ledger.estimator_calls += 1
            self.cache[cache_key] = self._estimate(belief, action, rng_for(self.cfg.seed, belief.key, action))
        return self.cache[cache_key]

    def _estimate(self, belief: BeliefState, action: int, rng: np.random.Generator) -> float:
        raise NotImplementedError


class ExactEstimator(QValueEstimator):
    kind = "exact"

    def _estimate(self, belief, action, rng):
        return q_init_exact(belief, action, self.model, self.heuristic)


class SubsampleEstimator(QValueEstimator):
    kind = "subsample"

    def _estimate(self, belief, action, rng):
        return q_hat_subsample(belief, action, self.model, self.heuristic, self.cfg, rng)


class EntropyCorrectedEstimator(QValueEstimator):
    kind = "subsample-entropy-corrected"

    def _estimate(self, belief, action, rng):
        return q_hat_entropy_corrected(belief, action, self.model, self.cfg, rng)


class ConservativeEstimator(QValueEstimator):
    kind = "subsample-pce"

    def _estimate(self, belief, action, rng):
        return q_hat_pce(belief, action, self.model, self.cfg, rng)


class QmdpEstimator(QValueEstimator):
    kind = "qmdp"

    def _estimate(self, belief, action, rng):
        return q_hat_qmdp(belief, action, self.model, self.state_heuristic)


class DecomposedEstimator(QValueEstimator):
    kind = "unbiased-decomposed"

    def _estimate(self, belief, action, rng):
        return q_hat_unbiased_decomposed(belief, action, self.model, self.state_heuristic, self.cfg, rng)


ESTIMATORS = {
    cls.kind: cls
    for cls in (ExactEstimator, SubsampleEstimator, EntropyCorrectedEstimator,
                ConservativeEstimator, QmdpEstimator, DecomposedEstimator)
}


def build_estimator(cfg: EstimatorConfig, model, heuristic: Optional[Callable] = None,
                    state_heuristic: Optional[Callable] = None) -> QValueEstimator:
    try:
        cls = ESTIMATORS[cfg.kind]
    except KeyError:
        raise ConfigError(f"Unknown estimator kind: {cfg.kind}")
    return cls(model, cfg, heuristic, state_heuristic)
