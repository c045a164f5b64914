from dataclasses import dataclass, asdict
from datetime import datetime
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field, field_validator

try:
    from .config import config
except ImportError:
    from config import config

ESTIMATOR_KINDS = (
    "exact",
    "subsample",
    "subsample-entropy-corrected",
    "subsample-pce",
    "qmdp",
    "unbiased-decomposed",
)


class EstimatorConfig(BaseModel):
    kind: str = "qmdp"
    delta_fraction: float = Field(0.15, gt=0.0, le=1.0)
    alpha: float = Field(0.1, gt=0.0)
    kappa: float = Field(1.22, ge=0.0)
    seed: int = 0
    sample_budget: Optional[int] = None
    empirical_weights: bool = True
    correction: str = "squared-ratio"  # squared-ratio or u-statistic
    max_draw_factor: int = Field(50, ge=1)

    @field_validator("kind")
    @classmethod
    def known_kind(cls, value):
        if value not in ESTIMATOR_KINDS:
            raise ValueError(f"unknown estimator kind '{value}'")
        return value

    @field_validator("correction")
    @classmethod
    def known_correction(cls, value):
        if value not in ("squared-ratio", "u-statistic"):
            raise ValueError(f"unknown correction '{value}'")
        return value


class SolverConfig(BaseModel):
    epsilon_residual: float = Field(1e-9, gt=0.0)
    epsilon_inflate: float = Field(1.0, ge=1.0)
    max_trials: int = Field(100000, ge=1)
    max_expansions: int = Field(200000, ge=1)
    max_sweeps: int = Field(10000, ge=1)
    max_trial_depth: Optional[int] = None
    convergence_window: int = Field(10, ge=1)
    timeout: float = Field(config.DEFAULT_TIMEOUT, gt=0.0)
    seed: int = 0
    estimator: EstimatorConfig = Field(default_factory=EstimatorConfig)
    fh_max_iterations: int = Field(50, ge=1)
    fh_warm_start: bool = True


class ScenarioConfig(BaseModel):
    scenario_id: str
    group: str
    domain: str
    map_path: Optional[str] = None
    domain_params: Dict[str, Any] = Field(default_factory=dict)
    solver: str
    estimator: EstimatorConfig = Field(default_factory=EstimatorConfig)
    heuristic: str = "dist"
    seeds: List[int]
    timeout: float = Field(config.DEFAULT_TIMEOUT, gt=0.0)
    epsilon_residual: float = Field(1e-9, gt=0.0)
    epsilon_inflate: float = Field(1.0, ge=1.0)
    query_delay: float = Field(0.0, ge=0.0)
    output_path: Optional[str] = None
    solver_options: Dict[str, Any] = Field(default_factory=dict)

    @field_validator("seeds")
    @classmethod
    def seeds_present(cls, value):
        if not value:
            raise ValueError("seeds must not be empty")
        return value

    def solver_config(self, seed: int) -> SolverConfig:
        return SolverConfig(
            epsilon_residual=self.epsilon_residual,
            epsilon_inflate=self.epsilon_inflate,
            timeout=self.timeout,
            seed=seed,
            estimator=self.estimator.model_copy(update={'seed': seed}),
            **self.solver_options,
        )


RUN_COLUMNS = [
    'scenario_id', 'group', 'domain', 'solver', 'estimator', 'seed',
    'success', 'converged', 'wall_time', 'value', 'policy_cost', 'cost_mode',
    'transition_queries', 'observation_queries', 'validity_queries',
    'belief_transitions_computed', 'estimator_calls',
    'iterations', 'outer_iterations', 'policy_size', 'error',
]


@dataclass
class RunRecord:
    scenario_id: str
    group: str
    domain: str
    solver: str
    estimator: str
    seed: int
    success: bool
    converged: bool
    wall_time: float
    value: Optional[float] = None
    policy_cost: Optional[float] = None
    cost_mode: Optional[str] = None
    transition_queries: int = 0
    observation_queries: int = 0
    validity_queries: int = 0
    belief_transitions_computed: int = 0
    estimator_calls: int = 0
    iterations: int = 0
    outer_iterations: int = 0
    policy_size: int = 0
    error: Optional[str] = None

    def to_dict(self):
        data = asdict(self)
        return {column: data[column] for column in RUN_COLUMNS}


@dataclass
class JobStatus:
    job_id: str
    status: str  # pending, running, completed, failed, cancelled
    scenario_source: str
    total_runs: int
    completed_runs: int
    created_at: datetime
    updated_at: datetime
    error_message: Optional[str] = None

    def to_dict(self):
        return {
            **asdict(self),
            'created_at': self.created_at.isoformat(),
            'updated_at': self.updated_at.isoformat(),
        }


# Pydantic models for API
class ScenarioJobResponse(BaseModel):
    job_id: str
    status: str
    total_runs: int
    message: str
