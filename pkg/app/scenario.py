"""Scenario files: sectioned key/value text expanded into a run matrix.

Each section is one scenario group::

    [line-world]
    domain = line-world
    solver = rtdp-bel, lazy-rtdp-bel, lao-star, lazy-lao-star
    estimator = qmdp
    seeds = 0-2
    domain.size = 5
    estimator.delta_fraction = 0.15
    solver.max_trials = 5000

``solver`` and ``estimator`` take comma lists; vanilla solvers ignore the
estimator and appear once per group.
"""
import json
import logging
import threading
import configparser
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from pydantic import ValidationError

try:
    from .config import config
    from .contact import contact_toy_model, planted_partition_world, row_world
    from .estimators import build_estimator
    from .exceptions import ConfigError, PlannerError
    from .full_horizon import fh_lazy
    from .grid import GridMap
    from .line_world import corridor, line_world
    from .model import GoalPomdpModel, InstrumentedModel
    from .models import EstimatorConfig, ScenarioConfig
    from .navigation import indoor_start_uncertainty_model, indoor_stochastic_model, outdoor_model
    from .solvers import SOLVERS, SolverResult
except ImportError:
    from config import config
    from contact import contact_toy_model, planted_partition_world, row_world
    from estimators import build_estimator
    from exceptions import ConfigError, PlannerError
    from full_horizon import fh_lazy
    from grid import GridMap
    from line_world import corridor, line_world
    from model import GoalPomdpModel, InstrumentedModel
    from models import EstimatorConfig, ScenarioConfig
    from navigation import indoor_start_uncertainty_model, indoor_stochastic_model, outdoor_model
    from solvers import SOLVERS, SolverResult

logger = logging.getLogger(__name__)

DOMAINS = ("line-world", "corridor", "indoor-stochastic", "indoor-start", "outdoor", "contact")
MAP_DOMAINS = ("indoor-stochastic", "indoor-start", "outdoor")
SCALAR_KEYS = {
    "heuristic": str,
    "timeout": float,
    "epsilon_residual": float,
    "epsilon_inflate": float,
    "query_delay": float,
    "output": str,
}


def parse_seeds(text: str) -> List[int]:
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if "-" in part[1:]:
                low, high = part.split("-", 1)
                seeds.extend(range(int(low), int(high) + 1))
            else:
                seeds.append(int(part))
        except ValueError:
            raise ConfigError(f"Bad seed entry '{part}'")
    return seeds


def _parse_value(text: str) -> Any:
    text = text.strip()
    if "," in text:
        return [_parse_value(part) for part in text.split(",") if part.strip()]
    lowered = text.lower()
    if lowered in ("true", "yes", "on"):
        return True
    if lowered in ("false", "no", "off"):
        return False
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def _split_list(text: str) -> List[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def _resolve_map(path_text: str, base_dir: Path) -> str:
    candidates = [Path(path_text), base_dir / path_text, Path(config.FIXTURES_DIR) / "maps" / path_text]
    for candidate in candidates:
        if candidate.exists():
            return str(candidate.resolve())
    raise ConfigError(f"Map file not found: {path_text}")


def _check_solver(solver_id: str):
    inner = solver_id[3:] if solver_id.startswith("fh-") else solver_id
    if inner not in SOLVERS:
        raise ConfigError(f"Unknown solver '{solver_id}'")


def _expand_section(name: str, section, base_dir: Path) -> List[ScenarioConfig]:
    domain = section.get("domain")
    if domain not in DOMAINS:
        raise ConfigError(f"[{name}] unknown or missing domain '{domain}'")

    map_path = None
    if domain in MAP_DOMAINS:
        if "map" not in section:
            raise ConfigError(f"[{name}] domain {domain} needs a map")
        map_path = _resolve_map(section["map"], base_dir)

    seeds = parse_seeds(section.get("seeds", ""))
    if not seeds:
        raise ConfigError(f"[{name}] seeds must not be empty")

    solvers = _split_list(section.get("solver", ""))
    if not solvers:
        raise ConfigError(f"[{name}] no solver given")
    for solver_id in solvers:
        _check_solver(solver_id)
    estimators = _split_list(section.get("estimator", "qmdp"))

    domain_params, estimator_params, solver_options, scalars = {}, {}, {}, {}
    for key, value in section.items():
        if key.startswith("domain."):
            domain_params[key[len("domain."):]] = _parse_value(value)
        elif key.startswith("estimator."):
            estimator_params[key[len("estimator."):]] = _parse_value(value)
        elif key.startswith("solver."):
            solver_options[key[len("solver."):]] = _parse_value(value)
        elif key in SCALAR_KEYS:
            try:
                scalars[key] = SCALAR_KEYS[key](value)
            except ValueError:
                raise ConfigError(f"[{name}] bad value for {key}: {value}")

    scenarios = []
    for solver_id in solvers:
        lazy = SOLVERS[solver_id[3:] if solver_id.startswith("fh-") else solver_id].lazy
        for kind in (estimators if lazy else estimators[:1]):
            scenario_id = f"{name}/{solver_id}" + (f"/{kind}" if lazy else "")
            try:
                scenarios.append(ScenarioConfig(
                    scenario_id=scenario_id,
                    group=name,
                    domain=domain,
                    map_path=map_path,
                    domain_params=domain_params,
                    solver=solver_id,
                    estimator=EstimatorConfig(kind=kind, **estimator_params),
                    heuristic=scalars.get("heuristic", "dist"),
                    seeds=seeds,
                    timeout=scalars.get("timeout", config.DEFAULT_TIMEOUT),
                    epsilon_residual=scalars.get("epsilon_residual", 1e-9),
                    epsilon_inflate=scalars.get("epsilon_inflate", 1.0),
                    query_delay=scalars.get("query_delay", 0.0),
                    output_path=scalars.get("output"),
                    solver_options=solver_options,
                ))
                scenarios[-1].solver_config(seeds[0])
            except ValidationError as e:
                raise ConfigError(f"[{name}] invalid scenario: {e}")
    return scenarios


def parse_scenarios(text: str, base_dir: Optional[Path] = None) -> List[ScenarioConfig]:
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"Cannot parse scenario file: {str(e)}")
    base_dir = base_dir or Path.cwd()
    scenarios = []
    for name in parser.sections():
        scenarios.extend(_expand_section(name, parser[name], base_dir))
    if not scenarios:
        raise ConfigError("Scenario file defines no scenarios")
    return scenarios


def load_scenarios(path) -> List[ScenarioConfig]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Scenario file not found: {path}")
    return parse_scenarios(path.read_text(), path.parent)


def expand_matrix(scenarios: List[ScenarioConfig]) -> List[Tuple[ScenarioConfig, int]]:
    return [(scenario, seed) for scenario in scenarios for seed in scenario.seeds]


_DOMAIN_CACHE: Dict[str, GoalPomdpModel] = {}
_DOMAIN_LOCK = threading.Lock()


def build_domain(scenario: ScenarioConfig) -> GoalPomdpModel:
    """Domain model for a scenario; models are immutable and shared between runs."""
    cache_key = json.dumps(
        [scenario.domain, scenario.map_path, scenario.domain_params, scenario.heuristic], sort_keys=True
    )
    with _DOMAIN_LOCK:
        if cache_key not in _DOMAIN_CACHE:
            _DOMAIN_CACHE[cache_key] = _make_domain(scenario)
        return _DOMAIN_CACHE[cache_key]


def _make_domain(scenario: ScenarioConfig) -> GoalPomdpModel:
    params = dict(scenario.domain_params)
    try:
        if scenario.domain == "line-world":
            start = params.get("start", [0, 1, 2])
            return line_world(
                size=params.get("size", 5),
                goal=params.get("goal", 4),
                start=start if isinstance(start, list) else [start],
                actions=params.get("actions", ["left", "right"]),
            )
        if scenario.domain == "corridor":
            return corridor(params.get("length", 2))
        if scenario.domain == "contact":
            preset = params.get("preset", "planted-partition")
            alpha = params.get("alpha", 0.1)
            if preset == "planted-partition":
                return contact_toy_model(planted_partition_world(alpha))
            if preset == "row":
                return contact_toy_model(row_world(alpha))
            raise ConfigError(f"Unknown contact preset '{preset}'")

        grid = GridMap.load(scenario.map_path)
        if scenario.domain == "indoor-stochastic":
            return indoor_stochastic_model(grid, heuristic=scenario.heuristic)
        if scenario.domain == "indoor-start":
            return indoor_start_uncertainty_model(grid, mode=params.get("mode", "goal-directed"),
                                                  heuristic=scenario.heuristic, alpha=params.get("alpha", 0.1))
        return outdoor_model(grid, mode=params.get("mode", "goal-directed"),
                             heuristic=scenario.heuristic, alpha=params.get("alpha", 0.1))
    except PlannerError as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"Cannot build domain for {scenario.scenario_id}: {str(e)}")


def run_solver(scenario: ScenarioConfig, seed: int,
               domain: Optional[GoalPomdpModel] = None) -> Tuple[SolverResult, GoalPomdpModel]:
    """Solve one (scenario, seed) cell on a fresh instrumented model.

    Validity-oracle domains solved without full-horizon laziness validate
    every evaluation eagerly, so their plans only use valid actions.
    """
    domain = domain or build_domain(scenario)
    full_horizon = scenario.solver.startswith("fh-")
    solver_cls = SOLVERS[scenario.solver[3:] if full_horizon else scenario.solver]
    model = InstrumentedModel(
        domain,
        query_delay=scenario.query_delay,
        eager_validation=domain.has_validity_oracle and not full_horizon,
    )
    cfg = scenario.solver_config(seed)
    estimator = build_estimator(cfg.estimator, model) if solver_cls.lazy else None
    if full_horizon:
        return fh_lazy(solver_cls, model, cfg, estimator), domain
    return solver_cls(model, cfg, estimator).solve(), domain
