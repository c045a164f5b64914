import json
import time
import logging
import platform
from concurrent.futures import ThreadPoolExecutor, as_completed
from datetime import datetime
from pathlib import Path
from typing import Callable, List, Optional, Tuple

import numpy as np
import pandas as pd

try:
    from .config import config
    from .exceptions import PlannerError
    from .model import InstrumentedModel
    from .models import RUN_COLUMNS, RunRecord, ScenarioConfig
    from .policy import evaluate_policy
    from .scenario import build_domain, expand_matrix, run_solver
except ImportError:
    from config import config
    from exceptions import PlannerError
    from model import InstrumentedModel
    from models import RUN_COLUMNS, RunRecord, ScenarioConfig
    from policy import evaluate_policy
    from scenario import build_domain, expand_matrix, run_solver

logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = [
    'group', 'scenario_id', 'solver', 'estimator', 'runs', 'successes', 'success_rate',
    'included', 'common_runs', 'mean_wall_time', 'mean_belief_transitions',
    'mean_transition_queries', 'mean_observation_queries', 'mean_validity_queries',
    'mean_value', 'mean_policy_cost',
]
SUCCESS_FLOOR = 0.2


def _estimator_label(scenario: ScenarioConfig) -> str:
    inner = scenario.solver[3:] if scenario.solver.startswith("fh-") else scenario.solver
    return scenario.estimator.kind if inner.startswith("lazy-") else ""


def run_scenario(scenario: ScenarioConfig, seed: int) -> RunRecord:
    """One (scenario, seed) cell. Any error becomes an unsuccessful record."""
    record = RunRecord(
        scenario_id=scenario.scenario_id,
        group=scenario.group,
        domain=scenario.domain,
        solver=scenario.solver,
        estimator=_estimator_label(scenario),
        seed=seed,
        success=False,
        converged=False,
        wall_time=0.0,
    )
    start = time.monotonic()
    try:
        result, domain = run_solver(scenario, seed)
    except PlannerError as e:
        record.wall_time = time.monotonic() - start
        record.error = f"{type(e).__name__}: {str(e)}"
        logger.error(f"Run {scenario.scenario_id} seed {seed} failed: {record.error}")
        return record
    except Exception as e:
        record.wall_time = time.monotonic() - start
        record.error = f"{type(e).__name__}: {str(e)}"
        logger.exception(f"Run {scenario.scenario_id} seed {seed} crashed: {record.error}")
        return record

    ledger = result.ledger
    record.wall_time = result.wall_time
    record.converged = result.converged
    record.value = result.value
    record.transition_queries = ledger.transition_queries
    record.observation_queries = ledger.observation_queries
    record.validity_queries = ledger.validity_queries
    record.belief_transitions_computed = ledger.belief_transitions_computed
    record.estimator_calls = ledger.estimator_calls
    record.iterations = result.iterations
    record.outer_iterations = result.outer_iterations
    record.policy_size = len(result.policy) if result.policy is not None else 0

    if result.converged and result.policy is not None:
        # Policy evaluation queries a separate model so the run's counters stay as solved.
        evaluator = InstrumentedModel(domain, query_delay=0.0)
        try:
            if len(result.policy) <= config.EXACT_EVAL_LIMIT:
                record.policy_cost = evaluate_policy(result.policy, evaluator, mode="exact")
                record.cost_mode = "exact"
            else:
                record.policy_cost = evaluate_policy(result.policy, evaluator, mode="monte-carlo",
                                                     rollouts=config.MC_ROLLOUTS, seed=seed)
                record.cost_mode = "monte-carlo"
            record.success = True
        except Exception as e:
            record.error = f"{type(e).__name__}: {str(e)}"
            logger.error(f"Policy evaluation for {scenario.scenario_id} seed {seed} failed: {record.error}")
    elif not result.converged:
        record.error = "did not converge within limits"
    return record


def run_matrix(scenarios: List[ScenarioConfig], workers: int = 1,
               on_record: Optional[Callable[[RunRecord], None]] = None) -> Tuple[List[RunRecord], pd.DataFrame]:
    """Run every (scenario, seed) cell; records come back sorted by scenario then seed."""
    cells = expand_matrix(scenarios)
    for scenario in scenarios:
        build_domain(scenario)
    logger.info(f"Running {len(cells)} runs over {len(scenarios)} scenarios with {workers} worker(s)")

    records: List[RunRecord] = []
    with ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
        futures = {executor.submit(run_scenario, scenario, seed): (scenario, seed) for scenario, seed in cells}
        for future in as_completed(futures):
            record = future.result()
            records.append(record)
            if on_record is not None:
                on_record(record)

    order = {scenario.scenario_id: i for i, scenario in enumerate(scenarios)}
    records.sort(key=lambda r: (order[r.scenario_id], r.seed))
    return records, aggregate(records)


def records_frame(records: List[RunRecord]) -> pd.DataFrame:
    return pd.DataFrame([r.to_dict() for r in records], columns=RUN_COLUMNS)


def aggregate(records: List[RunRecord]) -> pd.DataFrame:
    """Per-scenario summary following the 20% rule.

    Within a group, scenarios solving fewer than 20% of their seeds are
    excluded from the time and cost columns; the others are averaged over
    the seeds every included scenario solved.
    """
    runs = records_frame(records)
    rows = []
    for group, frame in runs.groupby('group', sort=False):
        rates = frame.groupby('scenario_id', sort=False)['success'].mean()
        included = [sid for sid, rate in rates.items() if rate >= SUCCESS_FLOOR]
        common = None
        for sid in included:
            solved = set(frame[(frame.scenario_id == sid) & frame.success].seed)
            common = solved if common is None else common & solved
        common = common or set()

        for sid, sub in frame.groupby('scenario_id', sort=False):
            row = {
                'group': group,
                'scenario_id': sid,
                'solver': sub.solver.iloc[0],
                'estimator': sub.estimator.iloc[0],
                'runs': len(sub),
                'successes': int(sub.success.sum()),
                'success_rate': float(sub.success.mean()),
                'included': sid in included,
                'common_runs': len(common) if sid in included else 0,
            }
            kept = sub[sub.seed.isin(common)] if sid in included else sub.iloc[0:0]
            for column, source in (
                ('mean_wall_time', 'wall_time'),
                ('mean_belief_transitions', 'belief_transitions_computed'),
                ('mean_transition_queries', 'transition_queries'),
                ('mean_observation_queries', 'observation_queries'),
                ('mean_validity_queries', 'validity_queries'),
                ('mean_value', 'value'),
                ('mean_policy_cost', 'policy_cost'),
            ):
                row[column] = float(pd.to_numeric(kept[source]).mean()) if len(kept) else np.nan
            rows.append(row)
    return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)


def write_outputs(records: List[RunRecord], summary: pd.DataFrame, scenarios: List[ScenarioConfig],
                  out_dir) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records_frame(records).to_csv(out_dir / "runs.csv", index=False, float_format="%.12g")
    summary.to_csv(out_dir / "summary.csv", index=False, float_format="%.12g")

    meta = {
        'created_at': datetime.now().isoformat(),
        'python': platform.python_version(),
        'numpy': np.__version__,
        'pandas': pd.__version__,
        'prune_threshold': config.PRUNE_THRESHOLD,
        'key_resolution': config.KEY_RESOLUTION,
        'branch_threshold': config.BRANCH_THRESHOLD,
        'mc_rollouts': config.MC_ROLLOUTS,
        'exact_eval_limit': config.EXACT_EVAL_LIMIT,
        'scenarios': [scenario.model_dump() for scenario in scenarios],
    }
    with open(out_dir / "meta.json", "w") as f:
        json.dump(meta, f, indent=2, default=str)
    logger.info(f"Wrote runs.csv, summary.csv and meta.json to {out_dir}")
    return out_dir
