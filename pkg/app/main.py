"""Command-line entry point.

    python app/main.py run fixtures/scenarios/smoke.ini --out runtime/results/smoke --workers 4
    python app/main.py verify oracle-equivalence
    python app/main.py enumerate fixtures/scenarios/indoor.ini
    python app/main.py serve --port 8000

Exit codes: 0 success, 1 failed runs or checks, 2 configuration error.
"""
import os
import sys
import json
import logging
import argparse
from datetime import datetime
from pathlib import Path

import uvicorn

try:
    from .acceptance import verify_acceptance
    from .bench import run_matrix, write_outputs
    from .config import config
    from .exceptions import ConfigError, UnknownSuiteError
    from .scenario import expand_matrix, load_scenarios
except ImportError:
    from acceptance import verify_acceptance
    from bench import run_matrix, write_outputs
    from config import config
    from exceptions import ConfigError, UnknownSuiteError
    from scenario import expand_matrix, load_scenarios

EXIT_OK = 0
EXIT_FAILURES = 1
EXIT_CONFIG = 2

logger = logging.getLogger(__name__)


def setup_logging(level: str = None):
    os.makedirs(config.LOG_DIR, exist_ok=True)
    logging.basicConfig(
        level=getattr(logging, (level or config.LOG_LEVEL).upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(os.path.join(config.LOG_DIR, 'app.log')),
            logging.StreamHandler()
        ]
    )


def cmd_run(args) -> int:
    scenarios = load_scenarios(args.config)
    out_dir = args.out or scenarios[0].output_path or os.path.join(
        config.RESULTS_DIR, f"{Path(args.config).stem}-{datetime.now():%Y%m%d-%H%M%S}"
    )
    records, summary = run_matrix(scenarios, workers=args.workers)
    write_outputs(records, summary, scenarios, out_dir)

    failed = [r for r in records if not r.success]
    print(summary.to_string(index=False))
    print(f"\n{len(records) - len(failed)}/{len(records)} runs succeeded; results in {out_dir}")
    return EXIT_FAILURES if failed else EXIT_OK


def cmd_verify(args) -> int:
    report = verify_acceptance(args.suite)
    payload = json.dumps(report.to_dict(), indent=2)
    if args.report:
        Path(args.report).parent.mkdir(parents=True, exist_ok=True)
        Path(args.report).write_text(payload)
    print(payload)
    return EXIT_OK if report.passed else EXIT_FAILURES


def cmd_enumerate(args) -> int:
    scenarios = load_scenarios(args.config)
    for scenario, seed in expand_matrix(scenarios):
        estimator = scenario.estimator.kind if "lazy" in scenario.solver else "-"
        print(f"{scenario.scenario_id}\t{scenario.domain}\t{scenario.solver}\t{estimator}\tseed={seed}"
              f"\ttimeout={scenario.timeout:g}")
    return EXIT_OK


def cmd_serve(args) -> int:
    try:
        from .api import app
    except ImportError:
        from api import app

    uvicorn.run(app, host=args.host, port=args.port, workers=1)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Lazy belief-space planning bench")
    parser.add_argument("--log-level", default=None, help="Overrides LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run a scenario matrix and write runs.csv / summary.csv / meta.json")
    run.add_argument("config", help="Scenario file")
    run.add_argument("--out", default=None, help="Output directory")
    run.add_argument("--workers", type=int, default=1, help=f"Parallel runs (up to {config.MAX_WORKERS} is sensible)")
    run.set_defaults(func=cmd_run)

    verify = sub.add_parser("verify", help="Run an acceptance suite")
    verify.add_argument("suite")
    verify.add_argument("--report", default=None, help="Also write the JSON report to this file")
    verify.set_defaults(func=cmd_verify)

    enumerate_ = sub.add_parser("enumerate", help="Print the expanded run matrix without running it")
    enumerate_.add_argument("config", help="Scenario file")
    enumerate_.set_defaults(func=cmd_enumerate)

    serve = sub.add_parser("serve", help="Start the results service")
    serve.add_argument("--host", default="0.0.0.0")
    serve.add_argument("--port", type=int, default=8000)
    serve.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    if getattr(args, "workers", 1) < 1:
        logger.error("--workers must be at least 1")
        return EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigError, UnknownSuiteError) as e:
        logger.error(str(e))
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
