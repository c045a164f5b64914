import uuid
import logging
import shutil
import threading
from datetime import datetime, timedelta
from pathlib import Path
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional

import pandas as pd

try:
    from .config import config
    from .bench import run_matrix, write_outputs
    from .models import JobStatus, RunRecord
    from .scenario import expand_matrix, load_scenarios
except ImportError:
    from config import config
    from bench import run_matrix, write_outputs
    from models import JobStatus, RunRecord
    from scenario import expand_matrix, load_scenarios

logger = logging.getLogger(__name__)


def summary_records(summary: pd.DataFrame) -> List[Dict]:
    """JSON-safe rows of an aggregate table (NaN becomes None)."""
    return summary.astype(object).where(pd.notna(summary), None).to_dict(orient="records")


class JobManager:
    """Runs submitted scenario files on a thread pool and records their runs.

    Scenario files are parsed at submission, so configuration errors surface
    to the caller before anything is queued.
    """

    def __init__(self, db_manager, cache_manager):
        self.db_manager = db_manager
        self.cache_manager = cache_manager
        self.executor = ThreadPoolExecutor(max_workers=config.MAX_CONCURRENT_JOBS)
        self.active_jobs = {}
        self.cancelled = set()
        self._lock = threading.Lock()

    def submit_job(self, scenario_source: str, workers: int = 1) -> JobStatus:
        scenarios = load_scenarios(scenario_source)
        job_id = str(uuid.uuid4())

        job = JobStatus(
            job_id=job_id,
            status="pending",
            scenario_source=scenario_source,
            total_runs=len(expand_matrix(scenarios)),
            completed_runs=0,
            created_at=datetime.now(),
            updated_at=datetime.now()
        )
        self.db_manager.save_job(job)

        future = self.executor.submit(self._run_job, job, scenarios, workers)
        with self._lock:
            self.active_jobs[job_id] = future

        logger.info(f"Submitted job {job_id} with {job.total_runs} runs from {scenario_source}")
        return job

    def _run_job(self, job: JobStatus, scenarios, workers: int):
        job.status = "running"
        job.updated_at = datetime.now()
        self.db_manager.save_job(job)

        def on_record(record: RunRecord):
            if job.job_id in self.cancelled:
                return
            self.db_manager.save_run(job.job_id, record)
            job.completed_runs += 1
            job.updated_at = datetime.now()
            self.db_manager.save_job(job)

        try:
            records, summary = run_matrix(scenarios, workers=workers, on_record=on_record)
            if job.job_id in self.cancelled:
                logger.info(f"Job {job.job_id} was cancelled; discarding {len(records)} runs")
                return
            write_outputs(records, summary, scenarios, self.results_path(job.job_id))
            self.cache_manager.set_job_summary(job.job_id, summary_records(summary))

            job.status = "completed"
            failed = sum(1 for r in records if not r.success)
            if failed:
                job.error_message = f"{failed} of {len(records)} runs did not succeed"
            logger.info(f"Job {job.job_id} completed: {len(records) - failed}/{len(records)} successful runs")
        except Exception as e:
            job.status = "failed"
            job.error_message = str(e)
            logger.error(f"Job {job.job_id} failed: {str(e)}")
        finally:
            job.updated_at = datetime.now()
            if self.db_manager.get_job(job.job_id) is not None:
                self.db_manager.save_job(job)
            with self._lock:
                self.active_jobs.pop(job.job_id, None)

    @staticmethod
    def results_path(job_id: str) -> Path:
        return Path(config.RESULTS_DIR) / job_id

    def get_job_status(self, job_id: str) -> Optional[JobStatus]:
        return self.db_manager.get_job(job_id)

    def get_job_summary(self, job_id: str) -> Optional[List[Dict]]:
        cached = self.cache_manager.get_job_summary(job_id)
        if cached is not None:
            return cached
        summary_file = self.results_path(job_id) / "summary.csv"
        if not summary_file.exists():
            return None
        summary = summary_records(pd.read_csv(summary_file))
        self.cache_manager.set_job_summary(job_id, summary)
        return summary

    def get_recent_runs(self, since_minutes: int = 60, job_id: Optional[str] = None) -> List[Dict]:
        cached = self.cache_manager.get_recent_runs_cached(since_minutes, job_id)
        if cached:
            logger.info(f"Cache hit for recent runs (job_id: {job_id})")
            return cached

        since_time = datetime.now() - timedelta(minutes=since_minutes)
        runs = self.db_manager.get_recent_runs(since_time, job_id)
        if runs:
            self.cache_manager.set_recent_runs(runs, since_minutes, job_id)
        return runs

    def cancel_job(self, job_id: str) -> bool:
        if self.db_manager.get_job(job_id) is None:
            return False
        try:
            with self._lock:
                future = self.active_jobs.pop(job_id, None)
                self.cancelled.add(job_id)
            if future is not None:
                # A matrix that already started keeps running; its runs are discarded when it ends.
                future.cancel()

            results = self.results_path(job_id)
            if results.exists():
                shutil.rmtree(results)

            self.db_manager.delete_job_data(job_id)
            self.cache_manager.forget_job(job_id)

            logger.info(f"Cancelled and cleaned up job {job_id}")
            return True

        except Exception as e:
            logger.error(f"Error cancelling job {job_id}: {str(e)}")
            return False
