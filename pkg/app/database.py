import sqlite3
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional
try:
    from .models import RUN_COLUMNS, JobStatus, RunRecord
except ImportError:
    from models import RUN_COLUMNS, JobStatus, RunRecord

BOOL_COLUMNS = ('success', 'converged')


class DatabaseManager:
    def __init__(self, db_path: str):
        self.db_path = db_path
        Path(db_path).parent.mkdir(parents=True, exist_ok=True)
        self.init_database()

    def init_database(self):
        with sqlite3.connect(self.db_path) as conn:
            conn.execute("""
                CREATE TABLE IF NOT EXISTS jobs (
                    job_id TEXT PRIMARY KEY,
                    status TEXT NOT NULL,
                    scenario_source TEXT NOT NULL,
                    total_runs INTEGER DEFAULT 0,
                    completed_runs INTEGER DEFAULT 0,
                    created_at TEXT NOT NULL,
                    updated_at TEXT NOT NULL,
                    error_message TEXT
                )
            """)

            conn.execute("""
                CREATE TABLE IF NOT EXISTS runs (
                    id INTEGER PRIMARY KEY AUTOINCREMENT,
                    job_id TEXT NOT NULL,
                    scenario_id TEXT NOT NULL,
                    "group" TEXT NOT NULL,
                    domain TEXT NOT NULL,
                    solver TEXT NOT NULL,
                    estimator TEXT,
                    seed INTEGER NOT NULL,
                    success INTEGER NOT NULL,
                    converged INTEGER NOT NULL,
                    wall_time REAL NOT NULL,
                    value REAL,
                    policy_cost REAL,
                    cost_mode TEXT,
                    transition_queries INTEGER DEFAULT 0,
                    observation_queries INTEGER DEFAULT 0,
                    validity_queries INTEGER DEFAULT 0,
                    belief_transitions_computed INTEGER DEFAULT 0,
                    estimator_calls INTEGER DEFAULT 0,
                    iterations INTEGER DEFAULT 0,
                    outer_iterations INTEGER DEFAULT 0,
                    policy_size INTEGER DEFAULT 0,
                    error TEXT,
                    created_at TEXT NOT NULL,
                    FOREIGN KEY (job_id) REFERENCES jobs (job_id)
                )
            """)

            conn.execute("CREATE INDEX IF NOT EXISTS idx_runs_job_id ON runs(job_id)")
            conn.execute("CREATE INDEX IF NOT EXISTS idx_runs_created_at ON runs(created_at)")

    def save_job(self, job: JobStatus):
        with sqlite3.connect(self.db_path) as conn:
            conn.execute("""
                INSERT OR REPLACE INTO jobs
                (job_id, status, scenario_source, total_runs, completed_runs,
                 created_at, updated_at, error_message)
                VALUES (?, ?, ?, ?, ?, ?, ?, ?)
            """, (
                job.job_id, job.status, job.scenario_source,
                job.total_runs, job.completed_runs,
                job.created_at.isoformat(), job.updated_at.isoformat(),
                job.error_message
            ))

    def get_job(self, job_id: str) -> Optional[JobStatus]:
        with sqlite3.connect(self.db_path) as conn:
            conn.row_factory = sqlite3.Row
            cursor = conn.execute("SELECT * FROM jobs WHERE job_id = ?", (job_id,))
            row = cursor.fetchone()

            if row:
                return JobStatus(
                    job_id=row['job_id'],
                    status=row['status'],
                    scenario_source=row['scenario_source'],
                    total_runs=row['total_runs'],
                    completed_runs=row['completed_runs'],
                    created_at=datetime.fromisoformat(row['created_at']),
                    updated_at=datetime.fromisoformat(row['updated_at']),
                    error_message=row['error_message']
                )
        return None

    def save_run(self, job_id: str, record: RunRecord, created_at: Optional[datetime] = None):
        data = record.to_dict()
        columns = ', '.join(f'"{c}"' for c in RUN_COLUMNS)
        placeholders = ', '.join('?' for _ in RUN_COLUMNS)
        with sqlite3.connect(self.db_path) as conn:
            conn.execute(
                f"INSERT INTO runs (job_id, {columns}, created_at) VALUES (?, {placeholders}, ?)",
                [job_id] + [data[c] for c in RUN_COLUMNS] + [(created_at or datetime.now()).isoformat()],
            )

    @staticmethod
    def _record(row: sqlite3.Row) -> RunRecord:
        values = {c: row[c] for c in RUN_COLUMNS}
        for column in BOOL_COLUMNS:
            values[column] = bool(values[column])
        return RunRecord(**values)

    def get_runs_by_job(self, job_id: str) -> List[RunRecord]:
        with sqlite3.connect(self.db_path) as conn:
            conn.row_factory = sqlite3.Row
            cursor = conn.execute("""
                SELECT * FROM runs WHERE job_id = ?
                ORDER BY id
            """, (job_id,))
            return [self._record(row) for row in cursor.fetchall()]

    def get_recent_runs(self, since: datetime, job_id: Optional[str] = None) -> List[Dict]:
        query = "SELECT * FROM runs WHERE created_at >= ?"
        params = [since.isoformat()]

        if job_id:
            query += " AND job_id = ?"
            params.append(job_id)

        query += " ORDER BY created_at DESC, id DESC"

        runs = []
        with sqlite3.connect(self.db_path) as conn:
            conn.row_factory = sqlite3.Row
            cursor = conn.execute(query, params)
            for row in cursor.fetchall():
                runs.append({
                    'job_id': row['job_id'],
                    'created_at': row['created_at'],
                    **self._record(row).to_dict(),
                })
        return runs

    def delete_job_data(self, job_id: str):
        with sqlite3.connect(self.db_path) as conn:
            conn.execute("DELETE FROM runs WHERE job_id = ?", (job_id,))
            conn.execute("DELETE FROM jobs WHERE job_id = ?", (job_id,))
