import os
import logging
from datetime import datetime
from pathlib import Path

from fastapi import FastAPI, HTTPException, Query, UploadFile, File

try:
    from .config import config
    from .cache import CacheManager
    from .database import DatabaseManager
    from .exceptions import PlannerError
    from .job_manager import JobManager
    from .models import ScenarioJobResponse
except ImportError:
    from config import config
    from cache import CacheManager
    from database import DatabaseManager
    from exceptions import PlannerError
    from job_manager import JobManager
    from models import ScenarioJobResponse

logger = logging.getLogger(__name__)

app = FastAPI(
    title="Belief-Space Planning Bench",
    version="1.0.0",
    description="Submit scenario matrices for the lazy belief-space planners and browse their runs",
    docs_url="/docs",
    redoc_url="/redoc"
)

db_manager = DatabaseManager(config.DATABASE_PATH)
cache_manager = CacheManager()
job_manager = JobManager(db_manager, cache_manager)

uploads_dir = Path(config.UPLOADS_DIR)
uploads_dir.mkdir(parents=True, exist_ok=True)


@app.post("/scenario-job", response_model=ScenarioJobResponse, tags=["Jobs"])
async def submit_scenario_job(
    scenario_path: str = None,
    workers: int = 1,
    file: UploadFile = File(None)
):
    """
    Submit a scenario file for a matrix run.

    - **scenario_path**: Path to a scenario file on the server (if no file uploaded)
    - **workers**: Number of runs executed in parallel
    - **file**: Scenario file to upload (optional)

    Returns the job ID and the number of (scenario, seed) runs.
    """
    if workers < 1:
        raise HTTPException(status_code=400, detail="workers must be at least 1")
    try:
        if file:
            if not file.filename.lower().endswith(('.ini', '.cfg', '.txt')):
                raise HTTPException(status_code=400, detail="Invalid file type. Please upload a scenario file.")

            file_path = uploads_dir / os.path.basename(file.filename)
            with open(file_path, "wb") as f:
                f.write(await file.read())

            source = str(file_path)
            logger.info(f"Scenario file uploaded: {file.filename} -> {file_path}")
        elif scenario_path:
            source = scenario_path
        else:
            raise HTTPException(status_code=400, detail="Either scenario_path or file must be provided")

        job = job_manager.submit_job(source, workers)
        return ScenarioJobResponse(
            job_id=job.job_id,
            status=job.status,
            total_runs=job.total_runs,
            message="Job submitted successfully"
        )
    except HTTPException:
        raise
    except PlannerError as e:
        raise HTTPException(status_code=400, detail=str(e))
    except Exception as e:
        logger.error(f"Error submitting job: {str(e)}")
        raise HTTPException(status_code=500, detail=str(e))


@app.get("/job-status/{job_id}")
async def get_job_status(job_id: str):
    """Get status and progress of a scenario job"""
    job = job_manager.get_job_status(job_id)
    if not job:
        raise HTTPException(status_code=404, detail="Job not found")
    return job.to_dict()


@app.get("/runs/recent")
async def get_recent_runs(
    since_minutes: int = Query(60, description="Minutes back to look for runs"),
    job_id: str = Query(None, description="Filter by specific job ID")
):
    """Most recent run records across jobs"""
    try:
        runs = job_manager.get_recent_runs(since_minutes, job_id)
        return {
            "runs": runs,
            "total_count": len(runs),
            "since_minutes": since_minutes,
            "job_id": job_id,
        }
    except Exception as e:
        logger.error(f"Error getting recent runs: {str(e)}")
        raise HTTPException(status_code=500, detail=str(e))


@app.get("/runs/{job_id}")
async def get_job_runs(job_id: str):
    """Run records and, once finished, the aggregate table of a job"""
    job = job_manager.get_job_status(job_id)
    if not job:
        raise HTTPException(status_code=404, detail="Job not found")

    runs = db_manager.get_runs_by_job(job_id)
    return {
        "job_id": job_id,
        "status": job.status,
        "runs": [run.to_dict() for run in runs],
        "summary": job_manager.get_job_summary(job_id),
        "total_count": len(runs)
    }


@app.delete("/job/{job_id}")
async def cancel_job(job_id: str):
    """Cancel a job and delete its runs and result files"""
    success = job_manager.cancel_job(job_id)
    if not success:
        raise HTTPException(status_code=404, detail="Job not found or could not be cancelled")

    return {"message": f"Job {job_id} cancelled and cleaned up successfully"}


@app.get("/health")
async def health_check():
    """Health check endpoint"""
    return {
        "status": "healthy",
        "timestamp": datetime.now().isoformat(),
        "redis_available": cache_manager.use_redis,
        "active_jobs": len(job_manager.active_jobs)
    }
