import os

from dotenv import load_dotenv

load_dotenv()


class Config:
    # Belief arithmetic
    PRUNE_THRESHOLD = float(os.getenv("PRUNE_THRESHOLD", 1e-12))
    KEY_RESOLUTION = float(os.getenv("KEY_RESOLUTION", 1e-9))
    BRANCH_THRESHOLD = float(os.getenv("BRANCH_THRESHOLD", 1e-12))
    SUM_TOLERANCE = float(os.getenv("SUM_TOLERANCE", 1e-9))

    # Emulated model cost, seconds per query
    QUERY_DELAY = float(os.getenv("QUERY_DELAY", 0.0))

    # Bench harness
    DEFAULT_TIMEOUT = float(os.getenv("DEFAULT_TIMEOUT", 300))
    MC_ROLLOUTS = int(os.getenv("MC_ROLLOUTS", 10000))
    EXACT_EVAL_LIMIT = int(os.getenv("EXACT_EVAL_LIMIT", 20000))
    MAX_WORKERS = int(os.getenv("MAX_WORKERS", 4))
    RESULTS_DIR = os.getenv("RESULTS_DIR", "runtime/results")
    FIXTURES_DIR = os.getenv(
        "FIXTURES_DIR",
        os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "fixtures"),
    )

    # Logging
    LOG_DIR = os.getenv("LOG_DIR", "runtime/logs")
    LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")

    # Results service
    REDIS_HOST = os.getenv("REDIS_HOST", "localhost")
    REDIS_PORT = int(os.getenv("REDIS_PORT", 6379))
    REDIS_DB = int(os.getenv("REDIS_DB", 0))
    DATABASE_PATH = os.getenv("DATABASE_PATH", "runtime/db/runs.db")
    MAX_CONCURRENT_JOBS = int(os.getenv("MAX_CONCURRENT_JOBS", 2))
    CACHE_TTL = int(os.getenv("CACHE_TTL", 3600))
    UPLOADS_DIR = os.getenv("UPLOADS_DIR", "runtime/uploads")


config = Config()
