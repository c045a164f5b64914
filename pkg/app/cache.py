import json
import time
import logging
from typing import Any, Dict, Iterator, List, Optional

import redis

try:
    from .config import config
except ImportError:
    from config import config

logger = logging.getLogger(__name__)

NAMESPACE = "bench"
RECENT_RUNS_TTL = 60


def cache_key(kind: str, *parts: Any) -> str:
    return ":".join([NAMESPACE, kind, *(str(p) for p in parts)])


class CacheManager:
    """Job summaries and recent-run listings, in Redis when it answers and in
    process memory otherwise. Values are stored as JSON either way."""

    def __init__(self):
        self.memory_cache: Dict[str, Dict[str, Any]] = {}
        try:
            self.redis_client = redis.Redis(
                host=config.REDIS_HOST,
                port=config.REDIS_PORT,
                db=config.REDIS_DB,
                decode_responses=True
            )
            self.redis_client.ping()
            self.use_redis = True
            logger.info(f"Connected to Redis cache at {config.REDIS_HOST}:{config.REDIS_PORT}")
        except Exception as e:
            self.redis_client = None
            self.use_redis = False
            logger.warning(f"Redis unavailable ({e}), using in-memory cache")

    def set(self, key: str, value: Any, ttl: Optional[int] = None):
        ttl = ttl or config.CACHE_TTL
        payload = json.dumps(value)
        if self.use_redis:
            self.redis_client.setex(key, ttl, payload)
        else:
            self.memory_cache[key] = {'payload': payload, 'expires': time.time() + ttl}

    def get(self, key: str) -> Optional[Any]:
        if self.use_redis:
            payload = self.redis_client.get(key)
        else:
            entry = self.memory_cache.get(key)
            payload = None
            if entry is not None:
                if time.time() < entry['expires']:
                    payload = entry['payload']
                else:
                    del self.memory_cache[key]
        return json.loads(payload) if payload else None

    def delete(self, key: str):
        if self.use_redis:
            self.redis_client.delete(key)
        else:
            self.memory_cache.pop(key, None)

    def keys(self, pattern: str) -> Iterator[str]:
        if self.use_redis:
            yield from self.redis_client.scan_iter(match=pattern)
        else:
            prefix = pattern.rstrip("*")
            yield from [k for k in self.memory_cache if k.startswith(prefix)]

    def set_job_summary(self, job_id: str, summary: List[Dict]):
        """Aggregate table of a finished job, one dict per scenario."""
        self.set(cache_key("summary", job_id), summary)

    def get_job_summary(self, job_id: str) -> Optional[List[Dict]]:
        return self.get(cache_key("summary", job_id))

    def set_recent_runs(self, runs: List[Dict], since_minutes: int, job_id: Optional[str] = None):
        self.set(cache_key("recent", job_id or "*", since_minutes), runs, ttl=RECENT_RUNS_TTL)

    def get_recent_runs_cached(self, since_minutes: int, job_id: Optional[str] = None) -> List[Dict]:
        return self.get(cache_key("recent", job_id or "*", since_minutes)) or []

    def forget_job(self, job_id: str) -> int:
        """Drop everything that may still list runs of a removed job.

        Unfiltered recent-run listings go too, since they span all jobs.
        """
        stale = [cache_key("summary", job_id)]
        for owner in (job_id, "*"):
            # "*" is a literal owner segment here; escape it for the Redis glob.
            segment = "\\*" if owner == "*" and self.use_redis else owner
            stale.extend(self.keys(f"{NAMESPACE}:recent:{segment}:*"))
        for key in stale:
            self.delete(key)
        logger.info(f"Dropped {len(stale)} cache entries for job {job_id}")
        return len(stale)
