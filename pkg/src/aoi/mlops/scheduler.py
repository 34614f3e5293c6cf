"""Marker-file training scheduler.

A `_SUBMIT.json` marker appearing under the queue prefix enqueues a training
job. Processed markers move to done/ or rejected/ so a crashed watcher never
double-processes. Admission passes a token bucket (rate) and a bounded worker
pool (concurrency); failed runs retry with exponential backoff.
"""
from __future__ import annotations

import enum
import json
import threading
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

MARKER_NAME = "_SUBMIT.json"
_RESERVED = {"done", "rejected", "jobs", "_keys"}


class JobState(str, enum.Enum):
    QUEUED = "QUEUED"
    RUNNING = "RUNNING"
    SUCCEEDED = "SUCCEEDED"
    FAILED = "FAILED"
    DEAD = "DEAD"


@dataclass
class TrainingJob:
    job_id: str
    task_id: str
    dataset_prefix: str
    hyperparameters: dict = field(default_factory=dict)
    idempotency_key: str = ""
    requested_by: str = ""
    attempts: int = 0
    state: JobState = JobState.QUEUED
    error: str | None = None
    model_version: int | None = None

    def to_dict(self) -> dict:
        return {
            "job_id": self.job_id,
            "task_id": self.task_id,
            "dataset_prefix": self.dataset_prefix,
            "hyperparameters": self.hyperparameters,
            "idempotency_key": self.idempotency_key,
            "requested_by": self.requested_by,
            "attempts": self.attempts,
            "state": self.state.value,
            "error": self.error,
            "model_version": self.model_version,
        }


class TokenBucket:
    """Capacity-bounded bucket refilled continuously at rate_per_hour."""

    def __init__(self, rate_per_hour: float = 6.0, capacity: float | None = None,
                 clock=time.monotonic):
        self.rate_per_hour = rate_per_hour
        self.capacity = capacity if capacity is not None else rate_per_hour
        self.clock = clock
        self._tokens = self.capacity
        self._last = clock()
        self._lock = threading.Lock()

    def try_acquire(self) -> bool:
        with self._lock:
            now = self.clock()
            self._tokens = min(self.capacity,
                               self._tokens + (now - self._last) * self.rate_per_hour / 3600.0)
            self._last = now
            if self._tokens >= 1.0:
                self._tokens -= 1.0
                return True
            return False


class Scheduler:
    """Watches a queue prefix in the store and drives jobs through a runner.

    runner(job) is called for each attempt and must return the registered
    model version (or raise on failure). sleep/clock are injectable so retry
    backoff and rate limiting are testable without real waiting.
    """

    def __init__(self, store, runner, queue_prefix: str = "training-queue",
                 max_retries: int = 2, backoff_base_s: float = 30.0,
                 max_concurrent: int = 2, rate_per_hour: float = 6.0,
                 sleep=time.sleep, clock=time.monotonic):
        self.store = store
        self.runner = runner
        self.queue_prefix = queue_prefix.rstrip("/")
        self.max_retries = max_retries
        self.backoff_base_s = backoff_base_s
        self.max_concurrent = max_concurrent
        self.bucket = TokenBucket(rate_per_hour, clock=clock)
        self.sleep = sleep
        self.jobs: dict[str, TrainingJob] = {}
        self._keys_seen: set[str] = set()
        self._lock = threading.Lock()
        self._pool = ThreadPoolExecutor(max_workers=max_concurrent)
        self._running = 0
        self.peak_running = 0

    # -- marker handling ----------------------------------------------------

    def _pending_markers(self) -> list[str]:
        out = []
        start = len(self.queue_prefix) + 1
        for key in self.store.list(self.queue_prefix + "/"):
            parts = key[start:].split("/")
            if len(parts) == 3 and parts[2] == MARKER_NAME and parts[0] not in _RESERVED:
                out.append(key)
        return out

    def _key_seen(self, idempotency_key: str) -> bool:
        if idempotency_key in self._keys_seen:
            return True
        return self.store.exists(f"{self.queue_prefix}/_keys/{idempotency_key}")

    def _record_key(self, idempotency_key: str, job_id: str):
        self._keys_seen.add(idempotency_key)
        self.store.put(f"{self.queue_prefix}/_keys/{idempotency_key}",
                       job_id.encode())

    def _persist(self, job: TrainingJob):
        self.store.put(f"{self.queue_prefix}/jobs/{job.job_id}.json",
                       json.dumps(job.to_dict(), indent=2).encode())

    def _admit(self, marker_key: str) -> TrainingJob | None:
        start = len(self.queue_prefix) + 1
        task_dir, job_dir, _ = marker_key[start:].split("/")
        try:
            doc = json.loads(self.store.get(marker_key))
            task_id = doc["task_id"]
            dataset_prefix = doc["dataset_prefix"]
            idempotency_key = doc["idempotency_key"]
        except (ValueError, KeyError, TypeError) as e:
            job = TrainingJob(job_id=job_dir, task_id=task_dir, dataset_prefix="",
                              state=JobState.DEAD, error=f"malformed marker: {e}")
            self.jobs[job.job_id] = job
            self._persist(job)
            self.store.move(marker_key,
                            f"{self.queue_prefix}/rejected/{task_dir}/{job_dir}/{MARKER_NAME}")
            return None
        if self._key_seen(idempotency_key):
            self.store.move(marker_key,
                            f"{self.queue_prefix}/done/{task_dir}/{job_dir}/{MARKER_NAME}")
            return None
        job = TrainingJob(
            job_id=job_dir, task_id=task_id, dataset_prefix=dataset_prefix,
            hyperparameters=doc.get("hyperparameters", {}),
            idempotency_key=idempotency_key,
            requested_by=doc.get("requested_by", ""))
        self._record_key(idempotency_key, job.job_id)
        self.jobs[job.job_id] = job
        self._persist(job)
        self.store.move(marker_key,
                        f"{self.queue_prefix}/done/{task_dir}/{job_dir}/{MARKER_NAME}")
        return job

    # -- execution ----------------------------------------------------------

    def _execute(self, job: TrainingJob):
        with self._lock:
            self._running += 1
            self.peak_running = max(self.peak_running, self._running)
        try:
            while True:
                job.attempts += 1
                job.state = JobState.RUNNING
                self._persist(job)
                try:
                    result = self.runner(job)
                    job.state = JobState.SUCCEEDED
                    job.error = None
                    job.model_version = getattr(result, "version", None)
                    self._persist(job)
                    return
                except Exception as e:
                    job.error = str(e)
                    if job.attempts > self.max_retries:
                        job.state = JobState.DEAD
                        self._persist(job)
                        return
                    job.state = JobState.FAILED
                    self._persist(job)
                    self.sleep(self.backoff_base_s * 2 ** (job.attempts - 1))
        finally:
            with self._lock:
                self._running -= 1

    def poll_once(self, wait: bool = True) -> list[TrainingJob]:
        """One watcher pass: admit new markers (subject to the rate limit) and
        run them on the worker pool. Returns the jobs admitted this pass.
        Rate-limited markers stay in place for a later pass."""
        admitted = []
        for marker_key in self._pending_markers():
            if not self.bucket.try_acquire():
                break
            job = self._admit(marker_key)
            if job is not None:
                admitted.append(job)
        futures = [self._pool.submit(self._execute, job) for job in admitted]
        if wait:
            for f in futures:
                f.result()
        return admitted

    def watch(self, interval_s: float = 1.0, stop_event: threading.Event | None = None):
        """Generator form of the watcher loop: yields each admitted job."""
        stop_event = stop_event or threading.Event()
        while not stop_event.is_set():
            yield from self.poll_once(wait=False)
            self.sleep(interval_s)


def write_marker(store, task_id: str, dataset_prefix: str,
                 hyperparameters: dict | None = None, idempotency_key: str | None = None,
                 requested_by: str = "", queue_prefix: str = "training-queue") -> str:
    """Drop a submit marker into the queue; returns the new job id."""
    job_id = uuid.uuid4().hex[:12]
    doc = {
        "task_id": task_id,
        "dataset_prefix": dataset_prefix,
        "hyperparameters": hyperparameters or {},
        "idempotency_key": idempotency_key or job_id,
        "requested_by": requested_by,
    }
    store.put(f"{queue_prefix.rstrip('/')}/{task_id}/{job_id}/{MARKER_NAME}",
              json.dumps(doc, indent=2).encode())
    return job_id
