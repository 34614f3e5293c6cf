"""Versioned model registry over the object store.

Each registered model gets the next integer version for its task and starts in
STAGING. Stage pointers (PRODUCTION / STAGING) are single small objects whose
atomic replacement is the commit point for promotion, so readers never observe
two production versions for one task.
"""
from __future__ import annotations

import enum
import json
import threading
from dataclasses import dataclass, field

from ..core import utc_now


class RegistryError(Exception):
    pass


class StoreMissing(RegistryError):
    """The artifact location given to register_model does not exist."""


class UnknownVersion(RegistryError):
    pass


class GateFailed(RegistryError):
    def __init__(self, min_f1: float, actual: float):
        super().__init__(f"f1 {actual} below promotion gate {min_f1}")
        self.min_f1 = min_f1
        self.actual = actual


class ModelStatus(str, enum.Enum):
    TRAINING = "TRAINING"
    FAILED = "FAILED"
    STAGING = "STAGING"
    PRODUCTION = "PRODUCTION"
    ARCHIVED = "ARCHIVED"


@dataclass
class ModelVersion:
    task_id: str
    version: int
    status: ModelStatus
    metrics: dict = field(default_factory=dict)
    location: str = ""
    created_at: str = ""
    comments: str = ""

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "version": self.version,
            "status": self.status.value,
            "metrics": dict(self.metrics),
            "location": self.location,
            "created_at": self.created_at,
            "comments": self.comments,
        }

    @staticmethod
    def from_dict(d: dict) -> "ModelVersion":
        return ModelVersion(
            task_id=d["task_id"],
            version=int(d["version"]),
            status=ModelStatus(d["status"]),
            metrics=dict(d.get("metrics", {})),
            location=d.get("location", ""),
            created_at=d.get("created_at", ""),
            comments=d.get("comments", ""),
        )


class ModelRegistry:
    """Registry state lives entirely in the store; re-opening the same store
    reconstructs identical version tables. Writes are serialized through a
    single lock; reads go straight to the store."""

    def __init__(self, store, prefix: str = "models"):
        self.store = store
        self.prefix = prefix.rstrip("/")
        self._lock = threading.Lock()

    # -- store layout -------------------------------------------------------

    def _record_key(self, task_id: str, version: int) -> str:
        return f"{self.prefix}/{task_id}/{version}/record.json"

    def _pointer_key(self, task_id: str, target: str) -> str:
        return f"{self.prefix}/{task_id}/{target}"

    def _read_pointer(self, task_id: str, target: str) -> int | None:
        key = self._pointer_key(task_id, target)
        if not self.store.exists(key):
            return None
        return int(self.store.get(key).decode())

    def _write_record(self, mv: ModelVersion):
        body = json.dumps(mv.to_dict(), indent=2).encode()
        self.store.put(self._record_key(mv.task_id, mv.version), body)
        base = f"{self.prefix}/{mv.task_id}/{mv.version}"
        self.store.put(f"{base}/metrics.json", json.dumps(mv.metrics, indent=2).encode())
        self.store.put(f"{base}/status", mv.status.value.encode())

    def _load_record(self, task_id: str, version: int) -> ModelVersion:
        key = self._record_key(task_id, version)
        if not self.store.exists(key):
            raise UnknownVersion(f"{task_id} has no version {version}")
        return ModelVersion.from_dict(json.loads(self.store.get(key)))

    def _effective(self, mv: ModelVersion) -> ModelVersion:
        """Stage pointers win over the record's own status field, so a crash
        between pointer move and record rewrite cannot show two productions."""
        prod = self._read_pointer(mv.task_id, "PRODUCTION")
        if prod == mv.version:
            mv.status = ModelStatus.PRODUCTION
        elif mv.status == ModelStatus.PRODUCTION:
            mv.status = ModelStatus.ARCHIVED
        return mv

    # -- operations ---------------------------------------------------------

    def register_model(self, task_id: str, metrics: dict, location: str,
                       comments: str = "") -> ModelVersion:
        location = location.rstrip("/")
        artifact_keys = ([location] if self.store.exists(location)
                         else self.store.list(location + "/"))
        if not artifact_keys:
            raise StoreMissing(f"no artifact at {location!r}")
        with self._lock:
            existing = self.list_versions(task_id)
            version = max((m.version for m in existing), default=0) + 1
            dest = f"{self.prefix}/{task_id}/{version}"
            for key in artifact_keys:
                rel = key[len(location):].lstrip("/") or key.rsplit("/", 1)[-1]
                self.store.put(f"{dest}/{rel}", self.store.get(key))
            mv = ModelVersion(
                task_id=task_id, version=version, status=ModelStatus.STAGING,
                metrics=dict(metrics), location=dest, created_at=utc_now(),
                comments=comments)
            self._write_record(mv)
            self.store.put(self._pointer_key(task_id, "STAGING"), str(version).encode())
            return mv

    def promote(self, task_id: str, version: int, target: str = "PRODUCTION",
                policy="manual") -> ModelVersion:
        """policy is "manual" or ("accuracy_gate", min_f1)."""
        if target not in ("STAGING", "PRODUCTION"):
            raise ValueError(f"target must be STAGING or PRODUCTION, got {target!r}")
        with self._lock:
            mv = self._load_record(task_id, version)
            if policy != "manual":
                kind, min_f1 = policy
                if kind != "accuracy_gate":
                    raise ValueError(f"unknown policy {policy!r}")
                actual = float(mv.metrics.get("f1", 0.0))
                if actual < min_f1:
                    raise GateFailed(min_f1, actual)
            previous = self._read_pointer(task_id, target)
            # commit point: one atomic pointer write
            self.store.put(self._pointer_key(task_id, target), str(version).encode())
            mv.status = ModelStatus(target)
            self._write_record(mv)
            if target == "PRODUCTION" and previous is not None and previous != version:
                old = self._load_record(task_id, previous)
                old.status = ModelStatus.ARCHIVED
                self._write_record(old)
            return mv

    def get(self, task_id: str, version: int) -> ModelVersion:
        return self._effective(self._load_record(task_id, version))

    def list_versions(self, task_id: str) -> list[ModelVersion]:
        out = []
        for key in self.store.list(f"{self.prefix}/{task_id}/"):
            if key.endswith("/record.json"):
                mv = ModelVersion.from_dict(json.loads(self.store.get(key)))
                out.append(self._effective(mv))
        return sorted(out, key=lambda m: m.version)

    def production_version(self, task_id: str) -> ModelVersion | None:
        prod = self._read_pointer(task_id, "PRODUCTION")
        if prod is None:
            return None
        return self.get(task_id, prod)

    def tasks(self) -> list[str]:
        seen = set()
        start = len(self.prefix) + 1
        for key in self.store.list(self.prefix + "/"):
            seen.add(key[start:].split("/", 1)[0])
        return sorted(seen)
