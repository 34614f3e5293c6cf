"""Embedded analytics index over persisted inspection results.

A small sqlite database co-located with the service; non-authoritative and
rebuildable at any time by scanning the object store, so the store remains
the source of truth.
"""
from __future__ import annotations

import base64
import json
import sqlite3
import threading
from dataclasses import dataclass, field

from ..core import parse_result

RESULTS_PREFIX = "inspections"


class MalformedCursor(ValueError):
    pass


@dataclass
class AnalyticsRecord:
    result_id: str
    unit_id: str
    profile_id: str
    profile_version: int
    timestamp: str
    overall: str
    tasks: list[dict] = field(default_factory=list)  # {task_id, verdict, score}
    root: str = ""  # store prefix holding the result's artifacts

    def to_dict(self) -> dict:
        return {
            "result_id": self.result_id,
            "unit_id": self.unit_id,
            "profile_id": self.profile_id,
            "profile_version": self.profile_version,
            "timestamp": self.timestamp,
            "overall": self.overall,
            "tasks": self.tasks,
            "root": self.root,
        }


@dataclass
class ResultFilter:
    since: str | None = None   # ISO timestamps, inclusive
    until: str | None = None   # exclusive
    profile_id: str | None = None
    verdict: str | None = None  # overall verdict
    task_id: str | None = None
    unit_id: str | None = None


@dataclass
class Page:
    records: list[AnalyticsRecord]
    next_cursor: str | None


def _encode_cursor(timestamp: str, result_id: str) -> str:
    return base64.urlsafe_b64encode(f"{timestamp}|{result_id}".encode()).decode()


def _decode_cursor(cursor: str) -> tuple[str, str]:
    try:
        ts, rid = base64.urlsafe_b64decode(cursor.encode()).decode().split("|", 1)
        return ts, rid
    except Exception as e:
        raise MalformedCursor(f"bad cursor {cursor!r}") from e


class AnalyticsIndex:
    def __init__(self, path: str = ":memory:"):
        self._conn = sqlite3.connect(path, check_same_thread=False)
        self._lock = threading.Lock()
        with self._lock:
            self._conn.execute("""
                CREATE TABLE IF NOT EXISTS records (
                    result_id TEXT PRIMARY KEY,
                    unit_id TEXT NOT NULL,
                    profile_id TEXT NOT NULL,
                    profile_version INTEGER NOT NULL,
                    timestamp TEXT NOT NULL,
                    overall TEXT NOT NULL,
                    tasks_json TEXT NOT NULL,
                    root TEXT NOT NULL
                )""")
            self._conn.commit()

    def append(self, record: AnalyticsRecord):
        with self._lock:
            self._conn.execute(
                "INSERT OR REPLACE INTO records VALUES (?,?,?,?,?,?,?,?)",
                (record.result_id, record.unit_id, record.profile_id,
                 record.profile_version, record.timestamp, record.overall,
                 json.dumps(record.tasks), record.root))
            self._conn.commit()

    def count(self) -> int:
        with self._lock:
            return self._conn.execute("SELECT COUNT(*) FROM records").fetchone()[0]

    def query(self, flt: ResultFilter | None = None, cursor: str | None = None,
              limit: int = 50) -> Page:
        """Matching records newest first with keyset cursor pagination."""
        flt = flt or ResultFilter()
        where, args = [], []
        if flt.since is not None:
            where.append("timestamp >= ?")
            args.append(flt.since)
        if flt.until is not None:
            where.append("timestamp < ?")
            args.append(flt.until)
        for col, val in (("profile_id", flt.profile_id), ("overall", flt.verdict),
                         ("unit_id", flt.unit_id)):
            if val is not None:
                where.append(f"{col} = ?")
                args.append(val)
        if cursor is not None:
            ts, rid = _decode_cursor(cursor)
            where.append("(timestamp < ? OR (timestamp = ? AND result_id < ?))")
            args.extend([ts, ts, rid])
        sql = "SELECT * FROM records"
        if where:
            sql += " WHERE " + " AND ".join(where)
        sql += " ORDER BY timestamp DESC, result_id DESC"
        with self._lock:
            rows = self._conn.execute(sql, args).fetchall()
        records = []
        for row in rows:
            rec = AnalyticsRecord(
                result_id=row[0], unit_id=row[1], profile_id=row[2],
                profile_version=row[3], timestamp=row[4], overall=row[5],
                tasks=json.loads(row[6]), root=row[7])
            if flt.task_id is not None and not any(
                    t["task_id"] == flt.task_id for t in rec.tasks):
                continue
            records.append(rec)
            if len(records) > limit:
                break
        next_cursor = None
        if len(records) > limit:
            records = records[:limit]
            last = records[-1]
            next_cursor = _encode_cursor(last.timestamp, last.result_id)
        return Page(records=records, next_cursor=next_cursor)

    def get(self, result_id: str) -> AnalyticsRecord | None:
        with self._lock:
            row = self._conn.execute(
                "SELECT * FROM records WHERE result_id = ?", (result_id,)).fetchone()
        if row is None:
            return None
        return AnalyticsRecord(
            result_id=row[0], unit_id=row[1], profile_id=row[2],
            profile_version=row[3], timestamp=row[4], overall=row[5],
            tasks=json.loads(row[6]), root=row[7])

    def all_records(self) -> list[AnalyticsRecord]:
        return self.query(limit=10 ** 9).records


def record_for(result, root: str) -> AnalyticsRecord:
    return AnalyticsRecord(
        result_id=result.result_id,
        unit_id=result.unit_id,
        profile_id=result.profile_id,
        profile_version=result.profile_version,
        timestamp=result.timestamp,
        overall=result.overall.value,
        tasks=[{"task_id": v.task_id, "verdict": v.verdict.value, "score": v.score}
               for v in result.verdicts],
        root=root,
    )


def rebuild_index(store, path: str = ":memory:") -> AnalyticsIndex:
    """Reconstruct the index from every result document in the store."""
    index = AnalyticsIndex(path)
    for key in store.list(RESULTS_PREFIX + "/"):
        if key.endswith("/result.json"):
            result = parse_result(store.get(key).decode())
            index.append(record_for(result, key[: -len("/result.json")]))
    return index
