"""Domain types shared by every module, plus profile/result document (de)serialization.

All documents are UTF-8 JSON with snake_case field names so operators can
read and diff them.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np


class TaskKind(str, enum.Enum):
    TEMPLATE_PRESENCE = "template_presence"
    MASK_INTERSECTION_SEATING = "mask_intersection_seating"
    KEYPOINT_DIRECTION = "keypoint_direction"
    MULTI_CLASS_LATCH = "multi_class_latch"
    EXPOSED_AREA = "exposed_area"


class Verdict(str, enum.Enum):
    PASS = "PASS"
    FAIL = "FAIL"
    INDETERMINATE = "INDETERMINATE"


class FeedbackLabel(str, enum.Enum):
    GOOD = "GOOD"
    BAD = "BAD"


class ProfileParseError(ValueError):
    """Raised when a profile document is malformed; message names the field."""


class ResultParseError(ValueError):
    """Raised when a result document is malformed."""


@dataclass
class ImageBuffer:
    """8-bit raster, 1 (gray) or 3 (RGB) channels, stored as (h, w, c) uint8."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim == 2:
            px = px[:, :, None]
        if px.ndim != 3 or px.shape[2] not in (1, 3):
            raise ValueError(f"expected (h, w, 1|3) array, got shape {px.shape}")
        if px.dtype != np.uint8:
            raise ValueError(f"expected uint8 pixels, got {px.dtype}")
        self.pixels = np.ascontiguousarray(px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    @property
    def data(self) -> bytes:
        """Row-major sample bytes."""
        return self.pixels.tobytes()

    def __eq__(self, other) -> bool:
        if not isinstance(other, ImageBuffer):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and np.array_equal(
            self.pixels, other.pixels
        )


@dataclass
class Mask:
    """Per-pixel 8-bit class indices; index 0 is background."""

    labels: np.ndarray
    class_names: list[str]

    def __post_init__(self):
        lab = np.asarray(self.labels)
        if lab.ndim != 2 or lab.dtype != np.uint8:
            raise ValueError(f"expected (h, w) uint8 labels, got {lab.shape} {lab.dtype}")
        if lab.size and int(lab.max()) >= len(self.class_names):
            raise ValueError(
                f"label {int(lab.max())} out of range for {len(self.class_names)} classes"
            )
        self.labels = np.ascontiguousarray(lab)

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Mask):
            return NotImplemented
        return self.class_names == other.class_names and np.array_equal(
            self.labels, other.labels
        )


@dataclass(frozen=True)
class RegionOfInterest:
    id: str
    view: str
    rect: tuple[int, int, int, int]  # x, y, w, h in golden-image pixels
    task_ref: str


@dataclass
class InspectionTask:
    id: str
    kind: TaskKind
    roi: RegionOfInterest
    params: dict
    model_ref: str | None = None


@dataclass
class Profile:
    id: str
    product_name: str
    views: list[str]
    golden_images: dict[str, str]  # view -> object-store path
    tasks: list[InspectionTask]
    version: int = 1


@dataclass
class TaskVerdict:
    task_id: str
    verdict: Verdict
    score: float
    artifact_paths: dict[str, str] = field(default_factory=dict)  # crop / overlay
    reason: str | None = None  # required when INDETERMINATE
    evidence: dict = field(default_factory=dict)


@dataclass
class TransformReport:
    view: str
    ok: bool
    matrix: list[list[float]] | None = None
    inlier_count: int = 0
    mean_error_px: float = 0.0
    reason: str | None = None


@dataclass
class InspectionResult:
    result_id: str
    unit_id: str
    profile_id: str
    profile_version: int
    timestamp: str  # ISO-8601 UTC
    transforms: list[TransformReport]
    verdicts: list[TaskVerdict]
    overall: Verdict


@dataclass
class FeedbackItem:
    result_id: str
    task_id: str
    operator_label: FeedbackLabel
    image_path: str
    submitted_at: str = ""

    def __post_init__(self):
        if not self.submitted_at:
            self.submitted_at = utc_now()


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


# ---------------------------------------------------------------------------
# Per-kind parameter validation

def _check_params(task: InspectionTask) -> list[str]:
    p = task.params or {}
    out = []
    k = task.kind
    if k == TaskKind.TEMPLATE_PRESENCE:
        kk = p.get("k", 5)
        if not isinstance(kk, int) or kk < 1:
            out.append(f"task {task.id}: k must be an integer >= 1, got {kk!r}")
        thr = p.get("probability_threshold", 0.5)
        if not (isinstance(thr, (int, float)) and 0.0 < thr < 1.0):
            out.append(f"task {task.id}: probability_threshold must be in (0,1), got {thr!r}")
    elif k == TaskKind.MASK_INTERSECTION_SEATING:
        for name in ("upper_class", "lower_class"):
            if not p.get(name):
                out.append(f"task {task.id}: missing {name}")
        thr = p.get("intersection_threshold")
        if thr is not None and not (isinstance(thr, (int, float)) and thr > 0):
            out.append(f"task {task.id}: intersection_threshold must be > 0, got {thr!r}")
    elif k == TaskKind.KEYPOINT_DIRECTION:
        d = p.get("expected_direction")
        if not (isinstance(d, (list, tuple)) and len(d) == 2) or (d[0] == 0 and d[1] == 0):
            out.append(f"task {task.id}: expected_direction must be a nonzero 2-vector")
        tol = p.get("tolerance_deg")
        if not (isinstance(tol, (int, float)) and tol > 0):
            out.append(f"task {task.id}: tolerance_deg must be > 0, got {tol!r}")
    elif k == TaskKind.MULTI_CLASS_LATCH:
        rects = p.get("latch_rects")
        if not rects:
            out.append(f"task {task.id}: latch_rects must be a non-empty list")
        else:
            for r in rects:
                if not (isinstance(r, (list, tuple)) and len(r) == 4):
                    out.append(f"task {task.id}: latch rect {r!r} is not (x, y, w, h)")
    elif k == TaskKind.EXPOSED_AREA:
        if not p.get("exposed_class"):
            out.append(f"task {task.id}: missing exposed_class")
        frac = p.get("min_fraction", 0.002)
        if not (isinstance(frac, (int, float)) and 0 < frac < 1):
            out.append(f"task {task.id}: min_fraction must be in (0,1), got {frac!r}")
    return out


def validate_profile(profile: Profile, golden_sizes: dict[str, tuple[int, int]] | None = None) -> list[str]:
    """Return a list of invariant violations; empty means the profile is valid.

    golden_sizes optionally maps view -> (width, height) so ROI containment
    can be checked against the actual golden images.
    """
    out: list[str] = []
    if not profile.views:
        out.append("profile has no views")
    seen_views = set()
    for v in profile.views:
        if v in seen_views:
            out.append(f"duplicate view {v!r}")
        seen_views.add(v)
        if v not in profile.golden_images:
            out.append(f"view {v!r} has no golden image")
    for v in profile.golden_images:
        if v not in seen_views:
            out.append(f"golden image for unknown view {v!r}")

    seen_tasks = set()
    for t in profile.tasks:
        if t.id in seen_tasks:
            out.append(f"duplicate task id {t.id!r}")
        seen_tasks.add(t.id)
        r = t.roi
        if r.view not in seen_views:
            out.append(f"task {t.id}: roi view {r.view!r} not in profile views")
        x, y, w, h = r.rect
        if w <= 0 or h <= 0:
            out.append(f"task {t.id}: roi has non-positive size {w}x{h}")
        if x < 0 or y < 0:
            out.append(f"task {t.id}: roi origin ({x}, {y}) is negative")
        if golden_sizes and r.view in (golden_sizes or {}):
            gw, gh = golden_sizes[r.view]
            if x + w > gw or y + h > gh:
                out.append(f"task {t.id}: roi exceeds golden image bounds {gw}x{gh}")
        if r.task_ref != t.id:
            out.append(f"task {t.id}: roi.task_ref is {r.task_ref!r}")
        out.extend(_check_params(t))
    return out


# ---------------------------------------------------------------------------
# Profile documents

def profile_to_dict(profile: Profile) -> dict:
    return {
        "id": profile.id,
        "product_name": profile.product_name,
        "version": profile.version,
        "views": list(profile.views),
        "golden_images": dict(profile.golden_images),
        "tasks": [
            {
                "id": t.id,
                "kind": t.kind.value,
                "roi": {
                    "id": t.roi.id,
                    "view": t.roi.view,
                    "rect": list(t.roi.rect),
                    "task_ref": t.roi.task_ref,
                },
                "params": t.params,
                "model_ref": t.model_ref,
            }
            for t in profile.tasks
        ],
    }


def serialize_profile(profile: Profile) -> str:
    return json.dumps(profile_to_dict(profile), indent=2, sort_keys=False)


def _require(doc: dict, field_name: str, where: str):
    if field_name not in doc:
        raise ProfileParseError(f"{where}: missing field {field_name!r}")
    return doc[field_name]


def profile_from_dict(doc: dict) -> Profile:
    pid = _require(doc, "id", "profile")
    views = _require(doc, "views", "profile")
    golden = _require(doc, "golden_images", "profile")
    for v in views:
        if v not in golden:
            raise ProfileParseError(f"profile {pid}: no golden image for view {v!r}")
    tasks = []
    for td in _require(doc, "tasks", "profile"):
        tid = _require(td, "id", "task")
        try:
            kind = TaskKind(_require(td, "kind", f"task {tid}"))
        except ValueError as e:
            raise ProfileParseError(f"task {tid}: unknown kind {td.get('kind')!r}") from e
        rd = _require(td, "roi", f"task {tid}")
        roi = RegionOfInterest(
            id=_require(rd, "id", f"task {tid} roi"),
            view=_require(rd, "view", f"task {tid} roi"),
            rect=tuple(_require(rd, "rect", f"task {tid} roi")),
            task_ref=rd.get("task_ref", tid),
        )
        tasks.append(
            InspectionTask(
                id=tid,
                kind=kind,
                roi=roi,
                params=td.get("params", {}),
                model_ref=td.get("model_ref"),
            )
        )
    return Profile(
        id=pid,
        product_name=_require(doc, "product_name", "profile"),
        views=list(views),
        golden_images=dict(golden),
        tasks=tasks,
        version=int(doc.get("version", 1)),
    )


def parse_profile(text: str) -> Profile:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ProfileParseError(f"invalid JSON at line {e.lineno}: {e.msg}") from e
    return profile_from_dict(doc)


# ---------------------------------------------------------------------------
# Result documents

def verdict_to_dict(v: TaskVerdict) -> dict:
    d = {
        "task_id": v.task_id,
        "verdict": v.verdict.value,
        "score": v.score,
        "artifact_paths": dict(v.artifact_paths),
    }
    if v.reason is not None:
        d["reason"] = v.reason
    if v.evidence:
        d["evidence"] = v.evidence
    return d


def verdict_from_dict(d: dict) -> TaskVerdict:
    return TaskVerdict(
        task_id=d["task_id"],
        verdict=Verdict(d["verdict"]),
        score=float(d["score"]),
        artifact_paths=dict(d.get("artifact_paths", {})),
        reason=d.get("reason"),
        evidence=d.get("evidence", {}),
    )


def result_to_dict(r: InspectionResult) -> dict:
    return {
        "result_id": r.result_id,
        "unit_id": r.unit_id,
        "profile_id": r.profile_id,
        "profile_version": r.profile_version,
        "timestamp": r.timestamp,
        "transforms": [
            {
                "view": t.view,
                "ok": t.ok,
                "matrix": t.matrix,
                "inlier_count": t.inlier_count,
                "mean_error_px": t.mean_error_px,
                "reason": t.reason,
            }
            for t in r.transforms
        ],
        "verdicts": [verdict_to_dict(v) for v in r.verdicts],
        "overall": r.overall.value,
    }


def serialize_result(r: InspectionResult) -> str:
    return json.dumps(result_to_dict(r), indent=2)


def result_from_dict(doc: dict) -> InspectionResult:
    try:
        return InspectionResult(
            result_id=doc["result_id"],
            unit_id=doc["unit_id"],
            profile_id=doc["profile_id"],
            profile_version=int(doc["profile_version"]),
            timestamp=doc["timestamp"],
            transforms=[
                TransformReport(
                    view=t["view"],
                    ok=bool(t["ok"]),
                    matrix=t.get("matrix"),
                    inlier_count=int(t.get("inlier_count", 0)),
                    mean_error_px=float(t.get("mean_error_px", 0.0)),
                    reason=t.get("reason"),
                )
                for t in doc.get("transforms", [])
            ],
            verdicts=[verdict_from_dict(v) for v in doc["verdicts"]],
            overall=Verdict(doc["overall"]),
        )
    except KeyError as e:
        raise ResultParseError(f"missing field {e.args[0]!r}") from e


def parse_result(text: str) -> InspectionResult:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ResultParseError(f"invalid JSON at line {e.lineno}: {e.msg}") from e
    return result_from_dict(doc)


def overall_verdict(verdicts: list[TaskVerdict]) -> Verdict:
    """PASS iff every task passed; INDETERMINATE counts as a failure (fail-safe)."""
    if all(v.verdict == Verdict.PASS for v in verdicts):
        return Verdict.PASS
    return Verdict.FAIL
