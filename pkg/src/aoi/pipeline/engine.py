"""Per-unit inspection orchestration and the feedback loop.

run_inspection aligns each captured view to its golden image, crops every
task's ROI, dispatches to the matching decider, and persists all artifacts to
the object store under a date/unit/result layout. Feedback items accumulate
into per-task datasets and, at the retrain batch size, drop a submit marker
into the training queue.
"""
from __future__ import annotations

import json
import uuid

import numpy as np

from ..align import AlignConfig, AlignmentFailed, align_to_golden
from ..core import (
    FeedbackItem,
    FeedbackLabel,
    ImageBuffer,
    InspectionResult,
    InspectionTask,
    Profile,
    TaskKind,
    TaskVerdict,
    TransformReport,
    Verdict,
    overall_verdict,
    parse_profile,
    parse_result,
    serialize_profile,
    serialize_result,
    utc_now,
    verdict_to_dict,
)
from ..decision import (
    DecisionError,
    KnnParams,
    SeatingParams,
    TemplateLabel,
    exposed_area_flag,
    knn_classify,
    latch_state,
    mask_intersection_area,
    seating_decision,
)
from ..imaging import crop, decode_png, encode_png
from ..mlops import (
    ModelRegistry,
    library_from_json,
    seating_from_json,
    write_marker,
)
from ..segbackend import BackendError, ModelRef, backend_for
from .analytics import RESULTS_PREFIX, AnalyticsIndex, record_for


class PipelineError(Exception):
    pass


class MissingView(PipelineError):
    pass


class UnknownProfile(PipelineError):
    pass


class UnknownResult(PipelineError):
    pass


class UnknownTask(PipelineError):
    pass


class NoProductionModel(PipelineError):
    pass


_OVERLAY_COLORS = {
    Verdict.PASS: (0, 200, 0),
    Verdict.FAIL: (220, 0, 0),
    Verdict.INDETERMINATE: (230, 180, 0),
}


def _overlay(crop_img: ImageBuffer, verdict: Verdict) -> ImageBuffer:
    """Crop with a 2 px verdict-colored border for the review UI."""
    px = crop_img.pixels
    if px.shape[2] == 1:
        px = np.repeat(px, 3, axis=2)
    out = px.copy()
    color = np.array(_OVERLAY_COLORS[verdict], np.uint8)
    w = min(2, out.shape[0] // 2, out.shape[1] // 2) or 1
    out[:w, :] = color
    out[-w:, :] = color
    out[:, :w] = color
    out[:, -w:] = color
    return ImageBuffer(out)


class InspectionEngine:
    """Binds the store, registry, analytics index, and inference backends."""

    def __init__(self, store, registry: ModelRegistry | None = None,
                 index: AnalyticsIndex | None = None,
                 model_refs: dict[str, ModelRef] | None = None,
                 default_fixture_root: str | None = None,
                 align_cfg: AlignConfig | None = None,
                 retrain_batch_size: int = 1,
                 queue_prefix: str = "training-queue"):
        self.store = store
        self.registry = registry or ModelRegistry(store)
        self.index = index or AnalyticsIndex()
        self.model_refs = model_refs or {}
        self.default_fixture_root = default_fixture_root
        self.align_cfg = align_cfg
        self.retrain_batch_size = retrain_batch_size
        self.queue_prefix = queue_prefix
        self._param_cache: dict[tuple[str, int], object] = {}

    # -- profiles -----------------------------------------------------------

    def save_profile(self, profile: Profile,
                     golden_images: dict[str, ImageBuffer] | None = None) -> Profile:
        if golden_images is not None:
            profile.golden_images = {
                view: f"profiles/{profile.id}/golden/{view}.png"
                for view in golden_images}
            for view, img in golden_images.items():
                self.store.put(profile.golden_images[view], encode_png(img))
        self.store.put(f"profiles/{profile.id}/profile.json",
                       serialize_profile(profile).encode())
        return profile

    def load_profile(self, profile_id: str) -> Profile:
        key = f"profiles/{profile_id}/profile.json"
        if not self.store.exists(key):
            raise UnknownProfile(profile_id)
        return parse_profile(self.store.get(key).decode())

    def load_golden(self, profile: Profile, view: str) -> ImageBuffer:
        return decode_png(self.store.get(profile.golden_images[view]))

    # -- model activation ---------------------------------------------------

    def activate_model(self, task_id: str):
        """Effective decider parameters for the task's PRODUCTION version.

        Returns (version, TemplateLibrary | SeatingParams). Read-through: the
        pointer is consulted every call, artifacts cached per version.
        """
        mv = self.registry.production_version(task_id)
        if mv is None:
            raise NoProductionModel(task_id)
        cached = self._param_cache.get((task_id, mv.version))
        if cached is not None:
            return mv.version, cached
        lib_key = f"{mv.location}/library.json"
        seat_key = f"{mv.location}/seating.json"
        if self.store.exists(lib_key):
            params = library_from_json(self.store.get(lib_key))
        elif self.store.exists(seat_key):
            params = seating_from_json(self.store.get(seat_key))
        else:
            raise NoProductionModel(
                f"{task_id}: version {mv.version} has no decider artifact")
        self._param_cache[(task_id, mv.version)] = params
        return mv.version, params

    # -- inspection ---------------------------------------------------------

    def _model_ref(self, task: InspectionTask) -> ModelRef | None:
        """Explicit mapping, then the task's own model_ref (an http endpoint or
        a fixture directory), then the engine-wide fixture root."""
        ref = self.model_refs.get(task.id)
        if ref is not None:
            return ref
        if task.model_ref:
            if task.model_ref.startswith(("http://", "https://")):
                return ModelRef(task.id, endpoint=task.model_ref)
            return ModelRef(task.id, fixture_root=task.model_ref)
        if self.default_fixture_root is not None:
            return ModelRef(task.id, fixture_root=self.default_fixture_root)
        return None

    def _decide(self, task: InspectionTask, crop_img: ImageBuffer,
                golden_crop: ImageBuffer) -> TaskVerdict:
        p = task.params or {}
        kind = task.kind

        if kind == TaskKind.TEMPLATE_PRESENCE:
            version, lib = self.activate_model(task.id)
            knn = KnnParams(
                k=int(p.get("k", 5)),
                probability_threshold=float(p.get("probability_threshold", 0.5)),
                search_region=tuple(p["search_region"]) if p.get("search_region") else None)
            label, probability, evidence = knn_classify(
                crop_img, lib, knn, golden=golden_crop)
            verdict = Verdict.PASS if label == TemplateLabel.PRESENT else Verdict.FAIL
            return TaskVerdict(
                task_id=task.id, verdict=verdict, score=probability,
                evidence={"model_version": version, "neighbors": evidence})

        if kind == TaskKind.MASK_INTERSECTION_SEATING:
            if self.registry.production_version(task.id) is not None:
                version, params = self.activate_model(task.id)
            elif p.get("intersection_threshold"):
                version = None
                params = SeatingParams(
                    upper_class=p.get("upper_class", "upper"),
                    lower_class=p.get("lower_class", "lower"),
                    intersection_threshold=float(p["intersection_threshold"]))
            else:
                raise NoProductionModel(task.id)
            ref = self._model_ref(task)
            if ref is None:
                raise NoProductionModel(f"{task.id}: no segmentation backend configured")
            mask = backend_for(ref).segment(crop_img, ref)
            area = mask_intersection_area(mask, params.upper_class, params.lower_class)
            v = seating_decision(area, params, task_id=task.id)
            v.evidence["model_version"] = version
            return v

        ref = self._model_ref(task)
        if ref is None:
            raise NoProductionModel(f"{task.id}: no inference backend configured")

        if kind == TaskKind.KEYPOINT_DIRECTION:
            from ..decision import arrow_direction
            preds = backend_for(ref).keypoints(crop_img, ref)
            return arrow_direction(
                preds, tuple(p["expected_direction"]),
                float(p["tolerance_deg"]), task_id=task.id)

        if kind == TaskKind.MULTI_CLASS_LATCH:
            mask = backend_for(ref).segment(crop_img, ref)
            latches = latch_state(
                mask, [tuple(r) for r in p["latch_rects"]],
                open_class=p.get("open_class", "open"),
                closed_class=p.get("closed_class", "closed"))
            if any(lv.verdict == Verdict.INDETERMINATE for lv in latches):
                verdict = Verdict.INDETERMINATE
                reason = "LatchStateUnknown"
            elif all(lv.verdict == Verdict.PASS for lv in latches):
                verdict, reason = Verdict.PASS, None
            else:
                verdict, reason = Verdict.FAIL, None
            closed = sum(lv.state == "closed" for lv in latches)
            return TaskVerdict(
                task_id=task.id, verdict=verdict,
                score=closed / len(latches), reason=reason,
                evidence={"latches": [
                    {"rect": list(lv.rect), "state": lv.state,
                     "verdict": lv.verdict.value,
                     "closed_fraction": lv.closed_fraction} for lv in latches]})

        if kind == TaskKind.EXPOSED_AREA:
            mask = backend_for(ref).segment(crop_img, ref)
            return exposed_area_flag(
                mask, p["exposed_class"],
                min_fraction=float(p.get("min_fraction", 0.002)), task_id=task.id)

        raise ValueError(f"unhandled task kind {kind}")  # pragma: no cover

    def run_inspection(self, unit_id: str, images: dict[str, ImageBuffer],
                       profile: Profile) -> InspectionResult:
        for view in profile.views:
            if view not in images:
                raise MissingView(f"unit {unit_id}: no image for view {view!r}")

        timestamp = utc_now()
        result_id = uuid.uuid4().hex[:16]
        date = timestamp[:10]
        root = f"{RESULTS_PREFIX}/{date}/{unit_id}/{result_id}"

        aligned: dict[str, ImageBuffer] = {}
        goldens: dict[str, ImageBuffer] = {}
        transforms: list[TransformReport] = []
        for view in profile.views:
            goldens[view] = self.load_golden(profile, view)
            try:
                img, rep = align_to_golden(images[view], goldens[view], self.align_cfg)
                aligned[view] = img
                transforms.append(TransformReport(
                    view=view, ok=True, matrix=rep.transform.matrix.tolist(),
                    inlier_count=rep.inlier_count, mean_error_px=rep.mean_error_px))
                self.store.put(f"{root}/{view}/aligned.png", encode_png(img))
            except AlignmentFailed as e:
                transforms.append(TransformReport(view=view, ok=False, reason=str(e)))

        verdicts: list[TaskVerdict] = []
        for task in profile.tasks:
            view = task.roi.view
            if view not in aligned:
                verdict = TaskVerdict(task_id=task.id, verdict=Verdict.INDETERMINATE,
                                      score=0.0, reason="AlignmentFailed")
                verdicts.append(verdict)
                continue
            crop_img = crop(aligned[view], task.roi.rect)
            golden_crop = crop(goldens[view], task.roi.rect)
            try:
                verdict = self._decide(task, crop_img, golden_crop)
            except NoProductionModel:
                verdict = TaskVerdict(task_id=task.id, verdict=Verdict.INDETERMINATE,
                                      score=0.0, reason="NoProductionModel")
            except BackendError as e:
                verdict = TaskVerdict(task_id=task.id, verdict=Verdict.INDETERMINATE,
                                      score=0.0, reason=f"BackendError: {e}")
            except DecisionError as e:
                verdict = TaskVerdict(task_id=task.id, verdict=Verdict.INDETERMINATE,
                                      score=0.0, reason=f"{type(e).__name__}: {e}")
            task_root = f"{root}/{view}/{task.id}"
            verdict.artifact_paths = {
                "crop": f"{task_root}/crop.png",
                "overlay": f"{task_root}/overlay.png",
                "verdict": f"{task_root}/verdict.json",
            }
            self.store.put(verdict.artifact_paths["crop"], encode_png(crop_img))
            self.store.put(verdict.artifact_paths["overlay"],
                           encode_png(_overlay(crop_img, verdict.verdict)))
            self.store.put(verdict.artifact_paths["verdict"],
                           json.dumps(verdict_to_dict(verdict), indent=2).encode())
            verdicts.append(verdict)

        result = InspectionResult(
            result_id=result_id, unit_id=unit_id, profile_id=profile.id,
            profile_version=profile.version, timestamp=timestamp,
            transforms=transforms, verdicts=verdicts,
            overall=overall_verdict(verdicts))
        self.store.put(f"{root}/result.json", serialize_result(result).encode())
        self.index.append(record_for(result, root))
        return result

    # -- results ------------------------------------------------------------

    def load_result(self, result_id: str) -> InspectionResult:
        rec = self.index.get(result_id)
        if rec is not None:
            return parse_result(self.store.get(f"{rec.root}/result.json").decode())
        for key in self.store.list(RESULTS_PREFIX + "/"):
            if key.endswith(f"/{result_id}/result.json"):
                return parse_result(self.store.get(key).decode())
        raise UnknownResult(result_id)

    def query_results(self, flt=None, cursor=None, limit: int = 50):
        return self.index.query(flt, cursor, limit)

    # -- feedback loop ------------------------------------------------------

    def _feedback_pending(self, task_id: str) -> int:
        key = f"feedback/{task_id}/_pending.json"
        if not self.store.exists(key):
            return 0
        return int(json.loads(self.store.get(key))["count"])

    def _set_feedback_pending(self, task_id: str, count: int):
        self.store.put(f"feedback/{task_id}/_pending.json",
                       json.dumps({"count": count}).encode())

    def submit_feedback(self, item: FeedbackItem,
                        profile: Profile | None = None) -> tuple[str, str | None]:
        """Store the labeled crop, fold it into the task's dataset, and write
        a retrain marker once the batch size is reached.

        Returns (stored crop path, marker job id or None).
        """
        result = self.load_result(item.result_id)
        verdict = next((v for v in result.verdicts if v.task_id == item.task_id), None)
        if verdict is None:
            raise UnknownTask(f"result {item.result_id} has no task {item.task_id}")
        crop_key = verdict.artifact_paths.get("crop")
        if not crop_key or not self.store.exists(crop_key):
            raise UnknownResult(f"crop artifact missing for {item.result_id}/{item.task_id}")

        side = "good" if item.operator_label == FeedbackLabel.GOOD else "bad"
        item_id = uuid.uuid4().hex[:12]
        stored = f"feedback/{item.task_id}/{side}/{item_id}.png"
        self.store.put(stored, self.store.get(crop_key))
        item.image_path = stored

        task = None
        if profile is None and result.profile_id:
            try:
                profile = self.load_profile(result.profile_id)
            except UnknownProfile:
                profile = None
        if profile is not None:
            task = next((t for t in profile.tasks if t.id == item.task_id), None)

        dataset = f"datasets/{item.task_id}"
        self._merge_feedback_into_dataset(task, verdict, crop_key, dataset, side)

        pending = self._feedback_pending(item.task_id) + 1
        batch = self.retrain_batch_size
        if task is not None:
            batch = int((task.params or {}).get("retrain_batch_size", batch))
        job_id = None
        if pending >= batch:
            trainer = "template_library"
            if task is not None and task.kind == TaskKind.MASK_INTERSECTION_SEATING:
                trainer = "seating_threshold"
            hyper = {"trainer": trainer}
            if task is not None:
                hyper.update((task.params or {}).get("training", {}))
            job_id = write_marker(
                self.store, item.task_id, dataset, hyperparameters=hyper,
                idempotency_key=f"feedback-{item.task_id}-{item_id}",
                requested_by="feedback-loop", queue_prefix=self.queue_prefix)
            pending = 0
        self._set_feedback_pending(item.task_id, pending)
        return stored, job_id

    def _merge_feedback_into_dataset(self, task, verdict, crop_key: str,
                                     dataset: str, side: str):
        kind = task.kind if task is not None else TaskKind.TEMPLATE_PRESENCE
        if kind == TaskKind.MASK_INTERSECTION_SEATING:
            # the verdict's score is the measured intersection area
            areas_key = f"{dataset}/areas.json"
            areas = (json.loads(self.store.get(areas_key))
                     if self.store.exists(areas_key) else {"good": [], "bad": []})
            areas[side].append(verdict.score)
            self.store.put(areas_key, json.dumps(areas, indent=2).encode())
        else:
            label = "present" if side == "good" else "absent"
            name = crop_key.rsplit("/", 1)[-1]
            self.store.put(f"{dataset}/{label}/fb-{uuid.uuid4().hex[:8]}-{name}",
                           self.store.get(crop_key))
