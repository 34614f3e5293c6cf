"""Defect deciders: template KNN, mask-intersection seating, arrow direction,
latch state, exposed-area flagging, and the evaluation metrics they share.

Similarity between patches is zero-normalized cross correlation (ZNCC), which
is invariant to affine intensity changes and bounded in [-1, 1].
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from skimage.morphology import convex_hull_image

from .core import ImageBuffer, Mask, TaskVerdict, Verdict, utc_now
from .imaging import color_transfer, to_grayscale


class DecisionError(Exception):
    pass


class DimensionMismatch(DecisionError):
    pass


class DegenerateTemplate(DecisionError):
    pass


class TemplateLargerThanRegion(DecisionError):
    pass


class EmptyLibrarySide(DecisionError):
    pass


class UnknownClass(DecisionError):
    pass


class NotSeparable(DecisionError):
    pass


class EmptyClass(DecisionError):
    pass


class MissingKeypoint(DecisionError):
    pass


class TemplateLabel(str, enum.Enum):
    PRESENT = "PRESENT"
    ABSENT = "ABSENT"


@dataclass
class Template:
    image: ImageBuffer
    label: TemplateLabel
    id: str
    added_at: str = ""

    def __post_init__(self):
        if not self.added_at:
            self.added_at = utc_now()


@dataclass
class TemplateLibrary:
    task_id: str
    templates: list[Template] = field(default_factory=list)
    version: int = 1

    def add(self, template: Template):
        gray = _gray2d(template.image)
        if np.all(gray == gray.flat[0]):
            raise DegenerateTemplate(f"template {template.id} is constant")
        self.templates.append(template)

    def count(self, label: TemplateLabel) -> int:
        return sum(1 for t in self.templates if t.label == label)


@dataclass
class KnnParams:
    k: int = 5
    probability_threshold: float = 0.5
    search_region: tuple[int, int, int, int] | None = None  # rect within the crop

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not 0.0 < self.probability_threshold < 1.0:
            raise ValueError("probability_threshold must be in (0, 1)")


@dataclass
class SeatingParams:
    upper_class: str = "upper"
    lower_class: str = "lower"
    intersection_threshold: float = 5.7  # percent of crop pixels
    calibrated_from: str = ""

    def __post_init__(self):
        if self.intersection_threshold <= 0:
            raise ValueError("intersection_threshold must be > 0")


@dataclass
class MetricsReport:
    tp: int
    fp: int
    fn: int
    tn: int
    precision: float
    recall: float
    f1: float
    per_class: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn,
            "precision": self.precision, "recall": self.recall, "f1": self.f1,
            "per_class": self.per_class,
        }


WEIGHT_FLOOR = 1e-6


def _gray2d(img: ImageBuffer) -> np.ndarray:
    if img.channels == 3:
        img = to_grayscale(img)
    return img.pixels[:, :, 0]


def _ncc_arrays(patch: np.ndarray, template: np.ndarray) -> float:
    p = patch.astype(np.float64)
    t = template.astype(np.float64)
    tm = t.mean()
    tc = t - tm
    tss = (tc * tc).sum()
    if tss == 0.0:
        raise DegenerateTemplate("template has zero variance")
    pm = p.mean()
    pc = p - pm
    pss = (pc * pc).sum()
    if pss == 0.0:
        return 0.0
    return float((pc * tc).sum() / np.sqrt(pss * tss))


def ncc(patch: ImageBuffer, template: ImageBuffer) -> float:
    """ZNCC of two equal-size single-channel patches; 0 for a constant patch."""
    p = _gray2d(patch)
    t = _gray2d(template)
    if p.shape != t.shape:
        raise DimensionMismatch(f"patch {p.shape} vs template {t.shape}")
    return _ncc_arrays(p, t)


def match_template(image: ImageBuffer, template: ImageBuffer,
                   region: tuple[int, int, int, int] | None = None
                   ) -> tuple[float, tuple[int, int]]:
    """Exhaustive sliding-window ZNCC maximum over all placements in region.

    Ties break toward smaller y, then smaller x. Returns (best_score, (x, y))
    with the placement in image coordinates.
    """
    img = _gray2d(image)
    tpl = _gray2d(template)
    th, tw = tpl.shape
    if region is None:
        region = (0, 0, img.shape[1], img.shape[0])
    rx, ry, rw, rh = region
    if rx < 0 or ry < 0 or rx + rw > img.shape[1] or ry + rh > img.shape[0]:
        raise ValueError(f"region {region} outside image {img.shape[1]}x{img.shape[0]}")
    if tw > rw or th > rh:
        raise TemplateLargerThanRegion(
            f"template {tw}x{th} does not fit in region {rw}x{rh}")

    t = tpl.astype(np.float64)
    tm = t.mean()
    tc = t - tm
    tss = (tc * tc).sum()
    if tss == 0.0:
        raise DegenerateTemplate("template has zero variance")

    best_score = -np.inf
    best_xy = (rx, ry)
    for y in range(ry, ry + rh - th + 1):
        for x in range(rx, rx + rw - tw + 1):
            p = img[y:y + th, x:x + tw].astype(np.float64)
            pm = p.mean()
            pc = p - pm
            pss = (pc * pc).sum()
            score = 0.0 if pss == 0.0 else float((pc * tc).sum() / np.sqrt(pss * tss))
            if score > best_score:
                best_score = score
                best_xy = (x, y)
    return best_score, best_xy


def weighted_probability(scored: list[tuple[float, TemplateLabel]]) -> float:
    """Probability of PRESENT from (similarity, label) pairs; each pair votes
    with weight max(similarity, 1e-6) so non-positive scores cannot produce
    negative probabilities."""
    weights = [max(s, WEIGHT_FLOOR) for s, _ in scored]
    total = sum(weights)
    present = sum(w for w, (_, lab) in zip(weights, scored) if lab == TemplateLabel.PRESENT)
    return present / total


def knn_classify(crop: ImageBuffer, lib: TemplateLibrary, params: KnnParams,
                 golden: ImageBuffer | None = None,
                 color_align: bool = True) -> tuple[TemplateLabel, float, list[dict]]:
    """Similarity-weighted KNN over the template library.

    The crop is first color-aligned to the golden reference, then each
    template's best sliding-window ZNCC inside the search region becomes its
    similarity; the top-k templates vote with weight max(score, 1e-6).
    Returns (label, probability of PRESENT, evidence rows).
    """
    for side in (TemplateLabel.PRESENT, TemplateLabel.ABSENT):
        if lib.count(side) == 0:
            raise EmptyLibrarySide(f"library {lib.task_id} has no {side.value} templates")

    aligned = crop
    if color_align and golden is not None and crop.channels == 3 and golden.channels == 3:
        aligned = color_transfer(crop, golden)

    scored = []
    for t in lib.templates:
        score, xy = match_template(aligned, t.image, params.search_region)
        scored.append((score, t, xy))
    scored.sort(key=lambda s: (-s[0], s[1].id))
    top = scored[:params.k]

    probability = weighted_probability([(s, t.label) for s, t, _ in top])
    label = TemplateLabel.PRESENT if probability >= params.probability_threshold else TemplateLabel.ABSENT
    evidence = [
        {"template_id": t.id, "label": t.label.value, "score": s, "xy": list(xy)}
        for s, t, xy in top
    ]
    return label, probability, evidence


# ---------------------------------------------------------------------------
# Mask-based deciders

def _class_index(mask: Mask, name: str) -> int:
    try:
        return mask.class_names.index(name)
    except ValueError:
        raise UnknownClass(f"class {name!r} not in {mask.class_names}") from None


def mask_intersection_area(mask: Mask, class_a: str, class_b: str) -> float:
    """Overlap between class_a's convex fill and class_b's raw pixels, as a
    percentage of the crop's pixel count.

    Labels are exclusive per pixel, so the geometric overlap between the two
    connector parts is measured against the filled extent of class_a.
    """
    ia = _class_index(mask, class_a)
    ib = _class_index(mask, class_b)
    region_a = mask.labels == ia
    region_b = mask.labels == ib
    if not region_a.any() or not region_b.any():
        return 0.0
    hull_a = convex_hull_image(region_a)
    count = int(np.logical_and(hull_a, region_b).sum())
    return 100.0 * count / mask.labels.size


def seating_decision(area: float, params: SeatingParams, task_id: str = "") -> TaskVerdict:
    """Seated (PASS) iff the intersection area reaches the calibrated threshold."""
    verdict = Verdict.PASS if area >= params.intersection_threshold else Verdict.FAIL
    return TaskVerdict(task_id=task_id, verdict=verdict, score=float(area),
                       evidence={"threshold": params.intersection_threshold})


def calibrate_threshold(good_areas: list[float], bad_areas: list[float],
                        upper_class: str = "upper", lower_class: str = "lower",
                        calibrated_from: str = "") -> SeatingParams:
    """Midpoint threshold between the worst good and best bad intersection areas."""
    if not good_areas or not bad_areas:
        raise EmptyClass("both good and bad area lists are required")
    lo_good = min(good_areas)
    hi_bad = max(bad_areas)
    if hi_bad >= lo_good:
        raise NotSeparable(f"max bad area {hi_bad} >= min good area {lo_good}")
    return SeatingParams(
        upper_class=upper_class,
        lower_class=lower_class,
        intersection_threshold=(lo_good + hi_bad) / 2.0,
        calibrated_from=calibrated_from,
    )


def arrow_direction(preds: list, expected_dir: tuple[float, float],
                    tol_deg: float, task_id: str = "") -> TaskVerdict:
    """Compare the tail->head arrow vector with the expected direction.

    preds are KeypointPrediction-like objects with .name/.x/.y; requires
    arrow_tail and arrow_head.
    """
    by_name = {p.name: p for p in preds}
    for need in ("arrow_tail", "arrow_head"):
        if need not in by_name:
            raise MissingKeypoint(f"prediction {need!r} missing")
    tail, head = by_name["arrow_tail"], by_name["arrow_head"]
    vx, vy = head.x - tail.x, head.y - tail.y
    norm = math.hypot(vx, vy)
    if norm < 1.0:
        return TaskVerdict(task_id=task_id, verdict=Verdict.INDETERMINATE, score=0.0,
                           reason="ZeroLengthVector")
    ex, ey = expected_dir
    enorm = math.hypot(ex, ey)
    if enorm == 0:
        raise ValueError("expected_dir must be nonzero")
    cosang = (vx * ex + vy * ey) / (norm * enorm)
    angle = math.degrees(math.acos(max(-1.0, min(1.0, cosang))))
    verdict = Verdict.PASS if angle <= tol_deg else Verdict.FAIL
    return TaskVerdict(task_id=task_id, verdict=verdict, score=angle,
                       evidence={"tolerance_deg": tol_deg})


@dataclass
class LatchVerdict:
    rect: tuple[int, int, int, int]
    verdict: Verdict
    state: str  # "open" | "closed" | "unknown"
    closed_fraction: float
    open_fraction: float


def latch_state(mask: Mask, latch_rects: list[tuple[int, int, int, int]],
                open_class: str = "open", closed_class: str = "closed"
                ) -> list[LatchVerdict]:
    """Per latch rect: majority class of open vs closed pixels; INDETERMINATE
    when neither class covers at least 1% of the rect."""
    io = _class_index(mask, open_class)
    ic = _class_index(mask, closed_class)
    out = []
    for rect in latch_rects:
        x, y, w, h = rect
        if x < 0 or y < 0 or x + w > mask.width or y + h > mask.height:
            raise ValueError(f"latch rect {rect} outside mask {mask.width}x{mask.height}")
        window = mask.labels[y:y + h, x:x + w]
        area = window.size
        n_open = int((window == io).sum())
        n_closed = int((window == ic).sum())
        fo, fc = n_open / area, n_closed / area
        if n_open < 0.01 * area and n_closed < 0.01 * area:
            out.append(LatchVerdict(rect, Verdict.INDETERMINATE, "unknown", fc, fo))
        elif n_closed > n_open:
            out.append(LatchVerdict(rect, Verdict.PASS, "closed", fc, fo))
        else:
            # ties fail safe toward "open"
            out.append(LatchVerdict(rect, Verdict.FAIL, "open", fc, fo))
    return out


def exposed_area_flag(mask: Mask, exposed_class: str, min_fraction: float = 0.002,
                      task_id: str = "") -> TaskVerdict:
    """Flag (FAIL) when the exposed class covers at least min_fraction of the crop."""
    ie = _class_index(mask, exposed_class)
    fraction = float((mask.labels == ie).sum()) / mask.labels.size
    verdict = Verdict.FAIL if fraction >= min_fraction else Verdict.PASS
    return TaskVerdict(task_id=task_id, verdict=verdict, score=fraction,
                       evidence={"min_fraction": min_fraction})


def compute_metrics(predictions: list[tuple[Verdict, Verdict]]) -> MetricsReport:
    """Confusion counts over (predicted, truth) pairs with FAIL as the positive
    class; predicted INDETERMINATE counts as FAIL (fail-safe)."""
    if not predictions:
        raise ValueError("predictions list is empty")
    tp = fp = fn = tn = 0
    for pred, truth in predictions:
        p_fail = pred != Verdict.PASS
        t_fail = truth != Verdict.PASS
        if p_fail and t_fail:
            tp += 1
        elif p_fail and not t_fail:
            fp += 1
        elif not p_fail and t_fail:
            fn += 1
        else:
            tn += 1
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    per_class = {
        "FAIL": {"tp": tp, "fp": fp, "fn": fn, "tn": tn},
        "PASS": {"tp": tn, "fp": fn, "fn": fp, "tn": tp},
    }
    return MetricsReport(tp=tp, fp=fp, fn=fn, tn=tn,
                         precision=precision, recall=recall, f1=f1,
                         per_class=per_class)
