"""Deterministic synthetic fixture generation.

Renders, as a pure function of (spec, seed): alignment trials with known
transforms and planted outliers, seating masks with exact intersection areas,
a color-cast template library, per-decider oracle cases, and an end-to-end
feedback-loop scenario — plus a ground-truth manifest. Byte-identical output
for the same inputs.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from ..core import ImageBuffer, Mask
from ..imaging import Transform2D, encode_mask_png, encode_png

SEATING_CLASSES = ["background", "upper", "lower"]
LATCH_CLASSES = ["background", "open", "closed"]
EXPOSED_CLASSES = ["background", "exposed"]

SEATING_CROP_W, SEATING_CROP_H = 50, 40  # 2000 px: 1 px = 0.05 % area


@dataclass
class FixtureSpec:
    alignment_trials: int = 100
    seating_crops: int = 160
    templates_present: int = 80
    templates_absent: int = 50
    decider_cases: int = 20
    image_size: int = 256

    def to_dict(self) -> dict:
        return {
            "alignment_trials": self.alignment_trials,
            "seating_crops": self.seating_crops,
            "templates_present": self.templates_present,
            "templates_absent": self.templates_absent,
            "decider_cases": self.decider_cases,
            "image_size": self.image_size,
        }


def _write(path: Path, data: bytes):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)


def _write_json(path: Path, doc):
    _write(path, json.dumps(doc, indent=2, sort_keys=True).encode())


def synthetic_board(rng, w: int, h: int) -> ImageBuffer:
    """Feature-rich scene: smooth noise base with high-contrast components."""
    base = rng.integers(40, 140, size=(h // 8, w // 8)).astype(np.float64)
    img = ndimage.zoom(base, (h / base.shape[0], w / base.shape[1]), order=1)
    img = np.clip(img, 0, 255)
    for _ in range(50):
        rw = int(rng.integers(6, 22))
        rh = int(rng.integers(6, 22))
        x = int(rng.integers(0, w - rw))
        y = int(rng.integers(0, h - rh))
        img[y:y + rh, x:x + rw] = int(rng.integers(0, 256))
    return ImageBuffer(img.astype(np.uint8)[:, :, None])


# ---------------------------------------------------------------------------
# Section generators

def _alignment_cases(rng, n: int, size: int) -> list[dict]:
    cases = []
    half = size / 2
    shift = 0.10 * size
    for i in range(n):
        angle = float(rng.uniform(-15, 15))
        tx = float(rng.uniform(-shift, shift))
        ty = float(rng.uniform(-shift, shift))
        t = Transform2D.similarity(angle_deg=angle, tx=tx, ty=ty, center=(half, half))
        src = rng.uniform(0, size, size=(60, 2))
        dst = t.apply(src) + rng.normal(0, 0.3, size=(60, 2))
        n_out = 18  # 30 % descriptor outliers
        out_idx = rng.choice(60, size=n_out, replace=False)
        dst[out_idx] = rng.uniform(0, size, size=(n_out, 2))
        cases.append({
            "id": f"align-{i:03d}",
            "angle_deg": angle, "tx": tx, "ty": ty, "center": [half, half],
            "src": src.tolist(), "dst": dst.tolist(),
        })
    return cases


def seating_mask_with_area(n_lower: int) -> Mask:
    """U-shaped upper part; exactly n_lower lower-class pixels inside its hull."""
    labels = np.zeros((SEATING_CROP_H, SEATING_CROP_W), np.uint8)
    labels[2:38, 2:5] = 1
    labels[2:38, 45:48] = 1
    region = [(r, c) for r in range(6, 34) for c in range(7, 43)]
    if n_lower > len(region):
        raise ValueError(f"area {n_lower} px exceeds fill capacity {len(region)}")
    for r, c in region[:n_lower]:
        labels[r, c] = 2
    return Mask(labels, list(SEATING_CLASSES))


def _seating_section(out: Path, n: int) -> list[dict]:
    per_side = n // 2
    items = []
    for i in range(per_side):
        for side, area in (("good", 5.95 + 0.05 * (i % 30)),
                           ("bad", 5.45 - 0.05 * (i % 30))):
            area = round(area, 2)
            n_px = round(area * 20)  # 0.05 % per pixel of a 2000 px crop
            mask = seating_mask_with_area(n_px)
            item_id = f"seat-{side}-{i:03d}"
            _write(out / "seating" / side / f"{item_id}.mask.png", encode_mask_png(mask))
            _write_json(out / "seating" / side / f"{item_id}.mask.json", {
                "class_names": SEATING_CLASSES,
                "upper_class": "upper", "lower_class": "lower"})
            items.append({
                "id": item_id, "side": side, "area": area,
                "split": "train" if i % 2 == 0 else "validation",
                "truth": "PASS" if side == "good" else "FAIL",
            })
    return items


def _color_cast(rng, img: np.ndarray) -> np.ndarray:
    """Global per-channel gain + offset: channel mixing makes this not an
    affine map of the grayscale signal, so ZNCC alone cannot undo it."""
    gains = rng.uniform(0.58, 1.5, size=3)
    offsets = rng.uniform(-15, 15, size=3)
    out = img.astype(np.float64) * gains + offsets
    return np.clip(out, 0, 255).astype(np.uint8)


_TPL_RED = np.array((160, 70, 70))
_TPL_GREEN = np.array((70, 160, 70))
_TPL_SIZE = 20
_TPL_PATCH = 16


def _template_crop(bg: np.ndarray, label: str, rng) -> np.ndarray:
    """Gray textured background with a striped chromatic component whose
    stripe phase encodes present vs absent. The classes differ only weakly in
    grayscale, so a color cast can invert their apparent polarity."""
    img = bg.astype(int) + rng.integers(-4, 5, bg.shape)
    x0 = (_TPL_SIZE - _TPL_PATCH) // 2
    for cx in range(_TPL_PATCH):
        stripe = (cx // 3) % 2
        if label == "absent":
            stripe ^= 1
        color = _TPL_RED if stripe == 0 else _TPL_GREEN
        img[x0:x0 + _TPL_PATCH, x0 + cx] = color + rng.integers(-4, 5, (_TPL_PATCH, 3))
    return np.clip(img, 0, 255).astype(np.uint8)


def _template_section(out: Path, rng, n_present: int, n_absent: int) -> list[dict]:
    bg = rng.integers(110, 146, size=(_TPL_SIZE, _TPL_SIZE, 1), dtype=np.uint8)
    bg = np.repeat(bg, 3, axis=2)
    reference = _template_crop(bg, "present", np.random.default_rng(999))
    _write(out / "templates" / "golden.png", encode_png(ImageBuffer(reference)))
    items = []
    for side, count in (("present", n_present), ("absent", n_absent)):
        for i in range(count):
            crop = _color_cast(rng, _template_crop(bg, side, rng))
            item_id = f"tpl-{side}-{i:03d}"
            _write(out / "templates" / side / f"{item_id}.png",
                   encode_png(ImageBuffer(crop)))
            items.append({"id": item_id, "label": side.upper()})
    return items


def _arrow_cases(rng, n: int) -> list[dict]:
    cases = []
    tol = 25.0
    for i in range(n):
        if i == 0:  # zero-length vector: must come back INDETERMINATE
            head = tail = (10.0, 10.0)
            truth = "INDETERMINATE"
        else:
            good = i % 2 == 1
            angle = rng.uniform(-tol + 5, tol - 5) if good else rng.uniform(60, 300)
            tail = (8.0, 15.0)
            head = (tail[0] + 12 * np.cos(np.radians(angle)),
                    tail[1] + 12 * np.sin(np.radians(angle)))
            truth = "PASS" if good else "FAIL"
        cases.append({
            "id": f"arrow-{i:03d}",
            "expected_direction": [1.0, 0.0], "tolerance_deg": tol,
            "keypoints": [
                {"name": "arrow_tail", "x": tail[0], "y": tail[1], "score": 0.95},
                {"name": "arrow_head", "x": float(head[0]), "y": float(head[1]),
                 "score": 0.9},
            ],
            "truth": truth,
        })
    return cases


def _latch_section(out: Path, n: int) -> list[dict]:
    rects = [(5, 5, 12, 10), (33, 5, 12, 10)]
    cases = []
    for i in range(n):
        labels = np.zeros((40, 50), np.uint8)
        if i == 0:
            states = ("background", "background")  # segmentation found nothing
            truth = "INDETERMINATE"
        else:
            pick = ["closed", "open"]
            states = (pick[i % 2], pick[(i // 2) % 2])
            truth = "PASS" if states == ("closed", "closed") else "FAIL"
        for (x, y, w, h), state in zip(rects, states):
            if state != "background":
                labels[y:y + h, x:x + w] = LATCH_CLASSES.index(state)
        mask = Mask(labels, list(LATCH_CLASSES))
        case_id = f"latch-{i:03d}"
        _write(out / "deciders" / "latch" / f"{case_id}.mask.png", encode_mask_png(mask))
        _write_json(out / "deciders" / "latch" / f"{case_id}.mask.json",
                    {"class_names": LATCH_CLASSES})
        cases.append({"id": case_id, "latch_rects": [list(r) for r in rects],
                      "states": list(states), "truth": truth})
    return cases


def _exposed_section(out: Path, n: int) -> list[dict]:
    min_fraction = 0.002  # 4 px of a 2000 px crop
    cases = []
    for i in range(n):
        exposed_px = i % 8  # 0..7 pixels straddles the 4 px flag line
        labels = np.zeros((40, 50), np.uint8)
        labels[20, 10:10 + exposed_px] = 1
        mask = Mask(labels, list(EXPOSED_CLASSES))
        case_id = f"exposed-{i:03d}"
        _write(out / "deciders" / "exposed" / f"{case_id}.mask.png",
               encode_mask_png(mask))
        _write_json(out / "deciders" / "exposed" / f"{case_id}.mask.json",
                    {"class_names": EXPOSED_CLASSES})
        cases.append({
            "id": case_id, "exposed_class": "exposed",
            "min_fraction": min_fraction, "exposed_px": exposed_px,
            "truth": "FAIL" if exposed_px >= 4 else "PASS",
        })
    return cases


def _e2e_section(out: Path, rng, size: int) -> dict:
    golden = synthetic_board(rng, size, size)
    _write(out / "e2e" / "golden" / "top.png", encode_png(golden))
    t = Transform2D.similarity(angle_deg=4.0, tx=0.03 * size, ty=-0.02 * size,
                               center=((size - 1) / 2, (size - 1) / 2))
    from ..imaging import warp

    frame = warp(golden, t, size, size)
    _write(out / "e2e" / "frames" / "unit-001" / "top.png", encode_png(frame))

    roi = (90, 90, SEATING_CROP_W, SEATING_CROP_H)
    profile_doc = {
        "id": "p-e2e", "product_name": "synthetic-board", "version": 1,
        "views": ["top"],
        "golden_images": {"top": "profiles/p-e2e/golden/top.png"},
        "tasks": [{
            "id": "seat-e2e", "kind": "mask_intersection_seating",
            "roi": {"id": "roi-seat", "view": "top", "rect": list(roi),
                    "task_ref": "seat-e2e"},
            "params": {"upper_class": "upper", "lower_class": "lower",
                       "retrain_batch_size": 1,
                       "training": {"trainer": "seating_threshold"}},
            "model_ref": None,
        }],
    }
    _write_json(out / "e2e" / "profile.json", profile_doc)
    initial_areas = {"good": [6.5, 7.0], "bad": [4.0, 4.5]}
    _write_json(out / "e2e" / "datasets" / "seat-e2e" / "areas.json", initial_areas)

    boundary_area = 5.75  # 115 px
    mask = seating_mask_with_area(round(boundary_area * 20))
    _write(out / "e2e" / "boundary.mask.png", encode_mask_png(mask))
    _write_json(out / "e2e" / "boundary.mask.json", {
        "class_names": SEATING_CLASSES,
        "upper_class": "upper", "lower_class": "lower"})
    return {
        "profile_id": "p-e2e", "task_id": "seat-e2e", "view": "top",
        "unit_id": "unit-001", "roi": list(roi),
        "initial_areas": initial_areas,
        "initial_threshold": (6.5 + 4.5) / 2,
        "boundary_area": boundary_area,
        "threshold_after_feedback": (6.5 + boundary_area) / 2,
        "frame_transform": {"angle_deg": 4.0, "tx": 0.03 * size, "ty": -0.02 * size},
    }


def generate_fixtures(out_dir: str | Path, spec: FixtureSpec | None = None,
                      seed: int = 0) -> dict:
    """Render the full fixture tree and return (and write) the manifest."""
    spec = spec or FixtureSpec()
    out = Path(out_dir)
    # independent per-section streams: adding cases to one section never
    # changes another section's content
    section_rng = {name: np.random.default_rng([seed, i]) for i, name in
                   enumerate(["alignment", "arrow", "e2e"])}
    template_rng = np.random.default_rng(seed)

    manifest = {
        "seed": seed,
        "spec": spec.to_dict(),
        "alignment": _alignment_cases(section_rng["alignment"],
                                      spec.alignment_trials, spec.image_size),
        "seating": _seating_section(out, spec.seating_crops),
        "templates": _template_section(out, template_rng, spec.templates_present,
                                       spec.templates_absent),
        "arrow": _arrow_cases(section_rng["arrow"], spec.decider_cases),
        "latch": _latch_section(out, spec.decider_cases),
        "exposed": _exposed_section(out, spec.decider_cases),
        "e2e": _e2e_section(out, section_rng["e2e"], spec.image_size),
    }
    _write_json(out / "manifest.json", manifest)
    return manifest
