"""In-repo trainers: template-library builder with cross-validation and the
seating-threshold calibrator.

The module doubles as an executor-contract program:

    python -m aoi.mlops.trainers --job J --step {preprocess|train|postprocess} \
        --input PREFIX --output PREFIX [--store-root DIR]

so the training driver can run it as a subprocess like any external trainer.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

from ..core import Verdict, utc_now
from ..decision import (
    EmptyClass,
    KnnParams,
    MetricsReport,
    SeatingParams,
    Template,
    TemplateLabel,
    TemplateLibrary,
    calibrate_threshold,
    compute_metrics,
    knn_classify,
    mask_intersection_area,
    seating_decision,
)
from ..imaging import AugmentationSpec, augment, decode_mask_png, decode_png
from .artifacts import library_from_json, library_to_json, seating_to_json

_AUG_SEP = "/aug"


def _origin(template_id: str) -> str:
    return template_id.split(_AUG_SEP, 1)[0]


def load_template_dataset(store, prefix: str):
    """[(id, label, ImageBuffer)] from {prefix}/present/*.png + absent/*.png."""
    prefix = prefix.rstrip("/")
    out = []
    for label in (TemplateLabel.PRESENT, TemplateLabel.ABSENT):
        side = label.value.lower()
        for key in store.list(f"{prefix}/{side}/"):
            if not key.endswith(".png"):
                continue
            item_id = f"{side}/{key.rsplit('/', 1)[-1][:-4]}"
            out.append((item_id, label, decode_png(store.get(key))))
    return out


def build_library(originals, augmentation: AugmentationSpec | None = None,
                  task_id: str = "") -> TemplateLibrary:
    """Library of all originals plus, when requested, their augmented variants
    (ids suffixed `/augN` so variants stay traceable to their origin)."""
    lib = TemplateLibrary(task_id=task_id)
    now = utc_now()
    for item_id, label, img in originals:
        lib.add(Template(image=img, label=label, id=item_id, added_at=now))
        if augmentation is not None:
            for i, var in enumerate(augment(img, augmentation)):
                lib.add(Template(image=var, label=label,
                                 id=f"{item_id}{_AUG_SEP}{i}", added_at=now))
    return lib


def evaluate_library(lib: TemplateLibrary, originals, reference=None,
                     k_fold: int = 0, params: KnnParams | None = None) -> MetricsReport:
    """Cross-validate the library over the original crops.

    Each original is classified by the library with that original's templates
    (and their augmented variants) excluded. k_fold <= 1 means leave-one-out;
    otherwise folds are assigned round-robin over the id-sorted originals.
    ABSENT (missing part) maps to FAIL for the metrics.
    """
    params = params or KnnParams()
    items = sorted(originals, key=lambda o: o[0])
    folds = {item_id: (i % k_fold if k_fold > 1 else i)
             for i, (item_id, _, _) in enumerate(items)}
    pairs = []
    for item_id, truth, img in items:
        held_out = {oid for oid, f in folds.items() if f == folds[item_id]}
        fold_lib = TemplateLibrary(task_id=lib.task_id, templates=[
            t for t in lib.templates if _origin(t.id) not in held_out])
        predicted, _, _ = knn_classify(img, fold_lib, params, golden=reference)
        to_verdict = lambda lab: Verdict.PASS if lab == TemplateLabel.PRESENT else Verdict.FAIL
        pairs.append((to_verdict(predicted), to_verdict(truth)))
    return compute_metrics(pairs)


def train_template_library(store, dataset_prefix: str,
                           augmentation: AugmentationSpec | None = None,
                           k_fold: int = 0, task_id: str = "",
                           params: KnnParams | None = None):
    """Build the library from the labeled crop set and cross-validate it.

    A {dataset_prefix}/golden.png, when present, is the color reference every
    classification is aligned to.
    """
    originals = load_template_dataset(store, dataset_prefix)
    for label in TemplateLabel:
        if not any(lab == label for _, lab, _ in originals):
            raise EmptyClass(f"dataset {dataset_prefix} has no {label.value} crops")
    reference = None
    golden_key = f"{dataset_prefix.rstrip('/')}/golden.png"
    if store.exists(golden_key):
        reference = decode_png(store.get(golden_key))
    lib = build_library(originals, augmentation, task_id=task_id)
    metrics = evaluate_library(lib, originals, reference, k_fold, params)
    return lib, metrics


def load_seating_areas(store, prefix: str) -> tuple[list[float], list[float]]:
    """good/bad intersection areas from {prefix}/areas.json, or computed from
    {prefix}/{good|bad}/*.mask.png (+ sibling .mask.json class names)."""
    prefix = prefix.rstrip("/")
    areas_key = f"{prefix}/areas.json"
    if store.exists(areas_key):
        doc = json.loads(store.get(areas_key))
        return [float(a) for a in doc["good"]], [float(a) for a in doc["bad"]]
    out = {"good": [], "bad": []}
    for side in ("good", "bad"):
        for key in store.list(f"{prefix}/{side}/"):
            if not key.endswith(".mask.png"):
                continue
            meta = json.loads(store.get(key[:-len(".mask.png")] + ".mask.json"))
            mask = decode_mask_png(store.get(key), meta["class_names"])
            out[side].append(mask_intersection_area(
                mask, meta.get("upper_class", "upper"), meta.get("lower_class", "lower")))
    return out["good"], out["bad"]


def train_seating_threshold(store, dataset_prefix: str, upper_class: str = "upper",
                            lower_class: str = "lower"):
    """Calibrate the midpoint threshold and report metrics on the same areas."""
    good, bad = load_seating_areas(store, dataset_prefix)
    params = calibrate_threshold(good, bad, upper_class, lower_class,
                                 calibrated_from=dataset_prefix)
    pairs = ([(seating_decision(a, params).verdict, Verdict.PASS) for a in good]
             + [(seating_decision(a, params).verdict, Verdict.FAIL) for a in bad])
    return params, compute_metrics(pairs)


def metrics_doc(report: MetricsReport) -> dict:
    total = report.tp + report.fp + report.fn + report.tn
    return {
        "f1": report.f1,
        "accuracy": (report.tp + report.tn) / total if total else 0.0,
        "precision": report.precision,
        "recall": report.recall,
        "confusion": {"tp": report.tp, "fp": report.fp,
                      "fn": report.fn, "tn": report.tn},
    }


# ---------------------------------------------------------------------------
# Executor-contract entry point

def _augmentation_from(hyper: dict) -> AugmentationSpec | None:
    spec = hyper.get("augmentation")
    if not spec:
        return None
    return AugmentationSpec(
        count=int(spec.get("count", 10)),
        rotation_deg=float(spec.get("rotation_deg", 15.0)),
        shift_frac=float(spec.get("shift_frac", 0.05)),
        seed=int(spec.get("seed", 0)),
    )


def _run_step(store, job_id: str, step: str, inp: str, out: str) -> int:
    work = f"training-runs/{job_id}"
    job = json.loads(store.get(f"{work}/job.json"))
    hyper = job.get("hyperparameters", {})
    trainer = hyper.get("trainer", "template_library")
    task_id = job["task_id"]

    if trainer == "template_library":
        if step == "preprocess":
            copied = {"present": 0, "absent": 0}
            for side in ("present", "absent"):
                for key in store.list(f"{inp.rstrip('/')}/{side}/"):
                    if key.endswith(".png"):
                        store.put(f"{out}/{side}/{key.rsplit('/', 1)[-1]}", store.get(key))
                        copied[side] += 1
            golden_key = f"{inp.rstrip('/')}/golden.png"
            if store.exists(golden_key):
                store.put(f"{out}/golden.png", store.get(golden_key))
            store.put(f"{out}/manifest.json", json.dumps(copied).encode())
        elif step == "train":
            lib, metrics = train_template_library(
                store, inp, _augmentation_from(hyper),
                k_fold=int(hyper.get("k_fold", 0)), task_id=task_id)
            store.put(f"{out}/library.json", library_to_json(lib))
            store.put(f"{work}/checkpoints/train.json", json.dumps({
                "templates": len(lib.templates), "finished_at": utc_now()}).encode())
        elif step == "postprocess":
            lib = library_from_json(store.get(f"{inp.rstrip('/')}/model/library.json"))
            originals = load_template_dataset(store, f"{inp.rstrip('/')}/preprocessed")
            reference = None
            golden_key = f"{inp.rstrip('/')}/preprocessed/golden.png"
            if store.exists(golden_key):
                reference = decode_png(store.get(golden_key))
            report = evaluate_library(lib, originals, reference,
                                      k_fold=int(hyper.get("k_fold", 0)))
            store.put(f"{out}/metrics.json", json.dumps(metrics_doc(report)).encode())
        else:
            raise ValueError(f"unknown step {step!r}")
        return 0

    if trainer == "seating_threshold":
        if step == "preprocess":
            good, bad = load_seating_areas(store, inp)
            store.put(f"{out}/areas.json", json.dumps({"good": good, "bad": bad}).encode())
            store.put(f"{out}/manifest.json",
                      json.dumps({"good": len(good), "bad": len(bad)}).encode())
        elif step == "train":
            params, _ = train_seating_threshold(
                store, inp,
                upper_class=hyper.get("upper_class", "upper"),
                lower_class=hyper.get("lower_class", "lower"))
            store.put(f"{out}/seating.json", seating_to_json(params))
            store.put(f"{work}/checkpoints/train.json", json.dumps({
                "threshold": params.intersection_threshold,
                "finished_at": utc_now()}).encode())
        elif step == "postprocess":
            _, report = train_seating_threshold(
                store, f"{inp.rstrip('/')}/preprocessed",
                upper_class=hyper.get("upper_class", "upper"),
                lower_class=hyper.get("lower_class", "lower"))
            store.put(f"{out}/metrics.json", json.dumps(metrics_doc(report)).encode())
        else:
            raise ValueError(f"unknown step {step!r}")
        return 0

    raise ValueError(f"unknown trainer {trainer!r}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="aoi-trainer")
    parser.add_argument("--job", required=True)
    parser.add_argument("--step", required=True,
                        choices=["preprocess", "train", "postprocess"])
    parser.add_argument("--input", required=True)
    parser.add_argument("--output", required=True)
    parser.add_argument("--store-root", default=os.environ.get("AOI_STORE_ROOT"))
    args = parser.parse_args(argv)
    if not args.store_root:
        print("no store root: pass --store-root or set AOI_STORE_ROOT", file=sys.stderr)
        return 2
    from ..pipeline.store import LocalStore

    store = LocalStore(args.store_root)
    try:
        return _run_step(store, args.job, args.step, args.input, args.output)
    except Exception as e:
        print(f"{args.step} failed: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
