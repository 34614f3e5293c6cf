"""Acceptance suite: every release criterion as one test with a pass line.

All fixtures come from the deterministic generator (fixed seeds); nothing here
depends on the web console or any external service.
"""
import json
import threading
import time
from pathlib import Path

import numpy as np
import pytest

from aoi.align import RansacConfig, estimate_transform
from aoi.core import FeedbackItem, FeedbackLabel, ImageBuffer, Verdict, parse_profile, parse_result, result_to_dict
from aoi.decision import (
    KnnParams,
    arrow_direction,
    calibrate_threshold,
    compute_metrics,
    exposed_area_flag,
    latch_state,
    mask_intersection_area,
    match_template,
    ncc,
    seating_decision,
)
from aoi.gateway.fixtures import generate_fixtures
from aoi.imaging import (
    AugmentationSpec,
    Transform2D,
    augment,
    color_transfer,
    decode_mask_png,
    decode_png,
    encode_png,
    lab_stats,
)
from aoi.mlops import (
    ModelRegistry,
    Scheduler,
    build_library,
    builtin_trainer_steps,
    evaluate_library,
    load_template_dataset,
    run_training_pipeline,
    write_marker,
)
from aoi.pipeline import InspectionEngine, LocalStore, rebuild_index
from aoi.segbackend import FixtureBackend, KeypointPrediction, ModelRef
from helpers import textured_image

SEED = 7


def report(n: int, text: str):
    print(f"[criterion {n:2d}] {text}: PASS")


@pytest.fixture(scope="module")
def fixture_tree(tmp_path_factory):
    root = tmp_path_factory.mktemp("fixtures")
    manifest = generate_fixtures(root, seed=SEED)
    return root, manifest


# ---------------------------------------------------------------------------
# 1. Alignment recovery

def test_criterion_1_alignment_recovery(fixture_tree):
    _, manifest = fixture_tree
    cases = manifest["alignment"]
    assert len(cases) == 100
    size = manifest["spec"]["image_size"]
    corners = np.array([[0, 0], [size, 0], [0, size], [size, size]], float)

    start = time.monotonic()
    good = 0
    for case in cases:
        truth = Transform2D.similarity(
            angle_deg=case["angle_deg"], tx=case["tx"], ty=case["ty"],
            center=tuple(case["center"]))
        pairs = np.hstack([np.array(case["src"]), np.array(case["dst"])])
        est = estimate_transform(pairs, RansacConfig(model="similarity")).transform
        disp = np.linalg.norm(est.apply(corners) - truth.apply(corners), axis=1)
        if disp.max() < 2.0:
            good += 1
    elapsed = time.monotonic() - start

    assert good >= 95, f"only {good}/100 trials within 2 px"
    assert elapsed < 60.0, f"suite took {elapsed:.1f} s"
    report(1, f"{good}/100 trials < 2 px corner displacement in {elapsed:.1f} s")


# ---------------------------------------------------------------------------
# 2. Seating threshold reproduction

def test_criterion_2_seating_reproduction(fixture_tree):
    root, manifest = fixture_tree
    items = manifest["seating"]
    assert len(items) == 160

    measured = {}
    for item in items:
        base = root / "seating" / item["side"] / item["id"]
        meta = json.loads((base.parent / f"{item['id']}.mask.json").read_text())
        mask = decode_mask_png((base.parent / f"{item['id']}.mask.png").read_bytes(),
                               meta["class_names"])
        area = mask_intersection_area(mask, meta["upper_class"], meta["lower_class"])
        assert area == pytest.approx(item["area"], abs=1e-9)
        measured[item["id"]] = area

    train = [i for i in items if i["split"] == "train"]
    val = [i for i in items if i["split"] == "validation"]
    params = calibrate_threshold(
        [measured[i["id"]] for i in train if i["side"] == "good"],
        [measured[i["id"]] for i in train if i["side"] == "bad"])
    max_bad = max(measured[i["id"]] for i in train if i["side"] == "bad")
    min_good = min(measured[i["id"]] for i in train if i["side"] == "good")
    assert min_good == pytest.approx(5.95)
    assert params.intersection_threshold == pytest.approx(5.7)
    assert max_bad < params.intersection_threshold < min_good

    preds = [(seating_decision(measured[i["id"]], params).verdict,
              Verdict(i["truth"])) for i in val]
    metrics = compute_metrics(preds)
    assert metrics.f1 == 1.0
    assert metrics.fn == 0
    report(2, f"threshold {params.intersection_threshold:.2f}, "
              f"validation F1 {metrics.f1:.1f}, FN {metrics.fn}")


# ---------------------------------------------------------------------------
# 3. Template KNN with color alignment

def test_criterion_3_template_knn(fixture_tree):
    root, manifest = fixture_tree
    assert len(manifest["templates"]) == 130
    store = LocalStore(root)
    originals = load_template_dataset(store, "templates")
    assert len(originals) == 130
    reference = decode_png((root / "templates" / "golden.png").read_bytes())
    lib = build_library(originals, task_id="tpl")
    params = KnnParams(k=5)

    with_transfer = evaluate_library(lib, originals, reference, params=params)
    without = evaluate_library(lib, originals, None, params=params)
    acc = lambda m: (m.tp + m.tn) / (m.tp + m.fp + m.fn + m.tn)
    assert acc(with_transfer) == 1.0
    assert acc(without) < 1.0
    report(3, f"LOO accuracy {acc(with_transfer):.4f} with color transfer, "
              f"{acc(without):.4f} without")


# ---------------------------------------------------------------------------
# 4. NCC oracle equivalence

def oracle_match(image, template, region):
    """Independent exhaustive search built only on the pairwise ncc call."""
    th, tw = template.height, template.width
    rx, ry, rw, rh = region
    best = (-np.inf, (rx, ry))
    for y in range(ry, ry + rh - th + 1):
        for x in range(rx, rx + rw - tw + 1):
            patch = ImageBuffer(image.pixels[y:y + th, x:x + tw].copy())
            s = ncc(patch, template)
            if s > best[0]:
                best = (s, (x, y))
    return best


def test_criterion_4_ncc_oracle_equivalence():
    rng = np.random.default_rng(SEED)
    for _ in range(1000):
        ih, iw = int(rng.integers(8, 17)), int(rng.integers(8, 17))
        th, tw = int(rng.integers(3, 7)), int(rng.integers(3, 7))
        image = ImageBuffer(rng.integers(0, 256, (ih, iw, 1), dtype=np.uint8))
        template = ImageBuffer(rng.integers(0, 256, (th, tw, 1), dtype=np.uint8))
        rw = int(rng.integers(tw, iw + 1))
        rh = int(rng.integers(th, ih + 1))
        rx = int(rng.integers(0, iw - rw + 1))
        ry = int(rng.integers(0, ih - rh + 1))
        got = match_template(image, template, (rx, ry, rw, rh))
        want = oracle_match(image, template, (rx, ry, rw, rh))
        assert got == want
    report(4, "match_template equals the exhaustive oracle on 1000 instances")


# ---------------------------------------------------------------------------
# 5. Color transfer statistics

def test_criterion_5_color_transfer():
    from helpers import rand_image

    rng = np.random.default_rng(SEED)
    worst_stat = 0.0
    for i in range(50):
        src = rand_image(rng, 48, 48, lo=30, hi=220)
        ref = rand_image(rng, 48, 48, lo=40, hi=200)
        out = color_transfer(src, ref)
        om, os_ = lab_stats(out)
        rm, rs = lab_stats(ref)
        worst_stat = max(worst_stat, np.abs(om - rm).max(), np.abs(os_ - rs).max())
    assert worst_stat < 1e-3

    same = textured_image(11, w=48, h=48)
    drift = np.abs(color_transfer(same, same).pixels.astype(int)
                   - same.pixels.astype(int)).max()
    assert drift <= 1
    report(5, f"50 pairs within {worst_stat:.1e} of reference stats, "
              f"self-transfer drift {drift} level(s)")


# ---------------------------------------------------------------------------
# 6. Augmentation arithmetic

def test_criterion_6_augmentation_determinism():
    img = textured_image(13, w=40, h=40)
    spec = AugmentationSpec(seed=SEED)
    variants = augment(img, spec)
    again = augment(img, spec)
    assert len(variants) == 10
    assert [bytes(encode_png(v)) for v in variants] \
        == [bytes(encode_png(v)) for v in again]
    report(6, "default spec yields exactly 10 byte-identical variants per seed")


# ---------------------------------------------------------------------------
# 7. Scheduler / registry properties

def test_criterion_7_scheduler_and_registry(tmp_path):
    store = LocalStore(tmp_path / "store")

    # one job per idempotency key
    sched = Scheduler(store, lambda job: None, sleep=lambda s: None)
    write_marker(store, "t1", "data/t1", idempotency_key="same")
    write_marker(store, "t1", "data/t1", idempotency_key="same")
    assert len(sched.poll_once()) == 1

    # flaky executor: fail, fail, succeed -> 3 attempts then SUCCEEDED
    attempts = []

    def flaky(job):
        attempts.append(job.job_id)
        if len(attempts) < 3:
            raise RuntimeError("transient")

    sched = Scheduler(store, flaky, sleep=lambda s: None)
    write_marker(store, "t2", "data/t2", idempotency_key="flaky")
    jobs = sched.poll_once()
    assert len(attempts) == 3
    assert jobs[0].state.value == "SUCCEEDED"

    # concurrent registrations: strictly increasing, gap-free versions
    registry = ModelRegistry(store)
    store.put("artifacts/x/seating.json", b"{}")
    errors = []

    def register():
        try:
            for _ in range(5):
                registry.register_model("t3", {"f1": 1.0}, "artifacts/x")
        except Exception as e:  # pragma: no cover
            errors.append(e)

    threads = [threading.Thread(target=register) for _ in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not errors
    versions = sorted(m.version for m in registry.list_versions("t3"))
    assert versions == list(range(1, 21))

    # at most one PRODUCTION per task after randomized promote sequences
    rng = np.random.default_rng(SEED)
    for _ in range(100):
        version = int(rng.integers(1, 21))
        target = "PRODUCTION" if rng.random() < 0.7 else "STAGING"
        registry.promote("t3", version, target)
        live = [m for m in registry.list_versions("t3")
                if m.status.value == "PRODUCTION"]
        assert len(live) <= 1
    report(7, "idempotent admission, 3-attempt recovery, gap-free versions, "
              "single production pointer")


# ---------------------------------------------------------------------------
# 8 + 10. End-to-end feedback loop and persistence round-trips

@pytest.fixture(scope="module")
def feedback_loop(fixture_tree, tmp_path_factory):
    root, manifest = fixture_tree
    info = manifest["e2e"]
    work = tmp_path_factory.mktemp("e2e")
    store = LocalStore(work / "store")
    registry = ModelRegistry(store)
    backend_root = work / "backend"
    engine = InspectionEngine(
        store, registry=registry,
        model_refs={info["task_id"]: ModelRef(info["task_id"],
                                              fixture_root=str(backend_root))},
        retrain_batch_size=1)

    e2e = root / "e2e"
    profile = parse_profile((e2e / "profile.json").read_text())
    store.put(f"profiles/{profile.id}/profile.json",
              (e2e / "profile.json").read_bytes())
    store.put(profile.golden_images["top"], (e2e / "golden" / "top.png").read_bytes())
    dataset = f"datasets/{info['task_id']}"
    store.put(f"{dataset}/areas.json",
              (e2e / "datasets" / info["task_id"] / "areas.json").read_bytes())

    def run_job(job):
        return run_training_pipeline(job, builtin_trainer_steps(store.root),
                                     store, registry)

    scheduler = Scheduler(store, run_job, sleep=lambda s: None)

    start = time.monotonic()
    # initial training round: calibrate v1 from the shipped dataset
    write_marker(store, info["task_id"], dataset,
                 hyperparameters={"trainer": "seating_threshold"},
                 idempotency_key="bootstrap")
    scheduler.poll_once()
    v1 = registry.list_versions(info["task_id"])[-1]
    registry.promote(info["task_id"], v1.version, "PRODUCTION",
                     policy=("accuracy_gate", 0.95))

    frame = decode_png((e2e / "frames" / info["unit_id"] / "top.png").read_bytes())
    meta = json.loads((e2e / "boundary.mask.json").read_text())
    boundary = decode_mask_png((e2e / "boundary.mask.png").read_bytes(),
                               meta["class_names"])

    # discover the deterministic crop, then attach its oracle mask
    probe = engine.run_inspection(info["unit_id"], {"top": frame}, profile)
    verdict = next(v for v in probe.verdicts if v.task_id == info["task_id"])
    crop_img = decode_png(store.get(verdict.artifact_paths["crop"]))
    FixtureBackend(backend_root).register_mask(info["task_id"], crop_img, boundary)

    before = engine.run_inspection(info["unit_id"], {"top": frame}, profile)
    _, job_id = engine.submit_feedback(FeedbackItem(
        result_id=before.result_id, task_id=info["task_id"],
        operator_label=FeedbackLabel.BAD, image_path=""))
    assert job_id is not None
    scheduler.poll_once()
    v2 = registry.list_versions(info["task_id"])[-1]
    registry.promote(info["task_id"], v2.version, "PRODUCTION",
                     policy=("accuracy_gate", 0.95))
    after = engine.run_inspection(info["unit_id"], {"top": frame}, profile)
    elapsed = time.monotonic() - start
    return {"engine": engine, "store": store, "registry": registry,
            "info": info, "before": before, "after": after,
            "v1": v1, "v2": v2, "elapsed": elapsed}


def test_criterion_8_feedback_loop_flips_boundary_case(feedback_loop):
    fl = feedback_loop
    info = fl["info"]
    task_verdict = lambda r: next(v for v in r.verdicts
                                  if v.task_id == info["task_id"])
    before, after = task_verdict(fl["before"]), task_verdict(fl["after"])

    assert before.verdict == Verdict.PASS
    assert before.score == pytest.approx(info["boundary_area"])
    assert before.evidence["threshold"] == pytest.approx(info["initial_threshold"])

    assert fl["v2"].version == fl["v1"].version + 1
    assert after.verdict == Verdict.FAIL
    assert after.evidence["model_version"] == fl["v2"].version
    assert after.evidence["threshold"] == pytest.approx(
        info["threshold_after_feedback"])
    assert fl["elapsed"] < 30.0
    report(8, f"boundary case flipped PASS -> FAIL under v{fl['v2'].version} "
              f"in {fl['elapsed']:.1f} s")


def test_criterion_10_persistence_round_trips(feedback_loop):
    fl = feedback_loop
    engine, store = fl["engine"], fl["store"]

    profile = engine.load_profile(fl["info"]["profile_id"])
    assert parse_profile(store.get(
        f"profiles/{profile.id}/profile.json").decode()).id == profile.id

    for result in (fl["before"], fl["after"]):
        root = next(k for k in store.list("inspections/")
                    if k.endswith(f"{result.result_id}/result.json"))
        stored = parse_result(store.get(root).decode())
        assert result_to_dict(stored) == result_to_dict(result)

    rebuilt = rebuild_index(store)
    key = lambda r: r.result_id
    assert [r.to_dict() for r in sorted(rebuilt.all_records(), key=key)] \
        == [r.to_dict() for r in sorted(engine.index.all_records(), key=key)]
    report(10, "documents parse back field-exact; rebuilt index matches live")


# ---------------------------------------------------------------------------
# 9. Keypoint / latch / exposed-area deciders

def test_criterion_9_simple_deciders(fixture_tree):
    root, manifest = fixture_tree

    for case in manifest["arrow"]:
        preds = [KeypointPrediction(name=k["name"], x=k["x"], y=k["y"],
                                    score=k["score"])
                 for k in case["keypoints"]]
        v = arrow_direction(preds, tuple(case["expected_direction"]),
                            case["tolerance_deg"])
        assert v.verdict == Verdict(case["truth"]), case["id"]
    assert Verdict(manifest["arrow"][0]["truth"]) == Verdict.INDETERMINATE

    for case in manifest["latch"]:
        base = root / "deciders" / "latch" / case["id"]
        meta = json.loads(Path(str(base) + ".mask.json").read_text())
        mask = decode_mask_png(Path(str(base) + ".mask.png").read_bytes(),
                               meta["class_names"])
        latches = latch_state(mask, [tuple(r) for r in case["latch_rects"]])
        if any(lv.verdict == Verdict.INDETERMINATE for lv in latches):
            got = Verdict.INDETERMINATE
        elif all(lv.verdict == Verdict.PASS for lv in latches):
            got = Verdict.PASS
        else:
            got = Verdict.FAIL
        assert got == Verdict(case["truth"]), case["id"]
    assert Verdict(manifest["latch"][0]["truth"]) == Verdict.INDETERMINATE

    for case in manifest["exposed"]:
        base = root / "deciders" / "exposed" / case["id"]
        meta = json.loads(Path(str(base) + ".mask.json").read_text())
        mask = decode_mask_png(Path(str(base) + ".mask.png").read_bytes(),
                               meta["class_names"])
        v = exposed_area_flag(mask, case["exposed_class"],
                              min_fraction=case["min_fraction"])
        assert v.verdict == Verdict(case["truth"]), case["id"]
    report(9, "all 60 decider fixtures match ground truth; degenerate cases "
              "are INDETERMINATE")
