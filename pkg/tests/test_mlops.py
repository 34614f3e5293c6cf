import json
import threading
import time

import numpy as np
import pytest

from aoi.core import ImageBuffer
from aoi.decision import EmptyClass
from aoi.imaging import AugmentationSpec, encode_png
from aoi.mlops import (
    GateFailed,
    JobState,
    ModelRegistry,
    ModelStatus,
    Scheduler,
    StepFailed,
    StepSpec,
    StoreMissing,
    TrainingJob,
    UnknownVersion,
    builtin_trainer_steps,
    run_training_pipeline,
    seating_from_json,
    train_template_library,
    write_marker,
)
from aoi.pipeline.store import LocalStore


@pytest.fixture
def store(tmp_path):
    return LocalStore(tmp_path / "store")


@pytest.fixture
def registry(store):
    store.put("artifacts/m/library.json", b"{}")
    return ModelRegistry(store)


def register(reg, task="t1", f1=0.9):
    return reg.register_model(task, {"f1": f1}, "artifacts/m")


# ---------------------------------------------------------------------------
# Registry

class TestRegistry:
    def test_first_registration_is_v1_staging(self, registry):
        mv = register(registry)
        assert (mv.version, mv.status) == (1, ModelStatus.STAGING)

    def test_versions_increment(self, registry):
        register(registry)
        assert register(registry).version == 2

    def test_metrics_round_trip_exact(self, registry):
        register(registry, f1=0.9)
        mv = registry.get("t1", 1)
        assert mv.metrics == {"f1": 0.9}
        assert mv.status == ModelStatus.STAGING
        assert mv.location == "models/t1/1"

    def test_missing_artifact_location(self, registry):
        with pytest.raises(StoreMissing):
            registry.register_model("t1", {}, "nowhere/model")

    def test_artifact_copied_into_version_dir(self, registry, store):
        register(registry)
        assert store.get("models/t1/1/library.json") == b"{}"
        assert json.loads(store.get("models/t1/1/metrics.json")) == {"f1": 0.9}

    def test_promote_archives_previous_production(self, registry):
        register(registry)
        register(registry)
        registry.promote("t1", 1, "PRODUCTION")
        registry.promote("t1", 2, "PRODUCTION")
        statuses = {m.version: m.status for m in registry.list_versions("t1")}
        assert statuses == {1: ModelStatus.ARCHIVED, 2: ModelStatus.PRODUCTION}

    def test_accuracy_gate(self, registry):
        register(registry, f1=0.9)
        with pytest.raises(GateFailed) as exc:
            registry.promote("t1", 1, "PRODUCTION", policy=("accuracy_gate", 0.95))
        assert (exc.value.min_f1, exc.value.actual) == (0.95, 0.9)
        mv = registry.promote("t1", 1, "PRODUCTION", policy=("accuracy_gate", 0.85))
        assert mv.status == ModelStatus.PRODUCTION

    def test_unknown_version(self, registry):
        register(registry)
        with pytest.raises(UnknownVersion):
            registry.promote("t1", 9, "PRODUCTION")

    def test_survives_restart(self, registry, store):
        register(registry)
        register(registry)
        registry.promote("t1", 2, "PRODUCTION")
        reopened = ModelRegistry(store)
        a = [m.to_dict() for m in registry.list_versions("t1")]
        b = [m.to_dict() for m in reopened.list_versions("t1")]
        assert a == b
        assert reopened.production_version("t1").version == 2

    def test_concurrent_registrations_gap_free(self, registry):
        errors = []

        def worker():
            try:
                for _ in range(5):
                    register(registry)
            except Exception as e:  # pragma: no cover
                errors.append(e)

        threads = [threading.Thread(target=worker) for _ in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert errors == []
        versions = [m.version for m in registry.list_versions("t1")]
        assert versions == list(range(1, 21))

    def test_randomized_promotions_single_production(self, registry):
        rng = np.random.default_rng(42)
        for _ in range(5):
            register(registry)
        for _ in range(100):
            v = int(rng.integers(1, 6))
            target = "PRODUCTION" if rng.random() < 0.7 else "STAGING"
            registry.promote("t1", v, target)
            n_prod = sum(m.status == ModelStatus.PRODUCTION
                         for m in registry.list_versions("t1"))
            assert n_prod <= 1


# ---------------------------------------------------------------------------
# Scheduler

class FakeClock:
    def __init__(self):
        self.t = 0.0

    def __call__(self):
        return self.t


def make_scheduler(store, runner, **kw):
    clock = FakeClock()
    slept = []
    sched = Scheduler(store, runner, sleep=slept.append, clock=clock, **kw)
    return sched, clock, slept


class TestScheduler:
    def test_one_marker_one_succeeded_job(self, store):
        sched, _, _ = make_scheduler(store, lambda job: None)
        job_id = write_marker(store, "t1", "data/t1", idempotency_key="k1")
        jobs = sched.poll_once()
        assert len(jobs) == 1
        assert jobs[0].job_id == job_id
        assert jobs[0].state == JobState.SUCCEEDED
        assert store.exists(f"training-queue/done/t1/{job_id}/_SUBMIT.json")
        persisted = json.loads(store.get(f"training-queue/jobs/{job_id}.json"))
        assert persisted["state"] == "SUCCEEDED"

    def test_duplicate_idempotency_key_runs_once(self, store):
        runs = []
        sched, _, _ = make_scheduler(store, lambda job: runs.append(job.job_id))
        write_marker(store, "t1", "data/t1", idempotency_key="same")
        write_marker(store, "t1", "data/t1", idempotency_key="same")
        sched.poll_once()
        sched.poll_once()
        assert len(runs) == 1
        assert len([j for j in sched.jobs.values() if j.idempotency_key == "same"]) == 1

    def test_flaky_runner_three_attempts_then_succeeds(self, store):
        calls = []

        def flaky(job):
            calls.append(1)
            if len(calls) < 3:
                raise RuntimeError("transient")

        sched, _, slept = make_scheduler(store, flaky)
        write_marker(store, "t1", "data/t1", idempotency_key="k")
        (job,) = sched.poll_once()
        assert (job.attempts, job.state) == (3, JobState.SUCCEEDED)
        assert slept == [30.0, 60.0]  # exponential backoff, base 30 s

    def test_persistent_failure_goes_dead(self, store):
        def broken(job):
            raise RuntimeError("boom")

        sched, _, _ = make_scheduler(store, broken)
        write_marker(store, "t1", "data/t1", idempotency_key="k")
        (job,) = sched.poll_once()
        assert (job.attempts, job.state) == (3, JobState.DEAD)
        assert "boom" in job.error

    def test_malformed_marker_rejected_dead(self, store):
        store.put("training-queue/t1/badjob/_SUBMIT.json", b"{not json")
        sched, _, _ = make_scheduler(store, lambda job: None)
        assert sched.poll_once() == []
        assert sched.jobs["badjob"].state == JobState.DEAD
        assert "malformed marker" in sched.jobs["badjob"].error
        assert store.exists("training-queue/rejected/t1/badjob/_SUBMIT.json")

    def test_rate_limit_six_per_hour(self, store):
        sched, clock, _ = make_scheduler(store, lambda job: None)
        for i in range(8):
            write_marker(store, "t1", "data/t1", idempotency_key=f"k{i}")
        assert len(sched.poll_once()) == 6
        assert sched.poll_once() == []  # bucket drained
        clock.t += 600.0  # one token refills every 10 minutes at 6/hour
        assert len(sched.poll_once()) == 1

    def test_concurrent_running_bounded(self, store):
        def slow(job):
            time.sleep(0.05)

        sched = Scheduler(store, slow, max_concurrent=2, rate_per_hour=1e6)
        for i in range(6):
            write_marker(store, "t1", "data/t1", idempotency_key=f"k{i}")
        jobs = sched.poll_once()
        assert len(jobs) == 6
        assert all(j.state == JobState.SUCCEEDED for j in jobs)
        assert sched.peak_running <= 2


# ---------------------------------------------------------------------------
# Trainers + driver

def texture(rng, size=12):
    return rng.integers(0, 256, size=(size, size, 1), dtype=np.uint8)


def put_template_dataset(store, prefix, n_present, n_absent, seed=0, size=12):
    """Two distinct textures with per-crop noise: trivially separable by ZNCC."""
    rng = np.random.default_rng(seed)
    base = {"present": texture(rng, size), "absent": texture(rng, size)}
    for side, n in (("present", n_present), ("absent", n_absent)):
        for i in range(n):
            noisy = base[side].astype(int) + rng.integers(-10, 11, base[side].shape)
            img = ImageBuffer(np.clip(noisy, 0, 255).astype(np.uint8))
            store.put(f"{prefix}/{side}/crop{i:03d}.png", encode_png(img))


class TestTrainTemplateLibrary:
    def test_separable_set_has_perfect_loo_accuracy(self, store):
        put_template_dataset(store, "data/tpl", 80, 50)
        lib, report = train_template_library(store, "data/tpl")
        assert len(lib.templates) == 130
        assert report.f1 == 1.0
        assert report.fn == 0 and report.fp == 0

    def test_single_label_dataset_rejected(self, store):
        put_template_dataset(store, "data/only", 4, 0)
        with pytest.raises(EmptyClass):
            train_template_library(store, "data/only")

    def test_augmented_library_size(self, store):
        put_template_dataset(store, "data/small", 2, 2, size=24)
        lib, _ = train_template_library(
            store, "data/small", augmentation=AugmentationSpec(seed=5))
        assert len(lib.templates) == 4 * 11  # originals kept + 10 variants each


class TestRunTrainingPipeline:
    def seating_job(self, store):
        store.put("data/seat/areas.json", json.dumps(
            {"good": [5.95, 6.2, 7.1], "bad": [5.3, 4.9, 4.2]}).encode())
        return TrainingJob(job_id="job-seat", task_id="seat1",
                           dataset_prefix="data/seat",
                           hyperparameters={"trainer": "seating_threshold"})

    def test_seating_trainer_end_to_end(self, store):
        registry = ModelRegistry(store)
        job = self.seating_job(store)
        mv = run_training_pipeline(job, builtin_trainer_steps(store.root), store, registry)
        assert (mv.version, mv.status) == (1, ModelStatus.STAGING)
        params = seating_from_json(store.get("models/seat1/1/seating.json"))
        assert params.intersection_threshold == pytest.approx((5.95 + 5.3) / 2)
        assert mv.metrics["f1"] == 1.0
        # logs and checkpoints persisted under the job prefix
        for step in ("preprocess", "train", "postprocess"):
            assert store.exists(f"training-runs/job-seat/logs/{step}.log")
        assert store.exists("training-runs/job-seat/checkpoints/train.json")

    def test_template_trainer_end_to_end(self, store):
        put_template_dataset(store, "data/tpl", 6, 4)
        registry = ModelRegistry(store)
        job = TrainingJob(job_id="job-tpl", task_id="tpl1",
                          dataset_prefix="data/tpl",
                          hyperparameters={"trainer": "template_library"})
        mv = run_training_pipeline(job, builtin_trainer_steps(store.root), store, registry)
        assert mv.metrics["accuracy"] == 1.0
        assert store.exists("models/tpl1/1/library.json")

    def test_failing_step_reports_step_and_log(self, store):
        registry = ModelRegistry(store)
        job = self.seating_job(store)
        steps = builtin_trainer_steps(store.root)
        steps[1] = StepSpec(name="train",
                            program=["python3", "-c", "import sys; sys.exit(3)"])
        with pytest.raises(StepFailed) as exc:
            run_training_pipeline(job, steps, store, registry)
        assert (exc.value.step, exc.value.exit_code) == ("train", 3)
        assert store.exists(exc.value.log_path)
        # postprocess never ran after the failed train
        assert not store.exists("training-runs/job-seat/logs/postprocess.log")

    def test_step_order_enforced(self, store):
        registry = ModelRegistry(store)
        job = self.seating_job(store)
        steps = builtin_trainer_steps(store.root)
        with pytest.raises(ValueError):
            run_training_pipeline(job, list(reversed(steps)), store, registry)
