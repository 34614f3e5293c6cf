"""Training driver: runs the preprocess -> train -> postprocess steps of a
training job through the executor contract and registers the result.

An executor is any program invoked as

    program... --job JOB_ID --step NAME --input PREFIX --output PREFIX

that exits 0 on success. Stdout/stderr are captured to logs/ under the job's
work prefix. Container runtimes, remote launchers, and the in-repo trainers
all fit this shape.
"""
from __future__ import annotations

import json
import subprocess
import sys
from dataclasses import dataclass

from .registry import ModelRegistry, ModelVersion

STEP_ORDER = ("preprocess", "train", "postprocess")


class DriverError(Exception):
    pass


class StepFailed(DriverError):
    def __init__(self, step: str, exit_code: int, log_path: str):
        super().__init__(f"step {step} exited {exit_code} (log: {log_path})")
        self.step = step
        self.exit_code = exit_code
        self.log_path = log_path


class StepTimeout(DriverError):
    def __init__(self, step: str, timeout_s: float):
        super().__init__(f"step {step} exceeded {timeout_s}s")
        self.step = step


@dataclass
class StepSpec:
    name: str  # preprocess | train | postprocess
    program: list[str]
    timeout_s: float = 300.0


def builtin_trainer_steps(store_root, timeout_s: float = 300.0) -> list[StepSpec]:
    """Three steps running the in-repo trainer module as a subprocess."""
    program = [sys.executable, "-m", "aoi.mlops.trainers", "--store-root", str(store_root)]
    return [StepSpec(name=n, program=list(program), timeout_s=timeout_s)
            for n in STEP_ORDER]


def run_training_pipeline(job, steps: list[StepSpec], store,
                          registry: ModelRegistry) -> ModelVersion:
    """Execute the three steps in order and register the produced model.

    job carries job_id / task_id / dataset_prefix / hyperparameters. Work
    products land under training-runs/{job_id}: preprocessed/, model/,
    report/metrics.json, logs/, checkpoints/.
    """
    if tuple(s.name for s in steps) != STEP_ORDER:
        raise ValueError(f"steps must be {STEP_ORDER} in order, got "
                         f"{[s.name for s in steps]}")
    if not (store.exists(job.dataset_prefix) or store.list(job.dataset_prefix.rstrip("/") + "/")):
        raise DriverError(f"dataset prefix {job.dataset_prefix!r} is empty")

    work = f"training-runs/{job.job_id}"
    store.put(f"{work}/job.json", json.dumps({
        "job_id": job.job_id,
        "task_id": job.task_id,
        "dataset_prefix": job.dataset_prefix,
        "hyperparameters": job.hyperparameters,
    }, indent=2).encode())

    io = {
        "preprocess": (job.dataset_prefix, f"{work}/preprocessed"),
        "train": (f"{work}/preprocessed", f"{work}/model"),
        "postprocess": (work, f"{work}/report"),
    }
    for step in steps:
        inp, out = io[step.name]
        argv = step.program + ["--job", job.job_id, "--step", step.name,
                               "--input", inp, "--output", out]
        try:
            proc = subprocess.run(argv, capture_output=True, timeout=step.timeout_s)
        except subprocess.TimeoutExpired:
            raise StepTimeout(step.name, step.timeout_s) from None
        log_path = f"{work}/logs/{step.name}.log"
        store.put(log_path, proc.stdout + proc.stderr)
        if proc.returncode != 0:
            raise StepFailed(step.name, proc.returncode, log_path)

    metrics = json.loads(store.get(f"{work}/report/metrics.json"))
    return registry.register_model(
        job.task_id, metrics, location=f"{work}/model",
        comments=f"trained by job {job.job_id}")
