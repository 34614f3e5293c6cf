"""Model registry, training scheduler, driver, and in-repo trainers."""
from .artifacts import (
    library_from_json,
    library_to_json,
    seating_from_json,
    seating_to_json,
)
from .driver import (
    STEP_ORDER,
    DriverError,
    StepFailed,
    StepSpec,
    StepTimeout,
    builtin_trainer_steps,
    run_training_pipeline,
)
from .registry import (
    GateFailed,
    ModelRegistry,
    ModelStatus,
    ModelVersion,
    RegistryError,
    StoreMissing,
    UnknownVersion,
)
from .scheduler import (
    MARKER_NAME,
    JobState,
    Scheduler,
    TokenBucket,
    TrainingJob,
    write_marker,
)
from .trainers import (
    build_library,
    evaluate_library,
    load_seating_areas,
    load_template_dataset,
    metrics_doc,
    train_seating_threshold,
    train_template_library,
)

__all__ = [
    "DriverError", "GateFailed", "JobState", "MARKER_NAME", "ModelRegistry",
    "ModelStatus", "ModelVersion", "RegistryError", "STEP_ORDER", "Scheduler",
    "StepFailed", "StepSpec", "StepTimeout", "StoreMissing", "TokenBucket",
    "TrainingJob", "UnknownVersion", "builtin_trainer_steps", "build_library",
    "evaluate_library", "library_from_json", "library_to_json",
    "load_seating_areas", "load_template_dataset", "metrics_doc",
    "run_training_pipeline", "seating_from_json", "seating_to_json",
    "train_seating_threshold", "train_template_library", "write_marker",
]
