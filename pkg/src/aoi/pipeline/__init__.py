"""Inspection workflow orchestration, object-store persistence, analytics."""
from .analytics import (
    RESULTS_PREFIX,
    AnalyticsIndex,
    AnalyticsRecord,
    MalformedCursor,
    Page,
    ResultFilter,
    rebuild_index,
    record_for,
)
from .engine import (
    InspectionEngine,
    MissingView,
    NoProductionModel,
    PipelineError,
    UnknownProfile,
    UnknownResult,
    UnknownTask,
)
from .store import (
    KeyMissing,
    LocalStore,
    S3Store,
    StoreError,
    StoreUnavailable,
    open_store,
)

__all__ = [
    "AnalyticsIndex", "AnalyticsRecord", "InspectionEngine", "KeyMissing",
    "LocalStore", "MalformedCursor", "MissingView", "NoProductionModel",
    "Page", "PipelineError", "RESULTS_PREFIX", "ResultFilter", "S3Store",
    "StoreError", "StoreUnavailable", "UnknownProfile", "UnknownResult",
    "UnknownTask", "open_store", "rebuild_index", "record_for",
]
