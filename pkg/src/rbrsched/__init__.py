"""Schedulability analysis and simulation for restart-based recovery.

Fixed-priority periodic tasks are analysed and simulated under four
preemption models when a system restart may occur at any instant and
re-executes every job that was released but not completed.
"""

from .model import (
    InvalidTaskSet,
    RestartModel,
    Scheme,
    Task,
    TaskSet,
    Violation,
    as_time,
    ensure_valid,
    hyperperiod,
    utilization,
    validate_taskset,
)
from .rta import (
    AnalysisReport,
    TaskResult,
    analyze,
    ideal_response_times,
    level_i_active_period,
    rbr_feasible,
    rta_nonpreemptive,
    rta_npe,
    rta_preemptive,
    rta_pt,
)

__version__ = "0.1.0"

__all__ = [
    "AnalysisReport",
    "InvalidTaskSet",
    "RestartModel",
    "Scheme",
    "Task",
    "TaskResult",
    "TaskSet",
    "Violation",
    "analyze",
    "as_time",
    "ensure_valid",
    "hyperperiod",
    "ideal_response_times",
    "level_i_active_period",
    "rbr_feasible",
    "rta_nonpreemptive",
    "rta_npe",
    "rta_preemptive",
    "rta_pt",
    "utilization",
    "validate_taskset",
]
