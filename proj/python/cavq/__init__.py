"""Python bindings for the curriculum paraphrase-augmentation engine."""

from ._core import (
    ContractError,
    DimensionError,
    Error,
    FormatError,
    IntegrityError,
    Schedule,
    ScheduleKind,
    SyntheticSpec,
    ValidationError,
    accuracy,
    cider,
    generate,
    load_checkpoint,
    run_cli,
    schedule_csv,
    tokenize,
)

__all__ = [
    "ContractError",
    "DimensionError",
    "Error",
    "FormatError",
    "IntegrityError",
    "Schedule",
    "ScheduleKind",
    "SyntheticSpec",
    "ValidationError",
    "accuracy",
    "cider",
    "generate",
    "load_checkpoint",
    "run_cli",
    "schedule_csv",
    "tokenize",
]
