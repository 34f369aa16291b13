"""Nested model checking: problems whose models are instantiated from the
results of other model-checking tasks."""

from .checker import CheckResult, Property, mc, parse_property
from .engine import Config, Engine, RunResult, TaskReport, run_problem
from .errors import (
    EvaluationError,
    InstantiationError,
    ModelFormatError,
    ModelNotFoundError,
    NestCheckError,
    ParseError,
    PropertyError,
    StaticCheckError,
)
from .expr import parse_problem, task_dag
from .model import Kind, StandardModel, canonical_hash, parse_model
from .template import MetaModel, instantiate, parse_meta

__version__ = "0.1.0"

__all__ = [
    "CheckResult", "Config", "Engine", "EvaluationError", "InstantiationError", "Kind", "MetaModel",
    "ModelFormatError", "ModelNotFoundError", "NestCheckError", "ParseError", "Property", "PropertyError",
    "RunResult", "StandardModel", "StaticCheckError", "TaskReport", "canonical_hash", "instantiate", "mc",
    "parse_meta", "parse_model", "parse_problem", "parse_property", "run_problem", "task_dag",
]
