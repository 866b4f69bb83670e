"""Configuration, checkpoints, evaluation matrix, reports and the CLI."""

from padkit.bench.checkpoint import IntegrityError, VersionError
from padkit.bench.config import ConfigKeyError, RunConfig
from padkit.bench.matrix import MatrixConfig, run_matrix
from padkit.bench.report import EvalReport, Row, relative_improvement

__all__ = [
    "ConfigKeyError",
    "EvalReport",
    "IntegrityError",
    "MatrixConfig",
    "Row",
    "RunConfig",
    "VersionError",
    "relative_improvement",
    "run_matrix",
]
