"""Exception types shared across the package.

Kept in one module so the CLI can map them to exit codes without
importing everything else.
"""


class SuperConError(Exception):
    """Base class for all package errors."""


class ShapeError(SuperConError, ValueError):
    """Operand shapes are incompatible with the requested operation."""


class DegenerateInputError(SuperConError, ValueError):
    """Input is structurally valid but mathematically degenerate (e.g. zero-norm row)."""


class EvaluationError(SuperConError, ArithmeticError):
    """An operation produced a non-finite value."""


class MissingGradientError(SuperConError, RuntimeError):
    """A parameter update was requested before its gradient was populated."""


class DegenerateBatchError(SuperConError, ValueError):
    """A training batch cannot support the requested loss (no anchors / no negatives)."""


class ConfigError(SuperConError, ValueError):
    """A configuration value violates its contract."""


class DatasetLoadError(SuperConError, ValueError):
    """A dataset on disk is missing, corrupt, or inconsistent."""


class SplitError(SuperConError, ValueError):
    """A dataset cannot be split as requested."""


class UndefinedMetricError(SuperConError, ValueError):
    """A metric is undefined for the given inputs (e.g. single-class AUC)."""


class InfeasibleStrategyError(SuperConError, RuntimeError):
    """The chosen training strategy cannot run on the given dataset."""


class FreezeContractError(SuperConError, RuntimeError):
    """A frozen component would have been mutated by a training step."""
