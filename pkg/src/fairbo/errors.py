"""Exception types shared across the package."""


class DomainError(ValueError):
    """An input lies outside the domain an operation accepts."""


class NumericalError(ArithmeticError):
    """A numerical routine failed (Cholesky, Newton, divergence)."""


class StateError(RuntimeError):
    """An operation was called in a state that does not support it."""


class UndefinedMetricError(DomainError):
    """A fairness metric has an empty conditioning group.

    ``metric`` names the metric (``"DSP"``, ``"DEO"`` or ``"DFP"``).
    """

    def __init__(self, metric, message=None):
        self.metric = metric
        super().__init__(message or f"{metric} is undefined: a conditioning group is empty")


class LoadError(DomainError):
    """A dataset file could not be ingested."""


class ConfigError(DomainError):
    """An experiment config failed validation.

    ``field`` is the dotted path of the offending entry and ``line`` its
    1-based line in the source file when known.
    """

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        where = ""
        if field is not None:
            where = f"{field}: "
        if line is not None:
            where = f"line {line}: " + where
        super().__init__(where + message)
