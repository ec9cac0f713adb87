"""Exception hierarchy; each class maps to one CLI exit code."""


class PipelineError(Exception):
    """Base class for every error raised by the pipeline."""

    exit_code = 1


class ConfigError(PipelineError, ValueError):
    exit_code = 2


class InputError(PipelineError, ValueError):
    """Malformed or out-of-range input data.

    ``path`` and ``line`` locate the offending record when known.
    """

    exit_code = 3

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)


class LookupFailure(InputError, KeyError):
    """A key (zipcode, feature name, ...) is not present in a table."""

    def __str__(self):
        return Exception.__str__(self)


class JoinError(PipelineError, LookupError):
    """A covariate join found no matching observation."""

    exit_code = 4

    def __init__(self, message, missing=()):
        self.missing = list(missing)
        super().__init__(message)


class InferenceError(PipelineError, ArithmeticError):
    """A model or test statistic is undefined for the given data."""

    exit_code = 5


class SingularSystemError(InferenceError):
    pass


class SpecError(ConfigError):
    """An infeasible synthetic-corpus specification."""
