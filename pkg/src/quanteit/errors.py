"""Exception hierarchy.

Validation problems (bad shapes, bad files, bad config) derive from
:class:`ValidationError`; numerical breakdowns derive from :class:`NumericError`.
The CLI maps the two families to exit codes 1 and 2.
"""


class QuantEITError(Exception):
    """Base class for all package errors."""


class ValidationError(QuantEITError):
    pass


class NumericError(QuantEITError):
    pass


class ParameterError(ValidationError, ValueError):
    """An argument is out of range or has an inconsistent shape."""


class LoadError(ValidationError):
    """A file on disk does not match the expected format."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class NormalizationError(ValidationError, ValueError):
    """Reference entry is zero, so relative normalization is undefined."""

    def __init__(self, index):
        self.index = index
        super().__init__(f"reference value at index {index} is zero")


class MetricError(ValidationError, ValueError):
    pass


class SolverError(NumericError):
    """Linear solve failed or did not reach the residual tolerance."""


class OptimizerError(NumericError):
    """Non-finite gradient handed to the optimizer."""

    def __init__(self, index):
        self.index = index
        super().__init__(f"non-finite gradient entry at index {index}")
