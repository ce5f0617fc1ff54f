"""Error hierarchy shared by the library and the management commands.

Each class carries the process exit code the CLI reports for it.
"""


class FlownetError(Exception):
    exit_code = 1

    def __init__(self, message, **details):
        super().__init__(message)
        self.message = message
        self.details = details

    def as_dict(self):
        return {
            "error": type(self).__name__,
            "message": self.message,
            "details": {k: _jsonable(v) for k, v in self.details.items()},
        }

    def __reduce__(self):
        # keep details when raised inside a worker process
        return _restore, (type(self), self.message, self.__dict__)


def _restore(cls, message, state):
    error = cls.__new__(cls)
    Exception.__init__(error, message)
    error.__dict__.update(state)
    return error


def _jsonable(value):
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (str, int, bool)) or value is None:
        return value
    try:
        return float(value)
    except (TypeError, ValueError):
        return str(value)


class InputFileError(FlownetError):
    exit_code = 1


class ScenarioError(FlownetError):
    """Schema violation in a scenario document."""
    exit_code = 2

    @classmethod
    def from_validation_error(cls, exc):
        if hasattr(exc, "message_dict"):
            problems = {k: list(v) for k, v in exc.message_dict.items()}
        else:
            problems = {"__all__": list(exc.messages)}
        count = sum(len(v) for v in problems.values())
        return cls(f"scenario has {count} schema violation(s)", problems=problems)


class NetworkValidationError(FlownetError):
    exit_code = 3

    def __init__(self, violations):
        super().__init__(
            f"network violates {len(violations)} structural requirement(s)",
            violations=list(violations),
        )
        self.violations = list(violations)


class ValidationRequiredError(FlownetError):
    exit_code = 3


class InfeasibleControlError(FlownetError):
    """No finite inflow delivers the requested outflow (backward blow-up)."""
    exit_code = 4


class NumericsError(FlownetError, ValueError):
    exit_code = 5


class ArgumentOrderError(NumericsError):
    pass


class TimeOrderError(NumericsError):
    pass


class DomainError(NumericsError):
    pass


class GridError(NumericsError):
    pass


class NonInvertibleError(NumericsError):
    pass


class RangeError(NumericsError):
    """Value outside the range of an antiderivative; carries the offending index."""
    pass


class CouplingError(NumericsError):
    pass


class UndefinedSplitError(NumericsError):
    pass
