class PivotSVRError(Exception):
    """Base class for package errors."""


class DataError(PivotSVRError, ValueError):
    """Malformed or invalid input data."""


class CapacityError(DataError):
    """Series too short for the requested layout."""


class EmptyDatasetError(DataError):
    pass


class DegenerateSwingError(DataError):
    """Adjacent peak and trough share the same price."""


class ConvergenceError(PivotSVRError, RuntimeError):
    def __init__(self, message, violation=None):
        super().__init__(message)
        self.violation = violation


class SelectionError(PivotSVRError, RuntimeError):
    """Every hyper-parameter grid point failed."""


class ContractError(PivotSVRError, ValueError):
    """A procedure was invoked outside its precondition."""
