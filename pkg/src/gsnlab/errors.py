"""Exception hierarchy shared by every gsnlab module."""


class GsnError(Exception):
    """Base class; the CLI maps any subclass to a nonzero exit."""


class ShapeError(GsnError, ValueError):
    pass


class ParameterError(GsnError, ValueError):
    pass


class ConvergenceError(GsnError, RuntimeError):
    pass


class GraphError(GsnError, RuntimeError):
    pass


class StateError(GsnError, RuntimeError):
    pass


class SizeError(GsnError, ValueError):
    pass


class NumericalError(GsnError, ArithmeticError):
    pass


class FormatError(GsnError, ValueError):
    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class TrainingError(GsnError, RuntimeError):
    def __init__(self, message, epoch=None, batch=None):
        super().__init__(f"{message} (epoch {epoch}, batch {batch})")
        self.epoch = epoch
        self.batch = batch
