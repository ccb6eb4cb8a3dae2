class DataError(ValueError):
    """Malformed or contract-violating input data."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class PipelineOrderError(RuntimeError):
    """A preprocessing step was called out of order."""


class DegenerateLabelsError(ValueError):
    """Time-fixed labels contain a single class."""


class NotNormalizedError(ValueError):
    pass


class NumericalError(FloatingPointError):
    """Training produced a non-finite loss."""

    def __init__(self, message, epoch=None, batch=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
