"""Exception hierarchy.

Every error raised by the package derives from :class:`AVSRError`. The CLI maps
the three broad families onto exit codes (usage 1, data 2, numerical 3).
"""


class AVSRError(Exception):
    exit_code = 1


# usage / configuration ------------------------------------------------------

class ConfigError(AVSRError):
    exit_code = 1


class UsageError(AVSRError):
    exit_code = 1


# data ----------------------------------------------------------------------

class DataError(AVSRError):
    exit_code = 2


class IngestionError(DataError):
    def __init__(self, message, offending=()):
        self.offending = list(offending)
        if self.offending:
            message = f"{message}: {', '.join(self.offending)}"
        super().__init__(message)


class BoundsError(DataError):
    pass


class EmptyDatasetError(DataError):
    pass


class LabelError(DataError):
    pass


class CheckpointError(DataError):
    pass


class FormatError(CheckpointError):
    pass


# shapes / numerics ---------------------------------------------------------

class NumericalError(AVSRError):
    exit_code = 3


class ShapeError(NumericalError, ValueError):
    pass


class SizeError(NumericalError):
    pass


class DegenerateBatchError(NumericalError):
    pass


class EvaluationError(NumericalError):
    pass


class ProbabilityError(NumericalError):
    pass


class OptimizerError(NumericalError):
    pass


class TrainingError(NumericalError):
    pass
