"""Exception hierarchy shared by every subpackage."""

from __future__ import annotations


class TeleopPredictorError(Exception):
    """Base class for all package errors."""


# data_io
class FieldCountError(TeleopPredictorError, ValueError):
    pass


class ParseError(TeleopPredictorError, ValueError):
    pass


class EmptyTrialError(TeleopPredictorError, ValueError):
    pass


class EmptyInputError(TeleopPredictorError, ValueError):
    pass


class TrialTooShortError(TeleopPredictorError, ValueError):
    pass


class TrialFileError(TeleopPredictorError):
    """A kinematics file failed to load; carries the 1-based line number."""

    def __init__(self, path, line_no: int | None, cause: Exception):
        self.path = str(path)
        self.line_no = line_no
        self.cause = cause
        where = f"{self.path}:{line_no}" if line_no is not None else self.path
        super().__init__(f"{where}: {cause}")


# channel_sim
class InvalidMatrixError(TeleopPredictorError, ValueError):
    pass


class NonStochasticError(InvalidMatrixError):
    pass


class ChannelConfigError(TeleopPredictorError, ValueError):
    pass


class LengthMismatchError(TeleopPredictorError, ValueError):
    pass


class EmptyTraceError(TeleopPredictorError, ValueError):
    pass


# nn_core / models
class ShapeError(TeleopPredictorError, ValueError):
    pass


class MissingGradError(TeleopPredictorError, RuntimeError):
    pass


class CheckpointError(TeleopPredictorError, ValueError):
    pass


class EmptySplitError(TeleopPredictorError, ValueError):
    pass


# evaluation
class EmptyError(TeleopPredictorError, ValueError):
    pass


class DegenerateRangeError(TeleopPredictorError, ValueError):
    pass


class SplitMismatchError(TeleopPredictorError, ValueError):
    pass


class ConfigError(TeleopPredictorError, ValueError):
    pass


class ComparisonError(TeleopPredictorError, ValueError):
    pass
