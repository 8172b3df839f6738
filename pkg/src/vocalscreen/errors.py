"""Exception hierarchy.

``ValidationError`` subclasses describe bad inputs (CLI exit code 2);
everything else derived from ``VocalScreenError`` is a runtime failure
(CLI exit code 3).
"""


class VocalScreenError(Exception):
    exit_code = 3


class ValidationError(VocalScreenError):
    exit_code = 2


# preprocess
class UnsupportedFormat(ValidationError):
    pass


class EmptyAudio(ValidationError):
    pass


class InvalidLength(ValidationError):
    pass


class SegmentTooShort(ValidationError):
    pass


class EmptyVoiced(VocalScreenError):
    """Every frame of a recording fell below the silence threshold."""


# features
class DegenerateBank(ValidationError):
    pass


class OrderTooHigh(ValidationError):
    pass


class NumericalBreakdown(VocalScreenError):
    pass


class WrongShape(ValidationError):
    pass


class ShapeMismatch(ValidationError):
    pass


# dataset
class DuplicateSubject(ValidationError):
    pass


class InvalidLabel(ValidationError):
    pass


class MissingRecording(ValidationError):
    pass


class InfeasibleComposition(ValidationError):
    pass


class BadMagic(ValidationError):
    pass


class VersionMismatch(ValidationError):
    pass


class TruncatedFile(ValidationError):
    pass


class EmptyPredictions(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


# forest
class SingleClass(ValidationError):
    pass


class EmptyData(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


# nn
class InvalidSpec(ValidationError):
    pass


class EmptySplit(ValidationError):
    pass


class DivergedLoss(VocalScreenError):
    pass


class NonFiniteTensor(VocalScreenError):
    pass
