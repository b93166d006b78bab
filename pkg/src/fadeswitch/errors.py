"""Exception hierarchy.

Two families matter to callers: :class:`UsageError` (bad arguments, exit
code 1 on the command line) and :class:`DataError` (the inputs themselves
are unusable, exit code 2).
"""


class FadeSwitchError(Exception):
    pass


class UsageError(FadeSwitchError, ValueError):
    pass


class InvalidParameterError(UsageError):
    pass


class DataError(FadeSwitchError, ValueError):
    pass


class FormatError(DataError):
    pass


class SpacingError(FormatError):
    pass


class NegativeValueError(DataError):
    pass


class EmptyInputError(DataError):
    pass


class InsufficientDataError(DataError):
    pass


class SingleClassError(DataError):
    pass


class DegenerateDataError(DataError):
    pass


class ShapeError(DataError):
    pass


class NumericError(DataError):
    pass


class AlignmentError(DataError):
    pass


class HorizonRangeError(DataError, IndexError):
    pass
