"""Exception hierarchy shared by every pipeline stage.

Each class carries an ``exit_code`` so the CLI can map failures onto
stable process exit codes: 1 usage, 2 data, 3 numeric, 4 io.
"""


class ToolkitError(Exception):
    exit_code = 2


class UsageError(ToolkitError):
    exit_code = 1


class ConfigInvalid(UsageError):
    pass


class UnknownSubcommand(UsageError):
    pass


class ConflictingFlags(UsageError):
    pass


class DataError(ToolkitError):
    exit_code = 2


class CorpusTooSmall(DataError):
    pass


class InvalidId(DataError):
    pass


class TokenOutOfRange(DataError):
    pass


class SplitEmpty(DataError):
    pass


class StepOutOfRange(DataError):
    pass


class PromptTooLong(DataError):
    pass


class NumericError(ToolkitError):
    exit_code = 3


class ShapeMismatch(NumericError):
    pass


class NotScalarLoss(NumericError):
    pass


class NonFiniteValue(NumericError):
    pass


class NonFiniteGradient(NumericError):
    pass


class IoError(ToolkitError):
    exit_code = 4


class FormatVersionMismatch(IoError):
    pass


class CorruptFile(IoError):
    pass


class CorruptShard(IoError):
    def __init__(self, message, byte_offset=None):
        super().__init__(message)
        self.byte_offset = byte_offset


class MalformedByteSequence(IoError):
    pass
