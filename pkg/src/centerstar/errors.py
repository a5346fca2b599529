"""Exception hierarchy. Data errors map to CLI exit code 2, usage errors to 1."""


class CenterStarError(Exception):
    """Base class for all package errors."""


class DataError(CenterStarError):
    """Invalid or inconsistent input data."""


class UsageError(CenterStarError):
    """Bad command-line invocation or configuration."""


# seqio
class EmptyFile(DataError):
    pass


class MalformedHeader(DataError):
    pass


class IllegalResidue(DataError):
    def __init__(self, message, record_id=None, offset=None):
        super().__init__(message)
        self.record_id = record_id
        self.offset = offset


class EmptyRecord(DataError):
    pass


class EmptyDataset(DataError):
    pass


# pairwise / anchor
class EmptyInput(DataError):
    pass


class AlphabetMismatch(DataError):
    pass


class SequenceTooLong(DataError):
    pass


class KTooLarge(DataError):
    pass


class KTooSmall(DataError):
    pass


# msa / metrics / phylo
class TooFewSequences(DataError):
    pass


class InconsistentCenter(DataError):
    pass


class LengthMismatch(DataError):
    pass


class LeafMismatch(DataError):
    pass


class ProteinUnsupported(DataError):
    pass


class NonFiniteDistance(DataError):
    pass


class IoFailure(CenterStarError):
    pass


class TaskPanic(CenterStarError):
    """A worker task raised; the original error is attached as __cause__."""
