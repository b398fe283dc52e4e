"""Exception hierarchy shared across the toolkit."""


class WordshapError(Exception):
    """Base class for all toolkit errors."""


class FormatError(WordshapError):
    """File header or structure does not match the expected format."""


class UnsupportedError(WordshapError):
    """Well-formed input uses an encoding the toolkit does not handle."""


class IoError(WordshapError):
    """Underlying read/write failure."""


class TruncationError(FormatError):
    """Payload shorter than the header claims."""


class VocabMismatchError(WordshapError):
    """Vocabulary file or token set inconsistent with the data using it."""


class EmptyTranscriptError(WordshapError):
    """Transcript normalization retained no characters."""


class InfeasibleAlignmentError(WordshapError):
    """Emission matrix has too few frames for the label sequence."""


class TooShortError(WordshapError):
    """Waveform shorter than one analysis window."""


class TooManyPlayersError(WordshapError):
    """Player count exceeds what the requested operation supports."""


class EvaluatorError(WordshapError):
    """Evaluator transport failed after retries."""


class ProtocolError(WordshapError):
    """Evaluator answered with a malformed or non-finite payload."""


class DegenerateAttributionError(WordshapError):
    """All attributions are zero; normalization undefined."""


class DomainError(WordshapError):
    """Argument outside its mathematical domain."""


class UndefinedTestError(WordshapError):
    """Statistical test undefined for the given samples."""


class InternalError(WordshapError):
    """Invariant violated by an upstream stage; indicates a bug."""
