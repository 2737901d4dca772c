"""Exception hierarchy.  Every error raised on purpose derives from MeloformError."""


class MeloformError(Exception):
    pass


# kern parsing / normalization
class KernError(MeloformError):
    pass


class MalformedToken(KernError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptyScore(KernError):
    pass


class PolyphonyUnsupported(KernError):
    pass


class PitchOutOfRange(KernError):
    pass


# corpus
class CorpusError(MeloformError):
    pass


class NonGridDuration(CorpusError):
    pass


class DecodeError(CorpusError):
    pass


class DanglingHold(DecodeError):
    pass


class BadRatios(CorpusError, ValueError):
    pass


class UnknownSymbol(CorpusError, KeyError):
    pass


class CorruptDelimiter(CorpusError):
    pass


class TooShort(CorpusError):
    pass


class InsufficientSongs(CorpusError):
    pass


class EmptyCorpus(CorpusError):
    pass


# tensors
class TensorError(MeloformError):
    pass


class ShapeMismatch(TensorError, ValueError):
    pass


class NonFinite(TensorError, FloatingPointError):
    pass


Overflow = NonFinite


class BadTarget(TensorError, IndexError):
    pass


class DisconnectedGraph(TensorError):
    pass


# training / generation
class NanLoss(MeloformError):
    pass


class EmptySplit(MeloformError):
    pass


class UnknownSeedToken(MeloformError):
    pass


class EmptySet(MeloformError, ValueError):
    pass


# experiment orchestration
class ExperimentError(MeloformError):
    pass


class UnknownVariant(ExperimentError, KeyError):
    pass


class MissingArtifact(ExperimentError):
    pass


class HashMismatch(ExperimentError):
    pass
