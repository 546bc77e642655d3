"""Exception types raised across the package."""


class AirsegError(Exception):
    """Base class for all errors raised by this package."""


class MalformedHeader(AirsegError):
    pass


class TruncatedData(AirsegError):
    pass


class ValueOutOfRange(AirsegError):
    pass


class IoFailure(AirsegError):
    pass


class OutOfBounds(AirsegError):
    pass


class DimMismatch(AirsegError):
    pass


class EmptyGraph(AirsegError):
    pass


class EmptyTree(AirsegError):
    pass


class EmptyCenterline(AirsegError):
    pass


class EmptyBatch(AirsegError):
    pass


class EmptyVolume(AirsegError):
    pass


class EmptyPool(AirsegError):
    pass


class EmptyPatch(AirsegError):
    pass


class EmptyTrainingSet(AirsegError):
    pass


class ShapeMismatch(AirsegError):
    pass


class UndefinedMetric(AirsegError):
    pass


class AllZeroDifferences(AirsegError):
    pass


class DegenerateVariance(AirsegError):
    pass


class KTooLarge(AirsegError):
    pass


class SpecInfeasible(AirsegError):
    pass


class MissingGroundTruth(AirsegError):
    pass


class PoolExhausted(AirsegError):
    pass


class PendingHumanAnnotations(AirsegError):
    pass


class InvalidAnnotation(AirsegError):
    pass
