"""Exception hierarchy. Every library error derives from ``SteklovError``."""


class SteklovError(ValueError):
    """Base class for invalid inputs and failed numerical contracts."""


class NegativeRate(SteklovError):
    pass


class InvalidRates(SteklovError):
    """Malformed triplets: bad index, self-loop, non-finite rate."""


class NotIrreducible(SteklovError):
    pass


class NotReversible(SteklovError):
    pass


class InvalidMeasure(SteklovError):
    pass


class SingularSystem(SteklovError):
    pass


class EigensolverFailure(SteklovError):
    pass


class EmptySubset(SteklovError):
    pass


class FullSet(SteklovError):
    pass


class InvalidBoundary(SteklovError):
    pass


class SingularInteriorBlock(SteklovError):
    pass


class InvalidProfile(SteklovError):
    pass


class BudgetExceeded(SteklovError):
    def __init__(self, message: str, suggestion: str = "heuristic"):
        super().__init__(message)
        self.suggestion = suggestion


class ChiOutOfRange(SteklovError):
    pass


class SpectralRadiusOne(SteklovError):
    pass


class EpsOutOfRange(SteklovError):
    pass


class EmptyInterior(SteklovError):
    pass


class InvalidParams(SteklovError):
    pass


class NonpositiveLength(SteklovError):
    pass


class InsufficientLevels(SteklovError):
    pass


class EmptyCorpus(SteklovError):
    pass


class InstanceFormatError(SteklovError):
    pass
