"""Exception hierarchy shared by all modules."""


class AdiaswitchError(Exception):
    """Base class for every error raised by the package."""


class NonSquare(AdiaswitchError, ValueError):
    pass


class AsymmetryTooLarge(AdiaswitchError, ValueError):
    pass


class NotAProjector(AdiaswitchError, ValueError):
    pass


class ClusterAmbiguity(AdiaswitchError):
    pass


class GapViolation(AdiaswitchError):
    pass


class DegeneracyMismatch(AdiaswitchError, ValueError):
    pass


class PositiveTime(AdiaswitchError, ValueError):
    pass


class NoDegenerateGroup(AdiaswitchError):
    pass


class UndefinedCrossCoefficients(AdiaswitchError):
    pass


class TrackingFailure(AdiaswitchError):
    pass


class IntegrationFailure(AdiaswitchError):
    pass


class StepTooCoarse(AdiaswitchError, ValueError):
    pass


class NotConverged(AdiaswitchError):
    pass


class VanishingDenominator(AdiaswitchError):
    """The Gell-Mann--Low denominator fell below the configured floor."""

    def __init__(self, message, denominator=None):
        super().__init__(message)
        self.denominator = denominator


class StageConditionViolated(AdiaswitchError):
    pass


class ParseError(AdiaswitchError, ValueError):
    pass


class ConfigParse(AdiaswitchError, ValueError):
    pass


class ProblemLoad(AdiaswitchError):
    pass


class ExperimentFailure(AdiaswitchError):
    pass
