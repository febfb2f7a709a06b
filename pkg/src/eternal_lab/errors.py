"""Exception hierarchy shared by every module of the package."""


class EternalLabError(Exception):
    """Base class for all package errors."""


# grids / domains
class EmptyInterior(EternalLabError, ValueError):
    pass


class OriginOutside(EternalLabError, ValueError):
    pass


# operator validation
class AssumptionViolated(EternalLabError, ValueError):
    """A coefficient sample breaks one of the structural assumptions on L."""

    assumption = "structural assumption"

    def __init__(self, message, sample=None):
        super().__init__(f"{self.assumption} violated: {message}")
        self.sample = sample


class EllipticityViolated(AssumptionViolated):
    assumption = "uniform parabolicity lambda|xi|^2 <= a xi.xi <= Lambda|xi|^2"


class NegativeC(AssumptionViolated):
    assumption = "c >= 0"


class DriftTooLarge(AssumptionViolated):
    assumption = "|b_i| <= Lambda and |c| <= Lambda"


class CrossTermTooLarge(AssumptionViolated):
    assumption = "M-matrix cross-term bound |a_12| <= min(a_11, a_22)"


class AsymmetricCoefficient(AssumptionViolated):
    assumption = "a_ij = a_ji"


class StencilOutOfDomain(EternalLabError, RuntimeError):
    pass


class WindowTooShort(EternalLabError, ValueError):
    pass


# solvers
class SolveFailed(EternalLabError, RuntimeError):
    def __init__(self, message, step=None):
        if step is not None:
            message = f"{message} (step {step})"
        super().__init__(message)
        self.step = step


class NoConvergence(EternalLabError, RuntimeError):
    pass


class SignFailure(EternalLabError, RuntimeError):
    pass


class NonPositiveProfile(EternalLabError, ValueError):
    pass


class NonPositive(EternalLabError, ValueError):
    pass


class SeedSensitivity(EternalLabError, RuntimeError):
    pass


class NotHomogeneous(EternalLabError, ValueError):
    pass


# verification
class PlateauNotReached(EternalLabError, ValueError):
    pass


class HorizonTooShort(EternalLabError, ValueError):
    pass


class NoCauchyDecay(EternalLabError, RuntimeError):
    pass


class NegativeCoefficient(EternalLabError, ValueError):
    pass


# runner
class ConfigError(EternalLabError, ValueError):
    pass


class CheckFailed(EternalLabError, RuntimeError):
    pass


class MissingGolden(EternalLabError, FileNotFoundError):
    pass
