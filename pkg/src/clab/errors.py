"""Exception hierarchy shared by all clab modules."""


class ClabError(Exception):
    """Base class for all domain errors raised by clab."""


# --- geometry ---------------------------------------------------------------

class NonPositiveRadius(ClabError):
    pass


class DegenerateResolution(ClabError):
    pass


class VanishingGradient(ClabError):
    pass


class FlowEscape(ClabError):
    pass


class NoAdmissibleMu(ClabError):
    pass


class NonSymmetricDiffusion(ClabError):
    pass


class OverflowGuard(ClabError):
    """Weight evaluation would leave the float64 range even in log space."""


# --- pde --------------------------------------------------------------------

class EllipticityViolated(ClabError):
    pass


class BoundaryFlagInvalid(ClabError):
    pass


class SolverDivergence(ClabError):
    pass


class ShapeMismatch(ClabError):
    pass


class NewtonDivergence(ClabError):
    pass


class QuadratureFailure(ClabError):
    pass


# --- observe ----------------------------------------------------------------

class CompatibilityViolated(ClabError):
    def __init__(self, msg, component=None, node=None):
        super().__init__(msg)
        self.component = component
        self.node = node


class SingularRecovery(ClabError):
    pass


# --- carleman ---------------------------------------------------------------

class WeightGridMismatch(ClabError):
    pass


class EmptyCorpus(ClabError):
    pass


# --- stability --------------------------------------------------------------

class ClassEmpty(ClabError):
    pass


class RejectionExhausted(ClabError):
    pass


class ZeroObservation(ClabError):
    """Observation norm vanished for a nonzero source.

    Under the stability theory this cannot happen for admissible data, so any
    occurrence is a high-interest diagnostic rather than a routine failure.
    """


class ProjectionFailure(ClabError):
    pass


# --- cli --------------------------------------------------------------------

class ConfigParse(ClabError):
    pass


class Io(ClabError):
    pass
