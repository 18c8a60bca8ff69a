"""Exception types shared across the package."""


class SspnpError(Exception):
    """Base class for all errors raised by this package."""


class NonConvergence(SspnpError):
    """Newton iteration failed after the damping budget was exhausted."""


class SingularJacobian(SspnpError):
    """The linearized collocation system is rank-deficient beyond rescue."""


class MeshBudgetExceeded(SspnpError):
    """Adaptive refinement would exceed the mesh-point cap."""


class OutOfDomain(SspnpError):
    """Evaluation abscissa lies outside [-1, 1]."""


class DimensionMismatch(SspnpError):
    """A state vector or matrix has the wrong shape for the system."""


class NeutralityViolated(SspnpError):
    """Boundary concentrations carry a net charge on at least one side."""

    def __init__(self, side: str, imbalance: float):
        self.side = side
        self.imbalance = imbalance
        super().__init__(
            f"charge neutrality violated on the {side} boundary: "
            f"sum z_i * c_i = {imbalance:.3e}"
        )


class NonPositiveScale(SspnpError):
    """A physical scale (length, temperature, ...) is not positive."""


class InvalidFormulation(SspnpError):
    """The requested boundary-value formulation is ill-posed."""


class NegativeConcentration(SspnpError):
    """A converged solution has a non-positive concentration somewhere."""


class TooFewPoints(SspnpError):
    """A traced curve has too few points for the requested analysis."""


class OddFoldCount(SspnpError):
    """A fold list with an odd number of entries cannot bound multiplicity intervals."""


class ConvergedToWrongFold(SspnpError):
    """The augmented solve converged, but far from the seeding fold.

    The converged fold is still a valid turning point; it is attached as
    the ``point`` attribute so callers may keep it.
    """

    def __init__(self, message: str, point):
        self.point = point
        super().__init__(message)


class ConfigError(SspnpError):
    """An experiment configuration file failed to parse or validate."""
