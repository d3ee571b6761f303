"""Exception hierarchy shared across the package."""


class SpherePuError(Exception):
    """Base class for all package-specific errors."""


class DegenerateVector(SpherePuError):
    """Vector norm too small to normalize meaningfully."""


class DimensionMismatch(SpherePuError):
    """Operands have incompatible dimensions."""


class InvalidDimension(SpherePuError):
    """Sphere dimension outside the supported range (d >= 2)."""


class InvalidConcentration(SpherePuError):
    """Non-positive vMF concentration."""


class NumericOverflow(SpherePuError):
    """A numeric evaluation lost all precision or left the float range."""


class DegenerateThreshold(SpherePuError):
    """Bayes threshold outside [-kappa, kappa]: classification is constant."""


class DegenerateResultant(SpherePuError):
    """Sample mean resultant too small to define a mean direction."""


class EmptyBatch(SpherePuError):
    """Loss term received an empty batch."""


class BatchTooSmall(SpherePuError):
    """Pairwise term needs at least two batch elements."""


class DegenerateEmbedding(SpherePuError):
    """Pre-normalization embedding collapsed below the norm floor."""


class DegeneratePrototype(SpherePuError):
    """Prototype norm too small to re-project onto the sphere."""


class StaleCache(SpherePuError):
    """Backward pass received a cache from a different model version."""


class InvalidSpec(SpherePuError):
    """Configuration or synthetic-data specification is invalid."""


class ShapeMismatch(SpherePuError):
    """Parameter and gradient pytrees disagree in shape."""


class InsufficientData(SpherePuError):
    """Dataset lacks the rows needed to run training."""


class InsufficientPositives(SpherePuError):
    """Not enough positive rows to build the requested PU split."""


class IoFailure(SpherePuError):
    """Filesystem operation failed."""


class FormatViolation(SpherePuError):
    """A data file does not conform to the documented format."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NoPositives(SpherePuError):
    """Metric undefined without at least one positive label."""


class SingleClass(SpherePuError):
    """Metric undefined unless both classes are present."""


class NumericAbort(SpherePuError):
    """Training produced a non-finite parameter or loss."""


class LabelAccessViolation(SpherePuError):
    """Ground-truth labels of unlabeled rows read outside an evaluation context."""
