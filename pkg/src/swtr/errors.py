"""Exception classes shared across the package."""


class SwtrError(Exception):
    """Base class for all package-specific errors."""


class DivisionByZeroSeries(SwtrError):
    """Division by a series that is identically zero up to truncation."""


class NotInvertible(SwtrError):
    """Functional inversion of a series without a simple zero at the origin."""


class BranchUndefined(SwtrError):
    """Fractional power whose leading exponent is not compatible with the root order."""


class NonzeroResidue(SwtrError):
    """Primitive requested for a differential whose residue is not negligible."""


class TruncationInsufficient(SwtrError):
    """A contraction or coefficient was requested beyond the sound truncation window."""


class InvalidGauge(SwtrError):
    """Gauge data violating one of the admissibility conditions."""


class DegenerateDisc(SwtrError):
    """Disc data with vanishing linear coefficient (tangency order > 1)."""


class OutOfAnnulus(SwtrError):
    """Evaluation point outside the annulus where local expansions are trusted."""


class SingularCurve(SwtrError):
    """Hyperelliptic curve with colliding branch points."""


class CycleConstructionFailed(SwtrError):
    """The branch-cut pairing or cycle heuristic produced an invalid homology basis."""


class QuadratureNotConverged(SwtrError):
    """Adaptive contour quadrature exceeded its refinement cap."""


class NormalizationSolveFailed(SwtrError):
    """The linear solve normalizing kernel periods failed or is inconsistent."""


class OutOfNeighbourhood(SwtrError):
    """Deformed curve outside the chart neighbourhood of the reference curve."""


class ExtractionNotConverged(SwtrError):
    """Taylor-coefficient extraction did not stabilize under contour refinement."""


class BasisMismatch(SwtrError):
    """Coefficient table expressed in a basis other than the one required."""
