"""Exception hierarchy shared by all exgap modules."""


class ExgapError(Exception):
    """Base class for every error raised by the package."""


class ParseError(ExgapError):
    """The model file is not valid JSON or does not follow the schema."""


class InvalidModel(ExgapError):
    """A model invariant is violated; the message names the offending field."""


class InfiniteRate(ExgapError):
    """A rate would require a moment of the exchange measure that diverges."""


class SingularSystem(ExgapError):
    """A linear solve for an invariant measure failed."""


class NullVectorNotUnique(ExgapError):
    """The particle generator has no unique invariant measure."""


class UnsupportedFamily(ExgapError):
    """The operation has no meaning for this kernel family."""


class NoEdges(ExgapError):
    """No pair of vertices carries positive random-walk flow."""


class TooLarge(ExgapError):
    """The configuration space exceeds the state-count cap."""


class NotConverged(ExgapError):
    """An eigensolver failed to converge."""


class AsymmetryDetected(ExgapError):
    """A generator expected to be reversible is not symmetrizable."""


class MatchFailure(ExgapError):
    """Eigenvalues of a lower level could not be matched at a higher level."""


class ComplementEmpty(ExgapError):
    """There are no new eigenvalues at the requested level."""


class RateOverflow(ExgapError):
    """The truncated jump rate is too large to simulate."""


class DegenerateWindow(ExgapError):
    """Too few usable sample points to estimate a decay rate."""


class InvariantViolation(ExgapError):
    """A simulated trajectory left its admissible state space."""
