"""Exception types raised across the fiberflux package."""


class FiberFluxError(Exception):
    """Base class for all fiberflux-specific errors."""


class ValidationError(FiberFluxError, ValueError):
    """A domain object violates one of its invariants."""


class DegenerateFiber(FiberFluxError):
    """A fiber (or mean curve) has zero extent and cannot be parameterized."""


class RankDeficient(FiberFluxError):
    """The least-squares system for a series fit is singular."""


class OutOfRange(FiberFluxError, ValueError):
    """A parameter lies outside its admissible interval."""


class EmptyCrossSection(FiberFluxError):
    """A cutting plane intersects no fibers."""


class UnknownChannel(FiberFluxError, KeyError):
    """A requested scalar channel is not present on the bundle."""


class ChannelMismatch(FiberFluxError):
    """Two profiles carry different scalar channels."""


class LengthMismatch(FiberFluxError):
    """Two pointwise sequences differ in length."""


class StalledDescent(FiberFluxError):
    """Gradient backtracking stopped making progress on the distance map."""


class ParseError(FiberFluxError):
    """A file does not conform to its declared format."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class VersionMismatch(ParseError):
    """A file declares an unsupported format version."""


class CountMismatch(ParseError):
    """Declared element counts disagree with the file body."""


class DegenerateVarianceWarning(UserWarning):
    """Both groups have zero variance at some profile points."""


class EmptyCrossSectionWarning(UserWarning):
    """Profile samples with no crossings were filled by interpolation."""


class ConvergenceWarning(UserWarning):
    """An iterative routine returned before reaching its tolerance."""
