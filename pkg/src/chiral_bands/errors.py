"""Exception hierarchy shared by all modules."""


class ChiralBandsError(Exception):
    """Base class for every error raised by the package."""


class InvalidParameter(ChiralBandsError, ValueError):
    pass


class InvalidInput(ChiralBandsError, ValueError):
    pass


class SingularSeparation(ChiralBandsError, ValueError):
    """Two emitters sit on top of each other (|r| below threshold)."""


class DegenerateReference(ChiralBandsError, ValueError):
    """Frame reference vector is parallel to the quantization axis."""


class UndefinedPhase(ChiralBandsError, ValueError):
    """Azimuth requested for a point on the quantization axis."""


class NotASymmetry(ChiralBandsError):
    """Candidate orthogonal map does not carry the lattice onto itself."""

    def __init__(self, message, distance=float("nan")):
        super().__init__(message)
        self.distance = distance


class NumericalFailure(ChiralBandsError, RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class RefineGrid(ChiralBandsError, RuntimeError):
    """Band tracking lost continuity between two neighbouring k-points."""

    def __init__(self, message, interval=None, overlap=float("nan")):
        super().__init__(message)
        self.interval = interval
        self.overlap = overlap


class ManifoldNotIsolated(ChiralBandsError, ValueError):
    pass


class TopologyUnconverged(ChiralBandsError):
    """Zak phase changed by more than quant_tol when the grid was halved."""
