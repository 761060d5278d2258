"""Exception hierarchy shared across the package."""


class RirForgeError(Exception):
    """Base class for all library-specific errors."""


class AllZeroSignal(RirForgeError):
    """The operation requires a signal with at least one nonzero sample."""


class ShapeMismatch(RirForgeError):
    """Two arrays that must share a shape do not."""


class InvalidGeometry(RirForgeError):
    """A source or receiver lies outside the room."""


class CoincidentPoints(RirForgeError):
    """An image source and the receiver (nearly) coincide."""


class InfeasibleGeometry(RirForgeError):
    """Random pose sampling could not satisfy the margin constraints."""


class InvalidSchedule(RirForgeError):
    """Diffusion schedule parameters are out of range."""


class InvalidConfig(RirForgeError):
    """A network or run configuration violates its constraints."""


class LengthNotDivisible(RirForgeError):
    """Input length is not divisible by the encoder's total stride."""


class GraphConsumed(RirForgeError):
    """backward() was invoked twice on the same recording."""


class CorruptCheckpoint(RirForgeError):
    """Checkpoint file is truncated or malformed."""


class VersionMismatch(RirForgeError):
    """Checkpoint format version or config hash does not match."""


class ZeroTargetResidual(RirForgeError):
    """Early-window target residual has zero energy; metric undefined."""


class NonFiniteLoss(RirForgeError):
    """Training produced a NaN or Inf loss."""
