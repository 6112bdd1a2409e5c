"""Exception hierarchy shared by every ordpool module."""


class OrdpoolError(Exception):
    """Base class for all errors raised by ordpool."""


class InvalidShapeError(OrdpoolError, ValueError):
    pass


class PartitionError(OrdpoolError, ValueError):
    """Raised when pooling windows do not tile a feature map exactly."""


class RangeError(OrdpoolError, ValueError):
    pass


class ChannelMismatchError(OrdpoolError, ValueError):
    pass


class InvalidKernelError(OrdpoolError, ValueError):
    """Raised when an ordinal kernel leaves the probability simplex."""


class NonFiniteError(OrdpoolError, ValueError):
    pass


class IncompatibleSpecError(OrdpoolError, ValueError):
    pass


class IdxError(OrdpoolError, ValueError):
    """Base class for IDX file parsing errors."""


class IdxMagicError(IdxError):
    pass


class IdxTruncatedError(IdxError):
    pass


class IdxCountMismatchError(IdxError):
    pass
