class ProtocolBug(AssertionError):
    """An internal protocol invariant was violated."""


class WindowBoundViolation(ProtocolBug):
    """A sender has more multicasts in flight than its ring buffer holds."""


class TotalFailure(ProtocolBug):
    """Every member of the view is suspected."""


class ConfigError(ValueError):
    pass
