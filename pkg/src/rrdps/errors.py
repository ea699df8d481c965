"""Exception hierarchy shared by all rrdps modules."""


class RRDPSError(Exception):
    """Base class for errors raised by this package."""


class ConfigurationError(RRDPSError, ValueError):
    """Parameters are individually valid but cannot be combined."""


class DegenerateInputError(RRDPSError, ValueError):
    """A formula is undefined at the supplied point (e.g. 0/0)."""


class InconsistentDataError(RRDPSError, ValueError):
    """Calibration data produced a lower bound above the upper bound."""
