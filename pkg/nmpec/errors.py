######
# Project       : nmpec
# File          : errors.py
# license       : Apache 2.0
# Description   :
# Exception hierarchy shared by every module of the package.
######


class NmpecError(Exception):
    """Base class of every error raised by nmpec."""


class ConfigError(NmpecError, ValueError):
    """Malformed or inconsistent experiment configuration.

    Args:
        message (str): human readable diagnostic.
        field (str, optional): dotted pointer to the offending entry (e.g. ``run.T``).
    """

    def __init__(self, message: str, field: str = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class DimensionError(NmpecError, ValueError):
    """Operator shapes do not agree or the qubit count is out of range."""


class GridError(NmpecError, ValueError):
    """A time does not lie on the requested uniform grid."""


class BathError(NmpecError, ValueError):
    """Invalid pole table (non-decaying pole, channel mismatch)."""


class NoiseSynthesisError(NmpecError):
    """The circulant embedding of the noise covariance is too far from positive."""


class StepSizeError(NmpecError):
    """Step size incompatible with the coupling (gamma above cap, trace drift)."""


class TrajectoryError(NmpecError):
    """Monte Carlo ensemble unusable (too many aborted or all dead trajectories)."""


class EnumerationError(NmpecError, ValueError):
    """Exact enumeration requested for too many steps."""
