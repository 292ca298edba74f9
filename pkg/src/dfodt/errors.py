"""Exception hierarchy."""


class DFODTError(Exception):
    """base class for package errors"""


class InvariantError(DFODTError, ValueError):
    """a value violates a type invariant"""


class GridMismatchError(DFODTError, ValueError):
    """arrays or grids that must agree do not"""


class FormatError(DFODTError):
    """base class for file-format problems"""


class MalformedHeaderError(FormatError):
    pass


class PayloadLengthError(FormatError):
    pass


class UnsupportedVersionError(FormatError):
    pass


class SeparabilityError(DFODTError, ValueError):
    """off-axis sideband overlaps the baseband or leaves the Nyquist square"""


class LowSNRError(DFODTError):
    """hologram sideband is indistinguishable from the noise floor"""


class ZeroAmplitudeError(DFODTError, ValueError):
    """field amplitude too small to take a complex logarithm"""


class EvanescentError(DFODTError, ValueError):
    """illumination does not propagate"""


class DegenerateReconstructionError(DFODTError):
    """too many voxels fell outside the physical range during RI conversion"""


class UndefinedCorrelationError(DFODTError, ValueError):
    """correlation of a constant volume"""


class ConfigError(DFODTError, ValueError):
    """invalid run configuration"""


class PhaseResidueWarning(UserWarning):
    """phase map contains residues; unwrapping is path dependent"""
