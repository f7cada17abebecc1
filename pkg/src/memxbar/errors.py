"""Exception types shared across the simulator."""


class MemxbarError(Exception):
    """Base class for all simulator errors."""


class ConfigError(MemxbarError):
    """Bad configuration file or key. Carries file/line context when available."""

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f"{path}:" if line is None else f"{path}:{line}:"
        super().__init__(f"{loc} {message}".strip())
        self.path = path
        self.line = line


class CsvFormatError(MemxbarError):
    """Malformed CSV input; message names the offending row/column."""


class NonConvergence(MemxbarError):
    """An iterative solve failed to reach its tolerance within its iteration budget."""


class StepTooLarge(MemxbarError):
    """Even the minimum integrator sub-step violates the local error control."""


class ReadVoltageOutOfRange(MemxbarError):
    """Read voltage outside the safe (0, 0.25 V] window."""


class CodeOutOfRange(MemxbarError):
    """DAC code outside 0..2^bits-1."""


class TargetOutOfRange(MemxbarError):
    """Requested DAC voltage outside the representable range."""


class RefOutOfOpampRange(MemxbarError):
    """Regulator reference outside the opamp input range."""


class RefAboveSupply(MemxbarError):
    """Current-source reference above the supply rail."""


class NegativeCurrent(MemxbarError):
    """Negative column current violates the sourcing read scheme polarity."""


class InconsistentDrive(MemxbarError):
    """DriveSet violates its invariants (conflicting drives on one row/cell)."""


class SingularMatrix(MemxbarError):
    """The network contains a floating subnetwork fed by a current source."""


class AmplitudeOutOfRange(MemxbarError):
    """Write-pulse amplitude outside the mode's legal range."""


class Unreachable(MemxbarError):
    """Programming target outside the achievable conductance range."""


class PreStateNotHRS(MemxbarError):
    """Current-mode write requires the cell to start in HRS."""


class WeightOutOfRange(MemxbarError):
    """Weight outside the declared mapping range."""
