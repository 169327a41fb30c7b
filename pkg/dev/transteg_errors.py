"""
Exception hierarchy shared by every TranSteg module.

Every error derives from TranStegError; value-shaped errors also derive from
ValueError so callers that only know the standard library still catch them.
"""


class TranStegError(Exception):
    """Base class for all TranSteg errors."""


# =============================================================================
# WIRE FORMATS
# =============================================================================

class RtpError(TranStegError, ValueError):
    """Malformed RTP, UDP/IPv4 or pcap data."""


class TooShort(RtpError):
    pass


class BadVersion(RtpError):
    pass


class BadPadding(RtpError):
    pass


class FieldOverflow(RtpError):
    pass


class LengthChanged(RtpError):
    pass


class BadMagic(RtpError):
    pass


class Truncated(RtpError):
    pass


# =============================================================================
# CODECS
# =============================================================================

class CodecError(TranStegError, ValueError):
    """Codec input or bitstream problems."""


class WrongLength(CodecError):
    pass


class CorruptFrame(CodecError):
    pass


class BudgetTooSmall(CodecError):
    pass


class UnknownCodec(CodecError):
    pass


# =============================================================================
# ENGINE
# =============================================================================

class EngineError(TranStegError, ValueError):
    """SS/SR transform failures."""


class Infeasible(EngineError):
    """The covert codec does not fit inside the overt payload."""


class PtMismatch(EngineError):
    pass


class WrongPayloadLength(EngineError):
    pass


class CorruptCovertFrame(EngineError):
    pass


class Overflow(EngineError):
    pass


# =============================================================================
# PLANNER
# =============================================================================

class PlannerError(TranStegError, ValueError):
    pass


class MissingCost(PlannerError):
    pass


class LedgerError(PlannerError):
    pass


# =============================================================================
# HARNESS
# =============================================================================

class HarnessError(TranStegError):
    pass


class BadSampleRate(HarnessError, ValueError):
    pass


class BadRatio(HarnessError, ValueError):
    pass


class AudioLoadError(HarnessError):
    pass


class LengthMismatch(HarnessError, ValueError):
    pass


class IoError(HarnessError):
    pass
