"""Exception hierarchy shared by every pmcu subsystem."""


class PmcuError(Exception):
    pass


# -- machine ---------------------------------------------------------------

class ConfigError(PmcuError):
    pass


class NoTasks(PmcuError):
    pass


class KernelFault(PmcuError):
    """A scheduler hook broke its contract (e.g. picked a non-runnable task)."""


class NotRunnable(PmcuError):
    pass


class UnbalancedEnable(PmcuError):
    pass


class TraceDisabled(PmcuError):
    pass


class StackExhausted(PmcuError):
    pass


# -- memory ----------------------------------------------------------------

class ImageLayoutError(PmcuError):
    pass


class ImageFormatError(PmcuError):
    pass


class AllocError(PmcuError):
    def __init__(self, message: str = "", address: int | None = None):
        super().__init__(message)
        self.address = address


class OutOfMemory(AllocError):
    pass


class DoubleFree(AllocError):
    pass


class InvalidFree(AllocError):
    pass


# -- HAL -------------------------------------------------------------------

class HalError(PmcuError):
    pass


class UnboundSlot(HalError):
    pass


class WrongCategory(UnboundSlot):
    """Slot exists but is bound to a different peripheral category."""


class EndOfInput(HalError):
    pass


class CaptureParseError(HalError):
    pass


class InterfaceUnavailable(HalError):
    pass


class PeerMissing(HalError):
    pass


class FrameTooLarge(HalError):
    pass


class MediumGeometryError(HalError):
    pass


class BlockOutOfRange(HalError):
    pass


class ShortWrite(HalError):
    pass


# -- kernel ----------------------------------------------------------------

class TimedOut(PmcuError):
    pass


class AtMax(PmcuError):
    pass


# -- harness ---------------------------------------------------------------

class UnknownFirmware(PmcuError):
    pass


class SourceExhausted(PmcuError):
    pass
