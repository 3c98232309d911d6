"""Bug classes, access violations and the crash classifier."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any

from . import errors


class BugClass(str, enum.Enum):
    DivByZero = "DivByZero"
    IntegerOverflow = "IntegerOverflow"
    StackOverflow = "StackOverflow"
    HeapOverflow = "HeapOverflow"
    NullDeref = "NullDeref"
    DoubleFree = "DoubleFree"
    UseAfterFree = "UseAfterFree"
    WildAccess = "WildAccess"
    KernelFault = "KernelFault"

    def __str__(self) -> str:
        return self.value


class AccessKind(str, enum.Enum):
    Read = "read"
    Write = "write"


@dataclass(frozen=True)
class Violation:
    """Result of a failed `check_access`: the first offending byte and its class."""

    bug_class: BugClass
    address: int
    length: int
    kind: AccessKind
    fault_address: int

    def describe(self) -> str:
        return (f"{self.kind.value} of {self.length} at {self.address:#010x} "
                f"hit {self.bug_class.value} byte {self.fault_address:#010x}")


class IntegerOverflowError(ArithmeticError):
    """Raised by the checked arithmetic helpers in :mod:`pmcu.arith`."""


@dataclass(frozen=True)
class StackOverflowFault:
    task: int
    used: int
    size: int


@dataclass(frozen=True)
class HookFault:
    detail: str


@dataclass
class CrashReport:
    bug_class: BugClass
    task: int | None
    detail: str
    operation: str
    trace_suffix: list = field(default_factory=list)

    def dedup_key(self) -> tuple:
        """(class, operation, suffix shape); timestamps and sequence numbers are ignored
        so the same bug reached after different amounts of input dedups together."""
        import hashlib

        shape = repr([(e.kind, e.task, e.to, e.info) for e in self.trace_suffix])
        return (self.bug_class, self.operation, hashlib.blake2b(shape.encode(), digest_size=8).hexdigest())


def classify_crash(raw: Any) -> BugClass:
    """Map a captured violation or fault onto exactly one :class:`BugClass`."""
    if isinstance(raw, Violation):
        return raw.bug_class
    if isinstance(raw, BugClass):
        return raw
    if isinstance(raw, errors.DoubleFree):
        return BugClass.DoubleFree
    if isinstance(raw, errors.InvalidFree):
        # releasing a pointer the allocator never handed out
        return BugClass.WildAccess
    if isinstance(raw, (StackOverflowFault, RecursionError)):
        return BugClass.StackOverflow
    if isinstance(raw, ZeroDivisionError):
        return BugClass.DivByZero
    if isinstance(raw, (IntegerOverflowError, OverflowError)):
        return BugClass.IntegerOverflow
    if isinstance(raw, (HookFault, errors.KernelFault)):
        return BugClass.KernelFault
    raise TypeError(f"not a classifiable fault: {raw!r}")
