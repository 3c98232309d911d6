"""Built-in demo firmware: echo, the two-task scheduling scenario, and the bug corpus.

A firmware is a ``setup(machine, hal)`` callable that creates tasks (and may
bind extra peripherals) and returns the scheduler hooks to start with, or
``None`` for the machine's built-in round-robin.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

from . import arith
from .core import Machine, SchedulerHooks
from .errors import EndOfInput, UnknownFirmware
from .faults import BugClass
from .hal import PeripheralRegistry
from .memory import ImageSections
from .rtos import Kernel, MessageQueue

Setup = Callable[[Machine, PeripheralRegistry], Optional[SchedulerHooks]]

INPUT_SLOT = "uart0"


@dataclass(frozen=True)
class Firmware:
    name: str
    setup: Setup
    description: str = ""
    image: ImageSections | None = None
    expected: BugClass | None = None     # bug class a corpus demo is built to trigger
    input_slot: str = INPUT_SLOT


_REGISTRY: dict[str, Firmware] = {}


def register(fw: Firmware) -> Firmware:
    _REGISTRY[fw.name] = fw
    return fw


def firmware(name: str, description: str = "", expected: BugClass | None = None):
    def deco(setup: Setup) -> Setup:
        register(Firmware(name, setup, description or (setup.__doc__ or "").strip(), expected=expected))
        return setup
    return deco


def lookup(ref: str | Firmware) -> Firmware:
    if isinstance(ref, Firmware):
        return ref
    try:
        return _REGISTRY[ref]
    except KeyError:
        raise UnknownFirmware(f"no firmware named {ref!r}") from None


def names() -> list[str]:
    return sorted(_REGISTRY)


def corpus() -> list[Firmware]:
    return [fw for fw in _REGISTRY.values() if fw.expected is not None]


# -- functional demos ----------------------------------------------------------

@firmware("empty")
def _empty(m, hal):
    """One task that exits immediately."""
    m.task_create(m.task_exit, name="empty")


@firmware("echo")
def _echo(m, hal):
    """Copy everything read from uart0 back to uart0."""
    def main():
        while True:
            try:
                chunk = hal.io_read("uart0", 64)
            except EndOfInput:
                break
            hal.io_write("uart0", chunk)
        m.task_exit()
    m.task_create(main, name="echo")


TWO_TASK_ROUNDS = 120


@firmware("two-task")
def _two_task(m, hal):
    """Two busy tasks sharing the CPU purely through system-tick preemption."""
    def worker(tag: bytes):
        for _ in range(TWO_TASK_ROUNDS):
            m.checkpoint()
        hal.io_write("uart0", tag)
        m.task_exit()
    m.task_create(worker, name="A", args=(b"A",))
    m.task_create(worker, name="B", args=(b"B",))


@firmware("tlv")
def _tlv(m, hal):
    """Parse [len][bytes] records into a 16-byte heap buffer; an oversized len overflows it."""
    def main():
        buf = m.malloc(16)
        try:
            while True:
                (n,) = hal.io_read("uart0", 1)
                body = b""
                while len(body) < n:
                    body += hal.io_read("uart0", n - len(body))
                m.store(buf, body)
                hal.io_write("uart0", m.load(buf, min(n, 16)))
        except EndOfInput:
            pass
        m.free(buf)
        m.task_exit()
    m.task_create(main, name="tlv")


@firmware("pipeline")
def _pipeline(m, hal):
    """Producer/consumer over a kernel message queue; the consumer echoes items to uart0."""
    k = Kernel(m)
    q = MessageQueue(k, capacity=4, item_size=1)

    def producer():
        try:
            while True:
                for b in hal.io_read("uart0", 8):
                    q.send(bytes([b]))
        except EndOfInput:
            q.send(b"\0")
        m.task_exit()

    def consumer():
        while (item := q.receive()) != b"\0":
            hal.io_write("uart0", item)
        m.task_exit()

    k.spawn(consumer, priority=2, name="consumer")
    k.spawn(producer, priority=1, name="producer")
    return k.hooks()


# -- bug corpus: each injects one classic bug into an otherwise empty kernel task --

def _corpus_task(m: Machine, body: Callable[[], None]):
    k = Kernel(m)

    def task():
        body()
        m.task_exit()

    k.spawn(task, priority=1, name="buggy")
    return k.hooks()


@firmware("div-by-zero-demo", expected=BugClass.DivByZero)
def _div0(m, hal):
    """Integer division by a zero-initialised global."""
    divisor_addr = m.config.memory_map.sram.origin  # first word of .bss
    return _corpus_task(m, lambda: arith.div(100, m.load_u32(divisor_addr)))


@firmware("integer-overflow-demo", expected=BugClass.IntegerOverflow)
def _intov(m, hal):
    """Signed 32-bit addition past INT32_MAX."""
    def body():
        acc = 0x7FFF_FFF0
        for _ in range(32):
            acc = arith.add(acc, 1)
    return _corpus_task(m, body)


@firmware("stack-overflow-demo", expected=BugClass.StackOverflow)
def _stackov(m, hal):
    """Unbounded recursion with a 256-byte frame per call."""
    def recurse(depth):
        with m.stack_frame(256):
            recurse(depth + 1)
    return _corpus_task(m, lambda: recurse(0))


@firmware("heap-overflow-demo", expected=BugClass.HeapOverflow)
def _heapov(m, hal):
    """Write one byte past the end of a 24-byte heap block."""
    def body():
        p = m.malloc(24)
        m.store(p, b"\x11" * 24)
        m.store(p + 24, b"\x22")
    return _corpus_task(m, body)


@firmware("null-deref-demo", expected=BugClass.NullDeref)
def _nullderef(m, hal):
    """Store through a null pointer."""
    return _corpus_task(m, lambda: m.store_u32(0, 0xDEADBEEF))


@firmware("double-free-demo", expected=BugClass.DoubleFree)
def _doublefree(m, hal):
    """Release the same heap block twice."""
    def body():
        p = m.malloc(32)
        m.free(p)
        m.free(p)
    return _corpus_task(m, body)


@firmware("use-after-free-demo", expected=BugClass.UseAfterFree)
def _uaf(m, hal):
    """Read a heap block after releasing it."""
    def body():
        p = m.malloc(32)
        m.store(p, b"secret")
        m.free(p)
        m.load(p, 4)
    return _corpus_task(m, body)
