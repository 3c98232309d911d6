"""Trace events, their byte-stable text form, and replay-based checkers."""

from __future__ import annotations

import hashlib
from typing import Iterable, NamedTuple

TASK_START = "TaskStart"
TASK_SWITCH = "TaskSwitch"
TICK_DELIVERED = "TickDelivered"
TICK_DEFERRED = "TickDeferred"
IRQ_DISABLE = "IrqDisable"
IRQ_ENABLE = "IrqEnable"
TASK_BLOCK = "TaskBlock"
TASK_WAKE = "TaskWake"
TASK_EXIT = "TaskExit"
CRASH = "Crash"

KINDS = (TASK_START, TASK_SWITCH, TICK_DELIVERED, TICK_DEFERRED, IRQ_DISABLE,
         IRQ_ENABLE, TASK_BLOCK, TASK_WAKE, TASK_EXIT, CRASH)


class TraceEvent(NamedTuple):
    seq: int
    kind: str
    t: int
    task: int | None = None     # acting task; the source task for TaskSwitch
    to: int | None = None       # TaskSwitch target
    info: str | None = None     # Crash bug class

    def format(self) -> str:
        line = f"seq={self.seq} t={self.t} kind={self.kind}"
        if self.kind == TASK_SWITCH:
            src = "-" if self.task is None else self.task
            return f"{line} from={src} to={self.to}"
        if self.task is not None:
            line += f" task={self.task}"
        if self.info is not None:
            line += f" class={self.info}"
        return line

    @classmethod
    def parse(cls, line: str) -> "TraceEvent":
        fields = dict(part.split("=", 1) for part in line.split())
        kind = fields["kind"]
        if kind not in KINDS:
            raise ValueError(f"unknown trace kind {kind!r}")

        def num(key):
            v = fields.get(key)
            return None if v is None or v == "-" else int(v)

        if kind == TASK_SWITCH:
            return cls(int(fields["seq"]), kind, int(fields["t"]), num("from"), num("to"))
        return cls(int(fields["seq"]), kind, int(fields["t"]), num("task"), None, fields.get("class"))


def dumps(events: Iterable[TraceEvent]) -> str:
    return "".join(ev.format() + "\n" for ev in events)


def loads(text: str) -> list[TraceEvent]:
    return [TraceEvent.parse(line) for line in text.splitlines() if line.strip()]


def trace_hash(events: Iterable[TraceEvent]) -> int:
    h = hashlib.blake2b(digest_size=8)
    h.update(dumps(events).encode())
    return int.from_bytes(h.digest(), "little")


def diff(a: list[TraceEvent], b: list[TraceEvent]) -> str:
    """Describe the first differing event, or return ``"identical"``."""
    for i, (x, y) in enumerate(zip(a, b)):
        if x != y:
            return f"event {i}: {x.format()} != {y.format()}"
    if len(a) != len(b):
        longer, name = (a, "A") if len(a) > len(b) else (b, "B")
        return f"event {min(len(a), len(b))}: only in {name}: {longer[min(len(a), len(b))].format()}"
    return "identical"


class TraceViolation(AssertionError):
    pass


def replay(events: list[TraceEvent], n_tasks: int) -> None:
    """Re-derive task states from the trace and assert the core invariants.

    Checked: gapless sequence numbers, at most one running task, events only
    from the running task, no switch inside a critical section, per-task
    balanced interrupt nesting, and that a deferred tick is delivered right
    after the enable that brings nesting back to zero.
    """
    state = ["Ready"] * n_tasks
    running: int | None = None
    nesting = 0
    owner: int | None = None
    pending = False
    must_service = False

    def fail(ev, msg):
        raise TraceViolation(f"seq {ev.seq}: {msg}")

    for i, ev in enumerate(events):
        if ev.seq != i:
            fail(ev, f"sequence gap, expected {i}")
        k = ev.kind
        if must_service and k != TICK_DELIVERED:
            fail(ev, "pending tick not serviced at nesting-zero enable")
        if k in (TASK_BLOCK, TASK_EXIT, IRQ_DISABLE, IRQ_ENABLE) and ev.task != running:
            fail(ev, f"{k} by task {ev.task} while {running} runs")
        if k == TASK_START:
            state[ev.task] = "Running"
            running = ev.task
        elif k == TASK_SWITCH:
            if nesting:
                fail(ev, "switch inside a critical section")
            if state[ev.to] in ("Exited", "Blocked"):
                fail(ev, f"switch to {state[ev.to]} task {ev.to}")
            if running is not None:
                state[running] = "Ready"
            state[ev.to] = "Running"
            running = ev.to
        elif k == TASK_BLOCK:
            state[ev.task] = "Blocked"
            running = None
        elif k == TASK_WAKE:
            if state[ev.task] == "Blocked":
                state[ev.task] = "Ready"
        elif k == TASK_EXIT:
            if nesting:
                fail(ev, f"task {ev.task} exited inside a critical section")
            state[ev.task] = "Exited"
            running = None
        elif k == IRQ_DISABLE:
            if nesting and owner != ev.task:
                fail(ev, f"task {ev.task} disabled IRQs held by {owner}")
            nesting += 1
            owner = ev.task
        elif k == IRQ_ENABLE:
            if not nesting:
                fail(ev, f"unbalanced enable by task {ev.task}")
            nesting -= 1
            if nesting == 0:
                owner = None
                must_service = pending
        elif k == TICK_DEFERRED:
            if not nesting:
                fail(ev, "tick deferred with IRQs enabled")
            pending = True
        elif k == TICK_DELIVERED:
            if nesting:
                fail(ev, "tick delivered inside a critical section")
            pending = must_service = False
        if state.count("Running") > 1:
            fail(ev, "two tasks running")
