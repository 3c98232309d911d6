"""Persistent-mode execution: one fresh machine per testcase, crash triage, fuzz stats."""

from __future__ import annotations

import os
import random
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Union

from . import firmware as fwreg
from . import trace as tr
from .core import Machine, MachineConfig, Outcome, SchedulerHooks, TickConfig, TickMode
from .faults import BugClass, CrashReport, classify_crash
from .firmware import Firmware
from .errors import SourceExhausted
from .hal import PeripheralRegistry

__all__ = [
    "DEFAULT_STEP_LIMIT", "Directory", "build_machine", "FuzzStats", "Generator", "MatrixRow", "RunReport",
    "SingleFile", "TestcaseSource", "classify_crash", "corpus_matrix", "run_once", "run_persistent",
]

DEFAULT_STEP_LIMIT = 200_000


@dataclass(frozen=True)
class RunReport:
    outcome: Outcome
    scheduler_events: int
    virtual_time: int
    trace_hash: int
    output: bytes = b""
    crash: CrashReport | None = None

    def summary(self) -> str:
        line = (f"outcome={self.outcome.value} events={self.scheduler_events} "
                f"vt={self.virtual_time} trace={self.trace_hash:016x}")
        if self.crash is not None:
            c = self.crash
            line += f" class={c.bug_class.value} task={c.task} detail={c.detail!r}"
        return line


def build_machine(fw: str | Firmware, testcase: bytes = b"", *, tick_mode: TickMode = TickMode.Deterministic,
                  period: int = 10, seed: int = 0, step_limit: int = DEFAULT_STEP_LIMIT,
                  trace: bool = True) -> tuple[Machine, PeripheralRegistry, bytearray, SchedulerHooks | None]:
    """Fresh machine with ``testcase`` bound as the firmware's input and output captured."""
    fw = fwreg.lookup(fw)
    cfg = MachineConfig(tick=TickConfig(tick_mode, period), step_limit=step_limit,
                        trace_enabled=trace, rng_seed=seed)
    m = Machine(cfg, fw.image)
    hal = PeripheralRegistry(m)
    out = bytearray()
    hal.bind_io(fw.input_slot, testcase, out)
    return m, hal, out, fw.setup(m, hal)


def run_once(firmware: str | Firmware, testcase: bytes = b"", *,
             tick_mode: TickMode = TickMode.Deterministic, period: int = 10, seed: int = 0,
             step_limit: int = DEFAULT_STEP_LIMIT) -> RunReport:
    """Build a fresh machine, feed ``testcase`` as the firmware's input, run it, discard it."""
    fw = fwreg.lookup(firmware)
    m, hal, out, hooks = build_machine(fw, testcase, tick_mode=tick_mode, period=period, seed=seed,
                                step_limit=step_limit)
    try:
        result = m.start(hooks)
    finally:
        hal.close()
    return RunReport(result.outcome, m.events, m.vt, tr.trace_hash(m.trace_list),
                     bytes(out), result.crash)


# -- testcase sources ------------------------------------------------------------

class TestcaseSource:
    """Yields ``(testcase_id, bytes)`` pairs in a reproducible order."""

    __test__ = False  # not a pytest class

    def __iter__(self) -> Iterator[tuple[str, bytes]]:
        raise NotImplementedError


@dataclass(frozen=True)
class SingleFile(TestcaseSource):
    path: Union[str, Path]

    def __iter__(self):
        yield os.path.basename(self.path), Path(self.path).read_bytes()


@dataclass(frozen=True)
class Directory(TestcaseSource):
    path: Union[str, Path]

    def __iter__(self):
        for name in sorted(os.listdir(self.path)):
            p = os.path.join(self.path, name)
            if os.path.isfile(p):
                yield name, Path(p).read_bytes()


@dataclass(frozen=True)
class Generator(TestcaseSource):
    seed: int = 0
    min_len: int = 0
    max_len: int = 64

    def __post_init__(self):
        if not 0 <= self.min_len <= self.max_len:
            raise ValueError("need 0 <= min_len <= max_len")

    def __iter__(self):
        rng = random.Random(self.seed)
        i = 0
        while True:
            yield f"gen-{i:06d}", rng.randbytes(rng.randint(self.min_len, self.max_len))
            i += 1


# -- persistent mode ---------------------------------------------------------------

@dataclass
class FuzzStats:
    execs: int = 0
    crashes: list[tuple[str, CrashReport]] = field(default_factory=list)
    unique: int = 0
    unique_classes: set[BugClass] = field(default_factory=set)
    execs_per_sec: float = 0.0
    distinct_trace_hashes: int = 0
    timeouts: int = 0

    def report(self) -> str:
        lines = [f"execs={self.execs} crashes={len(self.crashes)} unique={self.unique} "
                 f"eps={self.execs_per_sec:.2f} traces={self.distinct_trace_hashes}"]
        lines += [f"crash id={tc} class={c.bug_class.value}" for tc, c in self.crashes]
        return "\n".join(lines) + "\n"


def run_persistent(firmware: str | Firmware, source: TestcaseSource, iterations: int, *,
                   seed: int = 0, **run_kw) -> FuzzStats:
    """Run ``iterations`` testcases from ``source``, each on a freshly built machine."""
    if iterations <= 0:
        raise ValueError("iterations must be > 0")
    fw = fwreg.lookup(firmware)
    it = iter(source)
    stats = FuzzStats()
    keys, hashes = set(), set()
    t0 = time.perf_counter()
    for _ in range(iterations):
        try:
            tc_id, data = next(it)
        except StopIteration:
            raise SourceExhausted(
                f"source yielded {stats.execs} testcases, {iterations} requested") from None
        rep = run_once(fw, data, seed=seed, **run_kw)
        stats.execs += 1
        hashes.add(rep.trace_hash)
        if rep.outcome is Outcome.Timeout:
            stats.timeouts += 1
        if rep.crash is not None:
            stats.crashes.append((tc_id, rep.crash))
            keys.add(rep.crash.dedup_key())
            stats.unique_classes.add(rep.crash.bug_class)
    elapsed = time.perf_counter() - t0
    stats.unique = len(keys)
    stats.distinct_trace_hashes = len(hashes)
    stats.execs_per_sec = stats.execs / elapsed if elapsed > 0 else float("inf")
    return stats


# -- observability matrix ---------------------------------------------------------

@dataclass(frozen=True)
class MatrixRow:
    demo: str
    expected: BugClass
    detected: bool
    observed: BugClass | None
    task: int | None

    def format(self) -> str:
        got = self.observed.value if self.observed else "-"
        return f"{self.demo:<24} expected={self.expected.value:<16} observed={got:<16} detected={'Y' if self.detected else 'N'}"


def corpus_matrix() -> list[MatrixRow]:
    rows = []
    for fw in sorted(fwreg.corpus(), key=lambda f: f.name):
        rep = run_once(fw)
        observed = rep.crash.bug_class if rep.crash else None
        rows.append(MatrixRow(fw.name, fw.expected, observed is fw.expected, observed,
                              rep.crash.task if rep.crash else None))
    return rows
