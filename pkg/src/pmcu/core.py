"""The portable MCU machine: tasks, exclusive handoff, system tick, IRQ masking.

Each task body runs in its own greenlet. Only the machine ever switches
greenlets, so exactly one task makes progress at a time. Ticks are delivered
at checkpoints, i.e. every call a task makes into the machine, HAL or kernel.
"""

from __future__ import annotations

import enum
import hashlib
import random
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Callable

import greenlet

from . import trace as tr
from .errors import AllocError, ConfigError, NoTasks, NotRunnable, PmcuError, TraceDisabled
from .faults import (AccessKind, BugClass, CrashReport, HookFault, IntegerOverflowError,
                     StackOverflowFault, classify_crash)
from .kernels import CpuCore
from .memory import ImageSections, MachineMemory, MemoryMap, StackRegion

TaskId = int

CRASH_SUFFIX = 32


class TickMode(str, enum.Enum):
    Deterministic = "det"
    VirtualTime = "vt"


@dataclass(frozen=True)
class TickConfig:
    """``period`` counts checkpoints (Deterministic) or CPU microseconds (VirtualTime)."""

    mode: TickMode = TickMode.Deterministic
    period: int = 10
    enabled: bool = True

    def __post_init__(self):
        object.__setattr__(self, "mode", TickMode(self.mode))   # accepts "det" / "vt"


@dataclass(frozen=True)
class MachineConfig:
    memory_map: MemoryMap = field(default_factory=MemoryMap)
    tick: TickConfig = field(default_factory=TickConfig)
    step_limit: int = 0
    trace_enabled: bool = True
    rng_seed: int = 0


class TaskState(str, enum.Enum):
    Ready = "Ready"
    Running = "Running"
    Blocked = "Blocked"
    Exited = "Exited"


@dataclass(eq=False)
class TaskControlBlock:
    id: TaskId
    name: str
    priority: int
    entry: Callable
    args: tuple
    stack: StackRegion
    stack_size: int
    state: TaskState = TaskState.Ready
    block_reason: Any = None
    wake_token: bool = False
    glet: greenlet.greenlet | None = None

    @property
    def stack_region(self) -> tuple[int, int]:
        return self.stack.base, self.stack.top


@dataclass
class InterruptState:
    enabled: bool = True
    pending: bool = False
    nesting: int = 0


class TickOutcome(str, enum.Enum):
    Serviced = "Serviced"
    Deferred = "Deferred"


class Outcome(str, enum.Enum):
    Halted = "Halted"
    Timeout = "Timeout"
    Crashed = "Crashed"


@dataclass
class RunResult:
    outcome: Outcome
    crash: CrashReport | None = None


def _first_ready(m: "Machine", after: TaskId | None = None) -> TaskId | None:
    n = len(m.tasks)
    start = 0 if after is None else after + 1
    for k in range(n):
        t = m.tasks[(start + k) % n]
        if t.state is TaskState.Ready:
            return t.id
    return None


def _rr_tick(m: "Machine") -> TaskId | None:
    nxt = _first_ready(m, m.current)
    return m.current if nxt is None else nxt


@dataclass
class SchedulerHooks:
    """Kernel callbacks. Every hook runs with interrupts implicitly disabled.

    Only ``on_tick`` is required. The optional hooks default to a round robin
    over task ids driven purely by task states.
    """

    on_tick: Callable[["Machine"], TaskId | None] = _rr_tick
    on_task_exit: Callable[["Machine", TaskId], TaskId | None] | None = None
    on_idle: Callable[["Machine"], bool] | None = None
    on_start: Callable[["Machine"], TaskId] | None = None
    on_block: Callable[["Machine", TaskId], TaskId | None] | None = None
    on_wake: Callable[["Machine", TaskId], None] | None = None
    on_preempt: Callable[["Machine"], TaskId | None] | None = None


class TaskKilled(greenlet.GreenletExit):
    """Thrown into suspended task contexts when a finished machine is torn down."""


class _StopRun(BaseException):
    pass


class Machine(CpuCore):
    def __init__(self, config: MachineConfig | None = None, image: ImageSections | None = None):
        config = config or MachineConfig()
        tick = config.tick
        if tick.enabled and tick.period <= 0:
            raise ConfigError("tick period must be positive when the tick is enabled")
        if config.step_limit < 0:
            raise ConfigError("step_limit must be >= 0")
        try:
            config.memory_map.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        self.config = config
        self.memory = MachineMemory(config.memory_map)
        self.memory.reset(image or ImageSections())
        self.tasks: list[TaskControlBlock] = []
        self.hooks: SchedulerHooks | None = None
        self.rng = random.Random(config.rng_seed)
        self.result: RunResult | None = None
        self.peripherals = None
        self._last: TaskId | None = None
        self._controller: greenlet.greenlet | None = None
        mode = 0 if not tick.enabled else (1 if tick.mode is TickMode.Deterministic else 2)
        self._core_setup(tick.period, mode, config.step_limit,
                         [] if config.trace_enabled else None, tr.TraceEvent,
                         self.memory.sram, self.memory.shadow, config.memory_map.sram.origin,
                         self.memory.checked)

    @property
    def irq(self) -> InterruptState:
        return InterruptState(self.irq_enabled, self.irq_pending, self.irq_nesting)

    # -- tracing ------------------------------------------------------------

    def _step_limit_hit(self) -> None:
        if self.result is None:
            self._stop(RunResult(Outcome.Timeout))

    def trace(self) -> list[tr.TraceEvent]:
        if self.trace_list is None:
            raise TraceDisabled("machine was built with trace_enabled=False")
        return list(self.trace_list)

    def trace_text(self) -> str:
        return tr.dumps(self.trace())

    # -- tasks --------------------------------------------------------------

    def task_create(self, entry: Callable, priority: int = 0, stack_size: int = 4096,
                    name: str = "", args: tuple = ()) -> TaskId:
        if self.finished:
            raise PmcuError("machine already finished")
        if stack_size <= 0:
            raise ValueError("stack_size must be positive")
        stack = self.memory.carve_stack(stack_size)
        tid = len(self.tasks)
        tcb = TaskControlBlock(tid, name or f"task{tid}", priority, entry, tuple(args), stack, stack_size)
        self.tasks.append(tcb)
        return tid

    def task(self, tid: TaskId | None = None) -> TaskControlBlock:
        return self.tasks[self.current if tid is None else tid]

    def live_tasks(self) -> int:
        return sum(t.state is not TaskState.Exited for t in self.tasks)

    # -- run loop -----------------------------------------------------------

    def start(self, hooks: SchedulerHooks | None = None) -> RunResult:
        if not self.tasks:
            raise NoTasks("machine_start with zero tasks")
        if self.live or self.finished:
            raise PmcuError("machine already started")
        self.hooks = hooks or SchedulerHooks()
        self._controller = greenlet.getcurrent()
        self.live = True
        self.deadline = time.process_time_ns() + self.tick_period * 1000
        try:
            on_start = self.hooks.on_start
            first = self._call_hook(on_start) if on_start else _first_ready(self)
            t = self._runnable(first, "on_start")
            t.state = TaskState.Running
            self.current = t.id
            self._emit(tr.TASK_START, t.id)
            self._glet(t).switch()
        except _StopRun:
            pass
        finally:
            self.live = False
            self.finished = True
            self._teardown()
        if self.result is None:
            raise PmcuError("task context returned without stopping the machine")
        return self.result

    def _glet(self, t: TaskControlBlock) -> greenlet.greenlet:
        if t.glet is None:
            t.glet = greenlet.greenlet(self._task_main, parent=self._controller)
        return t.glet

    def _teardown(self) -> None:
        for t in self.tasks:
            g = t.glet
            if g is not None and g and not g.dead:
                g.throw(TaskKilled)
            t.glet = None

    def _stop(self, result: RunResult | None = None) -> None:
        if result is not None and self.result is None:
            self.result = result
        self.live = False
        if greenlet.getcurrent() is self._controller:
            raise _StopRun
        self._controller.switch()
        raise TaskKilled  # only reached if a dead machine's task is resumed

    def _task_main(self, *_):
        t = self.tasks[self.current]
        try:
            t.entry(*t.args)
        except (ZeroDivisionError, IntegerOverflowError, OverflowError, RecursionError) as exc:
            self.crash(classify_crash(exc), f"{type(exc).__name__}: {exc}", type(exc).__name__)
        self.task_exit()

    # -- hooks --------------------------------------------------------------

    def _call_hook(self, fn, *args):
        enabled, nesting = self.irq_enabled, self.irq_nesting
        self.irq_enabled = False
        self.irq_nesting = nesting + 1
        self.in_hook += 1
        try:
            return fn(self, *args)
        except (TaskKilled, _StopRun):
            raise
        except Exception as exc:  # kernel bug inside a hook
            self.crash(BugClass.KernelFault, f"hook {getattr(fn, '__name__', fn)} raised {exc!r}", "hook")
        finally:
            self.in_hook -= 1
            self.irq_enabled, self.irq_nesting = enabled, nesting

    def _runnable(self, tid, hook: str) -> TaskControlBlock:
        if not isinstance(tid, int) or not 0 <= tid < len(self.tasks):
            self.crash(classify_crash(HookFault(f"{hook} returned {tid!r}")), f"{hook} returned invalid task {tid!r}", hook)
        t = self.tasks[tid]
        if t.state not in (TaskState.Ready, TaskState.Running):
            self.crash(BugClass.KernelFault, f"{hook} picked task {tid} in state {t.state.value}", hook)
        return t

    # -- switching ------------------------------------------------------------

    def _switch(self, target: TaskId) -> None:
        prev = self.current if self.current is not None else self._last
        if self.current is not None:
            p = self.tasks[self.current]
            if p.state is TaskState.Running:
                p.state = TaskState.Ready
            self._check_stack(p)
        t = self.tasks[target]
        t.state = TaskState.Running
        self.current = target
        self._emit(tr.TASK_SWITCH, prev, target)
        g = self._glet(t)
        if greenlet.getcurrent() is not g:
            g.switch()

    def _handoff(self, target: TaskId | None, hook: str) -> None:
        if target is None:
            self._idle()
        else:
            self._switch(self._runnable(target, hook).id)

    def _idle(self) -> None:
        """Spin the tick with no task running until the kernel picks one."""
        self._last = self.current
        self.current = None
        on_idle = self.hooks.on_idle
        while True:
            if not self.live_tasks():
                self._stop(RunResult(Outcome.Halted))
            if on_idle is None or not self._call_hook(on_idle):
                # nothing can wake the blocked tasks any more
                self._stop(RunResult(Outcome.Halted))
            self.vt += self.tick_period if self.tick_mode == 1 else 1
            self.countdown = self.tick_period
            self._emit(tr.TICK_DELIVERED)
            target = self._call_hook(self.hooks.on_tick)
            if target is not None:
                self._switch(self._runnable(target, "on_tick").id)
                return

    def systick_deliver(self) -> TickOutcome:
        if not self.live or self.current is None:
            return TickOutcome.Deferred
        if not self.irq_enabled:
            self.irq_pending = True
            self._emit(tr.TICK_DEFERRED)
            return TickOutcome.Deferred
        self._service_tick()
        return TickOutcome.Serviced

    def _service_tick(self) -> None:
        self._emit(tr.TICK_DELIVERED)
        target = self._call_hook(self.hooks.on_tick)
        if target is None or target == self.current:
            if target is None and self.tasks[self.current].state is not TaskState.Running:
                self._idle()
            return
        self._switch(self._runnable(target, "on_tick").id)

    # -- interrupt masking ----------------------------------------------------

    @contextmanager
    def critical(self):
        self.disable_irq()
        try:
            yield
        finally:
            self.enable_irq()

    # -- directed handoff, blocking, exit -------------------------------------

    def yield_to(self, target: TaskId) -> None:
        if self.finished:
            return
        t = self.tasks[target]
        if t.state in (TaskState.Blocked, TaskState.Exited):
            raise NotRunnable(f"task {target} is {t.state.value}")
        if target == self.current:
            return
        self._switch(target)

    def block(self, reason: Any = None) -> None:
        """Suspend the running task until :meth:`wake`; returns once rescheduled."""
        if self.finished:
            return
        t = self.tasks[self.current]
        if t.wake_token:
            t.wake_token = False
            return
        t.state = TaskState.Blocked
        t.block_reason = reason
        self._emit(tr.TASK_BLOCK, t.id)
        on_block = self.hooks.on_block
        nxt = self._call_hook(on_block, t.id) if on_block else _first_ready(self, t.id)
        self._handoff(nxt, "on_block")

    def wake(self, tid: TaskId) -> None:
        if self.finished:
            return
        t = self.tasks[tid]
        if t.state is TaskState.Blocked:
            t.state = TaskState.Ready
            t.block_reason = None
            self._emit(tr.TASK_WAKE, tid)
            if self.hooks is not None and self.hooks.on_wake:
                self._call_hook(self.hooks.on_wake, tid)
            self.preempt_point()
        elif t.state is not TaskState.Exited:
            # woken before it reached block(); the next block() returns at once
            t.wake_token = True

    def preempt_point(self) -> None:
        """Let the kernel preempt the running task, if interrupts allow it right now."""
        if (not self.live or self.in_hook or self.irq_nesting or self.current is None
                or self.hooks.on_preempt is None):
            return
        target = self._call_hook(self.hooks.on_preempt)
        if target is not None and target != self.current:
            self._switch(self._runnable(target, "on_preempt").id)

    def task_exit(self):
        t = self.tasks[self.current]
        if self.irq_nesting:
            self.crash(BugClass.KernelFault, f"task {t.id} exited with interrupts disabled", "exit")
        self._check_stack(t)
        t.state = TaskState.Exited
        self._emit(tr.TASK_EXIT, t.id)
        if not self.live_tasks():
            self._stop(RunResult(Outcome.Halted))
        on_exit = self.hooks.on_task_exit
        nxt = self._call_hook(on_exit, t.id) if on_exit else _first_ready(self, t.id)
        self._handoff(nxt, "on_task_exit")
        raise PmcuError("exited task was rescheduled")

    # -- faults ---------------------------------------------------------------

    def crash(self, bug: BugClass, detail: str, operation: str = ""):
        """Record a classified bug for the running task and stop the machine."""
        if self.result is None:
            report = CrashReport(bug, self.current, detail, operation)
            self.result = RunResult(Outcome.Crashed, report)
            self._emit(tr.CRASH, self.current, info=bug.value)
            if self.trace_list is not None:
                report.trace_suffix = self.trace_list[-CRASH_SUFFIX:]
        self._stop()

    def _check_stack(self, t: TaskControlBlock) -> None:
        used, overflowed = self.memory.stack_check(t.stack)
        if overflowed:
            fault = StackOverflowFault(t.id, used, t.stack.top - t.stack.base)
            self.crash(classify_crash(fault), f"task {t.id} exhausted its {fault.size}-byte stack", "stack")

    # -- firmware memory API ----------------------------------------------------

    def _access_slow(self, addr: int, length: int, data: bytes | None):
        kind = AccessKind.Read if data is None else AccessKind.Write
        v = self.memory.check_access(addr, length, kind)
        if v is not None:
            self.crash(classify_crash(v), v.describe(), kind.value)
        if data is None:
            return self.memory.read(addr, length)
        self.memory.write(addr, data)

    def malloc(self, size: int) -> int:
        """Heap allocation; returns 0 (NULL) for size 0 or when the heap is exhausted."""
        self.checkpoint()
        if size <= 0:
            return 0
        try:
            return self.memory.alloc(size)
        except AllocError:
            return 0

    def free(self, addr: int) -> None:
        self.checkpoint()
        if addr == 0:
            return
        try:
            self.memory.free(addr)
        except AllocError as exc:
            self.crash(classify_crash(exc), str(exc), "free")

    @contextmanager
    def stack_frame(self, nbytes: int):
        """Claim ``nbytes`` of the running task's simulated stack for the block's duration."""
        self.checkpoint()
        t = self.tasks[self.current]
        if not self.memory.stack_push(t.stack, nbytes):
            self._check_stack(t)
        try:
            yield t.stack.sp
        finally:
            if not self.finished:
                self.memory.stack_pop(t.stack, nbytes)

    def stack_check(self, tid: TaskId | None = None) -> tuple[int, bool]:
        return self.memory.stack_check(self.task(tid).stack)

    # -- introspection ----------------------------------------------------------

    def state_digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.memory.flash)
        h.update(self.memory.sram)
        h.update(self.memory.shadow)
        h.update(repr([(t.id, t.state.value, t.block_reason) for t in self.tasks]).encode())
        h.update(repr((self.irq, self.current)).encode())
        return h.hexdigest()


def machine_new(config: MachineConfig | None = None, image: ImageSections | None = None) -> Machine:
    return Machine(config, image)
