"""A small priority round-robin kernel driven entirely through :mod:`.glue`."""

from __future__ import annotations

import heapq
import itertools
from collections import deque
from dataclasses import dataclass
from typing import Any

from ..core import Machine, RunResult, TaskState
from ..errors import NoTasks
from . import glue

PRIORITIES = 8
FOREVER = None


@dataclass(eq=False)
class Waiter:
    tid: int
    item: Any = None
    done: bool = False
    timed_out: bool = False
    owner: deque | None = None


class Kernel:
    def __init__(self, machine: Machine):
        self.m = machine
        self.ready: list[deque[int]] = [deque() for _ in range(PRIORITIES)]
        self.ticks = 0
        self._timed: list[tuple[int, int, Waiter]] = []
        self._order = itertools.count()
        self._prio: dict[int, int] = {}

    # -- tasks ----------------------------------------------------------------

    def spawn(self, entry, priority: int = 1, stack_size: int = 4096, name: str = "", args=()) -> int:
        if not 0 <= priority < PRIORITIES:
            raise ValueError(f"priority must be in 0..{PRIORITIES - 1}")
        tid = glue.task_create(self.m, entry, priority, stack_size, name, args)
        self._prio[tid] = priority
        self.ready[priority].append(tid)
        return tid

    def start(self) -> RunResult:
        if not self._prio:
            raise NoTasks("kernel_start with no spawned tasks")
        return glue.start(self, self.m)

    def hooks(self):
        """Scheduler hooks for callers that start the machine themselves."""
        return glue.hooks(self)

    def priority(self, tid: int) -> int:
        return self._prio[tid]

    # -- scheduling decisions (called from machine hooks) ----------------------

    def select(self) -> int | None:
        for q in reversed(self.ready):
            if q:
                return q.popleft()
        return None

    def tick(self) -> int | None:
        self.ticks += 1
        while self._timed and self._timed[0][0] <= self.ticks:
            _, _, w = heapq.heappop(self._timed)
            if not w.done:
                w.done = w.timed_out = True
                if w.owner is not None:
                    w.owner.remove(w)
                glue.wake(self.m, w.tid)
        cur = self.m.current
        if cur is not None and self.m.tasks[cur].state is TaskState.Running:
            self.ready[self._prio[cur]].append(cur)
        return self.select()

    def make_ready(self, tid: int) -> None:
        self.ready[self._prio[tid]].append(tid)

    def has_timed_waiters(self) -> bool:
        return any(not w.done for _, _, w in self._timed)

    def preempt_target(self) -> int | None:
        cur = self.m.current
        p = self._prio[cur]
        for q in range(PRIORITIES - 1, p, -1):
            if self.ready[q]:
                self.ready[p].append(cur)
                return self.ready[q].popleft()
        return None

    # -- blocking helpers -----------------------------------------------------

    def add_waiter(self, w: Waiter, timeout: int | None) -> None:
        """Arm a timeout for ``w``; call inside a critical section."""
        if timeout is not None:
            heapq.heappush(self._timed, (self.ticks + timeout, next(self._order), w))

    def wait(self, w: Waiter, reason) -> None:
        while not w.done:
            glue.block(self.m, reason)

    # -- task-facing API ------------------------------------------------------

    def delay(self, ticks: int) -> None:
        m = self.m
        if ticks <= 0:
            m.checkpoint()
            self.yield_()
            return
        w = Waiter(m.current)
        glue.enter_critical(m)
        heapq.heappush(self._timed, (self.ticks + ticks, next(self._order), w))
        glue.exit_critical(m)
        self.wait(w, ("delay", ticks))

    def yield_(self) -> None:
        m = self.m
        cur = m.current
        p = self._prio[cur]
        for q in range(PRIORITIES - 1, p - 1, -1):
            if self.ready[q]:
                self.ready[p].append(cur)
                glue.yield_to(m, self.ready[q].popleft())
                return

    def critical(self):
        return self.m.critical()
