"""Message queues and counting semaphores for the demo kernel."""

from __future__ import annotations

from collections import deque

from ..errors import AtMax, TimedOut
from . import glue
from .kernel import Kernel, Waiter


class MessageQueue:
    """Fixed-capacity FIFO of ``item_size``-byte records.

    ``timeout`` is in ticks: 0 polls, ``None`` waits forever.
    """

    def __init__(self, kernel: Kernel, capacity: int, item_size: int):
        if capacity <= 0 or item_size <= 0:
            raise ValueError("capacity and item_size must be positive")
        self.k = kernel
        self.capacity = capacity
        self.item_size = item_size
        self.buffer: deque[bytes] = deque()
        self.senders_blocked: deque[Waiter] = deque()
        self.receivers_blocked: deque[Waiter] = deque()
        self.sent = 0
        self.received = 0

    def __len__(self) -> int:
        return len(self.buffer)

    def send(self, item: bytes, timeout: int | None = None) -> None:
        item = bytes(item)
        if len(item) != self.item_size:
            raise ValueError(f"item must be {self.item_size} bytes, got {len(item)}")
        m = self.k.m
        glue.enter_critical(m)
        if self.receivers_blocked:
            w = self.receivers_blocked.popleft()
            w.item, w.done = item, True
            self.sent += 1
            self.received += 1
            glue.wake(m, w.tid)
        elif len(self.buffer) < self.capacity:
            self.buffer.append(item)
            self.sent += 1
        elif timeout == 0:
            glue.exit_critical(m)
            raise TimedOut("queue full")
        else:
            w = Waiter(m.current, item, owner=self.senders_blocked)
            self.senders_blocked.append(w)
            self.k.add_waiter(w, timeout)
            glue.exit_critical(m)
            self.k.wait(w, ("queue_send", id(self)))
            if w.timed_out:
                raise TimedOut("queue full")
            return
        glue.exit_critical(m)
        glue.preempt_point(m)

    def receive(self, timeout: int | None = None) -> bytes:
        m = self.k.m
        glue.enter_critical(m)
        if self.buffer:
            item = self.buffer.popleft()
            self.received += 1
            if self.senders_blocked:
                w = self.senders_blocked.popleft()
                self.buffer.append(w.item)
                self.sent += 1
                w.done = True
                glue.wake(m, w.tid)
            glue.exit_critical(m)
            glue.preempt_point(m)
            return item
        if timeout == 0:
            glue.exit_critical(m)
            raise TimedOut("queue empty")
        w = Waiter(m.current, owner=self.receivers_blocked)
        self.receivers_blocked.append(w)
        self.k.add_waiter(w, timeout)
        glue.exit_critical(m)
        self.k.wait(w, ("queue_receive", id(self)))
        if w.timed_out:
            raise TimedOut("queue empty")
        return w.item


class Semaphore:
    def __init__(self, kernel: Kernel, count: int = 0, max: int = 1):
        if not 0 <= count <= max or max <= 0:
            raise ValueError("need 0 <= count <= max and max > 0")
        self.k = kernel
        self.count = count
        self.max = max
        self.waiters: deque[Waiter] = deque()

    def take(self, timeout: int | None = None) -> None:
        m = self.k.m
        glue.enter_critical(m)
        if self.count > 0:
            self.count -= 1
            glue.exit_critical(m)
            return
        if timeout == 0:
            glue.exit_critical(m)
            raise TimedOut("semaphore unavailable")
        w = Waiter(m.current, owner=self.waiters)
        self.waiters.append(w)
        self.k.add_waiter(w, timeout)
        glue.exit_critical(m)
        self.k.wait(w, ("sem_take", id(self)))
        if w.timed_out:
            raise TimedOut("semaphore unavailable")

    def give(self) -> None:
        m = self.k.m
        glue.enter_critical(m)
        if self.waiters:
            w = self.waiters.popleft()
            w.done = True
            glue.wake(m, w.tid)
        elif self.count >= self.max:
            glue.exit_critical(m)
            raise AtMax("semaphore already at max")
        else:
            self.count += 1
        glue.exit_critical(m)
        glue.preempt_point(m)
