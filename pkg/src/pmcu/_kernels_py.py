"""Pure-Python hot kernels: checkpoint/IRQ core, checked region heap, shadow and watermark scans.

The compiled module ``pmcu._kernels`` exposes the same names with the same
behaviour; :mod:`pmcu.kernels` picks one at import time.
"""

from __future__ import annotations

from bisect import bisect_left
from collections import deque
from time import process_time_ns as _process_time_ns

from .errors import DoubleFree, InvalidFree, OutOfMemory, UnbalancedEnable

ADDRESSABLE = 0
REDZONE = 1
FREED = 2
UNALLOCATED = 3

IMPLEMENTATION = "python"


def shadow_scan(shadow, offset: int, length: int) -> int:
    """Index of the first non-addressable shadow byte in the window, or -1."""
    rest = shadow[offset:offset + length].lstrip(b"\x00")
    if not rest:
        return -1
    return length - len(rest)


def pattern_run(buf, lo: int, hi: int, pattern: int) -> int:
    """Number of consecutive ``pattern`` bytes starting at ``lo``."""
    seg = buf[lo:hi]
    return len(seg) - len(seg.lstrip(bytes((pattern,))))


class RegionHeap:
    """First-fit heap over an address-ordered, coalescing free list.

    Every block is laid out as ``[redzone][payload][pad][redzone]`` with the
    pad rounding the payload up to the alignment. Freed blocks sit in a
    byte-bounded FIFO quarantine before their span returns to the free list.
    """

    def __init__(self, shadow: bytearray, shadow_base: int, origin: int, size: int,
                 redzone: int = 16, quarantine: int = 8192, align: int = 8):
        if align <= 0 or align & (align - 1):
            raise ValueError("alignment must be a power of two")
        if origin % align or size % align or redzone % align:
            raise ValueError("heap origin, size and redzone must be aligned")
        if size <= 0:
            raise ValueError("heap must be non-empty")
        self.shadow = shadow
        self.shadow_base = shadow_base
        self.origin = origin
        self.size = size
        self.redzone = redzone
        self.quarantine_capacity = quarantine
        self.align = align
        # parallel sorted lists of free chunk starts and lengths
        self._free_start = [origin]
        self._free_len = [size]
        # payload address -> [size, live, seq, block start, block span]
        self._table: dict[int, list] = {}
        self._quarantine: deque[int] = deque()
        self._quarantined_bytes = 0
        self._seq = 0
        self._live_bytes = 0
        self._redzone_bytes = 0
        self._paint(origin, size, UNALLOCATED)

    def _paint(self, addr: int, length: int, code: int) -> None:
        off = addr - self.shadow_base
        self.shadow[off:off + length] = bytes((code,)) * length

    def alloc(self, size: int) -> int:
        if size <= 0:
            raise ValueError("allocation size must be positive")
        a = self.align
        payload = (size + a - 1) & ~(a - 1)
        need = payload + 2 * self.redzone
        starts, lens = self._free_start, self._free_len
        for i in range(len(starts)):
            if lens[i] >= need:
                start = starts[i]
                if lens[i] == need:
                    del starts[i]
                    del lens[i]
                else:
                    starts[i] = start + need
                    lens[i] -= need
                break
        else:
            raise OutOfMemory(f"no free block fits {size} bytes (+{2 * self.redzone} redzone)")
        addr = start + self.redzone
        self._table[addr] = [size, True, self._seq, start, need]
        self._seq += 1
        self._live_bytes += size
        self._redzone_bytes += need - size
        self._paint(start, self.redzone, REDZONE)
        self._paint(addr, size, ADDRESSABLE)
        self._paint(addr + size, need - self.redzone - size, REDZONE)
        return addr

    def free(self, addr: int) -> None:
        entry = self._table.get(addr)
        if entry is None:
            raise InvalidFree(f"{addr:#010x} is not the start of an allocation", addr)
        if not entry[1]:
            raise DoubleFree(f"{addr:#010x} freed twice", addr)
        entry[1] = False
        size, _, _, start, span = entry
        self._live_bytes -= size
        self._redzone_bytes -= span - size
        self._paint(start, span, FREED)
        self._quarantine.append(addr)
        self._quarantined_bytes += span
        while self._quarantined_bytes > self.quarantine_capacity:
            self._evict()

    def _evict(self) -> None:
        addr = self._quarantine.popleft()
        _, _, _, start, span = self._table.pop(addr)
        self._quarantined_bytes -= span
        self._paint(start, span, UNALLOCATED)
        starts, lens = self._free_start, self._free_len
        i = bisect_left(starts, start)
        if i > 0 and starts[i - 1] + lens[i - 1] == start:
            i -= 1
            lens[i] += span
        else:
            starts.insert(i, start)
            lens.insert(i, span)
        if i + 1 < len(starts) and starts[i] + lens[i] == starts[i + 1]:
            lens[i] += lens[i + 1]
            del starts[i + 1]
            del lens[i + 1]

    # -- introspection ------------------------------------------------------

    def table(self) -> dict[int, tuple]:
        return {k: tuple(v) for k, v in self._table.items()}

    def free_chunks(self) -> list[tuple[int, int]]:
        return list(zip(self._free_start, self._free_len))

    def quarantined(self) -> list[int]:
        return list(self._quarantine)

    def accounting(self) -> dict[str, int]:
        return {
            "free": sum(self._free_len),
            "live": self._live_bytes,
            "redzone": self._redzone_bytes,
            "quarantined": self._quarantined_bytes,
        }


class CpuCore:
    """Per-checkpoint machine state: tick countdown, IRQ mask, trace, SRAM fast path.

    Slow paths call back into the subclass: ``systick_deliver``,
    ``_service_tick``, ``_step_limit_hit`` and ``_access_slow``.
    """

    def _core_setup(self, period, tick_mode, step_limit, trace, event_factory,
                    sram, shadow, sram_origin, checked):
        self.vt = 0
        self.events = 0
        self.current = None
        self.irq_enabled = True
        self.irq_pending = False
        self.irq_nesting = 0
        self.in_hook = 0
        self.live = False
        self.finished = False
        self.tick_period = period
        self.tick_mode = tick_mode  # 0 off, 1 deterministic, 2 virtual time
        self.countdown = period
        self.deadline = 0
        self.step_limit = step_limit
        self.trace_list = trace
        self._event = event_factory
        self._sram = sram
        self._shadow = shadow
        self._sram_origin = sram_origin
        self._sram_end = sram_origin + len(sram)
        self._checked = checked

    def _emit(self, kind, task=None, to=None, info=None):
        seq = self.events
        self.events = seq + 1
        if self.trace_list is not None:
            self.trace_list.append(self._event(seq, kind, self.vt, task, to, info))
        if seq + 1 == self.step_limit:
            self._step_limit_hit()

    def checkpoint(self):
        """One unit of task progress; delivers the system tick when it falls due."""
        if self.in_hook or not self.live:
            return
        self.vt += 1
        mode = self.tick_mode
        if mode == 1:
            self.countdown -= 1
            if self.countdown <= 0:
                self.countdown = self.tick_period
                self.systick_deliver()
        elif mode == 2:
            now = _process_time_ns()
            if now >= self.deadline:
                self.deadline = now + self.tick_period * 1000
                self.systick_deliver()

    def disable_irq(self):
        if self.finished:
            return
        self.checkpoint()
        self.irq_nesting += 1
        self.irq_enabled = False
        if not self.in_hook:
            self._emit("IrqDisable", self.current)

    def enable_irq(self):
        if self.finished:
            return
        if self.irq_nesting <= self.in_hook:  # hooks hold one implicit level each
            raise UnbalancedEnable("enable_irq without a matching disable_irq")
        self.irq_nesting -= 1
        if self.in_hook:
            return
        self._emit("IrqEnable", self.current)
        if self.irq_nesting == 0:
            self.irq_enabled = True
            if self.irq_pending and self.live:
                self.irq_pending = False
                self._service_tick()

    def load(self, addr, length):
        self.checkpoint()
        off = addr - self._sram_origin
        if (self._checked and addr >= self._sram_origin and addr + length <= self._sram_end
                and length > 0 and shadow_scan(self._shadow, off, length) < 0):
            return bytes(self._sram[off:off + length])
        return self._access_slow(addr, length, None)

    def store(self, addr, data):
        self.checkpoint()
        length = len(data)
        if not length:
            return
        off = addr - self._sram_origin
        if (self._checked and addr >= self._sram_origin and addr + length <= self._sram_end
                and shadow_scan(self._shadow, off, length) < 0):
            self._sram[off:off + length] = data
            return
        self._access_slow(addr, length, bytes(data))

    def load_u32(self, addr):
        return int.from_bytes(self.load(addr, 4), "little")

    def store_u32(self, addr, value):
        self.store(addr, (value & 0xFFFF_FFFF).to_bytes(4, "little"))
