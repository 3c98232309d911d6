# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled hot kernels. Behaviour mirrors ``pmcu._kernels_py`` exactly."""

from collections import deque

from libc.stdlib cimport malloc, realloc, free as cfree
from libc.string cimport memset, memmove

from time import process_time_ns as _process_time_ns

from .errors import DoubleFree, InvalidFree, OutOfMemory, UnbalancedEnable

ADDRESSABLE = 0
REDZONE = 1
FREED = 2
UNALLOCATED = 3

IMPLEMENTATION = "cython"


def shadow_scan(const unsigned char[:] shadow, Py_ssize_t offset, Py_ssize_t length):
    cdef Py_ssize_t i
    for i in range(length):
        if shadow[offset + i] != 0:
            return i
    return -1


def pattern_run(const unsigned char[:] buf, Py_ssize_t lo, Py_ssize_t hi, unsigned char pattern):
    cdef Py_ssize_t i = lo
    while i < hi and buf[i] == pattern:
        i += 1
    return i - lo


cdef class RegionHeap:
    cdef unsigned char[:] _shadow
    cdef readonly object shadow
    cdef readonly long long shadow_base, origin, size, redzone, quarantine_capacity, align
    cdef long long *_fs
    cdef long long *_fl
    cdef Py_ssize_t _n, _cap
    cdef dict _table
    cdef object _quarantine
    cdef long long _quarantined_bytes, _seq, _live_bytes, _redzone_bytes

    def __cinit__(self, *args, **kwargs):
        self._cap = 64
        self._n = 0
        self._fs = <long long *> malloc(self._cap * sizeof(long long))
        self._fl = <long long *> malloc(self._cap * sizeof(long long))
        if self._fs == NULL or self._fl == NULL:
            raise MemoryError()

    def __dealloc__(self):
        cfree(self._fs)
        cfree(self._fl)

    def __init__(self, shadow, long long shadow_base, long long origin, long long size,
                 long long redzone=16, long long quarantine=8192, long long align=8):
        if align <= 0 or align & (align - 1):
            raise ValueError("alignment must be a power of two")
        if origin % align or size % align or redzone % align:
            raise ValueError("heap origin, size and redzone must be aligned")
        if size <= 0:
            raise ValueError("heap must be non-empty")
        self.shadow = shadow
        self._shadow = shadow
        self.shadow_base = shadow_base
        self.origin = origin
        self.size = size
        self.redzone = redzone
        self.quarantine_capacity = quarantine
        self.align = align
        self._fs[0] = origin
        self._fl[0] = size
        self._n = 1
        self._table = {}
        self._quarantine = deque()
        self._quarantined_bytes = 0
        self._seq = 0
        self._live_bytes = 0
        self._redzone_bytes = 0
        self._paint(origin, size, UNALLOCATED)

    cdef void _paint(self, long long addr, long long length, unsigned char code):
        if length > 0:
            memset(&self._shadow[addr - self.shadow_base], code, length)

    cdef void _grow(self) except *:
        cdef Py_ssize_t cap = self._cap * 2
        cdef long long *fs = <long long *> realloc(self._fs, cap * sizeof(long long))
        if fs == NULL:
            raise MemoryError()
        self._fs = fs
        cdef long long *fl = <long long *> realloc(self._fl, cap * sizeof(long long))
        if fl == NULL:
            raise MemoryError()
        self._fl = fl
        self._cap = cap

    cdef void _remove(self, Py_ssize_t i):
        memmove(&self._fs[i], &self._fs[i + 1], (self._n - i - 1) * sizeof(long long))
        memmove(&self._fl[i], &self._fl[i + 1], (self._n - i - 1) * sizeof(long long))
        self._n -= 1

    def alloc(self, long long size):
        if size <= 0:
            raise ValueError("allocation size must be positive")
        cdef long long a = self.align
        cdef long long payload = (size + a - 1) & ~(a - 1)
        cdef long long need = payload + 2 * self.redzone
        cdef Py_ssize_t i
        cdef long long start = -1
        for i in range(self._n):
            if self._fl[i] >= need:
                start = self._fs[i]
                if self._fl[i] == need:
                    self._remove(i)
                else:
                    self._fs[i] = start + need
                    self._fl[i] -= need
                break
        if start < 0:
            raise OutOfMemory(f"no free block fits {size} bytes (+{2 * self.redzone} redzone)")
        cdef long long addr = start + self.redzone
        self._table[addr] = [size, True, self._seq, start, need]
        self._seq += 1
        self._live_bytes += size
        self._redzone_bytes += need - size
        self._paint(start, self.redzone, REDZONE)
        self._paint(addr, size, ADDRESSABLE)
        self._paint(addr + size, need - self.redzone - size, REDZONE)
        return addr

    def free(self, long long addr):
        entry = self._table.get(addr)
        if entry is None:
            raise InvalidFree(f"{addr:#010x} is not the start of an allocation", addr)
        if not entry[1]:
            raise DoubleFree(f"{addr:#010x} freed twice", addr)
        entry[1] = False
        cdef long long size = entry[0]
        cdef long long start = entry[3]
        cdef long long span = entry[4]
        self._live_bytes -= size
        self._redzone_bytes -= span - size
        self._paint(start, span, FREED)
        self._quarantine.append(addr)
        self._quarantined_bytes += span
        while self._quarantined_bytes > self.quarantine_capacity:
            self._evict()

    cdef void _evict(self) except *:
        addr = self._quarantine.popleft()
        entry = self._table.pop(addr)
        cdef long long start = entry[3]
        cdef long long span = entry[4]
        self._quarantined_bytes -= span
        self._paint(start, span, UNALLOCATED)
        # lower bound on chunk starts
        cdef Py_ssize_t lo = 0, hi = self._n, mid
        while lo < hi:
            mid = (lo + hi) >> 1
            if self._fs[mid] < start:
                lo = mid + 1
            else:
                hi = mid
        cdef Py_ssize_t i = lo
        if i > 0 and self._fs[i - 1] + self._fl[i - 1] == start:
            i -= 1
            self._fl[i] += span
        else:
            if self._n == self._cap:
                self._grow()
            memmove(&self._fs[i + 1], &self._fs[i], (self._n - i) * sizeof(long long))
            memmove(&self._fl[i + 1], &self._fl[i], (self._n - i) * sizeof(long long))
            self._fs[i] = start
            self._fl[i] = span
            self._n += 1
        if i + 1 < self._n and self._fs[i] + self._fl[i] == self._fs[i + 1]:
            self._fl[i] += self._fl[i + 1]
            self._remove(i + 1)

    def table(self):
        return {k: tuple(v) for k, v in self._table.items()}

    def free_chunks(self):
        return [(self._fs[i], self._fl[i]) for i in range(self._n)]

    def quarantined(self):
        return list(self._quarantine)

    def accounting(self):
        cdef long long total = 0
        cdef Py_ssize_t i
        for i in range(self._n):
            total += self._fl[i]
        return {
            "free": total,
            "live": self._live_bytes,
            "redzone": self._redzone_bytes,
            "quarantined": self._quarantined_bytes,
        }


cdef class CpuCore:
    cdef public long long vt, events, tick_period, countdown, deadline, step_limit
    cdef public object current
    cdef public bint irq_enabled, irq_pending, live, finished
    cdef public int irq_nesting, in_hook, tick_mode
    cdef public object trace_list
    cdef object _event
    cdef object _sram_obj
    cdef unsigned char[:] _sram
    cdef unsigned char[:] _shadow
    cdef long long _sram_origin, _sram_end
    cdef bint _checked

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
        self.tick_mode = tick_mode
        self.countdown = period
        self.deadline = 0
        self.step_limit = step_limit
        self.trace_list = trace
        self._event = event_factory
        self._sram_obj = sram
        self._sram = sram
        self._shadow = shadow
        self._sram_origin = sram_origin
        self._sram_end = sram_origin + len(sram)
        self._checked = checked

    def _emit(self, kind, task=None, to=None, info=None):
        cdef long long seq = self.events
        self.events = seq + 1
        if self.trace_list is not None:
            self.trace_list.append(self._event(seq, kind, self.vt, task, to, info))
        if seq + 1 == self.step_limit:
            self._step_limit_hit()

    cpdef checkpoint(self):
        if self.in_hook or not self.live:
            return
        self.vt += 1
        cdef long long now
        if self.tick_mode == 1:
            self.countdown -= 1
            if self.countdown <= 0:
                self.countdown = self.tick_period
                self.systick_deliver()
        elif self.tick_mode == 2:
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
        if self.irq_nesting <= self.in_hook:
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

    cdef bint _clean(self, long long addr, long long length):
        cdef long long off, i
        if not self._checked or length <= 0:
            return False
        if addr < self._sram_origin or addr + length > self._sram_end:
            return False
        off = addr - self._sram_origin
        for i in range(length):
            if self._shadow[off + i] != 0:
                return False
        return True

    def load(self, long long addr, long long length):
        self.checkpoint()
        cdef long long off = addr - self._sram_origin
        if self._clean(addr, length):
            return bytes(self._sram_obj[off:off + length])
        return self._access_slow(addr, length, None)

    def store(self, long long addr, data):
        self.checkpoint()
        cdef long long length = len(data)
        if not length:
            return
        cdef long long off = addr - self._sram_origin
        cdef const unsigned char[:] src
        cdef long long i
        if self._clean(addr, length):
            src = bytes(data)
            for i in range(length):
                self._sram[off + i] = src[i]
            return
        self._access_slow(addr, length, bytes(data))

    def load_u32(self, long long addr):
        self.checkpoint()
        cdef long long off = addr - self._sram_origin
        if self._clean(addr, 4):
            return (self._sram[off] | (self._sram[off + 1] << 8) | (self._sram[off + 2] << 16)
                    | (<unsigned long long> self._sram[off + 3] << 24))
        return int.from_bytes(self._access_slow(addr, 4, None), "little")

    def store_u32(self, long long addr, value):
        self.checkpoint()
        cdef unsigned long long v = value & 0xFFFFFFFF
        cdef long long off = addr - self._sram_origin
        if self._clean(addr, 4):
            self._sram[off] = v & 0xFF
            self._sram[off + 1] = (v >> 8) & 0xFF
            self._sram[off + 2] = (v >> 16) & 0xFF
            self._sram[off + 3] = (v >> 24) & 0xFF
            return
        self._access_slow(addr, 4, int(v).to_bytes(4, "little"))
