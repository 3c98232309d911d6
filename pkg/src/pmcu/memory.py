"""Simulated MCU memory: flash/SRAM map, firmware image reset, checked heap, stacks."""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from pathlib import Path

from . import kernels
from .errors import ImageFormatError, ImageLayoutError, StackExhausted
from .faults import AccessKind, BugClass, Violation
from .kernels import ADDRESSABLE, FREED, REDZONE, UNALLOCATED

KiB = 1024
MiB = 1024 * KiB

NULL_PAGE = 0x1000
WATERMARK = 0xA5
STACK_GUARD = 16

_SHADOW_CLASS = {
    REDZONE: BugClass.HeapOverflow,
    FREED: BugClass.UseAfterFree,
    UNALLOCATED: BugClass.WildAccess,
}


@dataclass(frozen=True)
class Region:
    origin: int
    size: int

    def __post_init__(self):
        if self.size <= 0:
            raise ValueError(f"region size must be positive, got {self.size}")
        if self.origin < 0 or self.origin + self.size > 1 << 32:
            raise ValueError(f"region {self.origin:#x}+{self.size:#x} wraps 32 bits")

    @property
    def end(self) -> int:
        return self.origin + self.size

    def contains(self, addr: int, length: int = 1) -> bool:
        return self.origin <= addr and addr + length <= self.end

    def overlaps(self, other: "Region") -> bool:
        return self.origin < other.end and other.origin < self.end


class AllocatorMode(str, enum.Enum):
    Region = "region"
    Passthrough = "passthrough"


@dataclass(frozen=True)
class MemoryMap:
    flash: Region = Region(0x0000_0000, 1 * MiB)
    sram: Region = Region(0x2000_0000, 256 * KiB)
    heap: Region = Region(0x2002_0000, 128 * KiB)
    stack_area: Region = Region(0x2000_8000, 96 * KiB)
    allocator_mode: AllocatorMode = AllocatorMode.Region
    redzone: int = 16
    quarantine: int = 8 * KiB
    align: int = 8

    def validate(self) -> None:
        if self.flash.overlaps(self.sram):
            raise ValueError("flash and SRAM overlap")
        for name in ("heap", "stack_area"):
            if not self.sram.contains(getattr(self, name).origin, getattr(self, name).size):
                raise ValueError(f"{name} lies outside SRAM")
        if self.heap.overlaps(self.stack_area):
            raise ValueError("heap and stack area overlap")
        if self.heap.origin % self.align or self.heap.size % self.align:
            raise ValueError("heap must be aligned")
        if self.redzone % self.align or self.redzone <= 0:
            raise ValueError("redzone must be a positive multiple of the alignment")

    @classmethod
    def small(cls, heap_size: int = 4 * KiB, quarantine: int = 512, **kw) -> "MemoryMap":
        """A compact map for tests: 64 KiB SRAM with a small heap at the top."""
        sram = Region(0x2000_0000, 64 * KiB)
        heap = Region(sram.end - heap_size, heap_size)
        stack_area = Region(sram.origin + 8 * KiB, heap.origin - sram.origin - 8 * KiB)
        return cls(flash=Region(0, 64 * KiB), sram=sram, heap=heap, stack_area=stack_area,
                   quarantine=quarantine, **kw)


@dataclass(frozen=True)
class ImageSections:
    data: bytes = b""
    data_load: int = 0
    data_run: int = 0
    bss_addr: int = 0
    bss_size: int = 0

    MAGIC = b"PMCUIMG1"

    def to_bytes(self) -> bytes:
        run = struct.pack("<II", self.data_run, self.data_load)
        bss = struct.pack("<II", self.bss_addr, self.bss_size)
        out = [self.MAGIC]
        for rec in (self.data, run, bss):
            out.append(struct.pack("<I", len(rec)))
            out.append(rec)
        return b"".join(out)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "ImageSections":
        if blob[:8] != cls.MAGIC:
            raise ImageFormatError("bad image magic")
        pos = 8
        records = []
        for _ in range(3):
            if pos + 4 > len(blob):
                raise ImageFormatError("truncated record header")
            (n,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            if pos + n > len(blob):
                raise ImageFormatError("truncated record payload")
            records.append(blob[pos:pos + n])
            pos += n
        if pos != len(blob):
            raise ImageFormatError("trailing bytes after bss descriptor")
        data, run, bss = records
        if len(run) == 4:
            (data_run,), data_load = struct.unpack("<I", run), 0
        elif len(run) == 8:
            data_run, data_load = struct.unpack("<II", run)
        else:
            raise ImageFormatError("data address record must be 4 or 8 bytes")
        if len(bss) != 8:
            raise ImageFormatError("bss descriptor must be 8 bytes")
        bss_addr, bss_size = struct.unpack("<II", bss)
        return cls(bytes(data), data_load, data_run, bss_addr, bss_size)

    @classmethod
    def load(cls, path: str | Path) -> "ImageSections":
        return cls.from_bytes(Path(path).read_bytes())

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())


def _check_layout(image: ImageSections, mm: MemoryMap) -> None:
    ranges = []
    if image.data:
        n = len(image.data)
        if not mm.flash.contains(image.data_load, n):
            raise ImageLayoutError("data load range outside flash")
        ranges.append(("data", image.data_run, n))
    if image.bss_size:
        ranges.append(("bss", image.bss_addr, image.bss_size))
    for name, start, n in ranges:
        r = Region(start, n)
        if not mm.sram.contains(start, n):
            raise ImageLayoutError(f"{name} range outside SRAM")
        if r.overlaps(mm.heap) or r.overlaps(mm.stack_area):
            raise ImageLayoutError(f"{name} range overlaps heap or stack area")
    if len(ranges) == 2 and Region(ranges[0][1], ranges[0][2]).overlaps(Region(ranges[1][1], ranges[1][2])):
        raise ImageLayoutError("data and bss overlap")


@dataclass
class StackRegion:
    base: int
    size: int
    guard: int
    sp: int
    high_water: int = 0

    @property
    def top(self) -> int:
        return self.base + self.guard + self.size


class MachineMemory:
    """Flash + SRAM contents, SRAM shadow classification, heap and stack carving."""

    def __init__(self, mm: MemoryMap):
        mm.validate()
        self.map = mm
        self.flash = bytearray(mm.flash.size)
        self.sram = bytearray(mm.sram.size)
        self.shadow = bytearray(mm.sram.size)
        self.checked = mm.allocator_mode is AllocatorMode.Region
        self._stack_top = mm.stack_area.end
        self._passthrough: dict[int, bytearray] = {}
        self._passthrough_next = 0x8000_0000
        self.heap = None
        self.image = ImageSections()
        self._pristine = True

    # -- reset --------------------------------------------------------------

    def reset(self, image: ImageSections) -> None:
        mm = self.map
        _check_layout(image, mm)
        self.image = image
        if not self._pristine:
            self.flash[:] = bytes(len(self.flash))
            self.sram[:] = bytes(len(self.sram))
            self.shadow[:] = bytes(len(self.shadow))
        self._pristine = False
        if image.data:
            n = len(image.data)
            lo = image.data_load - mm.flash.origin
            self.flash[lo:lo + n] = image.data
            r = image.data_run - mm.sram.origin
            self.sram[r:r + n] = self.flash[lo:lo + n]
        # bss was zeroed with the rest of SRAM
        self._mark(mm.stack_area.origin, mm.stack_area.size, UNALLOCATED)
        self._stack_top = mm.stack_area.end
        self._passthrough.clear()
        self._passthrough_next = 0x8000_0000
        if self.checked:
            self.heap = kernels.RegionHeap(self.shadow, mm.sram.origin, mm.heap.origin, mm.heap.size,
                                           mm.redzone, mm.quarantine, mm.align)
        else:
            self.heap = None
            self._mark(mm.heap.origin, mm.heap.size, UNALLOCATED)

    def _mark(self, addr: int, length: int, code: int) -> None:
        off = addr - self.map.sram.origin
        self.shadow[off:off + length] = bytes((code,)) * length

    # -- heap ---------------------------------------------------------------

    def alloc(self, size: int) -> int:
        if size <= 0:
            raise ValueError("allocation size must be positive")
        if self.heap is not None:
            return self.heap.alloc(size)
        addr = self._passthrough_next
        self._passthrough[addr] = bytearray(size)
        self._passthrough_next += (size + 15) & ~15
        return addr

    def free(self, addr: int) -> None:
        if self.heap is not None:
            self.heap.free(addr)
        else:
            self._passthrough.pop(addr, None)

    # -- access -------------------------------------------------------------

    def check_access(self, addr: int, length: int, kind: AccessKind = AccessKind.Read) -> Violation | None:
        """None when every byte is addressable, else the violation at the first bad byte."""
        if length <= 0:
            raise ValueError("access length must be positive")
        if addr < NULL_PAGE:
            return Violation(BugClass.NullDeref, addr, length, kind, addr)
        if not self.checked:
            return None
        mm = self.map
        if mm.sram.contains(addr, length):
            off = addr - mm.sram.origin
            i = kernels.shadow_scan(self.shadow, off, length)
            if i < 0:
                return None
            return Violation(_SHADOW_CLASS[self.shadow[off + i]], addr, length, kind, addr + i)
        if mm.flash.contains(addr, length) and kind is AccessKind.Read:
            return None
        fault = addr if not (mm.sram.contains(addr) or mm.flash.contains(addr)) else addr + length - 1
        return Violation(BugClass.WildAccess, addr, length, kind, fault)

    def _locate(self, addr: int, length: int):
        mm = self.map
        if mm.sram.contains(addr, length):
            return self.sram, addr - mm.sram.origin
        if mm.flash.contains(addr, length):
            return self.flash, addr - mm.flash.origin
        for base, buf in self._passthrough.items():
            if base <= addr and addr + length <= base + len(buf):
                return buf, addr - base
        return None, 0

    def read(self, addr: int, length: int) -> bytes:
        buf, off = self._locate(addr, length)
        if buf is None:
            return bytes(length)
        return bytes(buf[off:off + length])

    def write(self, addr: int, data: bytes) -> None:
        buf, off = self._locate(addr, len(data))
        if buf is not None:
            buf[off:off + len(data)] = data

    # -- stacks -------------------------------------------------------------

    def carve_stack(self, size: int, guard: int = STACK_GUARD) -> StackRegion:
        if size <= 0:
            raise ValueError("stack size must be positive")
        a = self.map.align
        span = (size + guard + a - 1) & ~(a - 1)
        base = self._stack_top - span
        if base < self.map.stack_area.origin:
            raise StackExhausted(f"stack of {size} (+{guard} guard) does not fit the remaining "
                                 f"{self._stack_top - self.map.stack_area.origin} bytes")
        self._stack_top = base
        self._mark(base, span, ADDRESSABLE)
        region = StackRegion(base=base, size=span - guard, guard=guard, sp=base + span)
        self.stack_paint(region)
        return region

    def stack_paint(self, st: StackRegion) -> None:
        off = st.base - self.map.sram.origin
        n = st.top - st.base
        self.sram[off:off + n] = bytes((WATERMARK,)) * n
        st.sp = st.top
        st.high_water = 0

    def stack_check(self, st: StackRegion) -> tuple[int, bool]:
        """(used bytes, overflowed): scan from the guard end for the first non-pattern byte."""
        off = st.base - self.map.sram.origin
        n = st.top - st.base
        remaining = kernels.pattern_run(self.sram, off, off + n, WATERMARK)
        used = n - remaining
        st.high_water = max(st.high_water, used)
        return st.high_water, remaining == 0

    def stack_push(self, st: StackRegion, nbytes: int) -> bool:
        """Claim a frame below the stack pointer; False once the frame leaves the region."""
        new_sp = st.sp - nbytes
        lo = max(new_sp, st.base)
        off = lo - self.map.sram.origin
        if st.sp > lo:
            self.sram[off:off + st.sp - lo] = bytes(st.sp - lo)
        st.sp = new_sp
        return new_sp >= st.base

    def stack_pop(self, st: StackRegion, nbytes: int) -> None:
        st.sp = min(st.sp + nbytes, st.top)


def reset_handler(image: ImageSections, mm: MemoryMap) -> MachineMemory:
    mem = MachineMemory(mm)
    mem.reset(image)
    return mem
