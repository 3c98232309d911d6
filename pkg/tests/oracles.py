"""Independent reference models used to cross-check the library.

None of these import the code under test; they re-derive each answer the slow,
obvious way so a shared misunderstanding can't hide in both places.
"""

from __future__ import annotations

import struct
from collections import deque

# ---------------------------------------------------------------------------
# Heap: a byte map of the arena, scanned with bytes.find for the first gap.
# ---------------------------------------------------------------------------

OOM = "OutOfMemory"
DOUBLE = "DoubleFree"
INVALID = "InvalidFree"


class ByteMapHeap:
    """First-fit over a per-byte occupancy map (0 = free, 1 = taken).

    Because block spans and the origin are multiples of the alignment, the
    first zero run long enough is always aligned, and coalescing falls out of
    the representation for free.
    """

    def __init__(self, origin: int, size: int, redzone: int = 16, quarantine: int = 8192, align: int = 8):
        self.origin = origin
        self.size = size
        self.rz = redzone
        self.qcap = quarantine
        self.align = align
        self.used = bytearray(size)
        self.blocks: dict[int, dict] = {}   # payload addr -> {size, start, span, live}
        self.q: deque[int] = deque()
        self.qbytes = 0

    def span_of(self, size: int) -> int:
        padded = -(-size // self.align) * self.align
        return padded + 2 * self.rz

    def alloc(self, size: int):
        span = self.span_of(size)
        off = self.used.find(bytes(span))
        if off < 0:
            return OOM
        self.used[off:off + span] = b"\x01" * span
        addr = self.origin + off + self.rz
        self.blocks[addr] = {"size": size, "start": self.origin + off, "span": span, "live": True}
        return addr

    def free(self, addr: int):
        b = self.blocks.get(addr)
        if b is None:
            return INVALID
        if not b["live"]:
            return DOUBLE
        b["live"] = False
        self.q.append(addr)
        self.qbytes += b["span"]
        while self.qbytes > self.qcap:
            old = self.q.popleft()
            ob = self.blocks.pop(old)
            self.qbytes -= ob["span"]
            s = ob["start"] - self.origin
            self.used[s:s + ob["span"]] = bytes(ob["span"])
        return None

    def shadow(self) -> bytes:
        """Expected shadow bytes for the arena: 0 addressable, 1 redzone, 2 freed, 3 unallocated."""
        out = bytearray(b"\x03" * self.size)
        for addr, b in self.blocks.items():
            s = b["start"] - self.origin
            if b["live"]:
                out[s:s + b["span"]] = b"\x01" * b["span"]
                p = addr - self.origin
                out[p:p + b["size"]] = bytes(b["size"])
            else:
                out[s:s + b["span"]] = b"\x02" * b["span"]
        return bytes(out)


def shadow_from_table(table: dict, origin: int, size: int, redzone: int) -> bytes:
    """Rebuild the heap shadow purely from an allocation table {addr: (size, live, seq, start, span)}."""
    out = bytearray(b"\x03" * size)
    for addr, (sz, live, _seq, start, span) in table.items():
        s = start - origin
        if live:
            out[s:s + span] = b"\x01" * span
            out[addr - origin:addr - origin + sz] = bytes(sz)
        else:
            out[s:s + span] = b"\x02" * span
    return bytes(out)


# ---------------------------------------------------------------------------
# CRC-32 (reflected, poly 0x04C11DB7 -> 0xEDB88320), bit at a time.
# ---------------------------------------------------------------------------

def crc32_bitwise(data: bytes) -> int:
    crc = 0xFFFFFFFF
    for byte in data:
        crc ^= byte
        for _ in range(8):
            crc = (crc >> 1) ^ (0xEDB88320 if crc & 1 else 0)
    return crc ^ 0xFFFFFFFF


def crc32_table(data: bytes, _table=[]) -> int:
    """Table-driven variant; faster for the 64 KiB property inputs."""
    if not _table:
        for n in range(256):
            c = n
            for _ in range(8):
                c = (c >> 1) ^ (0xEDB88320 if c & 1 else 0)
            _table.append(c)
    crc = 0xFFFFFFFF
    for byte in data:
        crc = _table[(crc ^ byte) & 0xFF] ^ (crc >> 8)
    return crc ^ 0xFFFFFFFF


# ---------------------------------------------------------------------------
# SHA-256 straight from the standard's description.
# ---------------------------------------------------------------------------

_K = [
    0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1, 0x923f82a4, 0xab1c5ed5,
    0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3, 0x72be5d74, 0x80deb1fe, 0x9bdc06a7, 0xc19bf174,
    0xe49b69c1, 0xefbe4786, 0x0fc19dc6, 0x240ca1cc, 0x2de92c6f, 0x4a7484aa, 0x5cb0a9dc, 0x76f988da,
    0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7, 0xc6e00bf3, 0xd5a79147, 0x06ca6351, 0x14292967,
    0x27b70a85, 0x2e1b2138, 0x4d2c6dfc, 0x53380d13, 0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85,
    0xa2bfe8a1, 0xa81a664b, 0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070,
    0x19a4c116, 0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a, 0x5b9cca4f, 0x682e6ff3,
    0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208, 0x90befffa, 0xa4506ceb, 0xbef9a3f7, 0xc67178f2,
]
_H0 = [0x6a09e667, 0xbb67ae85, 0x3c6ef372, 0xa54ff53a, 0x510e527f, 0x9b05688c, 0x1f83d9ab, 0x5be0cd19]
_M = 0xFFFFFFFF


def _rotr(x: int, n: int) -> int:
    return ((x >> n) | (x << (32 - n))) & _M


def sha256_reference(data: bytes) -> bytes:
    msg = bytes(data) + b"\x80"
    msg += b"\x00" * ((56 - len(msg)) % 64)
    msg += struct.pack(">Q", len(data) * 8)
    h = list(_H0)
    for off in range(0, len(msg), 64):
        w = list(struct.unpack(">16I", msg[off:off + 64]))
        for i in range(16, 64):
            s0 = _rotr(w[i - 15], 7) ^ _rotr(w[i - 15], 18) ^ (w[i - 15] >> 3)
            s1 = _rotr(w[i - 2], 17) ^ _rotr(w[i - 2], 19) ^ (w[i - 2] >> 10)
            w.append((w[i - 16] + s0 + w[i - 7] + s1) & _M)
        a, b, c, d, e, f, g, hh = h
        for i in range(64):
            t1 = (hh + (_rotr(e, 6) ^ _rotr(e, 11) ^ _rotr(e, 25)) + ((e & f) ^ (~e & g)) + _K[i] + w[i]) & _M
            t2 = ((_rotr(a, 2) ^ _rotr(a, 13) ^ _rotr(a, 22)) + ((a & b) ^ (a & c) ^ (b & c))) & _M
            a, b, c, d, e, f, g, hh = (t1 + t2) & _M, a, b, c, (d + t1) & _M, e, f, g
        h = [(x + y) & _M for x, y in zip(h, (a, b, c, d, e, f, g, hh))]
    return struct.pack(">8I", *h)


# ---------------------------------------------------------------------------
# Capture fixture bytes written field by field.
# ---------------------------------------------------------------------------

def pcap_bytes(frames: list[tuple[int, int, bytes]]) -> bytes:
    """Little-endian classic capture: global header then (sec, usec, payload) records."""
    out = struct.pack("<I", 0xA1B2C3D4) + struct.pack("<HH", 2, 4) + struct.pack("<iI", 0, 0)
    out += struct.pack("<I", 65535) + struct.pack("<I", 1)
    for sec, usec, payload in frames:
        out += struct.pack("<IIII", sec, usec, len(payload), len(payload)) + payload
    return out


# ---------------------------------------------------------------------------
# Priority-aware trace check for the demo kernel.
# ---------------------------------------------------------------------------

def check_priority_soundness(events, priorities: dict[int, int]) -> None:
    """Whenever a task is switched in, no strictly higher-priority task may be Ready."""
    state = {t: "Ready" for t in priorities}
    running = None
    for ev in events:
        k = ev.kind
        if k == "TaskStart":
            running = ev.task
            state[running] = "Running"
        elif k == "TaskSwitch":
            if running is not None and state[running] == "Running":
                state[running] = "Ready"
            running = ev.to
            state[running] = "Running"
            higher = [t for t, s in state.items() if s == "Ready" and priorities[t] > priorities[running]]
            assert not higher, f"seq {ev.seq}: task {running} runs while higher {higher} ready"
        elif k == "TaskBlock":
            state[ev.task] = "Blocked"
            running = None
        elif k == "TaskWake":
            state[ev.task] = "Ready"
        elif k == "TaskExit":
            state[ev.task] = "Exited"
            running = None
