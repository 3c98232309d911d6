"""Minimal reader/writer for the classic libpcap capture container (Ethernet only)."""

from __future__ import annotations

import struct
from pathlib import Path
from typing import BinaryIO

from ..errors import CaptureParseError

MAGIC = 0xA1B2C3D4
LINKTYPE_ETHERNET = 1
SNAPLEN = 65535


def parse(blob: bytes) -> list[tuple[int, bytes]]:
    """Return ``(timestamp_us, frame)`` records; raise CaptureParseError on any defect."""
    if len(blob) < 24:
        raise CaptureParseError("capture shorter than the global header")
    (magic,) = struct.unpack_from("<I", blob)
    if magic == MAGIC:
        endian = "<"
    elif struct.unpack_from(">I", blob)[0] == MAGIC:
        endian = ">"
    else:
        raise CaptureParseError(f"bad capture magic {magic:#010x}")
    _, _, _, _, _, linktype = struct.unpack_from(endian + "HHiIII", blob, 4)
    if linktype != LINKTYPE_ETHERNET:
        raise CaptureParseError(f"unsupported link type {linktype}")
    records = []
    pos = 24
    rec = struct.Struct(endian + "IIII")
    while pos < len(blob):
        if pos + 16 > len(blob):
            raise CaptureParseError(f"truncated record header at offset {pos}")
        sec, usec, incl, _orig = rec.unpack_from(blob, pos)
        pos += 16
        if pos + incl > len(blob):
            raise CaptureParseError(f"truncated record payload at offset {pos}")
        records.append((sec * 1_000_000 + usec, blob[pos:pos + incl]))
        pos += incl
    return records


def read(path: str | Path) -> list[tuple[int, bytes]]:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise CaptureParseError(f"cannot read capture {path}: {exc}") from exc
    return parse(blob)


def header() -> bytes:
    return struct.pack("<IHHiIII", MAGIC, 2, 4, 0, 0, SNAPLEN, LINKTYPE_ETHERNET)


def record(ts_us: int, frame: bytes) -> bytes:
    sec, usec = divmod(ts_us, 1_000_000)
    return struct.pack("<IIII", sec, usec, len(frame), len(frame)) + frame


def write(path: str | Path, records: list[tuple[int, bytes]]) -> None:
    with open(path, "wb") as fh:
        fh.write(header())
        for ts, frame in records:
            fh.write(record(ts, frame))


class Writer:
    def __init__(self, fh: BinaryIO):
        self.fh = fh
        fh.write(header())

    def write(self, ts_us: int, frame: bytes) -> None:
        self.fh.write(record(ts_us, frame))
        self.fh.flush()

    def close(self) -> None:
        self.fh.close()
