"""Byte-stream peripherals (UARTs, consoles) bridged to host streams."""

from __future__ import annotations

import io
import sys
from typing import BinaryIO, Union

from ..errors import EndOfInput

Source = Union[bytes, bytearray, BinaryIO, None]
Sink = Union[bytearray, BinaryIO, None]


class IoChannel:
    """One serial slot: an input source and an output sink.

    ``source`` may be raw bytes (a testcase), a binary stream, or ``None`` for
    host stdin; ``sink`` may be a ``bytearray`` capture buffer, a binary stream,
    or ``None`` for host stdout.
    """

    def __init__(self, source: Source = None, sink: Sink = None):
        if source is None:
            source = sys.stdin.buffer
        elif isinstance(source, (bytes, bytearray, memoryview)):
            source = io.BytesIO(bytes(source))
        self.source: BinaryIO = source
        self.sink = sys.stdout.buffer if sink is None else sink
        self.written = 0

    def write(self, data: bytes) -> int:
        data = bytes(data)
        if isinstance(self.sink, bytearray):
            self.sink += data
        else:
            self.sink.write(data)
            self.sink.flush()
        self.written += len(data)
        return len(data)

    def read(self, max_bytes: int) -> bytes:
        if max_bytes < 0:
            raise ValueError("max_bytes must be >= 0")
        if max_bytes == 0:
            return b""
        chunk = self.source.read(max_bytes)
        if not chunk:
            raise EndOfInput("input source exhausted")
        return chunk

    def close(self) -> None:
        pass
