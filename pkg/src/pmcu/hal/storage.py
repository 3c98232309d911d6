"""File-backed block storage: the whole medium is mmap'ed as raw blocks."""

from __future__ import annotations

import mmap
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Union

from ..errors import BlockOutOfRange, MediumGeometryError, ShortWrite

DEFAULT_BLOCK_SIZE = 512


@dataclass(frozen=True)
class StorageMedium:
    backing: Union[str, Path]
    block_size: int = DEFAULT_BLOCK_SIZE

    @property
    def block_count(self) -> int:
        return os.path.getsize(self.backing) // self.block_size

    @classmethod
    def create(cls, backing: Union[str, Path], block_count: int,
               block_size: int = DEFAULT_BLOCK_SIZE) -> "StorageMedium":
        """Create (or truncate) a zero-filled backing file of the given geometry."""
        with open(backing, "wb") as fh:
            fh.truncate(block_count * block_size)
        return cls(backing, block_size)


class BlockDevice:
    def __init__(self, medium: StorageMedium):
        bs = medium.block_size
        if bs <= 0 or bs & (bs - 1):
            raise MediumGeometryError(f"block size {bs} is not a power of two")
        try:
            fd = os.open(medium.backing, os.O_RDWR)
        except OSError as exc:
            raise MediumGeometryError(f"cannot open backing file {medium.backing}: {exc}") from exc
        try:
            length = os.fstat(fd).st_size
            if length == 0 or length % bs:
                raise MediumGeometryError(
                    f"backing file is {length} bytes, not a positive multiple of {bs}")
            self.map = mmap.mmap(fd, length)
        finally:
            os.close(fd)
        self.medium = medium
        self.block_size = bs
        self.block_count = length // bs

    def _span(self, index: int, count: int) -> slice:
        if index < 0 or count < 0 or index + count > self.block_count:
            raise BlockOutOfRange(
                f"blocks {index}..{index + count - 1} outside 0..{self.block_count - 1}")
        return slice(index * self.block_size, (index + count) * self.block_size)

    def read(self, index: int, count: int = 1) -> bytes:
        return self.map[self._span(index, count)]

    def write(self, index: int, data: bytes) -> None:
        if len(data) % self.block_size:
            raise ShortWrite(f"write of {len(data)} bytes is not a multiple of {self.block_size}")
        self.map[self._span(index, len(data) // self.block_size)] = data

    def sync(self) -> None:
        self.map.flush()

    def close(self) -> None:
        if not self.map.closed:
            self.map.flush()
            self.map.close()
