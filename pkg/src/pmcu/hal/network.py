"""Network interface backends: in-process loopback, capture replay, and host TAP."""

from __future__ import annotations

import os
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Union

from ..errors import CaptureParseError, FrameTooLarge, InterfaceUnavailable
from . import pcap

MIN_PAYLOAD = 1
MAX_PAYLOAD = 1514
HOSTTAP_ENV = "PMCU_ENABLE_HOSTTAP"


@dataclass(frozen=True)
class NetworkFrame:
    payload: bytes
    timestamp: int = 0

    def __post_init__(self):
        object.__setattr__(self, "payload", bytes(self.payload))
        if not MIN_PAYLOAD <= len(self.payload) <= MAX_PAYLOAD:
            raise FrameTooLarge(
                f"frame payload is {len(self.payload)} bytes, must be {MIN_PAYLOAD}..{MAX_PAYLOAD}")


@dataclass(frozen=True)
class Loopback:
    peer: str


@dataclass(frozen=True)
class Replay:
    capture: Union[str, Path]
    outbound: Union[str, Path, None] = None


@dataclass(frozen=True)
class HostTap:
    interface: str


NetworkBackendKind = Union[Loopback, Replay, HostTap]
ReceiveCallback = Callable[[NetworkFrame], None]


class NetworkInterface:
    """Common inbound path: frames go to the callback if one is registered, else to a FIFO."""

    def __init__(self, slot: str, callback: ReceiveCallback | None):
        self.slot = slot
        self.callback = callback
        self.inbound: deque[NetworkFrame] = deque()
        self.waiters: deque[int] = deque()
        self.delivered = 0

    def deliver(self, frame: NetworkFrame) -> list[int]:
        """Hand one inbound frame up; returns the task ids to wake."""
        self.delivered += 1
        if self.callback is not None:
            self.callback(frame)
            return []
        self.inbound.append(frame)
        woken = list(self.waiters)
        self.waiters.clear()
        return woken

    def pull(self) -> NetworkFrame | None:
        """Fetch the next frame from the backend's own source, if it has one."""
        return None

    def send(self, frame: NetworkFrame) -> None:
        raise NotImplementedError

    def close(self) -> None:
        pass


class LoopbackInterface(NetworkInterface):
    def __init__(self, slot: str, callback: ReceiveCallback | None, peer: str):
        super().__init__(slot, callback)
        self.peer = peer
        self.sent = 0


class ReplayInterface(NetworkInterface):
    def __init__(self, slot: str, callback: ReceiveCallback | None, kind: Replay):
        super().__init__(slot, callback)
        self.records = pcap.read(kind.capture)
        for i, (_, frame) in enumerate(self.records):
            if not MIN_PAYLOAD <= len(frame) <= MAX_PAYLOAD:
                raise CaptureParseError(f"capture record {i} has invalid length {len(frame)}")
        self.cursor = 0
        self.outbound: list[NetworkFrame] = []
        self._writer = pcap.Writer(open(kind.outbound, "wb")) if kind.outbound is not None else None

    def pull(self) -> NetworkFrame | None:
        if self.cursor >= len(self.records):
            return None
        ts, payload = self.records[self.cursor]
        self.cursor += 1
        return NetworkFrame(payload, ts)

    def send(self, frame: NetworkFrame) -> None:
        self.outbound.append(frame)
        if self._writer is not None:
            self._writer.write(frame.timestamp, frame.payload)

    def close(self) -> None:
        if self._writer is not None:
            self._writer.close()
            self._writer = None


class HostTapInterface(NetworkInterface):
    """Linux TAP device; only available when explicitly enabled through the environment."""

    def __init__(self, slot: str, callback: ReceiveCallback | None, kind: HostTap):
        super().__init__(slot, callback)
        if os.environ.get(HOSTTAP_ENV) != "1":
            raise InterfaceUnavailable(f"host TAP backends are disabled (set {HOSTTAP_ENV}=1)")
        try:
            import fcntl
            import struct
            fd = os.open("/dev/net/tun", os.O_RDWR | os.O_NONBLOCK)
            tunsetiff, iff_tap, iff_no_pi = 0x400454CA, 0x0002, 0x1000
            fcntl.ioctl(fd, tunsetiff, struct.pack("16sH", kind.interface.encode(), iff_tap | iff_no_pi))
        except (OSError, ImportError) as exc:
            raise InterfaceUnavailable(f"cannot open TAP interface {kind.interface!r}: {exc}") from exc
        self.fd = fd

    def pull(self) -> NetworkFrame | None:
        while True:
            try:
                data = os.read(self.fd, 65536)
            except BlockingIOError:
                return None
            if MIN_PAYLOAD <= len(data) <= MAX_PAYLOAD:
                return NetworkFrame(data)

    def send(self, frame: NetworkFrame) -> None:
        os.write(self.fd, frame.payload)

    def close(self) -> None:
        os.close(self.fd)
