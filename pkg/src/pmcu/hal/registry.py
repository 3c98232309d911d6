"""The para-API: named peripheral slots dispatched to host backends by category."""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Any, TextIO

from ..errors import HalError, PeerMissing, UnboundSlot, WrongCategory
from . import accel
from .io import IoChannel, Sink, Source
from .network import (HostTap, HostTapInterface, Loopback, LoopbackInterface, NetworkBackendKind,
                      NetworkFrame, NetworkInterface, ReceiveCallback, Replay, ReplayInterface)
from .storage import BlockDevice, StorageMedium


class Category(str, enum.Enum):
    Io = "Io"
    Network = "Network"
    Storage = "Storage"
    Accelerator = "Accelerator"
    Dummy = "Dummy"


class HalStatus(enum.IntEnum):
    Ok = 0


@dataclass
class Binding:
    category: Category
    backend: Any


@dataclass(frozen=True)
class AuditEntry:
    seq: int
    slot: str
    call: str
    args: tuple

    def format(self) -> str:
        return f"call={self.call} slot={self.slot} seq={self.seq}"


class DummyPeripheral:
    """Accepts any call and reports success; exists only to be audited."""


ACCELERATOR_SLOTS = ("crc", "sha256", "rng")


class PeripheralRegistry:
    """Slot table for one machine.

    Every operation first checks the slot's category, then runs a checkpoint on
    the attached machine (so a due tick may preempt the caller) before touching
    the backend. Operations may also be used without a machine, e.g. in tests.
    """

    def __init__(self, machine=None, *, allow_rebind: bool = True, audit: TextIO | None = None):
        self.machine = machine
        self.allow_rebind = allow_rebind
        self.bindings: dict[str, Binding] = {}
        self.audit_log: list[AuditEntry] = []
        self._audit_out = audit
        self._rng = accel.Rng(machine.rng if machine is not None else random.Random(0))
        for slot in ACCELERATOR_SLOTS:
            self._bind(slot, Category.Accelerator, None)
        if machine is not None:
            machine.peripherals = self

    # -- slot table -------------------------------------------------------------

    def _bind(self, slot: str, category: Category, backend) -> None:
        old = self.bindings.get(slot)
        if old is not None:
            if not self.allow_rebind:
                raise HalError(f"slot {slot!r} is already bound")
            self._close(old)
        self.bindings[slot] = Binding(category, backend)

    def unbind(self, slot: str) -> None:
        b = self.bindings.pop(slot, None)
        if b is None:
            raise UnboundSlot(f"slot {slot!r} is not bound")
        self._close(b)

    def category(self, slot: str) -> Category:
        b = self.bindings.get(slot)
        if b is None:
            raise UnboundSlot(f"slot {slot!r} is not bound")
        return b.category

    def _get(self, slot: str, want: Category | None = None):
        b = self.bindings.get(slot)
        if b is None:
            raise UnboundSlot(f"slot {slot!r} is not bound")
        if want is not None and b.category is not want:
            raise WrongCategory(f"slot {slot!r} is {b.category.value}, not {want.value}")
        return b.backend

    def _enter(self, slot: str | None, want: Category):
        backend = self._get(slot, want) if slot is not None else None
        if self.machine is not None:
            self.machine.checkpoint()
        return backend

    @staticmethod
    def _close(b: Binding) -> None:
        if b.backend is not None and hasattr(b.backend, "close"):
            b.backend.close()

    def close(self) -> None:
        for b in self.bindings.values():
            self._close(b)
        self.bindings.clear()

    # -- IO -----------------------------------------------------------------

    def bind_io(self, slot: str, source: Source = None, sink: Sink = None) -> IoChannel:
        ch = IoChannel(source, sink)
        self._bind(slot, Category.Io, ch)
        return ch

    def io_write(self, slot: str, data: bytes) -> int:
        return self._enter(slot, Category.Io).write(data)

    def io_read(self, slot: str, max_bytes: int) -> bytes:
        return self._enter(slot, Category.Io).read(max_bytes)

    def io_write_mem(self, slot: str, addr: int, length: int) -> int:
        """Write ``length`` bytes of machine memory at ``addr``; the access is checked."""
        return self.io_write(slot, self.machine.load(addr, length))

    def io_read_mem(self, slot: str, addr: int, max_bytes: int) -> int:
        """Read into machine memory at ``addr``; returns the byte count stored."""
        data = self.io_read(slot, max_bytes)
        self.machine.store(addr, data)
        return len(data)

    # -- network --------------------------------------------------------------

    def network_init(self, slot: str, kind: NetworkBackendKind,
                     receive_callback: ReceiveCallback | None = None) -> NetworkInterface:
        if isinstance(kind, Loopback):
            nic = LoopbackInterface(slot, receive_callback, kind.peer)
        elif isinstance(kind, Replay):
            nic = ReplayInterface(slot, receive_callback, kind)
        elif isinstance(kind, HostTap):
            nic = HostTapInterface(slot, receive_callback, kind)
        else:
            raise TypeError(f"unknown network backend kind {kind!r}")
        self._bind(slot, Category.Network, nic)
        return nic

    def loopback_pair(self, a: str, b: str, callback_a: ReceiveCallback | None = None,
                      callback_b: ReceiveCallback | None = None) -> None:
        self.network_init(a, Loopback(b), callback_a)
        self.network_init(b, Loopback(a), callback_b)

    def _deliver(self, nic: NetworkInterface, frame: NetworkFrame) -> None:
        m = self.machine
        for tid in nic.deliver(frame):
            if m is not None:
                m.wake(tid)

    def network_send(self, slot: str, frame: NetworkFrame | bytes) -> None:
        nic = self._enter(slot, Category.Network)
        if not isinstance(frame, NetworkFrame):
            frame = NetworkFrame(frame, self.machine.vt if self.machine is not None else 0)
        if isinstance(nic, LoopbackInterface):
            peer = self.bindings.get(nic.peer)
            if peer is None or not isinstance(peer.backend, NetworkInterface):
                raise PeerMissing(f"loopback peer {nic.peer!r} of {slot!r} is not a bound network slot")
            nic.sent += 1
            self._deliver(peer.backend, frame)
        else:
            nic.send(frame)

    def network_receive(self, slot: str, blocking: bool = False) -> NetworkFrame | None:
        """Next queued inbound frame.

        A blocking call suspends the calling task until a frame arrives; it
        returns ``None`` if the machine stops (or isn't running) first.
        """
        nic: NetworkInterface = self._enter(slot, Category.Network)
        m = self.machine
        while True:
            if not nic.inbound:
                frame = nic.pull()
                if frame is not None:
                    self._deliver(nic, frame)
            if nic.inbound:
                return nic.inbound.popleft()
            if not blocking or m is None or not m.live or m.current is None:
                return None
            nic.waiters.append(m.current)
            m.block(("net", slot))
            if m.finished:
                return None

    def network_drain(self, slot: str) -> int:
        """Pull every frame the backend currently has and hand each one up; returns the count."""
        nic: NetworkInterface = self._enter(slot, Category.Network)
        n = 0
        while (frame := nic.pull()) is not None:
            self._deliver(nic, frame)
            n += 1
        return n

    # -- storage --------------------------------------------------------------

    def storage_init(self, slot: str, medium: StorageMedium | str | Path) -> BlockDevice:
        if not isinstance(medium, StorageMedium):
            medium = StorageMedium(medium)
        old = self.bindings.get(slot)
        if old is not None:
            # flush the old mapping first so the new one sees every write
            self.unbind(slot)
        dev = BlockDevice(medium)
        self._bind(slot, Category.Storage, dev)
        return dev

    def storage_read(self, slot: str, block_index: int, count: int = 1) -> bytes:
        return self._enter(slot, Category.Storage).read(block_index, count)

    def storage_write(self, slot: str, block_index: int, data: bytes) -> None:
        self._enter(slot, Category.Storage).write(block_index, data)

    def storage_sync(self, slot: str) -> None:
        self._enter(slot, Category.Storage).sync()

    # -- accelerators -----------------------------------------------------------

    def crc32(self, data: bytes, slot: str | None = None) -> int:
        self._enter(slot, Category.Accelerator)
        return accel.crc32(data)

    def sha256(self, data: bytes, slot: str | None = None) -> bytes:
        self._enter(slot, Category.Accelerator)
        return accel.sha256(data)

    def rng(self, count: int, slot: str | None = None) -> bytes:
        self._enter(slot, Category.Accelerator)
        return self._rng.bytes(count)

    # -- dummy ----------------------------------------------------------------

    def bind_dummy(self, slot: str) -> None:
        self._bind(slot, Category.Dummy, DummyPeripheral())

    def dummy(self, slot: str, call_name: str, *args) -> HalStatus:
        self._enter(slot, Category.Dummy)
        entry = AuditEntry(len(self.audit_log), slot, call_name, args)
        self.audit_log.append(entry)
        if self._audit_out is not None:
            self._audit_out.write(entry.format() + "\n")
        return HalStatus.Ok

    def audit_text(self) -> str:
        return "".join(e.format() + "\n" for e in self.audit_log)
