"""Host-side peripheral backends reached through a slot registry."""

from .accel import Rng, crc32, sha256
from .io import IoChannel
from .network import (MAX_PAYLOAD, HostTap, Loopback, NetworkBackendKind, NetworkFrame,
                      NetworkInterface, Replay)
from .registry import AuditEntry, Category, HalStatus, PeripheralRegistry
from .storage import BlockDevice, StorageMedium

__all__ = [
    "AuditEntry", "BlockDevice", "Category", "HalStatus", "HostTap", "IoChannel", "Loopback",
    "MAX_PAYLOAD", "NetworkBackendKind", "NetworkFrame", "NetworkInterface", "PeripheralRegistry",
    "Replay", "Rng", "StorageMedium", "crc32", "sha256",
]
