"""pmcu: a portable-MCU simulator with HAL backends, a demo RTOS, and a persistent-mode harness."""

from .core import (InterruptState, Machine, MachineConfig, Outcome, RunResult, SchedulerHooks,
                   TaskState, TickConfig, TickMode, TickOutcome, machine_new)
from .faults import AccessKind, BugClass, CrashReport, Violation, classify_crash
from .harness import FuzzStats, RunReport, corpus_matrix, run_once, run_persistent
from .hal import NetworkFrame, PeripheralRegistry, StorageMedium
from .kernels import IMPLEMENTATION
from .memory import AllocatorMode, ImageSections, MachineMemory, MemoryMap

__version__ = "0.1.0"

__all__ = [
    "AccessKind", "AllocatorMode", "BugClass", "CrashReport", "FuzzStats", "IMPLEMENTATION",
    "ImageSections", "InterruptState", "Machine", "MachineConfig", "MachineMemory", "MemoryMap",
    "NetworkFrame", "Outcome", "PeripheralRegistry", "RunReport", "RunResult", "SchedulerHooks",
    "StorageMedium", "TaskState", "TickConfig", "TickMode", "TickOutcome", "Violation",
    "classify_crash", "corpus_matrix", "machine_new", "run_once", "run_persistent",
]
