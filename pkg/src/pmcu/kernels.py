"""Selects the compiled kernels when available, the pure-Python ones otherwise.

Set ``PMCU_PURE_PYTHON=1`` to force the fallback.
"""

import os

if os.environ.get("PMCU_PURE_PYTHON"):
    from . import _kernels_py as impl
else:
    try:
        from . import _kernels as impl
    except ImportError:
        from . import _kernels_py as impl

ADDRESSABLE = impl.ADDRESSABLE
REDZONE = impl.REDZONE
FREED = impl.FREED
UNALLOCATED = impl.UNALLOCATED
IMPLEMENTATION = impl.IMPLEMENTATION

RegionHeap = impl.RegionHeap
shadow_scan = impl.shadow_scan
pattern_run = impl.pattern_run
CpuCore = impl.CpuCore
