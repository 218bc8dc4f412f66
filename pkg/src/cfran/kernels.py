"""Kernel backend selection.

Prefers the compiled extension; falls back to the pure-Python kernels when
it is unavailable or when CFRAN_PURE_PYTHON=1 is set.
"""

from __future__ import annotations

import os

if os.environ.get("CFRAN_PURE_PYTHON") == "1":
    from cfran import _kernels_py as _impl
else:
    try:
        from cfran import _kernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        from cfran import _kernels_py as _impl

BACKEND = _impl.BACKEND
SCHED_RR = _impl.SCHED_RR
SCHED_PF = _impl.SCHED_PF
fluid_kernel = _impl.fluid_kernel
packet_kernel = _impl.packet_kernel
replay_grid = _impl.replay_grid
