"""Substep kernel lane selection.

Prefers the compiled extension; falls back to the pure-Python reference.
Set REORIENT_PURE_PYTHON=1 to force the fallback (used by the lane
equivalence tests and the kernel benchmark).
"""

from __future__ import annotations

import os

from . import _kernel_py

if os.environ.get("REORIENT_PURE_PYTHON", "") == "1":
    _impl = _kernel_py
else:
    try:
        from . import _kernel_cy as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _kernel_py

run_substeps = _impl.run_substeps
fingertip_positions = _impl.fingertip_positions
LANE = _impl.LANE


def available_lanes():
    lanes = {"python": _kernel_py}
    try:
        from . import _kernel_cy

        lanes["compiled"] = _kernel_cy
    except ImportError:
        pass
    return lanes
