"""Kernel backend selection: compiled Cython extension when built, pure numpy
otherwise. Set QISTACK_PURE_PYTHON=1 to force the fallback (used by the
kernel benchmark and tests)."""

from __future__ import annotations

import os

if os.environ.get("QISTACK_PURE_PYTHON"):
    from qistack.emulator import _kernels_py as _impl
else:
    try:
        from qistack.emulator import _kernels_cy as _impl  # type: ignore[no-redef]
    except ImportError:
        from qistack.emulator import _kernels_py as _impl  # type: ignore[no-redef]

BACKEND: str = _impl.BACKEND
apply_gate1 = _impl.apply_gate1
apply_controlled = _impl.apply_controlled
