"""Pure-numpy gate application kernels (fallback when the compiled extension
is unavailable). Operates in place on a 1-D complex128 statevector whose index
bit ``k`` holds qubit ``k``."""

from __future__ import annotations

import numpy as np

BACKEND = "python"


def apply_gate1(state: np.ndarray, m00: complex, m01: complex, m10: complex, m11: complex,
                target: int) -> None:
    stride = 1 << target
    v = state.reshape(-1, 2, stride)
    a = v[:, 0, :].copy()
    b = v[:, 1, :]
    v[:, 0, :] = m00 * a + m01 * b
    v[:, 1, :] = m10 * a + m11 * b


def apply_controlled(state: np.ndarray, m00: complex, m01: complex, m10: complex, m11: complex,
                     control: int, target: int) -> None:
    idx = np.arange(state.size)
    sel = ((idx >> control) & 1 == 1) & ((idx >> target) & 1 == 0)
    i0 = idx[sel]
    i1 = i0 | (1 << target)
    a = state[i0]
    b = state[i1]
    state[i0] = m00 * a + m01 * b
    state[i1] = m10 * a + m11 * b
