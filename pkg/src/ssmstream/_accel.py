"""Hot numeric kernels: numba-compiled by default, pure numpy as fallback.

Backend selection is controlled by the ``SSMSTREAM_BACKEND`` environment
variable, read once at import time:

    auto   -- use numba when importable, else numpy (default)
    numba  -- require numba, fail loudly if missing
    numpy  -- force the pure-numpy lane (useful for debugging and as a
              reference when benchmarking the compiled kernels)

Both lanes implement identical arithmetic per timestep; within one lane,
repeated single-step calls compose bit-identically to a full scan.
"""

import os

import numpy as np

_REQUESTED = os.environ.get("SSMSTREAM_BACKEND", "auto").strip().lower()
if _REQUESTED not in ("auto", "numba", "numpy"):
    raise RuntimeError(
        f"SSMSTREAM_BACKEND must be one of auto|numba|numpy, got {_REQUESTED!r}"
    )

_HAVE_NUMBA = False
if _REQUESTED in ("auto", "numba"):
    try:
        from numba import njit

        _HAVE_NUMBA = True
    except ImportError:
        if _REQUESTED == "numba":
            raise RuntimeError(
                "SSMSTREAM_BACKEND=numba but numba is not importable"
            ) from None

BACKEND = "numba" if _HAVE_NUMBA else "numpy"


def backend_name() -> str:
    """Name of the active kernel lane ("numba" or "numpy")."""
    return BACKEND


def _scan_numpy(A_bar, B_bar, C_bar, D, x, h0):
    H, L = x.shape
    y = np.empty((H, L))
    h = h0.copy()
    for k in range(L):
        xk = x[:, k]
        h = A_bar * h + B_bar * xk[:, None]
        y[:, k] = (C_bar * h).real.sum(axis=1) + D * xk
    return y, h


def _naive_conv_numpy(kernel, x):
    # np.convolve is direct multiply-accumulate, independent of any FFT path.
    H, L = kernel.shape
    y = np.empty((H, L))
    for h in range(H):
        y[h] = np.convolve(x[h], kernel[h])[:L]
    return y


if _HAVE_NUMBA:

    @njit(cache=True)
    def _scan_numba(A_bar, B_bar, C_bar, D, x, h0):  # pragma: no cover - jitted
        H, N = A_bar.shape
        L = x.shape[1]
        y = np.empty((H, L))
        h = h0.copy()
        for c in range(H):
            for k in range(L):
                xk = x[c, k]
                acc = 0.0
                for n in range(N):
                    hn = A_bar[c, n] * h[c, n] + B_bar[c, n] * xk
                    h[c, n] = hn
                    acc += (C_bar[c, n] * hn).real
                y[c, k] = acc + D[c] * xk
        return y, h

    @njit(cache=True, fastmath=True)
    def _naive_conv_numba(kernel, x):  # pragma: no cover - jitted
        H, L = kernel.shape
        y = np.empty((H, L))
        for c in range(H):
            for k in range(L):
                acc = 0.0
                for l in range(k + 1):
                    acc += kernel[c, l] * x[c, k - l]
                y[c, k] = acc
        return y

    scan_core = _scan_numba
    naive_conv_core = _naive_conv_numba
else:
    scan_core = _scan_numpy
    naive_conv_core = _naive_conv_numpy
