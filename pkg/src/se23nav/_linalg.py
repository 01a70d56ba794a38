"""Small fixed-size linear algebra used inside the hot kernels.

Under numba, explicit loops avoid the BLAS call and allocation overhead of
``@`` on 3x3 operands. Without numba the same names fall back to numpy.
"""
from __future__ import annotations

import numpy as np

from ._jit import NUMBA_ENABLED, njit

if NUMBA_ENABLED:

    @njit
    def mm(a, b):
        n, k = a.shape
        m = b.shape[1]
        out = np.zeros((n, m))
        for i in range(n):
            for l in range(k):
                ail = a[i, l]
                if ail != 0.0:
                    for j in range(m):
                        out[i, j] += ail * b[l, j]
        return out

    @njit
    def mmt(a, b):
        """a @ b.T"""
        n, k = a.shape
        m = b.shape[0]
        out = np.empty((n, m))
        for i in range(n):
            for j in range(m):
                acc = 0.0
                for l in range(k):
                    acc += a[i, l] * b[j, l]
                out[i, j] = acc
        return out

    @njit
    def mv(a, x):
        n, k = a.shape
        out = np.empty(n)
        for i in range(n):
            acc = 0.0
            for l in range(k):
                acc += a[i, l] * x[l]
            out[i] = acc
        return out

    @njit
    def mtv(a, x):
        """a.T @ x"""
        k, n = a.shape
        out = np.zeros(n)
        for l in range(k):
            xl = x[l]
            for i in range(n):
                out[i] += a[l, i] * xl
        return out

else:

    def mm(a, b):
        return a @ b

    def mmt(a, b):
        return a @ b.T

    def mv(a, x):
        return a @ x

    def mtv(a, x):
        return a.T @ x
