"""Numeric kernels for the fast-marching solver and gradient backtracking.

Written in a numba-compatible subset of Python; when numba is importable the
kernels are JIT-compiled (cached on disk), otherwise the same code runs as
plain Python. Results are identical either way.
"""

from __future__ import annotations

import numpy as np

_FAR_LIMIT = 1e300


def _fmm_update(T, known, F, ni, nj, n1, n2):
    a = np.inf
    if ni > 0 and known[ni - 1, nj] == 1:
        a = T[ni - 1, nj]
    if ni + 1 < n1 and known[ni + 1, nj] == 1 and T[ni + 1, nj] < a:
        a = T[ni + 1, nj]
    b = np.inf
    if nj > 0 and known[ni, nj - 1] == 1:
        b = T[ni, nj - 1]
    if nj + 1 < n2 and known[ni, nj + 1] == 1 and T[ni, nj + 1] < b:
        b = T[ni, nj + 1]
    f = F[ni, nj]
    if a > b:
        a, b = b, a
    # one-sided when the larger neighbor cannot be upwind
    if b > _FAR_LIMIT or b - a >= f:
        return a + f
    d = b - a
    return 0.5 * (a + b + np.sqrt(2.0 * f * f - d * d))


def fmm_kernel(F):
    """First-order upwind fast marching from source (0, 0), unit spacing."""
    n1, n2 = F.shape
    T = np.full((n1, n2), np.inf)
    known = np.zeros((n1, n2), dtype=np.uint8)
    T[0, 0] = 0.0
    # binary min-heap over (value, flat index); each node is pushed at most
    # once per accepted neighbor, so 4*n1*n2 bounds the live entries
    cap = 4 * n1 * n2 + 4
    heap_val = np.empty(cap, dtype=np.float64)
    heap_idx = np.empty(cap, dtype=np.int64)
    heap_val[0] = 0.0
    heap_idx[0] = 0
    size = 1
    while size > 0:
        idx = heap_idx[0]
        size -= 1
        heap_val[0] = heap_val[size]
        heap_idx[0] = heap_idx[size]
        k = 0
        while True:
            child = 2 * k + 1
            if child >= size:
                break
            if child + 1 < size and heap_val[child + 1] < heap_val[child]:
                child += 1
            if heap_val[child] < heap_val[k]:
                heap_val[k], heap_val[child] = heap_val[child], heap_val[k]
                heap_idx[k], heap_idx[child] = heap_idx[child], heap_idx[k]
                k = child
            else:
                break
        i = idx // n2
        j = idx % n2
        if known[i, j] == 1:
            continue
        known[i, j] = 1
        for m in range(4):
            if m == 0:
                ni, nj = i + 1, j
            elif m == 1:
                ni, nj = i - 1, j
            elif m == 2:
                ni, nj = i, j + 1
            else:
                ni, nj = i, j - 1
            if ni < 0 or nj < 0 or ni >= n1 or nj >= n2 or known[ni, nj] == 1:
                continue
            u = _fmm_update(T, known, F, ni, nj, n1, n2)
            if u < T[ni, nj]:
                T[ni, nj] = u
                heap_val[size] = u
                heap_idx[size] = ni * n2 + nj
                k = size
                size += 1
                while k > 0:
                    parent = (k - 1) // 2
                    if heap_val[k] < heap_val[parent]:
                        heap_val[k], heap_val[parent] = heap_val[parent], heap_val[k]
                        heap_idx[k], heap_idx[parent] = heap_idx[parent], heap_idx[k]
                        k = parent
                    else:
                        break
    return T


def _bilinear(grid, x1, x2, n1, n2):
    i = int(x1)
    if i > n1 - 2:
        i = n1 - 2
    j = int(x2)
    if j > n2 - 2:
        j = n2 - 2
    f1 = x1 - i
    f2 = x2 - j
    return (
        grid[i, j] * (1.0 - f1) * (1.0 - f2)
        + grid[i + 1, j] * f1 * (1.0 - f2)
        + grid[i, j + 1] * (1.0 - f1) * f2
        + grid[i + 1, j + 1] * f1 * f2
    )


def backtrack_kernel(T, g1, g2, eps, max_steps, path):
    """Unit-speed gradient descent on T from the far corner toward (0, 0).

    Writes positions into ``path`` and returns (count, status) with status
    0 = reached the origin neighborhood, 1 = stalled (10 steps without a
    decrease in T, or vanished gradient), 2 = step budget exhausted.
    """
    n1, n2 = T.shape
    x1 = float(n1 - 1)
    x2 = float(n2 - 1)
    path[0, 0] = x1
    path[0, 1] = x2
    count = 1
    stall = 0
    t_prev = T[n1 - 1, n2 - 1]
    threshold = np.sqrt(2.0) * eps
    while count < max_steps:
        if np.sqrt(x1 * x1 + x2 * x2) <= threshold:
            return count, 0
        d1 = _bilinear(g1, x1, x2, n1, n2)
        d2 = _bilinear(g2, x1, x2, n1, n2)
        norm = np.sqrt(d1 * d1 + d2 * d2)
        if norm < 1e-300:
            return count, 1
        x1 -= eps * d1 / norm
        x2 -= eps * d2 / norm
        if x1 < 0.0:
            x1 = 0.0
        elif x1 > n1 - 1.0:
            x1 = n1 - 1.0
        if x2 < 0.0:
            x2 = 0.0
        elif x2 > n2 - 1.0:
            x2 = n2 - 1.0
        t_cur = _bilinear(T, x1, x2, n1, n2)
        if t_cur < t_prev:
            stall = 0
        else:
            stall += 1
            if stall >= 10:
                return count, 1
        t_prev = t_cur
        path[count, 0] = x1
        path[count, 1] = x2
        count += 1
    return count, 2


try:  # pragma: no cover - exercised indirectly
    from numba import njit

    _fmm_update = njit(cache=True)(_fmm_update)
    _bilinear = njit(cache=True)(_bilinear)
    fmm_kernel = njit(cache=True)(fmm_kernel)
    backtrack_kernel = njit(cache=True)(backtrack_kernel)
    JITTED = True
except ImportError:  # pragma: no cover
    JITTED = False
