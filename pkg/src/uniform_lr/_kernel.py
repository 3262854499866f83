"""Compiled active-set kernel for bound-constrained quadratic forms.

Solves ``min_u (u - d)' A (u - d)`` subject to ``u[i] >= 0`` for every ``i``
flagged in ``bounded``; the remaining coordinates are free. This is the
Lawson-Hanson NNLS iteration written directly on the Gram matrix ``A``.
"""

import numpy as np
from numba import config, njit, prange

# The bundled TBB is too old on some systems; workqueue is always available.
if config.THREADING_LAYER == "default":
    config.THREADING_LAYER = "workqueue"

STATUS_OK = 0
STATUS_MAXITER = 1
STATUS_NOT_PD = 2

_BLOCK = 256


@njit(cache=True)
def _solve_passive(A, d, passive, s, L, rhs, idx):
    # s[P] = A[P, P]^{-1} (A d)[P], s elsewhere 0; Cholesky on the passive block.
    k = A.shape[0]
    m = 0
    for i in range(k):
        s[i] = 0.0
        if passive[i]:
            idx[m] = i
            m += 1
    if m == 0:
        return True
    for a in range(m):
        i = idx[a]
        acc = 0.0
        for j in range(k):
            acc += A[i, j] * d[j]
        rhs[a] = acc
    for a in range(m):
        for b in range(a + 1):
            acc = A[idx[a], idx[b]]
            for c in range(b):
                acc -= L[a, c] * L[b, c]
            if a == b:
                if not acc > 0.0:
                    return False
                L[a, a] = np.sqrt(acc)
            else:
                L[a, b] = acc / L[b, b]
    for a in range(m):
        acc = rhs[a]
        for c in range(a):
            acc -= L[a, c] * rhs[c]
        rhs[a] = acc / L[a, a]
    for a in range(m - 1, -1, -1):
        acc = rhs[a]
        for c in range(a + 1, m):
            acc -= L[c, a] * rhs[c]
        rhs[a] = acc / L[a, a]
    for a in range(m):
        s[idx[a]] = rhs[a]
    return True


@njit(cache=True)
def active_set(A, d, bounded, maxiter, u, passive, s, L, rhs, idx, skip):
    """Run the active-set iteration in place.

    On return ``u`` holds the minimizer and ``passive`` is False exactly on the
    bounded coordinates held at their bound. Returns ``(status, pivots)``.
    """
    k = A.shape[0]
    amax = 0.0
    dmax = 0.0
    for i in range(k):
        if abs(d[i]) > dmax:
            dmax = abs(d[i])
        for j in range(k):
            if abs(A[i, j]) > amax:
                amax = abs(A[i, j])
    tol = 1e-13 * (1.0 + amax) * (1.0 + dmax) * k

    for i in range(k):
        passive[i] = not bounded[i]
        skip[i] = False
    if not _solve_passive(A, d, passive, s, L, rhs, idx):
        return STATUS_NOT_PD, 0
    for i in range(k):
        u[i] = s[i]

    pivots = 0
    while True:
        # Entering index: largest positive multiplier, lowest index on ties.
        best = -1
        bestw = tol
        for i in range(k):
            if bounded[i] and not passive[i] and not skip[i]:
                w = 0.0
                for j in range(k):
                    w += A[i, j] * (d[j] - u[j])
                if w > bestw:
                    bestw = w
                    best = i
        if best < 0:
            return STATUS_OK, pivots
        passive[best] = True
        first = True
        while True:
            pivots += 1
            if pivots > maxiter:
                return STATUS_MAXITER, pivots
            if not _solve_passive(A, d, passive, s, L, rhs, idx):
                return STATUS_NOT_PD, pivots
            if first and s[best] <= 0.0:
                # Multiplier was rounding noise; leave the bound in place.
                passive[best] = False
                skip[best] = True
                break
            first = False
            alpha = 2.0
            hit = -1
            for i in range(k):
                if bounded[i] and passive[i] and s[i] <= 0.0:
                    r = u[i] / (u[i] - s[i])
                    if r < alpha:
                        alpha = r
                        hit = i
            if hit < 0:
                for i in range(k):
                    u[i] = s[i]
                    skip[i] = False
                break
            for i in range(k):
                u[i] += alpha * (s[i] - u[i])
            for i in range(k):
                if bounded[i] and passive[i] and (i == hit or u[i] <= 0.0):
                    passive[i] = False
                    u[i] = 0.0


@njit(cache=True)
def _quad(A, u, d):
    k = A.shape[0]
    total = 0.0
    for i in range(k):
        ri = u[i] - d[i]
        acc = 0.0
        for j in range(k):
            acc += A[i, j] * (u[j] - d[j])
        total += ri * acc
    return total


@njit(cache=True, parallel=True)
def batch_minimum(A, D, bounded, maxiter, out, status):
    """Minimum value of the reduced problem for every row of ``D``."""
    n = D.shape[0]
    k = A.shape[0]
    nblocks = (n + _BLOCK - 1) // _BLOCK
    for blk in prange(nblocks):
        u = np.empty(k)
        passive = np.empty(k, dtype=np.bool_)
        skip = np.empty(k, dtype=np.bool_)
        s = np.empty(k)
        L = np.empty((k, k))
        rhs = np.empty(k)
        idx = np.empty(k, dtype=np.int64)
        stop = min(n, (blk + 1) * _BLOCK)
        for r in range(blk * _BLOCK, stop):
            d = D[r]
            st, _ = active_set(A, d, bounded, maxiter, u, passive, s, L, rhs, idx, skip)
            status[r] = st
            out[r] = _quad(A, u, d)


def solve_one(A, d, bounded, maxiter):
    k = A.shape[0]
    u = np.empty(k)
    passive = np.empty(k, dtype=np.bool_)
    skip = np.empty(k, dtype=np.bool_)
    s = np.empty(k)
    L = np.empty((k, k))
    rhs = np.empty(k)
    idx = np.empty(k, dtype=np.int64)
    status, pivots = active_set(A, d, bounded, maxiter, u, passive, s, L, rhs, idx, skip)
    return u, passive, int(status), int(pivots)
