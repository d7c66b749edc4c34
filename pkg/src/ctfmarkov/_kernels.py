"""Compiled inner loops for the allocation updates."""

import numpy as np
from numba import njit


@njit(cache=True)
def sweep_allocations(z, idx, w, y, log_pi, log_lam, zstar, strides, k, u):
    """Sequential scan over lags then time points, updating ``z`` in place.

    ``idx[i]`` is the flat grid index of ``z[:, i]`` and is kept in sync.
    ``log_pi`` is padded to shape ``(q, C0, C0)``. One uniform per site.
    """
    q, n = z.shape
    buf = np.empty(log_pi.shape[2])
    for j in range(q):
        kj = k[j]
        if kj == 1:
            continue
        sj = strides[j]
        for i in range(n):
            base = idx[i] - z[j, i] * sj
            c = w[j, i]
            yi = y[i]
            m = -np.inf
            for h in range(kj):
                v = log_pi[j, c, h] + log_lam[zstar[base + h * sj], yi]
                buf[h] = v
                if v > m:
                    m = v
            tot = 0.0
            for h in range(kj):
                buf[h] = np.exp(buf[h] - m)
                tot += buf[h]
            target = u[j, i] * tot
            acc = 0.0
            choice = kj - 1
            for h in range(kj):
                acc += buf[h]
                if acc > target:
                    choice = h
                    break
            z[j, i] = choice
            idx[i] = base + choice * sj
    return z
