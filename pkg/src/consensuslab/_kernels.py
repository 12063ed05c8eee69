"""JIT-compiled inner loops for the hot simulation paths.

Only two model combinations are hot enough to matter (erasure or static
links with Gaussian or no noise); every other combination runs through the
pure-numpy reference path in ``decaying``/``repeated``.

Gaussian noise is drawn per NODE here: with independent per-direction link
draws, node l's aggregate noise is exactly N(0, live_deg_l * sigma^2) and
independent across nodes, so one standard normal per node per iteration
reproduces the process law of the 2M per-edge draws.

Both kernels return -1 on success, or the block-local iteration index at
which the divergence guard tripped (non-finite states trip it too).
"""

import numba
import numpy as np


@numba.njit(cache=True)
def and_erasure_gauss_block(x, u, v, unif, keep, z, sigma, alphas, xavg, dist, sqerr, r, guard):
    nblock, m = unif.shape
    n = x.shape[0]
    for b in range(nblock):
        g = np.zeros(n)
        deg = np.zeros(n)
        for e in range(m):
            if unif[b, e] < keep:
                uu = u[e]
                vv = v[e]
                d = x[uu] - x[vv]
                g[uu] += d
                g[vv] -= d
                deg[uu] += 1.0
                deg[vv] += 1.0
        a = alphas[b]
        maxabs = 0.0
        for i in range(n):
            xn = x[i] - a * (g[i] + sigma * np.sqrt(deg[i]) * z[b, i])
            x[i] = xn
            if abs(xn) > maxabs:
                maxabs = abs(xn)
        mean = 0.0
        for i in range(n):
            mean += x[i]
        mean /= n
        ss = 0.0
        for i in range(n):
            d = x[i] - mean
            ss += d * d
        xavg[b] = mean
        dist[b] = np.sqrt(ss)
        sqerr[b] = (mean - r) * (mean - r)
        if not (maxabs <= guard):
            return b
    return -1


@numba.njit(cache=True)
def and_static_gauss_block(x, u, v, sqrtdeg, z, sigma, alphas, xavg, dist, sqerr, r, guard):
    nblock = alphas.shape[0]
    m = u.shape[0]
    n = x.shape[0]
    for b in range(nblock):
        g = np.zeros(n)
        for e in range(m):
            uu = u[e]
            vv = v[e]
            d = x[uu] - x[vv]
            g[uu] += d
            g[vv] -= d
        a = alphas[b]
        maxabs = 0.0
        for i in range(n):
            xn = x[i] - a * (g[i] + sigma * sqrtdeg[i] * z[b, i])
            x[i] = xn
            if abs(xn) > maxabs:
                maxabs = abs(xn)
        mean = 0.0
        for i in range(n):
            mean += x[i]
        mean /= n
        ss = 0.0
        for i in range(n):
            d = x[i] - mean
            ss += d * d
        xavg[b] = mean
        dist[b] = np.sqrt(ss)
        sqerr[b] = (mean - r) * (mean - r)
        if not (maxabs <= guard):
            return b
    return -1
