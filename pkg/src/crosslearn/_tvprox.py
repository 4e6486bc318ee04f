"""Exact proximal operators for the 1-D fused-LASSO penalty.

``tv1d`` is Condat's direct algorithm for

    argmin_x 0.5 * ||x - v||^2 + lam * sum_k |x[k+1] - x[k]|

(L. Condat, "A direct algorithm for 1D total variation denoising",
IEEE SPL 2013).  The prox of ``lam_e*||x||_1 + lam_f*||Dx||_1`` on a
chain is soft-thresholding applied to the TV prox (Friedman et al.,
"Pathwise coordinate optimization", 2007).
"""

import numpy as np
from numba import njit


@njit(cache=True)
def tv1d(v, lam, out):
    n = v.shape[0]
    if n == 0:
        return
    if lam <= 0.0 or n == 1:
        for i in range(n):
            out[i] = v[i]
        return
    k = 0
    k0 = 0
    kplus = 0
    kminus = 0
    umin = lam
    umax = -lam
    vmin = v[0] - lam
    vmax = v[0] + lam
    twolam = 2.0 * lam
    while True:
        while k == n - 1:
            if umin < 0.0:
                while True:
                    out[k0] = vmin
                    k0 += 1
                    if k0 > kminus:
                        break
                k = k0
                kminus = k
                vmin = v[k]
                umin = lam
                umax = vmin + umin - vmax
            elif umax > 0.0:
                while True:
                    out[k0] = vmax
                    k0 += 1
                    if k0 > kplus:
                        break
                k = k0
                kplus = k
                vmax = v[k]
                umax = -lam
                umin = vmax + umax - vmin
            else:
                vmin += umin / (k - k0 + 1)
                while True:
                    out[k0] = vmin
                    k0 += 1
                    if k0 > k:
                        break
                return
        umin += v[k + 1] - vmin
        if umin < -lam:
            while True:
                out[k0] = vmin
                k0 += 1
                if k0 > kminus:
                    break
            k = k0
            kminus = k
            kplus = k
            vmin = v[k]
            vmax = vmin + twolam
            umin = lam
            umax = -lam
        else:
            umax += v[k + 1] - vmax
            if umax > lam:
                while True:
                    out[k0] = vmax
                    k0 += 1
                    if k0 > kplus:
                        break
                k = k0
                kminus = k
                kplus = k
                vmax = v[k]
                vmin = vmax - twolam
                umin = lam
                umax = -lam
            else:
                k += 1
                if umin >= lam:
                    kminus = k
                    vmin += (umin - lam) / (kminus - k0 + 1)
                    umin = lam
                if umax <= -lam:
                    kplus = k
                    vmax += (umax + lam) / (kplus - k0 + 1)
                    umax = -lam


@njit(cache=True)
def fused_prox_rows(v, lam_e, lam_f):
    """Row-wise prox of ``lam_e*|x|_1 + lam_f*TV(x)`` for a 2-D array."""
    out = np.empty_like(v)
    tmp = np.empty(v.shape[1])
    for r in range(v.shape[0]):
        tv1d(v[r], lam_f, tmp)
        for i in range(v.shape[1]):
            t = tmp[i]
            if t > lam_e:
                out[r, i] = t - lam_e
            elif t < -lam_e:
                out[r, i] = t + lam_e
            else:
                out[r, i] = 0.0
    return out
