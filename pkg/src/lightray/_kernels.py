"""Compiled ray kernels.

Fields are passed flattened in C order together with their shape, origin and
spacing, so the same kernels serve n = 2 and n = 3.  Reads outside the grid
contribute zero.
"""
import math

import numpy as np
from numba import njit, prange


@njit(cache=True, inline="always")
def _keys(x):
    # Keys cubic convolution weight, a = -1/2
    ax = abs(x)
    if ax < 1.0:
        return (1.5 * ax - 2.5) * ax * ax + 1.0
    if ax < 2.0:
        return ((-0.5 * ax + 2.5) * ax - 4.0) * ax + 2.0
    return 0.0


@njit(cache=True)
def _axis_taps(u, size, cubic, idx, wts, j):
    """Fill taps for one axis; returns the number of taps."""
    i = int(math.floor(u))
    fr = u - i
    if cubic:
        for q in range(4):
            idx[j, q] = i - 1 + q
            wts[j, q] = _keys(fr - (q - 1))
        return 4
    idx[j, 0] = i
    wts[j, 0] = 1.0 - fr
    idx[j, 1] = i + 1
    wts[j, 1] = fr
    return 2


@njit(cache=True)
def _interp(f, shape, strides, idx, wts, ntap, d):
    acc = 0.0
    total = 1
    for j in range(d):
        total *= ntap
    for c in range(total):
        rem = c
        w = 1.0
        off = 0
        ok = True
        for j in range(d):
            q = rem % ntap
            rem //= ntap
            ii = idx[j, q]
            if ii < 0 or ii >= shape[j]:
                ok = False
                break
            w *= wts[j, q]
            off += ii * strides[j]
        if ok and w != 0.0:
            acc += w * f[off]
    return acc


@njit(cache=True)
def _splat(g, shape, strides, idx, wts, ntap, d, coef):
    total = 1
    for j in range(d):
        total *= ntap
    for c in range(total):
        rem = c
        w = 1.0
        off = 0
        ok = True
        for j in range(d):
            q = rem % ntap
            rem //= ntap
            ii = idx[j, q]
            if ii < 0 or ii >= shape[j]:
                ok = False
                break
            w *= wts[j, q]
            off += ii * strides[j]
        if ok and w != 0.0:
            g[off] += coef * w


@njit(parallel=True, cache=True)
def forward_rays(f, shape, strides, origin, spacing, z, theta, s0, hs, nst,
                 kap, kstart, use_kap, cubic, out):
    """out[r] = sum_k kappa * f(s_k, z_r + s_k theta), s_k = s0 + (k + 1/2) hs."""
    m = z.shape[0]
    n = z.shape[1]
    d = n + 1
    ntap = 4 if cubic else 2
    for r in prange(m):
        idx = np.empty((d, 4), dtype=np.int64)
        wts = np.empty((d, 4))
        acc = 0.0
        for k in range(nst[r]):
            s = s0[r] + (k + 0.5) * hs[r]
            _axis_taps((s - origin[0]) / spacing[0], shape[0], cubic, idx, wts, 0)
            for j in range(n):
                p = z[r, j] + s * theta[j]
                _axis_taps((p - origin[j + 1]) / spacing[j + 1], shape[j + 1], cubic, idx, wts, j + 1)
            v = _interp(f, shape, strides, idx, wts, ntap, d)
            if use_kap:
                v *= kap[kstart[r] + k]
            acc += v
        out[r] = acc


@njit(cache=True, nogil=True)
def adjoint_rays(g, shape, strides, origin, spacing, z, theta, s0, hs, nst,
                 kap, kstart, use_kap, cubic, coef):
    """Transpose of forward_rays: g += coef[r] * kappa * (interpolation weights)."""
    m = z.shape[0]
    n = z.shape[1]
    d = n + 1
    ntap = 4 if cubic else 2
    idx = np.empty((d, 4), dtype=np.int64)
    wts = np.empty((d, 4))
    for r in range(m):
        c = coef[r]
        if c == 0.0:
            continue
        for k in range(nst[r]):
            s = s0[r] + (k + 0.5) * hs[r]
            _axis_taps((s - origin[0]) / spacing[0], shape[0], cubic, idx, wts, 0)
            for j in range(n):
                p = z[r, j] + s * theta[j]
                _axis_taps((p - origin[j + 1]) / spacing[j + 1], shape[j + 1], cubic, idx, wts, j + 1)
            cc = c
            if use_kap:
                cc *= kap[kstart[r] + k]
            _splat(g, shape, strides, idx, wts, ntap, d, cc)


@njit(parallel=True, cache=True)
def backproject_continuum(phi, nz, z0, dz, t_axis, x_axis, theta, n, wk, kap, use_kap, out, outside):
    """out[i_t, q] += wk * phi(x_q - t theta) by n-linear interpolation on the
    z-grid; outside[i_t] counts points whose z fell off the grid."""
    nt = t_axis.shape[0]
    nx = x_axis.shape[0]
    npts = out.shape[1]
    zmax = z0 + dz * (nz - 1)
    for it in prange(nt):
        t = t_axis[it]
        iz = np.empty(3, dtype=np.int64)
        fz = np.empty(3)
        cnt = 0
        for q in range(npts):
            rem = q
            inside = True
            for j in range(n - 1, -1, -1):
                xi = x_axis[rem % nx]
                rem //= nx
                zz = xi - t * theta[j]
                if zz < z0 or zz > zmax:
                    inside = False
                    break
                u = (zz - z0) / dz
                i = int(math.floor(u))
                if i >= nz - 1:
                    i = nz - 2
                iz[j] = i
                fz[j] = u - i
            if not inside:
                cnt += 1
                continue
            acc = 0.0
            for c in range(1 << n):
                w = 1.0
                off = 0
                for j in range(n):
                    b = (c >> j) & 1
                    w *= fz[j] if b else 1.0 - fz[j]
                    off = off * nz + iz[j] + b
                acc += w * phi[off]
            if use_kap:
                acc *= kap[it, q]
            out[it, q] += wk * acc
        outside[it] += cnt
