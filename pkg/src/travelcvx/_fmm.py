"""Factored fast marching kernel (numba).

Solves |grad(t0 * tau)|^2 = c on a uniform, possibly anisotropic grid, where
t0 is the distance to the source.  Frozen nodes (state == 2) are treated as
known data and never updated; the march starts from their neighbours.
"""
import numpy as np
from numba import njit

FAR, TRIAL, KNOWN = 0, 1, 2


@njit(cache=True)
def _heap_push(keys, vals, size, key, val):
    i = size
    keys[i] = key
    vals[i] = val
    while i > 0:
        parent = (i - 1) >> 1
        if keys[parent] <= keys[i]:
            break
        keys[parent], keys[i] = keys[i], keys[parent]
        vals[parent], vals[i] = vals[i], vals[parent]
        i = parent
    return size + 1


@njit(cache=True)
def _heap_pop(keys, vals, size):
    key = keys[0]
    val = vals[0]
    size -= 1
    keys[0] = keys[size]
    vals[0] = vals[size]
    i = 0
    while True:
        left = 2 * i + 1
        if left >= size:
            break
        child = left
        if left + 1 < size and keys[left + 1] < keys[left]:
            child = left + 1
        if keys[i] <= keys[child]:
            break
        keys[child], keys[i] = keys[i], keys[child]
        vals[child], vals[i] = vals[i], vals[child]
        i = child
    return key, val, size


@njit(cache=True)
def _solve_subset(alpha, beta, use, cval):
    qa = 0.0
    qb = 0.0
    qc = -cval
    for d in range(3):
        if use[d]:
            qa += alpha[d] * alpha[d]
            qb += 2.0 * alpha[d] * beta[d]
            qc += beta[d] * beta[d]
    disc = qb * qb - 4.0 * qa * qc
    if qa <= 0.0 or disc < 0.0:
        return -1.0
    return (-qb + np.sqrt(disc)) / (2.0 * qa)


@njit(cache=True)
def _update(i, j, k, t, tau, t0, state, c, h, gx, gy, gz, order):
    n = (t.shape[0], t.shape[1], t.shape[2])
    idx = (i, j, k)
    grad = (gx, gy, gz)
    a1 = np.zeros(3)
    b1 = np.zeros(3)
    a2 = np.zeros(3)
    b2 = np.zeros(3)
    sig = np.zeros(3)
    has = np.zeros(3, dtype=np.bool_)
    has2 = np.zeros(3, dtype=np.bool_)
    t0c = t0[i, j, k]
    for d in range(3):
        best = np.inf
        for s in (-1, 1):
            p = idx[d] + s
            if p < 0 or p >= n[d]:
                continue
            if d == 0:
                ok = state[p, j, k] == KNOWN
                tv = t[p, j, k]
            elif d == 1:
                ok = state[i, p, k] == KNOWN
                tv = t[i, p, k]
            else:
                ok = state[i, j, p] == KNOWN
                tv = t[i, j, p]
            if ok and tv < best:
                best = tv
                sig[d] = s
                has[d] = True
        if not has[d]:
            continue
        s = int(sig[d])
        p1 = idx[d] + s
        p2 = idx[d] + 2 * s
        if d == 0:
            tau1 = tau[p1, j, k]
        elif d == 1:
            tau1 = tau[i, p1, k]
        else:
            tau1 = tau[i, j, p1]
        a1[d] = grad[d] - s * t0c / h[d]
        b1[d] = s * t0c * tau1 / h[d]
        if order >= 2 and 0 <= p2 < n[d]:
            if d == 0:
                ok2 = state[p2, j, k] == KNOWN and t[p2, j, k] <= t[p1, j, k]
                tau2 = tau[p2, j, k]
            elif d == 1:
                ok2 = state[i, p2, k] == KNOWN and t[i, p2, k] <= t[i, p1, k]
                tau2 = tau[i, p2, k]
            else:
                ok2 = state[i, j, p2] == KNOWN and t[i, j, p2] <= t[i, j, p1]
                tau2 = tau[i, j, p2]
            if ok2:
                has2[d] = True
                a2[d] = grad[d] - 1.5 * s * t0c / h[d]
                b2[d] = s * t0c * (2.0 * tau1 - 0.5 * tau2) / h[d]
    cval = c[i, j, k]
    best_tau = np.inf
    use = np.zeros(3, dtype=np.bool_)
    alpha = np.zeros(3)
    beta = np.zeros(3)
    for second in (True, False):
        if second and order < 2:
            continue
        for d in range(3):
            if second and has2[d]:
                alpha[d] = a2[d]
                beta[d] = b2[d]
            else:
                alpha[d] = a1[d]
                beta[d] = b1[d]
        for mask in range(1, 8):
            valid = True
            for d in range(3):
                use[d] = (mask >> d) & 1 == 1
                if use[d] and not has[d]:
                    valid = False
            if not valid:
                continue
            tv = _solve_subset(alpha, beta, use, cval)
            if tv <= 0.0:
                continue
            # upwind consistency: t must increase away from each neighbour used
            for d in range(3):
                if use[d] and -sig[d] * (alpha[d] * tv + beta[d]) < 0.0:
                    valid = False
            if valid and tv < best_tau:
                best_tau = tv
        if best_tau < np.inf:
            break
    return best_tau


@njit(cache=True)
def march(c, tau, state, h, origin, src, order):
    """Run fast marching in place on ``tau``; returns the travel-time array."""
    nx, ny, nz = c.shape
    t0 = np.empty(c.shape)
    gxa = np.empty(c.shape)
    gya = np.empty(c.shape)
    gza = np.empty(c.shape)
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                dx = origin[0] + i * h[0] - src[0]
                dy = origin[1] + j * h[1] - src[1]
                dz = origin[2] + k * h[2] - src[2]
                r = np.sqrt(dx * dx + dy * dy + dz * dz)
                t0[i, j, k] = r
                if r > 0.0:
                    gxa[i, j, k] = dx / r
                    gya[i, j, k] = dy / r
                    gza[i, j, k] = dz / r
                else:
                    gxa[i, j, k] = 0.0
                    gya[i, j, k] = 0.0
                    gza[i, j, k] = 0.0
    t = np.full(c.shape, np.inf)
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                if state[i, j, k] == KNOWN:
                    t[i, j, k] = t0[i, j, k] * tau[i, j, k]

    cap = 7 * nx * ny * nz + 16
    keys = np.empty(cap)
    vals = np.empty(cap, dtype=np.int64)
    size = 0
    offs = ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1))
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                if state[i, j, k] != KNOWN:
                    continue
                for o in offs:
                    a, b, e = i + o[0], j + o[1], k + o[2]
                    if a < 0 or a >= nx or b < 0 or b >= ny or e < 0 or e >= nz:
                        continue
                    if state[a, b, e] == KNOWN:
                        continue
                    tv = _update(a, b, e, t, tau, t0, state, c, h,
                                 gxa[a, b, e], gya[a, b, e], gza[a, b, e], order)
                    tt = tv * t0[a, b, e]
                    if tt < t[a, b, e]:
                        t[a, b, e] = tt
                        tau[a, b, e] = tv
                        state[a, b, e] = TRIAL
                        size = _heap_push(keys, vals, size, tt, (a * ny + b) * nz + e)
    while size > 0:
        key, flat, size = _heap_pop(keys, vals, size)
        i = flat // (ny * nz)
        j = (flat // nz) % ny
        k = flat % nz
        if state[i, j, k] == KNOWN or key > t[i, j, k]:
            continue
        state[i, j, k] = KNOWN
        for o in offs:
            a, b, e = i + o[0], j + o[1], k + o[2]
            if a < 0 or a >= nx or b < 0 or b >= ny or e < 0 or e >= nz:
                continue
            if state[a, b, e] == KNOWN:
                continue
            tv = _update(a, b, e, t, tau, t0, state, c, h,
                         gxa[a, b, e], gya[a, b, e], gza[a, b, e], order)
            tt = tv * t0[a, b, e]
            if tt < t[a, b, e]:
                t[a, b, e] = tt
                tau[a, b, e] = tv
                state[a, b, e] = TRIAL
                size = _heap_push(keys, vals, size, tt, (a * ny + b) * nz + e)
    return t
