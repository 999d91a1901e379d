"""Independent reference computations used by several test modules."""
import math

import numpy as np


def naive_residual_n1k1(problem, w):
    """R(Q) for N = K = 1 by explicit loops over sources and grid nodes.

    Uses only the raw data pieces of ``problem`` (q, q_x, q_y, p_x, p_y on the
    top, the grids and the source rule); the basis, the foot-point values,
    the tail integrals and both projections are recomputed here.
    """
    s = problem.spec
    a = problem.data.sources
    wa = s.source_weights
    x, y, z = s.x, s.y, s.z
    hz, hx, hy = s.hz, s.hx, s.hy
    wz = np.asarray(w)[0, 0, 0]
    norm0 = math.sqrt((math.exp(2 * math.pi) - 1) / 2)
    q, qx, qy = problem.ext.q, problem.ext.qx, problem.ext.qy
    px, py = problem.data.top_x, problem.data.top_y
    nz = z.size

    def trap(n, h, i):
        return 0.5 * h if i in (0, n - 1) else h

    out = np.zeros(nz)
    for si in range(a.size):
        phi = math.exp(a[si]) / norm0
        # weak a-derivative weight: boundary terms minus (f, phi')
        wgt = -phi * wa[si]
        if si == a.size - 1:
            wgt += phi
        if si == 0:
            wgt -= phi
        for i in range(x.size):
            for j in range(y.size):
                F = np.zeros(nz)
                gx = np.zeros(nz)
                gy = np.zeros(nz)
                for k in range(nz):
                    r2 = (x[i] - a[si]) ** 2 + (y[j] - math.pi / 2) ** 2 + z[k] ** 2
                    foot = z[k] ** 2 / r2
                    fx = -2 * z[k] ** 2 * (x[i] - a[si]) / r2**2
                    fy = -2 * z[k] ** 2 * (y[j] - math.pi / 2) / r2**2
                    V = wz[k] * phi * math.sin(x[i]) * math.sin(y[j])
                    Vx = wz[k] * phi * math.cos(x[i]) * math.sin(y[j])
                    Vy = wz[k] * phi * math.sin(x[i]) * math.cos(y[j])
                    v = foot + q[si, i, j, k] + V
                    root = math.sqrt(v)
                    gx[k] = (fx + qx[si, i, j, k] + Vx) / (2 * root)
                    gy[k] = (fy + qy[si, i, j, k] + Vy) / (2 * root)
                    F[k] = foot + q[si, i, j, k]
                for k in range(nz):
                    tx = sum(0.5 * hz * (gx[m] + gx[m + 1]) for m in range(k, nz - 1))
                    ty = sum(0.5 * hz * (gy[m] + gy[m + 1]) for m in range(k, nz - 1))
                    F[k] += (px[si, i, j] - tx) ** 2 + (py[si, i, j] - ty) ** 2
                proj = (2 / math.pi) ** 2 * math.sin(x[i]) * math.sin(y[j]) \
                    * trap(x.size, hx, i) * trap(y.size, hy, j)
                out += wgt * proj * F
    # A = [[1]] for N = 1 since phi_0' = phi_0
    return (wz + out)[None, None, None, :]
