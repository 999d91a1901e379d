"""Boundary travel times -> the known parts of v = t_z^2 and their spectral data.

v is split as v = v_foot + q + V.  ``v_foot`` is t_z^2 of the straight ray
through the foot point on z = B1, which is exact below B1 and equals the
closed form B1^2 / ((x-a)^2 + (y-pi/2)^2 + B1^2) on the plane z = B1.  ``q``
extends the side-wall trace of v - v_foot into G and vanishes at z = B1.
V is the unknown, represented through the coefficient field Q.
"""
from dataclasses import dataclass

import numpy as np

from .forward import analytic_freespace_time


@dataclass(frozen=True)
class SurfaceV:
    """Foot-point values v_foot and their x, y derivatives, shape (S, nx, ny, nz)."""

    spec: object
    sources: np.ndarray
    v: np.ndarray
    vx: np.ndarray
    vy: np.ndarray

    @property
    def bottom(self):
        """Trace on z = B1, shape (S, nx, ny)."""
        return self.v[..., 0]


def foot_value(x, y, z, a):
    """t_z^2 of the straight ray from (a, pi/2, 0) to (x, y, z)."""
    return z**2 / ((x - a) ** 2 + (y - np.pi / 2) ** 2 + z**2)


def surface_v(spec, sources=None):
    sources = spec.sources if sources is None else np.asarray(sources)
    A = sources[:, None, None, None]
    X = spec.x[None, :, None, None]
    Y = spec.y[None, None, :, None]
    Z = spec.z[None, None, None, :]
    r2 = (X - A) ** 2 + (Y - np.pi / 2) ** 2 + Z**2
    v = Z**2 / r2
    vx = -2.0 * Z**2 * (X - A) / r2**2
    vy = -2.0 * Z**2 * (Y - np.pi / 2) / r2**2
    shape = (sources.size, spec.nx, spec.ny, spec.nz)
    return SurfaceV(spec, sources, *(np.broadcast_to(f, shape).copy() for f in (v, vx, vy)))


@dataclass(frozen=True)
class WallTraces:
    """Side-wall traces of v - v_foot, and of the time excess p - p(B1).

    Shapes follow ``BoundaryData``: x-walls (S, ny, nz), y-walls (S, nx, nz).
    """

    x0: np.ndarray
    xpi: np.ndarray
    y0: np.ndarray
    ypi: np.ndarray
    time_excess: dict

    def min_value(self):
        return float(min(w.min() for w in (self.x0, self.xpi, self.y0, self.ypi)))

    def min_time_excess(self):
        return float(min(w.min() for w in self.time_excess.values()))


def split_boundary_data(d):
    """Wall traces of vbar = (dp/dz)^2 - v_foot, zero on z = B1.

    On a side wall p is known as a function of z, so t_z and hence v are
    known there; vbar is the part of v not explained by the foot value.
    The raw time excess p(x, y, z, a) - p(x, y, B1, a) is kept as a
    diagnostic.
    """
    s = d.spec
    A = d.sources[:, None, None]
    out = {}
    excess = {}
    walls = {
        "x0": (0.0, s.y[None, :, None], d.x0),
        "xpi": (np.pi, s.y[None, :, None], d.xpi),
        "y0": (s.x[None, :, None], 0.0, d.y0),
        "ypi": (s.x[None, :, None], np.pi, d.ypi),
    }
    Z = s.z[None, None, :]
    for name, (xw, yw, p) in walls.items():
        ghost = analytic_freespace_time(xw, yw, s.B1 - s.hz, A)
        col = np.concatenate([np.broadcast_to(ghost, p[..., :1].shape), p], axis=-1)
        pz = np.gradient(col, s.hz, axis=-1, edge_order=2)[..., 1:]
        vbar = pz**2 - foot_value(xw, yw, Z, A)
        vbar[..., 0] = 0.0
        out[name] = vbar
        excess[name] = p - analytic_freespace_time(xw, yw, s.B1, A)
    return WallTraces(out["x0"], out["xpi"], out["y0"], out["ypi"], excess)


@dataclass(frozen=True)
class ExtensionQ:
    """Extension q of the wall traces into G, with q_x, q_y; shape (S, nx, ny, nz)."""

    q: np.ndarray
    qx: np.ndarray
    qy: np.ndarray


def transfinite_blend(spec, x0, xpi, y0, ypi):
    """Coons patch in (x, y) of four wall traces, per leading index and z."""
    xi = (spec.x / np.pi)[None, :, None, None]
    eta = (spec.y / np.pi)[None, None, :, None]
    X0 = x0[:, None, :, :]
    XP = xpi[:, None, :, :]
    Y0 = y0[:, :, None, :]
    YP = ypi[:, :, None, :]
    c00 = x0[:, None, None, 0, :]
    c0p = x0[:, None, None, -1, :]
    cp0 = xpi[:, None, None, 0, :]
    cpp = xpi[:, None, None, -1, :]
    corners = ((1 - xi) * (1 - eta) * c00 + (1 - xi) * eta * c0p
               + xi * (1 - eta) * cp0 + xi * eta * cpp)
    return (1 - xi) * X0 + xi * XP + (1 - eta) * Y0 + eta * YP - corners


def build_q_extension(walls, spec):
    q = transfinite_blend(spec, walls.x0, walls.xpi, walls.y0, walls.ypi)
    qx = np.gradient(q, spec.hx, axis=1, edge_order=2)
    qy = np.gradient(q, spec.hy, axis=2, edge_order=2)
    return ExtensionQ(q, qx, qy)


# --- spectral projection ----------------------------------------------------

def trapezoid_weights(n, h):
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w


def sine_tables(coords, K):
    """sin(k x), k cos(k x) for k = 1..K and the normalized projection rows.

    ``proj[k-1] @ f`` approximates (2/pi) * int_0^pi f sin(kx) dx by the
    trapezoid rule, which is exact on sin(k'x) for k, k' < n - 1.
    """
    k = np.arange(1, K + 1)[:, None]
    s = np.sin(k * coords[None, :])
    c = k * np.cos(k * coords[None, :])
    w = trapezoid_weights(coords.size, coords[1] - coords[0])
    return s, c, (2.0 / np.pi) * s * w[None, :]


def weak_derivative_matrix(b, sources, weights):
    """Matrix W with (W f)_j ~ (f', phi_j) from samples f(a_s).

    Integration by parts: (f', phi_j) = f(pi) phi_j(pi) - f(0) phi_j(0)
    - (f, phi_j'); needs the end points among the sources.
    """
    if not (np.isclose(sources[0], 0.0) and np.isclose(sources[-1], np.pi)):
        raise ValueError("source set must contain a = 0 and a = pi")
    phi, dphi = b.evaluate(sources)
    W = -dphi * weights[None, :]
    W[:, -1] += phi[:, -1]
    W[:, 0] -= phi[:, 0]
    return W


def project_channels(field, Wa, Sx, Sy):
    """(S, nx, ny, nz) samples -> (N, K, K, nz): a-weak-derivative x sine projection."""
    return np.einsum("js,ki,ml,silz->jkmz", Wa, Sx, Sy, field, optimize=True)


@dataclass(frozen=True)
class SpectralData:
    """Known right-hand-side pieces of the coefficient system.

    ``v0_hat`` and ``q_hat`` have shape (N, K, K, nz).  ``p_hat`` packs the
    top traces (p_x, p_y) at z = B2, each (S, nx, ny), which enter the
    residual inside the squared brackets.
    """

    N: int
    K: int
    v0_hat: np.ndarray
    q_hat: np.ndarray
    p_hat: tuple


def spectral_project(d, q, sv, b, g, K):
    s = d.spec
    if K < 1:
        raise ValueError("K must be >= 1")
    for n in (s.nx, s.ny):
        if 2 * (n - 1) < 4 * K:
            raise ValueError(f"K={K} too large for a grid of {n} points (< 4 points per sine period)")
    Wa = weak_derivative_matrix(b, d.sources, s.source_weights)
    Sx, _, Px = sine_tables(s.x, K)
    Sy, _, Py = sine_tables(s.y, K)

    def hat(f):
        y = project_channels(f, Wa, Px, Py)
        return -np.einsum("nj,jkmz->nkmz", g.A_inv, y)

    return SpectralData(b.N, K, hat(sv.v), hat(q.q), (d.top_x.copy(), d.top_y.copy()))
