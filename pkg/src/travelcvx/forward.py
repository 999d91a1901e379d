"""Synthetic data: admissible phantoms, first-arrival times and boundary traces.

Geometry: the domain G = (0, pi)^2 x (B1, B2); sources sit on the line
{x = a, y = pi/2, z = 0}.  The squared slowness c equals 1 for z < B1 and is
non-decreasing in z inside G, so first arrivals in the layer z <= B1 are
straight rays and known in closed form.  Only G is marched numerically.
"""
from dataclasses import dataclass, field, replace

import numpy as np

from . import _fmm
from .basis import gauss_lobatto
from .containers import read_container, write_container
from .errors import AdmissibilityError, EikonalError

PHANTOM_KINDS = ("constant", "ramp", "bump")


@dataclass(frozen=True)
class DomainSpec:
    """Grid over the extended box [0, pi]^2 x [0, B2].

    ``nz_below`` points cover [0, B1] and ``nz`` points cover [B1, B2]; the
    plane z = B1 is shared.  Sources are placed at Gauss-Lobatto nodes of
    [0, pi] so that a-integrals are spectrally accurate and the end points
    a = 0, pi are available.
    """

    B1: float = 1.0
    B2: float = 1.5
    nx: int = 33
    ny: int = 33
    nz_below: int = 9
    nz: int = 33
    n_sources: int = 9

    def __post_init__(self):
        if not (0 < self.B1 < self.B2):
            raise ValueError(f"need 0 < B1 < B2, got B1={self.B1}, B2={self.B2}")
        for name in ("nx", "ny", "nz_below", "nz", "n_sources"):
            if getattr(self, name) < 2:
                raise ValueError(f"{name} must be >= 2")

    @property
    def x(self):
        return np.linspace(0.0, np.pi, self.nx)

    @property
    def y(self):
        return np.linspace(0.0, np.pi, self.ny)

    @property
    def z(self):
        """Depth levels of G, B1 .. B2."""
        return np.linspace(self.B1, self.B2, self.nz)

    @property
    def z_ext(self):
        below = np.linspace(0.0, self.B1, self.nz_below)[:-1]
        return np.concatenate([below, self.z])

    @property
    def k_B1(self):
        """Index of the plane z = B1 in ``z_ext``."""
        return self.nz_below - 1

    @property
    def hx(self):
        return np.pi / (self.nx - 1)

    @property
    def hy(self):
        return np.pi / (self.ny - 1)

    @property
    def hz(self):
        return (self.B2 - self.B1) / (self.nz - 1)

    @property
    def sources(self):
        return gauss_lobatto(self.n_sources)[0]

    @property
    def source_weights(self):
        return gauss_lobatto(self.n_sources)[1]

    @property
    def tz_floor(self):
        """Lower bound of t_z over G: B1 / sqrt(B1^2 + 5 pi^2 / 4)."""
        return self.B1 / np.sqrt(self.B1**2 + 1.25 * np.pi**2)

    @property
    def v_floor(self):
        return self.tz_floor**2

    def refine(self, r):
        """Same box with every grid interval split into ``r`` pieces."""
        return replace(self, nx=(self.nx - 1) * r + 1, ny=(self.ny - 1) * r + 1,
                       nz_below=(self.nz_below - 1) * r + 1, nz=(self.nz - 1) * r + 1)

    def stride_to(self, coarse):
        """Integer subsampling factor from this grid to ``coarse``."""
        r = (self.nx - 1) // (coarse.nx - 1)
        if r < 1 or coarse.refine(r) != self:
            raise ValueError("grids are not nested by an integer refinement")
        return r

    def as_dict(self):
        return {k: getattr(self, k) for k in ("B1", "B2", "nx", "ny", "nz_below", "nz", "n_sources")}


@dataclass(frozen=True)
class SpeedField:
    """Squared slowness c on the extended grid, shape (nx, ny, len(z_ext))."""

    spec: DomainSpec
    values: np.ndarray
    c0: float
    kind: str = "custom"
    params: dict = field(default_factory=dict)

    @property
    def on_G(self):
        return self.values[:, :, self.spec.k_B1:]


@dataclass(frozen=True)
class TravelField:
    spec: DomainSpec
    a: float
    t: np.ndarray  # extended grid

    @property
    def on_G(self):
        return self.t[:, :, self.spec.k_B1:]

    def tz_G(self):
        """t_z on G by second-order differences; the layer below B1 is exact."""
        s = self.spec
        ghost = analytic_freespace_time(s.x[:, None, None], s.y[None, :, None],
                                        np.array([s.B1 - s.hz]), self.a)
        col = np.concatenate([ghost, self.on_G], axis=2)
        return np.gradient(col, s.hz, axis=2, edge_order=2)[:, :, 1:]


@dataclass(frozen=True)
class BoundaryData:
    """Traces of the travel times on the boundary of G minus its bottom.

    Arrays carry the source index first.  ``top`` has shape (S, nx, ny);
    ``x0``/``xpi`` are the walls x = 0, pi with shape (S, ny, nz); ``y0``/``ypi``
    are y = 0, pi with shape (S, nx, nz).  Wall columns include z = B1.
    """

    spec: DomainSpec
    sources: np.ndarray
    top: np.ndarray
    top_x: np.ndarray
    top_y: np.ndarray
    x0: np.ndarray
    xpi: np.ndarray
    y0: np.ndarray
    ypi: np.ndarray
    delta: float = 0.0
    seed: int = None
    realized_c1: float = 0.0

    FACES = ("top", "top_x", "top_y", "x0", "xpi", "y0", "ypi")

    def arrays(self):
        return {name: getattr(self, name) for name in self.FACES}


def _smoothstep(s):
    """Quintic C2 step: 0 for s <= 0, 1 for s >= 1."""
    s = np.clip(s, 0.0, 1.0)
    return s**3 * (10.0 - 15.0 * s + 6.0 * s**2)


def check_admissible(c, c0=None, tol=1e-12):
    """Validate positivity, the unit layer below B1 and z-monotonicity on G.

    Raises ``AdmissibilityError`` naming the first violating grid index.
    Returns a dict with the minimum value and minimum forward z-difference.
    """
    s = c.spec
    vals = c.values
    c0 = c.c0 if c0 is None else c0
    if not np.all(np.isfinite(vals)):
        idx = tuple(int(i) for i in np.argwhere(~np.isfinite(vals))[0])
        raise AdmissibilityError(f"non-finite speed value at grid index {idx}", idx)
    low = np.argwhere(vals < c0)
    if low.size:
        idx = tuple(int(i) for i in low[0])
        raise AdmissibilityError(f"c = {vals[idx]:.6g} < c0 = {c0} at grid index {idx}", idx)
    below = vals[:, :, : s.k_B1]
    off = np.argwhere(np.abs(below - 1.0) > tol)
    if off.size:
        idx = tuple(int(i) for i in off[0])
        raise AdmissibilityError(f"c != 1 below B1 at grid index {idx}", idx)
    dz = np.diff(c.on_G, axis=2)
    dec = np.argwhere(dz < -tol)
    if dec.size:
        i, j, k = (int(v) for v in dec[0])
        idx = (i, j, k + s.k_B1)
        raise AdmissibilityError(
            f"dc/dz < 0 between grid indices {idx} and {(i, j, k + s.k_B1 + 1)} "
            f"(forward difference {dz[i, j, k]:.3e})", idx)
    return {"min_c": float(vals.min()), "min_forward_dz": float(dz.min()) if dz.size else 0.0}


def phantom_values(spec, kind, params, x=None, y=None, z=None):
    """Evaluate a phantom formula on a tensor grid (defaults: extended grid)."""
    x = spec.x if x is None else x
    y = spec.y if y is None else y
    z = spec.z_ext if z is None else z
    X, Y, Z = np.meshgrid(x, y, z, indexing="ij")
    L = spec.B2 - spec.B1
    layer = _smoothstep((Z - spec.B1) / (0.1 * L))
    if kind == "constant":
        return np.ones_like(X)
    if kind == "ramp":
        slope = float(params.get("slope", 0.5))
        return 1.0 + slope * np.maximum(Z - spec.B1, 0.0) * layer
    if kind == "bump":
        amp = float(params.get("amplitude", 0.2))
        cx = float(params.get("center_x", np.pi / 2))
        cy = float(params.get("center_y", np.pi / 2))
        width = float(params.get("width", 0.6))
        rise = float(params.get("rise", 0.6)) * L
        lateral = np.exp(-((X - cx) ** 2 + (Y - cy) ** 2) / (2.0 * width**2))
        return 1.0 + amp * lateral * _smoothstep((Z - spec.B1) / rise) * layer
    raise ValueError(f"unknown phantom kind {kind!r}; expected one of {PHANTOM_KINDS}")


def make_phantom(spec, kind="constant", params=None, c0=0.5):
    """Build and validate an admissible phantom.

    kinds: ``constant`` (c = 1); ``ramp`` (c = 1 + slope * (z - B1) * layer);
    ``bump`` (c = 1 + amplitude * gaussian(x, y) * step(z) * layer), where
    ``layer`` is a C2 transition of width 0.1 (B2 - B1) above B1.
    """
    params = dict(params or {})
    vals = phantom_values(spec, kind, params)
    c = SpeedField(spec, vals, float(c0), kind, params)
    check_admissible(c)
    return c


def analytic_freespace_time(x, y, z, a):
    """Straight-ray travel time from (a, pi/2, 0) in the unit medium."""
    return np.sqrt((x - a) ** 2 + (y - np.pi / 2) ** 2 + z**2)


def solve_eikonal(c, a, order=1):
    """First-arrival times from the source at (a, pi/2, 0).

    Factored fast marching on G (t = t_free * tau) started from the exact
    plane z = B1 and two exact ghost planes below it; z < B1 is analytic.
    """
    s = c.spec
    n_ghost = 2
    zg = s.B1 + s.hz * np.arange(-n_ghost, s.nz)
    cg = np.ones((s.nx, s.ny, zg.size))
    cg[:, :, n_ghost:] = c.on_G
    tau = np.ones_like(cg)
    state = np.zeros(cg.shape, dtype=np.int64)
    state[:, :, : n_ghost + 1] = _fmm.KNOWN
    h = np.array([s.hx, s.hy, s.hz])
    origin = np.array([0.0, 0.0, zg[0]])
    src = np.array([a, np.pi / 2, 0.0])
    tg = _fmm.march(np.ascontiguousarray(cg), tau, state, h, origin, src, int(order))
    if not np.all(np.isfinite(tg)):
        raise EikonalError(f"fast marching left unreached nodes for source a={a:.4f}")
    if np.any(tau <= 0):
        raise EikonalError(f"negative factor tau for source a={a:.4f}")
    X, Y, Z = np.meshgrid(s.x, s.y, s.z_ext[: s.k_B1], indexing="ij")
    below = analytic_freespace_time(X, Y, Z, a)
    t = np.concatenate([below, tg[:, :, n_ghost:]], axis=2)
    return TravelField(s, float(a), t)


def solve_all(c, order=1, threads=1):
    """Travel fields for every source of ``c.spec``; sources run in parallel."""
    sources = c.spec.sources
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(threads) as ex:
            return list(ex.map(lambda a: solve_eikonal(c, a, order), sources))
    return [solve_eikonal(c, a, order) for a in sources]


def eikonal_residual(tf, c):
    """Pointwise |grad t|^2 - c on G (second-order differences)."""
    s = tf.spec
    t = tf.on_G
    gx = np.gradient(t, s.hx, axis=0, edge_order=2)
    gy = np.gradient(t, s.hy, axis=1, edge_order=2)
    gz = tf.tz_G()
    return gx**2 + gy**2 + gz**2 - c.on_G


def extract_boundary_data(fields, coarse=None):
    """Traces on the top and side walls, subsampled to the ``coarse`` grid.

    Tangential derivatives on the top are taken on the solver grid by
    second-order centred differences (one-sided at the walls) before
    subsampling.
    """
    if not fields:
        raise ValueError("no travel fields given")
    fine = fields[0].spec
    if any(f.spec != fine for f in fields):
        raise ValueError("travel fields live on different grids")
    coarse = fine if coarse is None else coarse
    r = fine.stride_to(coarse)
    top, tx, ty, x0, xpi, y0, ypi = ([] for _ in range(7))
    for f in fields:
        g = f.on_G
        t_top = g[:, :, -1]
        top.append(t_top[::r, ::r])
        tx.append(np.gradient(t_top, fine.hx, axis=0, edge_order=2)[::r, ::r])
        ty.append(np.gradient(t_top, fine.hy, axis=1, edge_order=2)[::r, ::r])
        x0.append(g[0, ::r, ::r])
        xpi.append(g[-1, ::r, ::r])
        y0.append(g[::r, 0, ::r])
        ypi.append(g[::r, -1, ::r])
    sources = np.array([f.a for f in fields])
    return BoundaryData(coarse, sources, *(np.array(v) for v in (top, tx, ty, x0, xpi, y0, ypi)))


def _face_coords(d):
    s = d.spec
    return {
        "top": (d.sources, s.x, s.y),
        "x0": (d.sources, s.y, s.z), "xpi": (d.sources, s.y, s.z),
        "y0": (d.sources, s.x, s.z), "ypi": (d.sources, s.x, s.z),
    }


def c1_norm(arrays, coords):
    """Discrete C1 norm: max |f| + max |grad f| over all faces (incl. d/da)."""
    sup = 0.0
    dsup = 0.0
    for name, f in arrays.items():
        sup = max(sup, float(np.abs(f).max()))
        for ax, co in enumerate(coords[name]):
            if len(co) > 2:
                dsup = max(dsup, float(np.abs(np.gradient(f, co, axis=ax, edge_order=2)).max()))
    return sup + dsup


def data_c1_norm(d):
    coords = _face_coords(d)
    return c1_norm({k: getattr(d, k) for k in coords}, coords)


def _noise_shape(rng, n_terms=6):
    """Random low-order trigonometric polynomial in (x, y, zeta, a)."""
    freqs = rng.integers(0, 3, size=(n_terms, 4))
    amps = rng.standard_normal(n_terms)
    phases = rng.uniform(0, 2 * np.pi, n_terms)
    return freqs, amps, phases


def _eval_noise(shape, a, x, y, zeta):
    """eta and its x, y derivatives on broadcast grids."""
    freqs, amps, phases = shape
    eta = 0.0
    ex = 0.0
    ey = 0.0
    for (fx, fy, fz, fa), amp, ph in zip(freqs, amps, phases):
        arg = fx * x + fy * y + fz * zeta + fa * a + ph
        eta = eta + amp * np.cos(arg)
        ex = ex - amp * fx * np.sin(arg)
        ey = ey - amp * fy * np.sin(arg)
    return eta, ex, ey


def add_noise(d, delta, seed=0):
    """Smooth multiplicative perturbation with C1 norm ``delta``.

    The perturbation is p * eta with eta a random trigonometric polynomial in
    (x, y, z, a); it is rescaled so that the discrete C1 norm of the change
    equals ``delta`` (an absolute bound, as required of noisy data by the
    convergence estimate).
    """
    if delta < 0:
        raise ValueError("delta must be non-negative")
    if delta == 0:
        return replace(d, delta=0.0, seed=seed, realized_c1=0.0)
    s = d.spec
    rng = np.random.default_rng(seed)
    shape = _noise_shape(rng)
    A = d.sources[:, None, None]
    zeta = np.pi * (s.z - s.B1) / (s.B2 - s.B1)
    X, Y = s.x[None, :, None], s.y[None, None, :]
    eta_top, etx, ety = _eval_noise(shape, A, X, Y, np.pi)
    pert = {
        "top": d.top * eta_top,
        "top_x": d.top_x * eta_top + d.top * etx,
        "top_y": d.top_y * eta_top + d.top * ety,
    }
    Zt = zeta[None, None, :]
    walls = {
        "x0": _eval_noise(shape, A, 0.0, s.y[None, :, None], Zt)[0],
        "xpi": _eval_noise(shape, A, np.pi, s.y[None, :, None], Zt)[0],
        "y0": _eval_noise(shape, A, s.x[None, :, None], 0.0, Zt)[0],
        "ypi": _eval_noise(shape, A, s.x[None, :, None], np.pi, Zt)[0],
    }
    for name, eta in walls.items():
        pert[name] = getattr(d, name) * eta
    coords = _face_coords(d)
    raw = c1_norm({k: pert[k] for k in coords}, coords)
    scale = delta / raw * (1.0 - 1e-12)
    noisy = {k: getattr(d, k) + scale * v for k, v in pert.items()}
    out = replace(d, **noisy, delta=float(delta), seed=seed)
    realized = c1_norm({k: getattr(out, k) - getattr(d, k) for k in coords}, coords)
    return replace(out, realized_c1=float(realized))


# --- files ------------------------------------------------------------------

def save_speed(path, c, extra_meta=None):
    meta = {"spec": c.spec.as_dict(), "c0": c.c0, "kind": c.kind, "params": c.params,
            "dims": list(c.values.shape)}
    meta.update(extra_meta or {})
    write_container(path, "speed", meta, {"c": c.values})


def load_speed(path):
    meta, arr = read_container(path, kind="speed")
    spec = DomainSpec(**meta["spec"])
    return SpeedField(spec, arr["c"], float(meta["c0"]), meta["kind"], meta["params"])


def save_boundary(directory, d, extra_meta=None):
    """One container per source plus ``index.json``; returns the file names."""
    import json
    import os

    os.makedirs(directory, exist_ok=True)
    names = []
    for i, a in enumerate(d.sources):
        name = f"source_{i:03d}.tcvx"
        arrays = {k: v[i] for k, v in d.arrays().items()}
        write_container(os.path.join(directory, name), "boundary",
                        {"a": float(a), "index": i, "spec": d.spec.as_dict()}, arrays)
        names.append(name)
    index = {"spec": d.spec.as_dict(), "sources": [float(a) for a in d.sources],
             "files": names, "delta": d.delta, "seed": d.seed, "realized_c1": d.realized_c1}
    index.update(extra_meta or {})
    with open(os.path.join(directory, "index.json"), "w") as fh:
        json.dump(index, fh, indent=2, sort_keys=True)
    return names


def load_boundary(directory):
    import json
    import os

    with open(os.path.join(directory, "index.json")) as fh:
        index = json.load(fh)
    spec = DomainSpec(**index["spec"])
    per = {k: [] for k in BoundaryData.FACES}
    for name in index["files"]:
        _, arr = read_container(os.path.join(directory, name), kind="boundary")
        for k in per:
            per[k].append(arr[k])
    return BoundaryData(spec, np.array(index["sources"]), *(np.array(per[k]) for k in BoundaryData.FACES),
                        delta=index["delta"], seed=index["seed"], realized_c1=index["realized_c1"])
