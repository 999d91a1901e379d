"""Plot-ready CSV exports and matplotlib figures for a run directory."""
import csv
import os

import numpy as np

# PNG metadata pinned so reruns give identical files
_PNG_META = {"Software": None}


def _mpl():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for r in rows:
            wr.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def slice_rows(spec, c, k):
    """(x, y, c) rows of the level z_k of a field on G."""
    return [(float(x), float(y), float(c[i, j, k]))
            for i, x in enumerate(spec.x) for j, y in enumerate(spec.y)]


def export_slices(outdir, spec, c_rec, c_true, k=None):
    """Two aligned CSVs of c_rec and c_true at level ``k`` (default mid-depth)."""
    k = spec.nz // 2 if k is None else k
    names = []
    for tag, c in (("rec", c_rec), ("true", c_true)):
        name = f"c_{tag}_slice.csv"
        write_rows(os.path.join(outdir, name), ("x", "y", "c"), slice_rows(spec, c, k))
        names.append(name)
    return names, float(spec.z[k])


def plot_slices(path, spec, c_rec, c_true, k, z):
    plt = _mpl()
    fig, axes = plt.subplots(1, 3, figsize=(11, 3.4), constrained_layout=True)
    lo = min(c_rec[..., k].min(), c_true[..., k].min())
    hi = max(c_rec[..., k].max(), c_true[..., k].max())
    ext = (spec.x[0], spec.x[-1], spec.y[0], spec.y[-1])
    for ax, c, title in ((axes[0], c_true, "c true"), (axes[1], c_rec, "c reconstructed")):
        im = ax.imshow(c[..., k].T, origin="lower", extent=ext, vmin=lo, vmax=hi, cmap="viridis")
        ax.set_title(f"{title}, z = {z:.3f}")
        ax.set_xlabel("x")
        ax.set_ylabel("y")
    fig.colorbar(im, ax=axes[:2], shrink=0.85)
    err = c_rec[..., k] - c_true[..., k]
    m = max(np.abs(err).max(), 1e-12)
    im = axes[2].imshow(err.T, origin="lower", extent=ext, vmin=-m, vmax=m, cmap="RdBu_r")
    axes[2].set_title("difference")
    fig.colorbar(im, ax=axes[2], shrink=0.85)
    fig.savefig(path, dpi=110, metadata=_PNG_META)
    plt.close(fig)


def export_convergence(outdir, trace):
    rows = [(r["iter"], r["J"], r["err_truth"], r["step"]) for r in trace.accepted()]
    write_rows(os.path.join(outdir, "convergence.csv"), ("iter", "J", "err_truth", "step"), rows)
    plt = _mpl()
    it = np.array([r[0] for r in rows])
    J = np.array([r[1] for r in rows])
    err = np.array([r[2] for r in rows], dtype=float)
    fig, ax = plt.subplots(figsize=(5.5, 3.6), constrained_layout=True)
    ax.semilogy(it, J, label="J")
    if np.isfinite(err).any():
        ax.semilogy(it, err, label="|Q - Q*|_L2")
    ax.set_xlabel("iteration")
    ax.legend()
    fig.savefig(os.path.join(outdir, "convergence.png"), dpi=110, metadata=_PNG_META)
    plt.close(fig)
    return ["convergence.csv", "convergence.png"]


def plot_histogram(path, values, xlabel):
    plt = _mpl()
    fig, ax = plt.subplots(figsize=(5, 3.4), constrained_layout=True)
    ax.hist(values, bins=20)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("count")
    fig.savefig(path, dpi=110, metadata=_PNG_META)
    plt.close(fig)


def export_delta_sweep(outdir, rows, slope_q, slope_c):
    """rows: (delta, data_distance, q_distance, c_distance, c_error)."""
    write_rows(os.path.join(outdir, "delta_sweep.csv"),
               ("delta", "data_distance", "q_distance_h1", "c_distance", "c_error"), rows)
    plt = _mpl()
    a = np.array(rows, dtype=float)
    fig, ax = plt.subplots(figsize=(5, 3.6), constrained_layout=True)
    ax.loglog(a[:, 1], a[:, 2], "o-", label=f"|Q_d - Q_0|_H1, slope {slope_q:.2f}")
    ax.loglog(a[:, 1], a[:, 3], "s-", label=f"|c_d - c_0| / |c_0|, slope {slope_c:.2f}")
    ax.set_xlabel("data distance (C1)")
    ax.legend(fontsize=8)
    fig.savefig(os.path.join(outdir, "delta_sweep.png"), dpi=110, metadata=_PNG_META)
    plt.close(fig)
    return ["delta_sweep.csv", "delta_sweep.png"]
