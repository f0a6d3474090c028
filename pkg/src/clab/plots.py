"""Figure rendering for the CLI report path (SVG files, Agg backend)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

# SVG hash ids vary run to run unless pinned; reports must be reproducible
matplotlib.rcParams["svg.hashsalt"] = "clab"
matplotlib.rcParams["svg.fonttype"] = "none"


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_ratio_histogram(ratios, path, title="stability ratios"):
    ratios = np.asarray([r for r in ratios if np.isfinite(r)])
    fig, ax = plt.subplots(figsize=(6, 4))
    if ratios.size:
        ax.hist(ratios, bins=min(30, max(5, ratios.size // 5)),
                color="#3a6ea5", edgecolor="black")
        ax.axvline(ratios.max(), color="crimson", linestyle="--",
                   label=f"C_hat = {ratios.max():.4g}")
        ax.legend()
    ax.set_xlabel("||g|| / ||zeta||")
    ax.set_ylabel("count")
    ax.set_title(title)
    _save(fig, path)


def plot_scan_heatmap(scan, path, title="parameter scan"):
    fig, ax = plt.subplots(figsize=(6, 5))
    with np.errstate(invalid="ignore"):
        logtab = scan.log_ratio_table / np.log(10.0)
    im = ax.imshow(logtab, origin="lower", aspect="auto", cmap="viridis",
                   extent=[scan.lambda_grid[0], scan.lambda_grid[-1],
                           scan.s_grid[0], scan.s_grid[-1]])
    fig.colorbar(im, ax=ax, label="log10 ratio")
    if scan.stabilized:
        ax.plot(scan.lambda_star, scan.s_star, "r*", markersize=12,
                label=f"stabilized; C_hat = {scan.C_hat:.3g}")
        ax.legend()
    ax.set_xlabel("lambda")
    ax.set_ylabel("s")
    ax.set_title(title)
    _save(fig, path)


def plot_observation_series(zeta, path, title="boundary observation"):
    fig, ax = plt.subplots(figsize=(6, 4))
    t = zeta.grid.t
    for c in range(zeta.n):
        # one curve per component: the theta-averaged measurement
        ax.plot(t, zeta.values[c].mean(axis=1), label=f"component {c}")
    ax.set_xlabel("t")
    ax.set_ylabel("zeta (theta mean)")
    ax.set_title(title)
    ax.legend()
    _save(fig, path)


def plot_convergence(hs, errors, slope, path, title="convergence"):
    hs = np.asarray(hs, float)
    errors = np.asarray(errors, float)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.loglog(hs, errors, "o-", label=f"observed (slope {slope:.2f})")
    ref = errors[0] * (hs / hs[0]) ** 2
    ax.loglog(hs, ref, "k--", alpha=0.5, label="order 2 reference")
    ax.set_xlabel("h")
    ax.set_ylabel("L2(Q) error")
    ax.set_title(title)
    ax.legend()
    _save(fig, path)
