"""Static SVG plots for profiles, comparisons, atlases, stats and anomalies.

All plots are derived views of exported data; nothing is computed here.
Output is deterministic: a fixed hash salt and no embedded creation date.
"""

from __future__ import annotations

import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

matplotlib.rcParams["svg.hashsalt"] = "fiberflux"

_SVG_KWARGS = {"format": "svg", "metadata": {"Date": None}}


def _save(fig, path):
    fig.savefig(path, **_SVG_KWARGS)
    plt.close(fig)


def plot_profile(profile, path, title=None):
    """Descriptor magnitude against arc-length fraction."""
    fig, ax = plt.subplots(figsize=(6, 3.2))
    ax.plot(profile.arc_positions, profile.magnitudes, color="tab:blue", lw=1.5)
    ax.set_xlabel("arc-length fraction")
    ax.set_ylabel(f"{profile.channel} magnitude")
    ax.set_title(title or f"{profile.bundle_name}: {profile.channel} profile")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    _save(fig, path)


def plot_compare(aligned_a, aligned_b, dissimilarity, path, title=None):
    """Two aligned profiles with the pointwise dissimilarity color strip."""
    fig, (ax, axd) = plt.subplots(
        2, 1, figsize=(6, 4.2), sharex=True,
        gridspec_kw={"height_ratios": [3, 1]},
    )
    x = aligned_a.arc_positions
    ax.plot(x, aligned_a.magnitudes, color="tab:blue", lw=1.5,
            label=aligned_a.bundle_name)
    ax.plot(x, aligned_b.magnitudes, color="tab:orange", lw=1.5,
            label=aligned_b.bundle_name)
    ax.set_ylabel(f"{aligned_a.channel} magnitude")
    ax.legend(loc="best", fontsize=8)
    ax.grid(alpha=0.3)
    ax.set_title(title or "aligned profile comparison")
    axd.scatter(x, dissimilarity, c=dissimilarity, cmap="inferno", s=8)
    axd.set_xlabel("aligned path parameter")
    axd.set_ylabel("pointwise d")
    axd.grid(alpha=0.3)
    fig.tight_layout()
    _save(fig, path)


def plot_atlas(atlas, path, title=None):
    """Cohort mean with a +/-1 std band."""
    fig, ax = plt.subplots(figsize=(6, 3.2))
    x = atlas.arc_positions
    ax.fill_between(
        x, atlas.pointwise_mean - atlas.pointwise_std,
        atlas.pointwise_mean + atlas.pointwise_std,
        color="tab:blue", alpha=0.25, label="+/- 1 std",
    )
    ax.plot(x, atlas.pointwise_mean, color="tab:blue", lw=1.5, label="cohort mean")
    ax.set_xlabel("arc-length fraction")
    ax.set_ylabel(f"{atlas.channel} magnitude")
    ax.set_title(title or f"standardized {atlas.channel} profile "
                          f"(n={atlas.cohort_size})")
    ax.legend(loc="best", fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    _save(fig, path)


def plot_stats(stats, path, q_level=0.05, title=None):
    """Pointwise p- and q-values on a log scale with the significance level."""
    arc = stats.arc_positions
    if arc is None:
        arc = np.linspace(0.0, 1.0, len(stats.p_values))
    fig, ax = plt.subplots(figsize=(6, 3.2))
    floor = 1e-16
    ax.semilogy(arc, np.maximum(stats.p_values, floor), color="tab:gray",
                lw=1.0, label="p")
    ax.semilogy(arc, np.maximum(stats.q_values, floor), color="tab:blue",
                lw=1.5, label="q (FDR)")
    ax.axhline(q_level, color="tab:red", ls="--", lw=1.0, label=f"q={q_level}")
    if stats.significant.any():
        ax.scatter(arc[stats.significant],
                   np.maximum(stats.q_values[stats.significant], floor),
                   color="tab:red", s=12, zorder=3, label="significant")
    ax.set_xlabel("arc-length fraction")
    ax.set_ylabel("p / q")
    ax.set_title(title or f"pointwise group test (n={stats.n_a} vs {stats.n_b})")
    ax.legend(loc="best", fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    _save(fig, path)


def plot_anomaly(amap, path, title=None):
    """Color-coded z-scores along the tract; undefined points are omitted."""
    fig, ax = plt.subplots(figsize=(6, 3.2))
    ok = amap.defined
    x = amap.arc_positions
    sc = ax.scatter(x[ok], amap.z_scores[ok], c=np.abs(amap.z_scores[ok]),
                    cmap="inferno", s=14)
    ax.axhline(0.0, color="k", lw=0.8)
    for level in (-2, 2):
        ax.axhline(level, color="tab:red", ls=":", lw=0.8)
    fig.colorbar(sc, ax=ax, label="|z| (#STDs)")
    ax.set_xlabel("arc-length fraction")
    ax.set_ylabel("z (#STDs)")
    ax.set_title(title or "deviation from standardized profile")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    _save(fig, path)
