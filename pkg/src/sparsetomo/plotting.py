"""Matplotlib figures written next to the text reports.

All functions take an output path, draw with the Agg backend and close
their figure before returning the path.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

RC = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "image.cmap": "viridis",
    "figure.dpi": 110,
    "savefig.bbox": "tight",
}


def _save(fig, path):
    fig.savefig(path)
    plt.close(fig)
    return str(path)


def profile_with_spikes(profile, path, spikes=None, means2d=None, truth2d=None, title=None):
    """Profile image with selected pixels and estimated/true projected means."""
    g = profile.grid
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(4, 4))
        ext = [-g.extent, g.extent, -g.extent, g.extent]
        # rows index the first coordinate; show it on the horizontal axis
        ax.imshow(profile.pixels.T, origin="lower", extent=ext)
        if spikes is not None and len(spikes):
            ax.plot(spikes[:, 0], spikes[:, 1], "k.", ms=3)
        if means2d is not None:
            for k, (x, y) in enumerate(means2d.T):
                ax.text(x, y, str(k + 1), color="w", ha="center", va="center", weight="bold")
        if truth2d is not None:
            ax.plot(truth2d[0], truth2d[1], "r+", ms=8)
        ax.set_xlabel("x1")
        ax.set_ylabel("x2")
        ax.set_title(title or f"profile {profile.id}")
        return _save(fig, path)


def gram_heatmap(G, path, title="Gram matrix", reference=None):
    """Heat map of ``G`` (and of ``G - reference`` when given)."""
    panels = [(G, title)]
    if reference is not None:
        panels.append((G - reference, "difference from reference"))
    with plt.rc_context(RC):
        fig, axes = plt.subplots(1, len(panels), figsize=(3.6 * len(panels), 3.2))
        for ax, (M, name) in zip(np.atleast_1d(axes), panels):
            lim = np.abs(M).max() or 1.0
            im = ax.imshow(M, cmap="RdBu_r", vmin=-lim, vmax=lim)
            for (i, j), v in np.ndenumerate(M):
                ax.text(j, i, f"{v:.3f}", ha="center", va="center", fontsize=7)
            ax.set_title(name)
            ax.set_xticks(range(M.shape[1]))
            ax.set_yticks(range(M.shape[0]))
            fig.colorbar(im, ax=ax, shrink=0.8)
        return _save(fig, path)


def weights_bar(weights, path, truth=None):
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(4, 3))
        k = np.arange(1, len(weights) + 1)
        ax.bar(k - 0.2, weights, 0.4, label="estimate")
        if truth is not None:
            ax.bar(k + 0.2, truth, 0.4, label="truth")
            ax.legend()
        ax.set_xlabel("component")
        ax.set_ylabel("mixing weight")
        ax.set_xticks(k)
        return _save(fig, path)


def sigma2_curve(grid_values, sse, path, chosen=None):
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(4, 3))
        ax.semilogx(grid_values, sse, "o-", ms=3)
        if chosen is not None:
            ax.axvline(chosen, color="k", ls=":")
        ax.set_xlabel("kernel variance")
        ax.set_ylabel("pooled residual SSE")
        return _save(fig, path)


def residual_heatmap(residual, extent, path, title="residual"):
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(4, 3.6))
        lim = np.abs(residual).max() or 1.0
        im = ax.imshow(residual.T, origin="lower", cmap="RdBu_r", vmin=-lim, vmax=lim,
                       extent=[-extent, extent, -extent, extent])
        fig.colorbar(im, ax=ax, shrink=0.8)
        ax.set_title(title)
        return _save(fig, path)


def volume_slices(volume, path, n=6):
    """Montage of ``n`` evenly spaced z-slices of a :class:`VolumeGrid`."""
    idx = np.linspace(0, volume.V - 1, n).round().astype(int)
    vmax = volume.values.max() or 1.0
    with plt.rc_context(RC):
        fig, axes = plt.subplots(1, n, figsize=(1.8 * n, 2.0))
        for ax, k in zip(axes, idx):
            ax.imshow(volume.values[:, :, k].T, origin="lower", vmin=0, vmax=vmax)
            ax.set_title(f"z={volume.axis[k]:.2f}", fontsize=7)
            ax.axis("off")
        return _save(fig, path)
