"""Global weights, kernel scale, and assembly of the reconstructed density."""

import itertools
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ComponentMismatch, DataError, RankDeficient, TooManyComponents
from .geometry import center, factor_gram, gram
from .imaging import Profile, base_profiles, check_same_grid
from .mixture import RadialMixture3, eval3
from .shape_recovery import MAX_PERMUTATION_K

log = logging.getLogger(__name__)

WEIGHT_FLOOR = 1e-6


def default_sigma2_grid(kernel_sigma2, n=21):
    """Log-spaced grid over ``[kernel_sigma2 / 4, 4 * kernel_sigma2]``.

    An odd ``n`` keeps ``kernel_sigma2`` itself on the grid.
    """
    return kernel_sigma2 * np.geomspace(0.25, 4.0, n)


def _row_subset(grid, means2d, sigma2, radius_sd):
    if radius_sd is None:
        return np.ones(grid.T * grid.T, dtype=bool)
    c = grid.centers
    d2 = ((c[:, :, None] - means2d[None]) ** 2).sum(axis=1)
    return d2.min(axis=1) <= (radius_sd**2) * sigma2


def stacked_design(profiles, labeled_means, sigma2, radius_sd=3.0):
    """Stack per-profile regressions of pixels on base profiles at the means."""
    if len(profiles) != len(labeled_means):
        raise DataError("need one set of labelled means per profile")
    blocks, targets = [], []
    K = None
    for prof, means in zip(profiles, labeled_means):
        means = np.asarray(means, dtype=float)
        if K is None:
            K = means.shape[1]
        elif means.shape[1] != K:
            raise ComponentMismatch("every profile needs the same number of labelled means")
        rows = _row_subset(prof.grid, means, sigma2, radius_sd)
        blocks.append(base_profiles(prof.grid, means.T, sigma2)[rows])
        targets.append(prof.vector()[rows])
    return np.vstack(blocks), np.concatenate(targets)


def pooled_sse(profiles, labeled_means, weights, sigma2):
    """Residual sum of squares over all pixels of all profiles."""
    total = 0.0
    for prof, means in zip(profiles, labeled_means):
        fit = base_profiles(prof.grid, np.asarray(means).T, sigma2) @ weights
        r = prof.vector() - fit
        total += float(r @ r)
    return total


def estimate_weights_global(profiles, labeled_means, sigma2, radius_sd=3.0):
    """Shared mixing weights by ordinary least squares over stacked profiles.

    Rows are restricted to pixels within ``radius_sd`` kernel widths of some
    labelled mean (``None`` keeps every pixel).  Negative estimates are
    clamped to a small positive floor with a warning.

    Returns
    -------
    weights : ndarray (K,)
    sse : float
        Pooled residual over all pixels, comparable across ``sigma2``.
    """
    X, y = stacked_design(profiles, labeled_means, sigma2, radius_sd)
    coef, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < X.shape[1]:
        raise RankDeficient(f"stacked design has rank {rank} < {X.shape[1]}")
    if np.any(coef < WEIGHT_FLOOR):
        warnings.warn(f"clamping {int(np.sum(coef < WEIGHT_FLOOR))} weight(s) to {WEIGHT_FLOOR}",
                      stacklevel=2)
        coef = np.maximum(coef, WEIGHT_FLOOR)
    return coef, pooled_sse(profiles, labeled_means, coef, sigma2)


def sigma2_grid_search(profiles, labeled_means, grid_values, radius_sd=3.0):
    """Pick the kernel variance whose weight regression fits best.

    Returns
    -------
    sigma2_hat : float
    weights : ndarray
    sse : ndarray
        Pooled residual at each grid value.
    """
    grid_values = np.atleast_1d(np.asarray(grid_values, dtype=float))
    if grid_values.size == 0 or np.any(grid_values <= 0):
        raise DataError("sigma2 grid must be nonempty and positive")
    fits = []
    for s2 in grid_values:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            fits.append(estimate_weights_global(profiles, labeled_means, s2, radius_sd))
    sse = np.array([f[1] for f in fits])
    best = int(np.argmin(sse))
    return float(grid_values[best]), fits[best][0], sse


@dataclass
class ReconstructionResult:
    mixture: RadialMixture3
    gram_estimate: np.ndarray
    sigma2_hat: float
    fit_sse: float = float("nan")
    provenance: dict = field(default_factory=dict)


def assemble(G, weights, sigma2, fit_sse=float("nan"), provenance=None):
    """Build the reconstructed mixture from a Gram estimate.

    Means are the canonical factor of ``G``; weights keep the Gram labels.
    """
    G = np.asarray(G, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if weights.size != G.shape[0]:
        raise ComponentMismatch("one weight per Gram row is required")
    V = factor_gram(G)
    m = RadialMixture3(V, weights, float(np.sqrt(sigma2)))
    return ReconstructionResult(m, G, float(sigma2), fit_sse, dict(provenance or {}))


@dataclass
class VolumeGrid:
    V: int
    extent: float
    values: np.ndarray

    @property
    def voxel_side(self):
        return 2.0 * self.extent / self.V

    @property
    def axis(self):
        return -self.extent + (np.arange(self.V) + 0.5) * self.voxel_side


def render_volume(m, V, extent):
    if V < 2:
        raise ValueError("V must be at least 2")
    vol = VolumeGrid(V, float(extent), None)
    a = vol.axis
    X, Y, Z = np.meshgrid(a, a, a, indexing="ij")
    pts = np.stack([X, Y, Z], axis=-1)
    vol.values = np.asarray(eval3(m, pts)).reshape(V, V, V)
    return vol


def fitted_profile(profile, means2d, weights, sigma2):
    """Noise-free profile implied by labelled means and weights."""
    img = base_profiles(profile.grid, np.asarray(means2d).T, sigma2) @ np.asarray(weights)
    return Profile(profile.grid, img.reshape(profile.grid.T, profile.grid.T, order="F"), profile.id)


def residual_map(profile, fitted):
    check_same_grid(profile, fitted)
    return profile.pixels - fitted.pixels


def shape_distance(a, b):
    """Distance between two mixtures modulo orthogonal transforms.

    The Frobenius distance between centered-mean Gram matrices, minimised
    over relabelings of ``b``, plus the L1 distance between the sorted
    weight vectors.
    """
    if a.K != b.K:
        raise ComponentMismatch(f"{a.K} vs {b.K} components")
    if a.K > MAX_PERMUTATION_K:
        raise TooManyComponents(f"{a.K} components exceed the permutation search limit")
    Ga, Gb = gram(center(a.means)), gram(center(b.means))
    best = min(
        np.linalg.norm(Ga - Gb[np.ix_(p, p)]) for p in itertools.permutations(range(a.K))
    )
    wdiff = np.abs(np.sort(a.weights) - np.sort(b.weights)).sum()
    return float(best + wdiff)


def write_volume(path, vol):
    with open(path, "w") as fh:
        fh.write("VOL1\n")
        fh.write(f"{vol.V} {vol.extent:.12g}\n")
        for block in vol.values:
            for row in block:
                fh.write(" ".join(f"{v:.9e}" for v in row) + "\n")


def read_volume(path):
    with open(path) as fh:
        lines = [ln for ln in fh if ln.strip()]
    if not lines or lines[0].strip() != "VOL1":
        raise DataError(f"{path}: not a VOL1 file")
    V_str, ext_str = lines[1].split()
    V = int(V_str)
    vals = np.array([ln.split() for ln in lines[2:2 + V * V]], dtype=float)
    return VolumeGrid(V, float(ext_str), vals.reshape(V, V, V))


def write_gram(path, G, ensemble=None):
    """``GRAM K`` block followed by an optional ``ENS 3 K`` block."""
    G = np.asarray(G)
    K = G.shape[0]
    with open(path, "w") as fh:
        fh.write(f"GRAM {K}\n")
        for row in G:
            fh.write(" ".join(f"{v:.12g}" for v in row) + "\n")
        if ensemble is not None:
            fh.write(f"ENS 3 {K}\n")
            for row in np.asarray(ensemble):
                fh.write(" ".join(f"{v:.12g}" for v in row) + "\n")


def read_gram(path):
    """Returns ``(G, ensemble_or_None)``."""
    with open(path) as fh:
        lines = [ln.split() for ln in fh if ln.strip()]
    if not lines or lines[0][0] != "GRAM":
        raise DataError(f"{path}: missing GRAM header")
    K = int(lines[0][1])
    G = np.array(lines[1:1 + K], dtype=float)
    ens = None
    if len(lines) > K + 1 and lines[K + 1][0] == "ENS":
        ens = np.array(lines[K + 2:K + 5], dtype=float)
    return G, ens
