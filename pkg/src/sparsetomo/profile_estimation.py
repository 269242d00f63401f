"""From sparse spikes to labelled per-profile estimates."""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .errors import DataError, EmptySupport, ZeroWeightCluster
from .geometry import center

EIGHT_CONNECTED = np.ones((3, 3), dtype=int)
MAX_CLUSTER_SPAN = 5


@dataclass(frozen=True)
class ClusterSet:
    """Partition of the nonzero support into 8-connected pixel groups.

    Each cluster is an ascending array of positions into the mask (i.e.
    coefficient indices), not raw pixel indices.
    """

    clusters: list
    oversized: tuple = ()

    def __len__(self):
        return len(self.clusters)


def _support_image(support, mask, grid):
    img = np.zeros((grid.T, grid.T), dtype=bool)
    i, j = grid.unravel(mask.indices[support])
    img[i, j] = True
    return img


def cluster_support(support, mask, grid):
    """Group coefficient indices whose pixels touch by an edge or a corner."""
    support = np.asarray(support, dtype=int)
    if support.size == 0:
        raise EmptySupport("no nonzero coefficients to cluster")
    labels, n = ndimage.label(_support_image(support, mask, grid), structure=EIGHT_CONNECTED)
    i, j = grid.unravel(mask.indices[support])
    lab = labels[i, j]
    clusters = []
    for k in range(1, n + 1):
        clusters.append(np.sort(support[lab == k]))
    # order clusters by their first member so the partition does not depend
    # on scan order
    clusters.sort(key=lambda c: c[0])
    oversized = []
    for idx, c in enumerate(clusters):
        ci, cj = grid.unravel(mask.indices[c])
        if np.ptp(ci) + 1 > MAX_CLUSTER_SPAN or np.ptp(cj) + 1 > MAX_CLUSTER_SPAN:
            oversized.append(idx)
    return ClusterSet(clusters, tuple(oversized))


def cluster_nonzeros(solution, mask, grid):
    return cluster_support(np.flatnonzero(solution.beta), mask, grid)


def count_clusters(beta, mask, grid):
    support = np.flatnonzero(beta)
    if support.size == 0:
        return 0
    return int(ndimage.label(_support_image(support, mask, grid), structure=EIGHT_CONNECTED)[1])


def cluster_means(cs, beta, mask, grid):
    """Coefficient-weighted centroid of each cluster, as a ``(2, K)`` array."""
    beta = getattr(beta, "beta", beta)
    centers = grid.centers[mask.indices]
    out = np.empty((2, len(cs)))
    for k, c in enumerate(cs.clusters):
        w = beta[c]
        if not w.sum() > 0:
            raise ZeroWeightCluster(f"cluster {k} has total weight {w.sum()}")
        out[:, k] = w @ centers[c] / w.sum()
    return out


def cluster_weights(cs, beta, mass):
    """Cluster sums of coefficients rescaled to total ``mass``."""
    beta = getattr(beta, "beta", beta)
    if not mass > 0:
        raise DataError("mass must be positive")
    sums = np.array([beta[c].sum() for c in cs.clusters])
    return sums / sums.sum() * mass


@dataclass(frozen=True)
class ProfileEstimate:
    """Projected component locations and weights recovered from one profile.

    ``labels[k]`` is the original cluster index of component ``k``.
    """

    means2d: np.ndarray
    weights: np.ndarray
    profile_id: int = 0
    mass: float = 1.0
    labels: np.ndarray = None
    flags: tuple = field(default=())

    def __post_init__(self):
        m = np.asarray(self.means2d, dtype=float).reshape(2, -1)
        w = np.asarray(self.weights, dtype=float).ravel()
        if m.shape[1] != w.size or w.size < 1:
            raise DataError("need one weight per projected mean")
        object.__setattr__(self, "means2d", m)
        object.__setattr__(self, "weights", w)
        if self.labels is None:
            object.__setattr__(self, "labels", np.arange(w.size))

    @property
    def K(self):
        return self.weights.size

    def centered_means(self):
        return center(self.means2d)

    def permuted(self, perm):
        perm = np.asarray(perm)
        return replace(self, means2d=self.means2d[:, perm], weights=self.weights[perm],
                       labels=self.labels[perm])


def order_components(pe):
    """Relabel components by descending weight.

    Ties are broken by the lexicographic order of the mean coordinates, so
    the result is deterministic and idempotent.
    """
    keys = (pe.means2d[1], pe.means2d[0], -pe.weights)
    return pe.permuted(np.lexsort(keys))


def reject_outlier_profiles(estimates, expected_K):
    """Keep profiles with ``expected_K`` components and no left-outlying weight.

    A profile is rejected when its smallest weight falls below
    ``Q1 - 1.5 * IQR`` of the smallest weights across the retained pool.
    """
    right_k = [e for e in estimates if e.K == expected_K]
    rejected = [e for e in estimates if e.K != expected_K]
    if not right_k:
        return [], rejected
    mins = np.array([e.weights.min() for e in right_k])
    q1, q3 = np.percentile(mins, [25, 75])
    fence = q1 - 1.5 * (q3 - q1)
    kept = []
    for e, m in zip(right_k, mins):
        (kept if m >= fence else rejected).append(e)
    return kept, rejected


def estimate_profile(profile, design, path_fn, mass, t_factor=0.95, t_max_factor=1.0):
    """Deconvolve one profile into an ordered :class:`ProfileEstimate`.

    ``path_fn(design, y)`` must return a lasso path for the profile.
    Returns ``None`` if the solution has no support.
    """
    from .sparse_solver import calibrate_constraint

    grid, mask = design.grid, design.mask
    path = path_fn(design, profile.vector())
    t_max = t_max_factor * mass
    t_start = min(t_factor * mass, t_max)
    if not t_start > 0:
        return None
    sol = calibrate_constraint(path, t_start, t_max, lambda b: count_clusters(b, mask, grid))
    if sol.support.size == 0:
        return None
    cs = cluster_nonzeros(sol, mask, grid)
    means = cluster_means(cs, sol.beta, mask, grid)
    weights = cluster_weights(cs, sol.beta, mass)
    flags = ("oversized_cluster",) if cs.oversized else ()
    if path.truncated:
        flags += ("path_truncated",)
    return order_components(ProfileEstimate(means, weights, profile.id, mass, flags=flags))


def write_estimates(path, estimates, rejected_ids=()):
    """Write ``profile n K m_hat`` blocks followed by ``label q x y`` lines."""
    rejected_ids = set(rejected_ids)
    with open(path, "w") as fh:
        for e in estimates:
            tag = " rejected" if e.profile_id in rejected_ids else ""
            fh.write(f"profile {e.profile_id} {e.K} {e.mass:.12g}{tag}\n")
            for k in range(e.K):
                x, y = e.means2d[:, k]
                fh.write(f"{k + 1} {e.weights[k]:.12g} {x:.12g} {y:.12g}\n")


def read_estimates(path):
    """Returns ``(estimates, rejected_ids)``."""
    estimates, rejected = [], set()
    with open(path) as fh:
        lines = [ln.split() for ln in fh if ln.strip()]
    pos = 0
    while pos < len(lines):
        head = lines[pos]
        if head[0] != "profile" or len(head) not in (4, 5):
            raise DataError(f"{path}: expected 'profile n K m_hat', got {' '.join(head)}")
        n, K, mass = int(head[1]), int(head[2]), float(head[3])
        body = np.array(lines[pos + 1:pos + 1 + K], dtype=float).reshape(K, 4)
        estimates.append(ProfileEstimate(body[:, 2:].T, body[:, 1], n, mass))
        if len(head) == 5 and head[4] == "rejected":
            rejected.add(n)
        pos += K + 1
    return estimates, rejected
