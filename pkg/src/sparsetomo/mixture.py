"""Isotropic Gaussian mixtures in three and two dimensions."""

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .geometry import center, gram, project


def _validate(means, weights, kernel_sigma, total_mass, dim):
    means = np.asarray(means, dtype=float)
    weights = np.asarray(weights, dtype=float).ravel()
    if means.ndim != 2 or means.shape[0] != dim:
        raise DataError(f"means must be a ({dim}, K) array, got {means.shape}")
    if means.shape[1] < 1 or means.shape[1] != weights.size:
        raise DataError("need one weight per mean and at least one component")
    if np.any(weights <= 0):
        raise DataError("mixing weights must be positive")
    if not kernel_sigma > 0:
        raise DataError("kernel_sigma must be positive")
    if total_mass is None:
        total_mass = float(weights.sum())
    elif abs(weights.sum() - total_mass) > 1e-9:
        raise DataError(f"weights sum to {weights.sum()}, expected {total_mass}")
    return means, weights, float(kernel_sigma), float(total_mass)


def _gaussian(sq_dist, sigma, dim):
    return (2.0 * np.pi * sigma**2) ** (-dim / 2.0) * np.exp(-0.5 * sq_dist / sigma**2)


@dataclass(frozen=True)
class RadialMixture3:
    """``sum_k q_k N(x | mu_k, sigma^2 I)`` in R^3.

    ``means`` is a ``(3, K)`` array.  ``total_mass`` defaults to the sum of
    the weights; it is kept separately because observed masses fluctuate
    from projection to projection.
    """

    means: np.ndarray
    weights: np.ndarray
    kernel_sigma: float
    total_mass: float = field(default=None)

    def __post_init__(self):
        m, w, s, t = _validate(self.means, self.weights, self.kernel_sigma, self.total_mass, 3)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "kernel_sigma", s)
        object.__setattr__(self, "total_mass", t)

    @property
    def K(self):
        return self.means.shape[1]

    def centered(self):
        return RadialMixture3(center(self.means), self.weights, self.kernel_sigma, self.total_mass)

    def shape_gram(self):
        """Gram matrix of the centered means."""
        return gram(center(self.means))


@dataclass(frozen=True)
class RadialMixture2:
    means: np.ndarray
    weights: np.ndarray
    kernel_sigma: float
    total_mass: float = field(default=None)

    def __post_init__(self):
        m, w, s, t = _validate(self.means, self.weights, self.kernel_sigma, self.total_mass, 2)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "kernel_sigma", s)
        object.__setattr__(self, "total_mass", t)

    @property
    def K(self):
        return self.means.shape[1]


def _eval(m, x, dim):
    x = np.asarray(x, dtype=float)
    pts = x.reshape(-1, dim)
    d2 = ((pts[:, :, None] - m.means[None]) ** 2).sum(axis=1)
    vals = _gaussian(d2, m.kernel_sigma, dim) @ m.weights
    return vals.reshape(x.shape[:-1]) if x.ndim > 1 else float(vals[0])


def eval3(m, x):
    """Density of a 3D mixture at ``x`` (shape ``(..., 3)``)."""
    return _eval(m, x, 3)


def eval2(m, x):
    """Density of a 2D mixture at ``x`` (shape ``(..., 2)``)."""
    return _eval(m, x, 2)


def rotate(m, U):
    return RadialMixture3(np.asarray(U) @ m.means, m.weights, m.kernel_sigma, m.total_mass)


def project_mixture(m, U):
    """Marginal of the rotated mixture along the viewing axis.

    The x3-marginal of an isotropic Gaussian is isotropic with the same
    scale, so only the means change.
    """
    return RadialMixture2(project(U, m.means), m.weights, m.kernel_sigma, m.total_mass)


def pyramid_fixture():
    """Four-component pyramid used as the synthetic benchmark particle."""
    means = np.array(
        [
            [0.0, 0.8, -0.3],
            [0.7, -0.4, -0.3],
            [-0.7, -0.4, -0.3],
            [0.0, 0.0, 0.8],
        ]
    ).T
    return RadialMixture3(means, [0.18, 0.26, 0.21, 0.35], 0.46)


def merge(a, b):
    """Concatenate two mixtures sharing a kernel scale."""
    if a.kernel_sigma != b.kernel_sigma:
        raise DataError("cannot merge mixtures with different kernels")
    cls = type(a)
    return cls(
        np.hstack([a.means, b.means]),
        np.concatenate([a.weights, b.weights]),
        a.kernel_sigma,
        a.total_mass + b.total_mass,
    )


def write_mixture(path, m):
    """Write the ``RM3`` text format."""
    lines = [f"RM3 {m.K} {m.kernel_sigma:.12g} {m.total_mass:.12g}"]
    for q, mu in zip(m.weights, m.means.T):
        lines.append(" ".join(f"{v:.12g}" for v in (q, *mu)))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mixture(path):
    with open(path) as fh:
        rows = [ln.split() for ln in fh if ln.strip() and not ln.startswith("#")]
    if not rows or rows[0][0] != "RM3" or len(rows[0]) != 4:
        raise DataError(f"{path}: missing 'RM3 K sigma total_mass' header")
    K = int(rows[0][1])
    sigma, mass = float(rows[0][2]), float(rows[0][3])
    body = np.array(rows[1:], dtype=float)
    if body.shape != (K, 4):
        raise DataError(f"{path}: expected {K} component lines of 4 numbers")
    return RadialMixture3(body[:, 1:].T, body[:, 0], sigma, mass)


__all__ = [
    "RadialMixture2",
    "RadialMixture3",
    "eval2",
    "eval3",
    "merge",
    "project_mixture",
    "pyramid_fixture",
    "read_mixture",
    "rotate",
    "write_mixture",
]
