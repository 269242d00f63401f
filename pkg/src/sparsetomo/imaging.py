"""Pixel grids, simulated projections and the convolution design matrix.

Pixel ``(i, j)`` of a ``T x T`` image sits at ``(x_i, x_j)``: the row index
runs along the first projected coordinate.  Images are vectorised column
by column (Fortran order), so flat index ``p = i + T * j``.
"""

import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DataError, EmptyMask, GridMismatch
from .geometry import sample_haar_rotation
from .mixture import eval2, project_mixture


@dataclass(frozen=True)
class PixelGrid:
    """Square field of view ``[-L, L]^2`` sampled at ``T x T`` pixel centers."""

    T: int
    extent: float = 2.2

    def __post_init__(self):
        if int(self.T) != self.T or self.T < 2:
            raise DataError("T must be an integer >= 2")
        if not self.extent > 0:
            raise DataError("extent must be positive")

    @property
    def pixel_side(self):
        return 2.0 * self.extent / self.T

    @property
    def pixel_area(self):
        return self.pixel_side**2

    @cached_property
    def axis(self):
        """Pixel-center coordinates along one side."""
        L, T = self.extent, self.T
        return -L + (np.arange(T) + 0.5) * self.pixel_side

    @cached_property
    def centers(self):
        """``(T*T, 2)`` array of pixel centers in column-major order."""
        xi, xj = np.meshgrid(self.axis, self.axis, indexing="ij")
        return np.column_stack([xi.ravel(order="F"), xj.ravel(order="F")])

    def unravel(self, p):
        """Flat column-major index -> ``(i, j)``."""
        p = np.asarray(p)
        return p % self.T, p // self.T


@dataclass(frozen=True)
class Profile:
    grid: PixelGrid
    pixels: np.ndarray
    id: int = 0

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=float)
        if px.shape != (self.grid.T, self.grid.T):
            raise DataError(f"profile must be {self.grid.T}x{self.grid.T}, got {px.shape}")
        if not np.all(np.isfinite(px)):
            raise DataError(f"profile {self.id} has non-finite pixels")
        object.__setattr__(self, "pixels", px)

    def vector(self):
        return self.pixels.ravel(order="F")

    def mass(self):
        return self.grid.pixel_area * float(self.pixels.sum())


def profile_seed(master_seed, n):
    """Per-profile seed material; ``default_rng`` hashes the pair."""
    return np.random.SeedSequence([int(master_seed), int(n)])


def render_clean(mixture2, grid):
    vals = eval2(mixture2, grid.centers)
    return vals.reshape(grid.T, grid.T, order="F")


def render_profile(m, U, grid, noise_sd=0.0, seed=None, id=0):
    """Noisy point-sampled projection of ``m`` viewed at rotation ``U``."""
    img = render_clean(project_mixture(m, U), grid)
    if noise_sd > 0:
        rng = np.random.default_rng(seed)
        img = img + rng.normal(0.0, noise_sd, size=img.shape)
    return Profile(grid, img, id)


def simulate_stack(m, grid, N, noise_sd, seed):
    """Render ``N`` profiles at independent Haar rotations.

    Profile ``n`` draws its rotation and then its noise from the stream
    ``default_rng(SeedSequence([seed, n]))``, so any single profile can be
    regenerated without the others.

    Returns
    -------
    profiles : list of Profile
    rotations : (N, 3, 3) array
    """
    profiles, rotations = [], []
    for n in range(N):
        rng = np.random.default_rng(profile_seed(seed, n))
        U = sample_haar_rotation(rng)
        profiles.append(render_profile(m, U, grid, noise_sd, rng, id=n))
        rotations.append(U)
    return profiles, np.array(rotations).reshape(N, 3, 3)


def signal_to_noise(profiles, noise_sd):
    """Mean over profiles of (pixel variance of the clean signal) / noise variance.

    ``profiles`` here are noise-free renders.
    """
    if noise_sd <= 0:
        return np.inf
    return float(np.mean([p.pixels.var() for p in profiles]) / noise_sd**2)


@dataclass(frozen=True)
class CandidateMask:
    indices: np.ndarray  # flat column-major pixel indices, ascending
    w: float

    def __len__(self):
        return self.indices.size


def candidate_mask(grid, w):
    """Pixels whose centers lie strictly inside the disc of radius ``w``."""
    if not w > grid.pixel_side:
        raise ValueError(f"mask radius {w} must exceed the pixel side {grid.pixel_side}")
    r = np.linalg.norm(grid.centers, axis=1)
    idx = np.flatnonzero(r < w)
    if idx.size == 0:
        raise EmptyMask(f"no pixel center lies within {w}")
    return CandidateMask(idx, float(w))


def gaussian2(sq_dist, sigma2):
    return np.exp(-0.5 * sq_dist / sigma2) / (2.0 * np.pi * sigma2)


def base_profiles(grid, locations, sigma2):
    """``(T*T, n)`` matrix of Gaussian images centred at ``locations`` (n, 2)."""
    loc = np.asarray(locations, dtype=float).reshape(-1, 2)
    c = grid.centers
    d2 = (
        (c[:, 0:1] - loc[None, :, 0]) ** 2
        + (c[:, 1:2] - loc[None, :, 1]) ** 2
    )
    return gaussian2(d2, sigma2)


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    grid: PixelGrid
    mask: CandidateMask
    kernel_sigma2: float
    X: np.ndarray

    @cached_property
    def gram(self):
        return self.X.T @ self.X

    @property
    def shape(self):
        return self.X.shape


def build_design_matrix(grid, mask, sigma2, min_mass=0.99):
    """Convolution matrix whose columns are base profiles at candidate pixels.

    A warning is emitted when some base profile keeps less than
    ``min_mass`` of its mass inside the field of view; shrink the mask
    radius or widen the grid in that case.
    """
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    X = base_profiles(grid, grid.centers[mask.indices], sigma2)
    inside = X.sum(axis=0) * grid.pixel_area
    if inside.min() < min_mass:
        warnings.warn(
            f"{int(np.sum(inside < min_mass))} base profiles keep less than "
            f"{min_mass:.0%} of their mass in the field of view (min {inside.min():.4f})",
            stacklevel=2,
        )
    return DesignMatrix(grid, mask, float(sigma2), X)


def estimate_mass(profiles):
    if not profiles:
        raise DataError("need at least one profile")
    return max(0.0, float(np.mean([p.mass() for p in profiles])))


def check_same_grid(a, b):
    if a.grid != b.grid:
        raise GridMismatch(f"{a.grid} != {b.grid}")


def write_stack(path, profiles):
    """Write profiles in the ``PFS1`` text format."""
    if not profiles:
        raise DataError("cannot write an empty stack")
    grid = profiles[0].grid
    with open(path, "w") as fh:
        fh.write("PFS1\n")
        fh.write(f"{len(profiles)} {grid.T} {grid.extent:.12g}\n")
        for p in profiles:
            check_same_grid(profiles[0], p)
            fh.write(f"# profile {p.id}\n")
            for row in p.pixels:
                fh.write(" ".join(f"{v:.12g}" for v in row))
                fh.write("\n")


def read_stack(path):
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0].strip() != "PFS1":
        raise DataError(f"{path}: not a PFS1 profile stack")
    try:
        n_str, t_str, l_str = lines[1].split()
        N, T, L = int(n_str), int(t_str), float(l_str)
    except (IndexError, ValueError) as exc:
        raise DataError(f"{path}: bad 'N T L' line") from exc
    grid = PixelGrid(T, L)
    profiles = []
    pos = 2
    for _ in range(N):
        head = lines[pos].split() if pos < len(lines) else []
        if head[:2] != ["#", "profile"] or len(head) != 3:
            raise DataError(f"{path}:{pos + 1}: expected '# profile n'")
        rows = lines[pos + 1:pos + 1 + T]
        try:
            px = np.array([r.split() for r in rows], dtype=float)
        except ValueError as exc:
            raise DataError(f"{path}: malformed pixel row in profile {head[2]}") from exc
        profiles.append(Profile(grid, px, int(head[2])))
        pos += T + 1
    return profiles


def write_rotations(path, rotations):
    """Sidecar with the true rotations, one row-major 3x3 per line."""
    rotations = np.asarray(rotations).reshape(-1, 3, 3)
    with open(path, "w") as fh:
        fh.write(f"ROT1 {len(rotations)}\n")
        for U in rotations:
            fh.write(" ".join(f"{v:.17g}" for v in U.ravel()) + "\n")


def read_rotations(path):
    with open(path) as fh:
        lines = [ln.split() for ln in fh if ln.strip()]
    if not lines or lines[0][0] != "ROT1":
        raise DataError(f"{path}: not a ROT1 rotation file")
    N = int(lines[0][1])
    return np.array(lines[1:1 + N], dtype=float).reshape(N, 3, 3)
