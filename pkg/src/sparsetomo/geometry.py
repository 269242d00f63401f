"""Rotations, projections and Gram-matrix algebra.

Matrices are plain numpy arrays throughout.  Ensembles of K points in R^d
are stored column-wise as ``(d, K)`` arrays, so ``gram(W) == W.T @ W``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, IndefiniteGram, NotLowRank, NotUnit

#: The 2x3 truncated identity that drops the viewing coordinate.
H = np.eye(3)[:2]

RANK_TOL = 1e-6
UNIT_TOL = 1e-9


def as_rng(seed=None):
    """Return a ``numpy.random.Generator`` for ``seed``.

    ``seed`` may already be a generator, in which case it is returned as is.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_haar_rotation(seed=None):
    """Draw a Haar-uniform element of SO(3).

    A 3x3 standard normal matrix is orthonormalised by QR; multiplying the
    columns of Q by the signs of diag(R) makes the result Haar on O(3), and
    flipping the first column on the det = -1 coset maps it onto SO(3).
    """
    rng = as_rng(seed)
    z = rng.standard_normal((3, 3))
    q, r = np.linalg.qr(z)
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def sample_haar_rotations(n, seed=None):
    rng = as_rng(seed)
    return np.stack([sample_haar_rotation(rng) for _ in range(n)])


def is_rotation(R, tol=1e-12):
    R = np.asarray(R, dtype=float)
    return (
        R.shape == (3, 3)
        and np.linalg.norm(R @ R.T - np.eye(3)) <= tol
        and abs(np.linalg.det(R) - 1.0) <= tol
    )


def project(rotation, means):
    """Project a 3xK ensemble after rotating it: column k is ``H @ R @ mu_k``."""
    return H @ (np.asarray(rotation, dtype=float) @ np.asarray(means, dtype=float))


def gram(vectors):
    """Gram matrix of the columns of a ``(d, K)`` array."""
    W = np.asarray(vectors, dtype=float)
    if W.ndim == 1:
        W = W[:, None]
    return W.T @ W


def center(vectors):
    """Subtract the (unweighted) centroid from each column."""
    W = np.asarray(vectors, dtype=float)
    return W - W.mean(axis=1, keepdims=True)


def is_gram(G, sym_tol=1e-12, psd_tol=1e-9):
    G = np.asarray(G, dtype=float)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        return False
    if np.max(np.abs(G - G.T), initial=0.0) > sym_tol:
        return False
    return np.linalg.eigvalsh(G).min(initial=0.0) >= -psd_tol


def _echelon(V0):
    """Rotate a ``(r, K)`` factor into lower-echelon form.

    The first column lies along axis 1, the second in the 1-2 plane and so
    on; the leading nonzero entry of each row is made positive.
    """
    r, K = V0.shape
    V = np.linalg.qr(V0, mode="r")
    scale = max(np.abs(V).max(initial=0.0), 1.0)
    for i in range(r):
        nz = np.flatnonzero(np.abs(V[i]) > 1e-12 * scale)
        if nz.size and V[i, nz[0]] < 0:
            V[i] = -V[i]
    return V


def factor_gram(G, target_rank=3, rank_tol=RANK_TOL):
    """Find a 3xK ensemble whose Gram matrix is ``G``.

    The ensemble is returned in canonical echelon form: the first column
    along the x axis, the second in the x-y plane, and the sign of each
    coordinate row fixed by its first nonzero entry.  Rows beyond
    ``target_rank`` are zero.

    Raises
    ------
    NotLowRank
        More than ``target_rank`` eigenvalues exceed ``rank_tol`` times the
        largest one.
    IndefiniteGram
        The most negative eigenvalue is below ``-rank_tol`` times the
        largest one.
    """
    G = np.asarray(G, dtype=float)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise DimensionMismatch(f"Gram matrix must be square, got {G.shape}")
    if not 1 <= target_rank <= 3:
        raise ValueError("target_rank must be 1, 2 or 3")
    G = 0.5 * (G + G.T)
    K = G.shape[0]
    evals, evecs = np.linalg.eigh(G)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    top = max(abs(evals[0]), np.finfo(float).tiny)
    if evals[-1] < -rank_tol * top:
        raise IndefiniteGram(f"eigenvalue {evals[-1]:.3g} is negative")
    n_big = int(np.sum(evals > rank_tol * top))
    if n_big > target_rank:
        raise NotLowRank(f"{n_big} eigenvalues exceed tolerance, rank {target_rank} requested")
    r = min(target_rank, K)
    lam = np.clip(evals[:r], 0.0, None)
    V0 = np.sqrt(lam)[:, None] * evecs[:, :r].T
    V = np.zeros((3, K))
    V[:r] = _echelon(V0)
    return V


def _check_unit(e):
    e = np.asarray(e, dtype=float)
    if e.shape != (3,) or abs(np.linalg.norm(e) - 1.0) > UNIT_TOL:
        raise NotUnit(f"expected a unit 3-vector, got {e}")
    return e


def roman_embed(e):
    """Map a unit vector to the Roman surface, ``(e2 e3, e1 e3, e1 e2)``."""
    e1, e2, e3 = _check_unit(e)
    return np.array([e2 * e3, e1 * e3, e1 * e2])


def roman_embed_jacobian(e):
    e1, e2, e3 = np.asarray(e, dtype=float)
    return np.array([[0.0, e3, e2], [e3, 0.0, e1], [e2, e1, 0.0]])


def projected_gram_at(V, e):
    """Gram matrix of the ensemble ``V`` projected along direction ``e``."""
    e = _check_unit(e)
    V = np.asarray(V, dtype=float)
    P = np.eye(3) - np.outer(e, e)
    return V.T @ P @ V


@dataclass(frozen=True)
class RomanSample:
    """Sampled points ``V^T (I - u u^T) V`` on a stretched Roman surface."""

    points: np.ndarray  # (n, K, K)
    seed: object = None

    @property
    def K(self):
        return self.points.shape[1]

    def __len__(self):
        return self.points.shape[0]


def random_unit_vectors(n, seed=None):
    rng = as_rng(seed)
    u = rng.standard_normal((n, 3))
    return u / np.linalg.norm(u, axis=1, keepdims=True)


def sample_roman_surface(V, count, seed=None):
    if count < 1:
        raise ValueError("count must be at least 1")
    V = np.asarray(V, dtype=float)
    if V.shape[0] != 3:
        raise DimensionMismatch("factor must have 3 rows")
    u = random_unit_vectors(count, seed)
    G = V.T @ V
    Vu = u @ V  # (n, K): u_n^T V
    points = G[None] - Vu[:, :, None] * Vu[:, None, :]
    return RomanSample(points=points, seed=seed)


def roman_distances(candidates, locus):
    """Distances from a stack of ``(m, K, K)`` candidates to the locus."""
    C = np.asarray(candidates, dtype=float)
    if C.ndim == 2:
        C = C[None]
    if C.shape[1:] != locus.points.shape[1:]:
        raise DimensionMismatch(
            f"candidate is {C.shape[1:]}, locus is {locus.points.shape[1:]}"
        )
    S = locus.points.reshape(len(locus), -1)
    flat = C.reshape(C.shape[0], -1)
    out = np.empty(flat.shape[0])
    step = 32
    for start in range(0, flat.shape[0], step):
        diff = flat[start:start + step, None, :] - S[None]
        out[start:start + step] = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff).min(axis=1))
    return out


def roman_distance(candidate, locus):
    """Minimum Frobenius distance from a Gram matrix to a sampled locus."""
    return float(roman_distances(candidate, locus)[0])
