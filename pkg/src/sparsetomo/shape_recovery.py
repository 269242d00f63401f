"""Combining projected Gram matrices into a three-dimensional shape estimate.

Three pieces live here:

* averaging projected Gram matrices and undoing the 2/3 shrinkage that a
  random projection applies on average, followed by a rank-3 truncation;
* labelling components consistently across profiles of a class by
  exhaustive search over permutations of the Gram matrix;
* completing classes in which some components merged in projection, by
  duplicating means and choosing the arrangement closest to the locus of
  projected Gram matrices of the current estimate.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    NotOrthogonal,
    TooManyComponents,
    UnsupportedDeficit,
)
from .geometry import center, factor_gram, gram, roman_distances, sample_roman_surface

MAX_PERMUTATION_K = 8


def average_gram(means_list, center_means=False):
    """``3 / (2N)`` times the sum of the Gram matrices of projected ensembles.

    ``means_list`` holds ``(2, K)`` arrays or objects with a ``means2d``
    attribute, all with labels already aligned.
    """
    arrays = [np.asarray(getattr(m, "means2d", m), dtype=float) for m in means_list]
    if not arrays:
        raise ValueError("need at least one ensemble")
    K = arrays[0].shape[1]
    if any(a.shape[1] != K for a in arrays):
        raise DimensionMismatch("all ensembles must have the same number of components")
    if center_means:
        arrays = [center(a) for a in arrays]
    total = sum(gram(a) for a in arrays)
    return 1.5 * total / len(arrays)


def rank3_truncate(G):
    """Best rank-3 approximation, symmetrised and clipped to be PSD."""
    G = np.asarray(G, dtype=float)
    U, s, Vt = np.linalg.svd(G)
    r = min(3, s.size)
    A = (U[:, :r] * s[:r]) @ Vt[:r]
    A = 0.5 * (A + A.T)
    w, E = np.linalg.eigh(A)
    if w.min() < 0:
        A = (E * np.clip(w, 0.0, None)) @ E.T
        A = 0.5 * (A + A.T)
    return A


def third_eigenvalue(G):
    """Third-largest eigenvalue; small values mean an almost planar ensemble."""
    w = np.sort(np.linalg.eigvalsh(np.asarray(G, dtype=float)))[::-1]
    return float(w[2]) if w.size >= 3 else 0.0


def permute_gram(G, perm):
    perm = np.asarray(perm)
    return G[np.ix_(perm, perm)]


def labeling_distances(means, reference_gram):
    """All ``(d_l, perm)`` pairs, sorted by Frobenius distance ``d_l``.

    ``perm[k]`` is the candidate component placed at label ``k``.
    """
    means = np.asarray(getattr(means, "means2d", means), dtype=float)
    R = np.asarray(reference_gram, dtype=float)
    K = means.shape[1]
    if R.shape != (K, K):
        raise DimensionMismatch(f"reference is {R.shape}, candidate has {K} components")
    if K > MAX_PERMUTATION_K:
        raise TooManyComponents(f"{K} components exceed the permutation search limit")
    G = gram(means)
    out = [(float(np.linalg.norm(permute_gram(G, p) - R)), p)
           for p in itertools.permutations(range(K))]
    out.sort(key=lambda x: x[0])  # stable: ties keep enumeration order
    return out


def procrustes_label(candidate, reference_gram):
    """Permutation of ``candidate`` whose Gram matrix is closest to the reference.

    Returns
    -------
    perm : ndarray of int
    distance : float
    """
    d, p = labeling_distances(candidate, reference_gram)[0]
    return np.array(p), d


def align_gram(G, reference):
    """Relabel ``G`` to best match ``reference``; returns ``(G_perm, perm, distance)``."""
    G = np.asarray(G, dtype=float)
    K = G.shape[0]
    if K > MAX_PERMUTATION_K:
        raise TooManyComponents(f"{K} components exceed the permutation search limit")
    best = min(
        ((float(np.linalg.norm(permute_gram(G, p) - reference)), p)
         for p in itertools.permutations(range(K))),
        key=lambda x: x[0],
    )
    return permute_gram(G, best[1]), np.array(best[1]), best[0]


@dataclass
class ProfileClass:
    """Profiles believed to show the particle from about the same viewpoint.

    ``members`` are :class:`ProfileEstimate` objects; ``reference`` indexes
    the generating profile among them.  With ``align="procrustes"`` members
    are relabelled to match the reference Gram matrix; ``align="weights"``
    keeps the descending-weight labels, which is the right choice for a
    class pooled from many viewpoints with well separated weights.
    """

    class_id: int
    members: list
    reference: int = 0
    align: str = "procrustes"

    @property
    def declared_K(self):
        return self.members[0].K

    def __post_init__(self):
        if not self.members:
            raise ValueError("a class needs at least one member")
        if any(m.K != self.members[0].K for m in self.members):
            raise DimensionMismatch(f"class {self.class_id} mixes component counts")
        if not 0 <= self.reference < len(self.members):
            raise ValueError("reference must index a member")
        if self.align not in ("procrustes", "weights"):
            raise ValueError(f"unknown alignment {self.align!r}")


def align_class(pclass):
    """Relabel every member to match the generating profile."""
    if pclass.align == "weights":
        return pclass
    ref = pclass.members[pclass.reference]
    R = gram(center(ref.means2d))
    members = []
    for m in pclass.members:
        if m is ref:
            members.append(m)
            continue
        perm, _ = procrustes_label(center(m.means2d), R)
        members.append(m.permuted(perm))
    return ProfileClass(pclass.class_id, members, pclass.reference, pclass.align)


@dataclass(frozen=True)
class LabeledCandidate:
    """A full-size Gram candidate built from one class.

    ``duplicated`` lists the class component indices that were repeated;
    ``perm`` orders the expanded ensemble ``[mu, mu_dup...]``.
    ``projected`` is the plain class average of member Grams: it estimates
    a single projected Gram matrix and so is what gets compared with the
    locus.  ``gram`` carries the 3/2 factor used when pooling.
    """

    projected: np.ndarray
    perm: tuple
    duplicated: tuple
    n_members: int = 1

    @property
    def gram(self):
        return 1.5 * self.projected

    @property
    def summed(self):
        return self.projected * self.n_members


def duplication_choices(declared_K, full_K):
    deficit = full_K - declared_K
    if deficit < 0 or deficit > 2:
        raise UnsupportedDeficit(f"cannot expand {declared_K} components to {full_K}")
    if deficit == 0:
        return [()]
    if deficit == 1:
        return [(k,) for k in range(declared_K)]
    return [(k1, k2) for k1 in range(declared_K) for k2 in range(k1, declared_K)]


def expand_with_multiplicity(pclass, full_K, center_means=True):
    """Enumerate full-size Gram candidates for a class with merged components.

    For every choice of duplicated components and every permutation of the
    expanded ensemble that keeps component 0 (the heaviest) in place, the
    candidate is ``3 / (2 n)`` times the summed Gram matrices of the ``n``
    class members.
    """
    if full_K > MAX_PERMUTATION_K:
        raise TooManyComponents(f"{full_K} components exceed the permutation search limit")
    K = pclass.declared_K
    dups = duplication_choices(K, full_K)
    n = len(pclass.members)
    perms = [(0,) + p for p in itertools.permutations(range(1, full_K))]
    out = []
    for dup in dups:
        S = np.zeros((full_K, full_K))
        for m in pclass.members:
            E = np.hstack([m.means2d, m.means2d[:, list(dup)]])
            if center_means:
                E = center(E)
            S += gram(E)
        for p in perms:
            Sp = permute_gram(S, p)
            out.append(LabeledCandidate(Sp / n, p, dup, n))
    return out


def select_candidate(candidates, locus):
    """Candidate closest to the sampled locus; ties go to the earliest.

    Distances are measured from each candidate's class-average projected
    Gram matrix, which lives on the same scale as the locus points.

    Returns
    -------
    best : LabeledCandidate
    distances : ndarray
        Distance of every candidate, in input order.
    """
    if not candidates:
        raise ValueError("no candidates")
    d = roman_distances(np.stack([c.projected for c in candidates]), locus)
    return candidates[int(np.argmin(d))], d


def merge_class_grams(grams):
    """Pool per-class averaged Gram matrices weighted by profile count.

    Each entry is ``(G_c, n_c)`` with ``G_c`` already carrying the 3/2
    factor, so the pooled matrix equals ``3 / (2 sum n_c)`` times the sum of
    all member Grams.  The result is truncated to rank 3.
    """
    grams = list(grams)
    if not grams:
        raise ValueError("nothing to merge")
    K = np.asarray(grams[0][0]).shape
    if any(np.asarray(g).shape != K for g, _ in grams):
        raise DimensionMismatch("class Gram matrices differ in size")
    total = sum(n for _, n in grams)
    pooled = sum(np.asarray(g, dtype=float) * n for g, n in grams) / total
    return rank3_truncate(pooled)


def triad_gram(projections, axes, tol=1e-9):
    """Exact Gram matrix from projections along three orthogonal directions.

    ``projections[i]`` holds the ensemble projected onto the plane normal
    to ``axes[i]``, in any orthonormal in-plane basis.
    """
    axes = np.asarray(axes, dtype=float)
    if axes.shape != (3, 3):
        raise DimensionMismatch("need three axes in R^3")
    if np.abs(axes @ axes.T - np.eye(3)).max() > tol:
        raise NotOrthogonal("axes must be orthonormal")
    projections = [np.asarray(p, dtype=float) for p in projections]
    if len(projections) != 3:
        raise DimensionMismatch("need exactly three projections")
    return 0.5 * sum(gram(p) for p in projections)


def plane_basis(axis):
    """Orthonormal ``(2, 3)`` basis of the plane normal to ``axis``."""
    a = np.asarray(axis, dtype=float)
    a = a / np.linalg.norm(a)
    q, _ = np.linalg.qr(np.column_stack([a, np.eye(3)]))
    return q[:, 1:3].T


def project_along(axis, means):
    return plane_basis(axis) @ np.asarray(means, dtype=float)


@dataclass
class ClassStep:
    """Outcome of folding one class into the running estimate."""

    class_id: int
    declared_K: int
    duplicated: tuple
    perm: tuple
    distance: float
    n_candidates: int
    gram: np.ndarray  # running estimate after this class


def recover_shape(classes, full_K=None, roman_samples=1000, seed=0):
    """Sequentially combine profile classes into one Gram estimate.

    The first class must show all ``full_K`` components.  Each later class
    is expanded, scored against the stretched Roman surface of the running
    estimate and pooled in.

    Returns
    -------
    G : ndarray
        Rank-3 Gram estimate.
    steps : list of ClassStep
    labeled : list of (2, full_K) arrays
        Uncentered, expanded and relabelled member ensembles, ready for
        weight estimation; ordered as the classes and their members.
    """
    classes = [align_class(c) for c in classes]
    if full_K is None:
        full_K = max(c.declared_K for c in classes)
    first = classes[0]
    if first.declared_K != full_K:
        raise UnsupportedDeficit("the first class must show every component")
    rng = np.random.default_rng(seed)
    sums = [sum(gram(center(m.means2d)) for m in first.members)]
    counts = [len(first.members)]
    G = rank3_truncate(1.5 * sums[0] / counts[0])
    steps = [ClassStep(first.class_id, full_K, (), tuple(range(full_K)), 0.0, 1, G)]
    labeled = [[m.means2d for m in first.members]]
    for pc in classes[1:]:
        cands = expand_with_multiplicity(pc, full_K)
        locus = sample_roman_surface(factor_gram(G), roman_samples, rng)
        best, dists = select_candidate(cands, locus)
        sums.append(best.summed)
        counts.append(len(pc.members))
        G = merge_class_grams([(1.5 * s / n, n) for s, n in zip(sums, counts)])
        steps.append(ClassStep(pc.class_id, pc.declared_K, best.duplicated, best.perm,
                               float(dists.min()), len(cands), G))
        labeled.append([
            np.hstack([m.means2d, m.means2d[:, list(best.duplicated)]])[:, list(best.perm)]
            for m in pc.members
        ])
    return G, steps, labeled


def n_candidates(declared_K, full_K):
    """Number of candidates produced by :func:`expand_with_multiplicity`."""
    return len(duplication_choices(declared_K, full_K)) * math.factorial(full_K - 1)
