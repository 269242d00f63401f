import itertools
import math

import numpy as np
import pytest

from sparsetomo.errors import DimensionMismatch, NotOrthogonal, TooManyComponents, UnsupportedDeficit
from sparsetomo.geometry import (
    center,
    factor_gram,
    gram,
    project,
    projected_gram_at,
    sample_haar_rotation,
    sample_roman_surface,
)
from sparsetomo.mixture import pyramid_fixture
from sparsetomo.profile_estimation import ProfileEstimate
from sparsetomo.shape_recovery import (
    LabeledCandidate,
    ProfileClass,
    align_class,
    align_gram,
    average_gram,
    duplication_choices,
    expand_with_multiplicity,
    labeling_distances,
    merge_class_grams,
    n_candidates,
    plane_basis,
    procrustes_label,
    project_along,
    rank3_truncate,
    recover_shape,
    select_candidate,
    third_eigenvalue,
    triad_gram,
)


def pe(means, weights=None, pid=0):
    means = np.asarray(means, dtype=float)
    if weights is None:
        weights = np.linspace(0.4, 0.1, means.shape[1])
    return ProfileEstimate(means, weights, pid)


# -- averaging and truncation ------------------------------------------------

def test_average_gram_examples(rng):
    M = np.array([[1.0, 0.0, 0.5], [0.0, 1.0, 0.5]])
    np.testing.assert_allclose(average_gram([M]), 1.5 * M.T @ M)
    np.testing.assert_array_equal(average_gram([np.zeros((2, 3))] * 4), np.zeros((3, 3)))
    with pytest.raises(DimensionMismatch):
        average_gram([np.zeros((2, 3)), np.zeros((2, 4))])
    ens = [rng.normal(size=(2, 4)) for _ in range(5)]
    manual = 1.5 * sum(e.T @ e for e in ens) / 5
    np.testing.assert_allclose(average_gram([pe(e) for e in ens]), manual)


def test_average_gram_is_o2_invariant(rng):
    ens = [rng.normal(size=(2, 5)) for _ in range(6)]
    th = rng.uniform(0, 2 * np.pi)
    Q = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]]) @ np.diag([1, -1])
    np.testing.assert_allclose(average_gram([Q @ e for e in ens]), average_gram(ens), atol=1e-12)


def test_average_gram_recovers_shape_in_expectation():
    V = center(pyramid_fixture().means)
    rng = np.random.default_rng(4)
    projs = [project(sample_haar_rotation(rng), V) for _ in range(4000)]
    np.testing.assert_allclose(average_gram(projs), gram(V), atol=0.03)


def test_rank3_truncate_examples(rng):
    A = gram(rng.normal(size=(3, 5)))
    np.testing.assert_allclose(rank3_truncate(A), A, atol=1e-10)
    np.testing.assert_allclose(rank3_truncate(np.diag([4.0, 3, 2, 1])), np.diag([4.0, 3, 2, 0]),
                               atol=1e-12)


def test_rank3_truncate_is_best_rank3_approximation(rng):
    grams = [gram(rng.normal(size=(2, 6))) for _ in range(7)]
    A = sum(grams) / 7
    T = rank3_truncate(A)
    s = np.linalg.svd(A, compute_uv=False)
    assert np.linalg.matrix_rank(T, tol=1e-9) == 3
    # Eckart-Young: the residual is exactly the discarded spectrum
    assert np.linalg.norm(A - T) == pytest.approx(np.sqrt(np.sum(s[3:] ** 2)), rel=1e-10)
    for _ in range(20):
        B = gram(rng.normal(size=(3, 6)))
        assert np.linalg.norm(A - T) <= np.linalg.norm(A - B) + 1e-12


def test_truncation_can_move_away_from_a_rank3_target():
    # truncation is closest to its input, not to every rank-3 matrix
    A = np.diag([1.0, 1.0, 1.0, 0.9])
    B = np.diag([0.0, 0.0, 0.0, 1.0])
    assert np.linalg.norm(rank3_truncate(A) - B) > np.linalg.norm(A - B)


def test_rank3_truncate_clamps_to_psd():
    A = np.diag([2.0, -1.5, 0.5, 0.1])
    T = rank3_truncate(A)
    assert np.linalg.eigvalsh(T).min() >= -1e-12
    np.testing.assert_allclose(T, T.T)


def test_average_of_rank2_grams_has_positive_third_eigenvalue(rng):
    V = rng.normal(size=(3, 5))
    for n in (2, 3, 10):
        G = average_gram([project(sample_haar_rotation(rng), V) for _ in range(n)])
        assert third_eigenvalue(G) > 1e-6
    assert third_eigenvalue(np.eye(2)) == 0.0


# -- labelling ---------------------------------------------------------------

def test_procrustes_label_examples(rng):
    ref = np.diag([1.0, 2.0])
    cand = np.array([[np.sqrt(2), 0.0], [0.0, 1.0]])  # Gram diag(2, 1)
    perm, d = procrustes_label(cand, ref)
    assert perm.tolist() == [1, 0] and d == pytest.approx(0.0, abs=1e-12)
    means = rng.normal(size=(2, 5))
    R = gram(means)
    reflected = np.diag([1.0, -1.0]) @ means
    perm, d = procrustes_label(reflected, R)
    assert perm.tolist() == list(range(5)) and d < 1e-12
    perm, d = procrustes_label(pe(means), R)
    assert perm.tolist() == list(range(5)) and d == 0.0


def test_labeling_distances_exhaustive_and_sorted(rng):
    means = rng.normal(size=(2, 4))
    R = gram(rng.normal(size=(2, 4)))
    listing = labeling_distances(means, R)
    assert len(listing) == 24
    ds = [d for d, _ in listing]
    assert ds == sorted(ds)
    brute = min(np.linalg.norm(gram(means[:, list(p)]) - R)
                for p in itertools.permutations(range(4)))
    assert ds[0] == pytest.approx(brute, abs=1e-15)


def test_labeling_limits():
    with pytest.raises(TooManyComponents):
        procrustes_label(np.zeros((2, 9)), np.zeros((9, 9)))
    with pytest.raises(DimensionMismatch):
        procrustes_label(np.zeros((2, 3)), np.zeros((4, 4)))


def test_align_gram_undoes_relabeling(rng):
    G = gram(rng.normal(size=(3, 5)))
    p = [2, 0, 4, 1, 3]
    Gp, perm, d = align_gram(G[np.ix_(p, p)], G)
    np.testing.assert_allclose(Gp, G)
    assert d == pytest.approx(0.0, abs=1e-12)


def test_align_class_relabels_members_to_reference(rng):
    V = rng.normal(size=(3, 4))
    U = sample_haar_rotation(rng)
    ref = project(U, V)
    members = [pe(ref, pid=0)]
    for k in range(1, 4):
        th = rng.uniform(0, 2 * np.pi)
        Q = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
        p = rng.permutation(4)
        members.append(pe((Q @ ref)[:, p], pid=k))
    aligned = align_class(ProfileClass(1, members))
    for m in aligned.members:
        np.testing.assert_allclose(gram(center(m.means2d)), gram(center(ref)), atol=1e-10)
    same = align_class(ProfileClass(1, members, align="weights"))
    assert same.members[1] is members[1]


def test_profile_class_validation():
    with pytest.raises(DimensionMismatch):
        ProfileClass(1, [pe(np.zeros((2, 3))), pe(np.zeros((2, 4)))])
    with pytest.raises(ValueError):
        ProfileClass(1, [])
    with pytest.raises(ValueError):
        ProfileClass(1, [pe(np.zeros((2, 3)))], align="magic")


# -- multiplicity ------------------------------------------------------------

def test_candidate_counts():
    assert len(duplication_choices(5, 6)) == 5
    assert len(duplication_choices(4, 6)) == 10
    assert duplication_choices(6, 6) == [()]
    assert n_candidates(5, 6) == 5 * 120
    assert n_candidates(4, 6) == 10 * 120
    assert n_candidates(6, 6) == math.factorial(5)
    with pytest.raises(UnsupportedDeficit):
        duplication_choices(3, 6)


def test_expand_with_multiplicity_structure(rng):
    members = [pe(rng.normal(size=(2, 5)), pid=i) for i in range(4)]
    pc = ProfileClass(2, members)
    cands = expand_with_multiplicity(pc, 6)
    assert len(cands) == 600
    assert all(c.perm[0] == 0 for c in cands)
    assert len({(c.duplicated, c.perm) for c in cands}) == 600
    c = cands[0]
    expected = sum(gram(center(np.hstack([m.means2d, m.means2d[:, [0]]]))) for m in members) / 4
    np.testing.assert_allclose(c.projected, expected[np.ix_(c.perm, c.perm)])
    np.testing.assert_allclose(c.gram, 1.5 * c.projected)
    np.testing.assert_allclose(c.summed, 4 * c.projected)
    assert len(expand_with_multiplicity(ProfileClass(1, members[:1]), 5)) == 24
    with pytest.raises(UnsupportedDeficit):
        expand_with_multiplicity(pc, 8)


def test_select_candidate_examples(rng):
    V = factor_gram(gram(center(rng.normal(size=(3, 5)))))
    locus = sample_roman_surface(V, 1000, 0)
    e = rng.normal(size=3)
    e /= np.linalg.norm(e)
    truth = projected_gram_at(V, e)
    decoys = [LabeledCandidate(truth[np.ix_(p, p)], p, ()) for p in ([0, 2, 1, 3, 4], [0, 4, 3, 2, 1])]
    cands = decoys[:1] + [LabeledCandidate(truth, (0, 1, 2, 3, 4), ())] + decoys[1:]
    best, d = select_candidate(cands, locus)
    assert best is cands[1]
    assert d[1] < 0.05 * np.linalg.norm(V.T @ V)
    only, _ = select_candidate(cands[:1], locus)
    assert only is cands[0]
    twin = [LabeledCandidate(truth, (0, 1, 2, 3, 4), (1,)), LabeledCandidate(truth, (0, 1, 2, 3, 4), (2,))]
    assert select_candidate(twin, locus)[0] is twin[0]
    with pytest.raises(ValueError):
        select_candidate([], locus)


def test_merge_class_grams_examples(rng):
    a = [rng.normal(size=(2, 4)) for _ in range(4)]
    b = [rng.normal(size=(2, 4)) for _ in range(4)]
    Ga, Gb = average_gram(a), average_gram(b)
    np.testing.assert_allclose(merge_class_grams([(Ga, 4)]), rank3_truncate(Ga))
    pooled = 3 / (2 * 8) * sum(gram(x) for x in a + b)
    np.testing.assert_allclose(merge_class_grams([(Ga, 4), (Gb, 4)]), rank3_truncate(pooled),
                               atol=1e-12)
    np.testing.assert_allclose(merge_class_grams([(Ga, 4), (Ga, 4)]), merge_class_grams([(Ga, 4)]),
                               atol=1e-12)
    with pytest.raises(DimensionMismatch):
        merge_class_grams([(Ga, 4), (np.eye(3), 2)])


# -- orthogonal triads ---------------------------------------------------------

def test_triad_gram_examples():
    mu = np.diag([1.0, 2.0, 3.0])
    axes = np.eye(3)
    projs = [project_along(a, mu) for a in axes]
    np.testing.assert_allclose(triad_gram(projs, axes), gram(mu), atol=1e-12)
    one = np.array([[1.0], [0.0], [0.0]])
    G1 = triad_gram([project_along(a, one) for a in axes], axes)
    assert G1[0, 0] == pytest.approx(1.0, abs=1e-15)
    V = pyramid_fixture().means
    np.testing.assert_allclose(triad_gram([project_along(a, V) for a in axes], axes), gram(V),
                               atol=1e-12)


def test_triad_gram_random_frames(rng):
    for _ in range(20):
        V = rng.normal(size=(3, int(rng.integers(1, 7))))
        R = sample_haar_rotation(rng)
        projs = [project_along(a, V) for a in R]
        assert np.linalg.norm(triad_gram(projs, R) - gram(V)) < 1e-12


def test_triad_gram_errors():
    with pytest.raises(NotOrthogonal):
        triad_gram([np.zeros((2, 1))] * 3, np.array([[1, 0, 0], [1, 1, 0], [0, 0, 1.0]]))
    with pytest.raises(DimensionMismatch):
        triad_gram([np.zeros((2, 1))] * 2, np.eye(3))


def test_plane_basis_is_orthonormal_complement(rng):
    a = rng.normal(size=3)
    B = plane_basis(a)
    np.testing.assert_allclose(B @ B.T, np.eye(2), atol=1e-12)
    np.testing.assert_allclose(B @ a, 0, atol=1e-12)


# -- sequential recovery --------------------------------------------------------

def test_recover_shape_single_class(rng):
    V = rng.normal(size=(3, 4))
    members = [pe(project(sample_haar_rotation(rng), V), pid=i) for i in range(30)]
    pc = ProfileClass(1, members, align="weights")
    G, steps, labeled = recover_shape([pc])
    np.testing.assert_allclose(G, rank3_truncate(average_gram(members, center_means=True)))
    assert len(steps) == 1 and len(labeled[0]) == 30


def test_recover_shape_requires_complete_first_class(rng):
    a = ProfileClass(1, [pe(rng.normal(size=(2, 4)))])
    b = ProfileClass(2, [pe(rng.normal(size=(2, 5)))])
    with pytest.raises(UnsupportedDeficit):
        recover_shape([a, b])
