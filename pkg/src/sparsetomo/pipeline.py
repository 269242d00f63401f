"""End-to-end workflows built from the module-level operations.

Nothing in here looks at true rotations: reconstruction sees profiles and
the estimates derived from them only.
"""

import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from .errors import ConfigError, DataError
from .imaging import build_design_matrix, candidate_mask, estimate_mass
from .profile_estimation import estimate_profile, reject_outlier_profiles
from .reconstruction import assemble, default_sigma2_grid, sigma2_grid_search
from .shape_recovery import (
    ProfileClass,
    average_gram,
    rank3_truncate,
    recover_shape,
    third_eigenvalue,
)
from .sparse_solver import lars_lasso_path

log = logging.getLogger(__name__)


@dataclass
class DeconvolutionResult:
    estimates: list  # ProfileEstimate per usable profile
    kept: list
    rejected: list
    empty_ids: list
    mass: float
    seconds: float = 0.0

    @property
    def rejected_ids(self):
        return {e.profile_id for e in self.rejected} | set(self.empty_ids)


_WORKER = {}


def _init_worker(design, mass, kwargs):
    _WORKER.update(design=design, mass=mass, kwargs=kwargs)


def _path_fn(max_steps, nonnegative, design, y):
    return lars_lasso_path(design, y, max_steps, nonnegative=nonnegative, on_breakdown="truncate")


def _estimate_one(profile):
    w = _WORKER
    kw = w["kwargs"]
    return estimate_profile(
        profile,
        w["design"],
        partial(_path_fn, kw["max_steps"], kw["nonnegative"]),
        w["mass"],
        kw["t_factor"],
        kw["t_max_factor"],
    )


def resolve_jobs(jobs):
    return jobs if jobs and jobs > 0 else (os.cpu_count() or 1)


def deconvolve_profiles(profiles, w, kernel_sigma2, expected_K, t_factor=0.95,
                        t_max_factor=1.0, max_steps=2000, nonnegative=True, jobs=1,
                        design=None):
    """Sparse deconvolution, clustering and labelling for a whole stack.

    Profiles with an oversized cluster or a component count other than
    ``expected_K`` are rejected, as are those with a left-outlying
    smallest weight.
    """
    if not profiles:
        raise DataError("no profiles to deconvolve")
    start = time.perf_counter()
    grid = profiles[0].grid
    if design is None:
        design = build_design_matrix(grid, candidate_mask(grid, w), kernel_sigma2)
    design.gram  # build once before any fan-out
    mass = estimate_mass(profiles)
    kwargs = dict(max_steps=max_steps, nonnegative=nonnegative, t_factor=t_factor,
                  t_max_factor=t_max_factor)
    jobs = resolve_jobs(jobs)
    if mass <= 0:
        results = [None] * len(profiles)
    elif jobs > 1:
        with ProcessPoolExecutor(jobs, initializer=_init_worker,
                                 initargs=(design, mass, kwargs)) as pool:
            results = list(pool.map(_estimate_one, profiles, chunksize=8))
    else:
        _init_worker(design, mass, kwargs)
        results = [_estimate_one(p) for p in profiles]
    estimates = [r for r in results if r is not None]
    empty = [p.id for p, r in zip(profiles, results) if r is None]
    clean = [e for e in estimates if "oversized_cluster" not in e.flags]
    kept, rejected = reject_outlier_profiles(clean, expected_K)
    rejected += [e for e in estimates if "oversized_cluster" in e.flags]
    seconds = time.perf_counter() - start
    log.info("deconvolved %d profiles in %.1fs: %d kept, %d rejected, %d empty",
             len(profiles), seconds, len(kept), len(rejected), len(empty))
    return DeconvolutionResult(estimates, kept, rejected, empty, mass, seconds)


@dataclass
class ShapeFit:
    result: object  # ReconstructionResult
    profiles_used: list
    labeled_means: list
    sigma2_sse: np.ndarray
    steps: list = field(default_factory=list)
    third_eigenvalue: float = 0.0


def _fit_weights(profiles, labeled_means, kernel_sigma2, sigma2_grid, radius_sd):
    grid_values = sigma2_grid if len(sigma2_grid) else default_sigma2_grid(kernel_sigma2)
    return sigma2_grid_search(profiles, labeled_means, grid_values, radius_sd)


def reconstruct_single_class(profiles, kept, kernel_sigma2, sigma2_grid=(), radius_sd=3.0,
                             provenance=None):
    """Hybrid estimate when every usable profile is labelled by weight order."""
    if not kept:
        raise DataError("no usable profiles to reconstruct from")
    by_id = {p.id: p for p in profiles}
    G = rank3_truncate(average_gram(kept, center_means=True))
    used = [by_id[e.profile_id] for e in kept]
    means = [e.means2d for e in kept]
    s2, weights, sse = _fit_weights(used, means, kernel_sigma2, sigma2_grid, radius_sd)
    res = assemble(G, weights, s2, float(sse.min()), provenance)
    return ShapeFit(res, [p.id for p in used], means, sse, [], third_eigenvalue(G))


def build_classes(estimates, classes, class_align):
    by_id = {e.profile_id: e for e in estimates}
    out = []
    for cid in sorted(classes):
        ids = classes[cid]
        missing = [i for i in ids if i not in by_id]
        if missing:
            raise ConfigError(f"class {cid} lists profiles without estimates: {missing}")
        out.append(ProfileClass(cid, [by_id[i] for i in ids], 0, class_align.get(cid, "procrustes")))
    return out


def reconstruct_classes(profiles, classes, kernel_sigma2, full_K=None, roman_samples=1000,
                        roman_seed=0, sigma2_grid=(), radius_sd=3.0, provenance=None):
    """Hybrid estimate from user-defined profile classes with merged components."""
    G, steps, labeled = recover_shape(classes, full_K, roman_samples, roman_seed)
    by_id = {p.id: p for p in profiles}
    used, means = [], []
    for pc, ens in zip(classes, labeled):
        for m, e in zip(pc.members, ens):
            used.append(by_id[m.profile_id])
            means.append(e)
    s2, weights, sse = _fit_weights(used, means, kernel_sigma2, sigma2_grid, radius_sd)
    res = assemble(G, weights, s2, float(sse.min()), provenance)
    return ShapeFit(res, [p.id for p in used], means, sse, steps, third_eigenvalue(G))

