"""Batch command line: simulate, deconvolve, reconstruct, evaluate, render.

Every command prints a ``key=value`` report on standard output and logs
timings to standard error.  Exit codes: 0 success, 2 configuration or usage
error, 3 data error, 4 numerical failure.
"""

import argparse
import itertools
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import plotting
from .config import load_config
from .errors import ConfigError, DataError, SparseTomoError
from .geometry import center, gram
from .imaging import (
    PixelGrid,
    Profile,
    read_stack,
    simulate_stack,
    write_rotations,
    write_stack,
)
from .mixture import pyramid_fixture, read_mixture, write_mixture
from .pipeline import (
    build_classes,
    deconvolve_profiles,
    reconstruct_classes,
    reconstruct_single_class,
)
from .profile_estimation import read_estimates, write_estimates
from .reconstruction import (
    default_sigma2_grid,
    fitted_profile,
    read_gram,
    read_volume,
    render_volume,
    residual_map,
    shape_distance,
    write_gram,
    write_volume,
)
from .shape_recovery import align_gram

log = logging.getLogger("sparsetomo")


def _fmt(v):
    if isinstance(v, (list, tuple, np.ndarray)):
        return ",".join(_fmt(x) for x in np.ravel(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.6g}"
    return str(v)


def emit(report, fh=None):
    """Write ``report`` as ``key=value`` lines."""
    fh = fh or sys.stdout
    for k, v in report.items():
        fh.write(f"{k}={_fmt(v)}\n")


def _write_report(path, report):
    with open(path, "w") as fh:
        emit(report, fh)


def _outdir(cfg):
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _truth_path(cfg):
    return cfg.truth or cfg.stack + ".truth.rm3"


def _source_mixture(cfg):
    if cfg.fixture:
        if cfg.fixture != "pyramid":
            raise ConfigError(f"unknown fixture {cfg.fixture!r}")
        return pyramid_fixture()
    if cfg.mixture:
        return read_mixture(cfg.mixture)
    raise ConfigError("simulate needs 'fixture = pyramid' or a 'mixture' file")


def cmd_simulate(cfg, args):
    if cfg.N < 1:
        raise ConfigError("N must be at least 1 to simulate a stack")
    m = _source_mixture(cfg)
    grid = PixelGrid(cfg.T, cfg.L)
    profiles, rotations = simulate_stack(m, grid, cfg.N, cfg.noise_sd, cfg.seed)
    Path(cfg.stack).parent.mkdir(parents=True, exist_ok=True)
    write_stack(cfg.stack, profiles)
    write_rotations(cfg.rotations_path, rotations)
    write_mixture(_truth_path(cfg), m)
    return {"stack": cfg.stack, "rotations": cfg.rotations_path, "truth": _truth_path(cfg),
            "N": cfg.N, "T": cfg.T, "L": cfg.L, "noise_sd": cfg.noise_sd, "seed": cfg.seed}


def cmd_deconvolve(cfg, args):
    profiles = read_stack(cfg.stack)
    res = deconvolve_profiles(
        profiles, cfg.w, cfg.kernel_sigma2, cfg.expected_K, cfg.t_factor, cfg.t_max_factor,
        cfg.max_steps, nonnegative=not cfg.allow_negative, jobs=cfg.jobs,
    )
    Path(cfg.estimates).parent.mkdir(parents=True, exist_ok=True)
    write_estimates(cfg.estimates, res.estimates, res.rejected_ids)
    counts = np.bincount([e.K for e in res.estimates], minlength=1)
    report = {
        "estimates": cfg.estimates,
        "profiles": len(profiles),
        "mass_hat": res.mass,
        "kept": len(res.kept),
        "rejected": len(res.rejected),
        "empty": len(res.empty_ids),
        "k_hist": ";".join(f"{k}:{c}" for k, c in enumerate(counts) if c),
        "truncated_paths": sum("path_truncated" in e.flags for e in res.estimates),
    }
    if cfg.figures and res.kept:
        out = _outdir(cfg)
        by_id = {p.id: p for p in profiles}
        for e in res.kept[: cfg.residual_profiles]:
            plotting.profile_with_spikes(by_id[e.profile_id], out / f"profile_{e.profile_id}.png",
                                         means2d=e.means2d)
    return report


def _usable(estimates, rejected):
    return [e for e in estimates if e.profile_id not in rejected]


def cmd_reconstruct(cfg, args):
    estimates, rejected = read_estimates(cfg.estimates)
    profiles = read_stack(cfg.stack)
    grid_values = cfg.sigma2_grid or default_sigma2_grid(cfg.kernel_sigma2, cfg.sigma2_grid_points)
    provenance = {"config_digest": cfg.digest(), "estimates": cfg.estimates, "stack": cfg.stack}
    if cfg.classes:
        classes = build_classes(estimates, cfg.classes, cfg.class_align)
        fit = reconstruct_classes(profiles, classes, cfg.kernel_sigma2, cfg.full_K or None,
                                  cfg.roman_samples, cfg.roman_seed, grid_values,
                                  cfg.weight_radius_sd, provenance)
    else:
        usable = _usable(estimates, rejected)
        ks = sorted({e.K for e in usable})
        if len(ks) > 1:
            raise ConfigError(f"usable profiles have mixed component counts {ks}; "
                              "define profile classes with class.<id> keys")
        fit = reconstruct_single_class(profiles, usable, cfg.kernel_sigma2, grid_values,
                                       cfg.weight_radius_sd, provenance)
    res = fit.result
    out = _outdir(cfg)
    write_mixture(cfg.reconstruction_path, res.mixture)
    write_gram(out / "gram.txt", res.gram_estimate, res.mixture.means)
    vol = render_volume(res.mixture, cfg.volume_V, cfg.volume_extent)
    write_volume(out / "volume.vol", vol)
    eig = np.sort(np.linalg.eigvalsh(res.gram_estimate))[::-1]
    report = {
        "reconstruction": cfg.reconstruction_path,
        "K": res.mixture.K,
        "profiles_used": len(fit.profiles_used),
        "profiles_rejected": len(rejected),
        "weights": res.mixture.weights,
        "sigma2_hat": res.sigma2_hat,
        "fit_sse": res.fit_sse,
        "gram_eigenvalues": eig,
        "third_eigenvalue": fit.third_eigenvalue,
        "config_digest": cfg.digest(),
    }
    for s in fit.steps[1:]:
        report[f"class.{s.class_id}.duplicated"] = list(s.duplicated) or "none"
        report[f"class.{s.class_id}.roman_distance"] = s.distance
        report[f"class.{s.class_id}.candidates"] = s.n_candidates
    _write_report(out / "report.txt", report)
    if cfg.figures:
        plotting.gram_heatmap(res.gram_estimate, out / "gram.png", "estimated Gram matrix")
        plotting.weights_bar(res.mixture.weights, out / "weights.png")
        plotting.sigma2_curve(np.asarray(grid_values), fit.sigma2_sse, out / "sigma2.png",
                              res.sigma2_hat)
        plotting.volume_slices(vol, out / "volume.png")
    return report


def _load_shape(path):
    """An RM3 mixture or a GRAM file; returns ``(G, weights_or_None, mixture_or_None)``."""
    with open(path) as fh:
        head = fh.readline().split()
    if head and head[0] == "RM3":
        m = read_mixture(path)
        return gram(center(m.means)), m.weights, m
    if head and head[0] == "GRAM":
        return read_gram(path)[0], None, None
    raise DataError(f"{path}: neither an RM3 mixture nor a GRAM file")


def _residuals(cfg, recon, out):
    """Residual maps for the first few usable profiles, if the inputs exist."""
    if not (Path(cfg.stack).exists() and Path(cfg.estimates).exists()):
        return {}
    profiles = {p.id: p for p in read_stack(cfg.stack)}
    estimates, rejected = read_estimates(cfg.estimates)
    s2 = recon.kernel_sigma**2
    picked = [e for e in _usable(estimates, rejected)
              if e.K == recon.K and e.profile_id in profiles][: cfg.residual_profiles]
    maps, rms = [], []
    for e in picked:
        prof = profiles[e.profile_id]
        r = residual_map(prof, fitted_profile(prof, e.means2d, recon.weights, s2))
        maps.append(Profile(prof.grid, r, prof.id))
        rms.append(float(np.sqrt(np.mean(r**2))))
        if cfg.figures:
            plotting.residual_heatmap(r, prof.grid.extent, out / f"residual_{prof.id}.png",
                                      f"residual, profile {prof.id}")
    if not maps:
        return {}
    write_stack(out / "residuals.pfs", maps)
    return {"residual_profiles": [m.id for m in maps], "residual_rms": rms}


def _joint_labels(G_hat, w_hat, G, w):
    """Relabeling of the estimate that best matches both Gram and weights."""
    perms = list(itertools.permutations(range(len(w))))
    cost = [np.linalg.norm(G_hat[np.ix_(p, p)] - G) + np.abs(w_hat[list(p)] - w).sum()
            for p in perms]
    return list(perms[int(np.argmin(cost))])


def cmd_evaluate(cfg, args):
    recon_path = args.reconstruction or cfg.reconstruction_path
    truth_path = args.truth or _truth_path(cfg)
    G_hat, w_hat, m_hat = _load_shape(recon_path)
    G, w, m = _load_shape(truth_path)
    if G.shape != G_hat.shape:
        raise DataError(f"component counts differ: {G_hat.shape[0]} vs {G.shape[0]}")
    if m is None and m_hat is None:
        # two Gram files: labels are taken as given
        labeling, perm = "given", list(range(G.shape[0]))
    elif w is not None and w_hat is not None:
        labeling, perm = "joint", _joint_labels(G_hat, np.asarray(w_hat), G, w)
    else:
        labeling, perm = "procrustes", list(align_gram(G_hat, G)[1])
    aligned = G_hat[np.ix_(perm, perm)]
    report = {"reconstruction": recon_path, "truth": truth_path, "K": G.shape[0],
              "labeling": labeling, "label_perm": list(perm),
              "gram_frobenius": float(np.linalg.norm(aligned - G))}
    delta = aligned - G
    for i, j in zip(*np.triu_indices(G.shape[0])):
        report[f"gram_delta.{i + 1}{j + 1}"] = delta[i, j]
    if w is not None and w_hat is not None:
        dw = np.asarray(w_hat)[list(perm)] - w
        report["weight_delta"] = dw
        report["weight_delta_max"] = float(np.abs(dw).max())
        report["shape_distance"] = shape_distance(m, m_hat)
    out = _outdir(cfg)
    if m_hat is not None:
        report.update(_residuals(cfg, m_hat, out))
    _write_report(out / "evaluation.txt", report)
    if cfg.figures:
        plotting.gram_heatmap(aligned, out / "gram_vs_truth.png", "aligned estimate", G)
        if w is not None and w_hat is not None:
            plotting.weights_bar(np.asarray(w_hat)[list(perm)], out / "weights_vs_truth.png", w)
    return report


def write_pgm(path, image):
    """8-bit binary PGM, scaled to the image's own range; row 0 at the top."""
    a = np.asarray(image, dtype=float)
    lo, hi = a.min(), a.max()
    scaled = np.zeros_like(a) if hi <= lo else (a - lo) / (hi - lo)
    data = np.round(scaled * 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{a.shape[1]} {a.shape[0]}\n255\n".encode())
        fh.write(data.tobytes())


def cmd_render(cfg, args):
    out = _outdir(cfg)
    inputs = args.inputs or [str(Path(cfg.output_dir) / "volume.vol")]
    written = []
    for src in inputs:
        with open(src) as fh:
            head = fh.readline().strip()
        stem = Path(src).stem
        if head == "VOL1":
            vol = read_volume(src)
            for k in range(vol.V):
                # z-slice with the first coordinate horizontal and y up
                p = out / f"{stem}_z{k:03d}.pgm"
                write_pgm(p, vol.values[:, ::-1, k].T)
                written.append(p)
            if cfg.figures:
                written.append(plotting.volume_slices(vol, out / f"{stem}_slices.png"))
        elif head == "PFS1":
            for prof in read_stack(src):
                p = out / f"{stem}_{prof.id}.pgm"
                write_pgm(p, prof.pixels[:, ::-1].T)
                written.append(p)
        else:
            raise DataError(f"{src}: render expects a VOL1 volume or a PFS1 stack")
    return {"inputs": ",".join(inputs), "files_written": len(written)}


COMMANDS = {
    "simulate": cmd_simulate,
    "deconvolve": cmd_deconvolve,
    "reconstruct": cmd_reconstruct,
    "evaluate": cmd_evaluate,
    "render": cmd_render,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="key = value configuration file")
    common.add_argument("--seed", type=int, metavar="U64", help="master simulation seed")
    common.add_argument("--jobs", type=int, metavar="N", help="worker processes (0 = all cores)")
    common.add_argument("--allow-negative", action="store_true",
                        help="plain lasso instead of the nonnegative variant")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a configuration key (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="sparsetomo", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="render a noisy profile stack")
    sub.add_parser("deconvolve", parents=[common], help="per-profile sparse deconvolution")
    sub.add_parser("reconstruct", parents=[common], help="shape recovery and density assembly")
    ev = sub.add_parser("evaluate", parents=[common], help="compare a reconstruction to truth")
    ev.add_argument("--reconstruction", metavar="PATH", help="RM3 or GRAM file")
    ev.add_argument("--truth", metavar="PATH", help="RM3 or GRAM file")
    rd = sub.add_parser("render", parents=[common], help="write PGM slices and heat maps")
    rd.add_argument("inputs", nargs="*", help="VOL1 volumes or PFS1 stacks")
    return parser


def _overrides(args):
    items = list(args.set)
    if args.seed is not None:
        if args.seed < 0 or args.seed >= 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        items.append(f"seed={args.seed}")
    if args.jobs is not None:
        items.append(f"jobs={args.jobs}")
    if args.allow_negative:
        items.append("allow_negative=true")
    return items


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(name)s %(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config, _overrides(args))
        start = time.perf_counter()
        report = COMMANDS[args.command](cfg, args)
        log.info("%s finished in %.2fs", args.command, time.perf_counter() - start)
    except SparseTomoError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return exc.exit_code
    except OSError as exc:
        log.error("%s", exc)
        return DataError.exit_code
    emit(report)
    return 0


if __name__ == "__main__":
    sys.exit(main())
