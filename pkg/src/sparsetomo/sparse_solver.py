"""L1-constrained least squares by least angle regression.

The path is traced as a homotopy in the penalty ``lam`` of

    0.5 * ||y - X b||^2 + lam * ||b||_1,

starting from ``lam = max_j x_j^T y`` and decreasing to zero.  On each
segment the active coefficients move along ``G_A^{-1} s_A`` and the
constraint level ``t = ||b||_1`` grows linearly, so the path is also
piecewise linear in ``t``.  A coefficient that reaches zero leaves the
active set (the lasso modification of plain LARS).

By default the solver runs in nonnegative mode: only columns whose
correlation with the residual is positive may enter.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalBreakdown

log = logging.getLogger(__name__)

GRAM_TOL = 1e-10


@dataclass(frozen=True)
class Breakpoint:
    t: float
    lam: float
    active: tuple
    coef: np.ndarray  # full-length coefficient vector


@dataclass(eq=False)
class LassoPath:
    breakpoints: list
    X: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    nonnegative: bool = True
    truncated: bool = False

    @property
    def t_values(self):
        return np.array([b.t for b in self.breakpoints])

    @property
    def t_max(self):
        return self.breakpoints[-1].t

    def __len__(self):
        return len(self.breakpoints)


@dataclass(frozen=True)
class SparseSolution:
    beta: np.ndarray
    t: float
    residual_sse: float

    @property
    def support(self):
        return np.flatnonzero(self.beta != 0)


def _design_arrays(X):
    # accept a DesignMatrix (with a cached Gram) or a bare array
    if hasattr(X, "X"):
        return np.asarray(X.X, dtype=float), X.gram
    X = np.asarray(X, dtype=float)
    return X, X.T @ X


def lars_lasso_path(X, y, max_steps=500, nonnegative=True, on_breakdown="raise"):
    """Compute the lasso regularisation path by LARS.

    Parameters
    ----------
    X : array (n, M) or DesignMatrix
    y : array (n,)
    max_steps : int
        Maximum number of events (entries or drops) to follow.
    nonnegative : bool
        Restrict the path to nonnegative coefficients.
    on_breakdown : {"raise", "truncate"}
        What to do when the active Gram submatrix becomes numerically
        singular.  ``"truncate"`` keeps the path computed so far.

    Returns
    -------
    LassoPath
        Breakpoints ordered by strictly increasing ``t``; the first is the
        empty model at ``t = 0``.
    """
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    Xa, G = _design_arrays(X)
    y = np.asarray(y, dtype=float).ravel()
    if y.size != Xa.shape[0]:
        raise ValueError(f"y has {y.size} entries, X has {Xa.shape[0]} rows")
    M = Xa.shape[1]
    c0 = Xa.T @ y
    beta = np.zeros(M)
    path = LassoPath([Breakpoint(0.0, 0.0, (), beta.copy())], Xa, y, nonnegative)

    score = c0 if nonnegative else np.abs(c0)
    j0 = int(np.argmax(score))
    lam = float(score[j0])
    scale = max(lam, np.abs(c0).max(initial=0.0))
    eps = 1e-12 * max(scale, 1e-300)
    if lam <= eps:
        return path
    path.breakpoints[0] = Breakpoint(0.0, lam, (), beta.copy())

    active = [j0]
    signs = [1.0 if c0[j0] > 0 else -1.0]
    just_dropped = None

    for _ in range(max_steps):
        A = np.array(active)
        s = np.array(signs)
        GA = G[np.ix_(A, A)]
        ev = np.linalg.eigvalsh(GA)
        if ev[0] <= GRAM_TOL * ev[-1]:
            msg = f"active Gram singular (eigenvalue ratio {ev[0] / ev[-1]:.2e}) with {A.size} columns"
            if on_breakdown == "truncate":
                log.debug("path truncated: %s", msg)
                path.truncated = True
                break
            raise NumericalBreakdown(msg)
        d = np.linalg.solve(GA, s)
        a = G[:, A] @ d
        c = c0 - G[:, A] @ beta[A]

        inactive = np.ones(M, dtype=bool)
        inactive[A] = False

        step = lam
        event, who, new_sign = "end", None, 0.0

        idx = np.flatnonzero(inactive)
        if idx.size:
            with np.errstate(divide="ignore", invalid="ignore"):
                g_pos = (lam - c[idx]) / (1.0 - a[idx])
                g_pos[(1.0 - a[idx]) <= 0] = np.inf
                cand = [(g_pos, 1.0)]
                if not nonnegative:
                    g_neg = (lam + c[idx]) / (1.0 + a[idx])
                    g_neg[(1.0 + a[idx]) <= 0] = np.inf
                    cand.append((g_neg, -1.0))
            for g, sg in cand:
                g = np.where(g < 0, np.where(g > -eps, 0.0, np.inf), g)
                if just_dropped is not None:
                    # a dropped column may come back later, but not at once
                    jd = idx == just_dropped
                    g[jd & (g <= eps)] = np.inf
                k = int(np.argmin(g))
                if g[k] < step:
                    step, event, who, new_sign = float(g[k]), "enter", int(idx[k]), sg

        with np.errstate(divide="ignore", invalid="ignore"):
            g_drop = -beta[A] / d
        g_drop[~(g_drop > eps)] = np.inf
        k = int(np.argmin(g_drop))
        if g_drop[k] < step:
            step, event, who = float(g_drop[k]), "drop", int(A[k])

        beta[A] += step * d
        lam -= step
        just_dropped = None
        if event == "enter":
            active.append(who)
            signs.append(new_sign)
        elif event == "drop":
            pos = active.index(who)
            del active[pos], signs[pos]
            beta[who] = 0.0
            just_dropped = who
        elif event == "end":
            lam = 0.0

        bp = Breakpoint(float(np.abs(beta).sum()), max(lam, 0.0), tuple(sorted(active)), beta.copy())
        if step <= eps and len(path.breakpoints) > 1:
            path.breakpoints[-1] = bp
        elif step > eps:
            path.breakpoints.append(bp)
        if event == "end" or lam <= eps:
            break
    return path


def _residual_sse(X, y, beta):
    r = y - X @ beta
    return float(r @ r)


def solve_at(path, t):
    """Lasso solution at constraint level ``t`` by interpolating the path."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    ts = path.t_values
    t_eff = min(float(t), ts[-1])
    k = int(np.searchsorted(ts, t_eff, side="right")) - 1
    if k >= len(ts) - 1:
        beta = path.breakpoints[-1].coef.copy()
    else:
        t0, t1 = ts[k], ts[k + 1]
        frac = (t_eff - t0) / (t1 - t0)
        b0, b1 = path.breakpoints[k].coef, path.breakpoints[k + 1].coef
        beta = b0 + frac * (b1 - b0)
    # interpolation can leave ~1e-17 residue where a coefficient left the set
    beta[np.abs(beta) < 1e-15] = 0.0
    return SparseSolution(beta, float(np.abs(beta).sum()), _residual_sse(path.X, path.y, beta))


def kkt_check(X, y, beta, t, nonnegative=False, tol=1e-7):
    """Check subgradient optimality of ``beta`` for ``min ||y - Xb||^2, ||b||_1 <= t``.

    Returns
    -------
    ok : bool
    violation : float
        Largest violation among feasibility, active equicorrelation and
        inactive correlation bounds.
    """
    Xa, _ = _design_arrays(X)
    y = np.asarray(y, dtype=float).ravel()
    beta = np.asarray(beta, dtype=float).ravel()
    c = Xa.T @ (y - Xa @ beta)
    l1 = float(np.abs(beta).sum())
    viol = max(0.0, l1 - t)
    if nonnegative:
        viol = max(viol, float(-beta.min(initial=0.0)))
    act = beta != 0
    if not act.any():
        # beta = 0 is optimal only when t = 0 or no correlation is positive
        if t > tol:
            viol = max(viol, float(c.max(initial=0.0) if nonnegative else np.abs(c).max(initial=0.0)))
        return viol <= tol, viol
    s = np.sign(beta[act])
    lam = 0.0 if l1 < t - tol else float(np.mean(s * c[act]))
    viol = max(viol, float(np.abs(c[act] - lam * s).max()))
    if lam < -tol:
        viol = max(viol, -lam)
    rest = c[~act]
    if rest.size:
        excess = (rest if nonnegative else np.abs(rest)) - lam
        viol = max(viol, float(excess.max()))
    return viol <= tol, viol


def calibrate_constraint(path, t_start, t_max, cluster_fn):
    """Raise the constraint from ``t_start`` while the cluster count holds.

    Walks the path segments above ``t_start``; ``cluster_fn`` maps a
    coefficient vector to a cluster count.  The returned solution sits at
    the last breakpoint before a segment whose support changes the count,
    or at ``t_max`` if no such segment occurs.
    """
    if not 0 < t_start <= t_max:
        raise ValueError("need 0 < t_start <= t_max")
    base = solve_at(path, t_start)
    n0 = cluster_fn(base.beta) if base.support.size else 0
    level = t_start
    for tb in path.t_values:
        if tb <= t_start:
            continue
        if tb >= t_max:
            break
        mid = solve_at(path, 0.5 * (level + tb))
        if cluster_fn(mid.beta) != n0:
            return solve_at(path, level)
        level = tb
    nxt = min(t_max, path.t_max)
    if nxt > level:
        mid = solve_at(path, 0.5 * (level + nxt))
        if cluster_fn(mid.beta) != n0:
            return solve_at(path, level)
    return solve_at(path, t_max)


def write_path(path, fh):
    """Dump breakpoints as ``t active_count sse`` followed by ``index:value`` pairs."""
    for bp in path.breakpoints:
        sse = _residual_sse(path.X, path.y, bp.coef)
        nz = np.flatnonzero(bp.coef)
        pairs = " ".join(f"{j}:{bp.coef[j]:.12g}" for j in nz)
        fh.write(f"{bp.t:.12g} {len(bp.active)} {sse:.12g} {pairs}".rstrip() + "\n")
