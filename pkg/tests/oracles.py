"""Independent reference computations used by the tests.

Nothing here calls into the solver or shape code under test.
"""

import itertools

import numpy as np


def lasso_oracle(X, y, t, nonnegative=False):
    """Exact minimiser of ``||y - X b||^2`` subject to ``||b||_1 <= t``.

    Enumerates every support and sign pattern; for each one solves the
    equality-constrained least squares problem (and the unconstrained one)
    and keeps the best sign-consistent feasible point.  Exponential, so only
    for a handful of columns.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    p = X.shape[1]
    best_b, best_f = np.zeros(p), float(y @ y)
    signs = (1.0,) if nonnegative else (-1.0, 1.0)
    for k in range(1, p + 1):
        for S in itertools.combinations(range(p), k):
            XS = X[:, S]
            A = XS.T @ XS
            rhs = XS.T @ y
            for s in itertools.product(signs, repeat=k):
                s = np.array(s)
                # KKT system of min ||y - XS b||^2 s.t. s.b = t
                M = np.block([[A, s[:, None]], [s[None, :], np.zeros((1, 1))]])
                sol = np.linalg.solve(M, np.append(rhs, t))
                cands = [sol[:k]]
                cands.append(np.linalg.solve(A, rhs))
                for b in cands:
                    if np.any(np.sign(b) != s) or np.abs(b).sum() > t + 1e-12:
                        continue
                    full = np.zeros(p)
                    full[list(S)] = b
                    r = y - X @ full
                    f = float(r @ r)
                    if f < best_f - 1e-15:
                        best_b, best_f = full, f
    return best_b


def haar_rotations_reference(n, rng):
    """Rotations from normalised random quaternions, a separate construction."""
    q = rng.standard_normal((n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    w, x, y, z = q.T
    return np.stack(
        [
            np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)], -1),
            np.stack([2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)], -1),
            np.stack([2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)], -1),
        ],
        axis=1,
    )


def finite_difference_jacobian(f, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        d = np.zeros_like(x)
        d[i] = h
        cols.append((f(x + d) - f(x - d)) / (2 * h))
    return np.stack(cols, axis=1)
