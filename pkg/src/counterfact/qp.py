"""Convex QP over the probability simplex.

Solves ``min 0.5 w'Hw + c'w  s.t.  sum(w) = 1, w >= 0`` with a Mehrotra
predictor-corrector primal-dual interior point method, then polishes the
result by solving the equality-constrained problem on the detected support.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import SolverNonConvergence

KKT_TOL = 1e-8
MAX_ITER = 200
RIDGE = 1e-12


def simplex_qp(H, c, tol: float = KKT_TOL, max_iter: int = MAX_ITER, polish: bool = True):
    """Minimise ``0.5 w'Hw + c'w`` over the simplex. Returns ``w``.

    ``H`` must be symmetric positive semi-definite. Residuals are measured on
    a copy of the problem rescaled so that ``max|H_ii| = 1``.
    """
    H = np.asarray(H, dtype=float)
    c = np.asarray(c, dtype=float)
    n = c.shape[0]
    if n == 1:
        return np.ones(1)

    scale = max(np.max(np.abs(np.diag(H))), np.max(np.abs(c)), 1e-300)
    H = H / scale
    c = c / scale
    H = 0.5 * (H + H.T)

    w = np.full(n, 1.0 / n)
    s = np.ones(n)
    y = float(np.min(H @ w + c)) - 1.0
    e = np.ones(n)
    K = np.zeros((n + 1, n + 1))
    K[:n, n] = -1.0
    K[n, :n] = 1.0

    res = np.inf
    for it in range(1, max_iter + 1):
        r_d = H @ w + c - y - s
        r_p = w.sum() - 1.0
        mu = w @ s / n
        res = max(np.max(np.abs(r_d)), abs(r_p), mu)
        # complementarity is driven well below the KKT tolerance so that the
        # support can be read off reliably for polishing
        if res < tol and mu < 1e-4 * tol:
            break

        K[:n, :n] = H + np.diag(s / w)
        try:
            lu = _Factor(K)
        except np.linalg.LinAlgError:
            raise SolverNonConvergence(it, res) from None

        # predictor
        r_c = w * s
        dw, dy, ds = _newton(lu, w, s, r_d, r_p, r_c, n)
        a_p = _max_step(w, dw)
        a_d = _max_step(s, ds)
        mu_aff = (w + a_p * dw) @ (s + a_d * ds) / n
        sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0

        # corrector
        r_c = w * s + dw * ds - sigma * mu * e
        dw, dy, ds = _newton(lu, w, s, r_d, r_p, r_c, n)
        a_p = min(1.0, 0.99 * _max_step(w, dw, cap=np.inf))
        a_d = min(1.0, 0.99 * _max_step(s, ds, cap=np.inf))
        w = w + a_p * dw
        y = y + a_d * dy
        s = s + a_d * ds
    else:
        if res > np.sqrt(tol):
            raise SolverNonConvergence(max_iter, res)

    support = w > s
    w = np.clip(w, 0.0, None)
    w /= w.sum()
    if polish and support.any():
        w, ok = _polish(H, c, w, support, tol)
        if not ok:
            w = _refine(H, c, w)
    return w


def _refine(H, c, w):
    # degenerate problems (zero multipliers on inactive bounds) defeat the
    # complementarity test; finish with active-set steps from the IPM point
    start = np.where(w > 1e-6 * w.max(), w, 0.0)
    try:
        cand = active_set_qp(H, c, w0=start)
    except (np.linalg.LinAlgError, SolverNonConvergence):
        return w
    obj = lambda v: 0.5 * v @ H @ v + c @ v
    return cand if obj(cand) <= obj(w) + 1e-15 * (1.0 + abs(obj(w))) else w


class _Factor:
    def __init__(self, K):
        self._lu = scipy.linalg.lu_factor(K, check_finite=False)
        self._solve = scipy.linalg.lu_solve

    def solve(self, b):
        return self._solve(self._lu, b, check_finite=False)


def _newton(lu, w, s, r_d, r_p, r_c, n):
    # reduced system: (H + S/W) dw - 1 dy = -r_d - r_c/w ;  1'dw = -r_p
    rhs = np.empty(n + 1)
    rhs[:n] = -r_d - r_c / w
    rhs[n] = -r_p
    sol = lu.solve(rhs)
    dw, dy = sol[:n], sol[n]
    ds = (-r_c - s * dw) / w
    return dw, dy, ds


def _max_step(x, dx, cap=1.0):
    neg = dx < 0
    if not np.any(neg):
        return cap
    return min(cap, float(np.min(-x[neg] / dx[neg])))


def _polish(H, c, w, support, tol):
    """Re-solve on the support; keep the result only if it is KKT-optimal.

    The support is read off strict complementarity (primal > dual slack).
    """
    idx = np.flatnonzero(support)
    m = idx.size
    K = np.zeros((m + 1, m + 1))
    K[:m, :m] = H[np.ix_(idx, idx)]
    K[:m, m] = -1.0
    K[m, :m] = 1.0
    rhs = np.concatenate([-c[idx], [1.0]])
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        return w, False
    ws, y = sol[:m], sol[m]
    if np.any(ws < 0) or not np.all(np.isfinite(sol)):
        return w, False
    cand = np.zeros_like(w)
    cand[idx] = ws
    grad = H @ cand + c - y
    # multipliers of inactive bounds must be non-negative
    if np.any(grad[~support] < -np.sqrt(tol)):
        return w, False
    obj = lambda v: 0.5 * v @ H @ v + c @ v
    if obj(cand) > obj(w) + 1e-14 * (1.0 + abs(obj(w))):
        return w, False
    return cand / cand.sum(), True


def active_set_qp(H, c, w0=None, tol: float = 1e-12, max_iter: int | None = None):
    """Primal active-set solve of the same simplex QP, warm-startable.

    ``H`` must be positive definite. Starting from a feasible ``w0`` (for
    instance the solution for a nearby ``H``) this usually needs only a
    handful of small linear solves, which makes it the workhorse inside
    outer searches. Returns ``w``.
    """
    H = np.asarray(H, dtype=float)
    c = np.asarray(c, dtype=float)
    n = c.shape[0]
    if n == 1:
        return np.ones(1)
    if w0 is None:
        w = np.zeros(n)
        w[int(np.argmin(0.5 * np.diag(H) + c))] = 1.0
    else:
        w = np.clip(np.asarray(w0, dtype=float), 0.0, None)
        w /= w.sum()
    free = w > 0
    max_iter = max_iter or 10 * n + 50
    for it in range(max_iter):
        idx = np.flatnonzero(free)
        m = idx.size
        K = np.empty((m + 1, m + 1))
        K[:m, :m] = H[np.ix_(idx, idx)]
        K[:m, m] = -1.0
        K[m, :m] = 1.0
        K[m, m] = 0.0
        sol = np.linalg.solve(K, np.concatenate([-c[idx], [1.0]]))
        target, y = sol[:m], sol[m]
        p = target - w[idx]
        if np.max(np.abs(p)) <= 1e-14:
            g = H @ w + c - y
            g[free] = np.inf
            j = int(np.argmin(g))
            if g[j] >= -tol * max(1.0, abs(y)):
                return w
            free[j] = True
            continue
        neg = p < 0
        alpha, block = 1.0, -1
        if np.any(neg):
            ratios = -w[idx][neg] / p[neg]
            k = int(np.argmin(ratios))
            if ratios[k] < 1.0:
                alpha, block = float(ratios[k]), int(idx[np.flatnonzero(neg)[k]])
        w[idx] += alpha * p
        if block >= 0:
            w[block] = 0.0
            free[block] = False
        w = np.clip(w, 0.0, None)
    raise SolverNonConvergence(max_iter, float("nan"))
