"""Dense convex quadratic programs used throughout the library.

Two problem shapes occur:

* nonnegative QP / LCP ``min x'Gx - 2 b'x, x >= 0`` (equilibrium measures,
  energy-norm projections for balayage);
* box-simplex QP ``min w'Gw + 2 b'w, sum(w) = 1, 0 <= w <= u`` (the
  constrained Gauss problem).

Both are solved exactly by active-set iterations on the KKT system; the
result carries the complementarity residuals reached.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize

from .errors import ConditioningError, InfeasibleConstraintError, InputError, SolverError

log = logging.getLogger(__name__)


@dataclass
class QPResult:
    x: np.ndarray
    objective: float
    level: float | None
    lower_violation: float
    upper_violation: float
    iterations: int
    converged: bool
    method: str
    history: list = field(default_factory=list)


def cholesky(G: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor; raises :class:`ConditioningError` when not PD."""
    try:
        return linalg.cholesky(G, lower=True, check_finite=True)
    except (linalg.LinAlgError, ValueError) as exc:
        raise ConditioningError(f"matrix is not positive definite: {exc}") from exc


def _check_square(G):
    G = np.asarray(G, dtype=float)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise InputError("matrix must be square")
    if not np.all(np.isfinite(G)):
        raise InputError("matrix has non-finite entries")
    return G


# ---------------------------------------------------------------------------
# nonnegative QP
# ---------------------------------------------------------------------------

def solve_nonneg_qp(G, b, tol: float = 1e-10, max_iter: int = 200) -> QPResult:
    """Minimize ``x'Gx - 2 b'x`` over ``x >= 0`` for symmetric positive definite ``G``.

    Tries the unconstrained solution, then primal-dual active-set steps, then
    Lawson-Hanson NNLS on the Cholesky-whitened system.
    """
    G = _check_square(G)
    b = np.asarray(b, dtype=float).reshape(-1)
    N = G.shape[0]
    scale = max(float(np.max(np.abs(b))), 1e-300)
    L = cholesky(G)
    x = linalg.cho_solve((L, True), b)
    method = "direct"
    it = 0
    if np.any(x < 0):
        method = "pdas"
        active = x <= 0
        seen = set()
        ok = False
        c = 1.0 / float(np.mean(np.diag(G)))
        for it in range(1, max_iter + 1):
            key = np.packbits(active).tobytes()
            if key in seen:
                break
            seen.add(key)
            free = ~active
            x = np.zeros(N)
            if free.any():
                Lf = cholesky(G[np.ix_(free, free)])
                x[free] = linalg.cho_solve((Lf, True), b[free])
            y = G @ x - b
            new_active = (x - c * y) <= 0
            if np.array_equal(new_active, active):
                ok = True
                break
            active = new_active
        if not ok or np.any(x < -tol * max(1.0, np.abs(x).max())) or np.any((G @ x - b)[x <= 0] < -tol * scale * 10):
            method = "nnls"
            rhs = linalg.solve_triangular(L, b, lower=True)
            x, _ = optimize.nnls(L.T, rhs, maxiter=50 * N)
    x = np.maximum(x, 0.0)
    y = G @ x - b
    pos = x > 0
    lower = float(max(0.0, -(y[~pos].min() if (~pos).any() else 0.0))) / scale
    upper = float(np.max(np.abs(y[pos])) if pos.any() else 0.0) / scale
    obj = float(x @ G @ x - 2 * b @ x)
    conv = lower < 1e-6 and upper < 1e-6
    return QPResult(x, obj, None, lower, upper, it, conv, method)


# ---------------------------------------------------------------------------
# box-simplex QP
# ---------------------------------------------------------------------------

def project_capped_simplex(v, upper, total: float = 1.0) -> np.ndarray:
    """Euclidean projection onto ``{sum(w) = total, 0 <= w <= upper}`` by bisection."""
    v = np.asarray(v, dtype=float)
    u = np.broadcast_to(np.asarray(upper, dtype=float), v.shape)
    lo = float(np.min(v - np.where(np.isfinite(u), u, 0.0))) - 1.0
    hi = float(np.max(v))
    for _ in range(200):
        tau = 0.5 * (lo + hi)
        s = np.clip(v - tau, 0.0, u).sum()
        if s > total:
            lo = tau
        else:
            hi = tau
        if hi - lo <= 1e-15 * max(1.0, abs(tau)):
            break
    return np.clip(v - 0.5 * (lo + hi), 0.0, u)


def _objective(G, b, w):
    return float(w @ G @ w + 2.0 * b @ w)


def _fista(G, b, u, w0, iters: int = 300):
    lip = 2.0 * float(linalg.eigvalsh(G, subset_by_index=[G.shape[0] - 1, G.shape[0] - 1])[0]) \
        if G.shape[0] > 1 else 2.0 * float(G[0, 0])
    step = 1.0 / max(lip, 1e-300)
    w = project_capped_simplex(w0, u)
    y, t = w.copy(), 1.0
    for _ in range(iters):
        grad = 2.0 * (G @ y + b)
        wn = project_capped_simplex(y - step * grad, u)
        tn = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        y = wn + ((t - 1) / tn) * (wn - w)
        w, t = wn, tn
    return w


def _solve_free(G, b, u, lower, upper):
    """Solve the KKT system with bounds fixed; returns ``(w, mu)`` or ``None``."""
    N = G.shape[0]
    w = np.zeros(N)
    w[upper] = u[upper]
    free = ~(lower | upper)
    rest = 1.0 - w[upper].sum()
    if not free.any():
        return (w, None) if abs(rest) < 1e-12 else None
    Gf = G[np.ix_(free, free)]
    r = b[free] + G[np.ix_(free, upper)] @ w[upper]
    try:
        Lf = linalg.cho_factor(Gf, lower=True)
    except linalg.LinAlgError as exc:
        raise ConditioningError("Gauss matrix is not positive definite") from exc
    one = np.ones(free.sum())
    a1 = linalg.cho_solve(Lf, one)
    ar = linalg.cho_solve(Lf, r)
    mu = (rest + one @ ar) / (one @ a1)
    w[free] = mu * a1 - ar
    return w, float(mu)


def kkt_level(p, w, u, tol: float = 1e-12):
    """Level from KKT data: mass-weighted median of ``p`` over free atoms.

    Without free atoms, the midpoint between the largest ``p`` at the upper
    bound and the smallest ``p`` at zero.
    """
    u = np.broadcast_to(u, w.shape)
    free = (w > tol) & (w < u - tol)
    if free.any():
        pf, wf = p[free], w[free]
        order = np.lexsort((np.nonzero(free)[0], pf))
        pf, wf = pf[order], wf[order]
        c = np.cumsum(wf)
        k = int(np.searchsorted(c, 0.5 * c[-1]))
        return float(pf[min(k, len(pf) - 1)])
    at_up = w >= u - tol
    at_lo = w <= tol
    hi = float(p[at_up].max()) if at_up.any() else None
    lo = float(p[at_lo].min()) if at_lo.any() else None
    if hi is None:
        return lo
    if lo is None:
        return hi
    return 0.5 * (hi + lo)


def kkt_violations(p, w, u, level, tol: float = 1e-12):
    """Relative violations of ``p >= level`` where ``w < u`` and ``p <= level`` where ``w > 0``."""
    u = np.broadcast_to(u, w.shape)
    scale = max(abs(level), float(np.max(np.abs(p))), 1e-300)
    below = w < u - tol
    above = w > tol
    lower = float(np.max(level - p[below], initial=0.0)) / scale
    upper = float(np.max(p[above] - level, initial=0.0)) / scale
    return max(lower, 0.0), max(upper, 0.0)


def solve_box_simplex_qp(G, b=None, upper=None, x0=None, tol: float = 1e-6,
                         max_iter: int = 500, warm_iters: int = 300) -> QPResult:
    """Minimize ``w'Gw + 2 b'w`` subject to ``sum(w) = 1`` and ``0 <= w <= upper``.

    Parameters
    ----------
    G : (N, N) symmetric positive definite array
    b : (N,) array, optional
        Linear term (external field potentials); zero if omitted.
    upper : (N,) array or None
        Upper bounds; ``None`` or ``inf`` entries mean no bound.
    x0 : (N,) array, optional
        Starting point (projected onto the feasible set).
    tol : float
        Relative KKT tolerance required for ``converged``.
    """
    G = _check_square(G)
    N = G.shape[0]
    b = np.zeros(N) if b is None else np.asarray(b, dtype=float).reshape(-1)
    u = np.full(N, np.inf) if upper is None else np.asarray(upper, dtype=float).reshape(-1).copy()
    if np.any(u < 0):
        raise InputError("negative upper bounds")
    if u.sum() < 1.0 - 1e-12:
        raise InfeasibleConstraintError(f"upper bounds sum to {u.sum():.6g} < 1")
    start = np.full(N, 1.0 / N) if x0 is None else np.asarray(x0, dtype=float)
    w = _fista(G, b, u, start, warm_iters)
    history = [_objective(G, b, w)]

    # primal-dual active set
    p = G @ w + b
    mu = kkt_level(p, w, u)
    c = 1.0 / float(np.mean(np.diag(G)))
    z = w - c * (p - mu)
    lower = z <= 1e-14
    upper_set = (z >= u - 1e-14) & ~lower
    seen = set()
    method, it, done = "pdas", 0, False
    for it in range(1, max_iter + 1):
        key = np.packbits(lower).tobytes() + np.packbits(upper_set).tobytes()
        if key in seen:
            break
        seen.add(key)
        sol = _solve_free(G, b, u, lower, upper_set)
        if sol is None:
            break
        wn, mun = sol
        pn = G @ wn + b
        if mun is None:
            mun = kkt_level(pn, wn, u)
        z = wn - c * (pn - mun)
        new_lower = z <= 0.0
        new_upper = (z >= u) & ~new_lower
        if np.array_equal(new_lower, lower) and np.array_equal(new_upper, upper_set):
            w, mu, done = wn, mun, True
            break
        lower, upper_set = new_lower, new_upper
    if done:
        lo, up = kkt_violations(G @ w + b, w, u, mu)
        done = lo < tol and up < tol and np.all(w >= -1e-12) and np.all(w <= u + 1e-12)
    if not done:
        method = "active_set"
        w, mu, it2 = _primal_active_set(G, b, u, project_capped_simplex(w, u), max_iter=10 * N + 100)
        it += it2
    w = np.clip(w, 0.0, u)
    w /= w.sum()
    p = G @ w + b
    lvl = kkt_level(p, w, u)
    lo, up = kkt_violations(p, w, u, lvl)
    obj = _objective(G, b, w)
    history.append(obj)
    return QPResult(w, obj, lvl, lo, up, it, bool(lo < tol and up < tol), method, history)


def _primal_active_set(G, b, u, w, max_iter: int):
    """Classic primal active-set method from a feasible point.

    Ties between equally violated constraints are broken by the smallest index.
    """
    N = G.shape[0]
    eps = 1e-13
    at_lo = w <= eps
    at_up = (w >= u - eps) & ~at_lo
    w = np.where(at_lo, 0.0, np.where(at_up, u, w))
    w = w / w.sum() if np.all(~np.isfinite(u)) else w
    mu = 0.0
    for it in range(1, max_iter + 1):
        sol = _solve_free(G, b, u, at_lo, at_up)
        free = ~(at_lo | at_up)
        if sol is None:
            # drop the bound with the most favourable multiplier
            p = G @ w + b
            mu = kkt_level(p, w, u)
            cand = np.where(at_lo, mu - p, np.where(at_up, p - mu, -np.inf))
            j = int(np.argmax(cand))
            at_lo[j] = at_up[j] = False
            continue
        target, mu_t = sol
        step = target - w
        if np.max(np.abs(step)) <= 1e-14:
            p = G @ w + b
            mu = mu_t if mu_t is not None else kkt_level(p, w, u)
            mult = np.where(at_lo, p - mu, np.where(at_up, mu - p, 0.0))
            j = int(np.argmin(mult))
            if mult[j] >= -1e-12 * max(1.0, abs(mu)):
                return w, mu, it
            at_lo[j] = at_up[j] = False
            continue
        # ratio test over free atoms
        alpha, block, to_upper = 1.0, -1, False
        for i in np.nonzero(free)[0]:
            if step[i] < 0 and w[i] + step[i] < 0:
                a = -w[i] / step[i]
                if a < alpha:
                    alpha, block, to_upper = a, i, False
            elif step[i] > 0 and w[i] + step[i] > u[i]:
                a = (u[i] - w[i]) / step[i]
                if a < alpha:
                    alpha, block, to_upper = a, i, True
        w = w + alpha * step
        if block >= 0:
            if to_upper:
                at_up[block] = True
                w[block] = u[block]
            else:
                at_lo[block] = True
                w[block] = 0.0
    raise SolverError("active-set iterations exhausted", data={"iterations": max_iter})
