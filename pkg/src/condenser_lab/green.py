"""alpha-Green kernels of balls, half-spaces and ball exteriors, and Green matrices.

For these domains the Green kernel has the classical closed form

    g(x, y) = kappa(x, y) * I_z(alpha/2, (n - alpha)/2),
    z = P / (P + R^2 |x - y|^2),

with ``P = |R^2 - |x|^2| |R^2 - |y|^2|`` (ball and exterior, centred
coordinates) or ``P = 4 d_x d_y``, ``R = 1`` (half-space, ``d`` the distance
to the boundary plane).  The image part ``h = kappa - g`` is the potential
of the swept Dirac; it is evaluated through the complementary incomplete
beta function to avoid cancellation.  Other domains go through numeric
balayage (:class:`condenser_lab.balayage.Sweeper`).
"""
from __future__ import annotations

import numpy as np
from scipy import special
from scipy.spatial.distance import cdist

from .errors import DomainError, InputError
from .kernels import (DiagonalPolicy, KernelSpec, assemble_kernel_matrix, ball_self_energy_constant,
                      kernel_from_distance, self_terms)

# nodes of a uniform unit-ball average used for near-boundary diagonal cells
_CELL_NODES: dict = {}


def _ab(spec: KernelSpec):
    return spec.alpha / 2.0, (spec.n - spec.alpha) / 2.0


def _boundary_factor(D, X) -> np.ndarray:
    """``|R^2 - |x|^2|`` (balls) or ``2 d_x`` (half-space)."""
    if D.kind in ("ball", "ball_exterior"):
        r2 = np.sum((X - D.center) ** 2, axis=1)
        return np.abs(D.radius**2 - r2)
    if D.kind == "half_space":
        return 2.0 * np.abs(X @ D.normal - D.offset)
    raise InputError(f"no closed-form Green kernel for {D.kind}")


def _R2(D) -> float:
    return D.radius**2 if D.kind in ("ball", "ball_exterior") else 1.0


def image_closed(spec: KernelSpec, D, X, Y) -> np.ndarray:
    """Matrix of ``h(x_i, y_j) = kappa(x_i, y_j) - g(x_i, y_j)`` (closed form).

    Points of ``Y`` in ``F`` give ``h = kappa`` (a Dirac on ``F`` is its own
    sweep).  Coincident pairs get the continuous diagonal limit.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    a, b = _ab(spec)
    px = _boundary_factor(D, X)
    py = _boundary_factor(D, Y)
    d2 = cdist(X, Y, "sqeuclidean")
    P = px[:, None] * py[None, :]
    S = P + _R2(D) * d2
    with np.errstate(divide="ignore", invalid="ignore"):
        one_minus_z = np.where(S > 0, _R2(D) * d2 / S, 1.0)
        H = d2 ** (spec.exponent / 2.0) * special.betainc(b, a, one_minus_z)
        diag_lim = (np.sqrt(_R2(D)) / px[:, None]) ** (spec.n - spec.alpha) / (b * special.beta(a, b))
    H = np.where(d2 == 0.0, np.broadcast_to(diag_lim, H.shape), H)
    inF = ~D.in_D(Y)
    if inF.any():
        with np.errstate(divide="ignore"):
            H[:, inF] = d2[:, inF] ** (spec.exponent / 2.0)
    return H


def green_closed(spec: KernelSpec, D, X, Y) -> np.ndarray:
    """Matrix of ``g(x_i, y_j)``; ``inf`` on coincident pairs."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    a, b = _ab(spec)
    px = _boundary_factor(D, X)
    py = _boundary_factor(D, Y)
    d2 = cdist(X, Y, "sqeuclidean")
    P = px[:, None] * py[None, :]
    S = P + _R2(D) * d2
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(S > 0, P / S, 1.0)
        G = d2 ** (spec.exponent / 2.0) * special.betainc(a, b, z)
    return np.where(d2 == 0.0, np.inf, G)


def _cell_nodes(n: int) -> np.ndarray:
    """Equal-weight nodes of the uniform measure on the unit ball in ``R^n``."""
    if n not in _CELL_NODES:
        from .sampling import sphere_directions

        # 3 radial Gauss layers for the weight r^(n-1) dr on (0, 1)
        x, w = special.roots_jacobi(3, 0.0, n - 1.0)
        r = 0.5 * (x + 1.0)
        w = w / w.sum()
        u = sphere_directions(32, n, seed=12345)
        pts = np.vstack([ri * u for ri in r])
        wts = np.concatenate([np.full(len(u), wi / len(u)) for wi in w])
        _CELL_NODES[n] = (pts, wts)
    return _CELL_NODES[n]


def image_diagonal(spec: KernelSpec, D, X, h) -> np.ndarray:
    """Cell-averaged image term for each atom's equivalent ball ``B(x, h)``.

    Cells well inside ``D`` use the pointwise diagonal limit, cells near the
    boundary the average of the image part over ``y in B(x, h)`` (``kappa``
    for nodes in ``F``).  A cell that reaches into ``F`` gets the image term
    that leaves ``kappa_ii * r`` as Green self term, ``r`` being the ratio of
    node-pair averages of ``g`` (zero on ``F``) and ``kappa``; the one-point
    average would make that self term negative.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    h = np.broadcast_to(np.asarray(h, dtype=float), (X.shape[0],))
    dist = np.abs(D.signed_distance(X))
    out = np.empty(X.shape[0])
    far = h < 0.1 * dist
    if far.any():
        out[far] = _diag_limit(spec, D, X[far])
    near = np.nonzero(~far)[0]
    if near.size:
        nodes, wts = _cell_nodes(spec.n)
        W = np.outer(wts, wts)
        np.fill_diagonal(W, 0.0)
        C = ball_self_energy_constant(spec.alpha, spec.n)
        for i in near:
            Y = X[i] + h[i] * nodes
            if h[i] < dist[i]:
                out[i] = float(image_closed(spec, D, X[i:i + 1], Y)[0] @ wts)
                continue
            inD = D.in_D(Y)
            G = green_closed(spec, D, Y[inD], Y[inD])
            G[~np.isfinite(G)] = 0.0
            K = kernel_from_distance(spec, cdist(Y, Y))
            K[~np.isfinite(K)] = 0.0
            r = float((W[np.ix_(inD, inD)] * G).sum() / (W * K).sum())
            out[i] = C * h[i] ** spec.exponent * (1.0 - r)
    return out


def _diag_limit(spec, D, X):
    a, b = _ab(spec)
    px = _boundary_factor(D, X)
    return (np.sqrt(_R2(D)) / px) ** (spec.n - spec.alpha) / (b * special.beta(a, b))


def check_in_D(D, cloud_or_points, what: str = "points"):
    pts = getattr(cloud_or_points, "points", cloud_or_points)
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if pts.size and not np.all(D.in_D(pts)):
        raise DomainError(f"{what} must lie in D")


def green_matrix(spec: KernelSpec, D, rows, cols=None, diagonal_policy: DiagonalPolicy | None = None,
                 sweeper=None) -> np.ndarray:
    """Dense Green matrix ``G[i, j] = g(x_i, y_j)`` on point clouds carried by ``D``.

    With ``cols`` omitted the matrix is symmetric and the diagonal is the
    Riesz self term minus the cell-averaged image term, so it stays
    consistent with :func:`~condenser_lab.kernels.assemble_kernel_matrix`.
    Domains without a closed form need a ``sweeper``.
    """
    same = cols is None or cols is rows
    cols = rows if cols is None else cols
    check_in_D(D, rows, "rows")
    check_in_D(D, cols, "columns")
    K = assemble_kernel_matrix(spec, rows, None if same else cols, diagonal_policy)
    if D.has_closed_form_green and sweeper is None:
        H = image_closed(spec, D, rows.points, cols.points)
        if same:
            _, h = self_terms(spec, rows, diagonal_policy)
            if np.all(np.isfinite(h)):
                np.fill_diagonal(H, image_diagonal(spec, D, rows.points, h))
            else:  # excluded diagonal
                np.fill_diagonal(H, 0.0)
            H = 0.5 * (H + H.T)
    else:
        if sweeper is None:
            raise InputError(f"{D.kind} has no closed-form Green kernel; pass a sweeper")
        H = sweeper.image_matrix(rows, cols)
        if same:
            H = 0.5 * (H + H.T)
            if diagonal_policy is not None and diagonal_policy.kind == "exclude":
                np.fill_diagonal(H, 0.0)
    return K - H
