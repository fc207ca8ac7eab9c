"""Riesz kernels, self-interaction constants and kernel-matrix assembly.

The Riesz kernel of order ``alpha`` in ``R^n`` is ``|x - y|**(alpha - n)``.
Discrete measures place point masses on clouds, so the diagonal of a kernel
matrix (the self-interaction of an atom) needs a policy; see
:class:`DiagonalPolicy`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import TYPE_CHECKING

import numpy as np
from scipy import integrate, special
from scipy.spatial.distance import cdist

from . import axisym
from .errors import GeometryError, InputError

if TYPE_CHECKING:  # pragma: no cover
    from .clouds import PointCloud


@dataclass(frozen=True)
class KernelSpec:
    """Order ``alpha`` in (0, 2] and ambient dimension ``n >= 3``."""

    alpha: float
    n: int

    def __post_init__(self):
        a = float(self.alpha)
        if not (0.0 < a <= 2.0) or not math.isfinite(a):
            raise InputError(f"alpha must lie in (0, 2], got {self.alpha!r}")
        if int(self.n) != self.n or int(self.n) < 3:
            raise InputError(f"n must be an integer >= 3, got {self.n!r}")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "n", int(self.n))

    @property
    def exponent(self) -> float:
        """The power ``alpha - n`` (negative)."""
        return self.alpha - self.n

    def half(self) -> "KernelSpec":
        """Half-order spec ``(alpha/2, n)`` used by the weak energy."""
        return KernelSpec(self.alpha / 2.0, self.n)

    def is_newtonian(self) -> bool:
        return self.alpha == 2.0

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "n": self.n}


def _as_point(x, n: int) -> np.ndarray:
    arr = np.asarray(x, dtype=float).reshape(-1)
    if arr.shape[0] != n:
        raise InputError(f"expected a point in R^{n}, got shape {np.shape(x)}")
    return arr


def riesz_kernel_eval(spec: KernelSpec, x, y) -> float:
    """Return ``|x - y|**(alpha - n)``, or ``inf`` when ``x == y``."""
    xa = _as_point(x, spec.n)
    ya = _as_point(y, spec.n)
    if not (np.all(np.isfinite(xa)) and np.all(np.isfinite(ya))):
        raise InputError("non-finite coordinates")
    r = float(np.linalg.norm(xa - ya))
    if r == 0.0:
        return math.inf
    return r ** spec.exponent


def kernel_from_distance(spec: KernelSpec, r: np.ndarray) -> np.ndarray:
    """Elementwise kernel of distances; zero distance maps to ``inf``."""
    r = np.asarray(r, dtype=float)
    with np.errstate(divide="ignore"):
        out = np.power(r, spec.exponent)
    return out


# ---------------------------------------------------------------------------
# constants
# ---------------------------------------------------------------------------

def unit_ball_volume(d: int) -> float:
    """Lebesgue measure of the unit ball in ``R^d``."""
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)


def unit_sphere_area(n: int) -> float:
    """Surface area of the unit sphere in ``R^n``."""
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


@lru_cache(maxsize=64)
def ball_self_energy_constant(alpha: float, n: int) -> float:
    """Self-energy ``C`` of the uniform unit-mass unit ball in ``R^n``.

    A ball of radius ``h`` then has self-energy ``C * h**(alpha - n)``.
    Computed from the distance density of two uniform points in the unit
    ball, ``f(d) = n d^(n-1) I_{1-d^2/4}((n+1)/2, 1/2)``; exactly 6/5 for
    ``alpha = 2, n = 3``.
    """
    if alpha == 2.0 and n == 3:
        return 1.2

    def f(d):
        return n * d ** (alpha - 1.0) * special.betainc((n + 1) / 2.0, 0.5, 1.0 - d * d / 4.0)

    val, _ = integrate.quad(f, 0.0, 2.0, limit=200, epsabs=0.0, epsrel=1e-12)
    return float(val)


def cell_center_potential(d: int, alpha: float, n: int) -> float:
    """Potential at the center of a uniform unit-mass flat ``d``-ball of radius 1.

    Equals ``d / (d + alpha - n)``; finite only when ``d + alpha > n``.
    """
    s = d + alpha - n
    if s <= 0:
        return math.inf
    return d / s


@lru_cache(maxsize=64)
def composition_constant(alpha: float, n: int) -> float:
    """Constant ``c`` with ``int k_{a/2}(x,y) k_{a/2}(x,z) dm(x) = c k_a(y,z)``.

    ``c = pi^(n/2) G(a/4)^2 G((n-a)/2) / (G((n-a/2)/2)^2 G(a/2))``; equals
    ``pi^3`` for ``alpha = 2, n = 3``.
    """
    a = alpha
    lg = special.gammaln
    val = (
        (n / 2.0) * math.log(math.pi)
        + 2.0 * lg(a / 4.0)
        + lg((n - a) / 2.0)
        - 2.0 * lg((n - a / 2.0) / 2.0)
        - lg(a / 2.0)
    )
    return float(math.exp(val))


# ---------------------------------------------------------------------------
# diagonal policies
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DiagonalPolicy:
    """Self-interaction rule for atoms of a cloud paired with itself.

    kind
        ``"cell"``: potential at the atom of its own quadrature cell, a flat
        ``d``-ball with the atom's weight (``d`` the cloud's intrinsic
        dimension); falls back to ``"nearest"`` for clouds without one.
        ``"nearest"``: uniform-ball mollifier with radius half the distance to
        the atom's nearest neighbour.  ``"mollify"``: uniform-ball mollifier
        with the given radius ``h`` (scalar or one per atom).  ``"exclude"``:
        zero diagonal.
    """

    kind: str = "cell"
    h: object = None

    def __post_init__(self):
        if self.kind not in ("cell", "nearest", "mollify", "exclude"):
            raise InputError(f"unknown diagonal policy {self.kind!r}")
        if self.kind == "mollify":
            if self.h is None:
                raise InputError("mollify policy needs h")
            h = np.asarray(self.h, dtype=float)
            if np.any(~np.isfinite(h)) or np.any(h <= 0):
                raise InputError("mollifier radius must be positive")

    def halved(self) -> "DiagonalPolicy":
        """Policy with mollifier radii halved (sensitivity estimates)."""
        return DiagonalPolicy("mollify", None if self.h is None else np.asarray(self.h) / 2.0)

    def to_dict(self) -> dict:
        h = self.h
        if isinstance(h, np.ndarray):
            h = h.tolist()
        return {"kind": self.kind, "h": h}


def exclude() -> DiagonalPolicy:
    return DiagonalPolicy("exclude")


def mollify(h) -> DiagonalPolicy:
    return DiagonalPolicy("mollify", h)


DEFAULT_POLICY = DiagonalPolicy("cell")


def self_terms(spec: KernelSpec, cloud: "PointCloud", policy: DiagonalPolicy | None = None):
    """Diagonal entries and equivalent uniform-ball radii for ``cloud``.

    Returns ``(diag, h)`` where ``diag[i]`` is the self-interaction per unit
    mass squared and ``h[i]`` the radius of the uniform ball with the same
    self-energy (``nan`` under ``exclude``).
    """
    policy = policy or DEFAULT_POLICY
    N = cloud.size
    C = ball_self_energy_constant(spec.alpha, spec.n)
    p = spec.exponent
    if policy.kind == "exclude":
        return np.zeros(N), np.full(N, np.nan)
    if policy.kind == "mollify":
        h = np.broadcast_to(np.asarray(policy.h, dtype=float), (N,)).copy()
        return C * h**p, h
    if policy.kind == "nearest" or cloud.dim is None:
        R = 0.5 * cloud.nearest_distance
        diag = C * R**p
    else:
        d = cloud.dim
        with np.errstate(divide="ignore"):
            R = (cloud.quad_weights / unit_ball_volume(d)) ** (1.0 / d)
        R = np.where(R > 0, R, 0.5 * cloud.nearest_distance)
        k0 = cell_center_potential(d, spec.alpha, spec.n)
        # sets of infinite energy (d + alpha <= n) fall back to the mollifier
        diag = (k0 if math.isfinite(k0) else C) * R**p
    rings = cloud.ring_mask
    if rings.any():
        if not (spec.alpha == 2.0 and spec.n == 3):
            raise GeometryError("ring atoms are only supported for alpha=2, n=3")
        diag = diag.copy()
        diag[rings] = cloud.ring_self_potential[rings]
    h = (C / diag) ** (1.0 / (spec.n - spec.alpha))
    return diag, h


def assemble_kernel_matrix(
    spec: KernelSpec,
    rows: "PointCloud",
    cols: "PointCloud | None" = None,
    diagonal_policy: DiagonalPolicy | None = None,
) -> np.ndarray:
    """Dense matrix ``K[i, j] = kappa_alpha(x_i, y_j)``.

    When ``cols`` is omitted or is the same object as ``rows`` the diagonal
    follows ``diagonal_policy`` (default: cell-consistent).  Off-diagonal
    coincident points raise :class:`InputError`.
    """
    same = cols is None or cols is rows
    cols = rows if cols is None else cols
    for c in (rows, cols):
        if c.size == 0:
            raise InputError("empty point cloud")
        if c.n != spec.n:
            raise InputError(f"cloud dimension {c.n} does not match n={spec.n}")
    D = cdist(rows.points, cols.points)
    if same:
        np.fill_diagonal(D, 1.0)
    if np.any(D == 0.0):
        raise InputError("coincident points between clouds")
    K = D ** spec.exponent
    if rows.ring_mask.any() or cols.ring_mask.any():
        if not (spec.alpha == 2.0 and spec.n == 3):
            raise GeometryError("ring atoms are only supported for alpha=2, n=3")
        axisym.ring_block(rows, cols, K, symmetric=same)
    if same:
        diag, _ = self_terms(spec, rows, diagonal_policy)
        np.fill_diagonal(K, diag)
    return K
