"""Domain geometries, rotation-body profiles and slice sampling.

A domain ``D`` is open and connected; the second plate is ``F = D^c``.
Supported kinds: ``ball``, ``half_space``, ``ball_exterior`` and
``rotation_body_complement`` (``D`` is the complement of a body of
revolution ``Q`` around an axis, ``Q = {t >= 0, r <= rho(t)}`` in axial
coordinates).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

from .clouds import PointCloud
from .errors import GeometryError, InputError
from .kernels import KernelSpec, unit_ball_volume, unit_sphere_area
from .sampling import (
    AnalyticSet,
    Ball,
    Shell,
    Sphere,
    _orthonormal_complement,
    random_rotation,
    sphere_directions,
    vogel_disk,
)

#: far-field truncation of unbounded carriers, in units of the geometry scale
R_FAR_FACTOR = 100.0
#: components thinner than this fraction of their extent collapse to needles/sheets
THIN_RATIO = 0.05

NOT_THIN = "not_thin"
THIN_INFINITE = "thin_infinite_capacity"
FINITE_CAPACITY = "finite_capacity"


# ---------------------------------------------------------------------------
# profiles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Profile:
    """Radius profile ``rho(t)`` of a rotation body.

    ``family="power"``: ``rho(t) = t**(-s)`` with ``s >= 0``.
    ``family="exp"``: ``rho(t) = exp(-t**s)`` with ``s > 0``; ``s <= 1`` and
    ``s > 1`` behave differently at infinity.
    """

    family: str
    s: float

    def __post_init__(self):
        if self.family not in ("power", "exp"):
            raise InputError(f"unknown profile family {self.family!r}")
        s = float(self.s)
        if not math.isfinite(s) or s < 0 or (self.family == "exp" and s == 0):
            raise InputError(f"invalid exponent s={self.s!r} for family {self.family!r}")
        object.__setattr__(self, "s", s)

    def log_rho(self, t) -> np.ndarray:
        """``log rho(t)``; exact for radii far below the float range."""
        t = np.asarray(t, dtype=float)
        if self.family == "power":
            if self.s == 0:
                return np.zeros_like(t)
            with np.errstate(divide="ignore"):
                return -self.s * np.log(t)
        return -np.power(np.maximum(t, 0.0), self.s)

    def rho(self, t) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(self.log_rho(t))

    @property
    def variant(self) -> str:
        """``power``, ``exp_slow`` (``s <= 1``) or ``exp_fast`` (``s > 1``)."""
        if self.family == "power":
            return "power"
        return "exp_slow" if self.s <= 1 else "exp_fast"

    def classification(self) -> str:
        """Known behaviour of the body at infinity for ``alpha=2, n=3``."""
        return {"power": NOT_THIN, "exp_slow": THIN_INFINITE, "exp_fast": FINITE_CAPACITY}[self.variant]

    def to_dict(self) -> dict:
        return {"family": self.family, "s": self.s}

    @classmethod
    def from_dict(cls, d) -> "Profile":
        try:
            return cls(d["family"], float(d["s"]))
        except (KeyError, TypeError) as exc:
            raise InputError(f"bad profile description: {d!r}") from exc


def _default_axis(n: int):
    e = np.zeros(n)
    e[0] = 1.0
    return np.zeros(n), e


# ---------------------------------------------------------------------------
# rotation-body pieces
# ---------------------------------------------------------------------------

@dataclass
class _Component:
    kind: str  # needle | sheet | body
    ta: float
    tb: float


@dataclass(frozen=True, eq=False)
class RotationPiece(AnalyticSet):
    """``Q ∩ {r_lo <= |x - o| < r_hi}`` for a rotation body ``Q``.

    Sampling (Newtonian kernel in R^3) produces ring atoms: thin needle parts
    become axis bands with log radii, thin plate parts become flat annular
    strips, and the rest is panelled along the meridian boundary.
    """

    profile: Profile
    r_lo: float
    r_hi: float
    axis: tuple = None
    n: int = 3
    inner_face: bool = True
    outer_face: bool = True
    kind = "rotation_piece"
    k: int | None = field(default=None, compare=False)
    q: float | None = field(default=None, compare=False)

    def __post_init__(self):
        if not (0 <= self.r_lo < self.r_hi):
            raise InputError("rotation piece needs 0 <= r_lo < r_hi")
        ax = self.axis or _default_axis(self.n)
        o = np.asarray(ax[0], dtype=float)
        e = np.asarray(ax[1], dtype=float)
        object.__setattr__(self, "axis", (o, e / np.linalg.norm(e)))

    # -- cross sections --------------------------------------------------
    def _log_outer(self, t):
        with np.errstate(divide="ignore", invalid="ignore"):
            v = self.r_hi**2 - t * t
            return np.where(v > 0, 0.5 * np.log(np.maximum(v, 1e-300)), -np.inf)

    def _rmin(self, t):
        return np.sqrt(np.maximum(0.0, self.r_lo**2 - t * t))

    def log_rmax(self, t):
        t = np.asarray(t, dtype=float)
        return np.minimum(self.profile.log_rho(t), self._log_outer(t))

    def _gap(self, t):
        """``log rmax - log rmin`` (positive where the cross-section is nonempty)."""
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            g = self.log_rmax(t) - np.log(self._rmin(t))
        return np.where(np.isnan(g), -np.inf, g)

    def contains(self, points, tol: float = 1e-12):
        t, r = _axial(points, self.axis)
        rad = np.hypot(t, r)
        with np.errstate(divide="ignore"):
            inside_q = (t >= -tol) & (np.log(np.maximum(r, 0.0)) <= self.profile.log_rho(np.maximum(t, 0)) + 1e-12)
        return inside_q & (rad >= self.r_lo * (1 - 1e-12)) & (rad < self.r_hi)

    def max_log_radius(self) -> float:
        """Largest ``log`` cross-section radius over the piece."""
        comps = self.components()
        best = -np.inf
        for c in comps:
            t = np.linspace(c.ta, c.tb, 2001)
            best = max(best, float(np.max(self.log_rmax(t))))
        return best

    def components(self) -> list:
        """Connected components in the axial coordinate, classified by shape."""
        hi = self.r_hi
        grid = np.unique(np.concatenate([
            np.linspace(0.0, hi, 4001),
            np.geomspace(1e-12 * hi, hi, 3001),
            [self.r_lo, hi],
        ]))
        grid = grid[grid <= hi]
        ok = self._gap(grid) > 1e-12
        comps = []
        i = 0
        m = len(grid)
        while i < m:
            if not ok[i]:
                i += 1
                continue
            j = i
            while j + 1 < m and ok[j + 1]:
                j += 1
            ta = grid[i] if i == 0 else self._edge(grid[i - 1], grid[i])
            tb = grid[j] if j == m - 1 else self._edge(grid[j], grid[j + 1])
            if tb - ta > 1e-9 * hi:
                comps.append(self._classify(ta, tb))
            i = j + 1
        return comps

    def _edge(self, a, b):
        f = lambda t: float(np.clip(self._gap(t), -1e6, 1e6))
        fa, fb = f(a), f(b)
        if fa * fb >= 0:
            return 0.5 * (a + b)
        return optimize.brentq(f, a, b, xtol=1e-15 * max(1.0, b), rtol=1e-14)

    def _classify(self, ta, tb) -> _Component:
        t = np.linspace(ta, tb, 801)
        lr = self.log_rmax(t)
        rmin = self._rmin(t)
        ext_t = tb - ta
        on_axis = np.mean(rmin == 0) > 0.5
        rmax_max = float(np.exp(np.max(lr)))
        if on_axis and rmax_max <= THIN_RATIO * ext_t:
            return _Component("needle", ta, tb)
        r_ext = rmax_max - float(rmin.min())
        if not on_axis and ext_t <= THIN_RATIO * r_ext:
            return _Component("sheet", ta, tb)
        return _Component("body", ta, tb)

    # -- sampling ----------------------------------------------------------
    def sample(self, resolution, seed=None) -> PointCloud:
        """Ring-panel cloud with about ``resolution`` panels (alpha=2, n=3)."""
        if self.n != 3:
            raise GeometryError("ring-panel sampling needs n = 3; use sample_points")
        rings = self._panels(int(resolution))
        if not rings:
            raise GeometryError("rotation slice is empty")
        return self._ring_cloud(rings)

    def _panels(self, N: int) -> list:
        comps = self.components()
        if not comps:
            return []
        lengths = []
        for c in comps:
            if c.kind == "needle":
                lengths.append(c.tb - c.ta)
            elif c.kind == "sheet":
                t = np.linspace(c.ta, c.tb, 201)
                lengths.append(float(np.exp(np.max(self.log_rmax(t))) - self._rmin(t).min()))
            else:
                lengths.append(self._body_length(c))
        lengths = np.asarray(lengths)
        counts = np.maximum(40, np.round(N * lengths / lengths.sum()).astype(int))
        out = []
        for c, m in zip(comps, counts):
            if c.kind == "needle":
                out.extend(self._needle_panels(c, m))
            elif c.kind == "sheet":
                out.extend(self._sheet_panels(c, m))
            else:
                out.extend(self._body_panels(c, m))
        return out

    def _needle_panels(self, c, m):
        u = np.linspace(0.0, 1.0, m + 1)
        tn = c.ta + (c.tb - c.ta) * 0.5 * (1 - np.cos(np.pi * u))
        tm = 0.5 * (tn[1:] + tn[:-1])
        ell = np.diff(tn)
        la = self.log_rmax(tm)
        return [(float(a), float(b), float(c_), 0.0, 2) for a, b, c_ in zip(tm, la, ell)]

    def _sheet_panels(self, c, m):
        t = np.linspace(c.ta, c.tb, 401)
        r0 = float(self._rmin(t).min())
        r1 = float(np.exp(np.max(self.log_rmax(t))))
        u = np.linspace(0.0, 1.0, m + 1)
        rn = r0 + (r1 - r0) * 0.5 * (1 - np.cos(np.pi * u))
        rm = 0.5 * (rn[1:] + rn[:-1])
        t0 = 0.5 * (c.ta + c.tb)
        return [(t0, float(np.log(r)), float(l), 0.5 * np.pi, 2) for r, l in zip(rm, np.diff(rn))]

    def _boundary_chains(self, c):
        """Kept boundary polylines of a body component as lists of (t, r).

        The meridian boundary is walked as a closed loop: the face at
        ``t = t_a`` (the plane ``t = 0`` of ``Q`` when ``t_a = 0``), the lower
        curve (axis or inner sphere), a closing face at ``t_b`` and the upper
        curve (lateral surface or outer sphere) backwards.  Segments on the
        axis, and optionally on the cutting spheres, are dropped.
        """
        u = np.linspace(0.0, 1.0, 3001)
        t = c.ta + (c.tb - c.ta) * 0.5 * (1 - np.cos(np.pi * u))
        extra = [x for x in (self.r_lo, *self._breaks(c)) if c.ta < x < c.tb]
        t = np.unique(np.concatenate([t, extra]))
        rmin = self._rmin(t)
        rmax = np.exp(self.log_rmax(t))
        segs = []
        tiny = 1e-6 * self.r_hi  # faces at sphere tips are only rounding residue
        if rmax[0] - rmin[0] > tiny:
            segs.append((t[0], rmax[0], t[0], rmin[0], "plane" if t[0] == 0.0 else "face"))
        for i in range(len(t) - 1):
            tag = "axis" if rmin[i] == 0.0 and rmin[i + 1] == 0.0 else "inner"
            segs.append((t[i], rmin[i], t[i + 1], rmin[i + 1], tag))
        if rmax[-1] - rmin[-1] > tiny:
            segs.append((t[-1], rmin[-1], t[-1], rmax[-1], "face"))
        for i in range(len(t) - 1, 0, -1):
            tm = 0.5 * (t[i] + t[i - 1])
            tag = "lateral" if self.profile.log_rho(tm) <= self._log_outer(tm) else "outer"
            segs.append((t[i], rmax[i], t[i - 1], rmax[i - 1], tag))
        drop = {"axis"}
        if not self.inner_face:
            drop.add("inner")
        if not self.outer_face:
            drop.add("outer")
        keep = [sg for sg in segs if sg[4] not in drop and (sg[0] != sg[2] or sg[1] != sg[3])]
        chains, cur = [], []
        for sg in keep:
            if cur and (cur[-1][0] == sg[0] and cur[-1][1] == sg[1]):
                cur.append((sg[2], sg[3]))
            else:
                if cur:
                    chains.append(cur)
                cur = [(sg[0], sg[1]), (sg[2], sg[3])]
        if cur:
            chains.append(cur)
        # join the loop seam
        if len(chains) > 1 and chains[-1][-1] == chains[0][0]:
            chains[0] = chains.pop() + chains[0][1:]
        return chains

    def _breaks(self, c):
        f = lambda t: float(self.profile.log_rho(t) - self._log_outer(t))
        t = np.linspace(c.ta, c.tb, 2001)[1:-1]
        vals = np.array([f(x) for x in t])
        out = []
        for a, b, fa, fb in zip(t[:-1], t[1:], vals[:-1], vals[1:]):
            if np.isfinite(fa) and np.isfinite(fb) and fa * fb < 0:
                out.append(optimize.brentq(f, a, b))
        return out

    def _body_length(self, c) -> float:
        tot = 0.0
        for ch in self._boundary_chains(c):
            a = np.asarray(ch)
            tot += float(np.sum(np.hypot(np.diff(a[:, 0]), np.diff(a[:, 1]))))
        return tot

    def _body_panels(self, c, m):
        chains = self._boundary_chains(c)
        lens = []
        for ch in chains:
            a = np.asarray(ch)
            lens.append(np.concatenate([[0.0], np.cumsum(np.hypot(np.diff(a[:, 0]), np.diff(a[:, 1])))]))
        total = sum(L[-1] for L in lens)
        out = []
        for ch, L in zip(chains, lens):
            a = np.asarray(ch)
            k = max(2, int(round(m * L[-1] / total)))
            s = np.linspace(0.0, L[-1], k + 1)
            tn = np.interp(s, L, a[:, 0])
            rn = np.interp(s, L, a[:, 1])
            for i in range(k):
                dt, dr = tn[i + 1] - tn[i], rn[i + 1] - rn[i]
                ell = math.hypot(dt, dr)
                if ell <= 0:
                    continue
                rm = 0.5 * (rn[i] + rn[i + 1])
                if rm <= 0:
                    rm = 0.25 * ell
                out.append((0.5 * (tn[i] + tn[i + 1]), math.log(rm), ell, math.atan2(dr, dt), 2))
        return out

    def _ring_cloud(self, rings) -> PointCloud:
        arr = np.asarray([r[:4] for r in rings], dtype=float)
        t, la, ell, tilt = arr.T
        o, e = self.axis
        u = _orthonormal_complement(e)[0]
        with np.errstate(under="ignore"):
            a = np.exp(la)
        pts = o + t[:, None] * e + a[:, None] * u
        w = 2 * np.pi * a * ell
        order = np.lexsort((a, t))
        return PointCloud(
            pts[order], w[order], 2,
            log_ring_radius=la[order], ring_length=ell[order], ring_tilt=tilt[order],
            axis=(o, e), label="rotation_slice", check_separation=False,
        )

    def sample_points(self, resolution: int, seed=None) -> PointCloud:
        """Plain point cloud on the surface (any ``n``); fails on thin parts."""
        comps = self.components()
        if any(c.kind != "body" for c in comps):
            raise GeometryError(
                "slice has needle or plate parts below the point-sampling resolution"
            )
        n_rings = max(8, int(round(math.sqrt(resolution))))
        rings = self._panels(n_rings)
        total = sum(2 * np.pi * math.exp(r[1]) * r[2] for r in rings)
        o, e = self.axis
        B = _orthonormal_complement(e)
        pts, wts = [], []
        for j, (t, la, ell, _, _) in enumerate(rings):
            a = math.exp(la)
            area = unit_sphere_area(self.n - 1) * a ** (self.n - 2) * ell
            k = max(3, int(round(resolution * (2 * np.pi * a * ell) / total)))
            dirs = sphere_directions(k, self.n - 1, seed=None) if self.n > 3 else None
            if self.n == 3:
                ph = (np.arange(k) + 0.5 * (j % 2)) * 2 * np.pi / k
                dirs = np.column_stack([np.cos(ph), np.sin(ph)])
            pts.append(o + t * e + a * dirs @ B)
            wts.append(np.full(k, area / k))
        cloud = PointCloud(np.vstack(pts), np.concatenate(wts), self.n - 1, label="rotation_slice",
                           check_separation=False)
        if cloud.min_separation < 1e-6 * cloud.scale:
            raise GeometryError("slice sampling produced coincident points")
        return cloud

    def to_dict(self):
        d = {"kind": "rotation_piece", "profile": self.profile.to_dict(),
             "r_lo": self.r_lo, "r_hi": self.r_hi,
             "axis": [self.axis[0].tolist(), self.axis[1].tolist()]}
        if self.k is not None:
            d.update(kind="rotation_slice", k=self.k, q=self.q)
        return d


def rotation_body_slice(profile: Profile, k: int, q: float = 2.0, axis=None, n: int = 3) -> RotationPiece:
    """Slice ``Q_k = Q ∩ {q^k <= |x| < q^(k+1)}`` of the rotation body."""
    if not q > 1:
        raise InputError(f"q must exceed 1, got {q!r}")
    if int(k) != k or k < 0:
        raise InputError(f"k must be a nonnegative integer, got {k!r}")
    return RotationPiece(profile, q**k, q ** (k + 1), axis, n, k=int(k), q=float(q))


def _axial(points, axis):
    o, e = axis
    rel = np.atleast_2d(np.asarray(points, dtype=float)) - o
    t = rel @ e
    r = np.linalg.norm(rel - t[:, None] * e[None, :], axis=1)
    return t, r


# ---------------------------------------------------------------------------
# domains
# ---------------------------------------------------------------------------

KINDS = ("ball", "half_space", "ball_exterior", "rotation_body_complement")


@dataclass(frozen=True, eq=False)
class DomainGeometry:
    """Open connected domain ``D`` with complement plate ``F``.

    Use the constructors :meth:`ball`, :meth:`half_space`,
    :meth:`ball_exterior` and :meth:`rotation_body_complement`.
    """

    kind: str
    n: int = 3
    center: np.ndarray | None = None
    radius: float | None = None
    normal: np.ndarray | None = None
    offset: float | None = None
    profile: Profile | None = None
    axis: tuple | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"unknown geometry kind {self.kind!r}")
        if self.kind in ("ball", "ball_exterior"):
            c = np.asarray(self.center, dtype=float).reshape(-1)
            if c.shape[0] != self.n:
                raise InputError("center dimension mismatch")
            if not (self.radius and self.radius > 0):
                raise InputError("radius must be positive")
            object.__setattr__(self, "center", c)
            object.__setattr__(self, "radius", float(self.radius))
        elif self.kind == "half_space":
            v = np.asarray(self.normal, dtype=float).reshape(-1)
            if v.shape[0] != self.n or not np.linalg.norm(v) > 0:
                raise InputError("half-space normal must be a nonzero vector in R^n")
            object.__setattr__(self, "normal", v / np.linalg.norm(v))
            object.__setattr__(self, "offset", float(self.offset or 0.0))
        else:
            if not isinstance(self.profile, Profile):
                raise InputError("rotation_body_complement needs a Profile")
            ax = self.axis or _default_axis(self.n)
            o = np.asarray(ax[0], dtype=float)
            e = np.asarray(ax[1], dtype=float)
            object.__setattr__(self, "axis", (o, e / np.linalg.norm(e)))

    # -- constructors -------------------------------------------------------
    @classmethod
    def ball(cls, center=(0.0, 0.0, 0.0), radius: float = 1.0) -> "DomainGeometry":
        c = np.asarray(center, dtype=float)
        return cls("ball", n=c.shape[0], center=c, radius=radius)

    @classmethod
    def half_space(cls, normal=(1.0, 0.0, 0.0), offset: float = 0.0) -> "DomainGeometry":
        """``D = {x : x . normal > offset}``."""
        v = np.asarray(normal, dtype=float)
        return cls("half_space", n=v.shape[0], normal=v, offset=offset)

    @classmethod
    def ball_exterior(cls, center=(0.0, 0.0, 0.0), radius: float = 1.0) -> "DomainGeometry":
        c = np.asarray(center, dtype=float)
        return cls("ball_exterior", n=c.shape[0], center=c, radius=radius)

    @classmethod
    def rotation_body_complement(cls, profile: Profile, axis=None, n: int = 3) -> "DomainGeometry":
        return cls("rotation_body_complement", n=n, profile=profile, axis=axis)

    # -- membership -----------------------------------------------------------
    def in_D(self, points) -> np.ndarray:
        x = np.atleast_2d(np.asarray(points, dtype=float))
        if x.shape[1] != self.n:
            raise InputError("point dimension mismatch")
        if self.kind == "ball":
            return np.linalg.norm(x - self.center, axis=1) < self.radius
        if self.kind == "ball_exterior":
            return np.linalg.norm(x - self.center, axis=1) > self.radius
        if self.kind == "half_space":
            return x @ self.normal > self.offset
        t, r = _axial(x, self.axis)
        with np.errstate(divide="ignore"):
            inside = (t >= 0) & (np.log(r) <= self.profile.log_rho(np.maximum(t, 0)))
        return ~inside

    def in_F(self, points) -> np.ndarray:
        return ~self.in_D(points)

    def signed_distance(self, points) -> np.ndarray:
        """Distance to the boundary, positive in ``D`` (approximate for rotation bodies)."""
        x = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind == "ball":
            return self.radius - np.linalg.norm(x - self.center, axis=1)
        if self.kind == "ball_exterior":
            return np.linalg.norm(x - self.center, axis=1) - self.radius
        if self.kind == "half_space":
            return x @ self.normal - self.offset
        t, r = _axial(x, self.axis)
        tt = np.concatenate([np.linspace(0, 50, 20001)])
        rr = self.profile.rho(tt)
        rr = np.minimum(rr, 1e6)
        d = np.min(np.hypot(t[:, None] - tt[None, :], r[:, None] - rr[None, :]), axis=1)
        d = np.minimum(d, np.where(t >= 0, np.inf, -t))
        return np.where(self.in_D(x), d, -d)

    @property
    def scale(self) -> float:
        return float(self.radius) if self.kind in ("ball", "ball_exterior") else 1.0

    # -- classification -------------------------------------------------------
    @property
    def thin_at_infinity(self) -> bool:
        """Whether ``F`` is thin at infinity (balayage may lose mass)."""
        return self.thinness_class != NOT_THIN

    @property
    def thinness_class(self) -> str:
        if self.kind in ("ball", "half_space"):
            return NOT_THIN
        if self.kind == "ball_exterior":
            return FINITE_CAPACITY
        return self.profile.classification()

    @property
    def has_closed_form_green(self) -> bool:
        return self.kind in ("ball", "half_space", "ball_exterior")

    @property
    def F_has_interior(self) -> bool:
        return True

    # -- carriers -------------------------------------------------------------
    def boundary_cloud(self, resolution: int, seed=None, focus=None, spread: float = 0.0) -> PointCloud:
        """Points on ``∂D`` with area weights (far-field tail for unbounded ``∂D``).

        For half-spaces the dense core around ``focus`` has radius at least
        ``spread``.
        """
        N = int(resolution)
        if self.kind in ("ball", "ball_exterior"):
            c = Sphere(self.center, self.radius).sample(N, seed)
            return PointCloud(c.points, c.quad_weights, c.dim, label="boundary")
        if self.kind == "half_space":
            return _plane_cloud(self, N, seed, focus, spread)
        return self.rotation_surface_cloud(N)

    def rotation_surface_cloud(self, resolution: int, r_far: float | None = None) -> PointCloud:
        """Ring-panel cloud on ``∂Q ∩ {|x| < r_far}`` (alpha=2, n=3)."""
        if self.kind != "rotation_body_complement":
            raise GeometryError("not a rotation body")
        r_far = r_far or R_FAR_FACTOR * self.scale
        K = int(math.ceil(math.log2(r_far)))
        pieces = [RotationPiece(self.profile, 0.0, 1.0, self.axis, self.n, outer_face=False)]
        for k in range(K):
            pieces.append(RotationPiece(self.profile, 2.0**k, 2.0 ** (k + 1), self.axis, self.n,
                                        inner_face=False, outer_face=False))
        per = max(40, resolution // len(pieces))
        clouds = [p.sample(per) for p in pieces]
        return PointCloud.concat(clouds, label="boundary")

    def carrier_cloud(self, spec: KernelSpec, resolution: int, seed=None, focus=None,
                      spread: float = 0.0) -> PointCloud:
        """Cloud carrying balayage onto ``F``: ``∂D`` for ``alpha = 2``, volume of ``F`` otherwise."""
        if spec.n != self.n:
            raise InputError("kernel dimension does not match geometry")
        if spec.alpha == 2.0:
            return self.boundary_cloud(resolution, seed=seed, focus=focus, spread=spread)
        if self.kind == "rotation_body_complement":
            raise GeometryError("volume carriers of rotation bodies are not implemented")
        return _volume_carrier(self, spec, int(resolution), seed, focus)

    def isotropic_volume_cloud(self, resolution: int, seed=None, focus=None) -> PointCloud:
        """Volume cloud of ``F`` with roughly isotropic cells (numeric sweeps, alpha < 2).

        Concentric Fibonacci layers, half of the atoms within twice the
        geometry scale and geometric shells out to the far-field radius.
        """
        N = int(resolution)
        if self.kind == "ball_exterior":
            c = Ball(self.center, self.radius).sample(N, seed)
            return PointCloud(c.points, c.quad_weights, self.n, label="volume")
        if self.kind == "rotation_body_complement":
            raise GeometryError("volume clouds of rotation bodies are not implemented")
        r_far = R_FAR_FACTOR * self.scale
        if self.kind == "ball":
            c0, r0, keep, m = self.center, self.radius, None, N
        else:
            f = np.zeros(self.n) if focus is None else np.asarray(focus, dtype=float)
            c0 = f - (f @ self.normal - self.offset) * self.normal
            r0 = 0.0
            keep = self.in_F
            m = 2 * N
        r1 = 2.0 * self.scale if self.kind == "ball" else 3.0 * max(abs(float(
            (focus if focus is not None else np.zeros(self.n)) @ self.normal) - self.offset), 0.5)
        shells = [Shell(c0, r0, r1).sample(m // 2, seed)]
        edges = [r1]
        while edges[-1] < r_far:
            edges.append(min(2.0 * edges[-1], r_far))
        per = max(24, (m // 2) // max(1, len(edges) - 1))
        for j in range(len(edges) - 1):
            shells.append(Shell(c0, edges[j], edges[j + 1]).sample(per, (seed or 0) + 17 * (j + 1)))
        pts = np.vstack([c.points for c in shells])
        wts = np.concatenate([c.quad_weights for c in shells])
        if keep is not None:
            inside = keep(pts) & (np.abs(self.signed_distance(pts)) > 0)
            pts, wts = pts[inside], wts[inside]
        return PointCloud(pts, wts, self.n, label="volume")

    # -- serialization ----------------------------------------------------------
    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind in ("ball", "ball_exterior"):
            d.update(center=self.center.tolist(), radius=self.radius)
        elif self.kind == "half_space":
            d.update(normal=self.normal.tolist(), offset=self.offset)
        else:
            d.update(profile=self.profile.to_dict(),
                     axis=[self.axis[0].tolist(), self.axis[1].tolist()], n=self.n)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DomainGeometry":
        if not isinstance(d, dict):
            raise InputError("geometry block must be a mapping")
        kind = d.get("kind")
        try:
            if kind == "ball":
                return cls.ball(d.get("center", (0, 0, 0)), float(d.get("radius", 1.0)))
            if kind == "ball_exterior":
                return cls.ball_exterior(d.get("center", (0, 0, 0)), float(d.get("radius", 1.0)))
            if kind == "half_space":
                return cls.half_space(d.get("normal", (1, 0, 0)), float(d.get("offset", 0.0)))
            if kind == "rotation_body_complement":
                ax = d.get("axis")
                n = int(d.get("n", 3))
                return cls.rotation_body_complement(Profile.from_dict(d["profile"]),
                                                    tuple(ax) if ax else None, n)
        except KeyError as exc:
            raise InputError(f"geometry block missing {exc}") from None
        raise InputError(f"unknown geometry kind {kind!r}")


# ---------------------------------------------------------------------------
# carrier builders
# ---------------------------------------------------------------------------

def _geometric_rings(r0: float, r1: float, n_points: int, d: int):
    """Radii edges growing geometrically from ``r0`` to ``r1`` for ``n_points`` atoms.

    Each shell holds about ``m`` atoms where ``m`` is the shell count that
    makes radial and tangential spacings comparable.
    """
    if r1 <= r0:
        return np.array([r0]), 0
    lo, hi = 1.0001, 4.0
    for _ in range(80):
        g = 0.5 * (lo + hi)
        m = _shell_count(g, d)
        K = math.log(r1 / r0) / math.log(g)
        if K * m > n_points:
            lo = g
        else:
            hi = g
    g = hi
    K = max(1, int(math.ceil(math.log(r1 / r0) / math.log(g))))
    edges = r0 * (r1 / r0) ** (np.arange(K + 1) / K)
    return edges, _shell_count(edges[1] / edges[0], d)


def _shell_count(g: float, d: int) -> int:
    # atoms on a (d-1)-sphere of radius r with spacing (g - 1) r
    return max(3, int(round(unit_sphere_area(d) / (g - 1.0) ** (d - 1))))


def _flat_cloud(d: int, N: int, r_far: float, r_in: float, seed) -> tuple:
    """Points in ``R^d`` (the boundary hyperplane) dense inside ``r_in``."""
    n_in = max(16, int(0.45 * N))
    if d == 2:
        phase = 0.0 if seed is None else float(np.random.default_rng(seed).uniform(0, 2 * np.pi))
        inner = vogel_disk(n_in, r_in, phase)
        w_in = np.full(n_in, math.pi * r_in**2 / n_in)
    else:
        c = Ball(np.zeros(d), r_in).sample(n_in, seed)
        inner, w_in = c.points, c.quad_weights
    edges, m = _geometric_rings(r_in, r_far, N - n_in, d)
    pts, wts = [inner], [w_in]
    for k in range(len(edges) - 1):
        a, b = edges[k], edges[k + 1]
        rk = ((a**d + b**d) / 2.0) ** (1.0 / d)
        vol = unit_ball_volume(d) * (b**d - a**d)
        if d == 2:
            ph = GOLD * k + (np.arange(m) * 2 * np.pi / m)
            u = np.column_stack([np.cos(ph), np.sin(ph)])
        else:
            u = sphere_directions(m, d, seed=1000 + k)
        pts.append(rk * u)
        wts.append(np.full(m, vol / m))
    return np.vstack(pts), np.concatenate(wts)


GOLD = math.pi * (3.0 - math.sqrt(5.0))


def _plane_cloud(geom: DomainGeometry, N: int, seed, focus, spread: float = 0.0) -> PointCloud:
    n = geom.n
    nu = geom.normal
    f = np.zeros(n) if focus is None else np.asarray(focus, dtype=float)
    depth = abs(float(f @ nu) - geom.offset)
    p0 = f - (f @ nu - geom.offset) * nu
    r_in = max(3.0 * max(depth, 0.5 * geom.scale), float(spread))
    r_far = R_FAR_FACTOR * geom.scale
    uv, w = _flat_cloud(n - 1, N, r_far, r_in, seed)
    B = _orthonormal_complement(nu)
    return PointCloud(p0 + uv @ B, w, n - 1, label="boundary")


def _jacobi_layers(m: int, beta: float):
    """Nodes/weights on (0, 1) for integrands ``f(u) u**(-beta)``, returned as plain weights."""
    x, w = special.roots_jacobi(m, 0.0, -beta)
    u = 0.5 * (x + 1.0)
    # weight (1+x)^(-beta) = (2u)^(-beta); dx = 2 du
    w = w * 2.0 ** (beta - 1.0)
    return u, w * u**beta


def _volume_carrier(geom: DomainGeometry, spec: KernelSpec, N: int, seed, focus) -> PointCloud:
    """Volume cloud of ``F`` for alpha < 2, graded toward ``∂D``.

    Weights include the boundary singularity ``dist^(-alpha/2)`` of swept
    densities through Gauss-Jacobi layers next to the boundary.
    """
    n = geom.n
    beta = spec.alpha / 2.0
    uj, wj = _jacobi_layers(6, beta)
    gx, gw = np.polynomial.legendre.leggauss(3)
    gx, gw = 0.5 * (gx + 1.0), 0.5 * gw
    layers = []  # (distance from boundary, thickness weight)
    if geom.kind in ("ball", "half_space"):
        d0 = geom.scale if geom.kind == "ball" else 1.0
        layers += [(d0 * u, d0 * w) for u, w in zip(uj, wj)]
        a = d0
        r_far = R_FAR_FACTOR * geom.scale
        while a < r_far:
            b = min(2.0 * a, r_far)
            layers += [(a + (b - a) * x, (b - a) * w) for x, w in zip(gx, gw)]
            a = b
    else:  # ball_exterior: F is the closed ball
        R = geom.radius
        layers += [(0.5 * R * u, 0.5 * R * w) for u, w in zip(uj, wj)]
        layers += [(0.5 * R + 0.5 * R * x, 0.5 * R * w) for x, w in zip(gx, gw) if 0.5 * R * x < 0.5 * R]
    n_layers = len(layers)
    pts, wts = [], []
    if geom.kind in ("ball", "ball_exterior"):
        # points per layer follow the expected swept mass (far field decays like dist^-(alpha+1))
        share = np.array([dw * (1.0 + dist / geom.radius) ** (-spec.alpha - 1.0) for dist, dw in layers])
        counts = np.maximum(12, np.round(N * share / share.sum())).astype(int)
        for j, (dist, dw) in enumerate(layers):
            r = geom.radius + dist if geom.kind == "ball" else geom.radius - dist
            if r <= 0:
                continue
            m = int(counts[j])
            u = sphere_directions(m, n, seed=(0 if seed is None else seed) * 100 + j + 1)
            area = unit_sphere_area(n) * r ** (n - 1)
            pts.append(geom.center + r * u)
            wts.append(np.full(m, area * dw / m))
    else:
        nu = geom.normal
        f = np.zeros(n) if focus is None else np.asarray(focus, dtype=float)
        p0 = f - (f @ nu - geom.offset) * nu
        depth = abs(float(f @ nu) - geom.offset)
        B = _orthonormal_complement(nu)
        m = max(40, N // n_layers)
        for j, (dist, dw) in enumerate(layers):
            r_in = 3.0 * max(depth + dist, 0.5)
            uv, w = _flat_cloud(n - 1, m, R_FAR_FACTOR, min(r_in, 0.5 * R_FAR_FACTOR), seed)
            pts.append(p0 - dist * nu + uv @ B)
            wts.append(w * dw)
    return PointCloud(np.vstack(pts), np.concatenate(wts), n, label="carrier")
