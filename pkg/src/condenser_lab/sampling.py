"""Analytic sets and deterministic samplers producing weighted point clouds.

Surface sets receive area weights and volume sets volume weights; each
sampler's weights sum to the exact measure of the set unless noted.  A seed
only selects a rigid rotation or phase of an otherwise fixed lattice, so
``(set, resolution, seed)`` always maps to the same cloud.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc, special_ortho_group

from .clouds import PointCloud
from .errors import InputError
from .kernels import unit_ball_volume, unit_sphere_area

GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


# ---------------------------------------------------------------------------
# low-level point sets
# ---------------------------------------------------------------------------

def random_rotation(n: int, seed) -> np.ndarray:
    """Deterministic rotation matrix for ``seed`` (identity when ``seed`` is None)."""
    if seed is None:
        return np.eye(n)
    return special_ortho_group.rvs(n, random_state=np.random.default_rng(seed))


def sphere_directions(N: int, n: int = 3, seed=None) -> np.ndarray:
    """Quasi-uniform unit vectors: Fibonacci lattice for ``n = 3``, Sobol otherwise."""
    if N < 1:
        raise InputError("need at least one direction")
    if n == 3:
        i = np.arange(N) + 0.5
        z = 1.0 - 2.0 * i / N
        r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
        phi = GOLDEN_ANGLE * np.arange(N)
        pts = np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
    else:
        eng = qmc.Sobol(d=n, scramble=True, seed=np.random.default_rng(0 if seed is None else seed))
        u = eng.random(N)
        from scipy.special import ndtri

        g = ndtri(np.clip(u, 1e-12, 1 - 1e-12))
        pts = g / np.linalg.norm(g, axis=1)[:, None]
    return pts @ random_rotation(n, seed).T


def _orthonormal_complement(normal: np.ndarray) -> np.ndarray:
    """Rows spanning the hyperplane orthogonal to ``normal``."""
    n = normal.shape[0]
    q, _ = np.linalg.qr(np.column_stack([normal, np.eye(n)]))
    basis = q[:, 1:n].T
    return basis


def vogel_disk(N: int, radius: float = 1.0, phase: float = 0.0) -> np.ndarray:
    """Sunflower points in the unit disk with equal-area cells, shape (N, 2)."""
    i = np.arange(N)
    r = radius * np.sqrt((i + 0.5) / N)
    th = GOLDEN_ANGLE * i + phase
    return np.column_stack([r * np.cos(th), r * np.sin(th)])


def _seed_int(seed) -> int:
    return 0 if seed is None else int(seed)


# ---------------------------------------------------------------------------
# analytic sets
# ---------------------------------------------------------------------------

class AnalyticSet:
    """Base class: ``contains`` decides membership, ``sample`` builds a cloud."""

    kind = "set"
    dim_offset = 0  # intrinsic dimension = n - dim_offset

    def contains(self, points) -> np.ndarray:  # pragma: no cover - abstract
        raise NotImplementedError

    def sample(self, resolution: int, seed=None) -> PointCloud:  # pragma: no cover
        raise NotImplementedError

    def measure(self) -> float:  # pragma: no cover
        raise NotImplementedError

    def to_dict(self) -> dict:  # pragma: no cover
        raise NotImplementedError


def _vec(v) -> np.ndarray:
    return np.asarray(v, dtype=float).reshape(-1)


@dataclass(frozen=True, eq=False)
class Sphere(AnalyticSet):
    center: np.ndarray
    radius: float
    kind = "sphere"

    def __post_init__(self):
        object.__setattr__(self, "center", _vec(self.center))
        if not self.radius > 0:
            raise InputError("empty set: sphere radius must be positive")

    @property
    def n(self):
        return self.center.shape[0]

    def contains(self, points, tol: float = 1e-9):
        d = np.linalg.norm(np.atleast_2d(points) - self.center, axis=1)
        return np.abs(d - self.radius) <= tol * self.radius

    def measure(self):
        return unit_sphere_area(self.n) * self.radius ** (self.n - 1)

    def sample(self, resolution, seed=None):
        N = _check_res(resolution)
        u = sphere_directions(N, self.n, seed)
        w = np.full(N, self.measure() / N)
        return PointCloud(self.center + self.radius * u, w, self.n - 1, label="sphere")

    def to_dict(self):
        return {"kind": "sphere", "center": self.center.tolist(), "radius": float(self.radius)}


@dataclass(frozen=True, eq=False)
class Shell(AnalyticSet):
    """Closed spherical shell ``r_in <= |x - c| <= r_out`` (a ball when ``r_in = 0``)."""

    center: np.ndarray
    r_in: float
    r_out: float
    kind = "shell"

    def __post_init__(self):
        object.__setattr__(self, "center", _vec(self.center))
        if not (0 <= self.r_in < self.r_out):
            raise InputError("empty set: need 0 <= r_in < r_out")

    @property
    def n(self):
        return self.center.shape[0]

    def contains(self, points, tol: float = 1e-12):
        d = np.linalg.norm(np.atleast_2d(points) - self.center, axis=1)
        return (d >= self.r_in - tol) & (d <= self.r_out + tol)

    def measure(self):
        return unit_ball_volume(self.n) * (self.r_out**self.n - self.r_in**self.n)

    def sample(self, resolution, seed=None):
        N = _check_res(resolution)
        n, V = self.n, self.measure()
        spacing = (V / N) ** (1.0 / n)
        K = max(1, int(round((self.r_out - self.r_in) / spacing)))
        edges = np.linspace(self.r_in, self.r_out, K + 1)
        vols = unit_ball_volume(n) * (edges[1:] ** n - edges[:-1] ** n)
        counts = np.maximum(1, np.round(N * vols / V).astype(int))
        pts, wts = [], []
        base = _seed_int(seed)
        for k in range(K):
            rk = 0.5 * (edges[k] + edges[k + 1])
            if counts[k] == 1 and edges[k] == 0.0:
                pts.append(self.center[None, :])
            else:
                u = sphere_directions(int(counts[k]), n, seed=base * 1000 + k + 1)
                pts.append(self.center + rk * u)
            wts.append(np.full(counts[k], vols[k] / counts[k]))
        return PointCloud(np.vstack(pts), np.concatenate(wts), n, label=self.kind)

    def to_dict(self):
        return {"kind": "shell", "center": self.center.tolist(),
                "r_in": float(self.r_in), "r_out": float(self.r_out)}


def Ball(center, radius) -> Shell:
    """Closed ball as a degenerate shell; volume sampling in concentric layers."""
    return Shell(center, 0.0, radius)


@dataclass(frozen=True, eq=False)
class Disk(AnalyticSet):
    """Flat ``(n-1)``-disk with given center, unit normal and radius."""

    center: np.ndarray
    normal: np.ndarray
    radius: float
    kind = "disk"

    def __post_init__(self):
        object.__setattr__(self, "center", _vec(self.center))
        nv = _vec(self.normal)
        object.__setattr__(self, "normal", nv / np.linalg.norm(nv))
        if not self.radius > 0:
            raise InputError("empty set: disk radius must be positive")

    @property
    def n(self):
        return self.center.shape[0]

    def contains(self, points, tol: float = 1e-9):
        rel = np.atleast_2d(points) - self.center
        h = rel @ self.normal
        rad = np.linalg.norm(rel - h[:, None] * self.normal, axis=1)
        return (np.abs(h) <= tol * self.radius) & (rad <= self.radius * (1 + tol))

    def measure(self):
        return unit_ball_volume(self.n - 1) * self.radius ** (self.n - 1)

    def sample(self, resolution, seed=None):
        N = _check_res(resolution)
        B = _orthonormal_complement(self.normal)
        if self.n == 3:
            phase = 0.0 if seed is None else float(np.random.default_rng(seed).uniform(0, 2 * np.pi))
            uv = vogel_disk(N, self.radius, phase)
            w = np.full(N, self.measure() / N)
        else:
            sub = Ball(np.zeros(self.n - 1), self.radius).sample(N, seed)
            uv, w = sub.points, sub.quad_weights
        return PointCloud(self.center + uv @ B, w, self.n - 1, label="disk")

    def to_dict(self):
        return {"kind": "disk", "center": self.center.tolist(),
                "normal": self.normal.tolist(), "radius": float(self.radius)}


@dataclass(frozen=True, eq=False)
class Cylinder(AnalyticSet):
    """Surface of a circular cylinder segment in ``R^3`` (lateral part plus caps)."""

    start: np.ndarray
    direction: np.ndarray
    length: float
    radius: float
    caps: bool = True
    kind = "cylinder"

    def __post_init__(self):
        object.__setattr__(self, "start", _vec(self.start))
        d = _vec(self.direction)
        object.__setattr__(self, "direction", d / np.linalg.norm(d))
        if self.start.shape[0] != 3:
            raise InputError("cylinders are supported in R^3 only")
        if not (self.length > 0 and self.radius > 0):
            raise InputError("empty set: cylinder needs positive length and radius")

    @property
    def n(self):
        return 3

    def _axial(self, points):
        rel = np.atleast_2d(points) - self.start
        t = rel @ self.direction
        r = np.linalg.norm(rel - t[:, None] * self.direction, axis=1)
        return t, r

    def contains(self, points, tol: float = 1e-9):
        t, r = self._axial(points)
        s = tol * max(self.radius, self.length)
        lateral = (np.abs(r - self.radius) <= s) & (t >= -s) & (t <= self.length + s)
        if not self.caps:
            return lateral
        cap = ((np.abs(t) <= s) | (np.abs(t - self.length) <= s)) & (r <= self.radius + s)
        return lateral | cap

    def measure(self):
        a = 2 * np.pi * self.radius * self.length
        if self.caps:
            a += 2 * np.pi * self.radius**2
        return a

    def sample(self, resolution, seed=None):
        N = _check_res(resolution)
        lat_area = 2 * np.pi * self.radius * self.length
        cap_area = np.pi * self.radius**2 if self.caps else 0.0
        total = lat_area + 2 * cap_area
        spacing = math.sqrt(total / N)
        n_phi = max(3, int(round(2 * np.pi * self.radius / spacing)))
        n_t = max(1, int(round(N * lat_area / total / n_phi)))
        phase = 0.0 if seed is None else float(np.random.default_rng(seed).uniform(0, 2 * np.pi))
        B = _orthonormal_complement(self.direction)
        tt = (np.arange(n_t) + 0.5) * self.length / n_t
        pts = []
        for j, t in enumerate(tt):
            ph = phase + (np.arange(n_phi) + 0.5 * (j % 2)) * 2 * np.pi / n_phi
            ring = self.radius * (np.cos(ph)[:, None] * B[0] + np.sin(ph)[:, None] * B[1])
            pts.append(self.start + t * self.direction + ring)
        pts = np.vstack(pts)
        w = np.full(pts.shape[0], lat_area / pts.shape[0])
        clouds = [PointCloud(pts, w, 2)]
        if self.caps:
            n_cap = max(1, int(round(N * cap_area / total)))
            for t, nrm in ((0.0, -self.direction), (self.length, self.direction)):
                # cap atoms sit half a cell inside the rim so they stay separated
                disk = Disk(self.start + t * self.direction, nrm, self.radius * (1 - 0.5 / math.sqrt(n_cap + 1)))
                c = disk.sample(n_cap, seed)
                clouds.append(PointCloud(c.points, np.full(n_cap, cap_area / n_cap), 2))
        return PointCloud.concat(clouds, label="cylinder")

    def to_dict(self):
        return {"kind": "cylinder", "start": self.start.tolist(), "direction": self.direction.tolist(),
                "length": float(self.length), "radius": float(self.radius), "caps": bool(self.caps)}


# -- region predicates used by restrictions ---------------------------------

@dataclass(frozen=True)
class WholeSpace(AnalyticSet):
    kind = "whole_space"

    def contains(self, points):
        return np.ones(np.atleast_2d(points).shape[0], dtype=bool)

    def to_dict(self):
        return {"kind": "whole_space"}


@dataclass(frozen=True)
class EmptyRegion(AnalyticSet):
    kind = "empty"

    def contains(self, points):
        return np.zeros(np.atleast_2d(points).shape[0], dtype=bool)

    def to_dict(self):
        return {"kind": "empty"}


@dataclass(frozen=True, eq=False)
class OpenBall(AnalyticSet):
    """Open ball used as a restriction region."""

    center: np.ndarray
    radius: float
    kind = "open_ball"

    def __post_init__(self):
        object.__setattr__(self, "center", _vec(self.center))

    def contains(self, points):
        return np.linalg.norm(np.atleast_2d(points) - self.center, axis=1) < self.radius

    def to_dict(self):
        return {"kind": "open_ball", "center": self.center.tolist(), "radius": float(self.radius)}


@dataclass(frozen=True, eq=False)
class Complement(AnalyticSet):
    region: AnalyticSet
    kind = "complement"

    def contains(self, points):
        return ~np.asarray(self.region.contains(points), dtype=bool)

    def to_dict(self):
        return {"kind": "complement", "region": self.region.to_dict()}


@dataclass(frozen=True, eq=False)
class Predicate(AnalyticSet):
    """Region given by an arbitrary vectorised membership function."""

    func: object = field(repr=False)
    name: str = "predicate"
    kind = "predicate"

    def contains(self, points):
        return np.asarray(self.func(np.atleast_2d(points)), dtype=bool)

    def to_dict(self):
        return {"kind": "predicate", "name": self.name}


def _check_res(resolution) -> int:
    if int(resolution) != resolution or int(resolution) < 1:
        raise InputError(f"resolution must be a positive integer, got {resolution!r}")
    return int(resolution)


def sample_set(obj, resolution: int, seed=None) -> PointCloud:
    """Sample an analytic set or the boundary carrier of a domain geometry.

    Parameters
    ----------
    obj : AnalyticSet or DomainGeometry
        Geometries are sampled through their ``boundary_cloud`` (the
        boundary-concentrated F-carrier with far-field tail).
    resolution : int
        Approximate number of points.
    seed : int, optional
        Selects a rigid rotation or phase; identical inputs give identical clouds.
    """
    if obj is None:
        raise InputError("empty set description")
    _check_res(resolution)
    if hasattr(obj, "boundary_cloud"):
        return obj.boundary_cloud(resolution, seed=seed)
    if isinstance(obj, (WholeSpace, EmptyRegion, Predicate, Complement, OpenBall)):
        raise InputError(f"set of kind {obj.kind!r} cannot be sampled")
    return obj.sample(resolution, seed)


def set_from_dict(d: dict) -> AnalyticSet:
    """Inverse of ``AnalyticSet.to_dict`` for samplable sets and regions."""
    if not isinstance(d, dict) or "kind" not in d:
        raise InputError("set description needs a 'kind'")
    kind = d["kind"]
    try:
        if kind == "sphere":
            return Sphere(d["center"], float(d["radius"]))
        if kind == "ball":
            return Ball(d["center"], float(d["radius"]))
        if kind == "shell":
            return Shell(d["center"], float(d["r_in"]), float(d["r_out"]))
        if kind == "disk":
            return Disk(d["center"], d["normal"], float(d["radius"]))
        if kind == "cylinder":
            return Cylinder(d["start"], d["direction"], float(d["length"]), float(d["radius"]),
                            bool(d.get("caps", True)))
        if kind == "open_ball":
            return OpenBall(d["center"], float(d["radius"]))
        if kind == "whole_space":
            return WholeSpace()
        if kind == "empty":
            return EmptyRegion()
        if kind == "rotation_slice":
            from .geometry import Profile, rotation_body_slice

            return rotation_body_slice(Profile.from_dict(d["profile"]), int(d["k"]), float(d["q"]))
    except KeyError as exc:
        raise InputError(f"set of kind {kind!r} is missing field {exc}") from None
    raise InputError(f"unknown set kind {kind!r}")
