"""Point clouds: quadrature carriers for plates, slices and swept measures."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree

from .errors import InputError

#: minimum separation relative to the cloud's length scale
H_MIN_RELATIVE = 1e-6


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Weighted points in ``R^n``.

    Parameters
    ----------
    points : (N, n) array
    quad_weights : (N,) array
        Area or volume weights of the cells represented by the atoms.
    dim : int, optional
        Intrinsic dimension of the sampled region (``n`` for volumes,
        ``n - 1`` for surfaces).  ``None`` for bare atoms.
    log_ring_radius, ring_length, ring_tilt : (N,) arrays, optional
        Axisymmetric ring atoms (Newtonian kernel in R^3 only).  Atom ``i``
        stands for a conical panel of the surface of revolution: its meridian
        midpoint sits at axial coordinate ``t`` and radius
        ``exp(log_ring_radius[i])``, its meridian length is ``ring_length[i]``
        and ``ring_tilt[i]`` is the angle between the meridian segment and the
        axis (0 for a cylindrical band, pi/2 for a flat strip).  The log form
        keeps needles of radius ``exp(-1000)`` representable.  ``nan`` marks
        ordinary point atoms.
    axis : (origin, direction), optional
        Symmetry axis of the ring atoms.
    label : str
        Free-form tag used in file names and reports.
    """

    points: np.ndarray
    quad_weights: np.ndarray
    dim: int | None = None
    log_ring_radius: np.ndarray | None = None
    ring_length: np.ndarray | None = None
    ring_tilt: np.ndarray | None = None
    axis: tuple | None = None
    label: str = ""
    check_separation: bool = field(default=True, repr=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(1, -1) if pts.size else pts.reshape(0, 3)
        if pts.ndim != 2:
            raise InputError("points must be an (N, n) array")
        if not np.all(np.isfinite(pts)):
            raise InputError("NaN or infinite coordinates in point cloud")
        w = np.asarray(self.quad_weights, dtype=float).reshape(-1)
        if w.shape[0] != pts.shape[0]:
            raise InputError("points and quad_weights differ in length")
        if np.any(~np.isfinite(w)) or np.any(w < 0):
            raise InputError("quad_weights must be finite and nonnegative")
        object.__setattr__(self, "points", _frozen(pts))
        object.__setattr__(self, "quad_weights", _frozen(w))
        if self.dim is not None:
            object.__setattr__(self, "dim", int(self.dim))
        N = pts.shape[0]
        if self.log_ring_radius is not None:
            lr = np.asarray(self.log_ring_radius, dtype=float).reshape(-1)
            rl = np.asarray(self.ring_length, dtype=float).reshape(-1)
            tl = (np.zeros(N) if self.ring_tilt is None
                  else np.asarray(self.ring_tilt, dtype=float).reshape(-1))
            if lr.shape[0] != N or rl.shape[0] != N or tl.shape[0] != N:
                raise InputError("ring arrays must match the number of points")
            if self.axis is None:
                raise InputError("ring atoms need an axis")
            o, e = (np.asarray(v, dtype=float) for v in self.axis)
            e = e / np.linalg.norm(e)
            object.__setattr__(self, "axis", (_frozen(o), _frozen(e)))
            object.__setattr__(self, "log_ring_radius", _frozen(lr))
            object.__setattr__(self, "ring_length", _frozen(rl))
            object.__setattr__(self, "ring_tilt", _frozen(tl))
        if self.check_separation and N > 1:
            hmin = H_MIN_RELATIVE * max(self.scale, 1e-300)
            if self.min_separation < hmin:
                raise InputError(
                    f"points closer than the minimum separation {hmin:.3g}"
                )

    # -- basic properties -------------------------------------------------
    @property
    def size(self) -> int:
        return int(self.points.shape[0])

    def __len__(self) -> int:
        return self.size

    @property
    def n(self) -> int:
        return int(self.points.shape[1])

    @property
    def total_weight(self) -> float:
        return float(self.quad_weights.sum())

    @cached_property
    def scale(self) -> float:
        """Length scale: bounding-box diagonal, at least 1e-12."""
        if self.size == 0:
            return 1.0
        ext = self.points.max(axis=0) - self.points.min(axis=0)
        return float(max(np.linalg.norm(ext), 1e-12))

    @cached_property
    def _nn(self):
        if self.size < 2:
            return np.full(self.size, np.inf)
        d, _ = cKDTree(self.points).query(self.points, k=2)
        return d[:, 1]

    @property
    def nearest_distance(self) -> np.ndarray:
        """Distance from each atom to its nearest neighbour."""
        nn = self._nn
        if self.size == 1:
            return np.full(1, self.scale)
        return nn

    @property
    def min_separation(self) -> float:
        return float(self._nn.min()) if self.size > 1 else np.inf

    @cached_property
    def ring_mask(self) -> np.ndarray:
        if self.log_ring_radius is None:
            return np.zeros(self.size, dtype=bool)
        return ~np.isnan(self.log_ring_radius)

    @cached_property
    def ring_self_potential(self) -> np.ndarray:
        """Self-potentials of the ring panels (``nan`` for point atoms); computed once."""
        from .axisym import panel_self_potential

        out = np.full(self.size, np.nan)
        m = self.ring_mask
        if m.any():
            out[m] = panel_self_potential(self.log_ring_radius[m], self.ring_length[m], self.ring_tilt[m])
        out.setflags(write=False)
        return out

    def circumradius(self, center=None) -> float:
        c = np.zeros(self.n) if center is None else np.asarray(center, dtype=float)
        if self.size == 0:
            return 0.0
        return float(np.linalg.norm(self.points - c, axis=1).max())

    def _ring_kw(self, idx=slice(None)) -> dict:
        if self.log_ring_radius is None:
            return {}
        return dict(
            log_ring_radius=self.log_ring_radius[idx],
            ring_length=self.ring_length[idx],
            ring_tilt=self.ring_tilt[idx],
            axis=self.axis,
        )

    def axial_coordinates(self, origin=None, direction=None):
        """Axial coordinate and distance to the axis (ring radius for rings)."""
        if origin is None:
            origin, direction = self.axis
        e = np.asarray(direction, dtype=float)
        e = e / np.linalg.norm(e)
        rel = self.points - np.asarray(origin, dtype=float)
        t = rel @ e
        r = np.linalg.norm(rel - t[:, None] * e[None, :], axis=1)
        if self.log_ring_radius is not None:
            m = self.ring_mask
            r = r.copy()
            r[m] = np.exp(self.log_ring_radius[m])
        return t, r

    # -- derived clouds ---------------------------------------------------
    def subset(self, idx, label: str | None = None) -> "PointCloud":
        idx = np.asarray(idx)
        kw = self._ring_kw(idx)
        return PointCloud(
            self.points[idx], self.quad_weights[idx], self.dim,
            label=self.label if label is None else label, check_separation=False, **kw,
        )

    def with_weights(self, weights) -> "PointCloud":
        kw = self._ring_kw()
        return PointCloud(self.points, weights, self.dim, label=self.label, check_separation=False, **kw)

    def transformed(self, rotation=None, shift=None, scale: float = 1.0) -> "PointCloud":
        """Image under ``x -> scale * R x + shift``; weights scale with ``dim``."""
        R = np.eye(self.n) if rotation is None else np.asarray(rotation, dtype=float)
        b = np.zeros(self.n) if shift is None else np.asarray(shift, dtype=float)
        pts = scale * self.points @ R.T + b
        d = self.dim if self.dim is not None else 0
        kw = {}
        if self.log_ring_radius is not None:
            o, e = self.axis
            kw = dict(
                log_ring_radius=self.log_ring_radius + np.log(scale),
                ring_length=self.ring_length * scale,
                ring_tilt=self.ring_tilt,
                axis=(scale * R @ o + b, R @ e),
            )
        return PointCloud(pts, self.quad_weights * scale**d, self.dim, label=self.label,
                          check_separation=False, **kw)

    @staticmethod
    def concat(clouds, label: str = "") -> "PointCloud":
        clouds = [c for c in clouds if c.size]
        if not clouds:
            raise InputError("nothing to concatenate")
        dims = {c.dim for c in clouds}
        dim = dims.pop() if len(dims) == 1 else None
        kw = {}
        if any(c.log_ring_radius is not None for c in clouds):
            axis = next(c.axis for c in clouds if c.axis is not None)
            kw = dict(
                log_ring_radius=np.concatenate([
                    c.log_ring_radius if c.log_ring_radius is not None else np.full(c.size, np.nan)
                    for c in clouds]),
                ring_length=np.concatenate([
                    c.ring_length if c.ring_length is not None else np.full(c.size, np.nan)
                    for c in clouds]),
                ring_tilt=np.concatenate([
                    c.ring_tilt if c.ring_tilt is not None else np.zeros(c.size)
                    for c in clouds]),
                axis=axis,
            )
        return PointCloud(
            np.vstack([c.points for c in clouds]),
            np.concatenate([c.quad_weights for c in clouds]),
            dim, label=label, **kw,
        )

    # -- serialization ------------------------------------------------------
    def to_csv(self, path=None) -> str:
        """CSV with columns ``x1..xn, weight``; returns the text."""
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow([f"x{i + 1}" for i in range(self.n)] + ["weight"])
        for p, w in zip(self.points, self.quad_weights):
            wr.writerow([repr(float(v)) for v in p] + [repr(float(w))])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path_or_text, dim: int | None = None, label: str = "") -> "PointCloud":
        if "\n" in str(path_or_text):
            text = str(path_or_text)
        else:
            with open(path_or_text) as fh:
                text = fh.read()
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], rows[1:]
        if not header or header[-1] != "weight":
            raise InputError("point-cloud CSV needs columns x1..xn, weight")
        arr = np.array([[float(v) for v in r] for r in body if r], dtype=float)
        n = len(header) - 1
        if arr.size == 0:
            arr = arr.reshape(0, n + 1)
        return cls(arr[:, :n], arr[:, n], dim, label=label)

    def to_dict(self) -> dict:
        d = {
            "points": self.points.tolist(),
            "weights": self.quad_weights.tolist(),
            "dim": self.dim,
            "label": self.label,
        }
        if self.log_ring_radius is not None:
            d["log_ring_radius"] = [None if np.isnan(v) else float(v) for v in self.log_ring_radius]
            d["ring_length"] = [None if np.isnan(v) else float(v) for v in self.ring_length]
            d["ring_tilt"] = self.ring_tilt.tolist()
            d["axis"] = [self.axis[0].tolist(), self.axis[1].tolist()]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PointCloud":
        kw = {}
        if d.get("log_ring_radius") is not None:
            kw = dict(
                log_ring_radius=[np.nan if v is None else v for v in d["log_ring_radius"]],
                ring_length=[np.nan if v is None else v for v in d["ring_length"]],
                ring_tilt=d.get("ring_tilt"),
                axis=tuple(d["axis"]),
            )
        pts = np.asarray(d["points"], dtype=float)
        return cls(pts, d["weights"], d.get("dim"), label=d.get("label", ""), **kw)

    def same_as(self, other: "PointCloud") -> bool:
        return (
            self is other
            or (self.points.shape == other.points.shape
                and np.array_equal(self.points, other.points)
                and np.array_equal(self.quad_weights, other.quad_weights))
        )
