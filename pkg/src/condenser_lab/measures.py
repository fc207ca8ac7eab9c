"""Discrete positive measures, condenser pairs and upper constraints."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .clouds import PointCloud
from .errors import ConstructionError, InfeasibleConstraintError, InputError

#: slack of the atomwise domination test
DOMINATION_SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Nonnegative masses on the atoms of a :class:`PointCloud`."""

    cloud: PointCloud
    masses: np.ndarray

    def __post_init__(self):
        m = np.array(self.masses, dtype=float, copy=True).reshape(-1)
        if m.shape[0] != self.cloud.size:
            raise InputError(f"{m.shape[0]} masses for {self.cloud.size} atoms")
        if not np.all(np.isfinite(m)):
            raise InputError("masses must be finite")
        if np.any(m < 0):
            raise InputError("masses must be nonnegative")
        m.setflags(write=False)
        object.__setattr__(self, "masses", m)

    # -- constructors -------------------------------------------------------
    @classmethod
    def atom(cls, y, mass: float = 1.0, label: str = "atom") -> "DiscreteMeasure":
        """Point mass ``mass * eps_y``."""
        y = np.asarray(y, dtype=float).reshape(1, -1)
        return cls(PointCloud(y, np.zeros(1), None, label=label), [mass])

    @classmethod
    def zero(cls, cloud: PointCloud) -> "DiscreteMeasure":
        return cls(cloud, np.zeros(cloud.size))

    @classmethod
    def from_weights(cls, cloud: PointCloud, total: float | None = None) -> "DiscreteMeasure":
        """Masses equal to the quadrature weights, optionally rescaled to ``total``."""
        w = cloud.quad_weights.astype(float)
        if total is not None:
            s = w.sum()
            if s <= 0:
                raise InputError("cloud has zero total weight")
            w = w * (total / s)
        return cls(cloud, w)

    # -- basic queries ------------------------------------------------------
    @property
    def size(self) -> int:
        return self.cloud.size

    @property
    def n(self) -> int:
        return self.cloud.n

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.masses))

    def support(self, threshold: float = 0.0) -> np.ndarray:
        """Boolean mask of atoms with mass above ``threshold``."""
        return self.masses > threshold

    def scaled(self, c: float) -> "DiscreteMeasure":
        if c < 0:
            raise InputError("negative scaling of a positive measure")
        return DiscreteMeasure(self.cloud, self.masses * c)

    def with_masses(self, masses) -> "DiscreteMeasure":
        return DiscreteMeasure(self.cloud, masses)

    def __add__(self, other: "DiscreteMeasure") -> "DiscreteMeasure":
        if not self.cloud.same_as(other.cloud):
            raise InputError("adding measures on different clouds")
        return DiscreteMeasure(self.cloud, self.masses + other.masses)

    def restrict(self, region) -> "DiscreteMeasure":
        return restrict(self, region)

    def compact(self) -> "DiscreteMeasure":
        """Drop zero-mass atoms."""
        keep = np.nonzero(self.masses > 0)[0]
        return DiscreteMeasure(self.cloud.subset(keep), self.masses[keep])

    # -- serialization ------------------------------------------------------
    def to_csv(self, path=None) -> str:
        """CSV with columns ``x1..xn, mass``."""
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow([f"x{i + 1}" for i in range(self.n)] + ["mass"])
        for p, m in zip(self.cloud.points, self.masses):
            wr.writerow([repr(float(v)) for v in p] + [repr(float(m))])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path_or_text, dim=None, label: str = "") -> "DiscreteMeasure":
        text = str(path_or_text)
        if "\n" not in text:
            with open(text) as fh:
                text = fh.read()
        rows = [r for r in csv.reader(io.StringIO(text)) if r]
        if not rows or rows[0][-1] != "mass":
            raise InputError("measure CSV needs columns x1..xn, mass")
        n = len(rows[0]) - 1
        arr = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(-1, n + 1)
        cloud = PointCloud(arr[:, :n], np.zeros(arr.shape[0]), dim, label=label)
        return cls(cloud, arr[:, n])

    def to_dict(self) -> dict:
        return {"cloud": self.cloud.label, "masses": self.masses.tolist(),
                "total_mass": self.total_mass}


def total_mass(m: DiscreteMeasure) -> float:
    """Total mass of ``m``."""
    return m.total_mass


def restrict(m: DiscreteMeasure, region) -> DiscreteMeasure:
    """Keep the atoms of ``m`` inside ``region``, dropping the rest.

    ``region`` is any object with a vectorized ``contains(points)`` method.
    """
    if m.size == 0:
        return m
    inside = np.asarray(region.contains(m.cloud.points), dtype=bool)
    keep = np.nonzero(inside)[0]
    return DiscreteMeasure(m.cloud.subset(keep), m.masses[keep])


@dataclass(frozen=True, eq=False)
class Constraint:
    """Upper constraint ``sigma`` on the A-cloud; ``sigma=None`` means no constraint."""

    sigma: DiscreteMeasure | None = None

    def __post_init__(self):
        if self.sigma is not None and not self.sigma.total_mass > 1.0:
            raise InfeasibleConstraintError(
                f"constraint total mass {self.sigma.total_mass:.6g} must exceed 1",
                data={"sigma_total": self.sigma.total_mass},
            )

    @classmethod
    def infinite(cls) -> "Constraint":
        return cls(None)

    @property
    def is_infinite(self) -> bool:
        return self.sigma is None

    def upper_bounds(self, cloud: PointCloud) -> np.ndarray:
        """Per-atom bounds on ``cloud`` (``inf`` when unconstrained)."""
        if self.sigma is None:
            return np.full(cloud.size, np.inf)
        if not self.sigma.cloud.same_as(cloud):
            raise InputError("constraint lives on a different cloud")
        return self.sigma.masses.copy()

    def scaled(self, c: float) -> "Constraint":
        return self if self.sigma is None else Constraint(self.sigma.scaled(c))

    def to_dict(self) -> dict:
        if self.sigma is None:
            return {"kind": "infinite"}
        return {"kind": "measure", "total_mass": self.sigma.total_mass,
                "masses": self.sigma.masses.tolist()}


def is_dominated(nu: DiscreteMeasure, c: Constraint) -> bool:
    """True iff ``nu <= sigma`` atomwise (with a ``1e-12`` slack)."""
    if c.sigma is None:
        return True
    if not nu.cloud.same_as(c.sigma.cloud):
        raise InputError("measure and constraint must share a cloud")
    return bool(np.all(nu.masses <= c.sigma.masses + DOMINATION_SLACK))


@dataclass(frozen=True, eq=False)
class SignedCondenserMeasure:
    """Pair ``mu = plus - minus`` with ``plus`` carried by A and ``minus`` by F."""

    plus: DiscreteMeasure
    minus: DiscreteMeasure

    def __post_init__(self):
        if self.plus.size and self.minus.size:
            if self.plus.n != self.minus.n:
                raise InputError("plus and minus parts live in different dimensions")
            a = self.plus.cloud.points[self.plus.masses > 0]
            b = self.minus.cloud.points[self.minus.masses > 0]
            if len(a) and len(b):
                from scipy.spatial import cKDTree

                d, _ = cKDTree(b).query(a)
                if np.any(d == 0.0):
                    raise ConstructionError("plus and minus parts share atoms")

    @property
    def n(self) -> int:
        return self.plus.n if self.plus.size else self.minus.n

    @property
    def normalized(self) -> bool:
        return abs(self.plus.total_mass - 1.0) < 1e-9 and abs(self.minus.total_mass - 1.0) < 1e-9

    @property
    def net_mass(self) -> float:
        return self.plus.total_mass - self.minus.total_mass

    def is_zero(self) -> bool:
        return not (np.any(self.plus.masses > 0) or np.any(self.minus.masses > 0))

    def combined(self):
        """Concatenated cloud and signed weight vector ``(cloud, w)``."""
        cloud = PointCloud.concat([self.plus.cloud, self.minus.cloud], label="signed")
        w = np.concatenate([self.plus.masses, -self.minus.masses])
        return cloud, w

    def scaled(self, c: float) -> "SignedCondenserMeasure":
        if c >= 0:
            return SignedCondenserMeasure(self.plus.scaled(c), self.minus.scaled(c))
        return SignedCondenserMeasure(self.minus.scaled(-c), self.plus.scaled(-c))

    def to_dict(self) -> dict:
        return {"plus": self.plus.to_dict(), "minus": self.minus.to_dict(),
                "normalized": self.normalized}


def signed(plus: DiscreteMeasure, minus: DiscreteMeasure | None = None) -> SignedCondenserMeasure:
    """Signed measure from parts; a missing minus part is the empty measure."""
    if minus is None:
        minus = DiscreteMeasure(PointCloud(np.zeros((0, plus.n)), np.zeros(0)), np.zeros(0))
    return SignedCondenserMeasure(plus, minus)
