"""Unsolvability, continuity and refinement experiments on families of problems."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from .balayage import sweep_measure
from .clouds import PointCloud
from .energy import standard_energy
from .equilibrium import green_equilibrium
from .errors import ConstructionError, InputError
from .green import green_matrix
from .kernels import KernelSpec
from .measures import Constraint, DiscreteMeasure, signed
from .parallel import pmap
from .sampling import Cylinder
from .solver import CondenserProblem, atomwise_error, solve_green_gauss


def _csv(header, rows) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    for r in rows:
        wr.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# distances between measures
# ---------------------------------------------------------------------------

def transfer_masses(m: DiscreteMeasure, cloud: PointCloud) -> np.ndarray:
    """Masses of ``m`` moved to the nearest atom of ``cloud`` (total mass kept)."""
    out = np.zeros(cloud.size)
    if m.size:
        _, idx = cKDTree(cloud.points).query(m.cloud.points)
        np.add.at(out, idx, m.masses)
    return out


def green_distance(spec: KernelSpec, D, m1: DiscreteMeasure, m2: DiscreteMeasure,
                   diagonal_policy=None, sweeper=None) -> float:
    """Green energy norm ``||m1 - m2||_g`` on the cloud of ``m2``.

    On a different cloud ``m1`` is first moved to its nearest ``m2``-atoms, so
    both measures share the cell self terms; a point-kernel cross term between
    two discretizations of the same measure would not vanish under refinement.
    """
    if m1.cloud is m2.cloud or m1.cloud.same_as(m2.cloud):
        d = m1.masses - m2.masses
    else:
        d = transfer_masses(m1, m2.cloud) - m2.masses
    G = green_matrix(spec, D, m2.cloud, None, diagonal_policy, sweeper)
    return float(np.sqrt(max(d @ G @ d, 0.0)))


def _binned(m: DiscreteMeasure, max_atoms: int):
    live = m.masses > 0
    X, w = m.cloud.points[live], m.masses[live]
    if X.shape[0] <= max_atoms:
        return X, w, 0.0
    lo, hi = X.min(axis=0), X.max(axis=0)
    cell = float(np.max(hi - lo)) / max(1, int(max_atoms ** (1.0 / X.shape[1])))
    while True:
        key = np.floor((X - lo) / cell).astype(np.int64)
        uk, inv = np.unique(key, axis=0, return_inverse=True)
        if uk.shape[0] <= max_atoms:
            break
        cell *= 1.25
    inv = inv.reshape(-1)
    W = np.bincount(inv, weights=w)
    C = np.column_stack([np.bincount(inv, weights=w * X[:, j]) for j in range(X.shape[1])]) / W[:, None]
    return C, W, cell * np.sqrt(X.shape[1])


def bounded_lipschitz_distance(m1: DiscreteMeasure, m2: DiscreteMeasure, max_atoms: int = 200) -> dict:
    """Bounded-Lipschitz distance ``sup |int f d(m1 - m2)|`` over ``|f| <= 1``, ``Lip f <= 1``.

    Computed as a partial transport problem with cost ``min(|x - y|, 2)``
    and unit cost per unit of unmatched mass.  Measures with more than
    ``max_atoms`` live atoms are first binned on a grid; ``bin_error`` bounds
    the resulting change of the distance.
    """
    X, a, ea = _binned(m1, max_atoms)
    Y, b, eb = _binned(m2, max_atoms)
    if a.size == 0 or b.size == 0:
        return {"distance": float(a.sum() + b.sum()), "bin_error": 0.0}
    C = np.minimum(cdist(X, Y), 2.0)
    na, nb = a.size, b.size
    # minimize sum pi_ij (c_ij - 2) + sum a + sum b
    cost = (C - 2.0).ravel()
    rows = np.zeros((na, na * nb))
    for i in range(na):
        rows[i, i * nb:(i + 1) * nb] = 1.0
    cols = np.zeros((nb, na * nb))
    for j in range(nb):
        cols[j, j::nb] = 1.0
    res = linprog(cost, A_ub=np.vstack([rows, cols]), b_ub=np.concatenate([a, b]), bounds=(0, None),
                  method="highs")
    if res.status != 0:
        raise ConstructionError(f"transport LP failed: {res.message}")
    dist = float(res.fun + a.sum() + b.sum())
    return {"distance": max(dist, 0.0), "bin_error": float((ea * a.sum() + eb * b.sum()))}


# ---------------------------------------------------------------------------
# unsolvability
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CylinderFamily:
    """Consecutive pieces of a cylinder receding to infinity inside a half-space.

    Piece ``k`` (``k = 1, 2, ...``) has length ``base_length + step * k``
    and starts ``gap`` after the previous one.
    """

    start: tuple = (1.0, 0.0, 0.0)
    direction: tuple = (0.0, 1.0, 0.0)
    radius: float = 0.5
    base_length: float = 2.0
    step: float = 3.0
    gap: float = 1.0
    points_per_area: float = 10.0

    def length(self, k: int) -> float:
        return self.base_length + self.step * k

    def piece(self, k: int) -> Cylinder:
        s = sum(self.length(j) + self.gap for j in range(1, k))
        e = np.asarray(self.direction, dtype=float)
        e = e / np.linalg.norm(e)
        return Cylinder(np.asarray(self.start, dtype=float) + s * e, e, self.length(k), self.radius)

    def sample(self, k: int, resolution: int | None = None) -> PointCloud:
        c = self.piece(k)
        N = resolution or int(np.ceil(self.points_per_area * c.measure()))
        return c.sample(N)

    def to_dict(self) -> dict:
        return {"kind": "cylinder_family", "start": list(self.start), "direction": list(self.direction),
                "radius": self.radius, "base_length": self.base_length, "step": self.step,
                "gap": self.gap, "points_per_area": self.points_per_area}


@dataclass
class UnsolvabilityRecord:
    k: list
    green_energy: list
    bound: list
    weak_objective: list
    capacity: list
    sigma0_mass: float
    monotone: bool
    valid: bool
    sigma0: DiscreteMeasure | None = field(default=None, repr=False)

    def rows(self):
        return list(zip(self.k, self.capacity, self.green_energy, self.bound, self.weak_objective))

    def to_dict(self) -> dict:
        return {"k": self.k, "capacity": self.capacity, "green_energy": self.green_energy,
                "bound": self.bound, "weak_objective": self.weak_objective,
                "sigma0_mass": self.sigma0_mass, "monotone": self.monotone, "valid": self.valid}

    def to_csv(self) -> str:
        return _csv(["k", "green_capacity", "green_energy", "bound", "weak_objective"], self.rows())


def _unsolvability_term(k, spec, D, family, resolution, F_resolution):
    cloud = family(k) if callable(family) else family.sample(k, resolution)
    eq = green_equilibrium(spec, D, cloud)
    nu = eq.gamma.scaled(1.0 / eq.gamma.total_mass)
    energy = 1.0 / eq.capacity
    swept = sweep_measure(spec, D, nu, F_resolution).swept
    weak = standard_energy(spec, signed(nu, swept)).value
    return nu, eq.capacity, energy, weak


def unsolvability_demo(spec: KernelSpec, D, family, k_max: int = 6, resolution: int | None = None,
                       F_resolution: int = 1500, jobs: int = 1) -> UnsolvabilityRecord:
    """Probability measures ``nu_k`` on disjoint far pieces with ``||nu_k||_g^2 <= 1/k``.

    ``nu_k`` is the normalized Green equilibrium measure of piece ``k``, so
    its Green energy is ``1 / c_g(piece)``.  Their sum ``sigma0`` is a
    constraint for which the infimum of the weak problem is 0 and not
    attained.  The weak objective of ``nu_k`` is the discrete standard energy
    of ``nu_k - nu_k'``.
    """
    if int(k_max) != k_max or k_max < 1:
        raise InputError("k_max must be a positive integer")
    ks = list(range(1, int(k_max) + 1))
    from functools import partial

    terms = pmap(partial(_unsolvability_term, spec=spec, D=D, family=family, resolution=resolution,
                         F_resolution=F_resolution), ks, jobs)
    nus = [t[0] for t in terms]
    caps = [float(t[1]) for t in terms]
    energies = [float(t[2]) for t in terms]
    weak = [float(t[3]) for t in terms]
    bounds = [1.0 / k for k in ks]
    bad = [k for k, e in zip(ks, energies) if e > 1.0 / k * (1.0 + 1e-12)]
    cloud = PointCloud.concat([n.cloud for n in nus], label="sigma0")
    sigma0 = DiscreteMeasure(cloud, np.concatenate([n.masses for n in nus]))
    monotone = bool(np.all(np.diff(weak) <= 0.0))
    rec = UnsolvabilityRecord(ks, energies, bounds, weak, caps, sigma0.total_mass, monotone, not bad, sigma0)
    if bad:
        raise ConstructionError(
            f"energy bound 1/k fails for k in {bad}",
            data={"k": ks, "green_energy": energies, "bound": bounds},
        )
    return rec


# ---------------------------------------------------------------------------
# continuity
# ---------------------------------------------------------------------------

@dataclass
class ContinuityRecord:
    objectives: list
    limit_objective: float
    gaps: list
    green_distances: list
    limit_norm: float
    bl_plus: list
    bl_minus: list
    monotone_objectives: bool
    converged: list

    @property
    def relative_gaps(self) -> list:
        return [g / abs(self.limit_objective) for g in self.gaps]

    @property
    def relative_distances(self) -> list:
        return [d / self.limit_norm for d in self.green_distances]

    def to_dict(self) -> dict:
        return {"objectives": self.objectives, "limit_objective": self.limit_objective,
                "gaps": self.gaps, "relative_gaps": self.relative_gaps,
                "green_distances": self.green_distances, "relative_distances": self.relative_distances,
                "limit_norm": self.limit_norm, "bl_plus": self.bl_plus, "bl_minus": self.bl_minus,
                "monotone_objectives": self.monotone_objectives, "converged": self.converged}

    def to_csv(self) -> str:
        rows = [(k + 1, o, g, d, bp, "" if bm is None else bm)
                for k, (o, g, d, bp, bm) in enumerate(zip(self.objectives, self.gaps, self.green_distances,
                                                          self.bl_plus, self.bl_minus))]
        return _csv(["k", "objective_green", "gap", "green_distance", "bl_plus", "bl_minus"], rows)


def _solve(p: CondenserProblem):
    return solve_green_gauss(p, assemble=p.weak != "none")


def _check_nested(problems, limit, sets):
    if sets is not None:
        if len(sets) != len(problems):
            raise InputError("need one set per problem for the nesting check")
        for k in range(1, len(problems)):
            if not np.all(sets[k - 1].contains(problems[k].A_cloud.points)):
                raise InputError(f"A_{k + 1} is not contained in A_{k}")
        if not np.all(sets[-1].contains(limit.A_cloud.points)):
            raise InputError("limit set is not contained in the family")
    chain = list(problems) + [limit]
    for a, b in zip(chain[:-1], chain[1:]):
        if a.A_cloud.same_as(b.A_cloud) and not (a.sigma.is_infinite or b.sigma.is_infinite):
            if np.any(b.sigma.sigma.masses > a.sigma.sigma.masses * (1 + 1e-12)):
                raise InputError("constraints must decrease along the family")
        elif a.A_cloud.same_as(b.A_cloud) and a.sigma.is_infinite is False and b.sigma.is_infinite:
            raise InputError("constraints must decrease along the family")


def continuity_experiment(problems: list, limit: CondenserProblem, sets=None, jobs: int = 1,
                          bl_atoms: int = 200) -> ContinuityRecord:
    """Solve a decreasing family and measure its approach to the limit problem.

    ``sets`` optionally lists analytic sets ``A_k`` used to check nesting of
    the samples.  Reports objective gaps, Green distances of the minimizers,
    and (for separated plates) bounded-Lipschitz distances of both parts.
    """
    problems = list(problems)
    if not problems:
        raise InputError("empty family")
    _check_nested(problems, limit, sets)
    reports = pmap(_solve, problems + [limit], jobs)
    lim = reports[-1]
    reps = reports[:-1]
    spec, D = limit.spec, limit.D
    sweeper = limit.make_sweeper()
    obj = [r.objective_green for r in reps]
    gaps = [abs(o - lim.objective_green) for o in obj]
    zero = DiscreteMeasure.zero(limit.A_cloud)
    norm = green_distance(spec, D, lim.lambda_plus, zero, limit.diagonal_policy, sweeper)
    dists = [green_distance(spec, D, r.lambda_plus, lim.lambda_plus, limit.diagonal_policy, sweeper)
             for r in reps]
    sep = limit.plates_separated()
    bl_plus = [bounded_lipschitz_distance(r.lambda_plus, lim.lambda_plus, bl_atoms)["distance"] for r in reps]
    bl_minus = []
    for r in reps:
        if sep and r.lambda_minus is not None and lim.lambda_minus is not None:
            bl_minus.append(bounded_lipschitz_distance(r.lambda_minus, lim.lambda_minus, bl_atoms)["distance"])
        else:
            bl_minus.append(None)
    mono = bool(np.all(np.diff(obj + [lim.objective_green]) >= -1e-12 * max(1.0, abs(lim.objective_green))))
    return ContinuityRecord(obj, lim.objective_green, gaps, dists, norm, bl_plus, bl_minus, mono,
                            [r.converged for r in reports])


def scaled_constraint_family(p: CondenserProblem, k_max: int) -> list:
    """Problems with ``sigma_k = (1 + 1/k) sigma`` for ``k = 1..k_max``."""
    if p.sigma.is_infinite:
        raise InputError("the scaled family needs a finite constraint")
    return [p.with_constraint(p.sigma.scaled(1.0 + 1.0 / k)) for k in range(1, k_max + 1)]


# ---------------------------------------------------------------------------
# refinement study
# ---------------------------------------------------------------------------

@dataclass
class RefinementStudy:
    rows: list
    separated: bool

    HEADER = ("resolution", "atoms", "green_energy", "standard_energy_plus", "standard_energy_pair",
              "weak_objective", "ratio", "equilibrium_error", "dot_w_equals_w")

    def ratios(self) -> list:
        return [r[6] for r in self.rows]

    def ratio_spread(self) -> float:
        r = np.asarray(self.ratios())
        return float((r.max() - r.min()) / np.mean(r))

    def to_dict(self) -> dict:
        return {"separated": self.separated, "rows": [dict(zip(self.HEADER, r)) for r in self.rows]}

    def to_csv(self) -> str:
        return _csv(self.HEADER, self.rows)


def _refine_one(resolution, make_problem):
    p = make_problem(resolution)
    if not (p.sigma.is_infinite and p.field_free):
        raise InputError("refinement study needs sigma = inf and no field")
    rep = solve_green_gauss(p)
    eq = green_equilibrium(p.spec, p.D, p.A_cloud, p.diagonal_policy, p.make_sweeper())
    err = atomwise_error(rep.lambda_plus.masses, eq.gamma.masses / eq.capacity)
    eg = rep.energies["green"].value
    ep = rep.energies["standard_plus"].value
    epair = rep.energies["standard_pair"].value
    return (int(resolution), int(p.A_cloud.size), eg, ep, epair, rep.objective_weak, epair / eg, err, True,
            p.plates_separated())


def weak_vs_standard_refinement_study(make_problem, resolutions, jobs: int = 1) -> RefinementStudy:
    """Field-free, unconstrained solves at increasing resolution.

    ``make_problem(resolution)`` builds each instance (a module-level
    function when ``jobs > 1``).  Rows hold the Green energy of the
    minimizer, the standard energies of the minimizer and of the signed
    pair, and the atomwise gap to ``gamma_A / c_g(A)``.  At discrete scale
    the weak and standard infima coincide, recorded as ``dot_w_equals_w``.
    """
    from functools import partial

    out = pmap(partial(_refine_one, make_problem=make_problem), list(resolutions), jobs)
    sep = all(r[-1] for r in out)
    return RefinementStudy([r[:-1] for r in out], sep)
