"""Constrained Gauss problem on a generalized condenser.

The weak condenser problem is reduced to a Green-kernel problem on the
A-plate: minimize ``w'Gw + 2 b'w`` over probability vectors ``w`` on the
A-cloud with ``w <= sigma``, where ``b`` is the Green potential of the
field charge.  The signed solution is the minimizer minus its balayage
onto ``F``, and its weak Gauss integral must match the Green objective.
"""
from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .balayage import Sweeper, check_points, default_F_cloud, sweep_measure
from .clouds import PointCloud
from .energy import (EnergyReport, _green_kernel, gauss_integral_standard, green_energy, parts, potential,
                     quadratic, standard_energy)
from .errors import GeometryError, InputError, CarrierError
from .geometry import NOT_THIN, DomainGeometry
from .green import check_in_D, green_matrix
from .kernels import DiagonalPolicy, KernelSpec, self_terms
from .measures import Constraint, DiscreteMeasure, SignedCondenserMeasure, signed
from .qp import kkt_level, kkt_violations, solve_box_simplex_qp
from .weak import gauss_integral_weak

log = logging.getLogger(__name__)

#: gap between the plates, in A-sample spacings, above which they count as separated
SEPARATION_SPACINGS = 3.0

WEAK_MODES = ("grid", "standard", "none")


@dataclass(eq=False)
class CondenserProblem:
    """Data of one constrained condenser problem.

    Parameters
    ----------
    spec, D : kernel and domain
    A_cloud : samples of the plate ``A`` (strictly inside ``D``)
    sigma : upper constraint on ``A_cloud``; ``Constraint.infinite()`` for none
    theta : field charge carried by ``D`` (``DiscreteMeasure``,
        ``SignedCondenserMeasure`` with both parts in ``D``, or ``None``)
    tol : relative KKT tolerance
    F_resolution : carrier size for sweeps onto ``F``
    weak : ``"grid"`` (weak energy on a volume grid), ``"standard"`` (discrete
        standard energy of the signed pair) or ``"none"``
    touching : declare the plates touching (``True``) or separated
        (``False``); ``None`` infers it from the samples
    """

    spec: KernelSpec
    D: DomainGeometry
    A_cloud: PointCloud
    sigma: Constraint = field(default_factory=Constraint.infinite)
    theta: object = None
    tol: float = 1e-6
    diagonal_policy: DiagonalPolicy | None = None
    F_resolution: int = 800
    weak: str = "grid"
    n_dir: int = 3000
    seed: int = 0
    label: str = ""
    touching: bool | None = None

    def __post_init__(self):
        if self.spec.n != self.D.n or self.A_cloud.n != self.spec.n:
            raise InputError("kernel, geometry and A-cloud dimensions differ")
        if self.A_cloud.size == 0:
            raise InputError("A-cloud is empty")
        check_in_D(self.D, self.A_cloud, "A-cloud")
        if self.weak not in WEAK_MODES:
            raise InputError(f"weak must be one of {WEAK_MODES}")
        if not self.sigma.is_infinite:
            self.sigma.upper_bounds(self.A_cloud)  # same-cloud check
        for m, _ in parts(self.theta):
            live = m.masses > 0
            if live.any() and not np.all(self.D.in_D(m.cloud.points[live])):
                raise CarrierError("field charge must be carried by D")
        if self.D.thinness_class != NOT_THIN:
            warnings.warn(f"F is {self.D.thinness_class}: the reduction to the Green problem "
                          "is only guaranteed when F is not thin at infinity", stacklevel=2)

    @property
    def field_free(self) -> bool:
        return all(not np.any(m.masses) for m, _ in parts(self.theta))

    @property
    def thinness_class(self) -> str:
        return self.D.thinness_class

    def plates_separated(self) -> bool:
        """Whether ``dist(A, F)`` exceeds a few sample spacings (or the declared flag)."""
        if self.touching is not None:
            return not self.touching
        d = float(np.min(self.D.signed_distance(self.A_cloud.points)))
        spacing = float(np.median(self.A_cloud.nearest_distance)) if self.A_cloud.size > 1 else 0.0
        return d > SEPARATION_SPACINGS * spacing

    def with_constraint(self, sigma: Constraint) -> "CondenserProblem":
        kw = {k: getattr(self, k) for k in self.__dataclass_fields__}
        kw["sigma"] = sigma
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return CondenserProblem(**kw)

    def make_sweeper(self) -> Sweeper | None:
        if self.D.has_closed_form_green:
            return None
        focus = np.average(self.A_cloud.points, axis=0)
        return Sweeper(self.spec, self.D, default_F_cloud(self.spec, self.D, self.F_resolution, self.seed, focus),
                       self.diagonal_policy)


@dataclass
class SolveReport:
    lambda_plus: DiscreteMeasure
    lambda_minus: DiscreteMeasure | None
    objective_green: float
    objective_weak: float | None
    w: float
    kkt_lower_violation: float
    kkt_upper_violation: float
    iterations: int
    converged: bool
    method: str = ""
    objective_green_error: float = 0.0
    objective_weak_error: float | None = None
    weak_method: str = ""
    energies: dict = field(default_factory=dict)
    balayage: dict = field(default_factory=dict)
    thinness_class: str = NOT_THIN
    warnings: list = field(default_factory=list)

    @property
    def bridge_gap(self) -> float | None:
        if self.objective_weak is None:
            return None
        return abs(self.objective_green - self.objective_weak)

    @property
    def combined_error(self) -> float | None:
        if self.objective_weak_error is None:
            return None
        return self.objective_green_error + self.objective_weak_error

    def signed_solution(self) -> SignedCondenserMeasure:
        return signed(self.lambda_plus, self.lambda_minus)

    def to_dict(self) -> dict:
        return {
            "converged": self.converged,
            "objective_green": self.objective_green,
            "objective_green_error": self.objective_green_error,
            "objective_weak": self.objective_weak,
            "objective_weak_error": self.objective_weak_error,
            "weak_method": self.weak_method,
            "bridge_gap": self.bridge_gap,
            "w": self.w,
            "kkt_lower_violation": self.kkt_lower_violation,
            "kkt_upper_violation": self.kkt_upper_violation,
            "iterations": self.iterations,
            "method": self.method,
            "plus_mass": self.lambda_plus.total_mass,
            "minus_mass": None if self.lambda_minus is None else self.lambda_minus.total_mass,
            "energies": {k: v.to_dict() if isinstance(v, EnergyReport) else v for k, v in self.energies.items()},
            "balayage": self.balayage,
            "thinness_class": self.thinness_class,
            "warnings": list(self.warnings),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


# ---------------------------------------------------------------------------
# Green problem
# ---------------------------------------------------------------------------

def field_potential(p: CondenserProblem, cloud: PointCloud, sweeper=None) -> np.ndarray:
    """Green potential of the field charge at the atoms of ``cloud``."""
    out = np.zeros(cloud.size)
    for m, sgn in parts(p.theta):
        if not np.any(m.masses):
            continue
        if m.cloud is cloud or m.cloud.same_as(cloud):
            G = green_matrix(p.spec, p.D, cloud, None, p.diagonal_policy, sweeper)
        else:
            G = green_matrix(p.spec, p.D, cloud, m.cloud, p.diagonal_policy, sweeper)
        out += sgn * (G @ m.masses)
    return out


def assemble_green_problem(p: CondenserProblem, sweeper=None):
    """``(G, b, upper)`` of the discrete Green problem."""
    G = green_matrix(p.spec, p.D, p.A_cloud, None, p.diagonal_policy, sweeper)
    b = field_potential(p, p.A_cloud, sweeper)
    u = None if p.sigma.is_infinite else p.sigma.upper_bounds(p.A_cloud)
    return G, b, u


def green_gauss_objective(G, b, w) -> float:
    """``G_{g,theta}(w) = w'Gw + 2 b'w``."""
    w = np.asarray(w, dtype=float)
    return float(w @ G @ w + 2.0 * b @ w)


def field_energy(p: CondenserProblem, sweeper=None) -> float:
    """Green energy of the field charge (0 without a field)."""
    if p.field_free:
        return 0.0
    return quadratic(p.spec, p.theta, p.diagonal_policy, _green_kernel(p.spec, p.D, sweeper))


def solve_green_gauss(p: CondenserProblem, x0=None, sweeper=None, assemble: bool = True) -> SolveReport:
    """Minimize the Green Gauss functional over ``{w >= 0, sum w = 1, w <= sigma}``.

    With ``assemble`` the minus part, the energies of the signed pair and
    the weak objective are filled in as well.
    """
    if sweeper is None:
        sweeper = p.make_sweeper()
    G, b, u = assemble_green_problem(p, sweeper)
    res = solve_box_simplex_qp(G, b, u, x0=x0, tol=p.tol)
    lam = DiscreteMeasure(p.A_cloud, res.x)
    gerr = green_energy(p.spec, p.D, lam, p.diagonal_policy, sweeper).estimated_error
    rep = SolveReport(
        lam, None, res.objective, None, res.level, res.lower_violation, res.upper_violation,
        res.iterations, res.converged, res.method, gerr, thinness_class=p.thinness_class,
    )
    if p.D.thinness_class != NOT_THIN:
        rep.warnings.append(f"F is {p.D.thinness_class}; theorem-level guarantees do not apply")
    if assemble and res.converged:
        assemble_condenser_solution(p, rep, sweeper)
    return rep


def _theta_pair(p: CondenserProblem, sweeper):
    """Field charge and its balayage as part lists."""
    theta, swept = [], []
    for m, sgn in parts(p.theta):
        if not np.any(m.masses):
            continue
        r = sweep_measure(p.spec, p.D, m, p.F_resolution, p.seed, sweeper)
        theta.append((m, sgn))
        swept.append((r.swept, sgn))
    return theta, swept


def assemble_condenser_solution(p: CondenserProblem, report: SolveReport, sweeper=None) -> SignedCondenserMeasure:
    """Signed solution ``lambda - lambda'`` and its weak and standard energies.

    Fills ``report.lambda_minus``, ``report.objective_weak`` and
    ``report.energies`` in place.
    """
    if sweeper is None:
        sweeper = p.make_sweeper()
    lam = report.lambda_plus
    bal = sweep_measure(p.spec, p.D, lam, p.F_resolution, p.seed, sweeper)
    report.lambda_minus = bal.swept
    report.balayage = {"method": bal.method, "mass_in": bal.mass_in, "mass_out": bal.mass_out,
                       "analytic_mass": bal.analytic_mass, "potential_residual": bal.potential_residual}
    pair = signed(lam, bal.swept)
    report.energies["green"] = green_energy(p.spec, p.D, lam, p.diagonal_policy, sweeper)
    report.energies["standard_plus"] = standard_energy(p.spec, lam, p.diagonal_policy)
    report.energies["standard_pair"] = standard_energy(p.spec, pair, p.diagonal_policy)
    theta_pair = _theta_pair(p, sweeper) if not p.field_free else (None, None)
    mode = p.weak
    if mode == "grid":
        try:
            rep = gauss_integral_weak(p.spec, pair, theta_pair, diagonal_policy=p.diagonal_policy, n_dir=p.n_dir)
            report.objective_weak, report.objective_weak_error = rep.value, rep.estimated_error
            report.weak_method = "grid"
        except GeometryError:
            mode = "standard"
            report.warnings.append("weak grid energy does not support ring atoms; used the standard form")
    if mode == "standard":
        val = gauss_integral_standard(p.spec, pair, theta_pair, p.diagonal_policy)
        err = report.energies["standard_pair"].estimated_error
        report.objective_weak, report.objective_weak_error = val, err
        report.weak_method = "standard"
    return pair


# ---------------------------------------------------------------------------
# certificates
# ---------------------------------------------------------------------------

@dataclass
class Certificate:
    level: float
    lower_violation: float
    upper_violation: float
    n_free: int
    tol: float
    field_free_excess: float | None = None
    field_free_points: int = 0
    sufficient: bool = False
    passed: bool = False

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _far_points(p: CondenserProblem, n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    c = np.average(p.A_cloud.points, axis=0)
    R = max(p.A_cloud.circumradius(), p.D.scale)
    u = rng.normal(size=(n, p.spec.n))
    u /= np.linalg.norm(u, axis=1)[:, None]
    r = R * rng.uniform(0.0, 4.0, n)
    r[: n // 5] = R * rng.uniform(10.0, 50.0, n // 5)
    return c + r[:, None] * u


def verify_optimality(p: CondenserProblem, report: SolveReport, check_cloud=None, sweeper=None,
                      n_check: int = 100, field_tol: float = 0.02) -> Certificate:
    """Check the variational inequalities of a solution on the A-samples.

    ``g(lambda + theta) >= w`` where ``lambda < sigma`` and ``<= w`` where
    ``lambda > 0``.  Without a field the Riesz potential of the signed
    solution must also stay below ``w (1 + field_tol)`` at sample points of
    ``R^n`` (points of ``F``, the gap and the far field) kept away from atoms.
    """
    if sweeper is None:
        sweeper = p.make_sweeper()
    G, b, u = assemble_green_problem(p, sweeper)
    x = report.lambda_plus.masses
    uu = np.full(x.shape, np.inf) if u is None else u
    pot = G @ x + b
    lvl = kkt_level(pot, x, uu)
    lo, up = kkt_violations(pot, x, uu, lvl)
    free = int(np.sum((x > 1e-12) & (x < uu - 1e-12)))
    cert = Certificate(lvl, lo, up, free, p.tol)
    cert.sufficient = p.plates_separated()
    ok = lo < p.tol and up < p.tol
    if p.field_free and report.lambda_minus is not None:
        if check_cloud is None:
            X = np.vstack([check_points(p.D, n_check // 2, p.seed + 1,
                                        focus=np.average(p.A_cloud.points, axis=0)),
                           _far_points(p, n_check - n_check // 2, p.seed + 2)])
        else:
            X = np.atleast_2d(np.asarray(getattr(check_cloud, "points", check_cloud), dtype=float))
        X = _away_from_atoms(p, report, X)
        cert.field_free_points = int(X.shape[0])
        if X.shape[0]:
            v = potential(p.spec, report.signed_solution(), X, mollified=True,
                          diagonal_policy=p.diagonal_policy)
            cert.field_free_excess = float(np.max(v) - lvl) / abs(lvl)
            ok = ok and cert.field_free_excess <= field_tol
    cert.passed = bool(ok)
    return cert


def _away_from_atoms(p, report, X, factor: float = 3.0):
    keep = np.ones(X.shape[0], dtype=bool)
    for m in (report.lambda_plus, report.lambda_minus):
        if m is None or m.size == 0:
            continue
        _, h = self_terms(p.spec, m.cloud, p.diagonal_policy)
        h = np.where(np.isfinite(h), h, 0.0)
        d, idx = cKDTree(m.cloud.points).query(X)
        keep &= d > factor * np.maximum(h[idx], m.cloud.nearest_distance[idx])
    return X[keep]


@dataclass
class SupportCheck:
    applicable: bool
    passed: bool | None
    offending: np.ndarray
    reason: str = ""

    def __bool__(self):
        return bool(self.passed)

    def to_dict(self) -> dict:
        return {"applicable": self.applicable, "passed": self.passed,
                "offending": self.offending.tolist(), "reason": self.reason}


def support_identity_check(p: CondenserProblem, report: SolveReport, threshold: float = 1e-8) -> SupportCheck:
    """Whether the minimizer charges every atom of ``sigma`` (field-free, alpha < 2)."""
    empty = np.zeros((0, p.spec.n))
    if not p.field_free:
        return SupportCheck(False, None, empty, "not applicable: field present")
    if not p.spec.alpha < 2.0:
        return SupportCheck(False, None, empty, "not applicable: alpha must be < 2")
    if p.sigma.is_infinite:
        return SupportCheck(False, None, empty, "not applicable: sigma is infinite")
    if not p.D.F_has_interior:
        return SupportCheck(False, None, empty, "not applicable: F has no interior")
    u = p.sigma.upper_bounds(p.A_cloud)
    x = report.lambda_plus.masses
    bad = (u > 0) & (x <= threshold * x.max())
    return SupportCheck(True, not bad.any(), p.A_cloud.points[bad], "")


def atomwise_error(a, b, floor: float = 1e-3) -> float:
    """Max of ``|a - b| / b`` over atoms with ``b > floor * max(b)``, and ``|a - b| / max(b)`` elsewhere."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    top = float(np.max(np.abs(b)))
    big = np.abs(b) > floor * top
    rel = np.abs(a - b)[big] / np.abs(b)[big]
    rest = np.abs(a - b)[~big] / top
    return float(max(rel.max(initial=0.0), rest.max(initial=0.0)))
