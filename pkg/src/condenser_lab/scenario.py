"""Scenario files: schema, parsing, and conversion to problems and experiments.

A scenario is a YAML (or JSON) mapping::

    name: ball_condenser
    seed: 0
    kernel: {alpha: 2.0, n: 3}
    geometry: {kind: ball, center: [0, 0, 0], radius: 1.0}
    A:
      sampler: {kind: sphere, center: [0, 0, 0], radius: 0.5}
      resolution: 400
    constraint: {kind: infinite}
    field: {kind: zero}
    experiment: {kind: solve}
    tolerances: {kkt: 1.0e-6, certificate: 0.02}
    solver: {F_resolution: 800, weak: grid, n_dir: 3000, touching: null}
    output: {dir: out/ball_condenser}

``A`` may instead hold an explicit ``cloud`` (``points``/``weights``/``dim``).
Constraint kinds: ``infinite``, ``lebesgue`` (``scale`` times the sample
weights), ``uniform`` (``total_mass`` spread proportionally to the weights)
and ``measure`` (explicit ``masses``).  Field kinds: ``zero`` and ``atoms``
(a list of ``{point, mass}``; negative masses form the negative part).
``solver.diagonal`` names the self-interaction rule (``cell``, ``nearest``,
``exclude``) or gives it as a mapping such as ``{kind: mollify, h: 0.05}``.
Experiment kinds and their keys:

* ``solve``: ``ray`` (``origin``, ``direction``, ``t_max``, ``samples``) for
  the potential profile;
* ``thinness``: ``profile``, ``q``, ``k_max``, ``resolution``;
* ``continuity``: ``mode: scaled_constraint`` with ``k_max``, or
  ``mode: sampler_family`` with a decreasing list ``samplers`` (the scenario's
  ``A`` is the limit);
* ``unsolvability``: ``family`` (cylinder family keys), ``k_max``,
  ``F_resolution``;
* ``refinement``: ``resolutions``.
"""
from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .clouds import PointCloud
from .errors import InputError
from .geometry import DomainGeometry, Profile
from .kernels import DiagonalPolicy, KernelSpec
from .measures import Constraint, DiscreteMeasure, SignedCondenserMeasure
from .sampling import sample_set, set_from_dict

EXPERIMENTS = ("solve", "thinness", "continuity", "unsolvability", "refinement")
SEED_ENV = "CONDENSER_LAB_SEED"
BUNDLED_DIR = Path(__file__).with_name("scenarios")


@dataclass
class Scenario:
    name: str
    kernel: dict
    geometry: dict | None
    A: dict | None
    constraint: dict
    field: dict
    experiment: dict
    tolerances: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    seed: int = 0

    @property
    def kind(self) -> str:
        return self.experiment["kind"]

    @property
    def spec(self) -> KernelSpec:
        return KernelSpec(float(self.kernel.get("alpha", 2.0)), int(self.kernel.get("n", 3)))

    @property
    def domain(self) -> DomainGeometry:
        return DomainGeometry.from_dict(self.geometry)

    @property
    def kkt_tol(self) -> float:
        return float(self.tolerances.get("kkt", 1e-6))

    @property
    def certificate_tol(self) -> float:
        return float(self.tolerances.get("certificate", 0.02))

    def to_dict(self) -> dict:
        d = {"name": self.name, "seed": self.seed, "kernel": self.kernel, "geometry": self.geometry,
             "A": self.A, "constraint": self.constraint, "field": self.field,
             "experiment": self.experiment, "tolerances": self.tolerances, "solver": self.solver,
             "output": self.output}
        return copy.deepcopy({k: v for k, v in d.items() if v is not None})

    def dump(self, path=None) -> str:
        text = yaml.safe_dump(self.to_dict(), sort_keys=False)
        if path is not None:
            Path(path).write_text(text)
        return text


def _need(d: dict, key: str, where: str):
    if not isinstance(d, dict) or key not in d:
        raise InputError(f"{where} block is missing {key!r}")
    return d[key]


def parse_scenario(data: dict, seed_override=None) -> Scenario:
    """Validate a scenario mapping; ``seed_override`` (or the env var) replaces the seed."""
    if not isinstance(data, dict):
        raise InputError("scenario must be a mapping")
    exp = _need(data, "experiment", "scenario")
    if not isinstance(exp, dict) or exp.get("kind") not in EXPERIMENTS:
        raise InputError(f"experiment kind must be one of {EXPERIMENTS}")
    kind = exp["kind"]
    kernel = data.get("kernel", {"alpha": 2.0, "n": 3})
    if kind != "thinness":
        _need(data, "geometry", "scenario")
    if kind in ("solve", "continuity", "refinement"):
        _need(data, "A", "scenario")
    if "seed" not in data and seed_override is None and os.environ.get(SEED_ENV) is None:
        raise InputError("scenario needs an explicit seed")
    seed = data.get("seed", 0)
    env = os.environ.get(SEED_ENV)
    if seed_override is not None:
        seed = seed_override
    elif env is not None:
        try:
            seed = int(env)
        except ValueError:
            raise InputError(f"{SEED_ENV} must be an integer") from None
    sc = Scenario(
        name=str(data.get("name", "scenario")),
        kernel=dict(kernel),
        geometry=data.get("geometry"),
        A=data.get("A"),
        constraint=data.get("constraint", {"kind": "infinite"}),
        field=data.get("field", {"kind": "zero"}),
        experiment=dict(exp),
        tolerances=dict(data.get("tolerances", {})),
        solver=dict(data.get("solver", {})),
        output=dict(data.get("output", {})),
        seed=int(seed),
    )
    sc.spec  # noqa: B018 - validates alpha and n
    if sc.geometry is not None:
        sc.domain  # noqa: B018
    return sc


def load_scenario(path, seed_override=None) -> Scenario:
    """Read a scenario file (YAML or JSON); bare names resolve to bundled scenarios."""
    p = resolve_path(path)
    text = p.read_text()
    try:
        data = json.loads(text) if p.suffix == ".json" else yaml.safe_load(text)
    except (yaml.YAMLError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot parse {p}: {exc}") from None
    return parse_scenario(data, seed_override)


def resolve_path(path) -> Path:
    p = Path(path)
    if p.exists():
        return p
    for cand in (BUNDLED_DIR / p.name, BUNDLED_DIR / (p.stem + ".yaml")):
        if cand.exists():
            return cand
    raise InputError(f"scenario file {path} not found")


def bundled_scenarios() -> list:
    return sorted(q.stem for q in BUNDLED_DIR.glob("*.yaml"))


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def build_A_cloud(sc: Scenario, resolution: int | None = None, sampler: dict | None = None) -> PointCloud:
    A = sc.A
    if sampler is None and "cloud" in A:
        return PointCloud.from_dict(A["cloud"])
    s = set_from_dict(sampler or _need(A, "sampler", "A"))
    res = int(resolution or _need(A, "resolution", "A"))
    cloud = sample_set(s, res, A.get("seed", sc.seed))
    if A.get("restrict_to_D", False):
        keep = np.nonzero(sc.domain.in_D(cloud.points))[0]
        cloud = cloud.subset(keep)
    return cloud


def build_constraint(sc: Scenario, cloud: PointCloud) -> Constraint:
    c = sc.constraint or {"kind": "infinite"}
    kind = c.get("kind", "infinite")
    if kind == "infinite":
        return Constraint.infinite()
    w = cloud.quad_weights
    if kind == "lebesgue":
        masses = float(c.get("scale", 1.0)) * w
    elif kind == "uniform":
        masses = float(_need(c, "total_mass", "constraint")) * w / w.sum()
    elif kind == "measure":
        masses = np.asarray(_need(c, "masses", "constraint"), dtype=float)
        if masses.shape != (cloud.size,):
            raise InputError("constraint masses do not match the A-cloud")
    else:
        raise InputError(f"unknown constraint kind {kind!r}")
    return Constraint(DiscreteMeasure(cloud, masses))


def build_field(sc: Scenario, n: int):
    f = sc.field or {"kind": "zero"}
    kind = f.get("kind", "zero")
    if kind == "zero":
        return None
    if kind != "atoms":
        raise InputError(f"unknown field kind {kind!r}")
    atoms = _need(f, "atoms", "field")
    pts = np.array([a["point"] for a in atoms], dtype=float).reshape(-1, n)
    m = np.array([a["mass"] for a in atoms], dtype=float)
    pos, neg = m > 0, m < 0

    def part(mask, sign):
        c = PointCloud(pts[mask], np.zeros(int(mask.sum())), 0, check_separation=False)
        return DiscreteMeasure(c, sign * m[mask])

    if not neg.any():
        return part(pos, 1.0)
    return SignedCondenserMeasure(part(pos, 1.0), part(neg, -1.0))


def build_problem(sc: Scenario, resolution: int | None = None, sampler: dict | None = None,
                  tol: float | None = None):
    """The :class:`~condenser_lab.solver.CondenserProblem` described by a scenario."""
    import warnings

    from .solver import CondenserProblem

    spec, D = sc.spec, sc.domain
    cloud = build_A_cloud(sc, resolution, sampler)
    s = sc.solver
    diag = s.get("diagonal", "cell")
    if isinstance(diag, dict):
        h = diag.get("h")
        policy = DiagonalPolicy(str(_need(diag, "kind", "solver.diagonal")),
                                None if h is None else np.asarray(h, dtype=float) if isinstance(h, list) else float(h))
    else:
        policy = DiagonalPolicy(str(diag))
    if policy.kind == "cell":
        policy = None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return CondenserProblem(
            spec, D, cloud, build_constraint(sc, cloud), build_field(sc, spec.n),
            tol=float(tol if tol is not None else sc.kkt_tol), diagonal_policy=policy,
            F_resolution=int(s.get("F_resolution", 800)), weak=str(s.get("weak", "grid")),
            n_dir=int(s.get("n_dir", 3000)), seed=sc.seed, label=sc.name, touching=s.get("touching"),
        )


def _policy_dict(policy):
    if policy is None:
        return "cell"
    if policy.h is None:
        return policy.kind
    h = np.asarray(policy.h, dtype=float)
    return {"kind": policy.kind, "h": float(h) if h.ndim == 0 else h.tolist()}


def problem_to_scenario(p, name: str = "problem", experiment: dict | None = None) -> Scenario:
    """Scenario carrying a programmatic problem verbatim (explicit cloud and masses)."""
    from .energy import parts

    if p.sigma.is_infinite:
        constraint = {"kind": "infinite"}
    else:
        constraint = {"kind": "measure", "masses": p.sigma.sigma.masses.tolist()}
    atoms = []
    for m, sgn in parts(p.theta):
        for x, mass in zip(m.cloud.points, m.masses):
            if mass:
                atoms.append({"point": x.tolist(), "mass": float(sgn * mass)})
    fld = {"kind": "atoms", "atoms": atoms} if atoms else {"kind": "zero"}
    return Scenario(
        name=name, kernel={"alpha": p.spec.alpha, "n": p.spec.n}, geometry=p.D.to_dict(),
        A={"cloud": p.A_cloud.to_dict()}, constraint=constraint, field=fld,
        experiment=experiment or {"kind": "solve"}, tolerances={"kkt": p.tol},
        solver={"F_resolution": p.F_resolution, "weak": p.weak, "n_dir": p.n_dir, "touching": p.touching,
                "diagonal": _policy_dict(p.diagonal_policy)},
        seed=p.seed,
    )


def build_profile(sc: Scenario) -> Profile:
    return Profile.from_dict(_need(sc.experiment, "profile", "experiment"))
