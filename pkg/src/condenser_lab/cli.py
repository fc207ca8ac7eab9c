"""Command-line front end: ``condenser-lab run SCENARIO``.

Exit statuses: 0 success, 2 certificate failure, 3 solver non-convergence,
4 input error.  Every failure also writes its machine-readable code to
``report.json``.
"""
from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import CondenserError, ConditioningError, ConstructionError, InputError, SolverError
from .scenario import Scenario, build_problem, build_profile, bundled_scenarios, load_scenario

log = logging.getLogger("condenser_lab")

EXIT_OK, EXIT_CERTIFICATE, EXIT_NONCONVERGENCE, EXIT_INPUT = 0, 2, 3, 4

PLOT_KINDS = {
    "potential_profile": ("t", "kappa_potential", "green_potential", "level_w"),
    "wiener_series": ("k", "capacity", "wiener_term", "cumulative"),
    "continuity_trace": ("k", "objective_green", "gap", "green_distance", "bl_plus", "bl_minus"),
    "refinement_trend": ("resolution", "atoms", "green_energy", "standard_energy_plus", "standard_energy_pair",
                         "weak_objective", "ratio", "equilibrium_error", "dot_w_equals_w"),
    "unsolvability_trace": ("k", "green_capacity", "green_energy", "bound", "weak_objective"),
}


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return "" if np.isnan(v) else repr(v)


def emit_plotdata(report: dict, kind: str, path=None) -> str:
    """Headered CSV for one plot kind from a run report.

    ``report`` is the ``result`` mapping of a run (or ``{}`` for an empty
    file); its ``plot`` entry must match ``kind``.
    """
    if kind not in PLOT_KINDS:
        raise InputError(f"unknown plot kind {kind!r}")
    header = PLOT_KINDS[kind]
    rows = []
    if report:
        plot = report.get("plot") or {}
        if plot.get("kind") != kind:
            raise InputError(f"report holds {plot.get('kind')!r} data, not {kind!r}")
        rows = plot.get("rows", [])
    lines = [",".join(header)]
    for r in rows:
        if len(r) != len(header):
            raise InputError("plot row does not match the schema")
        lines.append(",".join(_fmt(v) for v in r))
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)
    return text


# ---------------------------------------------------------------------------
# experiment runners: each returns (result dict, exit status, measures)
# ---------------------------------------------------------------------------

def _profile_rows(p, rep, ray: dict):
    from .energy import potential
    from .green import image_closed

    n = p.spec.n
    origin = np.asarray(ray.get("origin", np.average(p.A_cloud.points, axis=0)), dtype=float)
    e = np.asarray(ray.get("direction", np.eye(n)[0]), dtype=float)
    e = e / np.linalg.norm(e)
    t = np.linspace(0.0, float(ray.get("t_max", 3.0 * max(p.D.scale, p.A_cloud.circumradius()))),
                    int(ray.get("samples", 101)))
    X = origin + t[:, None] * e
    kap = potential(p.spec, rep.signed_solution(), X, mollified=True, diagonal_policy=p.diagonal_policy)
    inD = p.D.in_D(X)
    green = np.full(t.shape, np.nan)
    from .energy import parts
    from .measures import signed

    theta_parts = parts(p.theta)
    if theta_parts:
        from .solver import _theta_pair

        th, sw = _theta_pair(p, p.make_sweeper())
        kap = kap + potential(p.spec, th + [(m, -s) for m, s in sw], X, mollified=True)
    if inD.any():
        Xi = X[inD]
        if p.D.has_closed_form_green:
            src = [(rep.lambda_plus, 1.0)] + theta_parts
            g = potential(p.spec, src, Xi, mollified=True, diagonal_policy=p.diagonal_policy)
            for m, s in src:
                g = g - s * (image_closed(p.spec, p.D, Xi, m.cloud.points) @ m.masses)
            green[inD] = g
        else:
            green[inD] = kap[inD]
    return [(float(a), float(b), float(c), float(rep.w)) for a, b, c in zip(t, kap, green)]


def _run_solve(sc: Scenario, tol, jobs):
    from .solver import solve_green_gauss, support_identity_check, verify_optimality

    p = build_problem(sc, tol=tol)
    rep = solve_green_gauss(p)
    result = {"report": rep.to_dict(), "atoms": int(p.A_cloud.size),
              "plates_separated": p.plates_separated()}
    measures = {"lambda_plus": rep.lambda_plus}
    if not rep.converged:
        return result, EXIT_NONCONVERGENCE, measures
    if rep.lambda_minus is not None:
        measures["lambda_minus"] = rep.lambda_minus
    cert = verify_optimality(p, rep, field_tol=sc.certificate_tol)
    result["certificate"] = cert.to_dict()
    result["support_identity"] = support_identity_check(p, rep).to_dict()
    result["plot"] = {"kind": "potential_profile", "rows": _profile_rows(p, rep, sc.experiment.get("ray", {}))}
    return result, (EXIT_OK if cert.passed else EXIT_CERTIFICATE), measures


def _run_thinness(sc: Scenario, tol, jobs):
    from .thinness import wiener_thinness_diagnostic

    e = sc.experiment
    v = wiener_thinness_diagnostic(sc.spec, build_profile(sc), q=float(e.get("q", 2.0)),
                                   k_max=int(e.get("k_max", 10)), resolution=int(e.get("resolution", 200)),
                                   jobs=jobs)
    result = v.to_dict()
    result["expected"] = build_profile(sc).classification()
    result["plot"] = {"kind": "wiener_series", "rows": [list(r) for r in v.partial_sums]}
    return result, EXIT_OK, {}


def _run_continuity(sc: Scenario, tol, jobs):
    from .experiments import continuity_experiment, scaled_constraint_family
    from .sampling import set_from_dict

    e = sc.experiment
    limit = build_problem(sc, tol=tol)
    mode = e.get("mode", "scaled_constraint")
    sets = None
    if mode == "scaled_constraint":
        fam = scaled_constraint_family(limit, int(e.get("k_max", 8)))
    elif mode == "sampler_family":
        samplers = e.get("samplers") or []
        fam = [build_problem(sc, sampler=s, tol=tol) for s in samplers]
        sets = [set_from_dict(s) for s in samplers]
    else:
        raise InputError(f"unknown continuity mode {mode!r}")
    rec = continuity_experiment(fam, limit, sets=sets, jobs=jobs)
    result = rec.to_dict()
    rows = [(k + 1, o, g, d, bp, bm) for k, (o, g, d, bp, bm) in
            enumerate(zip(rec.objectives, rec.gaps, rec.green_distances, rec.bl_plus, rec.bl_minus))]
    result["plot"] = {"kind": "continuity_trace", "rows": rows}
    status = EXIT_OK if all(rec.converged) else EXIT_NONCONVERGENCE
    return result, status, {}


def _run_unsolvability(sc: Scenario, tol, jobs):
    from .experiments import CylinderFamily, unsolvability_demo

    e = sc.experiment
    fam = dict(e.get("family", {}))
    fam.pop("kind", None)
    fam = {k: tuple(v) if isinstance(v, list) else v for k, v in fam.items()}
    rec = unsolvability_demo(sc.spec, sc.domain, CylinderFamily(**fam), int(e.get("k_max", 6)),
                             F_resolution=int(e.get("F_resolution", 1500)), jobs=jobs)
    result = rec.to_dict()
    result["plot"] = {"kind": "unsolvability_trace", "rows": [list(r) for r in rec.rows()]}
    return result, EXIT_OK, {"sigma0": rec.sigma0}


def _refine_problem(resolution, sc, tol):
    return build_problem(sc, resolution=resolution, tol=tol)


def _run_refinement(sc: Scenario, tol, jobs):
    from functools import partial

    from .experiments import weak_vs_standard_refinement_study

    res = [int(r) for r in sc.experiment.get("resolutions", [200, 400, 800])]
    study = weak_vs_standard_refinement_study(partial(_refine_problem, sc=sc, tol=tol), res, jobs)
    result = study.to_dict()
    result["ratio_spread"] = study.ratio_spread()
    result["plot"] = {"kind": "refinement_trend", "rows": [list(r) for r in study.rows]}
    return result, EXIT_OK, {}


RUNNERS = {"solve": _run_solve, "thinness": _run_thinness, "continuity": _run_continuity,
           "unsolvability": _run_unsolvability, "refinement": _run_refinement}


def _clean(obj):
    """JSON-safe copy (numpy scalars and arrays, non-finite floats as ``None``)."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else None
    return obj


def _error_status(exc: CondenserError) -> int:
    if isinstance(exc, (SolverError, ConditioningError)):
        return EXIT_NONCONVERGENCE
    if isinstance(exc, ConstructionError):
        return EXIT_CERTIFICATE
    return EXIT_INPUT


def _manifest(sc: Scenario | None, path, wall: float, status: int, jobs: int) -> dict:
    import numba
    import scipy
    import yaml

    return {
        "package": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
        "pyyaml": yaml.__version__,
        "scenario_file": str(path),
        "scenario": None if sc is None else sc.name,
        "seed": None if sc is None else sc.seed,
        "jobs": jobs,
        "exit_status": status,
        "wall_time_s": wall,
    }


def run(path, check_only: bool = False, jobs: int = 1, out=None, tol=None, seed=None) -> int:
    """Run one scenario file and write its artifacts; returns the exit status."""
    t0 = time.perf_counter()
    sc = None
    try:
        sc = load_scenario(path, seed)
        out_dir = Path(out or sc.output.get("dir") or Path("out") / sc.name)
    except CondenserError as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        if out is not None:
            _write_report(Path(out), {"status": "error", "error": _err(exc)}, None)
        return EXIT_INPUT
    if check_only:
        try:
            _validate(sc, tol)
        except CondenserError as exc:
            print(f"error [{exc.code}]: {exc}", file=sys.stderr)
            return _error_status(exc) if not isinstance(exc, InputError) else EXIT_INPUT
        print(json.dumps({"scenario": sc.name, "experiment": sc.kind, "valid": True}))
        return EXIT_OK
    measures = {}
    try:
        result, status, measures = RUNNERS[sc.kind](sc, tol, jobs)
        report = {"scenario": sc.name, "experiment": sc.kind, "seed": sc.seed,
                  "status": "ok" if status == EXIT_OK else "failed", "exit_status": status, "result": result}
    except CondenserError as exc:
        status = _error_status(exc)
        report = {"scenario": sc.name, "experiment": sc.kind, "seed": sc.seed, "status": "error",
                  "exit_status": status, "error": _err(exc)}
        result = None
    _write_report(out_dir, report, result, measures)
    man = _manifest(sc, path, time.perf_counter() - t0, status, jobs)
    (out_dir / "manifest.json").write_text(json.dumps(_clean(man), indent=2, sort_keys=True) + "\n")
    log.info("%s: exit %d", sc.name, status)
    return status


def _err(exc: CondenserError) -> dict:
    return {"code": exc.code, "message": str(exc), "data": _clean(exc.data)}


def _validate(sc: Scenario, tol):
    """Build every input object of a scenario without solving."""
    if sc.kind in ("solve", "continuity"):
        p = build_problem(sc, tol=tol)
        if sc.kind == "continuity" and sc.experiment.get("mode", "scaled_constraint") == "scaled_constraint":
            if p.sigma.is_infinite:
                raise InputError("the scaled family needs a finite constraint")
    elif sc.kind == "refinement":
        build_problem(sc, resolution=min(sc.experiment.get("resolutions", [200])), tol=tol)
    elif sc.kind == "thinness":
        build_profile(sc)
        if int(sc.experiment.get("k_max", 10)) < 8:
            raise InputError("k_max must be an integer >= 8")
    elif sc.kind == "unsolvability":
        from .experiments import CylinderFamily

        fam = dict(sc.experiment.get("family", {}))
        fam.pop("kind", None)
        CylinderFamily(**{k: tuple(v) if isinstance(v, list) else v for k, v in fam.items()})
        sc.domain  # noqa: B018


def _write_report(out_dir: Path, report: dict, result, measures=None):
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(json.dumps(_clean(report), indent=2, sort_keys=True) + "\n")
    if measures:
        (out_dir / "measures").mkdir(exist_ok=True)
        for name, m in measures.items():
            m.to_csv(out_dir / "measures" / f"{name}.csv")
    if result and result.get("plot"):
        kind = result["plot"]["kind"]
        emit_plotdata(result, kind, out_dir / "plotdata" / f"{kind}.csv")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="condenser-lab", description=__doc__.splitlines()[0])
    ap.add_argument("--verbose", "-v", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a scenario file (or a bundled scenario name)")
    r.add_argument("scenario")
    r.add_argument("--check-only", action="store_true", help="parse and validate without solving")
    r.add_argument("--jobs", type=int, default=1, help="worker processes for independent instances")
    r.add_argument("--out", default=None, help="output directory")
    r.add_argument("--tol", type=float, default=None, help="relative KKT tolerance")
    sub.add_parser("list", help="list bundled scenarios")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.command == "list":
        for name in bundled_scenarios():
            print(name)
        return EXIT_OK
    if args.jobs < 1:
        print("error [input_error]: --jobs must be >= 1", file=sys.stderr)
        return EXIT_INPUT
    if args.tol is not None and not args.tol > 0:
        print("error [input_error]: --tol must be positive", file=sys.stderr)
        return EXIT_INPUT
    return run(args.scenario, args.check_only, args.jobs, args.out, args.tol)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
