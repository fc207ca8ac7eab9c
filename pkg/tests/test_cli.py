import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from condenser_lab import CondenserProblem, Constraint, DiscreteMeasure, DomainGeometry, KernelSpec
from condenser_lab import cli
from condenser_lab.errors import InputError, SolverError
from condenser_lab.kernels import mollify
from condenser_lab.measures import signed
from condenser_lab.sampling import Ball
from condenser_lab.scenario import (SEED_ENV, build_problem, bundled_scenarios, load_scenario, parse_scenario,
                                    problem_to_scenario, resolve_path)

SMALL_SOLVE = {
    "name": "small", "seed": 0, "kernel": {"alpha": 2.0, "n": 3},
    "geometry": {"kind": "ball", "center": [0, 0, 0], "radius": 1.0},
    "A": {"sampler": {"kind": "sphere", "center": [0, 0, 0], "radius": 0.5}, "resolution": 120},
    "constraint": {"kind": "infinite"}, "field": {"kind": "zero"},
    "experiment": {"kind": "solve", "ray": {"t_max": 2.0, "samples": 21}},
    "solver": {"weak": "standard"},
}


def write(tmp_path, data, name="scenario.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return path


def with_changes(**kw):
    d = json.loads(json.dumps(SMALL_SOLVE))
    d.update(kw)
    return d


def read_report(out):
    return json.loads((Path(out) / "report.json").read_text())


# -- exit statuses --------------------------------------------------------------------------

def test_bundled_ball_condenser_runs(tmp_path):
    out = tmp_path / "out"
    assert cli.main(["run", "ball_condenser", "--out", str(out)]) == cli.EXIT_OK
    rep = read_report(out)
    assert rep["status"] == "ok"
    assert rep["result"]["report"]["converged"] is True
    assert rep["result"]["certificate"]["passed"] is True
    assert (out / "measures" / "lambda_plus.csv").exists()
    assert (out / "measures" / "lambda_minus.csv").exists()
    head = (out / "plotdata" / "potential_profile.csv").read_text().splitlines()
    assert head[0] == "t,kappa_potential,green_potential,level_w"
    assert len(head) == 62
    man = json.loads((out / "manifest.json").read_text())
    assert man["seed"] == 0 and man["exit_status"] == 0 and man["wall_time_s"] > 0


def test_infeasible_constraint_exit_code(tmp_path):
    path = write(tmp_path, with_changes(constraint={"kind": "uniform", "total_mass": 0.9}))
    out = tmp_path / "out"
    assert cli.run(path, out=out) == cli.EXIT_INPUT
    rep = read_report(out)
    assert rep["status"] == "error"
    assert rep["error"]["code"] == "infeasible_constraint"
    assert cli.run(path, check_only=True) == cli.EXIT_INPUT


def test_check_only_does_not_solve(tmp_path, capsys, monkeypatch):
    monkeypatch.setitem(cli.RUNNERS, "solve", lambda *a: pytest.fail("solver ran"))
    out = tmp_path / "out"
    assert cli.main(["run", str(write(tmp_path, SMALL_SOLVE)), "--check-only", "--out", str(out)]) == 0
    assert json.loads(capsys.readouterr().out)["valid"] is True
    assert not out.exists()


def test_nonconvergence_exit_code(tmp_path, monkeypatch):
    def boom(*a):
        raise SolverError("active-set iterations exhausted", data={"iterations": 500})

    monkeypatch.setitem(cli.RUNNERS, "solve", boom)
    out = tmp_path / "out"
    assert cli.run(write(tmp_path, SMALL_SOLVE), out=out) == cli.EXIT_NONCONVERGENCE
    rep = read_report(out)
    assert rep["error"]["code"] == SolverError.code
    assert rep["error"]["data"] == {"iterations": 500}


def test_certificate_failure_exit_code(tmp_path, monkeypatch):
    import condenser_lab.solver as solver

    real = solver.verify_optimality

    def failing(*a, **kw):
        cert = real(*a, **kw)
        cert.passed = False
        return cert

    monkeypatch.setattr(solver, "verify_optimality", failing)
    out = tmp_path / "out"
    assert cli.run(write(tmp_path, SMALL_SOLVE), out=out) == cli.EXIT_CERTIFICATE
    rep = read_report(out)
    assert rep["status"] == "failed" and rep["exit_status"] == 2


@pytest.mark.parametrize("text", ["name: [unclosed", "experiment: {kind: dance}\nseed: 0\n",
                                  "experiment: {kind: solve}\ngeometry: {kind: ball}\nA: {}\n"])
def test_bad_scenarios_are_input_errors(tmp_path, text):
    path = tmp_path / "bad.yaml"
    path.write_text(text)
    assert cli.run(path, out=tmp_path / "out") == cli.EXIT_INPUT
    assert "code" in read_report(tmp_path / "out")["error"]


def test_missing_file_and_bad_flags(tmp_path):
    assert cli.main(["run", str(tmp_path / "nope.yaml")]) == cli.EXIT_INPUT
    assert cli.main(["run", "ball_condenser", "--jobs", "0"]) == cli.EXIT_INPUT
    assert cli.main(["run", "ball_condenser", "--tol", "-1"]) == cli.EXIT_INPUT


def test_list_bundled(capsys):
    assert cli.main(["list"]) == 0
    names = capsys.readouterr().out.split()
    assert names == bundled_scenarios()
    assert {"ball_condenser", "lebesgue_ball", "thinness_power_s1"} <= set(names)


@pytest.mark.parametrize("name", bundled_scenarios())
def test_bundled_scenarios_validate(name):
    assert cli.run(resolve_path(name), check_only=True) == cli.EXIT_OK


# -- plot data ------------------------------------------------------------------------------

def test_empty_report_gives_header_only():
    assert cli.emit_plotdata({}, "wiener_series") == "k,capacity,wiener_term,cumulative\n"


def test_plot_kind_mismatch():
    rep = {"plot": {"kind": "wiener_series", "rows": [[0, 1.0, 1.0, 1.0]]}}
    with pytest.raises(InputError):
        cli.emit_plotdata(rep, "continuity_trace")
    with pytest.raises(InputError):
        cli.emit_plotdata(rep, "histogram")


def test_wiener_series_columns(tmp_path):
    rep = {"plot": {"kind": "wiener_series", "rows": [[0, 2.0, 2.0, 2.0], [1, 3.0, 1.5, 3.5]]}}
    text = cli.emit_plotdata(rep, "wiener_series", tmp_path / "w.csv")
    assert text.splitlines() == ["k,capacity,wiener_term,cumulative", "0,2.0,2.0,2.0", "1,3.0,1.5,3.5"]
    assert (tmp_path / "w.csv").read_text() == text


def test_plot_row_width_checked():
    with pytest.raises(InputError):
        cli.emit_plotdata({"plot": {"kind": "wiener_series", "rows": [[0, 1.0]]}}, "wiener_series")


# -- scenario schema -------------------------------------------------------------------------

def test_problem_round_trip(tmp_path):
    cloud = Ball((0, 0, 0), 0.4).sample(60)
    theta = signed(DiscreteMeasure.atom((0.6, 0, 0), 0.5), DiscreteMeasure.atom((-0.6, 0.2, 0), 0.3))
    p = CondenserProblem(KernelSpec(1.5, 3), DomainGeometry.ball(), cloud,
                         Constraint(DiscreteMeasure.from_weights(cloud, 1.6)), theta, tol=1e-7,
                         diagonal_policy=mollify(0.05), F_resolution=500, weak="standard", seed=7)
    path = tmp_path / "p.yaml"
    problem_to_scenario(p, "roundtrip").dump(path)
    q = build_problem(load_scenario(path))
    assert q.spec == p.spec and q.tol == p.tol and q.seed == 7
    assert q.F_resolution == 500 and q.weak == "standard"
    assert q.diagonal_policy.kind == "mollify" and q.diagonal_policy.h == 0.05
    np.testing.assert_array_equal(q.A_cloud.points, cloud.points)
    np.testing.assert_array_equal(q.A_cloud.quad_weights, cloud.quad_weights)
    np.testing.assert_array_equal(q.sigma.sigma.masses, p.sigma.sigma.masses)
    assert q.theta.plus.total_mass == pytest.approx(0.5)
    assert q.theta.minus.total_mass == pytest.approx(0.3)
    # JSON is an alternative encoding of the same schema
    jpath = tmp_path / "p.json"
    jpath.write_text(json.dumps(problem_to_scenario(p, "roundtrip").to_dict()))
    r = build_problem(load_scenario(jpath))
    np.testing.assert_array_equal(r.A_cloud.points, cloud.points)


def test_seed_is_explicit(monkeypatch):
    d = with_changes()
    del d["seed"]
    monkeypatch.delenv(SEED_ENV, raising=False)
    with pytest.raises(InputError):
        parse_scenario(d)
    monkeypatch.setenv(SEED_ENV, "13")
    assert parse_scenario(d).seed == 13
    assert parse_scenario(SMALL_SOLVE).seed == 13
    monkeypatch.setenv(SEED_ENV, "x")
    with pytest.raises(InputError):
        parse_scenario(SMALL_SOLVE)


# -- reproducibility ------------------------------------------------------------------------

def output_files(out):
    return {p.relative_to(out): p.read_bytes() for p in sorted(Path(out).rglob("*"))
            if p.is_file() and p.name != "manifest.json"}


def test_reruns_are_byte_identical(tmp_path):
    path = write(tmp_path, SMALL_SOLVE)
    cli.run(path, out=tmp_path / "a")
    cli.run(path, out=tmp_path / "b")
    a, b = output_files(tmp_path / "a"), output_files(tmp_path / "b")
    assert len(a) == 4
    assert a == b


def test_seed_override_changes_samples(tmp_path, monkeypatch):
    d = with_changes(A={"sampler": {"kind": "ball", "center": [0, 0, 0], "radius": 0.5}, "resolution": 100})
    path = write(tmp_path, d)
    cli.run(path, out=tmp_path / "a")
    monkeypatch.setenv(SEED_ENV, "5")
    cli.run(path, out=tmp_path / "b")
    assert read_report(tmp_path / "b")["seed"] == 5
    a = (tmp_path / "a" / "measures" / "lambda_plus.csv").read_bytes()
    b = (tmp_path / "b" / "measures" / "lambda_plus.csv").read_bytes()
    assert a != b
