import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from condenser_lab import (CondenserProblem, Constraint, DiscreteMeasure, DomainGeometry, KernelSpec, PointCloud,
                           assemble_condenser_solution, green_equilibrium, green_matrix, solve_green_gauss,
                           support_identity_check, verify_optimality)
from condenser_lab.errors import ConditioningError, InfeasibleConstraintError
from condenser_lab.measures import signed
from condenser_lab.qp import kkt_level, kkt_violations, project_capped_simplex, solve_box_simplex_qp
from condenser_lab.sampling import Ball, Sphere
from condenser_lab.scenario import build_problem, load_scenario, resolve_path
from condenser_lab.solver import assemble_green_problem, atomwise_error, field_energy, green_gauss_objective

S = KernelSpec(2, 3)
BALL = DomainGeometry.ball()
TOY = np.array([[2.0, 1.0], [1.0, 2.0]])


def brute_force_toy(upper, step=1e-5):
    """Minimize over a fine grid on the 1-simplex cut by the box."""
    t = np.arange(0.0, 1.0 + step / 2, step)
    w = np.stack([t, 1 - t], axis=1)
    ok = np.all(w <= np.asarray(upper) + 1e-12, axis=1)
    w = w[ok]
    f = np.einsum("ij,jk,ik->i", w, TOY, w)
    i = int(np.argmin(f))
    return w[i], f[i]


@pytest.fixture(scope="module")
def sphere_problem():
    return CondenserProblem(S, BALL, Sphere((0, 0, 0), 0.5).sample(200))


@pytest.fixture(scope="module")
def sphere_report(sphere_problem):
    return solve_green_gauss(sphere_problem)


@pytest.fixture(scope="module")
def field_problem():
    # a constrained plate with an attracting field charge off to one side
    cloud = Ball((0, 0, 0), 0.4).sample(150)
    sigma = Constraint(DiscreteMeasure.from_weights(cloud, 1.6))
    theta = signed(DiscreteMeasure.atom((0.6, 0, 0), 0.5), DiscreteMeasure.atom((-0.6, 0.2, 0), 0.3))
    return CondenserProblem(S, BALL, cloud, sigma, theta, weak="standard")


@pytest.fixture(scope="module")
def field_report(field_problem):
    return solve_green_gauss(field_problem)


# -- two-atom toy ----------------------------------------------------------------------------

def test_toy_without_active_box():
    res = solve_box_simplex_qp(TOY, None, [0.8, 0.8])
    w_bf, f_bf = brute_force_toy([0.8, 0.8])
    np.testing.assert_allclose(res.x, [0.5, 0.5], atol=1e-9)
    np.testing.assert_allclose(res.x, w_bf, atol=1e-5)
    assert res.objective == pytest.approx(1.5) == pytest.approx(f_bf)
    assert res.level == pytest.approx(1.5)
    assert res.lower_violation < 1e-9 and res.upper_violation < 1e-9
    assert res.converged


def test_toy_with_active_upper_bound():
    res = solve_box_simplex_qp(TOY, None, [0.3, 0.8])
    w_bf, f_bf = brute_force_toy([0.3, 0.8])
    np.testing.assert_allclose(res.x, [0.3, 0.7], atol=1e-9)
    np.testing.assert_allclose(res.x, w_bf, atol=1e-5)
    assert res.objective == pytest.approx(1.58) == pytest.approx(f_bf)
    # the free atom fixes the level; the capped atom sits below it
    p = TOY @ res.x
    assert res.level == pytest.approx(p[1])
    assert p[0] < res.level
    assert res.lower_violation < 1e-9 and res.upper_violation < 1e-9


def test_level_falls_back_to_midpoint_without_free_atoms():
    w = np.array([0.5, 0.5, 0.0])
    u = np.array([0.5, 0.5, 1.0])
    p = np.array([1.0, 1.2, 2.0])
    assert kkt_level(p, w, u) == pytest.approx(0.5 * (1.2 + 2.0))
    lo, up = kkt_violations(p, w, u, 1.6)
    assert lo == 0.0 and up == 0.0


def test_infeasible_box():
    with pytest.raises(InfeasibleConstraintError):
        solve_box_simplex_qp(TOY, None, [0.3, 0.5])


def test_indefinite_matrix():
    with pytest.raises(ConditioningError):
        solve_box_simplex_qp(np.array([[1.0, 2.0], [2.0, 1.0]]), None, None)


@given(st.integers(0, 10_000))
def test_capped_simplex_projection(seed):
    rng = np.random.default_rng(seed)
    u = rng.uniform(0.05, 0.5, 8)
    x = project_capped_simplex(rng.normal(size=8), u)
    assert x.sum() == pytest.approx(1.0)
    assert np.all(x >= -1e-12) and np.all(x <= u + 1e-12)


# -- field-free Green problem ---------------------------------------------------------------------

def test_field_free_solution_is_normalized_equilibrium(sphere_problem, sphere_report):
    eq = green_equilibrium(S, BALL, sphere_problem.A_cloud)
    ref = eq.gamma.masses / eq.capacity
    assert atomwise_error(sphere_report.lambda_plus.masses, ref) < 0.02
    # the minimum of the Green energy over probability measures is 1 / c_g
    assert sphere_report.objective_green == pytest.approx(1 / eq.capacity, rel=1e-6)
    assert sphere_report.w == pytest.approx(1 / eq.capacity, rel=1e-6)


def test_report_invariants(sphere_report, field_report, field_problem):
    for rep in (sphere_report, field_report):
        assert rep.converged
        assert rep.lambda_plus.total_mass == pytest.approx(1.0, abs=1e-9)
        assert np.all(rep.lambda_minus.masses >= 0)
        assert rep.lambda_minus.total_mass <= 1 + 1e-9
        assert rep.bridge_gap <= rep.combined_error
    u = field_problem.sigma.upper_bounds(field_problem.A_cloud)
    assert np.all(field_report.lambda_plus.masses <= u + 1e-12)


def test_report_serializes(field_report):
    d = json.loads(field_report.to_json())
    assert d["converged"] and d["weak_method"] == "standard"
    assert d["plus_mass"] == pytest.approx(1.0)
    assert set(d["energies"]) == {"green", "standard_plus", "standard_pair"}
    assert d["bridge_gap"] == pytest.approx(field_report.bridge_gap)


def test_unique_from_different_starts(field_problem, field_report):
    G, b, u = assemble_green_problem(field_problem)
    rng = np.random.default_rng(3)
    other = solve_green_gauss(field_problem, x0=project_capped_simplex(rng.uniform(0, 1, G.shape[0]), u),
                              assemble=False)
    d = other.lambda_plus.masses - field_report.lambda_plus.masses
    assert np.sqrt(max(d @ G @ d, 0.0)) < 1e-6


def test_feasible_dominance(field_problem, field_report):
    G, b, u = assemble_green_problem(field_problem)
    rng = np.random.default_rng(11)
    for _ in range(50):
        nu = project_capped_simplex(rng.exponential(size=G.shape[0]), u)
        assert green_gauss_objective(G, b, nu) >= field_report.objective_green - field_problem.tol


def test_objective_lower_bound(field_problem, field_report):
    assert field_report.objective_green >= -field_energy(field_problem) - field_problem.tol


def test_kkt_two_sided(field_problem, field_report):
    G, b, u = assemble_green_problem(field_problem)
    x = field_report.lambda_plus.masses
    p = G @ x + b
    free = (x > 1e-12) & (x < u - 1e-12)
    assert free.any()
    scale = max(abs(field_report.w), np.abs(p).max())
    assert np.max(np.abs(p[free] - field_report.w)) / scale <= field_problem.tol
    cert = verify_optimality(field_problem, field_report)
    assert cert.passed and cert.field_free_excess is None


def test_perturbation_raises_objective(field_problem, field_report):
    G, b, u = assemble_green_problem(field_problem)
    x = field_report.lambda_plus.masses
    free = np.nonzero((x > 1e-12) & (x < u - 1e-12))[0]
    i, j = free[0], free[-1]
    # move 1% of the smaller mass while staying inside the box
    step = 0.01 * min(x[i], x[j], u[i] - x[i], u[j] - x[j])
    for sgn in (1, -1):
        y = x.copy()
        y[i] += sgn * step
        y[j] -= sgn * step
        assert green_gauss_objective(G, b, y) > field_report.objective_green


# -- certificates ------------------------------------------------------------------------------

def test_field_free_potential_below_level(sphere_problem, sphere_report):
    cert = verify_optimality(sphere_problem, sphere_report, n_check=100)
    assert cert.passed and cert.sufficient
    assert cert.field_free_points > 50
    assert cert.field_free_excess <= 0.02


def test_exterior_check_cloud(sphere_problem, sphere_report):
    rng = np.random.default_rng(5)
    u = rng.normal(size=(100, 3))
    X = u / np.linalg.norm(u, axis=1)[:, None] * rng.uniform(1.05, 20, 100)[:, None]
    cert = verify_optimality(sphere_problem, sphere_report, check_cloud=X)
    # points within a few spacings of the swept atoms are skipped
    assert 80 <= cert.field_free_points <= 100
    assert cert.field_free_excess <= 0.02


def test_support_check_fractional_sphere():
    s = KernelSpec(1.5, 3)
    for res in (120, 240):
        cloud = Sphere((0, 0, 0), 0.5).sample(res)
        p = CondenserProblem(s, BALL, cloud, Constraint(DiscreteMeasure.from_weights(cloud, 2.0)), weak="none")
        chk = support_identity_check(p, solve_green_gauss(p, assemble=False))
        assert chk.applicable and chk.passed
        assert chk.offending.shape == (0, 3)


def test_support_check_not_applicable(sphere_problem, sphere_report):
    chk = support_identity_check(sphere_problem, sphere_report)
    assert not chk.applicable and chk.passed is None
    cloud = sphere_problem.A_cloud
    p = CondenserProblem(S, BALL, cloud, Constraint(DiscreteMeasure.from_weights(cloud, 2.0)), weak="none")
    chk = support_identity_check(p, solve_green_gauss(p, assemble=False))
    assert not chk.applicable and "alpha" in chk.reason
    p = CondenserProblem(KernelSpec(1.5, 3), BALL, cloud, weak="none")
    chk = support_identity_check(p, solve_green_gauss(p, assemble=False))
    assert not chk.applicable and "sigma" in chk.reason


# -- assembly --------------------------------------------------------------------------------

def test_lebesgue_ball_assembly():
    p = build_problem(load_scenario(resolve_path("lebesgue_ball")), resolution=600)
    rep = solve_green_gauss(p)
    assert rep.converged
    assert rep.lambda_minus.total_mass <= 1 + 1e-9
    assert rep.bridge_gap <= rep.combined_error


def test_half_space_keeps_full_minus_mass():
    D = DomainGeometry.half_space((0, 0, 1), 0.0)
    p = CondenserProblem(S, D, Ball((0, 0, 1.0), 0.4).sample(150), weak="standard")
    rep = solve_green_gauss(p)
    assert rep.lambda_minus.total_mass == pytest.approx(1.0, rel=0.01)
    assert rep.balayage["method"] == "closed_form"


def test_minus_part_rotation_symmetric():
    def solve(cloud):
        p = CondenserProblem(S, BALL, cloud, weak="none")
        return solve_green_gauss(p).lambda_minus

    cloud = Sphere((0, 0, 0), 0.5).sample(150)
    a = solve(cloud)
    Q, _ = np.linalg.qr(np.random.default_rng(2).normal(size=(3, 3)))
    b = solve(PointCloud(cloud.points @ Q.T, cloud.quad_weights))
    # compare the swept densities through their radial profile and polar moments
    for m in (a, b):
        assert np.linalg.norm(m.masses @ m.cloud.points) < 0.02 * m.total_mass
    assert a.total_mass == pytest.approx(b.total_mass, rel=1e-6)


def test_assembly_is_repeatable(field_problem, field_report):
    rep = solve_green_gauss(field_problem, assemble=False)
    assert rep.lambda_minus is None and rep.objective_weak is None
    pair = assemble_condenser_solution(field_problem, rep)
    np.testing.assert_allclose(pair.minus.masses, field_report.lambda_minus.masses)
    assert rep.objective_weak == pytest.approx(field_report.objective_weak)


def test_green_matrix_matches_assembly(sphere_problem):
    G, b, u = assemble_green_problem(sphere_problem)
    np.testing.assert_array_equal(G, green_matrix(S, BALL, sphere_problem.A_cloud))
    assert not b.any() and u is None
