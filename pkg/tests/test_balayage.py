import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from condenser_lab import DiscreteMeasure, DomainGeometry, KernelSpec, PointCloud
from condenser_lab.balayage import (Sweeper, balayage_closed_form, balayage_numeric, default_F_cloud,
                                    green_kernel_eval, mass_diagnostic, sweep_measure)
from condenser_lab.energy import quadratic
from condenser_lab.errors import CarrierError, DomainError, InputError, SingularEvaluationError
from condenser_lab.geometry import Profile
from condenser_lab.sampling import Sphere

S = KernelSpec(2, 3)
BALL = DomainGeometry.ball()
EXTERIOR = DomainGeometry.ball_exterior()
HALF = DomainGeometry.half_space((1, 0, 0), 0.0)


def polar_bins(cloud, masses, n_bins=8):
    z = cloud.points[:, 2] / np.linalg.norm(cloud.points, axis=1)
    idx = np.minimum(((z + 1) / 2 * n_bins).astype(int), n_bins - 1)
    return np.bincount(idx, masses, n_bins)


# -- closed form -------------------------------------------------------------------

def test_ball_center_sweeps_to_uniform_sphere():
    r = balayage_closed_form(S, BALL, ((0, 0, 0), 1.0))
    assert r.mass_out == pytest.approx(1.0)
    assert r.potential_residual < 0.01
    dens = r.swept.masses / r.swept.cloud.quad_weights
    np.testing.assert_allclose(dens, 1 / (4 * np.pi), rtol=1e-9)
    np.testing.assert_allclose(np.linalg.norm(r.swept.cloud.points, axis=1), 1.0)


def test_exterior_sweep_mass_is_one_over_distance():
    r = balayage_closed_form(S, EXTERIOR, ((2, 0, 0), 1.0))
    assert r.mass_out == pytest.approx(0.5, rel=0.01)
    assert r.potential_residual < 0.02


def test_boundary_atom_is_fixed():
    r = balayage_closed_form(S, BALL, ((0, 1, 0), 0.7))
    assert r.method == "identity"
    assert r.potential_residual == 0.0
    np.testing.assert_array_equal(r.swept.cloud.points, [[0, 1, 0]])
    assert r.mass_out == 0.7


def test_closed_form_rejects_atom_in_F():
    with pytest.raises(CarrierError):
        balayage_closed_form(S, BALL, ((2, 0, 0), 1.0))


def test_closed_form_unavailable_for_rotation_body():
    D = DomainGeometry.rotation_body_complement(Profile("power", 1.0))
    with pytest.raises(InputError):
        balayage_closed_form(S, D, ((-1, 0, 0), 1.0))


def test_balayage_result_serializes():
    r = balayage_closed_form(S, EXTERIOR, ((2, 0, 0), 1.0), resolution=100)
    d = json.loads(json.dumps(r.to_dict()))
    assert d["mass_out"] == pytest.approx(0.5)
    assert len(d["swept_masses"]) == r.swept.size
    assert r.swept.to_csv().splitlines()[0] == "x1,x2,x3,mass"


@pytest.mark.parametrize("D", [BALL, EXTERIOR, HALF])
@given(seed=st.integers(0, 10_000))
@settings(max_examples=10)
def test_closed_form_sweeps_positive_and_mass_bounded(D, seed):
    rng = np.random.default_rng(seed)
    for _ in range(20):
        y = rng.uniform(-3, 3, 3)
        if D.in_D(y[None])[0] and abs(D.signed_distance(y[None])[0]) > 0.05:
            break
    else:
        return
    r = balayage_closed_form(S, D, (y, 1.0))
    assert np.all(r.swept.masses >= 0)
    assert r.mass_out <= r.mass_in + 1e-9
    assert r.potential_residual < 0.02


def test_fractional_closed_form_potential_match():
    r = balayage_closed_form(KernelSpec(1.5, 3), BALL, ((0.3, 0, 0), 1.0), resolution=1500)
    assert r.potential_residual < 0.02
    assert r.mass_out == pytest.approx(r.analytic_mass)


def test_fractional_residual_decreases_with_resolution():
    # point evaluation inside a volume carrier converges slowly for small alpha
    s = KernelSpec(1.0, 3)
    coarse = balayage_closed_form(s, EXTERIOR, ((2, 0, 0), 1.0), resolution=800)
    fine = balayage_closed_form(s, EXTERIOR, ((2, 0, 0), 1.0), resolution=3000)
    assert fine.potential_residual < coarse.potential_residual


# -- numeric route ---------------------------------------------------------------------

def test_numeric_agrees_with_closed_form_after_binning():
    F = default_F_cloud(S, BALL, 800)
    num = balayage_numeric(S, BALL, DiscreteMeasure.atom((0, 0, 0)), F)
    exact = balayage_closed_form(S, BALL, ((0, 0, 0), 1.0), resolution=800)
    a = polar_bins(F, num.swept.masses)
    b = polar_bins(exact.swept.cloud, exact.swept.masses)
    np.testing.assert_allclose(a, b, rtol=0.02)


def test_numeric_exterior_mass_deficit():
    r = balayage_numeric(S, EXTERIOR, DiscreteMeasure.atom((2, 0, 0)), Sphere((0, 0, 0), 1.0).sample(600))
    assert r.mass_out == pytest.approx(0.5, rel=0.01)
    diag = mass_diagnostic(r, EXTERIOR)
    assert diag["status"] == "deficient"
    assert diag["deficit"] == pytest.approx(0.5, rel=0.02)
    assert diag["consistent"]


def test_numeric_half_space_preserves_mass():
    F = default_F_cloud(S, HALF, 800, focus=np.array([1.0, 0, 0]))
    r = balayage_numeric(S, HALF, DiscreteMeasure.atom((1, 0, 0)), F)
    assert r.mass_out == pytest.approx(1.0, rel=0.01)
    assert r.potential_residual < 0.02
    diag = mass_diagnostic(r, HALF)
    assert diag["status"] == "preserved" and diag["consistent"]


def test_numeric_linearity():
    c = PointCloud([[0.2, 0, 0], [-0.3, 0.4, 0]], [1, 1])
    F = default_F_cloud(S, BALL, 400)
    n1 = DiscreteMeasure(c, [0.6, 0.0])
    n2 = DiscreteMeasure(c, [0.0, 0.9])
    whole = balayage_numeric(S, BALL, n1 + n2, F).swept.masses
    split = balayage_numeric(S, BALL, n1, F).swept.masses + balayage_numeric(S, BALL, n2, F).swept.masses
    np.testing.assert_allclose(whole, split, atol=1e-6 * whole.max())


def test_numeric_projection_is_optimal():
    F = default_F_cloud(S, BALL, 300)
    nu = DiscreteMeasure(PointCloud([[0.4, 0.1, 0], [-0.2, 0, 0.5]], [1, 1]), [0.5, 0.7])
    swept = balayage_numeric(S, BALL, nu, F).swept
    best = quadratic(S, [(nu, 1.0), (swept, -1.0)])
    rng = np.random.default_rng(0)
    for _ in range(30):
        eta = DiscreteMeasure(F, np.clip(swept.masses + rng.normal(0, 0.3, F.size) * swept.masses, 0, None))
        assert best <= quadratic(S, [(nu, 1.0), (eta, -1.0)]) + 1e-9
        eta = DiscreteMeasure(F, rng.uniform(0, 2 * swept.masses.max(), F.size))
        assert best <= quadratic(S, [(nu, 1.0), (eta, -1.0)]) + 1e-9


def test_zero_measure_sweep_is_preserved():
    F = default_F_cloud(S, BALL, 100)
    r = balayage_numeric(S, BALL, DiscreteMeasure.zero(PointCloud([[0, 0, 0]], [1])), F)
    assert r.mass_out == 0.0
    assert mass_diagnostic(r) == {"status": "preserved", "deficit": 0.0, "relative_deficit": 0.0}


def test_numeric_mass_close_to_bound():
    # the continuum bound is exact for closed forms; numeric sweeps carry a discretization error
    F = default_F_cloud(S, BALL, 800)
    r = balayage_numeric(S, BALL, DiscreteMeasure.atom((0, 0, 0)), F)
    assert r.mass_out <= r.mass_in * 1.01


# -- sweeper and whole-measure sweeps ------------------------------------------------------

def test_sweeper_caches_columns():
    sw = Sweeper(S, BALL, default_F_cloud(S, BALL, 300))
    c = PointCloud([[0.1, 0, 0], [0, 0.2, 0]], [1, 1])
    a = sw.sweep(c)
    assert len(sw) == 2
    b = sw.sweep(c.subset([1]))
    assert len(sw) == 2
    np.testing.assert_array_equal(a[:, 1], b[:, 0])


def test_sweep_measure_numeric_matches_closed_form_mass():
    nu = DiscreteMeasure.from_weights(Sphere((0, 0, 0), 0.5).sample(100), 1.0)
    closed = sweep_measure(S, DomainGeometry.ball_exterior((0, 0, 0), 0.25), nu)
    # a sphere of radius 0.5 around a ball of radius 0.25 keeps half of its mass
    assert closed.mass_out == pytest.approx(0.5, rel=0.01)
    sw = Sweeper(S, BALL, default_F_cloud(S, BALL, 600))
    num = sweep_measure(S, BALL, nu, sweeper=sw)
    assert num.method == "numeric"
    assert num.mass_out == pytest.approx(1.0, rel=0.01)
    assert num.potential_residual < 0.02


# -- Green kernel ----------------------------------------------------------------------------

def test_green_kernel_of_ball_center():
    assert green_kernel_eval(S, BALL, (0, 0, 0), (0.5, 0, 0)) == pytest.approx(1.0, rel=0.01)


def test_green_kernel_numeric_route_matches():
    sw = Sweeper(S, BALL, default_F_cloud(S, BALL, 800))
    assert green_kernel_eval(S, BALL, (0, 0, 0), (0.5, 0, 0), sweeper=sw) == pytest.approx(1.0, rel=0.01)


@given(st.integers(0, 10_000))
def test_green_kernel_bounds_and_symmetry(seed):
    rng = np.random.default_rng(seed)
    x, y = rng.uniform(-0.55, 0.55, (2, 3))
    g = green_kernel_eval(S, BALL, x, y)
    k = 1 / np.linalg.norm(x - y)
    assert 0 < g < k
    assert green_kernel_eval(S, BALL, y, x) == pytest.approx(g, rel=0.01)


def test_green_kernel_errors():
    with pytest.raises(SingularEvaluationError):
        green_kernel_eval(S, BALL, (0.1, 0, 0), (0.1, 0, 0))
    with pytest.raises(DomainError):
        green_kernel_eval(S, BALL, (2, 0, 0), (0.1, 0, 0))
