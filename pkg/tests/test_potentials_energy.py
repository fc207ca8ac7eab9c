import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from condenser_lab import (DiscreteMeasure, DomainGeometry, KernelSpec, PointCloud, green_energy, green_matrix,
                           mutual_energy, potential, standard_energy, sweep_measure)
from condenser_lab.energy import gauss_integral_standard
from condenser_lab.errors import CarrierError, PreconditionError, SingularEvaluationError
from condenser_lab.kernels import DiagonalPolicy, assemble_kernel_matrix, mollify
from condenser_lab.measures import signed
from condenser_lab.sampling import Ball, Sphere
from condenser_lab.weak import build_grid, gauss_integral_weak, weak_energy

S = KernelSpec(2, 3)


@pytest.fixture(scope="module")
def unit_sphere():
    return DiscreteMeasure.from_weights(Sphere((0, 0, 0), 1.0).sample(400), 1.0)


@pytest.fixture(scope="module")
def blobs():
    # two uniform balls of radius 0.3 at distance 1.5 with opposite charge
    b1 = DiscreteMeasure.from_weights(Ball((0, 0, 0), 0.3).sample(150), 1.0)
    b2 = DiscreteMeasure.from_weights(Ball((1.5, 0, 0), 0.3).sample(150), 1.0)
    return signed(b1, b2)


@pytest.fixture(scope="module")
def inner_sphere_sweep():
    nu = DiscreteMeasure.from_weights(Sphere((0, 0, 0), 0.5).sample(300), 1.0)
    return nu, sweep_measure(S, DomainGeometry.ball(), nu).swept


def random_signed(seed, n_plus=4, n_minus=3):
    rng = np.random.default_rng(seed)
    a = PointCloud(rng.uniform(-1, 0, (n_plus, 3)), np.ones(n_plus))
    b = PointCloud(rng.uniform(0.2, 1.2, (n_minus, 3)), np.ones(n_minus))
    return signed(DiscreteMeasure(a, rng.uniform(0, 1, n_plus)), DiscreteMeasure(b, rng.uniform(0, 1, n_minus)))


# -- potential ----------------------------------------------------------------------

def test_potential_of_unit_atom():
    assert potential(S, DiscreteMeasure.atom((0, 0, 0)), (2, 0, 0)) == pytest.approx(0.5)


def test_sphere_potential_outside_and_inside(unit_sphere):
    # the uniform unit sphere has potential 1/|x| outside and 1 inside
    assert potential(S, unit_sphere, (2, 0, 0)) == pytest.approx(0.5, rel=0.01)
    assert potential(S, unit_sphere, (0, 0.5, 0)) == pytest.approx(1.0, rel=0.01)
    X = Sphere((0, 0, 0), 3.0).sample(50).points
    np.testing.assert_allclose(potential(S, unit_sphere, X), 1 / 3, rtol=0.01)


def test_potential_at_atom_is_singular():
    m = DiscreteMeasure.atom((0, 0, 0))
    with pytest.raises(SingularEvaluationError):
        potential(S, m, (0, 0, 0))
    # a mollified evaluation caps the kernel instead
    assert np.isfinite(potential(S, m, (0, 0, 0), mollified=True, diagonal_policy=mollify(0.1)))


def test_signed_potential_subtracts_minus_part():
    mu = signed(DiscreteMeasure.atom((0, 0, 0)), DiscreteMeasure.atom((4, 0, 0), 0.5))
    assert potential(S, mu, (2, 0, 0)) == pytest.approx(0.5 - 0.25)


# -- standard and mutual energy ------------------------------------------------------------

def test_standard_energy_of_zero_measure():
    rep = standard_energy(S, DiscreteMeasure.zero(Sphere((0, 0, 0), 1.0).sample(10)))
    assert rep.value == 0.0 and rep.estimated_error == 0.0


def test_unit_sphere_energy(unit_sphere):
    assert standard_energy(S, unit_sphere).value == pytest.approx(1.0, rel=0.02)


def test_two_blob_energy_matches_uniform_ball_formula(blobs):
    # uniform ball of radius R has Newtonian self-energy 6/(5R); separated balls interact like points
    exact = 2 * 6 / (5 * 0.3) - 2 / 1.5
    rep = standard_energy(S, blobs)
    assert rep.value == pytest.approx(exact, rel=0.05)
    assert abs(rep.value - exact) <= rep.estimated_error


def test_energy_report_json_fields(unit_sphere):
    d = json.loads(json.dumps(standard_energy(S, unit_sphere).to_dict()))
    assert set(d) == {"value", "estimated_error", "method"}
    assert d["estimated_error"] >= 0


def test_mutual_energy_examples():
    a, b = DiscreteMeasure.atom((0, 0, 0)), DiscreteMeasure.atom((0, 2, 0))
    assert mutual_energy(S, a, b) == pytest.approx(0.5)
    assert mutual_energy(S, a, DiscreteMeasure.zero(b.cloud)) == 0.0


@given(st.integers(0, 10_000), st.sampled_from([0.5, 1.0, 1.5, 2.0]))
def test_mutual_energy_symmetric(seed, alpha):
    mu, nu = random_signed(seed), random_signed(seed + 1)
    s = KernelSpec(alpha, 3)
    assert mutual_energy(s, mu, nu) == pytest.approx(mutual_energy(s, nu, mu), rel=1e-12)


@given(st.integers(0, 10_000), st.sampled_from([0.5, 1.0, 1.5, 2.0]))
def test_standard_energy_positive(seed, alpha):
    rep = standard_energy(KernelSpec(alpha, 3), random_signed(seed), DiagonalPolicy("nearest"))
    assert rep.value > 0


# -- weak energy -------------------------------------------------------------------------

def test_weak_energy_of_zero_measure():
    assert weak_energy(S, None).value == 0.0


def test_weak_matches_standard_on_blobs(blobs):
    std = standard_energy(S, blobs)
    weak = weak_energy(S, blobs)
    assert weak.method == "weak"
    assert abs(std.value - weak.value) <= std.estimated_error + weak.estimated_error


@pytest.mark.parametrize("alpha", [1.5, 1.0])
def test_weak_matches_standard_below_two(blobs, alpha):
    s = KernelSpec(alpha, 3)
    std = standard_energy(s, blobs)
    weak = weak_energy(s, blobs)
    assert abs(std.value - weak.value) <= std.estimated_error + weak.estimated_error


def test_weak_energy_flags_unbalanced(unit_sphere):
    rep = weak_energy(S, unit_sphere)
    assert rep.method == "weak:unbalanced"
    assert rep.value == pytest.approx(1.0, rel=0.02)


def test_weak_energy_grid_too_small(blobs):
    with pytest.raises(PreconditionError):
        weak_energy(S, blobs, grid=build_grid(np.zeros(3), 1.0, 5.0, n_dir=200))


def test_grid_volume_matches_truncation_ball():
    g = build_grid(np.zeros(3), 1.0, 20.0, n_dir=500)
    _, w = g.points_weights()
    assert np.all(w > 0)
    assert w.sum() == pytest.approx(4 / 3 * np.pi * 20.0**3, rel=0.005)


@settings(max_examples=5)
@given(st.integers(0, 10_000))
def test_weak_energy_positive(seed):
    assert weak_energy(S, random_signed(seed, 3, 2), diagonal_policy=mollify(0.05), n_dir=500).value > 0


# -- Green energy ------------------------------------------------------------------------------

def test_green_energy_of_zero_measure():
    c = Sphere((0, 0, 0), 0.5).sample(20)
    assert green_energy(S, DomainGeometry.ball(), DiscreteMeasure.zero(c)).value == 0.0


def test_green_energy_below_standard_for_centered_atom():
    nu = DiscreteMeasure.atom((0, 0, 0))
    pol = mollify(0.05)
    g = green_energy(S, DomainGeometry.ball(), nu, pol).value
    e = standard_energy(S, nu, pol).value
    assert e == pytest.approx(6 / (5 * 0.05))
    # the image of the center is the point at infinity with unit swept mass: g(0, 0) = kappa - 1
    assert g == pytest.approx(e - 1.0, rel=1e-9)


def test_green_energy_rejects_atoms_outside(unit_sphere):
    with pytest.raises(CarrierError):
        green_energy(S, DomainGeometry.ball((0, 0, 0), 0.5), unit_sphere)


def test_green_identity_with_swept_measure(inner_sphere_sweep):
    nu, swept = inner_sphere_sweep
    D = DomainGeometry.ball()
    g = green_energy(S, D, nu)
    # a uniform sphere of radius r in the unit ball has Green energy 1/r - 1
    assert g.value == pytest.approx(1.0, rel=0.03)
    pair = signed(nu, swept)
    assert g.value == pytest.approx(standard_energy(S, pair).value, rel=0.03)
    w = weak_energy(S, pair)
    assert g.value == pytest.approx(w.value, rel=0.05)
    assert abs(g.value - w.value) <= g.estimated_error + w.estimated_error


@pytest.mark.parametrize("D", [DomainGeometry.ball(), DomainGeometry.half_space((0, 0, 1), 0.0)])
def test_green_entries_below_riesz(D):
    c = Ball((0, 0, 0.5), 0.4).sample(120)
    for alpha in (2.0, 1.5):
        s = KernelSpec(alpha, 3)
        G = green_matrix(s, D, c)
        K = assemble_kernel_matrix(s, c)
        assert np.all(G < K)


def test_separated_support_bound(inner_sphere_sweep):
    nu, _ = inner_sphere_sweep
    d = 0.5  # distance from the sphere of radius 0.5 to the complement of the unit ball
    e = standard_energy(S, nu).value
    g = green_energy(S, DomainGeometry.ball(), nu).value
    assert e <= g + d ** S.exponent * nu.total_mass**2


# -- Gauss integrals --------------------------------------------------------------------------------

def test_gauss_integral_two_atom_expansion():
    mu = DiscreteMeasure.atom((0, 0, 0))
    theta = DiscreteMeasure.atom((0.5, 0, 0))
    theta_swept = DiscreteMeasure.atom((2, 0, 0))
    # |mu|^2 + 2 (kappa(0, 0.5) - kappa(0, 2)) with self term 6/(5h) at h = 0.1
    val = gauss_integral_standard(S, mu, (theta, theta_swept), mollify(0.1))
    assert val == pytest.approx(12 + 2 * (2 - 0.5))


def test_gauss_integrals_reduce_without_field(blobs):
    assert gauss_integral_standard(S, None, None) == 0.0
    assert gauss_integral_weak(S, None, None).value == 0.0
    w = weak_energy(S, blobs)
    assert gauss_integral_weak(S, blobs, None).value == pytest.approx(w.value, rel=1e-12)


def test_gauss_integral_routes_agree(blobs):
    theta = DiscreteMeasure.atom((0.5, 1.0, 0.0), 0.7)
    theta_swept = DiscreteMeasure.atom((0.5, 3.0, 0.0), 0.7)
    std = gauss_integral_standard(S, blobs, (theta, theta_swept))
    weak = gauss_integral_weak(S, blobs, (theta, theta_swept))
    err = standard_energy(S, blobs).estimated_error + weak.estimated_error
    assert abs(std - weak.value) <= err


@settings(max_examples=5)
@given(st.integers(0, 10_000))
def test_weak_gauss_integral_lower_bound(seed):
    rng = np.random.default_rng(seed)
    mu = random_signed(seed, 3, 2)
    theta = DiscreteMeasure.atom(rng.uniform(-1, 1, 3), rng.uniform(0.1, 2))
    theta_swept = DiscreteMeasure.atom(rng.uniform(2, 3, 3), theta.total_mass)
    pol = mollify(0.05)
    val = gauss_integral_weak(S, mu, (theta, theta_swept), diagonal_policy=pol, n_dir=500)
    floor = standard_energy(S, signed(theta, theta_swept), pol).value
    assert val.value + val.estimated_error >= -floor
