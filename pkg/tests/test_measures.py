import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from condenser_lab import Constraint, DiscreteMeasure, PointCloud, SignedCondenserMeasure
from condenser_lab.errors import ConstructionError, InfeasibleConstraintError, InputError
from condenser_lab.measures import is_dominated, restrict, signed, total_mass
from condenser_lab.sampling import Complement, EmptyRegion, OpenBall, WholeSpace


def line_cloud(n_atoms, spacing=0.1):
    pts = np.zeros((n_atoms, 3))
    pts[:, 0] = spacing * np.arange(n_atoms)
    return PointCloud(pts, np.full(n_atoms, spacing))


def on_cloud(masses):
    return DiscreteMeasure(line_cloud(len(masses)), masses)


mass_lists = st.lists(st.floats(0, 10, allow_nan=False), min_size=1, max_size=12)


# -- total_mass ------------------------------------------------------------------

def test_total_mass_examples():
    assert total_mass(DiscreteMeasure.atom((0, 0, 0))) == 1.0
    assert total_mass(DiscreteMeasure.zero(PointCloud(np.zeros((0, 3)), np.zeros(0)))) == 0.0
    assert total_mass(on_cloud([0.3, 0.7])) == pytest.approx(1.0)


def test_measure_rejects_bad_masses():
    c = line_cloud(2)
    for bad in ([1.0], [1.0, -0.1], [1.0, np.inf], [np.nan, 1.0]):
        with pytest.raises(InputError):
            DiscreteMeasure(c, bad)


def test_masses_are_read_only():
    m = on_cloud([0.2, 0.3])
    with pytest.raises(ValueError):
        m.masses[0] = 5.0


def test_from_weights_rescales():
    m = DiscreteMeasure.from_weights(line_cloud(5), total=2.0)
    assert m.total_mass == pytest.approx(2.0)
    np.testing.assert_allclose(m.masses, 0.4)


def test_measure_csv_round_trip():
    m = on_cloud([0.25, 0.5, 0.125])
    back = DiscreteMeasure.from_csv(m.to_csv())
    np.testing.assert_array_equal(back.masses, m.masses)
    np.testing.assert_array_equal(back.cloud.points, m.cloud.points)


# -- restrict ------------------------------------------------------------------

def test_restrict_to_whole_space_is_identity():
    m = on_cloud([0.1, 0.2, 0.3])
    r = restrict(m, WholeSpace())
    np.testing.assert_array_equal(r.masses, m.masses)
    np.testing.assert_array_equal(r.cloud.points, m.cloud.points)


def test_restrict_to_empty_set_is_zero():
    assert restrict(on_cloud([0.1, 0.2]), EmptyRegion()).total_mass == 0.0


def test_restrict_keeps_atoms_inside_ball():
    c = PointCloud([[0.4, 0, 0], [0, 0.9, 0]], [1, 1])
    r = restrict(DiscreteMeasure(c, [0.3, 0.7]), OpenBall((0, 0, 0), 0.5))
    assert r.size == 1
    np.testing.assert_allclose(r.cloud.points, [[0.4, 0, 0]])
    assert r.total_mass == pytest.approx(0.3)


@given(mass_lists, st.floats(0.0, 1.5))
def test_restrict_idempotent_and_additive(masses, radius):
    m = on_cloud(masses)
    R = OpenBall((0, 0, 0), radius)
    once = restrict(m, R)
    twice = restrict(once, R)
    np.testing.assert_array_equal(once.masses, twice.masses)
    outside = restrict(m, Complement(R))
    assert once.total_mass + outside.total_mass == pytest.approx(m.total_mass, rel=1e-12, abs=1e-12)


# -- domination ------------------------------------------------------------------

def test_domination_examples():
    c = line_cloud(2)
    sigma = Constraint(DiscreteMeasure(c, [0.5, 0.7]))
    assert is_dominated(DiscreteMeasure(c, [0.2, 0.3]), sigma)
    assert not is_dominated(DiscreteMeasure(c, [0.6, 0.4]), sigma)
    assert is_dominated(DiscreteMeasure(c, [1e6, 1e6]), Constraint.infinite())


def test_domination_slack():
    c = line_cloud(2)
    sigma = Constraint(DiscreteMeasure(c, [0.6, 0.6]))
    assert is_dominated(DiscreteMeasure(c, [0.6 + 5e-13, 0.1]), sigma)
    assert not is_dominated(DiscreteMeasure(c, [0.6 + 1e-9, 0.1]), sigma)


def test_domination_needs_shared_cloud():
    sigma = Constraint(on_cloud([0.8, 0.8]))
    with pytest.raises(InputError):
        is_dominated(DiscreteMeasure(line_cloud(2, 0.2), [0.1, 0.1]), sigma)


@pytest.mark.parametrize("masses", [[0.5, 0.5], [0.2, 0.3], [0.0, 0.0]])
def test_constraint_needs_mass_above_one(masses):
    with pytest.raises(InfeasibleConstraintError) as exc:
        Constraint(on_cloud(masses))
    assert exc.value.code == "infeasible_constraint"


@given(st.integers(0, 10_000), st.integers(1, 8))
def test_domination_is_a_partial_order(seed, N):
    rng = np.random.default_rng(seed)
    c = line_cloud(N)
    base = rng.uniform(0, 1, N)
    # draw triples with frequent ties and comparable pairs
    a = DiscreteMeasure(c, base)
    b = DiscreteMeasure(c, base + rng.choice([0.0, 0.5], N) + 1.1)
    d = DiscreteMeasure(c, b.masses + rng.choice([0.0, 0.25], N))
    leq = lambda x, y: is_dominated(x, Constraint(y))
    assert leq(b, b) and leq(d, d)
    assert leq(a, b) and leq(b, d) and leq(a, d)
    if leq(b, d) and leq(d, b):
        np.testing.assert_allclose(b.masses, d.masses, atol=1e-12)
    e = DiscreteMeasure(c, rng.uniform(1.1, 3, N))
    if leq(e, b) and leq(b, e):
        np.testing.assert_allclose(e.masses, b.masses, atol=1e-12)


# -- signed condenser measures ----------------------------------------------------------

def test_signed_measure_normalized_flag():
    plus = DiscreteMeasure.atom((0, 0, 0))
    minus = DiscreteMeasure.atom((2, 0, 0))
    mu = SignedCondenserMeasure(plus, minus)
    assert mu.normalized
    assert mu.net_mass == 0.0
    assert not SignedCondenserMeasure(plus, minus.scaled(0.5)).normalized


def test_signed_measure_parts_must_be_disjoint():
    with pytest.raises(ConstructionError):
        SignedCondenserMeasure(DiscreteMeasure.atom((1, 0, 0)), DiscreteMeasure.atom((1, 0, 0)))


def test_signed_without_minus_part():
    mu = signed(DiscreteMeasure.atom((0, 0, 0), 0.5))
    assert mu.minus.size == 0
    assert mu.net_mass == 0.5
    cloud, w = mu.combined()
    assert cloud.size == 1 and w.tolist() == [0.5]


def test_negative_scaling_swaps_parts():
    mu = SignedCondenserMeasure(DiscreteMeasure.atom((0, 0, 0), 1.0), DiscreteMeasure.atom((3, 0, 0), 0.5))
    neg = mu.scaled(-2.0)
    assert neg.plus.total_mass == pytest.approx(1.0)
    assert neg.minus.total_mass == pytest.approx(2.0)
