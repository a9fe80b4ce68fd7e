import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import wasserstein_distance

from viewpcl.errors import BothAbsent, InfeasibleMarginals
from viewpcl.probability import PointCloudDistribution
from viewpcl.transport import (
    TransportConfig,
    dissimilarity,
    escape_cost,
    exact_wasserstein,
    projection_directions,
    sliced_wasserstein,
    wasserstein_1d,
)


def atoms(*pairs):
    return PointCloudDistribution.from_atoms(pairs)


def delta(point):
    return atoms((1.0, point))


def uniform_cloud(points):
    points = np.asarray(points, dtype=np.float64)
    return PointCloudDistribution(points, np.full(len(points), 1.0 / len(points)))


def random_uniform_pair(rng, grid=32, max_atoms=6):
    n = int(rng.integers(1, max_atoms + 1))
    cells = rng.choice(grid * grid, size=2 * n, replace=False)
    pts = np.stack([cells // grid, cells % grid], axis=1)
    return uniform_cloud(pts[:n]), uniform_cloud(pts[n:])


def random_cloud(rng, max_atoms=8, grid=32):
    n = int(rng.integers(1, max_atoms + 1))
    cells = rng.choice(grid * grid, size=n, replace=False)
    pts = np.stack([cells // grid, cells % grid], axis=1)
    return PointCloudDistribution(pts, rng.dirichlet(np.ones(n)))


def brute_force_matching(mu, nu, p=1.0):
    """min over all n! assignments of mean cost, for uniform clouds of equal size."""
    n = len(mu)
    cost = np.linalg.norm(mu.points[:, None] - nu.points[None], axis=2) ** p
    best = min(cost[np.arange(n), list(perm)].sum() for perm in itertools.permutations(range(n)))
    return (best / n) ** (1.0 / p)


# ---------------------------------------------------------------- exact


def test_exact_examples():
    mu = atoms((0.5, (0, 0)), (0.5, (1, 0)))
    assert exact_wasserstein(mu, mu)[0] == pytest.approx(0.0, abs=1e-12)
    assert exact_wasserstein(delta((0, 0)), delta((3, 4)))[0] == pytest.approx(5.0, abs=1e-12)
    nu = atoms((0.5, (0, 0)), (0.5, (2, 0)))
    assert exact_wasserstein(mu, nu)[0] == pytest.approx(0.5, abs=1e-12)


def test_two_atom_example_against_vertex_plans():
    # the feasible vertex plans of two uniform 2-atom clouds are the two permutations
    mu = atoms((0.5, (0, 0)), (0.5, (1, 0)))
    nu = atoms((0.5, (0, 0)), (0.5, (2, 0)))
    assert brute_force_matching(mu, nu) == 0.5
    assert exact_wasserstein(mu, nu)[0] == pytest.approx(brute_force_matching(mu, nu), abs=1e-12)


def test_plan_marginals():
    rng = np.random.default_rng(3)
    for _ in range(20):
        mu, nu = random_cloud(rng), random_cloud(rng)
        _, plan = exact_wasserstein(mu, nu)
        assert plan.pi.shape == (len(mu), len(nu))
        assert np.all(plan.pi >= 0)
        np.testing.assert_allclose(plan.pi.sum(axis=1), mu.weights, atol=1e-8)
        np.testing.assert_allclose(plan.pi.sum(axis=0), nu.weights, atol=1e-8)


def test_exact_matches_brute_force_order_two():
    rng = np.random.default_rng(4)
    cfg = TransportConfig(order=2.0)
    for _ in range(30):
        mu, nu = random_uniform_pair(rng)
        assert exact_wasserstein(mu, nu, cfg)[0] == pytest.approx(brute_force_matching(mu, nu, 2.0), abs=1e-8)


def test_mismatched_mass_is_infeasible():
    with pytest.raises(InfeasibleMarginals):
        exact_wasserstein(atoms((0.5, (0, 0))), delta((1, 1)))
    with pytest.raises(InfeasibleMarginals):
        exact_wasserstein(PointCloudDistribution(np.zeros((0, 2)), np.zeros(0)), delta((1, 1)))


def test_config_validation():
    with pytest.raises(ValueError):
        TransportConfig(order=0.5)
    with pytest.raises(ValueError):
        TransportConfig(num_projections=0)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_metric_axioms_property(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (random_cloud(rng, max_atoms=6) for _ in range(3))
    ab = exact_wasserstein(a, b)[0]
    assert ab >= 0
    assert ab == pytest.approx(exact_wasserstein(b, a)[0], abs=1e-8)
    assert ab <= exact_wasserstein(a, c)[0] + exact_wasserstein(c, b)[0] + 1e-8
    assert exact_wasserstein(a, a)[0] <= 1e-8


# ---------------------------------------------------------------- sliced


def test_sliced_identity():
    mu = atoms((0.3, (0, 0)), (0.7, (4, 1)))
    assert sliced_wasserstein(mu, mu) == 0.0


def test_sliced_unit_distance_converges_to_two_over_pi():
    # E|cos(theta)| for theta uniform on [0, pi) is 2 / pi
    value = sliced_wasserstein(delta((0, 0)), delta((1, 0)), TransportConfig(num_projections=10000))
    assert abs(value - 2 / np.pi) < 0.02


def test_sliced_collinear_reduction():
    rng = np.random.default_rng(5)
    for _ in range(20):
        m, n = rng.integers(1, 7, size=2)
        xa, xb = rng.uniform(0, 30, m), rng.uniform(0, 30, n)
        wa, wb = rng.dirichlet(np.ones(m)), rng.dirichlet(np.ones(n))
        mu = PointCloudDistribution(np.stack([xa, np.full(m, 7.0)], 1), wa)
        nu = PointCloudDistribution(np.stack([xb, np.full(n, 7.0)], 1), wb)
        sw = sliced_wasserstein(mu, nu, directions=[[1.0, 0.0]])
        oracle = wasserstein_distance(xa, xb, wa, wb)
        assert sw == pytest.approx(oracle, abs=1e-10)
        assert sw == pytest.approx(exact_wasserstein(mu, nu)[0], abs=1e-8)


def test_wasserstein_1d_against_scipy():
    rng = np.random.default_rng(6)
    for _ in range(100):
        m, n = rng.integers(1, 10, size=2)
        x, y = rng.integers(0, 5, m).astype(float), rng.normal(size=n)
        a, b = rng.dirichlet(np.ones(m)), rng.dirichlet(np.ones(n))
        assert wasserstein_1d(x, a, y, b) == pytest.approx(wasserstein_distance(x, y, a, b), abs=1e-12)


def test_projection_directions_are_unit_and_seeded():
    d = projection_directions(100, 7)
    np.testing.assert_allclose(np.linalg.norm(d, axis=1), 1.0)
    assert np.all(d[:, 1] >= 0)
    np.testing.assert_array_equal(d, projection_directions(100, 7))
    assert not np.array_equal(d, projection_directions(100, 8))


def test_sliced_translation_invariance_and_determinism():
    rng = np.random.default_rng(8)
    for _ in range(20):
        mu, nu = random_cloud(rng), random_cloud(rng)
        shift = rng.uniform(-50, 50, size=2)
        moved_mu = PointCloudDistribution(mu.points + shift, mu.weights)
        moved_nu = PointCloudDistribution(nu.points + shift, nu.weights)
        base = sliced_wasserstein(mu, nu)
        assert sliced_wasserstein(moved_mu, moved_nu) == pytest.approx(base, abs=1e-9)
        assert sliced_wasserstein(mu, nu) == base


def test_sliced_below_exact():
    rng = np.random.default_rng(9)
    for _ in range(50):
        mu, nu = random_cloud(rng), random_cloud(rng)
        assert sliced_wasserstein(mu, nu) <= exact_wasserstein(mu, nu)[0] + 1e-8


# ---------------------------------------------------------------- escape cost


def box(rows, cols):
    return np.array([(r, c) for r in range(rows) for c in range(cols)])


def test_escape_box_center():
    assert escape_cost(delta((1, 1)), box(3, 3)) == 1.0


def test_escape_boundary_atom():
    assert escape_cost(delta((0, 1)), box(3, 3)) == 0.0
    assert escape_cost(delta((2, 2)), box(3, 3)) == 0.0


def test_escape_two_atoms():
    mu = atoms((0.5, (2, 1)), (0.5, (1, 1)))
    assert escape_cost(mu, box(5, 3)) == 1.0


def test_escape_order_two_hand_value():
    # distances 2 and 1 to the nearest side: sqrt(0.5 * 4 + 0.5 * 1)
    mu = atoms((0.5, (2, 2)), (0.5, (1, 2)))
    value = escape_cost(mu, box(5, 5), TransportConfig(order=2.0))
    assert value == pytest.approx(np.sqrt(2.5), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_escape_zero_iff_on_boundary(seed):
    rng = np.random.default_rng(seed)
    rows, cols = rng.integers(1, 8, size=2)
    n = int(rng.integers(1, 5))
    pts = np.stack([rng.integers(0, rows, n), rng.integers(0, cols, n)], 1)
    mu = PointCloudDistribution(pts, rng.dirichlet(np.ones(n)) + 1e-3)
    mu = PointCloudDistribution(mu.points, mu.weights / mu.weights.sum())
    on_boundary = (pts[:, 0] == 0) | (pts[:, 0] == rows - 1) | (pts[:, 1] == 0) | (pts[:, 1] == cols - 1)
    assert (escape_cost(mu, box(rows, cols)) == 0.0) == bool(on_boundary.all())


# ---------------------------------------------------------------- dispatch


def test_dissimilarity_routes():
    region = box(3, 3)
    mu = atoms((0.5, (0, 0)), (0.5, (1, 0)))
    nu = atoms((0.5, (0, 0)), (0.5, (2, 0)))
    assert dissimilarity(mu, mu, region) == pytest.approx(0.0, abs=1e-12)
    assert dissimilarity(delta((1, 1)), None, region) == 1.0
    assert dissimilarity(None, delta((1, 1)), region) == 1.0
    assert dissimilarity(mu, nu, region, TransportConfig(exact_cutoff=2)) == pytest.approx(0.5, abs=1e-12)
    sliced_cfg = TransportConfig(exact_cutoff=1)
    assert dissimilarity(mu, nu, region, sliced_cfg) == sliced_wasserstein(mu, nu, sliced_cfg)
    with pytest.raises(BothAbsent):
        dissimilarity(None, None, region)
