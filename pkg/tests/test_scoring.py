import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_view
from viewpcl.errors import EmptyOmega
from viewpcl.geometry import OverlapRegion, pairwise_cross_projections
from viewpcl.probability import (
    ClassProbabilityMap,
    PointCloudDistribution,
    RegionProbabilityFamily,
    SelectionDistribution,
    uniform_selection,
)
from viewpcl.scoring import (
    ScoreEntry,
    ScoreTable,
    ScoringConfig,
    SubregionScoreInput,
    build_score_table,
    pixel_view_stats,
    prominent_classes,
    subregion_score,
    superpixel_baseline_scores,
    superpixel_viewpcl_score,
    view_divergence,
    view_entropy,
)
from viewpcl.transport import exact_wasserstein


def score_input(region, p1, p2, q=None):
    region = np.asarray(region)
    q = uniform_selection(region) if q is None else SelectionDistribution(region, np.asarray(q, float))
    return SubregionScoreInput(RegionProbabilityFamily(region, p1), RegionProbabilityFamily(region, p2), q)


def fake_region(rel_size, n=4):
    size = int(round(n / rel_size))
    px = np.zeros((n, 2), dtype=np.int64)
    return OverlapRegion(0, 1, 0, px, px, size)


def random_input(rng, n=None, c=3):
    n = n or int(rng.integers(1, 10))
    cells = rng.choice(64, size=n, replace=False)
    region = np.stack([cells // 8, cells % 8], 1)
    p1 = rng.dirichlet(np.ones(c), size=n)
    p2 = rng.dirichlet(np.ones(c), size=n)
    return score_input(region, p1, p2)


# ---------------------------------------------------------------- prominent classes


def test_prominent_classes_examples():
    same = np.array([[0.2, 0.8], [0.4, 0.6]])
    c1, c2 = prominent_classes(score_input([(0, 0), (0, 1)], same, same))
    assert c1 == c2 == 1
    inp = score_input([(0, 0)], [[0.6, 0.4]], [[0.3, 0.7]])
    assert prominent_classes(inp) == (0, 1)
    tie = score_input([(0, 0)], [[0.5, 0.5]], [[0.5, 0.5]])
    assert prominent_classes(tie) == (0, 0)


# ---------------------------------------------------------------- subregion score


def test_equal_families_score_zero():
    rng = np.random.default_rng(0)
    inp = random_input(rng, n=6)
    same = score_input(inp.region, inp.family_p1.maps, inp.family_p1.maps)
    assert subregion_score(same) == 0.0


def test_two_pixel_swap_equals_pixel_distance():
    z1, z2 = (0, 0), (3, 4)
    inp = score_input([z1, z2], [[1.0, 0.0], [0.0, 1.0]], [[0.0, 1.0], [1.0, 0.0]])
    assert prominent_classes(inp) == (0, 0)
    oracle = exact_wasserstein(PointCloudDistribution([z1], [1.0]), PointCloudDistribution([z2], [1.0]))[0]
    assert oracle == pytest.approx(5.0, abs=1e-12)
    assert subregion_score(inp) == pytest.approx(oracle, abs=1e-12)


def test_same_prominent_class_counts_once():
    # both sides pick class 0, so s(D) is the single transport term for class 0
    inp = score_input([(0, 0), (0, 2)], [[0.9, 0.1], [0.5, 0.5]], [[0.5, 0.5], [0.9, 0.1]])
    assert prominent_classes(inp) == (0, 0)
    w1 = np.array([0.9, 0.5]) / 1.4
    w2 = np.array([0.5, 0.9]) / 1.4
    mu = PointCloudDistribution([(0, 0), (0, 2)], w1)
    nu = PointCloudDistribution([(0, 0), (0, 2)], w2)
    assert subregion_score(inp) == pytest.approx(exact_wasserstein(mu, nu)[0], abs=1e-10)


def test_absent_class_uses_escape_cost():
    # class 1 is prominent under P2 but carries no mass under P1 on a 3x3 block
    region = [(r, c) for r in range(3) for c in range(3)]
    p1 = np.tile([1.0, 0.0], (9, 1))
    p2 = np.tile([1.0, 0.0], (9, 1))
    p2[4] = (0.0, 1.0)
    p2[[0, 1, 2, 3, 5, 6, 7, 8]] = (0.45, 0.55)
    inp = score_input(region, p1, p2)
    assert prominent_classes(inp) == (0, 1)
    # class 1 under P2 sits at the box center with weight 1/(8*0.55+1) and on the
    # boundary elsewhere: its escape cost is that weight times 1
    w_center = 1.0 / (8 * 0.55 + 1.0)
    class0 = exact_wasserstein(
        PointCloudDistribution(np.array(region), np.full(9, 1 / 9)),
        PointCloudDistribution(np.array(region)[[0, 1, 2, 3, 5, 6, 7, 8]], np.full(8, 1 / 8)),
    )[0]
    assert subregion_score(inp) == pytest.approx((class0 + w_center) / 2, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_score_properties(seed):
    rng = np.random.default_rng(seed)
    inp = random_input(rng)
    s = subregion_score(inp)
    assert s >= 0 and np.isfinite(s)

    swapped = SubregionScoreInput(inp.family_p2, inp.family_p1, inp.q)
    assert subregion_score(swapped) == pytest.approx(s, abs=1e-8)

    order = rng.permutation(len(inp.region))
    shuffled = score_input(inp.region[order], inp.family_p1.maps[order], inp.family_p2.maps[order])
    assert subregion_score(shuffled) == s

    perm = rng.permutation(3)
    relabeled = score_input(inp.region, inp.family_p1.maps[:, perm], inp.family_p2.maps[:, perm])
    assert subregion_score(relabeled) == pytest.approx(s, abs=1e-10)


def test_large_region_uses_sliced_path():
    rng = np.random.default_rng(1)
    inp = random_input(rng, n=40, c=2)
    s_default = subregion_score(inp)
    assert s_default >= 0
    again = subregion_score(inp)
    assert again == s_default


# ---------------------------------------------------------------- superpixel aggregation


def test_superpixel_score_examples():
    assert superpixel_viewpcl_score([(fake_region(0.5), 3.0)]) == 3.0
    weighted = superpixel_viewpcl_score([(fake_region(0.5), 1.0), (fake_region(0.25), 4.0)])
    assert weighted == pytest.approx(2.0, abs=1e-12)
    assert superpixel_viewpcl_score([(fake_region(0.5), 0.0), (fake_region(1.0), 0.0)]) == 0.0
    assert superpixel_viewpcl_score([]) == 0.0


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.sampled_from([0.1, 0.25, 0.5, 1.0]), st.floats(0, 100)), min_size=1, max_size=6))
def test_superpixel_score_is_convex_combination(pairs):
    scored = [(fake_region(w), s) for w, s in pairs]
    value = superpixel_viewpcl_score(scored)
    scores = [s for _, s in pairs]
    assert min(scores) - 1e-9 <= value <= max(scores) + 1e-9


# ---------------------------------------------------------------- view entropy / divergence


def test_view_entropy_examples():
    assert view_entropy([[0.25] * 4]) == pytest.approx(np.log(4), abs=1e-12)
    assert view_entropy([[0.0, 1.0, 0.0]]) == 0.0
    assert view_entropy([[0.5, 0.5, 0.0]]) == pytest.approx(0.6931, abs=5e-5)
    assert view_entropy([[1.0, 0.0], [0.0, 1.0]]) == pytest.approx(np.log(2), abs=1e-12)
    with pytest.raises(EmptyOmega):
        view_entropy([])


def test_view_divergence_examples():
    assert view_divergence([0.3, 0.7], [[0.3, 0.7], [0.3, 0.7]]) == 0.0
    assert view_divergence([1.0, 0.0], [[0.5, 0.5]]) == pytest.approx(np.log(2), abs=1e-12)
    assert view_divergence([1.0, 0.0], [[1.0, 0.0], [0.5, 0.5]]) == pytest.approx(np.log(2) / 2, abs=1e-12)
    # zero denominators are clamped rather than infinite
    assert np.isfinite(view_divergence([0.5, 0.5], [[1.0, 0.0]]))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), c=st.integers(2, 8), k=st.integers(1, 5))
def test_view_score_bounds(seed, c, k):
    rng = np.random.default_rng(seed)
    omega = rng.dirichlet(np.ones(c), size=k)
    own = rng.dirichlet(np.ones(c))
    assert -1e-12 <= view_entropy(omega) <= np.log(c) + 1e-12
    assert view_divergence(own, omega) >= -1e-12
    perm = rng.permutation(c)
    assert view_entropy(omega[:, perm]) == pytest.approx(view_entropy(omega), abs=1e-12)
    assert view_divergence(own[perm], omega[:, perm]) == pytest.approx(view_divergence(own, omega), abs=1e-12)


def test_baseline_superpixel_means():
    assert superpixel_baseline_scores([0.3, 0.3, 0.3], [0.1, 0.1, 0.1]) == pytest.approx((0.3, 0.1))
    assert superpixel_baseline_scores([0.2, 0.6], [0.0, 0.0])[0] == pytest.approx(0.4)
    assert superpixel_baseline_scores([0.8, np.nan], [0.1, np.nan]) == (0.8, 0.1)
    assert superpixel_baseline_scores([np.nan], [np.nan]) == (0.0, 0.0)


def test_pixel_view_stats_two_colocated_views():
    a = make_view(0, np.full((4, 4), 2.0))
    b = make_view(1, np.full((4, 4), 2.0))
    maps = {
        0: ClassProbabilityMap(0, np.tile([1.0, 0.0], (4, 4, 1))),
        1: ClassProbabilityMap(1, np.tile([0.5, 0.5], (4, 4, 1))),
    }
    proj = pairwise_cross_projections([a, b])
    st0 = pixel_view_stats(0, maps, proj)
    np.testing.assert_allclose(st0.entropy, np.log(2))
    np.testing.assert_allclose(st0.divergence, np.log(2))
    np.testing.assert_array_equal(st0.omega_count, 1)
    st1 = pixel_view_stats(1, maps, proj)
    np.testing.assert_allclose(st1.entropy, 0.0)
    np.testing.assert_allclose(st1.divergence, 0.5 * np.log(0.5 / 1e-12) + 0.5 * np.log(0.5))


# ---------------------------------------------------------------- score table


def test_score_table_round_trips():
    table = ScoreTable({
        (1, 0): ScoreEntry(0.1 + 0.2, 0.5, 1 / 3, 2),
        (0, 3): ScoreEntry(0.0, 0.0, 0.0, 0),
    })
    text = table.to_csv()
    assert text.splitlines()[0] == "view_id,superpixel_id,viewpcl_score,view_entropy,view_divergence,coverage"
    assert text.splitlines()[1].startswith("0,3,")
    assert ScoreTable.from_csv(text).entries == table.entries
    assert ScoreTable.from_json(table.to_json()).entries == table.entries


def test_build_score_table_worker_independent(consistent_bundle, consistent_overlaps, monkeypatch):
    maps = consistent_bundle.averaged_maps()
    labels = consistent_bundle.label_rasters()
    args = (maps, labels, consistent_overlaps.regions, consistent_overlaps.projections)
    monkeypatch.setenv("VIEWPCL_WORKERS", "1")
    serial = build_score_table(*args)
    monkeypatch.setenv("VIEWPCL_WORKERS", "3")
    threaded = build_score_table(*args)
    assert serial.to_csv() == threaded.to_csv()
    assert len(serial) == 4 * 40
    for key in serial.keys():
        entry = serial[key]
        assert entry.viewpcl_score >= 0
        assert entry.coverage == len(consistent_overlaps.regions.get(key, []))
        if entry.coverage == 0:
            assert entry.viewpcl_score == 0.0


def test_scores_on_noisy_bundle_respect_config():
    from viewpcl.scenebundle import SynthSpec, precompute_overlaps, synth_scene

    bundle = synth_scene(SynthSpec(noise=0.3, num_views=2, width=32, height=32, rng_seed=4))
    cache = precompute_overlaps(bundle)
    maps = bundle.averaged_maps()
    table = build_score_table(maps, bundle.label_rasters(), cache.regions, cache.projections)
    assert max(e.viewpcl_score for e in table.entries.values()) > 0
    cfg = ScoringConfig(weight_threshold=0.0)
    other = build_score_table(maps, bundle.label_rasters(), cache.regions, cache.projections, cfg)
    assert other.keys() == table.keys()
