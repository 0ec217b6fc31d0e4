import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mlptopo.complex import ComplexError, Cover, betti_bruteforce
from mlptopo.dataset import LabeledPointCloud
from mlptopo.mlp import LayerImages, forward_all, init_model
from mlptopo.tower import (
    LayerwiseTower,
    ScaleSchedule,
    TowerError,
    barcode_csv,
    barcode_from_csv,
    layer_persistence,
    layerwise_tower,
    mlp_persistence,
    nerve_tower,
    output_cover,
    pullback_cover,
    separability_nerve_check,
)


def random_images(rng, n, dims):
    return LayerImages([rng.uniform(size=(n, d)) for d in dims], np.arange(n))


def reference_edges(images, eps):
    """Layer-wise edge sets straight from the definition, one pair at a time."""
    last = len(images) - 1
    out = images[last][:, 0]
    order = sorted(range(len(out)), key=lambda k: (out[k], images.ids[k]))
    run, element = 0, {}
    for a, b in zip([None] + order[:-1], order):
        if a is not None and out[b] - out[a] > eps[last]:
            run += 1
        element[b] = run
    n = len(images.ids)
    top = {(u, v) for u, v in itertools.combinations(range(n), 2)
           if abs(out[u] - out[v]) <= eps[last] and element[u] == element[v]}
    result = [top]
    for i in range(last - 1, -1, -1):
        x = images[i]
        result.append({(u, v) for u, v in result[-1] if math.dist(x[u], x[v]) <= eps[i]})
    result.reverse()
    return result


def test_output_cover_gap_runs():
    cover = output_cover([0.1, 0.15, 0.9, 0.95, 0.5], 0.2)
    assert [sorted(e) for e in cover.elements] == [[0, 1], [4], [2, 3]]
    assert cover.is_partition()


def test_output_cover_single_element_and_singletons():
    vals = [0.0, 0.1, 0.2, 0.3]
    assert len(output_cover(vals, 0.1)) == 1
    assert len(output_cover(vals, 0.05)) == 4


def test_output_cover_uses_ids_and_rejects_wide_layer():
    cover = output_cover([[0.0], [1.0]], 0.5, ids=[10, 4])
    assert [sorted(e) for e in cover.elements] == [[10], [4]]
    with pytest.raises(TowerError):
        output_cover(np.zeros((3, 2)), 0.1)


def test_pullback_splits_by_proximity():
    pts = np.array([[0.0], [0.1], [5.0], [5.1], [9.0]])
    target = Cover([{0, 1, 2, 3}, {4}])
    cover, cmap = pullback_cover(pts, target, 0.5)
    assert [sorted(e) for e in cover.elements] == [[0, 1], [2, 3], [4]]
    assert cmap.assignment == [0, 0, 1]


def test_pullback_requires_full_target():
    with pytest.raises(TowerError):
        pullback_cover(np.zeros((3, 1)), Cover([{0, 1}]), 1.0)


def test_nerve_tower_composition_is_a_cover_map():
    rng = np.random.default_rng(3)
    images = random_images(rng, 40, [2, 3, 1])
    nt = nerve_tower(images, ScaleSchedule([0.3, 0.4, 0.1]))
    covers = nt.covers.covers
    composed = nt.covers.composed_map()
    for j, element in enumerate(covers[0].elements):
        assert element <= covers[-1].elements[composed(j)]
    for i, m in enumerate(nt.covers.maps):
        for j, element in enumerate(covers[i].elements):
            assert element <= covers[i + 1].elements[m(j)]
    # vertex maps act on nerve vertices and send simplices to simplices
    for i, vmap in enumerate(nt.vertex_maps):
        upper = set(nt.nerves[i + 1].simplices)
        for s in nt.nerves[i].simplices:
            assert tuple(sorted({vmap[v] for v in s})) in upper


def test_layerwise_tower_saturation():
    rng = np.random.default_rng(0)
    images = random_images(rng, 6, [2, 2, 1])
    tower = layerwise_tower(images, ScaleSchedule([10.0, 10.0, 10.0]))
    full = set(itertools.combinations(range(6), 2))
    for e in tower.edges:
        assert {tuple(x) for x in e.tolist()} == full


def test_layerwise_tower_tiny_input_scale():
    rng = np.random.default_rng(1)
    images = random_images(rng, 6, [2, 2, 1])
    tower = layerwise_tower(images, ScaleSchedule([1e-12, 10.0, 10.0]))
    assert len(tower.edges[0]) == 0
    assert tower.complex(0).skeleton(1) == []
    assert len(tower.components(0)) == 6


def test_schedule_validation():
    with pytest.raises(TowerError):
        ScaleSchedule([0.5, 0.0])
    rng = np.random.default_rng(0)
    with pytest.raises(TowerError):
        layerwise_tower(random_images(rng, 4, [2, 1]), ScaleSchedule([0.1, 0.2, 0.3]))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000), st.integers(2, 25))
def test_layerwise_tower_matches_definition(seed, n):
    rng = np.random.default_rng(seed)
    images = random_images(rng, n, [2, 3, 1])
    eps = rng.uniform(0.1, 0.8, size=3).tolist()
    tower = layerwise_tower(images, ScaleSchedule(eps))
    got = [{tuple(e) for e in edges.tolist()} for edges in tower.edges]
    assert got == reference_edges(images, eps)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000))
def test_layerwise_tower_is_nested_simplexwise(seed):
    rng = np.random.default_rng(seed)
    dims = [2] + [int(rng.integers(1, 4)) for _ in range(int(rng.integers(1, 3)))] + [1]
    model = init_model(dims, "sigmoid", seed)
    cloud = LabeledPointCloud(rng.normal(size=(20, 2)), rng.integers(0, 2, 20), np.arange(20))
    eps = rng.uniform(0.05, 1.0, size=len(dims)).tolist()
    tower = layerwise_tower(forward_all(model, cloud), ScaleSchedule(eps))
    cxs = tower.complexes
    for lower, upper in zip(cxs, cxs[1:]):
        assert lower.simplices <= upper.simplices


def test_nesting_check_detects_violation():
    tower = LayerwiseTower(np.arange(3), [np.array([[0, 1]]), np.empty((0, 2), np.int64)],
                           Cover([{0, 1, 2}]), ScaleSchedule([1.0, 1.0]), [1, 1])
    with pytest.raises(ComplexError):
        tower.check_nesting()


def test_tower_json_round_trip():
    rng = np.random.default_rng(2)
    tower = layerwise_tower(random_images(rng, 10, [2, 2, 1]), ScaleSchedule([0.5, 0.5, 0.3]))
    again = LayerwiseTower.from_json(tower.to_json())
    assert all(np.array_equal(a, b) for a, b in zip(again.edges, tower.edges))
    assert again.output_cover == tower.output_cover


def _tower(seed, n=14, dims=(2, 3, 1)):
    rng = np.random.default_rng(seed)
    eps = rng.uniform(0.2, 0.7, size=len(dims)).tolist()
    return layerwise_tower(random_images(rng, n, list(dims)), ScaleSchedule(eps))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 100_000))
def test_mlp_persistence_betti_per_layer(seed):
    tower = _tower(seed)
    dgm = mlp_persistence(tower, truncate_by_layer_dim=False)
    for i, cx in enumerate(tower.complexes):
        for p in (0, 1):
            assert dgm.betti_at(i, p) == betti_bruteforce(cx, p)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 100_000))
def test_truncated_matches_literal_when_top_layers_carry_no_cycles(seed):
    tower = _tower(seed)
    literal = mlp_persistence(tower, truncate_by_layer_dim=False)
    truncated = mlp_persistence(tower)
    # a clique complex of points on a line has no 1-cycles, so the two agree
    assert betti_bruteforce(tower.complex(2), 1) == 0
    assert literal.features == truncated.features


def test_mlp_persistence_h0_infinite_equals_top_components():
    for seed in range(10):
        tower = _tower(seed, n=20)
        dgm = mlp_persistence(tower)
        n_inf = sum(1 for _, d in dgm.in_dim(0) if math.isinf(d))
        assert n_inf == len(set(tower.components(len(tower) - 1).values()))
        assert all(b == int(b) for _, b, _ in dgm.features)


def test_mlp_persistence_single_layer_is_static():
    # square loop plus an isolated vertex
    tower = LayerwiseTower(np.arange(5), [np.array([[0, 1], [0, 3], [1, 2], [2, 3]])],
                           Cover([set(range(5))]), ScaleSchedule([1.0]), [2])
    dgm = mlp_persistence(tower)
    assert dgm.features == [(0, 0.0, math.inf)] * 2 + [(1, 0.0, math.inf)]


def test_h1_dies_at_one_dimensional_layer():
    # a square loop at layer 0 followed by a 1-D layer
    ids = np.arange(4)
    edges = np.array([[0, 1], [0, 3], [1, 2], [2, 3]])
    tower = LayerwiseTower(ids, [edges, edges], Cover([set(range(4))]),
                           ScaleSchedule([1.0, 1.0]), [2, 1])
    assert mlp_persistence(tower).in_dim(1) == [(0.0, 1.0)]
    assert mlp_persistence(tower, truncate_by_layer_dim=False).in_dim(1) == [(0.0, math.inf)]


def test_barcode_csv_round_trip():
    tower = _tower(4, n=20)
    dgm = mlp_persistence(tower)
    text = barcode_csv(dgm)
    assert text.splitlines()[0] == "dim,birth_layer,death_layer"
    assert barcode_from_csv(text).features == dgm.features


def test_layer_persistence_dimension_caps():
    rng = np.random.default_rng(0)
    images = random_images(rng, 12, [2, 3, 1])
    dgms = layer_persistence(images, 2, [1.0, 1.0, 1.0])
    assert dgms[2].dims == [0]
    assert set(dgms[0].dims) <= {0, 1}
    with pytest.raises(TowerError):
        layer_persistence(images, 2, [1.0])


def test_layer_persistence_sparsified_subset():
    pts = np.array([[0.0, 0.0], [0.01, 0.0], [1.0, 0.0]])
    images = LayerImages([pts], np.arange(3))
    dgm = layer_persistence(images, 1, None, min_sq_dist=0.05)[0]
    assert dgm.in_dim(0) == [(0.0, 1.0), (0.0, math.inf)]


def test_separability_examples():
    rep = separability_nerve_check([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1])
    assert rep.separable and rep.nerve_components == 2
    assert rep.margin == pytest.approx(0.6)
    assert rep.mixed_edges == 0
    bad = separability_nerve_check([0.1, 0.8, 0.2, 0.9], [0, 0, 1, 1])
    assert not bad.separable
    flipped = separability_nerve_check([0.9, 0.8, 0.1], [0, 0, 1])
    assert flipped.separable and flipped.nerve_components == 2


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000))
def test_separability_nerve_has_two_components_when_separated(seed):
    rng = np.random.default_rng(seed)
    a = rng.uniform(0, 0.4, size=int(rng.integers(1, 20)))
    b = rng.uniform(0.41, 1.0, size=int(rng.integers(1, 20)))
    rep = separability_nerve_check(np.concatenate([a, b]), [0] * a.size + [1] * b.size)
    assert rep.separable and rep.nerve_components == 2


def test_coarsening_components_never_increase_upward():
    for seed in range(5):
        tower = _tower(seed, n=25)
        counts = [len(set(tower.components(i).values())) for i in range(len(tower))]
        assert counts == sorted(counts, reverse=True)
        # each component of K_i sits inside one component of K_{i+1}
        for i in range(len(tower) - 1):
            lo, hi = tower.components(i), tower.components(i + 1)
            blocks = {}
            for v, c in lo.items():
                blocks.setdefault(c, set()).add(hi[v])
            assert all(len(s) == 1 for s in blocks.values())
