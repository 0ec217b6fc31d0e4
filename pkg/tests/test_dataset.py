import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mlptopo.dataset import (
    DatasetError,
    LabeledPointCloud,
    generate_circles,
    load_table,
    sparsify,
)


def test_circles_shape_and_labels():
    cloud = generate_circles(150, 0.5, 1.0, 0.05, seed=7)
    assert len(cloud) == 300
    assert cloud.dim == 2
    assert sorted(cloud.ids.tolist()) == list(range(300))
    assert np.bincount(cloud.labels).tolist() == [150, 150]


def test_circles_zero_noise_norms():
    cloud = generate_circles(50, 1.0, 2.0, 0.0, seed=0)
    norms = np.linalg.norm(cloud.points, axis=1)
    assert np.all(np.abs(norms[cloud.labels == 0] - 1.0) <= 1e-12)
    assert np.all(np.abs(norms[cloud.labels == 1] - 2.0) <= 1e-12)


def test_circles_single_point_per_class():
    cloud = generate_circles(1, 0.3, 0.9, 0.0, seed=0)
    assert len(cloud) == 2
    assert np.allclose(np.linalg.norm(cloud.points, axis=1), [0.3, 0.9], atol=1e-12)


def test_circles_deterministic_bytes():
    a = generate_circles(seed=3)
    b = generate_circles(seed=3)
    assert a.points.tobytes() == b.points.tobytes()
    assert a.to_json() == b.to_json()


@pytest.mark.parametrize("kwargs", [
    dict(n_per_class=0),
    dict(r_inner=0.0),
    dict(r_outer=-1.0),
    dict(r_inner=1.0, r_outer=0.5),
])
def test_circles_rejects_bad_input(kwargs):
    with pytest.raises(DatasetError):
        generate_circles(**kwargs)


def test_cloud_invariants():
    with pytest.raises(DatasetError):
        LabeledPointCloud([[0.0, 1.0]], [2], [0])
    with pytest.raises(DatasetError):
        LabeledPointCloud([[0.0], [1.0]], [0, 1], [0, 0])
    with pytest.raises(DatasetError):
        LabeledPointCloud([[np.nan]], [0], [0])


def test_cloud_json_round_trip():
    cloud = generate_circles(20, seed=1)
    assert LabeledPointCloud.from_json(cloud.to_json()) == cloud


def _write(tmp_path, text, name="t.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_load_table_grouping_and_normalization(tmp_path):
    path = _write(tmp_path, "a,b,c,CLASS\n1,2,5,1\n2,4,5,2\n3,9,5,7\n4,1,5,9\n")
    cloud = load_table(path, "CLASS", {1: 0, 2: 0, 7: 1, 9: 1}, normalize=True)
    assert cloud.dim == 3
    assert cloud.labels.tolist() == [0, 0, 1, 1]
    assert np.all(np.abs(cloud.points.mean(axis=0)) <= 1e-9)
    var = cloud.points.var(axis=0)
    assert abs(var[0] - 1) <= 1e-9 and abs(var[1] - 1) <= 1e-9
    # constant column maps to 0
    assert np.all(cloud.points[:, 2] == 0)


def test_load_table_semicolon_single_row(tmp_path):
    path = _write(tmp_path, "x;y;label\n0.5;1.5;3\n")
    cloud = load_table(path, "label", {"3": 1}, normalize=False)
    assert len(cloud) == 1
    assert cloud.points.tolist() == [[0.5, 1.5]]


def test_load_table_errors(tmp_path):
    path = _write(tmp_path, "x,label\n1,1\n2,5\n")
    with pytest.raises(DatasetError, match="unmapped class"):
        load_table(path, "label", {1: 0})
    with pytest.raises(DatasetError, match="unknown label column"):
        load_table(path, "nope", {1: 0})
    with pytest.raises(FileNotFoundError):
        load_table(tmp_path / "missing.csv", "label", {1: 0})
    bad = _write(tmp_path, "x,label\nfoo,1\n", "bad.csv")
    with pytest.raises(DatasetError, match="non-numeric"):
        load_table(bad, "label", {1: 0})


def test_load_table_drop_unmapped(tmp_path, caplog):
    path = _write(tmp_path, "x,label\n1,1\n2,5\n3,7\n")
    cloud = load_table(path, "label", {1: 0, 7: 1}, normalize=False, drop_unmapped=True)
    assert cloud.points[:, 0].tolist() == [1.0, 3.0]
    assert "dropped 1 rows" in caplog.text


def _cloud(points):
    points = np.asarray(points, dtype=float)
    return LabeledPointCloud(points, np.zeros(len(points), int), np.arange(len(points)))


def test_sparsify_hand_example():
    assert sparsify(_cloud([[0, 0], [0.1, 0], [1, 0]]), 0.05) == [0, 2]


def test_sparsify_zero_threshold_keeps_all():
    assert sparsify(_cloud([[0, 0], [0, 0], [1, 0]]), 0.0) == [0, 1, 2]


def test_sparsify_duplicates_keep_lowest_id():
    pts = [[0, 0], [1, 1], [0, 0], [1, 1], [5, 5]]
    expected = [0, 1, 4]
    assert sparsify(_cloud(pts), 0.5) == expected
    # the greedy pass runs in id order, so relabelling rows changes nothing
    for perm in itertools.permutations(range(5)):
        rows = np.asarray(pts, dtype=float)[list(perm)]
        cloud = LabeledPointCloud(rows, np.zeros(5, int), list(perm))
        assert sparsify(cloud, 0.5) == expected


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 40), st.floats(0.001, 0.5))
def test_sparsify_is_an_epsilon_net(seed, n, min_sq):
    rng = np.random.default_rng(seed)
    cloud = _cloud(rng.uniform(-1, 1, size=(n, 2)))
    kept = sparsify(cloud, min_sq)
    kp = cloud.points[kept]
    d2 = np.sum((kp[:, None] - kp[None]) ** 2, axis=-1)
    np.fill_diagonal(d2, np.inf)
    assert d2.min() >= min_sq
    dropped = np.setdiff1d(cloud.ids, kept)
    for i in dropped:
        nearest = np.min(np.sum((kp - cloud.points[i]) ** 2, axis=1))
        assert nearest < min_sq
