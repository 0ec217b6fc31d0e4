"""Cover towers and layer-wise complex towers of an MLP, and their persistence.

Vertices are point ids throughout, so the simplicial maps between the
layer-wise complexes are inclusions and the whole tower is a filtration
indexed by layer.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .complex import (
    ComplexError,
    Cover,
    CoverMap,
    Filtration,
    SimplicialComplex,
    clique_blocks,
    clique_complex,
    connected_components,
    nerve,
    pairwise_distances,
    vr_filtration,
)
from .dataset import LabeledPointCloud, sparsify
from .mlp import LayerImages
from .persistence import INF, PersistenceDiagram, reduce


class TowerError(ValueError):
    pass


@dataclass
class ScaleSchedule:
    """One proximity scale per layer, input layer first."""

    eps: list[float]

    def __post_init__(self) -> None:
        self.eps = [float(e) for e in self.eps]
        if any(not e > 0 for e in self.eps):
            raise TowerError("scales must be positive")

    def __len__(self) -> int:
        return len(self.eps)

    def check(self, n_layers: int) -> None:
        if len(self.eps) != n_layers:
            raise TowerError(f"schedule has {len(self.eps)} scales for {n_layers} layers")


def _as_1d(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 2:
        if arr.shape[1] != 1:
            raise TowerError(f"expected a 1-D layer, got width {arr.shape[1]}")
        arr = arr[:, 0]
    return arr


def output_cover(final_layer, eps_out: float, ids=None) -> Cover:
    """Split sorted outputs into maximal runs whose consecutive gaps are <= eps_out."""
    values = _as_1d(final_layer)
    if values.size == 0:
        raise TowerError("empty output layer")
    ids = np.arange(values.size) if ids is None else np.asarray(ids, dtype=np.int64)
    order = np.lexsort((ids, values))
    runs, current = [], [int(ids[order[0]])]
    for prev, nxt in zip(order[:-1], order[1:]):
        if values[nxt] - values[prev] > eps_out:
            runs.append(current)
            current = []
        current.append(int(ids[nxt]))
    runs.append(current)
    return Cover(runs)


def pullback_cover(source_points, target_cover: Cover, cluster_eps: float, ids=None):
    """Approximate pullback of ``target_cover`` to the previous layer.

    Each target element is split into the connected components of the
    ``cluster_eps``-proximity graph of its members. Returns the source cover
    and the cover map sending each component to its target element.
    """
    points = np.asarray(source_points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    ids = np.arange(points.shape[0]) if ids is None else np.asarray(ids, dtype=np.int64)
    pos = {int(i): k for k, i in enumerate(ids)}
    missing = set(pos) - target_cover.covered
    if missing:
        raise TowerError(f"target cover misses {len(missing)} source points")
    elements, assignment = [], []
    for j, element in enumerate(target_cover.elements):
        members = np.array(sorted(i for i in element if i in pos), dtype=np.int64)
        if members.size == 0:
            continue
        sub = points[[pos[int(i)] for i in members]]
        edges = _close_pairs(sub, cluster_eps)
        labels = connected_components(members[edges].tolist() if len(edges) else [], members.tolist())
        groups: dict[int, list[int]] = {}
        for v, c in labels.items():
            groups.setdefault(c, []).append(v)
        for c in sorted(groups):
            elements.append(groups[c])
            assignment.append(j)
    return Cover(elements), CoverMap(assignment)


def _close_pairs(points: np.ndarray, eps: float) -> np.ndarray:
    """Row-position pairs (i < j) at distance <= eps, as an (E, 2) array."""
    n = points.shape[0]
    if n < 2:
        return np.empty((0, 2), dtype=np.int64)
    rows, cols = np.triu_indices(n, k=1)
    keep = pairwise_distances(points) <= eps
    return np.column_stack([rows[keep], cols[keep]])


@dataclass
class CoverTower:
    covers: list[Cover]
    maps: list[CoverMap]

    def composed_map(self, start: int = 0, stop: int | None = None) -> CoverMap:
        stop = len(self.covers) - 1 if stop is None else stop
        result = CoverMap(list(range(len(self.covers[start]))))
        for m in self.maps[start:stop]:
            result = result.compose(m)
        return result


@dataclass
class NerveTower:
    covers: CoverTower
    nerves: list[SimplicialComplex]
    vertex_maps: list[dict[int, int]]


def nerve_tower(layer_images: LayerImages, schedule: ScaleSchedule, max_dim: int = 2,
                final_cover: Cover | None = None) -> NerveTower:
    """Output cover at the last layer, then pullback covers back to the input.

    Nerve vertices are cover elements, so each cover map is also the vertex
    map of the induced simplicial map between consecutive nerves.
    """
    schedule.check(len(layer_images))
    ids = layer_images.ids
    last = len(layer_images) - 1
    cover = final_cover if final_cover is not None else output_cover(
        layer_images[last], schedule.eps[last], ids)
    covers, maps = [cover], []
    for i in range(last - 1, -1, -1):
        cover, cmap = pullback_cover(layer_images[i], cover, schedule.eps[i], ids)
        covers.append(cover)
        maps.append(cmap)
    covers.reverse()
    maps.reverse()
    nerves = [nerve(c, max_dim) for c in covers]
    vertex_maps = [dict(enumerate(m.assignment)) for m in maps]
    return NerveTower(CoverTower(covers, maps), nerves, vertex_maps)


@dataclass
class LayerwiseTower:
    """Edge sets of the layer-wise complexes K_0 ⊆ K_1 ⊆ ... ⊆ K_{m+1}.

    Each K_i is the clique complex of ``edges[i]`` (id pairs, ``u < v``) on
    the full id set, capped at ``max_dim``. Complexes are materialized on
    demand because the top one can be very large.
    """

    ids: np.ndarray
    edges: list[np.ndarray]
    output_cover: Cover
    schedule: ScaleSchedule
    layer_dims: list[int]
    max_dim: int = 2

    def __len__(self) -> int:
        return len(self.edges)

    def complex(self, i: int, max_dim: int | None = None) -> SimplicialComplex:
        return clique_complex(self.edges[i].tolist(), self.ids.tolist(),
                              self.max_dim if max_dim is None else max_dim)

    @property
    def complexes(self) -> list[SimplicialComplex]:
        return [self.complex(i) for i in range(len(self))]

    def components(self, i: int) -> dict[int, int]:
        return connected_components(self.edges[i].tolist(), self.ids.tolist())

    def check_nesting(self) -> None:
        for i in range(1, len(self.edges)):
            lower = {tuple(e) for e in self.edges[i - 1].tolist()}
            upper = {tuple(e) for e in self.edges[i].tolist()}
            if not lower <= upper:
                raise ComplexError(f"edges of K_{i - 1} not contained in K_{i}")

    def to_json(self) -> str:
        doc = {
            "schedule": self.schedule.eps,
            "layer_dims": self.layer_dims,
            "max_dim": self.max_dim,
            "ids": self.ids.tolist(),
            "edges": [e.tolist() for e in self.edges],
            "output_cover": self.output_cover.to_json_obj(),
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "LayerwiseTower":
        doc = json.loads(text)
        edges = [np.asarray(e, dtype=np.int64).reshape(-1, 2) for e in doc["edges"]]
        return cls(np.asarray(doc["ids"], dtype=np.int64), edges, Cover(doc["output_cover"]),
                   ScaleSchedule(doc["schedule"]), doc["layer_dims"], doc["max_dim"])


def layerwise_tower(layer_images: LayerImages, schedule: ScaleSchedule, max_dim: int = 2,
                    final_cover: Cover | None = None) -> LayerwiseTower:
    """Layer-wise complexes built from the output layer back to the input.

    The top complex joins outputs within the last scale that share an
    element of the output cover; each lower complex keeps the edges of the
    one above whose endpoints are within that layer's scale.
    """
    schedule.check(len(layer_images))
    ids = layer_images.ids
    n = ids.size
    last = len(layer_images) - 1
    out = _as_1d(layer_images[last])
    cover = final_cover if final_cover is not None else output_cover(out, schedule.eps[last], ids)
    if not cover.covered >= set(ids.tolist()):
        raise TowerError("output cover does not cover every point")

    rows, cols = np.triu_indices(n, k=1)
    keep = pairwise_distances(out) <= schedule.eps[last]
    rows, cols = rows[keep], cols[keep]
    pos = {int(i): k for k, i in enumerate(ids)}
    membership = np.zeros((n, len(cover)), dtype=bool)
    for j, element in enumerate(cover.elements):
        membership[[pos[i] for i in element if i in pos], j] = True
    shared = np.any(membership[rows] & membership[cols], axis=1) if len(rows) else np.zeros(0, bool)
    pairs = np.column_stack([rows[shared], cols[shared]])

    by_layer = [pairs]
    for i in range(last - 1, -1, -1):
        pairs = pairs[_pair_lengths(layer_images[i], pairs) <= schedule.eps[i]]
        by_layer.append(pairs)
    by_layer.reverse()
    edges = []
    for p in by_layer:
        e = np.sort(ids[p], axis=1) if len(p) else np.empty((0, 2), dtype=np.int64)
        edges.append(e[np.lexsort((e[:, 1], e[:, 0]))] if len(e) else e)
    tower = LayerwiseTower(ids.copy(), edges, cover, schedule, layer_images.dims, max_dim)
    tower.check_nesting()
    return tower


def _pair_lengths(points: np.ndarray, pairs: np.ndarray) -> np.ndarray:
    # same arithmetic as the condensed pdist vector
    if len(pairs) == 0:
        return np.zeros(0)
    n = points.shape[0]
    d = pairwise_distances(points)
    i, j = pairs[:, 0], pairs[:, 1]
    return d[n * i - i * (i + 1) // 2 + (j - i - 1)]


def _edge_first_layer(tower: LayerwiseTower, top: int, start: int) -> tuple[np.ndarray, np.ndarray]:
    """Local edge array of K_top and the first layer >= start holding each edge."""
    ids = tower.ids
    order = np.argsort(ids, kind="stable")
    sorted_ids = ids[order]
    base = len(ids)

    def keys(e):
        local = np.searchsorted(sorted_ids, e)
        return local[:, 0] * base + local[:, 1], local

    top_keys, local = keys(tower.edges[top])
    first = np.full(len(top_keys), top, dtype=np.int64)
    for i in range(top - 1, start - 1, -1):
        k, _ = keys(tower.edges[i])
        first[np.isin(top_keys, k)] = i
    return local, first


def _run_diagram(tower: LayerwiseTower, p: int, start: int, stop: int, n_layers: int) -> PersistenceDiagram:
    """Dimension-``p`` persistence of K_start ⊆ ... ⊆ K_stop, values = layer index."""
    local, first = _edge_first_layer(tower, stop, start)
    n = len(tower.ids)
    blocks = []
    sorted_ids = np.sort(tower.ids)
    value_of_edge = np.zeros((n, n), dtype=np.int64)
    if len(local):
        value_of_edge[local[:, 0], local[:, 1]] = first
    for q, block in enumerate(clique_blocks(n, local, p + 1)):
        values = np.full(len(block), start, dtype=np.int64)
        for a in range(q + 1):
            for b in range(a + 1, q + 1):
                np.maximum(values, value_of_edge[block[:, a], block[:, b]], out=values)
        blocks.append((sorted_ids[block], values.astype(np.float64)))
    dgm = reduce(Filtration.from_arrays(blocks, p + 1))
    end = INF if stop == n_layers - 1 else float(stop + 1)
    feats = [(p, b, end if math.isinf(d) else d) for b, d in dgm.in_dim(p)]
    return PersistenceDiagram(feats, dgm.n_zero_length)


def mlp_persistence(tower: LayerwiseTower, max_dim: int | None = None,
                    truncate_by_layer_dim: bool = True) -> PersistenceDiagram:
    """Persistence of the tower filtered by layer index.

    A simplex enters at the first layer whose complex contains it. With
    ``truncate_by_layer_dim``, H_p is tracked only through layers of width
    greater than p: a class still alive when the next layer has width <= p
    dies there, since a complex built in R^n carries no H_p for p >= n. This
    avoids building the (p+1)-simplices of the often huge top complexes. Set
    it to False to reduce the literal full filtration instead.
    """
    top = tower.max_dim if max_dim is None else max_dim
    n_layers = len(tower)
    features, zero = [], 0
    for p in range(top):
        if truncate_by_layer_dim:
            alive = [w > p for w in tower.layer_dims]
        else:
            alive = [True] * n_layers
        i = 0
        while i < n_layers:
            if not alive[i]:
                i += 1
                continue
            j = i
            while j + 1 < n_layers and alive[j + 1]:
                j += 1
            dgm = _run_diagram(tower, p, i, j, n_layers)
            features.extend(dgm.features)
            zero += dgm.n_zero_length
            i = j + 1
    return PersistenceDiagram(features, zero)


def barcode_csv(diagram: PersistenceDiagram) -> str:
    lines = ["dim,birth_layer,death_layer"]
    for d, b, e in diagram.features:
        lines.append(f"{d},{int(b)},{'inf' if math.isinf(e) else int(e)}")
    return "\n".join(lines) + "\n"


def barcode_from_csv(text: str) -> PersistenceDiagram:
    rows = [line.split(",") for line in text.strip().splitlines()[1:]]
    return PersistenceDiagram([(int(d), float(b), float(e)) for d, b, e in rows])


def layer_persistence(layer_images: LayerImages, max_dim: int = 2,
                      max_eps_per_layer: list[float] | None = None,
                      min_sq_dist: float | None = None) -> list[PersistenceDiagram]:
    """Vietoris-Rips persistence of every layer image, independently.

    A layer of width n gets the dimension cap min(max_dim, n), so a 1-D
    layer reports H_0 only. ``min_sq_dist`` sparsifies each layer first.
    """
    caps = max_eps_per_layer or [INF] * len(layer_images)
    if len(caps) != len(layer_images):
        raise TowerError(f"{len(caps)} scale caps for {len(layer_images)} layers")
    diagrams = []
    for x, cap in zip(layer_images.images, caps):
        ids = layer_images.ids
        if min_sq_dist:
            cloud = LabeledPointCloud(x, np.zeros(len(ids), dtype=np.int64), ids)
            keep = sparsify(cloud, min_sq_dist)
            cloud = cloud.subset(keep)
            x, ids = cloud.points, cloud.ids
        dim_cap = max(1, min(max_dim, x.shape[1]))
        diagrams.append(reduce(vr_filtration(x, dim_cap, cap, ids)))
    return diagrams


@dataclass
class SeparabilityReport:
    separable: bool
    margin: float
    nerve_components: int
    mixed_edges: int = 0


def separability_nerve_check(final_layer, labels) -> SeparabilityReport:
    """Check that a 1-D layer separates the two classes and build the nerve witness.

    When the classes are separated by a gap, each point gets the open ball
    reaching up to the midpoint of the gap. All balls of a class then share
    the points just before the midpoint, balls of different classes are
    disjoint, and the nerve has one component per class.
    """
    values = _as_1d(final_layer)
    labels = np.asarray(labels).reshape(-1)
    a, b = values[labels == 0], values[labels == 1]
    if a.size == 0 or b.size == 0:
        return SeparabilityReport(False, 0.0, 0)
    if a.max() < b.min():
        low, high, margin = a, b, float(b.min() - a.max())
    elif b.max() < a.min():
        low, high, margin = b, a, float(a.min() - b.max())
    else:
        gap = max(b.min() - a.max(), a.min() - b.max())
        return SeparabilityReport(False, float(gap), 0)
    mid = (low.max() + high.min()) / 2.0
    centers = np.concatenate([low, high])
    # shrink a hair so rounding cannot make a cross-class pair touch
    radii = np.abs(centers - mid) * (1.0 - 1e-9)
    cls = np.concatenate([np.zeros(low.size, int), np.ones(high.size, int)])
    # open intervals (c - r, c + r) meet iff |c1 - c2| < r1 + r2
    diff = np.abs(centers[:, None] - centers[None, :])
    meet = diff < radii[:, None] + radii[None, :]
    iu, ju = np.nonzero(np.triu(meet, k=1))
    labels_nerve = connected_components(zip(iu.tolist(), ju.tolist()), range(len(centers)))
    mixed = int(np.sum(cls[iu] != cls[ju]))
    return SeparabilityReport(True, margin, len(set(labels_nerve.values())), mixed)
