"""Simplicial complexes, filtrations, covers and their nerves.

Simplices are sorted tuples of integer vertex ids. All distance thresholds
are closed: an edge at scale ``eps`` means ``d(u, v) <= eps``.
"""
from __future__ import annotations

import json
from dataclasses import InitVar, dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial.distance import pdist, squareform

Simplex = tuple[int, ...]

BETTI_SIZE_LIMIT = 2 ** 12


class ComplexError(ValueError):
    pass


def simplex(vertices: Iterable[int]) -> Simplex:
    s = tuple(sorted(int(v) for v in vertices))
    if not s:
        raise ComplexError("a simplex needs at least one vertex")
    if len(set(s)) != len(s):
        raise ComplexError(f"repeated vertex in {s}")
    return s


def faces(s: Simplex) -> list[Simplex]:
    """Codimension-one faces of ``s``."""
    if len(s) == 1:
        return []
    return [s[:i] + s[i + 1:] for i in range(len(s))]


@dataclass(frozen=True)
class SimplicialComplex:
    simplices: frozenset
    vertex_ids: frozenset

    @classmethod
    def from_simplices(cls, simplices: Iterable[Iterable[int]], vertex_ids=None) -> "SimplicialComplex":
        """Smallest complex containing the given simplices (all faces are added)."""
        simps: set[Simplex] = set()
        stack = [simplex(s) for s in simplices]
        while stack:
            s = stack.pop()
            if s not in simps:
                simps.add(s)
                stack.extend(faces(s))
        verts = {s[0] for s in simps if len(s) == 1}
        if vertex_ids is not None:
            verts |= {int(v) for v in vertex_ids}
        simps |= {(v,) for v in verts}
        return cls(frozenset(simps), frozenset(verts))

    @property
    def dimension(self) -> int:
        return max((len(s) for s in self.simplices), default=0) - 1

    def skeleton(self, p: int) -> list[Simplex]:
        """The ``p``-simplices, sorted."""
        return sorted(s for s in self.simplices if len(s) == p + 1)

    def is_closed(self) -> bool:
        return all(f in self.simplices for s in self.simplices for f in faces(s))

    def __len__(self) -> int:
        return len(self.simplices)


@dataclass
class Filtration:
    """Simplices with appearance values, in (value, dim, lexicographic) order.

    ``max_dim`` is the dimension cap used to build it; homology is only
    meaningful below that cap.
    """

    entries: list[tuple[Simplex, float]]
    max_dim: int
    presorted: InitVar[bool] = False

    def __post_init__(self, presorted: bool) -> None:
        if not presorted:
            self.entries = sorted(((simplex(s), float(v)) for s, v in self.entries), key=_order_key)

    def __len__(self) -> int:
        return len(self.entries)

    def check_monotone(self) -> None:
        value = {s: v for s, v in self.entries}
        for s, v in self.entries:
            for f in faces(s):
                if f not in value:
                    raise ComplexError(f"face {f} of {s} missing from filtration")
                if value[f] > v:
                    raise ComplexError(f"face {f} enters after {s}")

    def complex_at(self, t: float) -> SimplicialComplex:
        return SimplicialComplex.from_simplices(s for s, v in self.entries if v <= t)

    def to_json(self) -> str:
        return json.dumps([{"vertices": list(s), "value": v} for s, v in self.entries])

    @classmethod
    def from_json(cls, text: str, max_dim: int | None = None) -> "Filtration":
        entries = [(tuple(e["vertices"]), e["value"]) for e in json.loads(text)]
        if max_dim is None:
            max_dim = max((len(s) for s, _ in entries), default=1) - 1
        return cls(entries, max(1, max_dim))

    @classmethod
    def from_arrays(cls, blocks: list[tuple[np.ndarray, np.ndarray]], max_dim: int) -> "Filtration":
        """Build from per-dimension ``(vertices, values)`` arrays.

        Vertex rows must already be sorted ascending within each row.
        """
        width = max_dim + 1
        verts, vals, dims = [], [], []
        for p, (v, val) in enumerate(blocks):
            if len(v) == 0:
                continue
            pad = np.full((len(v), width), -1, dtype=np.int64)
            pad[:, :p + 1] = v
            verts.append(pad)
            vals.append(np.asarray(val, dtype=np.float64))
            dims.append(np.full(len(v), p))
        if not verts:
            return cls([], max_dim, presorted=True)
        verts_a = np.concatenate(verts)
        vals_a = np.concatenate(vals)
        dims_a = np.concatenate(dims)
        keys = [verts_a[:, k] for k in range(width - 1, -1, -1)] + [dims_a, vals_a]
        order = np.lexsort(keys)
        rows = verts_a[order].tolist()
        ds = dims_a[order].tolist()
        entries = [(tuple(r[:d + 1]), v) for r, d, v in zip(rows, ds, vals_a[order].tolist())]
        return cls(entries, max_dim, presorted=True)


def _order_key(entry):
    s, v = entry
    return (v, len(s), s)


@dataclass
class Cover:
    """Indexed family of non-empty point-id sets."""

    elements: list[frozenset]

    def __post_init__(self) -> None:
        self.elements = [frozenset(int(i) for i in e) for e in self.elements]
        if any(not e for e in self.elements):
            raise ComplexError("cover elements must be non-empty")

    def __len__(self) -> int:
        return len(self.elements)

    @property
    def covered(self) -> frozenset:
        return frozenset().union(*self.elements)

    def is_partition(self) -> bool:
        return sum(len(e) for e in self.elements) == len(self.covered)

    def element_of(self, point_id: int) -> int:
        """Lowest index of an element containing ``point_id``."""
        for j, e in enumerate(self.elements):
            if point_id in e:
                return j
        raise KeyError(point_id)

    def to_json_obj(self) -> list[list[int]]:
        return [sorted(e) for e in self.elements]


@dataclass
class CoverMap:
    """Total map from source cover element ids to target cover element ids."""

    assignment: list[int] = field(default_factory=list)

    def __call__(self, j: int) -> int:
        return self.assignment[j]

    def __len__(self) -> int:
        return len(self.assignment)

    def compose(self, after: "CoverMap") -> "CoverMap":
        """``after`` applied after ``self``."""
        return CoverMap([after(j) for j in self.assignment])


def pairwise_distances(points: np.ndarray) -> np.ndarray:
    """Condensed Euclidean distance vector (scipy ``pdist`` layout)."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    return pdist(points)


def _condensed_pairs(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.triu_indices(n, k=1)


def proximity_graph(points: np.ndarray, eps: float, ids: Sequence[int] | None = None) -> list[tuple[int, int]]:
    """Edges ``(u, v)``, ``u < v``, between points at distance ``<= eps``.

    Vertices are the given ``ids`` (row positions by default).
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    ids = np.arange(n) if ids is None else np.asarray(ids, dtype=np.int64)
    if n < 2:
        return []
    rows, cols = _condensed_pairs(n)
    keep = pairwise_distances(points) <= eps
    u, v = ids[rows[keep]], ids[cols[keep]]
    lo, hi = np.minimum(u, v), np.maximum(u, v)
    return sorted(zip(lo.tolist(), hi.tolist()))


def clique_blocks(n: int, edges: np.ndarray, max_dim: int) -> list[np.ndarray]:
    """Cliques of a graph on vertices ``0..n-1``, one array per dimension.

    ``edges`` is an ``(E, 2)`` array with ``u < v``. Row ``k`` of block ``p``
    is a sorted ``(p + 1)``-clique; blocks are in lexicographic order.
    """
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    blocks = [np.arange(n, dtype=np.int64)[:, None]]
    if max_dim < 1:
        return blocks
    order = np.lexsort((edges[:, 1], edges[:, 0]))
    blocks.append(edges[order])
    if max_dim < 2 or len(edges) == 0:
        return blocks + [np.empty((0, p + 1), dtype=np.int64) for p in range(2, max_dim + 1)]
    up = np.zeros((n, n), dtype=bool)
    up[edges[:, 0], edges[:, 1]] = True
    current = blocks[1]
    for p in range(2, max_dim + 1):
        grown = []
        for row in current:
            mask = up[row[0]].copy()
            for v in row[1:]:
                mask &= up[v]
            ws = np.flatnonzero(mask)
            if ws.size:
                out = np.empty((ws.size, p + 1), dtype=np.int64)
                out[:, :p] = row
                out[:, p] = ws
                grown.append(out)
        current = np.concatenate(grown) if grown else np.empty((0, p + 1), dtype=np.int64)
        blocks.append(current)
        if len(current) == 0:
            blocks += [np.empty((0, q + 1), dtype=np.int64) for q in range(p + 1, max_dim + 1)]
            break
    return blocks


def _relabel(edges, vertex_ids):
    """Map arbitrary vertex ids to ``0..n-1``; returns (ids array, edge array)."""
    ids = np.array(sorted({int(v) for v in vertex_ids} | {int(x) for e in edges for x in e}),
                   dtype=np.int64)
    e = np.asarray([(min(u, v), max(u, v)) for u, v in edges if u != v], dtype=np.int64).reshape(-1, 2)
    e = np.unique(e, axis=0) if len(e) else e
    return ids, np.searchsorted(ids, e)


def clique_complex(edges, vertex_ids, max_dim: int = 2) -> SimplicialComplex:
    if max_dim < 1:
        raise ComplexError("max_dim must be at least 1")
    ids, local = _relabel(list(edges), vertex_ids)
    simplices = set()
    for block in clique_blocks(len(ids), local, max_dim):
        simplices.update(map(tuple, ids[block].tolist()))
    return SimplicialComplex(frozenset(simplices), frozenset(ids.tolist()))


def nerve(cover: Cover, max_dim: int = 2) -> SimplicialComplex:
    """One vertex per element; a simplex per non-empty common intersection."""
    if max_dim < 1:
        raise ComplexError("max_dim must be at least 1")
    n = len(cover)
    simplices: set[Simplex] = set()

    def grow(s: Simplex, common: frozenset):
        simplices.add(s)
        if len(s) > max_dim:
            return
        for j in range(s[-1] + 1, n):
            inter = common & cover.elements[j]
            if inter:
                grow(s + (j,), inter)

    for j in range(n):
        grow((j,), cover.elements[j])
    return SimplicialComplex(frozenset(simplices), frozenset(range(n)))


def connected_components(edges, vertex_ids) -> dict[int, int]:
    """Label vertices by component, components numbered by smallest vertex id."""
    parent = {int(v): int(v) for v in vertex_ids}

    def find(x: int) -> int:
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    for u, v in edges:
        ru, rv = find(int(u)), find(int(v))
        if ru != rv:
            # the smaller id stays root, so a root is its component's minimum
            if ru < rv:
                parent[rv] = ru
            else:
                parent[ru] = rv
    labels: dict[int, int] = {}
    root_label: dict[int, int] = {}
    for v in sorted(parent):
        r = find(v)
        if r not in root_label:
            root_label[r] = len(root_label)
        labels[v] = root_label[r]
    return labels


def vr_filtration(points: np.ndarray, max_dim: int = 2, max_eps: float = np.inf,
                  ids: Sequence[int] | None = None) -> Filtration:
    """Vietoris-Rips filtration: a simplex enters at its diameter."""
    if max_dim < 1:
        raise ComplexError("max_dim must be at least 1")
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    n = points.shape[0]
    ids = np.arange(n, dtype=np.int64) if ids is None else np.asarray(ids, dtype=np.int64)
    if n == 0:
        return Filtration([], max_dim, presorted=True)
    # process vertices in id order so rows come out lexicographic in ids
    perm = np.argsort(ids, kind="stable")
    ids, points = ids[perm], points[perm]
    dist = squareform(pairwise_distances(points)) if n > 1 else np.zeros((1, 1))
    rows, cols = _condensed_pairs(n)
    keep = dist[rows, cols] <= max_eps
    edges = np.column_stack([rows[keep], cols[keep]])
    blocks = []
    for p, block in enumerate(clique_blocks(n, edges, max_dim)):
        if p == 0:
            values = np.zeros(len(block))
        else:
            values = np.zeros(len(block))
            for a in range(p + 1):
                for b in range(a + 1, p + 1):
                    np.maximum(values, dist[block[:, a], block[:, b]], out=values)
        blocks.append((ids[block], values))
    return Filtration.from_arrays(blocks, max_dim)


def betti_bruteforce(complex_: SimplicialComplex, p: int) -> int:
    """Betti number over Z/2 by dense Gaussian elimination."""
    if len(complex_) > BETTI_SIZE_LIMIT:
        raise ComplexError(f"complex too large for dense ranks ({len(complex_)} simplices)")
    if p < 0:
        return 0
    chains_p = complex_.skeleton(p)
    if not chains_p:
        return 0
    rank_p = _boundary_rank(complex_.skeleton(p - 1), chains_p) if p > 0 else 0
    rank_next = _boundary_rank(chains_p, complex_.skeleton(p + 1))
    return len(chains_p) - rank_p - rank_next


def _boundary_rank(rows: list[Simplex], cols: list[Simplex]) -> int:
    if not rows or not cols:
        return 0
    index = {s: i for i, s in enumerate(rows)}
    mat = np.zeros((len(rows), len(cols)), dtype=np.uint8)
    for j, s in enumerate(cols):
        for f in faces(s):
            mat[index[f], j] = 1
    return _rank_mod2(mat)


def _rank_mod2(mat: np.ndarray) -> int:
    mat = mat.copy()
    rank = 0
    n_rows, n_cols = mat.shape
    for c in range(n_cols):
        pivot = np.nonzero(mat[rank:, c])[0]
        if pivot.size == 0:
            continue
        r = rank + pivot[0]
        mat[[rank, r]] = mat[[r, rank]]
        below = np.nonzero(mat[:, c])[0]
        below = below[below != rank]
        mat[below] ^= mat[rank]
        rank += 1
        if rank == n_rows:
            break
    return rank
