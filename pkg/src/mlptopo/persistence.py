"""Persistent homology over Z/2 and the bottleneck distance between diagrams."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from .complex import ComplexError, Filtration, faces

INF = math.inf


@dataclass
class PersistenceDiagram:
    """Multiset of ``(dim, birth, death)``; ``death`` may be ``inf``.

    ``n_zero_length`` counts pairs with birth == death that were dropped.
    """

    features: list[tuple[int, float, float]] = field(default_factory=list)
    n_zero_length: int = 0

    def __post_init__(self) -> None:
        feats = [(int(d), float(b), float(e)) for d, b, e in self.features]
        for d, b, e in feats:
            if not b <= e:
                raise ValueError(f"birth {b} after death {e}")
        self.features = sorted(feats)

    def __len__(self) -> int:
        return len(self.features)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PersistenceDiagram):
            return NotImplemented
        return self.features == other.features

    def in_dim(self, p: int) -> list[tuple[float, float]]:
        return [(b, e) for d, b, e in self.features if d == p]

    @property
    def dims(self) -> list[int]:
        return sorted({d for d, _, _ in self.features})

    def betti_at(self, t: float, p: int) -> int:
        """Number of dimension-``p`` features alive at ``t`` (birth <= t < death)."""
        return sum(1 for b, e in self.in_dim(p) if b <= t < e)

    def prominent(self, p: int, min_persistence: float) -> list[tuple[float, float]]:
        return [(b, e) for b, e in self.in_dim(p) if e - b > min_persistence]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["dim", "birth", "death"])
        for d, b, e in self.features:
            writer.writerow([d, _fmt(b), _fmt(e)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "PersistenceDiagram":
        reader = csv.DictReader(io.StringIO(text))
        return cls([(int(r["dim"]), float(r["birth"]), float(r["death"])) for r in reader])

    def to_json(self) -> str:
        rows = [{"dim": d, "birth": _json_num(b), "death": _json_num(e)} for d, b, e in self.features]
        return json.dumps({"features": rows, "n_zero_length": self.n_zero_length})

    @classmethod
    def from_json(cls, text: str) -> "PersistenceDiagram":
        doc = json.loads(text)
        feats = [(r["dim"], float(r["birth"]), float(r["death"])) for r in doc["features"]]
        return cls(feats, doc.get("n_zero_length", 0))


def _fmt(x: float) -> str:
    if math.isinf(x):
        return "inf"
    return repr(float(x))


def _json_num(x: float):
    return "inf" if math.isinf(x) else x


def reduce(filtration: Filtration, max_dim: int | None = None) -> PersistenceDiagram:
    """Persistence pairs of a filtration by reducing the coboundary matrix.

    Dimensions are handled from 0 upwards; columns of simplices already
    paired as deaths one dimension lower are skipped (clearing), and columns
    are visited in reverse filtration order. The resulting pairs are the
    same as those of the standard boundary-matrix reduction. Only homology
    in dimensions below ``max_dim`` (default: the filtration's cap) is
    reported.
    """
    top = filtration.max_dim if max_dim is None else max_dim
    entries = filtration.entries
    n = len(entries)
    values = np.fromiter((v for _, v in entries), dtype=np.float64, count=n)
    dims = np.fromiter((len(s) - 1 for s, _ in entries), dtype=np.int64, count=n)
    ptr, cof = _cofacet_table(entries, values, dims, top)
    values_list = values.tolist()

    features: list[tuple[int, float, float]] = []
    zero = 0
    cleared: set[int] = set()
    for p in range(top):
        pivots: dict[int, object] = {}
        for i in np.flatnonzero(dims == p)[::-1].tolist():
            if i in cleared:
                continue
            start, stop = ptr[i], ptr[i + 1]
            if start == stop:
                features.append((p, values_list[i], INF))
                continue
            low = cof[start]
            if low not in pivots:
                # common case: the column is already reduced; keep its range
                pivots[low] = (start, stop)
            else:
                col = set(cof[start:stop])
                while col:
                    low = min(col)
                    other = pivots.get(low)
                    if other is None:
                        pivots[low] = col
                        break
                    if isinstance(other, tuple):
                        other = pivots[low] = set(cof[other[0]:other[1]])
                    col ^= other
                if not col:
                    features.append((p, values_list[i], INF))
                    continue
            birth, death = values_list[i], values_list[low]
            if birth == death:
                zero += 1
            else:
                features.append((p, birth, death))
        cleared = set(pivots)
    return PersistenceDiagram(features, zero)


def _cofacet_table(entries, values, dims, top):
    """CSR table of cofacet indices (ascending) for every simplex of dim < top.

    Also validates that every face is present and enters no later.
    """
    n = len(entries)
    verts = sorted({v for s, _ in entries for v in s})
    base = max(len(verts), 1)
    face_parts, cof_parts = [], []
    if base ** (top + 1) < 2 ** 62:
        lookup = _KeyLookup(entries, dims, verts, top)
        for p in range(1, top + 1):
            face_idx, simp_idx = lookup.faces_of_dim(p)
            face_parts.append(face_idx)
            cof_parts.append(simp_idx)
    else:
        index = {s: i for i, (s, _) in enumerate(entries)}
        fi, si = [], []
        for i, (s, _) in enumerate(entries):
            if 1 <= len(s) - 1 <= top:
                for f in faces(s):
                    j = index.get(f)
                    if j is None:
                        raise ComplexError(f"face {f} of {s} missing from filtration")
                    fi.append(j)
                    si.append(i)
        face_parts.append(np.asarray(fi, dtype=np.int64))
        cof_parts.append(np.asarray(si, dtype=np.int64))
    face_idx = np.concatenate(face_parts) if face_parts else np.empty(0, dtype=np.int64)
    simp_idx = np.concatenate(cof_parts) if cof_parts else np.empty(0, dtype=np.int64)
    bad = values[face_idx] > values[simp_idx]
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        raise ComplexError(
            f"non-monotone filtration: {entries[face_idx[k]][0]} enters after {entries[simp_idx[k]][0]}")
    order = np.lexsort((simp_idx, face_idx))
    counts = np.bincount(face_idx, minlength=n)
    ptr = np.concatenate([[0], np.cumsum(counts)]).tolist()
    return ptr, simp_idx[order].tolist()


class _KeyLookup:
    """Encodes simplices as integers so faces can be located by binary search."""

    def __init__(self, entries, dims, verts, top):
        self.entries = entries
        self.verts = np.asarray(verts, dtype=np.int64)
        self.base = max(len(verts), 1)
        self.idx = {}
        self.rank = {}
        self.sorted_keys = {}
        self.perm = {}
        for p in range(top + 1):
            idx = np.flatnonzero(dims == p)
            rows = np.array([entries[i][0] for i in idx.tolist()], dtype=np.int64).reshape(-1, p + 1)
            ranks = np.searchsorted(self.verts, rows)
            keys = self._encode(ranks)
            perm = np.argsort(keys, kind="stable")
            self.idx[p], self.rank[p] = idx, ranks
            self.sorted_keys[p], self.perm[p] = keys[perm], perm

    def _encode(self, ranks):
        keys = np.zeros(len(ranks), dtype=np.int64)
        for k in range(ranks.shape[1]):
            keys = keys * self.base + ranks[:, k]
        return keys

    def faces_of_dim(self, p):
        ranks, idx = self.rank[p], self.idx[p]
        skeys, perm, fidx = self.sorted_keys[p - 1], self.perm[p - 1], self.idx[p - 1]
        face_parts, simp_parts = [], []
        for k in range(p + 1):
            fkeys = self._encode(np.delete(ranks, k, axis=1))
            pos = np.searchsorted(skeys, fkeys)
            pos_c = np.minimum(pos, max(len(skeys) - 1, 0))
            found = (pos < len(skeys)) & (skeys[pos_c] == fkeys) if len(skeys) else np.zeros(len(fkeys), bool)
            if not np.all(found):
                j = int(np.flatnonzero(~found)[0])
                s = self.entries[idx[j]][0]
                raise ComplexError(f"face {s[:k] + s[k + 1:]} of {s} missing from filtration")
            face_parts.append(fidx[perm[pos]])
            simp_parts.append(idx)
        if not face_parts:
            return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
        return np.concatenate(face_parts), np.concatenate(simp_parts)


def _linf(a, b) -> float:
    return max(abs(a[0] - b[0]), abs(a[1] - b[1]))


def _diag_cost(a) -> float:
    return (a[1] - a[0]) / 2.0


def _split(diagram, dim):
    if isinstance(diagram, PersistenceDiagram):
        pts = diagram.in_dim(dim)
    else:
        pts = [(float(b), float(e)) for b, e in diagram]
    finite = [(b, e) for b, e in pts if not math.isinf(e)]
    infinite = sorted(b for b, e in pts if math.isinf(e))
    return finite, infinite


def bottleneck(d1, d2, dim: int = 0) -> float:
    """Exact bottleneck distance between the ``dim`` parts of two diagrams.

    Points may be matched to each other or to the diagonal. Infinite bars are
    matched only among themselves; unequal counts give ``inf``. Arguments are
    PersistenceDiagrams or plain lists of ``(birth, death)`` pairs.
    """
    a, a_inf = _split(d1, dim)
    b, b_inf = _split(d2, dim)
    if len(a_inf) != len(b_inf):
        return INF
    # on the line, sorted order is an optimal bottleneck matching
    inf_part = max((abs(x - y) for x, y in zip(a_inf, b_inf)), default=0.0)
    return max(inf_part, _finite_bottleneck(a, b))


def _finite_bottleneck(a, b) -> float:
    n, m = len(a), len(b)
    if n == 0 and m == 0:
        return 0.0
    cross = np.array([[_linf(x, y) for y in b] for x in a]).reshape(n, m)
    diag_a = np.array([_diag_cost(x) for x in a])
    diag_b = np.array([_diag_cost(y) for y in b])
    candidates = np.unique(np.concatenate([cross.ravel(), diag_a, diag_b, [0.0]]))
    lo, hi = 0, len(candidates) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if _has_perfect_matching(cross, diag_a, diag_b, candidates[mid]):
            hi = mid
        else:
            lo = mid + 1
    return float(candidates[lo])


def _has_perfect_matching(cross, diag_a, diag_b, r) -> bool:
    # left: a_0..a_{n-1}, diag(b_0)..diag(b_{m-1})
    # right: b_0..b_{m-1}, diag(a_0)..diag(a_{n-1})
    n, m = cross.shape
    size = n + m
    rows, cols = [], []
    ai, bj = np.nonzero(cross <= r)
    rows.extend(ai.tolist())
    cols.extend(bj.tolist())
    for i in np.nonzero(diag_a <= r)[0].tolist():
        rows.append(i)
        cols.append(m + i)
    for j in np.nonzero(diag_b <= r)[0].tolist():
        rows.append(n + j)
        cols.append(j)
    for j in range(m):
        for i in range(n):
            rows.append(n + j)
            cols.append(m + i)
    graph = csr_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(size, size))
    match = maximum_bipartite_matching(graph, perm_type="column")
    return bool(np.all(match >= 0))
