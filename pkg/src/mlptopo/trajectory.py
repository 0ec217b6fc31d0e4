"""Per-point trajectories through a tower and the aggregated trajectory graph."""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .tower import CoverTower, LayerwiseTower

Trajectory = tuple[int, ...]


class TrajectoryError(ValueError):
    pass


def point_trajectories(tower: CoverTower | LayerwiseTower, ids=None) -> dict[int, Trajectory]:
    """Trajectory of every point id, keyed by id.

    For a LayerwiseTower the element at layer i is the point's connected
    component in K_i; components nest, so the map between layers is
    containment. For a CoverTower the start is the lowest-indexed layer-0
    element holding the point and later entries follow the cover maps.
    """
    if isinstance(tower, LayerwiseTower):
        labels = [tower.components(i) for i in range(len(tower))]
        return {int(v): tuple(lab[int(v)] for lab in labels) for v in tower.ids.tolist()}
    first = tower.covers[0]
    if ids is None:
        ids = sorted(first.covered)
    result = {}
    for v in ids:
        try:
            j = first.element_of(int(v))
        except KeyError:
            raise TrajectoryError(f"point {v} is not covered at layer 0") from None
        path = [j]
        for m in tower.maps:
            j = m(j)
            path.append(j)
        result[int(v)] = tuple(path)
    return result


@dataclass
class Node:
    layer: int
    element: int
    counts: dict[int, int] = field(default_factory=dict)

    @property
    def size(self) -> int:
        return sum(self.counts.values())

    @property
    def predominant_class(self) -> int:
        return max(sorted(self.counts), key=lambda c: self.counts[c])


def node_purity(node: Node) -> float:
    """Share of the node's points that belong to its largest class."""
    total = node.size
    if total == 0:
        raise TrajectoryError("purity of an empty node")
    return max(node.counts.values()) / total


@dataclass
class TrajectoryGraph:
    nodes: dict[tuple[int, int], Node]
    edges: dict[tuple[tuple[int, int], tuple[int, int]], int]

    @property
    def n_layers(self) -> int:
        return 1 + max((layer for layer, _ in self.nodes), default=-1)

    def layer_nodes(self, layer: int) -> list[Node]:
        return [n for key, n in sorted(self.nodes.items()) if key[0] == layer]

    def to_dot(self, name: str = "trajectories") -> str:
        lines = [f"digraph {name} {{", "\trankdir=LR;"]
        for layer in range(self.n_layers):
            lines.append("\t{ rank = same;")
            for node in self.layer_nodes(layer):
                label = f"L{layer}:C{node.element} n={node.size} p={node_purity(node):.2f}"
                lines.append(f'\t\t"L{layer}C{node.element}" [label="{label}", '
                             f'class="{node.predominant_class}"];')
            lines.append("\t}")
        for (src, dst), count in sorted(self.edges.items()):
            lines.append(f'\t"L{src[0]}C{src[1]}" -> "L{dst[0]}C{dst[1]}" '
                         f'[label="{count}", weight={count}];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def build_graph(trajectories, labels) -> TrajectoryGraph:
    """Aggregate trajectories into layered nodes and edges with class counts.

    ``trajectories`` is a list aligned with ``labels`` or a dict keyed by point
    id, in which case ``labels`` must be a matching dict.
    """
    if isinstance(trajectories, dict):
        keys = sorted(trajectories)
        paths = [trajectories[k] for k in keys]
        labs = [int(labels[k]) for k in keys]
    else:
        paths = list(trajectories)
        labs = [int(x) for x in np.asarray(labels).reshape(-1)]
    if len(paths) != len(labs):
        raise TrajectoryError("one label per trajectory required")
    if len({len(p) for p in paths}) > 1:
        raise TrajectoryError("trajectories have different lengths")
    nodes: dict[tuple[int, int], Node] = {}
    edges: Counter = Counter()
    for path, lab in zip(paths, labs):
        for layer, elem in enumerate(path):
            node = nodes.setdefault((layer, elem), Node(layer, elem))
            node.counts[lab] = node.counts.get(lab, 0) + 1
        for layer in range(len(path) - 1):
            edges[((layer, path[layer]), (layer + 1, path[layer + 1]))] += 1
    return TrajectoryGraph(dict(sorted(nodes.items())), dict(sorted(edges.items())))


def dominant_trajectories(trajectories, k: int) -> list[tuple[Trajectory, int]]:
    """The ``k`` most frequent distinct paths; ties broken by the path itself."""
    paths = trajectories.values() if isinstance(trajectories, dict) else trajectories
    counts = Counter(tuple(p) for p in paths)
    ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    return ranked[:k]


def trajectories_json(trajectories: dict[int, Trajectory]) -> str:
    return json.dumps({str(k): list(v) for k, v in sorted(trajectories.items())})


def trajectories_from_json(text: str) -> dict[int, Trajectory]:
    return {int(k): tuple(v) for k, v in json.loads(text).items()}


def redundant_layers(trajectories) -> list[int]:
    """Layers i >= 1 whose partition of points equals that of layer i - 1.

    A trailing run of such layers suggests the network is deeper than the
    data flow needs.
    """
    paths = list(trajectories.values() if isinstance(trajectories, dict) else trajectories)
    if not paths:
        return []
    n_layers = len(paths[0])

    def partition(i):
        groups: dict[int, set] = {}
        for k, p in enumerate(paths):
            groups.setdefault(p[i], set()).add(k)
        return {frozenset(g) for g in groups.values()}

    parts = [partition(i) for i in range(n_layers)]
    return [i for i in range(1, n_layers) if parts[i] == parts[i - 1]]
