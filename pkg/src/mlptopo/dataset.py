"""Labeled point clouds: synthetic generation, table ingestion, sparsification."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

logger = logging.getLogger(__name__)


class DatasetError(ValueError):
    pass


@dataclass(eq=False)
class LabeledPointCloud:
    """Finite point set in R^d with binary labels and stable integer ids."""

    points: np.ndarray
    labels: np.ndarray
    ids: np.ndarray

    def __post_init__(self) -> None:
        self.points = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        self.ids = np.asarray(self.ids, dtype=np.int64).reshape(-1)
        n = self.points.shape[0]
        if self.labels.shape[0] != n or self.ids.shape[0] != n:
            raise DatasetError("points, labels and ids must have equal length")
        if not np.all(np.isfinite(self.points)):
            raise DatasetError("non-finite coordinate")
        if not np.all((self.labels == 0) | (self.labels == 1)):
            raise DatasetError("labels must be 0 or 1")
        if len(np.unique(self.ids)) != n:
            raise DatasetError("ids must be unique")

    @property
    def dim(self) -> int:
        return int(self.points.shape[1])

    def __len__(self) -> int:
        return int(self.points.shape[0])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LabeledPointCloud):
            return NotImplemented
        return (
            np.array_equal(self.points, other.points)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.ids, other.ids)
        )

    def subset(self, ids) -> "LabeledPointCloud":
        """Restrict to the given ids, keeping the original ids and their order."""
        pos = {int(i): k for k, i in enumerate(self.ids)}
        idx = np.array([pos[int(i)] for i in ids], dtype=np.int64)
        return LabeledPointCloud(self.points[idx], self.labels[idx], self.ids[idx])

    def to_json(self) -> str:
        doc = {
            "dim": self.dim,
            "points": self.points.tolist(),
            "labels": self.labels.tolist(),
            "ids": self.ids.tolist(),
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "LabeledPointCloud":
        doc = json.loads(text)
        points = np.asarray(doc["points"], dtype=np.float64).reshape(-1, int(doc["dim"]))
        return cls(points, doc["labels"], doc["ids"])


def generate_circles(
    n_per_class: int = 150,
    r_inner: float = 0.5,
    r_outer: float = 1.0,
    noise_std: float = 0.05,
    seed: int = 0,
) -> LabeledPointCloud:
    """Two noisy concentric circles; class 0 on the inner one.

    Angles are uniform; noise is isotropic Gaussian. Ids 0..n-1 are class 0.
    """
    if n_per_class <= 0:
        raise DatasetError("n_per_class must be positive")
    if r_inner <= 0 or r_outer <= 0:
        raise DatasetError("radii must be positive")
    if not r_inner < r_outer:
        raise DatasetError("r_inner must be smaller than r_outer")
    if noise_std < 0:
        raise DatasetError("noise_std must be nonnegative")
    rng = np.random.default_rng(seed)
    blocks = []
    for radius in (r_inner, r_outer):
        theta = rng.uniform(0.0, 2.0 * np.pi, size=n_per_class)
        pts = radius * np.column_stack([np.cos(theta), np.sin(theta)])
        if noise_std > 0:
            pts = pts + rng.normal(0.0, noise_std, size=pts.shape)
        blocks.append(pts)
    points = np.vstack(blocks)
    labels = np.repeat([0, 1], n_per_class)
    return LabeledPointCloud(points, labels, np.arange(2 * n_per_class))


def _sniff_delimiter(header: str) -> str:
    return ";" if header.count(";") > header.count(",") else ","


def load_table(
    path,
    label_column: str,
    class_grouping: Mapping,
    normalize: bool = True,
    feature_columns: list[str] | None = None,
    drop_unmapped: bool = False,
) -> LabeledPointCloud:
    """Read a delimited numeric table with a header row.

    Every column other than ``label_column`` is a feature unless
    ``feature_columns`` narrows the choice. A raw label missing from
    ``class_grouping`` is an error, or with ``drop_unmapped`` the row is
    skipped and the number of skipped rows is logged.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such table: {path}")
    grouping = {_label_key(k): int(v) for k, v in class_grouping.items()}
    if any(v not in (0, 1) for v in grouping.values()):
        raise DatasetError("class grouping must map to 0 or 1")

    with path.open(newline="") as fh:
        header_line = fh.readline()
        fh.seek(0)
        reader = csv.reader(fh, delimiter=_sniff_delimiter(header_line))
        header = [h.strip() for h in next(reader)]
        if label_column not in header:
            raise DatasetError(f"unknown label column {label_column!r}")
        label_idx = header.index(label_column)
        if feature_columns is None:
            feat_idx = [i for i in range(len(header)) if i != label_idx]
        else:
            missing = [c for c in feature_columns if c not in header]
            if missing:
                raise DatasetError(f"unknown feature columns {missing}")
            feat_idx = [header.index(c) for c in feature_columns]

        rows, labels, dropped = [], [], 0
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            raw = _label_key(row[label_idx])
            if raw not in grouping:
                if not drop_unmapped:
                    raise DatasetError(f"unmapped class {raw!r} at line {lineno}")
                dropped += 1
                continue
            try:
                values = [float(row[i]) for i in feat_idx]
            except (ValueError, IndexError) as exc:
                raise DatasetError(f"non-numeric feature cell at line {lineno}") from exc
            if not all(np.isfinite(values)):
                raise DatasetError(f"non-finite feature cell at line {lineno}")
            rows.append(values)
            labels.append(grouping[raw])

    if dropped:
        logger.warning("dropped %d rows with labels outside the class grouping", dropped)
    if not rows:
        raise DatasetError("unmapped class: no row has a label in the class grouping")
    points = np.asarray(rows, dtype=np.float64)
    if normalize:
        points = standardize(points)
    return LabeledPointCloud(points, labels, np.arange(len(rows)))


def _label_key(raw) -> str:
    # "1", "1.0" and 1 all name the same class
    text = str(raw).strip()
    try:
        value = float(text)
    except ValueError:
        return text
    return str(int(value)) if value.is_integer() else text


def standardize(points: np.ndarray) -> np.ndarray:
    """Zero mean, unit variance per column; constant columns map to 0."""
    mean = points.mean(axis=0)
    std = points.std(axis=0)
    centered = points - mean
    safe = np.where(std > 0, std, 1.0)
    out = centered / safe
    out[:, std == 0] = 0.0
    return out


def sparsify(cloud: LabeledPointCloud, min_sq_dist: float) -> list[int]:
    """Greedy subsample in ascending id order.

    A point is kept iff its squared distance to every point kept so far is
    at least ``min_sq_dist``.
    """
    order = np.argsort(cloud.ids, kind="stable")
    pts = cloud.points[order]
    ids = cloud.ids[order]
    if min_sq_dist <= 0:
        return [int(i) for i in ids]
    kept_pts = np.empty_like(pts)
    kept: list[int] = []
    for p, pid in zip(pts, ids):
        k = len(kept)
        if k:
            d2 = np.sum((kept_pts[:k] - p) ** 2, axis=1)
            if d2.min() < min_sq_dist:
                continue
        kept_pts[k] = p
        kept.append(int(pid))
    return kept
