"""Dataset container, loaders (IDX / CSV / synthetic) and pairwise-constraint sampling."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .util import rng_for

#: Label value that marks a row as unlabeled (also the CSV on-disk marker).
UNLABELED = -1

IDX_IMAGE_MAGIC = 2051  # 0x00000803
IDX_LABEL_MAGIC = 2049  # 0x00000801


class IdxFormatError(ValueError):
    """Magic number or structural field of an IDX file is wrong."""


class DataConsistencyError(ValueError):
    """Two inputs that must agree (e.g. image/label counts) do not."""


class InsufficientClassError(ValueError):
    """A requested class does not have enough labeled rows."""


@dataclass(frozen=True)
class Dataset:
    """n x d feature matrix with optional per-row integer class labels.

    ``labels`` is either None (fully unlabeled) or an int array where
    individual rows may carry ``UNLABELED``. Instances are immutable;
    the backing arrays are marked read-only.
    """

    features: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        feats = np.ascontiguousarray(np.asarray(self.features, dtype=np.float64))
        if feats.ndim != 2:
            raise ValueError(f"features must be 2-d, got shape {feats.shape}")
        if not np.all(np.isfinite(feats)):
            raise ValueError("features contain non-finite values")
        feats.setflags(write=False)
        object.__setattr__(self, "features", feats)
        if self.labels is not None:
            labs = np.ascontiguousarray(np.asarray(self.labels, dtype=np.int64))
            if labs.shape != (feats.shape[0],):
                raise ValueError("labels must be one integer per row")
            if np.any(labs < UNLABELED):
                raise ValueError("labels must be >= 0 (or the unlabeled marker)")
            labs.setflags(write=False)
            object.__setattr__(self, "labels", labs)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def labeled_mask(self) -> np.ndarray:
        if self.labels is None:
            return np.zeros(self.n, dtype=bool)
        return self.labels >= 0

    def classes(self) -> np.ndarray:
        """Sorted distinct class ids among labeled rows."""
        if self.labels is None:
            return np.empty(0, dtype=np.int64)
        return np.unique(self.labels[self.labels >= 0])

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        labs = None if self.labels is None else self.labels[idx]
        return Dataset(self.features[idx], labs)

    def with_features(self, features: np.ndarray) -> "Dataset":
        return Dataset(features, self.labels)


@dataclass(frozen=True)
class ConstraintSet:
    """Sparse must-link / cannot-link pairs.

    Pairs are stored unordered as (i, j) with i < j; the two sets are
    disjoint and contain no self-pairs.
    """

    similar: frozenset
    dissimilar: frozenset

    def __post_init__(self):
        sim = frozenset(_norm_pair(p) for p in self.similar)
        dis = frozenset(_norm_pair(p) for p in self.dissimilar)
        if sim & dis:
            raise ValueError("a pair cannot be both similar and dissimilar")
        object.__setattr__(self, "similar", sim)
        object.__setattr__(self, "dissimilar", dis)

    def validate_for(self, n: int) -> None:
        for i, j in self.similar | self.dissimilar:
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"constraint pair ({i},{j}) out of range for n={n}")

    def similar_array(self) -> np.ndarray:
        """Deterministically ordered (k, 2) index array."""
        return _pairs_array(self.similar)

    def dissimilar_array(self) -> np.ndarray:
        return _pairs_array(self.dissimilar)


def _norm_pair(pair):
    i, j = int(pair[0]), int(pair[1])
    if i == j:
        raise ValueError(f"self-pair ({i},{i}) is not a valid constraint")
    if i < 0 or j < 0:
        raise ValueError("constraint indices must be non-negative")
    return (i, j) if i < j else (j, i)


def _pairs_array(pairs) -> np.ndarray:
    if not pairs:
        return np.empty((0, 2), dtype=np.int64)
    return np.array(sorted(pairs), dtype=np.int64)


def _read_be32(f, path, what) -> int:
    raw = f.read(4)
    if len(raw) != 4:
        raise OSError(f"{path}: truncated while reading {what}")
    return struct.unpack(">I", raw)[0]


def load_idx(images_path, labels_path) -> Dataset:
    """Load an IDX image/label file pair (big-endian, MNIST layout).

    Image file:  magic 2051 | count | rows | cols | count*rows*cols pixel bytes
    Label file:  magic 2049 | count | count label bytes
    All header fields are 32-bit unsigned big-endian integers. Pixels are
    flattened row-major and scaled to [0, 1] by dividing by 255.
    """
    with open(images_path, "rb") as f:
        magic = _read_be32(f, images_path, "image magic")
        if magic != IDX_IMAGE_MAGIC:
            raise IdxFormatError(f"{images_path}: bad image magic {magic}, expected {IDX_IMAGE_MAGIC}")
        count = _read_be32(f, images_path, "image count")
        rows = _read_be32(f, images_path, "row count")
        cols = _read_be32(f, images_path, "column count")
        payload = f.read(count * rows * cols)
        if len(payload) != count * rows * cols:
            raise OSError(f"{images_path}: truncated pixel data "
                          f"({len(payload)} bytes, expected {count * rows * cols})")
    with open(labels_path, "rb") as f:
        magic = _read_be32(f, labels_path, "label magic")
        if magic != IDX_LABEL_MAGIC:
            raise IdxFormatError(f"{labels_path}: bad label magic {magic}, expected {IDX_LABEL_MAGIC}")
        label_count = _read_be32(f, labels_path, "label count")
        if label_count != count:
            raise DataConsistencyError(
                f"image count {count} != label count {label_count}")
        label_bytes = f.read(count)
        if len(label_bytes) != count:
            raise OSError(f"{labels_path}: truncated label data")
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(count, rows * cols)
    features = pixels.astype(np.float64) / 255.0
    labels = np.frombuffer(label_bytes, dtype=np.uint8).astype(np.int64)
    return Dataset(features, labels)


def save_csv(ds: Dataset, path, with_labels: bool = False) -> None:
    """Write header-less CSV rows of d floats, optional trailing label column.

    Floats are written with 17 significant digits so a reload reproduces
    them exactly; unlabeled rows store ``UNLABELED`` in the label column.
    """
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for i in range(ds.n):
            cells = [f"{v:.17g}" for v in ds.features[i]]
            if with_labels:
                lab = UNLABELED if ds.labels is None else int(ds.labels[i])
                cells.append(str(lab))
            f.write(",".join(cells) + "\n")


def load_csv(path, labeled: bool = False) -> Dataset:
    """Read a dataset written by :func:`save_csv`.

    With ``labeled=True`` the last column is the integer label column
    (``UNLABELED`` rows stay unlabeled).
    """
    raw = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    if raw.size == 0:
        raise ValueError(f"{path}: empty dataset")
    if labeled:
        feats = raw[:, :-1]
        labels = raw[:, -1].astype(np.int64)
        return Dataset(feats, labels)
    return Dataset(raw)


def synth_blobs(k: int, n_per: int, d: int, spread: float, seed: int,
                center_sep: float = 10.0) -> Dataset:
    """k isotropic Gaussian clusters, labels = cluster ids, reproducible by seed.

    Centers are drawn uniformly and rescaled so the minimum pairwise center
    distance equals ``center_sep``; rows come out grouped by cluster.
    """
    if k < 1 or n_per < 1 or d < 1:
        raise ValueError("k, n_per and d must all be >= 1")
    if spread <= 0:
        raise ValueError("spread must be positive")
    rng = rng_for(seed, 0)
    centers = rng.uniform(-1.0, 1.0, size=(k, d))
    if k > 1:
        dists = np.linalg.norm(centers[:, None, :] - centers[None, :, :], axis=-1)
        min_dist = dists[np.triu_indices(k, 1)].min()
        while min_dist <= 1e-12:  # essentially impossible, but keep it total
            centers = rng.uniform(-1.0, 1.0, size=(k, d))
            dists = np.linalg.norm(centers[:, None, :] - centers[None, :, :], axis=-1)
            min_dist = dists[np.triu_indices(k, 1)].min()
        centers *= center_sep / min_dist
    features = np.concatenate(
        [centers[c] + spread * rng.standard_normal((n_per, d)) for c in range(k)])
    labels = np.repeat(np.arange(k, dtype=np.int64), n_per)
    return Dataset(features, labels)


def make_constraints(ds: Dataset, labeled_classes, per_class: int, seed: int) -> ConstraintSet:
    """Sample ``per_class`` labeled rows per named class and expand into pairs.

    Same-class pairs among the sample become `similar`, cross-class pairs
    `dissimilar`. Classes outside ``labeled_classes`` are never touched,
    which is the semi-supervised setting: the remaining classes stay unseen
    by metric learning.
    """
    classes = sorted(int(c) for c in labeled_classes)
    if not classes:
        raise ValueError("labeled_classes must be non-empty")
    if per_class < 1:
        raise ValueError("per_class must be >= 1")
    if ds.labels is None:
        raise InsufficientClassError("dataset has no labels to sample constraints from")
    rng = rng_for(seed, 0)
    chosen: dict[int, np.ndarray] = {}
    for c in classes:
        rows = np.flatnonzero(ds.labels == c)
        if rows.size < per_class:
            raise InsufficientClassError(
                f"class {c} has {rows.size} labeled rows, need {per_class}")
        pick = rng.choice(rows, size=per_class, replace=False)
        chosen[c] = np.sort(pick)
    similar = set()
    for c in classes:
        similar.update(combinations(chosen[c].tolist(), 2))
    dissimilar = set()
    for a, b in combinations(classes, 2):
        for i in chosen[a].tolist():
            for j in chosen[b].tolist():
                dissimilar.add((i, j) if i < j else (j, i))
    return ConstraintSet(frozenset(similar), frozenset(dissimilar))
