"""
Multi-task datasets: CSV ingestion, seeded per-task splits and a synthetic
generator with a known task covariance.

CSV schema: one file per task, each row holds D decimal features followed by
one integer class label, no header unless requested.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from drn.errors import ArgumentError, IngestionError, SplitError
from drn.kron_gauss import KronCovariance, SpdFactor, TensorNormal, sample
from drn.mtl_net import softmax
from drn.tensor_core import Tensor3

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class MultiTaskDataset:
    task_names: List[str]
    features: List[NDArray[np.float64]]
    labels: List[NDArray[np.int64]]
    num_classes: int

    def __post_init__(self):
        if not (len(self.task_names) == len(self.features) == len(self.labels)) or not self.task_names:
            raise ArgumentError("task names, feature matrices and label vectors must pair up")
        dims = {x.shape[1] for x in self.features}
        if len(dims) != 1:
            raise ArgumentError(f"tasks disagree on the feature dimension: {sorted(dims)}")
        for name, x, y in zip(self.task_names, self.features, self.labels):
            if x.shape[0] != y.shape[0]:
                raise ArgumentError(f"task {name}: {x.shape[0]} rows but {y.shape[0]} labels")
            if y.size and (y.min() < 0 or y.max() >= self.num_classes):
                raise ArgumentError(f"task {name}: labels must lie in [0, {self.num_classes})")

    @property
    def num_tasks(self) -> int:
        return len(self.task_names)

    @property
    def feature_dim(self) -> int:
        return self.features[0].shape[1]

    @property
    def sizes(self) -> List[int]:
        return [y.shape[0] for y in self.labels]

    def subset(self, indices: Sequence[NDArray[np.int64]]) -> MultiTaskDataset:
        return MultiTaskDataset(
            list(self.task_names),
            [x[i] for x, i in zip(self.features, indices)],
            [y[i] for y, i in zip(self.labels, indices)],
            self.num_classes,
        )


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: Optional[float] = None
    train_size: Optional[int] = None
    stratified: bool = False
    seed: int = 0

    def __post_init__(self):
        if (self.train_fraction is None) == (self.train_size is None):
            raise SplitError("set exactly one of train_fraction and train_size")
        if self.train_fraction is not None and not 0.0 < self.train_fraction < 1.0:
            raise SplitError(f"train_fraction must lie in (0, 1), got {self.train_fraction}")
        if self.train_size is not None and self.train_size < 1:
            raise SplitError(f"train_size must be positive, got {self.train_size}")


@dataclass(frozen=True, eq=False)
class SyntheticSpec:
    num_tasks: int
    feature_dim: int
    num_classes: int
    samples_per_task: int
    task_covariance: NDArray[np.float64]
    noise_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        for name in ("num_tasks", "feature_dim", "num_classes", "samples_per_task"):
            if getattr(self, name) < 1:
                raise ArgumentError(f"{name} must be positive")
        if self.num_classes < 2:
            raise ArgumentError("at least two classes are needed")
        if not self.noise_scale > 0:
            raise ArgumentError("noise_scale must be positive")
        omega = np.asarray(self.task_covariance, dtype=np.float64)
        if omega.shape != (self.num_tasks, self.num_tasks):
            raise ArgumentError(f"task covariance must be {self.num_tasks}x{self.num_tasks}")
        SpdFactor.from_matrix(omega)
        object.__setattr__(self, "task_covariance", omega)


def _parse_row(row, path, line, feature_dim, num_classes):
    if len(row) != feature_dim + 1:
        raise IngestionError(f"expected {feature_dim + 1} columns, got {len(row)}", path, line)
    try:
        values = [float(cell) for cell in row[:-1]]
    except ValueError as e:
        raise IngestionError(f"non-numeric feature ({e})", path, line) from e
    try:
        label = int(row[-1])
    except ValueError as e:
        raise IngestionError(f"label {row[-1]!r} is not an integer", path, line) from e
    if not all(math.isfinite(v) for v in values):
        raise IngestionError("non-finite feature", path, line)
    if not 0 <= label < num_classes:
        raise IngestionError(f"label {label} out of range [0, {num_classes})", path, line)
    return values, label


def load_csv(
    paths: Sequence[str],
    num_classes: int,
    feature_dim: Optional[int] = None,
    task_names: Optional[Sequence[str]] = None,
    header: bool = False,
) -> MultiTaskDataset:
    """One file per task, in path order."""
    if not paths:
        raise IngestionError("no task files given")
    names = list(task_names) if task_names else [Path(p).stem for p in paths]
    if len(names) != len(paths):
        raise IngestionError(f"{len(names)} task names for {len(paths)} files")
    features, labels = [], []
    for path in paths:
        rows, ys = [], []
        try:
            with open(path, newline="", encoding="utf-8") as f:
                reader = csv.reader(f)
                for line, row in enumerate(reader, start=1):
                    if header and line == 1:
                        continue
                    if not row:
                        continue
                    if feature_dim is None:
                        feature_dim = len(row) - 1
                        if feature_dim < 1:
                            raise IngestionError("rows need at least one feature and a label", path, line)
                    values, label = _parse_row(row, path, line, feature_dim, num_classes)
                    rows.append(values)
                    ys.append(label)
        except OSError as e:
            raise IngestionError(f"cannot read file ({e.strerror})", path) from e
        if not rows:
            raise IngestionError("file holds no samples", path)
        logger.info("Loaded %d samples from %s", len(rows), path)
        features.append(np.array(rows, dtype=np.float64))
        labels.append(np.array(ys, dtype=np.int64))
    return MultiTaskDataset(names, features, labels, num_classes)


def load_manifest(path: str) -> MultiTaskDataset:
    """Manifest JSON: {"task_names", "paths", "feature_dim", "num_classes", "header"}; paths relative to the manifest."""
    try:
        with open(path, encoding="utf-8") as f:
            manifest = json.load(f)
    except OSError as e:
        raise IngestionError(f"cannot read manifest ({e.strerror})", path) from e
    except json.JSONDecodeError as e:
        raise IngestionError(f"malformed manifest: {e.msg}", path, e.lineno) from e
    try:
        base = Path(path).parent
        paths = [str(base / p) for p in manifest["paths"]]
        return load_csv(
            paths,
            num_classes=int(manifest["num_classes"]),
            feature_dim=manifest.get("feature_dim"),
            task_names=manifest.get("task_names"),
            header=bool(manifest.get("header", False)),
        )
    except (KeyError, TypeError) as e:
        raise IngestionError(f"manifest is missing or mistypes a field: {e}", path) from e


def _format(value: float) -> str:
    return format(float(value), ".17g")


def write_csv(ds: MultiTaskDataset, directory: str) -> List[str]:
    """Writes <task name>.csv per task, 17 significant digits; returns the file names."""
    os.makedirs(directory, exist_ok=True)
    names = []
    for name, x, y in zip(ds.task_names, ds.features, ds.labels):
        file_name = f"{name}.csv"
        with open(os.path.join(directory, file_name), "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            for row, label in zip(x, y):
                writer.writerow([_format(v) for v in row] + [str(int(label))])
        names.append(file_name)
    return names


def write_manifest(ds: MultiTaskDataset, directory: str, file_names: Sequence[str]) -> str:
    path = os.path.join(directory, "manifest.json")
    manifest = {
        "task_names": ds.task_names,
        "paths": list(file_names),
        "feature_dim": ds.feature_dim,
        "num_classes": ds.num_classes,
        "header": False,
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2)
        f.write("\n")
    return path


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _train_count(n: int, spec: SplitSpec) -> int:
    if spec.train_size is not None:
        return spec.train_size
    return max(1, _round_half_up(spec.train_fraction * n))


def split(ds: MultiTaskDataset, spec: SplitSpec) -> Tuple[MultiTaskDataset, MultiTaskDataset]:
    """Seeded per-task sampling without replacement into (train, test)."""
    train_idx, test_idx = [], []
    for t, (name, y) in enumerate(zip(ds.task_names, ds.labels)):
        n = y.shape[0]
        rng = np.random.default_rng([spec.seed, t])
        if spec.stratified:
            if spec.train_size is not None:
                raise SplitError("stratified splits take a train_fraction")
            chosen = []
            for c in np.unique(y):
                members = np.flatnonzero(y == c)
                chosen.append(rng.permutation(members)[: _train_count(len(members), spec)])
            train = np.sort(np.concatenate(chosen))
        else:
            if spec.train_fraction is not None and n < 1.0 / spec.train_fraction:
                raise SplitError(
                    f"task {name}: {n} samples are too few for a {spec.train_fraction} training fraction"
                )
            count = _train_count(n, spec)
            if count >= n:
                raise SplitError(f"task {name}: {count} training samples leave no test samples out of {n}")
            train = np.sort(rng.permutation(n)[:count])
        test = np.setdiff1d(np.arange(n), train)
        if test.size == 0:
            raise SplitError(f"task {name}: stratified split leaves no test samples")
        train_idx.append(train)
        test_idx.append(test)
    return ds.subset(train_idx), ds.subset(test_idx)


def kfold(ds: MultiTaskDataset, k: int = 5, seed: int = 0) -> List[Tuple[MultiTaskDataset, MultiTaskDataset]]:
    """Per-task k-fold partition; fold i validates on the i-th chunk of every task."""
    if k < 2:
        raise SplitError(f"k must be at least 2, got {k}")
    if min(ds.sizes) < k:
        raise SplitError(f"every task needs at least {k} samples for {k}-fold splitting")
    chunks = [
        np.array_split(np.random.default_rng([seed, t]).permutation(n), k) for t, n in enumerate(ds.sizes)
    ]
    folds = []
    for i in range(k):
        val = [np.sort(c[i]) for c in chunks]
        train = [np.sort(np.concatenate(c[:i] + c[i + 1 :])) for c in chunks]
        folds.append((ds.subset(train), ds.subset(val)))
    return folds


def generate_synthetic(spec: SyntheticSpec) -> Tuple[MultiTaskDataset, Tensor3]:
    """
    Draws W* ~ TN(0, I_D, I_C, Omega) with dims (D, C, T), then per task
    x ~ N(0, I_D) and y ~ softmax(W*_t^T x / noise_scale).
    Returns the dataset and W*.
    """
    rng = np.random.default_rng(spec.seed)
    dims = (spec.feature_dim, spec.num_classes, spec.num_tasks)
    cov = KronCovariance(
        (
            SpdFactor.identity(spec.feature_dim),
            SpdFactor.identity(spec.num_classes),
            SpdFactor.from_matrix(spec.task_covariance),
        )
    )
    weights = sample(TensorNormal(Tensor3.zeros(dims), cov), rng)
    features, labels = [], []
    for t in range(spec.num_tasks):
        x = rng.standard_normal((spec.samples_per_task, spec.feature_dim))
        probs = softmax(x @ weights.data[:, :, t] / spec.noise_scale)
        u = rng.random((spec.samples_per_task, 1))
        y = np.minimum(np.sum(np.cumsum(probs, axis=1) < u, axis=1), spec.num_classes - 1)
        features.append(x)
        labels.append(y.astype(np.int64))
    names = [f"task{t + 1}" for t in range(spec.num_tasks)]
    return MultiTaskDataset(names, features, labels, spec.num_classes), weights


def block_task_covariance(num_tasks: int, related: Sequence[int], correlation: float) -> NDArray[np.float64]:
    """Unit-variance task covariance where the `related` tasks share `correlation` and the rest are independent."""
    omega = np.eye(num_tasks)
    for a in related:
        for b in related:
            if a != b:
                omega[a, b] = correlation
    return omega

