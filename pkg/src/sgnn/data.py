"""Datasets: plain-text loaders/writers and a stochastic block model generator.

File formats (all UTF-8, 0-indexed, ``.`` as decimal point):

* graph: one edge per line, ``src dst [weight]`` separated by tabs or spaces;
  lines starting with ``#`` are comments. Reverse edges are added on load.
* features: CSV of reals, row ``i`` is node ``i``, no header.
* labels: one integer per line.
* split: three lines ``train: ...``, ``val: ...``, ``test: ...`` with
  space-separated node indices.
"""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError, ParseError
from .graph import SparseGraph

log = logging.getLogger(__name__)

SPLIT_NAMES = ("train", "val", "test")


@dataclass
class Dataset:
    graph: SparseGraph
    features: np.ndarray
    labels: np.ndarray | None = None
    split: dict[str, np.ndarray] | None = None
    num_classes: int = 0

    @property
    def n(self) -> int:
        return self.graph.n

    def validate(self) -> None:
        n = self.graph.n
        if self.features.ndim != 2 or self.features.shape[0] != n:
            raise ContractError(f"features must have {n} rows, got shape {self.features.shape}")
        if self.labels is not None:
            if self.labels.shape != (n,):
                raise ContractError(f"labels must have length {n}, got {self.labels.shape[0]}")
            if n and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
                raise ContractError("label outside [0, num_classes)")
        if self.split is not None:
            seen = np.zeros(n, dtype=bool)
            for name in SPLIT_NAMES:
                idx = self.split.get(name, np.zeros(0, dtype=np.int64))
                if idx.size and (idx.min() < 0 or idx.max() >= n):
                    raise ContractError(f"{name} split index outside [0, {n})")
                if np.any(seen[idx]) or np.unique(idx).size != idx.size:
                    raise ContractError("split lists are not disjoint")
                seen[idx] = True


@dataclass(frozen=True)
class SbmSpec:
    blocks: int = 4
    nodes_per_block: int = 250
    p_in: float = 0.1
    p_out: float = 0.01
    feature_dim: int = 32
    feature_noise: float = 1.0
    seed: int = 0

    def validate(self) -> None:
        if self.blocks < 1 or self.nodes_per_block < 1:
            raise ContractError("blocks and nodes_per_block must be >= 1")
        if not (0.0 <= self.p_out < self.p_in <= 1.0):
            raise ContractError("SBM requires 0 <= p_out < p_in <= 1")
        if self.feature_dim < self.blocks:
            raise ContractError("feature_dim must be >= blocks for one-hot centroids")
        if self.feature_noise < 0:
            raise ContractError("feature_noise must be >= 0")


# ---------------------------------------------------------------- loading


def _read_lines(path):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            yield lineno, raw.strip()


def _parse_graph(path, n):
    src, dst, wts = [], [], []
    for lineno, line in _read_lines(path):
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) not in (2, 3):
            raise ParseError(f"expected 'src dst [weight]', got {line!r}", path, lineno)
        try:
            i, j = int(parts[0]), int(parts[1])
            w = float(parts[2]) if len(parts) == 3 else 1.0
        except ValueError:
            raise ParseError(f"cannot parse edge {line!r}", path, lineno) from None
        if not (0 <= i < n and 0 <= j < n):
            raise ParseError(f"edge {i}-{j} references a node outside [0, {n})", path, lineno)
        if not np.isfinite(w) or w < 0:
            raise ParseError(f"invalid edge weight {parts[2]!r}", path, lineno)
        if i == j:
            log.warning("%s:%d: ignoring self-loop on node %d", path, lineno, i)
            continue
        src.append(i)
        dst.append(j)
        wts.append(w)
    return src, dst, wts


def _parse_features(path):
    rows = []
    width = None
    for lineno, line in _read_lines(path):
        if not line:
            continue
        try:
            row = [float(tok) for tok in line.split(",")]
        except ValueError:
            raise ParseError(f"non-numeric feature value in {line[:40]!r}", path, lineno) from None
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise ParseError(f"expected {width} columns, got {len(row)}", path, lineno)
        rows.append(row)
    if not rows:
        raise ParseError("feature file is empty", path)
    x = np.array(rows, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ParseError("feature file contains non-finite values", path)
    return x


def _parse_labels(path):
    out = []
    for lineno, line in _read_lines(path):
        if not line:
            continue
        try:
            out.append(int(line))
        except ValueError:
            raise ParseError(f"label is not an integer: {line!r}", path, lineno) from None
        if out[-1] < 0:
            raise ParseError("negative label", path, lineno)
    return np.array(out, dtype=np.int64)


def _parse_split(path):
    split = {}
    for lineno, line in _read_lines(path):
        if not line:
            continue
        name, sep, rest = line.partition(":")
        name = name.strip()
        if not sep or name not in SPLIT_NAMES:
            raise ParseError(f"expected 'train:', 'val:' or 'test:', got {line[:20]!r}", path, lineno)
        if name in split:
            raise ParseError(f"duplicate {name} line", path, lineno)
        try:
            split[name] = np.array([int(t) for t in rest.split()], dtype=np.int64)
        except ValueError:
            raise ParseError(f"bad index in {name} split", path, lineno) from None
    for name in SPLIT_NAMES:
        split.setdefault(name, np.zeros(0, dtype=np.int64))
    return split


def load_dataset(graph_path, features_path, labels_path=None, split_path=None) -> Dataset:
    features = _parse_features(features_path)
    n = features.shape[0]
    src, dst, wts = _parse_graph(graph_path, n)
    graph = SparseGraph.from_edges(n, src, dst, wts, symmetrize=True)
    labels = None
    num_classes = 0
    if labels_path is not None:
        labels = _parse_labels(labels_path)
        if labels.shape[0] != n:
            raise ParseError(f"{labels.shape[0]} labels for {n} feature rows", labels_path)
        num_classes = int(labels.max()) + 1 if n else 0
    split = _parse_split(split_path) if split_path is not None else None
    data = Dataset(graph, features, labels, split, num_classes)
    try:
        data.validate()
    except ContractError as exc:
        raise ParseError(str(exc), split_path or labels_path) from None
    return data


# ---------------------------------------------------------------- writing


def _atomic_write(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def format_matrix_csv(x: np.ndarray) -> str:
    return "".join(",".join(repr(float(v)) for v in row) + "\n" for row in np.asarray(x))


def save_matrix_csv(path, x: np.ndarray) -> None:
    _atomic_write(path, format_matrix_csv(x))


def save_dataset(data: Dataset, directory) -> dict[str, Path]:
    """Write ``graph.tsv``, ``features.csv`` and, when present, ``labels.txt``/``split.txt``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {"graph": directory / "graph.tsv", "features": directory / "features.csv"}
    lines = []
    for i, j, w in data.graph.edges():
        lines.append(f"{i}\t{j}\n" if w == 1.0 else f"{i}\t{j}\t{w!r}\n")
    _atomic_write(paths["graph"], "".join(lines))
    save_matrix_csv(paths["features"], data.features)
    if data.labels is not None:
        paths["labels"] = directory / "labels.txt"
        _atomic_write(paths["labels"], "".join(f"{int(v)}\n" for v in data.labels))
    if data.split is not None:
        paths["split"] = directory / "split.txt"
        text = "".join(
            f"{name}: {' '.join(str(int(i)) for i in data.split[name])}\n" for name in SPLIT_NAMES
        )
        _atomic_write(paths["split"], text)
    return paths


# ---------------------------------------------------------------- synthetic


def _stratified_split(labels, blocks, rng):
    parts = {name: [] for name in SPLIT_NAMES}
    for b in range(blocks):
        idx = np.flatnonzero(labels == b)
        idx = idx[rng.permutation(idx.size)]
        k = idx.size
        n_train = max(1, k // 10)
        n_val = max(1, k // 10) if k - n_train >= 2 else 0
        parts["train"].append(idx[:n_train])
        parts["val"].append(idx[n_train:n_train + n_val])
        parts["test"].append(idx[n_train + n_val:])
    return {name: np.sort(np.concatenate(v)).astype(np.int64) for name, v in parts.items()}


def generate_sbm(spec: SbmSpec) -> Dataset:
    """Planted-partition graph with block-contiguous node ids.

    Every intra-block pair is joined with probability ``p_in`` and every
    inter-block pair with ``p_out``. Features are the one-hot block centroid
    plus iid Gaussian noise; the split is a stratified 10/10/80 per block.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    k, b = spec.nodes_per_block, spec.blocks
    n = k * b
    src, dst = [], []
    iu, ju = np.triu_indices(k, 1)
    for a in range(b):
        for c in range(a, b):
            if a == c:
                hit = rng.random(iu.size) < spec.p_in
                src.append(iu[hit] + a * k)
                dst.append(ju[hit] + a * k)
            else:
                hit = np.flatnonzero(rng.random(k * k) < spec.p_out)
                src.append(hit // k + a * k)
                dst.append(hit % k + c * k)
    graph = SparseGraph.from_edges(n, np.concatenate(src), np.concatenate(dst))
    labels = np.repeat(np.arange(b), k).astype(np.int64)
    features = np.zeros((n, spec.feature_dim))
    features[np.arange(n), labels] = 1.0
    noise = rng.standard_normal((n, spec.feature_dim))
    if spec.feature_noise > 0:
        features += spec.feature_noise * noise
    split = _stratified_split(labels, b, rng)
    return Dataset(graph, features, labels, split, b)
