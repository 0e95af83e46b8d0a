"""Datasets: on-disk format, synthetic SBM generator, splits and metrics.

Directory layout::

    edges.tsv      u<TAB>v per line, 0-based, each undirected edge once
    features.bin   b"CFG1", uint64 n, uint64 d (little endian), then n*d <f8
    features.csv   alternative text form: "n d" header, one comma row per node
    labels.tsv     id<TAB>label, or id<TAB>b0,b1,... for multi-label tasks
    splits.json    {"train": [...], "val": [...], "test": [...]}
                   or {"seed": s, "protocol": "stratified-60-20-20"}
    meta.json      optional: name, metric, num_classes, pipeline_override,
                   removed (deleted node ids)
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .errors import MaskOverlap, MissingFile, ShapeMismatch, SingleClassAuc, ValidationError
from .graph import Graph

FEATURE_MAGIC = b"CFG1"
SPLIT_PROTOCOL = "stratified-60-20-20"


def philox(seed):
    """The package-wide named PRNG: Philox counter-based generator keyed on ``seed``."""
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass(frozen=True, eq=False)
class Dataset:
    graph: Graph
    X: np.ndarray
    y: np.ndarray
    train_mask: np.ndarray
    val_mask: np.ndarray
    test_mask: np.ndarray
    num_classes: int
    metric: str = "accuracy"
    name: str = "dataset"
    pipeline_override: str | None = None
    removed: np.ndarray = field(default=None)

    def __post_init__(self):
        n = self.graph.n
        if self.removed is None:
            object.__setattr__(self, "removed", np.zeros(n, dtype=bool))
        if self.X.shape[0] != n:
            raise ShapeMismatch(f"features have {self.X.shape[0]} rows, graph has {n} nodes")
        if len(self.y) != n:
            raise ShapeMismatch("label vector length differs from node count")
        for m in (self.train_mask, self.val_mask, self.test_mask, self.removed):
            if m.shape != (n,) or m.dtype != bool:
                raise ShapeMismatch("masks must be boolean vectors of length n")
        if (self.train_mask & self.val_mask).any() or (self.train_mask & self.test_mask).any() \
                or (self.val_mask & self.test_mask).any():
            raise MaskOverlap("train/val/test masks overlap")
        if self.metric not in ("accuracy", "roc-auc"):
            raise ValidationError(f"unknown metric {self.metric!r}")

    @property
    def n(self):
        return self.graph.n

    @property
    def multilabel(self):
        return self.y.ndim == 2

    @property
    def train_ids(self):
        return np.flatnonzero(self.train_mask)

    def targets(self):
        """n x C target matrix: one-hot rows, zero rows where the label is unknown."""
        if self.multilabel:
            return self.y.astype(np.float64)
        Y = np.zeros((self.n, self.num_classes))
        known = self.y >= 0
        Y[np.flatnonzero(known), self.y[known]] = 1.0
        return Y

    def with_(self, **kw):
        return replace(self, **kw)


@dataclass(frozen=True)
class SbmSpec:
    n: int = 400
    num_classes: int = 2
    p_in: float = 0.05
    p_out: float = 0.005
    feature_dim: int = 16
    class_mean_separation: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not (0 <= self.p_in <= 1 and 0 <= self.p_out <= 1):
            raise ValidationError("edge probabilities must lie in [0, 1]")
        if self.n < 1 or self.num_classes < 1 or self.feature_dim < 1:
            raise ValidationError("n, num_classes and feature_dim must be positive")


def _pairs_within(rng, size, p):
    total = size * (size - 1) // 2
    k = rng.binomial(total, p) if total else 0
    if k == 0:
        return np.zeros((0, 2), dtype=np.int64)
    idx = rng.choice(total, size=k, replace=False).astype(np.int64)
    # invert idx = i*size - i*(i+1)/2 + (j - i - 1) for i < j
    b = 2 * size - 1
    i = np.floor((b - np.sqrt(float(b) ** 2 - 8.0 * idx)) / 2).astype(np.int64)
    first = lambda r: r * size - r * (r + 1) // 2
    i = np.where(first(i) > idx, i - 1, i)
    i = np.where(first(i + 1) <= idx, i + 1, i)
    j = idx - first(i) + i + 1
    return np.stack([i, j], axis=1)


def _pairs_across(rng, na, nb, p):
    total = na * nb
    k = rng.binomial(total, p) if total else 0
    if k == 0:
        return np.zeros((0, 2), dtype=np.int64)
    idx = rng.choice(total, size=k, replace=False).astype(np.int64)
    return np.stack([idx // nb, idx % nb], axis=1)


def stratified_split(y, seed, fractions=(0.6, 0.2, 0.2), eligible=None):
    """Per-class shuffled train/val/test masks."""
    y = np.asarray(y)
    rng = philox(seed)
    n = len(y)
    masks = [np.zeros(n, dtype=bool) for _ in range(3)]
    ok = np.ones(n, dtype=bool) if eligible is None else np.asarray(eligible, dtype=bool)
    key = y if y.ndim == 1 else np.zeros(n, dtype=np.int64)
    for c in np.unique(key[ok]):
        ids = np.flatnonzero((key == c) & ok)
        ids = ids[rng.permutation(len(ids))]
        n_tr = int(round(fractions[0] * len(ids)))
        n_va = int(round(fractions[1] * len(ids)))
        masks[0][ids[:n_tr]] = True
        masks[1][ids[n_tr:n_tr + n_va]] = True
        masks[2][ids[n_tr + n_va:]] = True
    return tuple(masks)


def generate_sbm(spec: SbmSpec, name=None) -> Dataset:
    """Stochastic block model with Gaussian class-conditional features."""
    rng = philox(spec.seed)
    C = spec.num_classes
    y = rng.permutation(np.arange(spec.n) % C).astype(np.int64)
    members = [np.flatnonzero(y == c) for c in range(C)]
    chunks = []
    for a in range(C):
        pa = _pairs_within(rng, len(members[a]), spec.p_in)
        chunks.append(members[a][pa])
        for b in range(a + 1, C):
            pab = _pairs_across(rng, len(members[a]), len(members[b]), spec.p_out)
            chunks.append(np.stack([members[a][pab[:, 0]], members[b][pab[:, 1]]], axis=1))
    edges = np.concatenate(chunks) if chunks else np.zeros((0, 2), dtype=np.int64)
    g = Graph.from_edges(spec.n, edges)

    d = spec.feature_dim
    means = np.zeros((C, d))
    if d >= C:
        means[np.arange(C), np.arange(C)] = 1.0
    else:
        raw = rng.standard_normal((C, d))
        means = raw / np.linalg.norm(raw, axis=1, keepdims=True)
    means *= spec.class_mean_separation / np.sqrt(2.0)
    X = means[y] + rng.standard_normal((spec.n, d))
    tr, va, te = stratified_split(y, spec.seed)
    return Dataset(g, X, y, tr, va, te, C, "accuracy",
                   name or f"sbm-n{spec.n}-c{C}-s{spec.seed}")


# --- metrics ---------------------------------------------------------------

def roc_auc(scores, labels):
    """Mann-Whitney AUC with average ranks for ties."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClassAuc("AUC needs both classes present")
    ranks = rankdata(scores, method="average")
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def predict_labels(pred):
    """argmax with ties going to the lowest class id."""
    return np.argmax(np.asarray(pred), axis=1)


def evaluate(pred, ds: Dataset, mask) -> float:
    mask = np.asarray(mask, dtype=bool) & ~ds.removed
    if not mask.any():
        raise ValidationError("evaluation mask is empty")
    pred = np.asarray(pred)
    if ds.metric == "accuracy":
        if pred.ndim == 1:
            raise ShapeMismatch("accuracy needs an n x C prediction matrix")
        return float(np.mean(predict_labels(pred[mask]) == ds.y[mask]))
    if ds.multilabel:
        aucs = []
        for t in range(ds.y.shape[1]):
            yt = ds.y[mask, t]
            if 0 < yt.sum() < len(yt):
                aucs.append(roc_auc(pred[mask, t], yt))
        if not aucs:
            raise SingleClassAuc("no task has both classes under the mask")
        return float(np.mean(aucs))
    scores = pred[mask] if pred.ndim == 1 else pred[mask, -1]
    return roc_auc(scores, ds.y[mask] == ds.num_classes - 1)


# --- file IO ---------------------------------------------------------------

def write_features(path, X, binary=True):
    X = np.asarray(X, dtype="<f8")
    path = Path(path)
    if binary:
        with open(path, "wb") as fh:
            fh.write(FEATURE_MAGIC)
            fh.write(struct.pack("<QQ", *X.shape))
            fh.write(np.ascontiguousarray(X).tobytes())
    else:
        with open(path, "w") as fh:
            fh.write(f"{X.shape[0]} {X.shape[1]}\n")
            for row in X:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_features(path):
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(4)
        if head == FEATURE_MAGIC:
            n, d = struct.unpack("<QQ", fh.read(16))
            buf = fh.read()
            if len(buf) != 8 * n * d:
                raise ShapeMismatch(f"{path}: expected {n}x{d} fp64 values")
            return np.frombuffer(buf, dtype="<f8").reshape(n, d).astype(np.float64)
    lines = path.read_text().splitlines()
    try:
        n, d = (int(t) for t in lines[0].split())
    except (IndexError, ValueError):
        raise ShapeMismatch(f"{path}: missing 'n d' header") from None
    rows = [ln for ln in lines[1:] if ln.strip()]
    if len(rows) != n:
        raise ShapeMismatch(f"{path}: header says {n} rows, found {len(rows)}")
    X = np.array([[float(t) for t in r.split(",")] for r in rows], dtype=np.float64).reshape(n, -1)
    if X.shape[1] != d:
        raise ShapeMismatch(f"{path}: header says {d} columns, found {X.shape[1]}")
    return X


def _read_pairs(path):
    out = []
    for ln in Path(path).read_text().splitlines():
        ln = ln.strip()
        if not ln or ln.startswith("#"):
            continue
        parts = ln.split("\t")
        if len(parts) != 2:
            raise ValidationError(f"{path}: expected two tab-separated fields in {ln!r}")
        out.append(parts)
    return out


def load_dataset(path) -> Dataset:
    path = Path(path)
    for req in ("edges.tsv", "labels.tsv", "splits.json"):
        if not (path / req).exists():
            raise MissingFile(f"{path / req} not found")
    if (path / "features.bin").exists():
        X = read_features(path / "features.bin")
    elif (path / "features.csv").exists():
        X = read_features(path / "features.csv")
    else:
        raise MissingFile(f"{path} has neither features.bin nor features.csv")
    n = X.shape[0]
    meta = json.loads((path / "meta.json").read_text()) if (path / "meta.json").exists() else {}

    try:
        edges = np.array([[int(u), int(v)] for u, v in _read_pairs(path / "edges.tsv")], dtype=np.int64)
    except ValueError as exc:
        raise ValidationError(f"bad edge line: {exc}") from None
    if len(edges) and (edges.min() < 0 or edges.max() >= n):
        raise ShapeMismatch("edge endpoint outside [0, n)")
    g = Graph.from_edges(n, edges.reshape(-1, 2))

    pairs = _read_pairs(path / "labels.tsv")
    multilabel = any("," in lab for _, lab in pairs)
    if multilabel:
        width = len(pairs[0][1].split(","))
        y = np.zeros((n, width), dtype=np.int64)
    else:
        y = np.full(n, -1, dtype=np.int64)
    seen = np.zeros(n, dtype=bool)
    for sid, lab in pairs:
        i = int(sid)
        if not 0 <= i < n:
            raise ShapeMismatch(f"label for node {i} outside [0, {n})")
        if multilabel:
            bits = [int(t) for t in lab.split(",")]
            if len(bits) != y.shape[1]:
                raise ShapeMismatch("multi-label rows have different widths")
            y[i] = bits
        else:
            y[i] = int(lab)
        seen[i] = True

    splits = json.loads((path / "splits.json").read_text())
    removed = np.zeros(n, dtype=bool)
    if meta.get("removed"):
        removed[np.asarray(meta["removed"], dtype=np.int64)] = True
    if "protocol" in splits:
        if splits["protocol"] != SPLIT_PROTOCOL:
            raise ValidationError(f"unknown split protocol {splits['protocol']!r}")
        tr, va, te = stratified_split(y, splits["seed"], eligible=seen & ~removed)
    else:
        masks = []
        for key in ("train", "val", "test"):
            if key not in splits:
                raise ValidationError(f"splits.json lacks {key!r}")
            m = np.zeros(n, dtype=bool)
            ids = np.asarray(splits[key], dtype=np.int64)
            if len(ids) and (ids.min() < 0 or ids.max() >= n):
                raise ShapeMismatch(f"{key} split id outside [0, {n})")
            if len(np.unique(ids)) != len(ids):
                raise MaskOverlap(f"{key} split lists a node twice")
            m[ids] = True
            masks.append(m)
        tr, va, te = masks
    if (tr & ~seen).any():
        raise ValidationError("every training node needs a label")

    if multilabel:
        C = y.shape[1]
        metric = meta.get("metric", "roc-auc")
    else:
        C = int(meta.get("num_classes", int(y.max()) + 1))
        metric = meta.get("metric", "accuracy")
    return Dataset(g, X, y, tr, va, te, C, metric, meta.get("name", path.name),
                   meta.get("pipeline_override"), removed)


def save_dataset(ds: Dataset, path, binary=True):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    with open(path / "edges.tsv", "w") as fh:
        for u, v in ds.graph.edges:
            fh.write(f"{u}\t{v}\n")
    stale = path / ("features.csv" if binary else "features.bin")
    if stale.exists():
        stale.unlink()
    write_features(path / ("features.bin" if binary else "features.csv"), ds.X, binary)
    with open(path / "labels.tsv", "w") as fh:
        for i in range(ds.n):
            if ds.multilabel:
                fh.write(f"{i}\t{','.join(str(int(b)) for b in ds.y[i])}\n")
            elif ds.y[i] >= 0:
                fh.write(f"{i}\t{int(ds.y[i])}\n")
    splits = {k: np.flatnonzero(m).tolist()
              for k, m in (("train", ds.train_mask), ("val", ds.val_mask), ("test", ds.test_mask))}
    (path / "splits.json").write_text(json.dumps(splits))
    meta = {"name": ds.name, "metric": ds.metric, "num_classes": ds.num_classes,
            "pipeline_override": ds.pipeline_override,
            "removed": np.flatnonzero(ds.removed).tolist()}
    (path / "meta.json").write_text(json.dumps(meta))
