"""Random forest classifier grown from scratch on Gini impurity.

The fitness of a game is the fraction of trees whose leaf votes Human.
Each tree draws its own stream from ``derive_seed(seed, "tree", index)``,
so the forest is reproducible regardless of build order.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import asdict, dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Sequence

import numpy as np

from .features import FeatureSchema, FeatureVector, SchemaMismatch
from .seeding import derive_seed

FORMAT_HEADER = "FORGE-RF 1"


class Label(IntEnum):
    GENERATED = 0
    HUMAN = 1


class ForestError(ValueError):
    pass


class SingleClassDataset(ForestError):
    pass


class CorruptModel(ForestError):
    pass


@dataclass
class ForestParams:
    n_trees: int = 100
    max_depth: int = 8
    min_samples_split: int = 2
    # None means ceil(sqrt(d))
    features_per_split: int | None = None
    bootstrap: bool = True
    seed: int = 0

    def resolved_features(self, d: int) -> int:
        k = self.features_per_split or math.ceil(math.sqrt(d))
        if not 1 <= k <= d:
            raise ValueError(f"features_per_split={k} must be in 1..{d}")
        return k


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    schema_hash: str | None = None

    @classmethod
    def from_rows(cls, rows: Sequence[tuple[FeatureVector, Label]]) -> "Dataset":
        hashes = {v.schema.hash for v, _ in rows}
        if len(hashes) > 1:
            raise SchemaMismatch("dataset rows use different schemas")
        X = np.stack([v.values for v, _ in rows])
        y = np.asarray([int(lab) for _, lab in rows], dtype=int)
        return cls(X, y, hashes.pop() if hashes else None)

    @classmethod
    def from_arrays(cls, human: np.ndarray, generated: np.ndarray, schema_hash=None) -> "Dataset":
        X = np.vstack([human, generated])
        y = np.asarray([1] * len(human) + [0] * len(generated), dtype=int)
        return cls(X, y, schema_hash)


@dataclass
class Tree:
    """Flat binary tree. A node is a leaf iff ``feature[i] == -1``.

    ``candidates[i]`` lists the features whose thresholds were evaluated at
    internal node ``i``; it is kept so split choices can be audited.
    """

    feature: list[int] = field(default_factory=list)
    threshold: list[float] = field(default_factory=list)
    left: list[int] = field(default_factory=list)
    right: list[int] = field(default_factory=list)
    label: list[int] = field(default_factory=list)
    counts: list[tuple[int, int]] = field(default_factory=list)
    candidates: list[tuple[int, ...]] = field(default_factory=list)

    def add(self, feature=-1, threshold=0.0, label=0, counts=(0, 0), candidates=()) -> int:
        self.feature.append(feature)
        self.threshold.append(threshold)
        self.left.append(-1)
        self.right.append(-1)
        self.label.append(label)
        self.counts.append(tuple(counts))
        self.candidates.append(tuple(candidates))
        return len(self.feature) - 1

    def leaf_of(self, x) -> int:
        i = 0
        feature, threshold = self.feature, self.threshold
        while feature[i] >= 0:
            i = self.left[i] if x[feature[i]] <= threshold[i] else self.right[i]
        return i

    def predict(self, x) -> int:
        return self.label[self.leaf_of(x)]

    def __len__(self) -> int:
        return len(self.feature)


@dataclass
class Forest:
    trees: list[Tree]
    params: ForestParams
    n_features: int
    schema_hash: str | None = None

    def votes(self, x) -> list[int]:
        return [t.predict(x) for t in self.trees]


def gini(n_generated: int, n_human: int) -> float:
    n = n_generated + n_human
    if n == 0:
        return 0.0
    p = n_human / n
    return 2.0 * p * (1.0 - p)


def candidate_thresholds(values: np.ndarray) -> np.ndarray:
    """Midpoints between consecutive distinct sorted values."""
    u = np.unique(values)
    return (u[:-1] + u[1:]) / 2.0


def best_split_for_feature(x: np.ndarray, y: np.ndarray) -> tuple[float, float] | None:
    """Return ``(weighted impurity, threshold)`` of the best split, or None."""
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    n = len(xs)
    human_left = np.cumsum(ys)
    total_human = int(human_left[-1])
    best = None
    for i in range(n - 1):
        if xs[i] == xs[i + 1]:
            continue
        nl = i + 1
        nr = n - nl
        hl = int(human_left[i])
        hr = total_human - hl
        imp = (nl * gini(nl - hl, hl) + nr * gini(nr - hr, hr)) / n
        if best is None or imp < best[0]:
            best = (imp, (xs[i] + xs[i + 1]) / 2.0)
    return best


def _majority(n_generated: int, n_human: int) -> int:
    # ties go to Generated so the fitness never overstates human-likeness
    return Label.HUMAN if n_human > n_generated else Label.GENERATED


def _grow(tree: Tree, X, y, idx, depth, params: ForestParams, k: int, rng: random.Random) -> int:
    ys = y[idx]
    n_h = int(ys.sum())
    n_g = len(ys) - n_h
    counts = (n_g, n_h)
    if n_h == 0 or n_g == 0 or depth >= params.max_depth or len(idx) < params.min_samples_split:
        return tree.add(label=_majority(n_g, n_h), counts=counts)

    d = X.shape[1]
    order = list(range(d))
    rng.shuffle(order)
    best = None
    evaluated: list[int] = []
    # keep drawing batches of k features until one admits a split
    for start in range(0, d, k):
        for f in order[start : start + k]:
            evaluated.append(f)
            found = best_split_for_feature(X[idx, f], ys)
            if found is not None and (best is None or found[0] < best[0]):
                best = (found[0], found[1], f)
        if best is not None:
            break
    if best is None:
        return tree.add(label=_majority(n_g, n_h), counts=counts)

    _, thr, f = best
    node = tree.add(feature=f, threshold=float(thr), label=_majority(n_g, n_h), counts=counts,
                    candidates=evaluated)
    mask = X[idx, f] <= thr
    tree.left[node] = _grow(tree, X, y, idx[mask], depth + 1, params, k, rng)
    tree.right[node] = _grow(tree, X, y, idx[~mask], depth + 1, params, k, rng)
    return node


def fit_tree(X: np.ndarray, y: np.ndarray, params: ForestParams, tree_index: int) -> Tree:
    rng = random.Random(derive_seed(params.seed, "tree", tree_index))
    n, d = X.shape
    if params.bootstrap:
        idx = np.asarray([rng.randrange(n) for _ in range(n)], dtype=int)
    else:
        idx = np.arange(n)
    tree = Tree()
    _grow(tree, X, y, idx, 0, params, params.resolved_features(d), rng)
    return tree


def fit(dataset: Dataset, params: ForestParams | None = None) -> Forest:
    params = params or ForestParams()
    X = np.asarray(dataset.X, dtype=float)
    y = np.asarray(dataset.y, dtype=int)
    if len(set(y.tolist())) < 2:
        raise SingleClassDataset("dataset needs both Human and Generated rows")
    if params.n_trees < 1:
        raise ValueError("n_trees must be positive")
    trees = [fit_tree(X, y, params, t) for t in range(params.n_trees)]
    return Forest(trees, params, X.shape[1], dataset.schema_hash)


def _as_values(forest: Forest, vector) -> np.ndarray:
    if isinstance(vector, FeatureVector):
        if forest.schema_hash is not None and vector.schema.hash != forest.schema_hash:
            raise SchemaMismatch(
                f"vector schema {vector.schema.hash} != forest schema {forest.schema_hash}"
            )
        vector = vector.values
    x = np.asarray(vector, dtype=float)
    if x.shape != (forest.n_features,):
        raise SchemaMismatch(f"expected {forest.n_features} features, got shape {x.shape}")
    return x


def predict_proba(forest: Forest, vector) -> float:
    """Fraction of trees voting Human."""
    x = _as_values(forest, vector)
    return sum(forest.votes(x)) / len(forest.trees)


def predict_proba_many(forest: Forest, X: np.ndarray) -> np.ndarray:
    return np.asarray([predict_proba(forest, row) for row in np.asarray(X, dtype=float)])


# ---------------------------------------------------------------------------
# persistence


def dumps(forest: Forest) -> str:
    lines = [
        FORMAT_HEADER,
        f"schema {forest.schema_hash or '-'} {forest.n_features}",
        "params " + json.dumps(asdict(forest.params), sort_keys=True),
    ]
    for tree in forest.trees:
        lines.append(f"tree {len(tree)}")
        for i in range(len(tree)):
            cands = ",".join(map(str, tree.candidates[i])) or "-"
            g, h = tree.counts[i]
            lines.append(
                f"{tree.feature[i]} {tree.threshold[i]!r} {tree.left[i]} {tree.right[i]} "
                f"{tree.label[i]} {g} {h} {cands}"
            )
    lines.append(f"end {len(forest.trees)}")
    return "\n".join(lines) + "\n"


def loads(text: str) -> Forest:
    try:
        return _loads(text)
    except CorruptModel:
        raise
    except (ValueError, IndexError, KeyError, TypeError) as exc:
        raise CorruptModel(f"malformed model: {exc}") from exc


def _loads(text: str) -> Forest:
    lines = text.splitlines()
    if not lines or lines[0] != FORMAT_HEADER:
        raise CorruptModel("missing model header")
    tag, schema_hash, n_features = lines[1].split()
    if tag != "schema":
        raise CorruptModel("missing schema line")
    if not lines[2].startswith("params "):
        raise CorruptModel("missing params line")
    params = ForestParams(**json.loads(lines[2][len("params "):]))
    trees = []
    pos = 3
    while pos < len(lines) and lines[pos].startswith("tree "):
        n_nodes = int(lines[pos].split()[1])
        tree = Tree()
        body = lines[pos + 1 : pos + 1 + n_nodes]
        if len(body) != n_nodes:
            raise CorruptModel("truncated tree")
        for row in body:
            f, thr, left, right, label, g, h, cands = row.split()
            node = tree.add(
                feature=int(f), threshold=float(thr), label=int(label), counts=(int(g), int(h)),
                candidates=() if cands == "-" else tuple(int(c) for c in cands.split(",")),
            )
            tree.left[node], tree.right[node] = int(left), int(right)
        for i in range(n_nodes):
            if tree.feature[i] >= 0 and not (0 < tree.left[i] < n_nodes and 0 < tree.right[i] < n_nodes):
                raise CorruptModel("dangling child index")
            if tree.feature[i] >= int(n_features):
                raise CorruptModel("split feature out of range")
        trees.append(tree)
        pos += 1 + n_nodes
    if pos >= len(lines) or lines[pos] != f"end {len(trees)}":
        raise CorruptModel("missing or inconsistent end marker")
    if not trees:
        raise CorruptModel("model has no trees")
    return Forest(trees, params, int(n_features), None if schema_hash == "-" else schema_hash)


def save(forest: Forest, path) -> None:
    Path(path).write_text(dumps(forest), encoding="utf-8")


def load(path, schema: FeatureSchema | None = None) -> Forest:
    """Load a model; with ``schema`` given, its hash must match the file's."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise CorruptModel(str(exc)) from exc
    forest = loads(text)
    if schema is not None and forest.schema_hash != schema.hash:
        raise SchemaMismatch(f"model schema {forest.schema_hash} != {schema.hash}")
    return forest
