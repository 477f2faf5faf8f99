"""
Classifier Library

CART decision tree over 36-feature instances: Gini split search with
midpoint thresholds, prediction, and the versioned text model format.
"""

import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import BinaryIO, List, Optional, Sequence, Tuple, Union

import numpy as np

from errors import DomainError, ModelLoadError, TrainingError
from trace_model import FEATURE_COUNT, MODE_ORDER, FeatureVector, Mode

logger = logging.getLogger(__name__)

MODEL_HEADER = "cellmode-tree v1"
N_CLASSES = len(MODE_ORDER)
# Gini decreases at or below this are rounding noise, not a real gain
MIN_DECREASE = 1e-12


@dataclass(frozen=True)
class TreeParams:
    """
    Tree growth limits

    Args:
        max_depth: Longest root-to-leaf path, in edges
        min_leaf: Fewest training instances a leaf may hold
        min_split: Fewest instances a node needs to be split (default 2 * min_leaf)
        feature_subset: Columns the split search may use (all 36 when None)
    """

    max_depth: int = 12
    min_leaf: int = 5
    min_split: Optional[int] = None
    feature_subset: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        if self.min_split is None:
            object.__setattr__(self, "min_split", 2 * self.min_leaf)
        if self.max_depth < 1:
            raise DomainError("max_depth must be >= 1")
        if self.min_leaf < 1:
            raise DomainError("min_leaf must be >= 1")
        if self.min_split < 2:
            raise DomainError("min_split must be >= 2")
        if self.feature_subset is not None:
            subset = tuple(sorted(set(int(f) for f in self.feature_subset)))
            if not subset or subset[0] < 0 or subset[-1] >= FEATURE_COUNT:
                raise DomainError(f"feature_subset must be a non-empty subset of 0..{FEATURE_COUNT - 1}")
            object.__setattr__(self, "feature_subset", subset)

    @property
    def features(self) -> Tuple[int, ...]:
        return self.feature_subset if self.feature_subset is not None else tuple(range(FEATURE_COUNT))

    def with_features(self, feature_subset: Optional[Sequence[int]]) -> "TreeParams":
        return replace(self, feature_subset=None if feature_subset is None else tuple(feature_subset))


@dataclass(frozen=True)
class Node:
    """Internal node when feature is set, leaf otherwise"""

    node_id: int
    counts: Tuple[int, int, int]
    feature: Optional[int] = None
    threshold: Optional[float] = None
    left: Optional[int] = None
    right: Optional[int] = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None

    @property
    def prediction(self) -> Mode:
        # First maximum wins, i.e. ties go to the earlier mode
        return MODE_ORDER[int(np.argmax(self.counts))]


@dataclass(frozen=True)
class DecisionTree:
    """Nodes in preorder; node 0 is the root"""

    nodes: Tuple[Node, ...]

    def leaf_for(self, features: Sequence[float]) -> Node:
        node = self.nodes[0]
        while not node.is_leaf:
            node = self.nodes[node.left if features[node.feature] <= node.threshold else node.right]
        return node

    @property
    def depth(self) -> int:
        def walk(node_id: int) -> int:
            node = self.nodes[node_id]
            if node.is_leaf:
                return 0
            return 1 + max(walk(node.left), walk(node.right))
        return walk(0)

    @property
    def leaves(self) -> List[Node]:
        return [n for n in self.nodes if n.is_leaf]


def gini_impurity(class_counts: Sequence[int]) -> float:
    """
    Gini impurity 1 - sum(p_i^2) of a class count vector

    Raises:
        DomainError: when every count is zero
    """
    counts = np.asarray(class_counts, dtype=float)
    if np.any(counts < 0):
        raise DomainError("class counts must be non-negative")
    total = counts.sum()
    if total <= 0:
        raise DomainError("gini impurity of an empty node")
    p = counts / total
    return float(1.0 - np.sum(p ** 2))


def _gini_rows(counts: np.ndarray) -> np.ndarray:
    """Row-wise Gini for an (m, 3) array of positive-total counts"""
    totals = counts.sum(axis=1, keepdims=True)
    return 1.0 - np.sum((counts / totals) ** 2, axis=1)


def _best_split(
    X: np.ndarray,
    y: np.ndarray,
    idx: np.ndarray,
    features: Sequence[int],
    min_leaf: int,
) -> Optional[Tuple[float, int, float]]:
    """Best (gini decrease, feature, threshold) for the node holding idx, None if no split exists"""
    n = idx.size
    labels = y[idx]
    parent = _gini_rows(np.bincount(labels, minlength=N_CLASSES)[None, :].astype(float))[0]
    onehot = np.eye(N_CLASSES)[labels]

    best: Optional[Tuple[float, int, float]] = None
    # Candidate cut after sorted position i: left holds positions 0..i
    positions = np.arange(min_leaf - 1, n - min_leaf)
    if positions.size == 0:
        return None

    for f in features:
        values = X[idx, f]
        order = np.argsort(values, kind="stable")
        v = values[order]
        cut = positions[v[positions] < v[positions + 1]]
        if cut.size == 0:
            continue

        left_counts = np.cumsum(onehot[order], axis=0)[cut]
        right_counts = onehot.sum(axis=0) - left_counts
        n_left = (cut + 1).astype(float)
        n_right = n - n_left
        weighted = (n_left * _gini_rows(left_counts) + n_right * _gini_rows(right_counts)) / n
        decrease = parent - weighted

        k = int(np.argmax(decrease))
        if best is None or decrease[k] > best[0]:
            lo, hi = v[cut[k]], v[cut[k] + 1]
            threshold = (lo + hi) / 2.0
            if threshold >= hi:
                threshold = lo
            best = (float(decrease[k]), int(f), float(threshold))
    return best


def train(instances: Sequence[FeatureVector], params: TreeParams = TreeParams(), seed: int = 0) -> DecisionTree:
    """
    Grow a CART tree on labeled instances

    Args:
        instances: Labeled feature vectors
        params: Growth limits
        seed: Reserved; training is deterministic

    Returns:
        The trained tree

    Raises:
        TrainingError: unlabeled input or fewer than min_split instances
    """
    if any(inst.label is None for inst in instances):
        raise TrainingError("training instances must all be labeled")
    if len(instances) < params.min_split:
        raise TrainingError(f"need at least {params.min_split} instances to train, got {len(instances)}")

    X = np.array([inst.features for inst in instances], dtype=float)
    y = np.array([inst.label.index for inst in instances], dtype=np.int64)
    features = params.features
    nodes: List[Optional[Node]] = []

    def grow(idx: np.ndarray, depth: int) -> int:
        node_id = len(nodes)
        nodes.append(None)
        counts = tuple(int(c) for c in np.bincount(y[idx], minlength=N_CLASSES))

        split = None
        if depth < params.max_depth and idx.size >= params.min_split and max(counts) < idx.size:
            split = _best_split(X, y, idx, features, params.min_leaf)
        if split is None or split[0] <= MIN_DECREASE:
            nodes[node_id] = Node(node_id, counts)
            return node_id

        _, feature, threshold = split
        go_left = X[idx, feature] <= threshold
        left = grow(idx[go_left], depth + 1)
        right = grow(idx[~go_left], depth + 1)
        nodes[node_id] = Node(node_id, counts, feature, threshold, left, right)
        return node_id

    grow(np.arange(len(instances)), 0)
    tree = DecisionTree(tuple(nodes))
    logger.info("Trained tree on %d instances: %d nodes, depth %d", len(instances), len(tree.nodes), tree.depth)
    return tree


def predict(tree: DecisionTree, features: Sequence[float]) -> Mode:
    """
    Classify one 36-feature vector; feature <= threshold goes left

    Raises:
        DomainError: vector of the wrong length
    """
    if len(features) != FEATURE_COUNT:
        raise DomainError(f"expected {FEATURE_COUNT} features, got {len(features)}")
    return tree.leaf_for(features).prediction


def predict_all(tree: DecisionTree, instances: Sequence[FeatureVector]) -> List[Mode]:
    return [predict(tree, inst.features) for inst in instances]


# ---- Model file ----

def dumps_model(tree: DecisionTree) -> str:
    """Text form: header line, then one N or L line per node in id order"""
    lines = [MODEL_HEADER]
    for node in tree.nodes:
        if node.is_leaf:
            lines.append(f"L {node.node_id} {node.counts[0]} {node.counts[1]} {node.counts[2]}")
        else:
            lines.append(f"N {node.node_id} {node.feature} {node.threshold!r} {node.left} {node.right}")
    return "\n".join(lines) + "\n"


def save_model(tree: DecisionTree, sink: BinaryIO) -> None:
    sink.write(dumps_model(tree).encode("utf-8"))


def _int(text: str, line_no: int) -> int:
    try:
        return int(text)
    except ValueError:
        raise ModelLoadError(f"line {line_no}: bad integer '{text}'")


def loads_model(text: str) -> DecisionTree:
    """
    Parse the text model format, failing closed on any inconsistency

    Raises:
        ModelLoadError: wrong version, malformed or truncated content
    """
    if not text.endswith("\n"):
        raise ModelLoadError("model file is truncated (no final newline)")
    lines = text.split("\n")[:-1]
    if not lines or lines[0] != MODEL_HEADER:
        found = lines[0] if lines else ""
        if found.startswith("cellmode-tree "):
            raise ModelLoadError(f"unsupported model version '{found}'")
        raise ModelLoadError("not a cellmode model file")

    # Internal node counts are not stored; they are rebuilt from the leaves below
    parsed: List[Node] = []
    for line_no, line in enumerate(lines[1:], start=2):
        parts = line.split()
        if not parts:
            raise ModelLoadError(f"line {line_no}: empty line")
        node_id = len(parsed)
        if parts[0] == "L" and len(parts) == 5:
            if _int(parts[1], line_no) != node_id:
                raise ModelLoadError(f"line {line_no}: expected node id {node_id}")
            counts = tuple(_int(p, line_no) for p in parts[2:])
            if min(counts) < 0:
                raise ModelLoadError(f"line {line_no}: negative class count")
            parsed.append(Node(node_id, counts))
        elif parts[0] == "N" and len(parts) == 6:
            if _int(parts[1], line_no) != node_id:
                raise ModelLoadError(f"line {line_no}: expected node id {node_id}")
            feature = _int(parts[2], line_no)
            if not 0 <= feature < FEATURE_COUNT:
                raise ModelLoadError(f"line {line_no}: feature index {feature} out of range")
            try:
                threshold = float(parts[3])
            except ValueError:
                raise ModelLoadError(f"line {line_no}: bad threshold '{parts[3]}'")
            if not math.isfinite(threshold):
                raise ModelLoadError(f"line {line_no}: non-finite threshold")
            left, right = _int(parts[4], line_no), _int(parts[5], line_no)
            parsed.append(Node(node_id, (0, 0, 0), feature, threshold, left, right))
        else:
            raise ModelLoadError(f"line {line_no}: malformed node '{line}'")

    if not parsed:
        raise ModelLoadError("model has no nodes")

    # Preorder layout: children follow their parent, and every non-root node has one parent
    referenced = [0] * len(parsed)
    for node in parsed:
        if node.is_leaf:
            continue
        for child in (node.left, node.right):
            if not node.node_id < child < len(parsed):
                raise ModelLoadError(f"node {node.node_id} references missing node {child}")
            referenced[child] += 1
    if referenced[0] != 0 or any(r != 1 for r in referenced[1:]):
        raise ModelLoadError("model nodes do not form a tree")

    nodes = list(parsed)
    for node in reversed(parsed):
        if not node.is_leaf:
            left, right = nodes[node.left].counts, nodes[node.right].counts
            nodes[node.node_id] = Node(
                node.node_id, tuple(a + b for a, b in zip(left, right)),
                node.feature, node.threshold, node.left, node.right,
            )
    return DecisionTree(tuple(nodes))


def load_model(stream: BinaryIO) -> DecisionTree:
    data = stream.read()
    try:
        text = data.decode("utf-8") if isinstance(data, bytes) else data
    except UnicodeDecodeError as e:
        raise ModelLoadError(f"model file is not UTF-8: {e}") from e
    return loads_model(text)


def save_model_file(tree: DecisionTree, path: Union[str, Path]) -> None:
    with open(path, "wb") as f:
        save_model(tree, f)


def load_model_file(path: Union[str, Path]) -> DecisionTree:
    with open(path, "rb") as f:
        return load_model(f)
