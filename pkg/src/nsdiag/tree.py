"""CART decision-tree induction over the 17-feature diagnosis space.

Greedy best-first construction: the leaf whose best split removes the most
Gini impurity (weighted by sample count) is expanded first, so a max-leaves
budget spends splits where they matter most. Split thresholds sit at
midpoints between consecutive distinct sorted feature values. All scores
derive from integer class counts, which makes fitting invariant to the
order of training rows on tie-free data.

Ties are broken deterministically: equal split scores prefer the lowest
feature index, then the lowest threshold; equal-score leaf expansions go in
node-creation order; leaf-label ties go to COV-.
"""

import heapq
import json

import numpy as np

from .errors import ConfigError, CorruptModelError, DataError
from .labels import COV_NEG, COV_POS, DIAGNOSES, TREE_FEATURE_NAMES


def _gini(n_pos, n_neg):
    n = n_pos + n_neg
    if n == 0:
        return 0.0
    p = n_pos / n
    q = n_neg / n
    return 1.0 - p * p - q * q


def _majority(n_pos, n_neg):
    return COV_POS if n_pos > n_neg else COV_NEG


class Leaf:
    """Terminal node holding the predicted label and its training counts."""

    __slots__ = ("label", "counts")

    def __init__(self, label, counts):
        if label not in DIAGNOSES:
            raise DataError(f"unknown leaf label {label!r}")
        n_pos, n_neg = counts
        if n_pos < 0 or n_neg < 0:
            raise DataError("leaf counts must be nonnegative")
        self.label = label
        self.counts = (int(n_pos), int(n_neg))

    def __eq__(self, other):
        return (
            isinstance(other, Leaf)
            and self.label == other.label
            and self.counts == other.counts
        )

    def __repr__(self):
        return f"Leaf({self.label!r}, {self.counts})"


class Split:
    """Internal node: value <= threshold routes left, > routes right."""

    __slots__ = ("feature", "threshold", "left", "right")

    def __init__(self, feature, threshold, left, right):
        self.feature = feature
        self.threshold = float(threshold)
        self.left = left
        self.right = right

    def __eq__(self, other):
        return (
            isinstance(other, Split)
            and self.feature == other.feature
            and self.threshold == other.threshold
            and self.left == other.left
            and self.right == other.right
        )

    def __repr__(self):
        return f"Split({self.feature!r}, {self.threshold}, {self.left!r}, {self.right!r})"


class DecisionTree:
    """Immutable fitted tree plus the constraints it was grown under."""

    __slots__ = ("root", "feature_names", "max_depth", "max_leaves")

    def __init__(self, root, feature_names=TREE_FEATURE_NAMES, max_depth=None, max_leaves=None):
        self.root = root
        self.feature_names = tuple(feature_names)
        self.max_depth = max_depth
        self.max_leaves = max_leaves

    def __eq__(self, other):
        return (
            isinstance(other, DecisionTree)
            and self.root == other.root
            and self.feature_names == other.feature_names
        )


def leaf_count(tree):
    def count(node):
        if isinstance(node, Leaf):
            return 1
        return count(node.left) + count(node.right)

    return count(tree.root)


def depth(tree):
    """Edges on the longest root-to-leaf path; a lone leaf has depth 0."""

    def walk(node):
        if isinstance(node, Leaf):
            return 0
        return 1 + max(walk(node.left), walk(node.right))

    return walk(tree.root)


def _best_split(columns, rows, labels):
    """Best (score, feature index, threshold) for one node, or None.

    ``columns[j]`` is the sorted list of (value, row index) for feature j
    restricted to this node's rows. Scores are absolute weighted impurity
    decreases: n*gini(parent) - n_l*gini(left) - n_r*gini(right).
    """
    n_pos = sum(1 for r in rows if labels[r] == COV_POS)
    n_neg = len(rows) - n_pos
    parent = (n_pos + n_neg) * _gini(n_pos, n_neg)
    if n_pos == 0 or n_neg == 0:
        return None

    best = None
    for j, col in enumerate(columns):
        left_pos = 0
        left_neg = 0
        for i in range(len(col) - 1):
            value, r = col[i]
            if labels[r] == COV_POS:
                left_pos += 1
            else:
                left_neg += 1
            nxt = col[i + 1][0]
            if nxt == value:
                continue
            right_pos = n_pos - left_pos
            right_neg = n_neg - left_neg
            score = (
                parent
                - (left_pos + left_neg) * _gini(left_pos, left_neg)
                - (right_pos + right_neg) * _gini(right_pos, right_neg)
            )
            if score <= 0.0:
                continue
            threshold = (value + nxt) / 2.0
            key = (-score, j, threshold)
            if best is None or key < best:
                best = key
    if best is None:
        return None
    return (-best[0], best[1], best[2])


def fit(data, max_depth, max_leaves, seed=0):
    """Grow a tree on (FeatureVector, label) pairs.

    ``seed`` is accepted for interface symmetry; construction is fully
    deterministic and never draws from it.
    """
    del seed
    if not data:
        raise ConfigError("empty training set")
    if max_depth < 1:
        raise ConfigError(f"max_depth must be >= 1, got {max_depth}")
    if max_leaves < 2:
        raise ConfigError(f"max_leaves must be >= 2, got {max_leaves}")
    for _, label in data:
        if label not in DIAGNOSES:
            raise DataError(f"unknown training label {label!r}")

    matrix = [x.tree_values() for x, _ in data]
    labels = [label for _, label in data]
    n_features = len(TREE_FEATURE_NAMES)

    def node_columns(rows):
        return [sorted((matrix[r][j], r) for r in rows) for j in range(n_features)]

    def make_leaf(rows):
        n_pos = sum(1 for r in rows if labels[r] == COV_POS)
        return Leaf(_majority(n_pos, len(rows) - n_pos), (n_pos, len(rows) - n_pos))

    # Each heap entry is a pending expansion of one current leaf, carrying
    # a setter that splices the replacement split into the parent. Heap
    # keys (-score, order) are unique, so setters are never compared.
    root_rows = list(range(len(data)))
    root_holder = [make_leaf(root_rows)]
    heap = []
    order = 0

    def push_candidate(setter, rows, node_depth):
        nonlocal order
        if node_depth >= max_depth:
            return
        found = _best_split(node_columns(rows), rows, labels)
        if found is None:
            return
        score, j, threshold = found
        heapq.heappush(heap, (-score, order, setter, rows, node_depth, j, threshold))
        order += 1

    def child_setter(split, side):
        return lambda node: setattr(split, side, node)

    push_candidate(lambda node: root_holder.__setitem__(0, node), root_rows, 0)
    leaves = 1
    while heap and leaves < max_leaves:
        _, _, setter, rows, node_depth, j, threshold = heapq.heappop(heap)
        left_rows = [r for r in rows if matrix[r][j] <= threshold]
        right_rows = [r for r in rows if matrix[r][j] > threshold]
        split = Split(
            feature=TREE_FEATURE_NAMES[j],
            threshold=threshold,
            left=make_leaf(left_rows),
            right=make_leaf(right_rows),
        )
        setter(split)
        leaves += 1
        push_candidate(child_setter(split, "left"), left_rows, node_depth + 1)
        push_candidate(child_setter(split, "right"), right_rows, node_depth + 1)

    return DecisionTree(
        root=root_holder[0],
        feature_names=TREE_FEATURE_NAMES,
        max_depth=max_depth,
        max_leaves=max_leaves,
    )


def predict(tree, x):
    """Route a FeatureVector to its leaf label."""
    index = {name: i for i, name in enumerate(tree.feature_names)}
    values = x.tree_values()
    node = tree.root
    while isinstance(node, Split):
        if node.feature not in index:
            raise CorruptModelError(f"tree references unknown feature {node.feature!r}")
        node = node.left if values[index[node.feature]] <= node.threshold else node.right
    return node.label


def sweep(data, param, values, eval_split, seed=0):
    """Accuracy curve over one constraint; one shared train/eval split.

    Returns [(value, held-out accuracy)] in the given order.
    """
    if param not in ("max_leaves", "max_depth"):
        raise ConfigError(f"unknown sweep parameter {param!r}")
    if not values:
        raise ConfigError("no sweep values given")
    floor = 2 if param == "max_leaves" else 1
    for v in values:
        if v < floor:
            raise ConfigError(f"{param} value {v} below minimum {floor}")
    if not (0.0 < eval_split < 1.0):
        raise ConfigError(f"eval_split {eval_split} outside (0, 1)")
    if len(data) < 2:
        raise ConfigError("sweep needs at least 2 samples")

    perm = np.random.default_rng(seed).permutation(len(data))
    n_eval = max(1, int(round(len(data) * eval_split)))
    n_eval = min(n_eval, len(data) - 1)
    eval_rows = [data[i] for i in perm[:n_eval]]
    train_rows = [data[i] for i in perm[n_eval:]]

    results = []
    for v in values:
        if param == "max_leaves":
            tree = fit(train_rows, max_depth=_SWEEP_DEPTH_CAP, max_leaves=v, seed=seed)
        else:
            tree = fit(train_rows, max_depth=v, max_leaves=_SWEEP_LEAVES_CAP, seed=seed)
        hits = sum(1 for x, label in eval_rows if predict(tree, x) == label)
        results.append((v, hits / len(eval_rows)))
    return results


_SWEEP_DEPTH_CAP = 64
_SWEEP_LEAVES_CAP = 1 << 20


def write_sweep_csv(path, param, results):
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write("param,value,accuracy\n")
        for value, accuracy in results:
            f.write(f"{param},{value},{repr(accuracy)}\n")


def _node_to_json(node):
    if isinstance(node, Leaf):
        return {"label": node.label, "counts": list(node.counts)}
    return {
        "feature": node.feature,
        "threshold": node.threshold,
        "left": _node_to_json(node.left),
        "right": _node_to_json(node.right),
    }


def _node_from_json(obj):
    if not isinstance(obj, dict):
        raise CorruptModelError(f"tree node must be an object, got {type(obj).__name__}")
    if "label" in obj:
        try:
            return Leaf(obj["label"], tuple(obj["counts"]))
        except (KeyError, TypeError, ValueError, DataError) as exc:
            raise CorruptModelError(f"bad leaf node: {exc}") from exc
    try:
        return Split(
            feature=obj["feature"],
            threshold=float(obj["threshold"]),
            left=_node_from_json(obj["left"]),
            right=_node_from_json(obj["right"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptModelError(f"bad split node: {exc}") from exc


def tree_to_json(tree):
    """Canonical JSON text: sorted keys, 2-space indent, trailing newline."""
    payload = {
        "feature_names": list(tree.feature_names),
        "max_depth": tree.max_depth,
        "max_leaves": tree.max_leaves,
        "root": _node_to_json(tree.root),
    }
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def save_tree(path, tree):
    with open(path, "w", encoding="utf-8") as f:
        f.write(tree_to_json(tree))


def load_tree(path):
    with open(path, "r", encoding="utf-8") as f:
        try:
            payload = json.load(f)
        except json.JSONDecodeError as exc:
            raise CorruptModelError(f"unreadable tree file {path}: {exc}") from exc
    try:
        return DecisionTree(
            root=_node_from_json(payload["root"]),
            feature_names=tuple(payload["feature_names"]),
            max_depth=payload.get("max_depth"),
            max_leaves=payload.get("max_leaves"),
        )
    except KeyError as exc:
        raise CorruptModelError(f"tree file {path} missing field {exc}") from exc
