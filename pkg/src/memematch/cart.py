"""CART binary decision trees with Gini splits and weakest-link pruning.

Used twice in the toolkit: as the blank-segment filter (pruned, with the
complexity parameter chosen by stratified cross-validation) and as the
per-split pair classifier (grown unpruned).

Determinism contract: split candidates are midpoints between consecutive
sorted unique feature values; equal-gain splits resolve to the lower
feature index, then the lower threshold; leaf label ties resolve to the
lexicographically smaller label.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimMismatch, EmptyData, ModelUntrained, TooFewSamples
from .rng import stream


@dataclass
class Node:
    counts: dict[str, int]
    feature: int | None = None
    threshold: float | None = None
    left: "Node | None" = None
    right: "Node | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None

    @property
    def n(self) -> int:
        return sum(self.counts.values())

    @property
    def label(self) -> str:
        return max(sorted(self.counts), key=lambda lb: self.counts[lb])

    def clone(self) -> "Node":
        return Node(
            dict(self.counts),
            self.feature,
            self.threshold,
            self.left.clone() if self.left else None,
            self.right.clone() if self.right else None,
        )


@dataclass
class TreeParams:
    min_samples_leaf: int = 1
    max_depth: int | None = None


@dataclass
class DecisionTree:
    root: Node | None
    n_features: int
    params: TreeParams = field(default_factory=TreeParams)

    def clone(self) -> "DecisionTree":
        return DecisionTree(
            self.root.clone() if self.root else None,
            self.n_features,
            TreeParams(self.params.min_samples_leaf, self.params.max_depth),
        )

    def leaf_count(self) -> int:
        return _count_leaves(self.root) if self.root else 0


@dataclass(frozen=True)
class PruneSequence:
    """Nested subtrees indexed by strictly increasing complexity alphas."""

    alphas: tuple[float, ...]
    trees: tuple[DecisionTree, ...]

    def tree_for_alpha(self, alpha: float) -> DecisionTree:
        idx = 0
        for i, a in enumerate(self.alphas):
            if a <= alpha:
                idx = i
        return self.trees[idx]


def _gini(counts: np.ndarray, n: int) -> float:
    if n == 0:
        return 0.0
    p = counts / n
    return float(1.0 - np.sum(p * p))


def _best_split(X: np.ndarray, y1: np.ndarray, min_samples_leaf: int):
    """Best Gini split over all (feature, midpoint-threshold) candidates.

    Returns (feature, threshold) or None when no candidate strictly
    reduces the weighted Gini impurity.
    """
    n = X.shape[0]
    if n < 2 * min_samples_leaf:
        return None
    order = np.argsort(X, axis=0, kind="stable")
    xs = np.take_along_axis(X, order, axis=0)
    ys = y1[order]
    total1 = int(y1.sum())
    parent = 1.0 - (total1 / n) ** 2 - ((n - total1) / n) ** 2

    nl = np.arange(1, n, dtype=np.float64)[:, None]
    nr = n - nl
    l1 = np.cumsum(ys, axis=0)[:-1].astype(np.float64)
    r1 = total1 - l1
    gini_l = 1.0 - (l1 / nl) ** 2 - ((nl - l1) / nl) ** 2
    gini_r = 1.0 - (r1 / nr) ** 2 - ((nr - r1) / nr) ** 2
    gain = parent - (nl * gini_l + nr * gini_r) / n

    valid = xs[1:] > xs[:-1]
    if min_samples_leaf > 1:
        pos_ok = (nl >= min_samples_leaf) & (nr >= min_samples_leaf)
        valid &= pos_ok
    gain = np.where(valid, gain, -np.inf)

    best = gain.max()
    if not np.isfinite(best) or best <= 0.0:
        return None
    rows, cols = np.nonzero(gain == best)
    # Tie-break: lowest feature index, then lowest threshold.
    choice = None
    for r, c in zip(rows.tolist(), cols.tolist()):
        thr = 0.5 * (xs[r, c] + xs[r + 1, c])
        key = (c, thr)
        if choice is None or key < choice[0]:
            choice = (key, (c, float(thr)))
    return choice[1]


def fit_tree(X, y, params: TreeParams | None = None) -> DecisionTree:
    """Grow a binary CART tree with greedy best-first Gini splits."""
    params = params or TreeParams()
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    y = [str(lb) for lb in y]
    if X.shape[0] == 0:
        raise EmptyData("fit_tree needs at least one sample")
    if X.shape[0] != len(y):
        raise DimMismatch(f"{X.shape[0]} samples vs {len(y)} labels")
    labels = sorted(set(y))
    if len(labels) > 2:
        raise ValueError(f"binary labels required, got {labels}")
    y1 = np.array([1 if lb == labels[-1] else 0 for lb in y], dtype=np.int64)

    def counts_of(idx: np.ndarray) -> dict[str, int]:
        ones = int(y1[idx].sum())
        c = {labels[-1]: ones} if ones else {}
        zeros = idx.size - ones
        if zeros and len(labels) > 1:
            c[labels[0]] = zeros
        elif zeros:
            c[labels[0]] = zeros
        return {k: c[k] for k in sorted(c)}

    def build(idx: np.ndarray, depth: int) -> Node:
        node = Node(counts_of(idx))
        ones = int(y1[idx].sum())
        pure = ones == 0 or ones == idx.size
        deep = params.max_depth is not None and depth >= params.max_depth
        if pure or deep:
            return node
        split = _best_split(X[idx], y1[idx], params.min_samples_leaf)
        if split is None:
            return node
        j, thr = split
        go_left = X[idx, j] <= thr
        node.feature = j
        node.threshold = thr
        node.left = build(idx[go_left], depth + 1)
        node.right = build(idx[~go_left], depth + 1)
        return node

    root = build(np.arange(X.shape[0]), 0)
    return DecisionTree(root, X.shape[1], params)


def predict(tree: DecisionTree, x) -> str:
    """Route a feature vector to its leaf and return the leaf label."""
    if tree.root is None:
        raise ModelUntrained("tree has no fitted nodes")
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (tree.n_features,):
        raise DimMismatch(f"expected {tree.n_features} features, got {x.shape}")
    node = tree.root
    while not node.is_leaf:
        node = node.left if x[node.feature] <= node.threshold else node.right
    return node.label


def predict_many(tree: DecisionTree, X) -> list[str]:
    X = np.asarray(X, dtype=np.float64)
    return [predict(tree, row) for row in X]


def _count_leaves(node: Node) -> int:
    if node.is_leaf:
        return 1
    return _count_leaves(node.left) + _count_leaves(node.right)


def _leaf_error(node: Node, n_total: int) -> float:
    return (node.n - node.counts[node.label]) / n_total


def _subtree_error(node: Node, n_total: int) -> float:
    if node.is_leaf:
        return _leaf_error(node, n_total)
    return _subtree_error(node.left, n_total) + _subtree_error(node.right, n_total)


def _weakest_links(node: Node, n_total: int, out: list, path: tuple):
    """Collect (g, preorder-path) for every internal node."""
    if node.is_leaf:
        return
    leaves = _count_leaves(node)
    g = (_leaf_error(node, n_total) - _subtree_error(node, n_total)) / (leaves - 1)
    out.append((g, path, node))
    _weakest_links(node.left, n_total, out, path + (0,))
    _weakest_links(node.right, n_total, out, path + (1,))


def _collapse_upto(root: Node, n_total: int, bound: float) -> None:
    """Repeatedly collapse the minimum-g internal node while min g <= bound."""
    while True:
        links: list = []
        _weakest_links(root, n_total, links, ())
        if not links:
            return
        g_min = min(lk[0] for lk in links)
        if g_min > bound:
            return
        # among minimum-g nodes, collapse the first in preorder (deterministic)
        _, _, node = min(
            (lk for lk in links if lk[0] == g_min), key=lambda lk: lk[1]
        )
        node.feature = None
        node.threshold = None
        node.left = None
        node.right = None


def mccp_sequence(tree: DecisionTree) -> PruneSequence:
    """Minimal cost-complexity pruning sequence, from alpha=0 to the root leaf."""
    if tree.root is None:
        raise ModelUntrained("cannot prune an unfitted tree")
    n_total = tree.root.n
    work = tree.clone()
    alphas: list[float] = []
    trees: list[DecisionTree] = []

    _collapse_upto(work.root, n_total, 0.0)
    alphas.append(0.0)
    trees.append(work.clone())

    while not work.root.is_leaf:
        links: list = []
        _weakest_links(work.root, n_total, links, ())
        alpha = min(lk[0] for lk in links)
        _collapse_upto(work.root, n_total, alpha)
        alphas.append(float(alpha))
        trees.append(work.clone())
    return PruneSequence(tuple(alphas), tuple(trees))


def _metric(objective: str, y_true: list[str], y_pred: list[str]) -> float | None:
    """Objective registry; 'precision:<label>' is TP/(TP+FP), None if no positives."""
    if objective.startswith("precision:"):
        positive = objective.split(":", 1)[1]
        tp = sum(1 for t, p in zip(y_true, y_pred) if p == positive and t == positive)
        fp = sum(1 for t, p in zip(y_true, y_pred) if p == positive and t != positive)
        if tp + fp == 0:
            return None
        return tp / (tp + fp)
    if objective == "accuracy":
        return sum(1 for t, p in zip(y_true, y_pred) if t == p) / len(y_true)
    raise ValueError(f"unknown objective {objective!r}")


def stratified_folds(y: list[str], k: int, seed: int) -> list[np.ndarray]:
    """Deterministic stratified k-fold assignment (round-robin after shuffling)."""
    folds: list[list[int]] = [[] for _ in range(k)]
    offset = 0
    for lb in sorted(set(y)):
        idx = np.array([i for i, v in enumerate(y) if v == lb])
        rng = stream(seed, f"cvfold:{lb}")
        idx = idx[rng.permutation(idx.size)]
        for pos, i in enumerate(idx.tolist()):
            folds[(offset + pos) % k].append(i)
        offset += idx.size
    return [np.array(sorted(f), dtype=np.intp) for f in folds]


def cv_select_alpha(
    X,
    y,
    k: int = 10,
    objective: str = "precision:non-blank",
    seed: int = 0,
    params: TreeParams | None = None,
    return_table: bool = False,
):
    """Pick the pruning alpha maximizing the mean CV objective.

    Candidate alphas are 0 plus the geometric midpoints of the pooled
    per-fold pruning alphas; score ties go to the larger alpha (the
    simpler tree).
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    y = [str(lb) for lb in y]
    if k < 2:
        raise TooFewSamples(f"need at least 2 folds, got {k}")
    if X.shape[0] < k:
        raise TooFewSamples(f"{X.shape[0]} samples is fewer than {k} folds")
    if len(set(y)) < 2:
        raise TooFewSamples("cross-validation needs both classes present")

    folds = stratified_folds(y, k, seed)
    all_idx = np.arange(X.shape[0])
    fold_models: list[tuple[PruneSequence, np.ndarray]] = []
    pooled: list[float] = []
    for te in folds:
        tr = np.setdiff1d(all_idx, te)
        tree = fit_tree(X[tr], [y[i] for i in tr], params)
        seq = mccp_sequence(tree)
        pooled.extend(seq.alphas)
        fold_models.append((seq, te))

    uniq = sorted(set(pooled))
    candidates = [0.0] + [
        math.sqrt(a * b) for a, b in zip(uniq[:-1], uniq[1:]) if a > 0.0
    ]
    candidates = sorted(set(candidates))

    table: list[dict] = []
    best_alpha, best_score = 0.0, -math.inf
    for alpha in candidates:
        scores = []
        for fold_id, (seq, te) in enumerate(fold_models):
            sub = seq.tree_for_alpha(alpha)
            pred = predict_many(sub, X[te])
            score = _metric(objective, [y[i] for i in te], pred)
            table.append({"alpha": alpha, "fold": fold_id, "score": score})
            if score is not None:
                scores.append(score)
        mean = sum(scores) / len(scores) if scores else -math.inf
        if mean >= best_score:
            best_alpha, best_score = alpha, mean
    if return_table:
        return best_alpha, table
    return best_alpha


# --- model file format ---

_FORMAT = "memematch-tree"
_VERSION = 1


def _nodes_preorder(node: Node, out: list) -> None:
    if node.is_leaf:
        out.append({"counts": {k: node.counts[k] for k in sorted(node.counts)}})
    else:
        out.append(
            {
                "counts": {k: node.counts[k] for k in sorted(node.counts)},
                "split": [node.feature, node.threshold],
            }
        )
        _nodes_preorder(node.left, out)
        _nodes_preorder(node.right, out)


def tree_to_dict(tree: DecisionTree) -> dict:
    nodes: list = []
    if tree.root is not None:
        _nodes_preorder(tree.root, nodes)
    return {
        "format": _FORMAT,
        "version": _VERSION,
        "n_features": tree.n_features,
        "params": {
            "min_samples_leaf": tree.params.min_samples_leaf,
            "max_depth": tree.params.max_depth,
        },
        "nodes": nodes,
    }


def tree_from_dict(doc: dict) -> DecisionTree:
    if doc.get("format") != _FORMAT or doc.get("version") != _VERSION:
        raise ValueError("not a recognized tree model document")
    nodes = doc["nodes"]
    pos = 0

    def read() -> Node:
        nonlocal pos
        raw = nodes[pos]
        pos += 1
        counts = {str(k): int(v) for k, v in raw["counts"].items()}
        if "split" in raw:
            feature, threshold = raw["split"]
            left = read()
            right = read()
            return Node(counts, int(feature), float(threshold), left, right)
        return Node(counts)

    root = read() if nodes else None
    params = TreeParams(
        int(doc["params"]["min_samples_leaf"]),
        doc["params"]["max_depth"],
    )
    return DecisionTree(root, int(doc["n_features"]), params)


def save_tree(tree: DecisionTree, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(tree_to_dict(tree), fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_tree(path) -> DecisionTree:
    with open(path, "r", encoding="utf-8") as fh:
        return tree_from_dict(json.load(fh))
