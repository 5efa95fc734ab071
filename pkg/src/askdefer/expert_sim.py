"""Simulated experts and feedback construction.

Three expert kinds:

* `feature_subset_tree` — a Gini decision tree fit on a declared subset of
  feature columns (it never reads anything else),
* `bernoulli_consensus` — a panel-vote expert: sample each condition from
  its consensus probability, report healthy iff nothing was sampled,
* `oracle_feature` — an expert that simply reveals its private feature
  columns.

Feedback modes map experts onto the feedback vector h:

* `ltd_feedback`   -> one-hot of the expert's predicted class (dim K),
* `unc_feedback`   -> the consensus probability vector (dim n_conditions),
* `feature_feedback` -> the expert-only raw features.

Tree experts are immutable after fitting. Consensus sampling uses a
caller-owned generator, never global random state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .datagen import LabeledSample, TaskDataset
from .errors import ConfigurationError

FEEDBACK_MODES = ("ltd_feedback", "unc_feedback", "feature_feedback")


# ---------------------------------------------------------------------------
# Gini decision tree on a feature subset
# ---------------------------------------------------------------------------


@dataclass
class TreeNode:
    feature: int = -1          # global column index; -1 for leaves
    threshold: float = 0.0
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None
    value: int = 0             # majority label at this node
    label_dist: Optional[np.ndarray] = None  # empirical label distribution


def _gini(counts: np.ndarray) -> float:
    n = counts.sum()
    if n == 0:
        return 0.0
    p = counts / n
    return float(1.0 - np.sum(p * p))


def _best_split(X: np.ndarray, y: np.ndarray, feature_indices, K: int):
    """Best (feature, threshold) by Gini gain via a sorted sweep."""
    n = len(y)
    parent = _gini(np.bincount(y, minlength=K))
    best_gain, best_feat, best_thr = 0.0, None, None
    for j in feature_indices:
        col = X[:, j]
        order = np.argsort(col, kind="stable")
        sv, sy = col[order], y[order]
        change = np.nonzero(sv[:-1] != sv[1:])[0]
        if len(change) == 0:
            continue
        onehot = np.zeros((n, K))
        onehot[np.arange(n), sy] = 1.0
        cum = np.cumsum(onehot, axis=0)
        left = cum[change]
        right = cum[-1] - left
        n_left = (change + 1).astype(np.float64)
        n_right = n - n_left
        g_left = 1.0 - np.sum((left / n_left[:, None]) ** 2, axis=1)
        g_right = 1.0 - np.sum((right / n_right[:, None]) ** 2, axis=1)
        child = (n_left * g_left + n_right * g_right) / n
        gains = parent - child
        k = int(np.argmax(gains))
        if gains[k] > best_gain + 1e-12:
            best_gain = float(gains[k])
            best_feat = j
            best_thr = float((sv[change[k]] + sv[change[k] + 1]) / 2.0)
    return best_feat, best_thr


def _grow(X, y, feature_indices, K, depth, max_depth) -> TreeNode:
    counts = np.bincount(y, minlength=K)
    node = TreeNode(value=int(np.argmax(counts)),  # ties go to the smallest label
                    label_dist=counts / counts.sum())
    if depth >= max_depth or len(np.unique(y)) == 1:
        return node
    feat, thr = _best_split(X, y, feature_indices, K)
    if feat is None:
        return node
    mask = X[:, feat] <= thr
    node.feature, node.threshold = feat, thr
    node.left = _grow(X[mask], y[mask], feature_indices, K, depth + 1, max_depth)
    node.right = _grow(X[~mask], y[~mask], feature_indices, K, depth + 1, max_depth)
    return node


@dataclass
class TreeExpert:
    """Decision tree on its declared feature columns.

    With `stochastic=True` a prediction is sampled from the leaf's empirical
    label distribution instead of its majority class; a caller-owned rng is
    then required. This models an expert that guesses uniformly among
    classes its features cannot distinguish, rather than committing to a
    fixed tie-break.
    """

    kind = "feature_subset_tree"
    feature_indices: tuple
    max_depth: int
    K: int
    root: TreeNode = field(repr=False, default=None)
    stochastic: bool = False

    def _leaf(self, x: np.ndarray) -> TreeNode:
        node = self.root
        while node.feature >= 0:
            node = node.left if x[node.feature] <= node.threshold else node.right
        return node

    def predict(self, x: np.ndarray,
                rng: Optional[np.random.Generator] = None) -> int:
        leaf = self._leaf(x)
        if not self.stochastic:
            return leaf.value
        if rng is None:
            raise ConfigurationError("stochastic tree expert needs a rng")
        return int(rng.choice(self.K, p=leaf.label_dist))

    def predict_batch(self, X: np.ndarray,
                      rng: Optional[np.random.Generator] = None) -> np.ndarray:
        return np.array([self.predict(x, rng) for x in np.asarray(X)],
                        dtype=np.int64)


@dataclass
class ConsensusExpert:
    kind = "bernoulli_consensus"
    n_conditions: int
    K: int = 2

    def predict_from_consensus(self, p: np.ndarray, rng: np.random.Generator) -> int:
        sampled = rng.random(len(p)) < np.asarray(p)
        return 0 if sampled.any() else 1

    def predict_batch_from_consensus(self, P: np.ndarray,
                                     rng: np.random.Generator) -> np.ndarray:
        sampled = rng.random(P.shape) < P
        return np.where(sampled.any(axis=1), 0, 1).astype(np.int64)


@dataclass
class FeatureOracleExpert:
    kind = "oracle_feature"
    feature_indices: tuple


def fit_expert(ds: TaskDataset, feature_indices, max_depth: int = 3,
               stochastic: bool = False) -> TreeExpert:
    """Greedy Gini tree on the training split, restricted to the given
    feature columns."""
    feature_indices = tuple(int(i) for i in feature_indices)
    if any(i < 0 or i >= ds.feature_dim for i in feature_indices):
        raise ConfigurationError("feature index out of range")
    train = ds.subset("train")
    if train.n == 0:
        raise ConfigurationError("training split is empty")
    root = _grow(train.X, train.y, feature_indices, ds.K, 0, max_depth)
    return TreeExpert(feature_indices=feature_indices, max_depth=max_depth,
                      K=ds.K, root=root, stochastic=stochastic)


def expert_predict(expert, x: np.ndarray,
                   rng: Optional[np.random.Generator] = None,
                   consensus: Optional[np.ndarray] = None) -> int:
    """Single-sample expert prediction.

    Tree experts are deterministic in x; consensus experts sample their
    conditions and need the sample's consensus vector plus a generator.
    """
    if isinstance(expert, TreeExpert):
        x = np.asarray(x)
        if x.shape[-1] <= max(expert.feature_indices):
            raise ConfigurationError("input dimension does not match expert")
        return expert.predict(x, rng)
    if isinstance(expert, ConsensusExpert):
        if consensus is None:
            raise ConfigurationError("consensus expert needs a consensus vector")
        if rng is None:
            raise ConfigurationError("consensus expert needs a caller-owned rng")
        return expert.predict_from_consensus(consensus, rng)
    raise ConfigurationError(f"{type(expert).__name__} cannot predict")


def feedback_dim_for(expert, mode: str) -> int:
    if mode == "ltd_feedback":
        return expert.K
    if mode == "unc_feedback":
        return expert.n_conditions
    if mode == "feature_feedback":
        return len(expert.feature_indices)
    raise ConfigurationError(f"unknown feedback mode {mode!r}")


def make_feedback(expert, mode: str, sample: LabeledSample,
                  rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Materialize the feedback vector h for one sample."""
    if mode == "ltd_feedback":
        if not isinstance(expert, (TreeExpert, ConsensusExpert)):
            raise ConfigurationError("ltd_feedback needs a predicting expert")
        pred = expert_predict(expert, sample.x, rng=rng, consensus=sample.consensus)
        h = np.zeros(expert.K)
        h[pred] = 1.0
        return h
    if mode == "unc_feedback":
        if not isinstance(expert, ConsensusExpert):
            raise ConfigurationError("unc_feedback needs a consensus expert")
        if sample.consensus is None:
            raise ConfigurationError("sample carries no consensus probabilities")
        return np.asarray(sample.consensus, dtype=np.float64).copy()
    if mode == "feature_feedback":
        if not isinstance(expert, FeatureOracleExpert):
            raise ConfigurationError("feature_feedback needs an oracle_feature expert")
        return np.asarray(sample.x)[list(expert.feature_indices)].astype(np.float64)
    raise ConfigurationError(f"unknown feedback mode {mode!r}")


def materialize_feedback(ds: TaskDataset, expert, mode: str,
                         rng: Optional[np.random.Generator] = None) -> TaskDataset:
    """Fill H for a whole dataset (vectorized per mode)."""
    if mode == "ltd_feedback":
        if isinstance(expert, TreeExpert):
            if expert.stochastic and rng is None:
                raise ConfigurationError(
                    "stochastic tree expert needs a caller-owned rng")
            preds = expert.predict_batch(ds.X, rng)
        elif isinstance(expert, ConsensusExpert):
            if ds.consensus is None:
                raise ConfigurationError("dataset carries no consensus probabilities")
            if rng is None:
                raise ConfigurationError("consensus expert needs a caller-owned rng")
            preds = expert.predict_batch_from_consensus(ds.consensus, rng)
        else:
            raise ConfigurationError("ltd_feedback needs a predicting expert")
        H = np.zeros((ds.n, expert.K))
        H[np.arange(ds.n), preds] = 1.0
        return ds.with_feedback(H)
    if mode == "unc_feedback":
        if not isinstance(expert, ConsensusExpert):
            raise ConfigurationError("unc_feedback needs a consensus expert")
        if ds.consensus is None:
            raise ConfigurationError("dataset carries no consensus probabilities")
        return ds.with_feedback(ds.consensus.copy())
    if mode == "feature_feedback":
        if not isinstance(expert, FeatureOracleExpert):
            raise ConfigurationError("feature_feedback needs an oracle_feature expert")
        return ds.with_feedback(ds.X[:, list(expert.feature_indices)])
    raise ConfigurationError(f"unknown feedback mode {mode!r}")


# ---------------------------------------------------------------------------
# Plain-text serialization
# ---------------------------------------------------------------------------


def _write_nodes(node: TreeNode, nodes: list) -> int:
    idx = len(nodes)
    nodes.append(None)
    left = right = -1
    if node.feature >= 0:
        left = _write_nodes(node.left, nodes)
        right = _write_nodes(node.right, nodes)
    nodes[idx] = (node.feature, node.threshold, left, right, node.value,
                  node.label_dist)
    return idx


def expert_to_text(expert) -> str:
    if isinstance(expert, TreeExpert):
        nodes: list = []
        _write_nodes(expert.root, nodes)
        lines = [
            "kind feature_subset_tree",
            "K " + str(expert.K),
            "max_depth " + str(expert.max_depth),
            "stochastic " + str(int(expert.stochastic)),
            "indices " + " ".join(map(str, expert.feature_indices)),
        ]
        for f, t, l, r, v, dist in nodes:
            dist_txt = " ".join(format(p, ".17g") for p in dist)
            lines.append(f"node {f} {format(t, '.17g')} {l} {r} {v} {dist_txt}")
        return "\n".join(lines) + "\n"
    if isinstance(expert, ConsensusExpert):
        return (f"kind bernoulli_consensus\nn_conditions {expert.n_conditions}\n"
                f"K {expert.K}\n")
    if isinstance(expert, FeatureOracleExpert):
        return ("kind oracle_feature\nindices "
                + " ".join(map(str, expert.feature_indices)) + "\n")
    raise ConfigurationError(f"cannot serialize {type(expert).__name__}")


def expert_from_text(text: str):
    lines = [ln.split() for ln in text.strip().splitlines() if ln.strip()]
    kind = lines[0][1]
    fields = {ln[0]: ln[1:] for ln in lines if ln[0] != "node"}
    if kind == "bernoulli_consensus":
        return ConsensusExpert(n_conditions=int(fields["n_conditions"][0]),
                               K=int(fields["K"][0]))
    if kind == "oracle_feature":
        return FeatureOracleExpert(
            feature_indices=tuple(int(v) for v in fields.get("indices", [])))
    if kind != "feature_subset_tree":
        raise ConfigurationError(f"unknown expert kind {kind!r}")
    raw = [ln[1:] for ln in lines if ln[0] == "node"]
    nodes = [TreeNode(feature=int(r[0]), threshold=float(r[1]), value=int(r[4]),
                      label_dist=np.array([float(p) for p in r[5:]]))
             for r in raw]
    for node, r in zip(nodes, raw):
        if node.feature >= 0:
            node.left, node.right = nodes[int(r[2])], nodes[int(r[3])]
    return TreeExpert(
        feature_indices=tuple(int(v) for v in fields["indices"]),
        max_depth=int(fields["max_depth"][0]),
        K=int(fields["K"][0]),
        root=nodes[0],
        stochastic=bool(int(fields.get("stochastic", ["0"])[0])),
    )
