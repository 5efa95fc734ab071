"""Synthetic task generators.

Four tasks share one container, `TaskDataset`:

* the exact two-bit table (four deterministic rows, kept as a weighted
  distribution so closed-form accuracies stay exact),
* the Gaussian-centroid scenario family (two features, four classes, with
  per-axis separation controls),
* the four-feature / four-class blob task where each feature pair carries
  one latent bit,
* the multi-condition consensus task (binary healthy/sick label, simulated
  annotator panel, noisy feature projections).

Every generator is a pure function of its spec and seed. Datasets carry
`machine_view` / `expert_view` index tuples naming which feature columns the
standard model and the simulated expert are allowed to read.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigurationError

SPLIT_TAGS = ("train", "cal", "test")

# class index <-> latent bit pair: y = 2*b1 + b2
_BITS = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=np.float64)

SYNTH_NOISE_SD = 0.8
CONSENSUS_CROSSTALK = 0.3
CONSENSUS_FEATURE_NOISE_SD = 1.0


@dataclass
class LabeledSample:
    x: np.ndarray
    y: int
    h: Optional[np.ndarray] = None
    consensus: Optional[np.ndarray] = None


@dataclass
class TaskDataset:
    X: np.ndarray                      # (n, feature_dim)
    y: np.ndarray                      # (n,) class indices < K
    K: int
    split: np.ndarray                  # (n,) tags in SPLIT_TAGS
    H: Optional[np.ndarray] = None     # (n, feedback_dim) once materialized
    weights: Optional[np.ndarray] = None
    machine_view: tuple = ()
    expert_view: tuple = ()
    consensus: Optional[np.ndarray] = None   # (n, n_conditions)
    conditions: Optional[np.ndarray] = None  # latent ground-truth conditions

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        if self.X.ndim == 1:
            self.X = self.X[:, None]
        self.y = np.asarray(self.y, dtype=np.int64)
        self.split = np.asarray(self.split, dtype="<U5")
        if not self.machine_view:
            self.machine_view = tuple(range(self.X.shape[1]))
        if self.n and self.y.max(initial=0) >= self.K:
            raise ConfigurationError("label out of range for K")
        if self.H is not None:
            self.H = np.asarray(self.H, dtype=np.float64)
            if self.H.ndim == 1:
                self.H = self.H[:, None]

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.X.shape[1]

    @property
    def feedback_dim(self) -> int:
        return 0 if self.H is None else self.H.shape[1]

    def sample(self, i: int) -> LabeledSample:
        return LabeledSample(
            x=self.X[i],
            y=int(self.y[i]),
            h=None if self.H is None else self.H[i],
            consensus=None if self.consensus is None else self.consensus[i],
        )

    @property
    def samples(self) -> list:
        return [self.sample(i) for i in range(self.n)]

    def subset(self, tag: str) -> "TaskDataset":
        if tag not in SPLIT_TAGS:
            raise ConfigurationError(f"unknown split tag {tag!r}")
        m = self.split == tag
        return replace(
            self,
            X=self.X[m],
            y=self.y[m],
            split=self.split[m],
            H=None if self.H is None else self.H[m],
            weights=None if self.weights is None else self.weights[m],
            consensus=None if self.consensus is None else self.consensus[m],
            conditions=None if self.conditions is None else self.conditions[m],
        )

    def with_feedback(self, H: np.ndarray) -> "TaskDataset":
        H = np.asarray(H, dtype=np.float64)
        return replace(self, H=H if H.ndim == 2 else H[:, None])

    def machine_inputs(self) -> np.ndarray:
        return self.X[:, list(self.machine_view)]

    def expert_inputs(self) -> np.ndarray:
        return self.X[:, list(self.expert_view)]


@dataclass
class ScenarioSpec:
    """Two-feature, four-class Gaussian scenario.

    Centroids sit at (+-(sep + machine_shift), +-(sep + expert_shift));
    growing a shift sharpens the corresponding latent bit.
    """

    sep: float = 1.2
    noise_sd: float = 0.4
    machine_shift: float = 0.0
    expert_shift: float = 0.0
    n: int = 4000
    seed: int = 0

    def __post_init__(self):
        if self.sep <= 0:
            raise ConfigurationError("sep must be > 0")
        if self.noise_sd <= 0:
            raise ConfigurationError("noise_sd must be > 0")
        if self.n != 0 and self.n < 4:
            raise ConfigurationError("n must be 0 (empty) or >= 4")


@dataclass
class ConsensusSpec:
    """Multi-condition consensus task (healthy iff every condition absent)."""

    n_conditions: int = 4
    n_annotators: int = 20
    condition_signal: float = 0.45
    n: int = 4000
    seed: int = 0
    annotator_error: float = 0.06
    prevalence: float = 0.3

    def __post_init__(self):
        if self.n_conditions < 1:
            raise ConfigurationError("n_conditions must be >= 1")
        if self.n_annotators < 1:
            raise ConfigurationError("n_annotators must be >= 1")
        if not 0.0 <= self.annotator_error < 0.5:
            raise ConfigurationError("annotator_error must be in [0, 0.5)")
        if not 0.0 < self.prevalence < 1.0:
            raise ConfigurationError("prevalence must be in (0, 1)")
        if self.n < 0:
            raise ConfigurationError("n must be >= 0")


def make_toy_table(n_per_row: int = 1) -> TaskDataset:
    """The exact two-bit table: (x1, x2) -> y = 2*x1 + x2, equal weights.

    With the default `n_per_row=1` the dataset is the distribution itself
    (four rows, weight 1/4 each, all conditional label probabilities equal
    to one). Larger values replicate rows so SGD pipelines can split and
    train on it.
    """
    if n_per_row < 1:
        raise ConfigurationError("n_per_row must be >= 1")
    X = np.repeat(_BITS, n_per_row, axis=0)
    y = (2 * X[:, 0] + X[:, 1]).astype(np.int64)
    n = len(y)
    return TaskDataset(
        X=X,
        y=y,
        K=4,
        split=np.array(["train"] * n),
        H=X[:, [1]].copy(),  # the expert-side feature
        weights=np.full(n, 1.0 / n),
        machine_view=(0,),
        expert_view=(1,),
    )


def scenario_centroids(spec: ScenarioSpec) -> np.ndarray:
    """(4, 2) centroid matrix, class order 0..3."""
    half = np.array([spec.sep + spec.machine_shift, spec.sep + spec.expert_shift])
    return (2.0 * _BITS - 1.0) * half


def make_scenario(spec: ScenarioSpec) -> TaskDataset:
    """Sample the Gaussian-centroid scenario; deterministic under spec.seed."""
    rng = np.random.default_rng(spec.seed)
    y = rng.integers(0, 4, size=spec.n)
    X = scenario_centroids(spec)[y] + rng.normal(0.0, spec.noise_sd, size=(spec.n, 2))
    return TaskDataset(
        X=X,
        y=y,
        K=4,
        split=np.array(["train"] * spec.n),
        H=X[:, [1]].copy() if spec.n else np.zeros((0, 1)),
        machine_view=(0,),
        expert_view=(1,),
    )


def synth_centroids() -> np.ndarray:
    """(4, 4) centroids: features 0-1 carry bit one, features 2-3 bit two."""
    b = 2.0 * _BITS - 1.0
    return np.column_stack([b[:, 0], b[:, 0], b[:, 1], b[:, 1]])


def make_synth(seed: int, n: int, noise_sd: float = SYNTH_NOISE_SD) -> TaskDataset:
    """Four-feature, four-class blob task.

    The first feature pair is informative about one latent bit, the second
    pair about the other; the standard model reads the first pair and the
    simulated expert the second, so neither side can solve the task alone.
    """
    if n < 8:
        raise ConfigurationError("make_synth needs n >= 8")
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 4, size=n)
    X = synth_centroids()[y] + rng.normal(0.0, noise_sd, size=(n, 4))
    return TaskDataset(
        X=X,
        y=y,
        K=4,
        split=np.array(["train"] * n),
        machine_view=(0, 1),
        expert_view=(2, 3),
    )


def make_consensus_task(spec: ConsensusSpec) -> TaskDataset:
    """Binary screening task with a simulated annotator panel.

    Each sample has `n_conditions` latent binary conditions; the label is
    healthy (1) iff all are absent. Every annotator reports each condition
    with symmetric error `annotator_error`; the per-condition consensus is
    the fraction of annotators reporting it and is stored for feedback
    construction. Observed features are linear projections of the condition
    pattern (strength `condition_signal`, fixed cross-talk) plus unit noise,
    so a feature-only model stays imperfect.
    """
    rng = np.random.default_rng(spec.seed)
    k = spec.n_conditions
    conditions = (rng.random((spec.n, k)) < spec.prevalence).astype(np.float64)
    y = (conditions.sum(axis=1) == 0).astype(np.int64)

    report_prob = conditions * (1.0 - spec.annotator_error) \
        + (1.0 - conditions) * spec.annotator_error
    reports = rng.random((spec.n, spec.n_annotators, k)) < report_prob[:, None, :]
    consensus = reports.mean(axis=1)

    signed = 2.0 * conditions - 1.0
    cross = CONSENSUS_CROSSTALK * (signed.sum(axis=1, keepdims=True) - signed)
    X = spec.condition_signal * signed + cross \
        + rng.normal(0.0, CONSENSUS_FEATURE_NOISE_SD, size=(spec.n, k))
    return TaskDataset(
        X=X,
        y=y,
        K=2,
        split=np.array(["train"] * spec.n),
        machine_view=tuple(range(k)),
        expert_view=(),
        consensus=consensus,
        conditions=conditions,
    )


def split(ds: TaskDataset, ratios, seed: int) -> TaskDataset:
    """Assign train/cal/test tags by seeded shuffle; counts match ratios
    within one sample (largest-remainder rounding)."""
    ratios = [float(r) for r in ratios]
    if len(ratios) != 3 or any(r < 0 for r in ratios):
        raise ConfigurationError("ratios must be three non-negative numbers")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigurationError(f"ratios must sum to 1, got {sum(ratios)}")
    n = ds.n
    exact = [r * n for r in ratios]
    counts = [int(np.floor(e)) for e in exact]
    remainders = [e - c for e, c in zip(exact, counts)]
    for _ in range(n - sum(counts)):
        i = int(np.argmax(remainders))
        counts[i] += 1
        remainders[i] = -1.0
    order = np.random.default_rng(seed).permutation(n)
    tags = np.empty(n, dtype="<U5")
    start = 0
    for tag, c in zip(SPLIT_TAGS, counts):
        tags[order[start:start + c]] = tag
        start += c
    return replace(ds, split=tags)


def gaussian_posterior(X: np.ndarray, centroids: np.ndarray,
                       noise_sd: float) -> np.ndarray:
    """Exact class posterior for isotropic Gaussian classes, uniform prior.

    Used as the independent oracle when checking what any feature subset can
    achieve on the generated tasks.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    d2 = ((X[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    logp = -d2 / (2.0 * noise_sd ** 2)
    logp -= logp.max(axis=1, keepdims=True)
    p = np.exp(logp)
    return p / p.sum(axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# Columnar plain-text serialization
# ---------------------------------------------------------------------------


def save_dataset(ds: TaskDataset, path) -> None:
    """Write the dataset as delimited text.

    First line is a metadata comment (K, feature views); second line the
    header naming feature columns, the label, any feedback columns, and the
    split tag. Optional weight / consensus / condition columns follow the
    core schema when present.
    """
    path = Path(path)
    meta = (
        f"# askdefer-dataset K={ds.K}"
        f" machine_view={','.join(map(str, ds.machine_view))}"
        f" expert_view={','.join(map(str, ds.expert_view))}"
    )
    cols = [f"x{i}" for i in range(ds.feature_dim)] + ["y"]
    blocks = [ds.X, ds.y[:, None].astype(np.float64)]
    if ds.H is not None:
        cols += [f"h{i}" for i in range(ds.feedback_dim)]
        blocks.append(ds.H)
    str_cols = ["split"]
    str_blocks = [ds.split]
    if ds.weights is not None:
        cols += ["weight"]
        blocks.append(ds.weights[:, None])
    if ds.consensus is not None:
        cols += [f"p{i}" for i in range(ds.consensus.shape[1])]
        blocks.append(ds.consensus)
    if ds.conditions is not None:
        cols += [f"c{i}" for i in range(ds.conditions.shape[1])]
        blocks.append(ds.conditions)
    num = np.hstack(blocks) if ds.n else np.zeros((0, len(cols)))
    with path.open("w") as fh:
        fh.write(meta + "\n")
        fh.write(",".join(cols + str_cols) + "\n")
        for i in range(ds.n):
            row = [format(v, ".17g") for v in num[i]]
            for sb in str_blocks:
                row.append(str(sb[i]))
            fh.write(",".join(row) + "\n")


def load_dataset(path) -> TaskDataset:
    path = Path(path)
    with path.open() as fh:
        meta = fh.readline().strip()
        header = fh.readline().strip().split(",")
        rows = [ln.strip().split(",") for ln in fh if ln.strip()]
    if not meta.startswith("# askdefer-dataset"):
        raise ConfigurationError(f"{path} is not an askdefer dataset file")
    fields = dict(part.split("=", 1) for part in meta[2:].split() if "=" in part)
    K = int(fields["K"])

    def view(key):
        raw = fields.get(key, "")
        return tuple(int(v) for v in raw.split(",") if v != "")

    idx = {name: i for i, name in enumerate(header)}
    x_cols = [c for c in header if c[0] == "x" and c[1:].isdigit()]
    h_cols = [c for c in header if c[0] == "h" and c[1:].isdigit()]
    p_cols = [c for c in header if c[0] == "p" and c[1:].isdigit()]
    c_cols = [c for c in header if c[0] == "c" and c[1:].isdigit()]

    def grab(cols):
        if not cols or not rows:
            return None if not cols else np.zeros((len(rows), len(cols)))
        return np.array([[float(r[idx[c]]) for c in cols] for r in rows])

    X = grab(x_cols)
    if X is None:
        X = np.zeros((len(rows), len(x_cols)))
    y = np.array([int(float(r[idx["y"]])) for r in rows], dtype=np.int64)
    weights = None
    if "weight" in idx:
        weights = np.array([float(r[idx["weight"]]) for r in rows])
    return TaskDataset(
        X=X,
        y=y,
        K=K,
        split=np.array([r[idx["split"]] for r in rows], dtype="<U5"),
        H=grab(h_cols),
        weights=weights,
        machine_view=view("machine_view"),
        expert_view=view("expert_view"),
        consensus=grab(p_cols),
        conditions=grab(c_cols),
    )
