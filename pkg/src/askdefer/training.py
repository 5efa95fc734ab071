"""Training pipelines for the three methods.

* `ltd`       — standard model f and selector s trained jointly on the
                cross-entropy defer mixture against a fixed expert; the
                enriched slot is an identity-on-feedback stub so evaluation
                treats deferral as reading the expert's one-hot feedback.
* `lta_seq`   — the enriched model g is trained first on (x, h); f and s are
                then trained with the same defer mixture, treating g's
                predicted labels as the expert.
* `lta_joint` — f and g are pretrained independently with cross-entropy
                (mandatory: skipping it collapses onto one head), then
                f, g, s are optimized together on the joint surrogate.

All randomness flows from the plan's seed; a (dataset, plan) pair fully
determines the returned bundle.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .datagen import TaskDataset
from .errors import ConfigurationError, TrainingError
from .expert_sim import ConsensusExpert, TreeExpert
from .losses import (DeferCostConfig, ce_batch, joint_batch, ltd_mixture_batch)
from .nn_core import (DenseNet, FilmNet, SgdConfig, backward_batch,
                      film_backward_batch, film_forward_batch, forward_batch,
                      init_film_net, init_net, minibatch_indices, net_from_text,
                      net_to_text, sgd_step_)

METHODS = ("ltd", "lta_seq", "lta_joint")
G_CONDITIONING = ("concat", "film")


@dataclass
class TrainPlan:
    method: str = "lta_joint"
    pretrain_epochs: int = 50
    main_epochs: int = 100
    sgd: SgdConfig = field(default_factory=SgdConfig)
    cost: DeferCostConfig = field(default_factory=DeferCostConfig)
    hidden: int = 32
    g_conditioning: str = "concat"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigurationError(f"unknown method {self.method!r}")
        if self.pretrain_epochs < 0 or self.main_epochs < 0:
            raise ConfigurationError("epochs must be >= 0")
        if self.g_conditioning not in G_CONDITIONING:
            raise ConfigurationError(
                f"unknown g conditioning {self.g_conditioning!r}")

    @property
    def total_epochs(self) -> int:
        return self.pretrain_epochs + self.main_epochs


def default_plan(method: str, epochs: int = 150, lr: float = 0.001,
                 batch_size: int = 128, seed: int = 0,
                 cost: Optional[DeferCostConfig] = None, hidden: int = 32,
                 g_conditioning: str = "concat",
                 pretrain_epochs: Optional[int] = None) -> TrainPlan:
    """Standard epoch split: no pretraining for ltd, a third of the budget
    for the staged methods (50 of 150 at the default budget). Pass
    `pretrain_epochs` to override, e.g. 200 of 300 for the consensus task."""
    if pretrain_epochs is None:
        pre = 0 if method == "ltd" else epochs // 3
    else:
        pre = 0 if method == "ltd" else min(pretrain_epochs, epochs)
    return TrainPlan(
        method=method,
        pretrain_epochs=pre,
        main_epochs=epochs - pre,
        sgd=SgdConfig(learning_rate=lr, epochs=epochs, batch_size=batch_size,
                      seed=seed),
        cost=cost or DeferCostConfig(),
        hidden=hidden,
        g_conditioning=g_conditioning,
    )


@dataclass
class Normalizer:
    """Per-column standardization fitted on the training split."""

    mean: np.ndarray
    sd: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.sd


def fit_normalizer(X: np.ndarray) -> Normalizer:
    X = np.asarray(X, dtype=np.float64)
    return Normalizer(mean=X.mean(axis=0), sd=np.maximum(X.std(axis=0), 1e-9))


@dataclass
class ModelBundle:
    f: DenseNet
    g: Union[DenseNet, FilmNet]
    s: DenseNet
    machine_view: tuple
    method: str = "lta_joint"
    feedback_mode: Optional[str] = None
    seed: int = 0
    delta: float = 0.0
    g_conditioning: str = "concat"
    epochs_spent: int = 0
    x_norm: Optional[Normalizer] = None
    h_norm: Optional[Normalizer] = None
    history: dict = field(default_factory=dict)

    def _xm(self, X: np.ndarray) -> np.ndarray:
        Xm = np.asarray(X, dtype=np.float64)[:, list(self.machine_view)]
        return self.x_norm.apply(Xm) if self.x_norm else Xm

    def _h(self, H: np.ndarray) -> np.ndarray:
        H = np.asarray(H, dtype=np.float64)
        return self.h_norm.apply(H) if self.h_norm else H

    def f_logits(self, X: np.ndarray) -> np.ndarray:
        return forward_batch(self.f, self._xm(X))

    def g_logits(self, X: np.ndarray, H: np.ndarray) -> np.ndarray:
        Xm, H = self._xm(X), self._h(H)
        if self.g_conditioning == "film":
            return film_forward_batch(self.g, Xm, H)
        return forward_batch(self.g, np.hstack([Xm, H]))

    def s_logits(self, X: np.ndarray) -> np.ndarray:
        return forward_batch(self.s, self._xm(X))[:, 0]

    def predict_f(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.f_logits(X), axis=1)

    def predict_g(self, X: np.ndarray, H: np.ndarray) -> np.ndarray:
        return np.argmax(self.g_logits(X, H), axis=1)


def _streams(seed: int):
    """Independent named generators derived from one seed."""
    names = ("init_f", "init_g", "init_s", "shuffle", "expert")
    return {name: np.random.default_rng([seed, i]) for i, name in enumerate(names)}


def _check_finite(vals: np.ndarray, epoch: int, stage: str) -> None:
    if not np.all(np.isfinite(vals)):
        raise TrainingError(f"{stage}: non-finite loss at epoch {epoch}")


def _train_ce(net: DenseNet, X: np.ndarray, y: np.ndarray, epochs: int,
              lr: float, batch_size: int, rng: np.random.Generator,
              stage: str = "ce") -> None:
    for epoch in range(epochs):
        for idx in minibatch_indices(len(y), batch_size, rng):
            logits = forward_batch(net, X[idx])
            vals, dlogits = ce_batch(logits, y[idx])
            _check_finite(vals, epoch, stage)
            sgd_step_(net, backward_batch(net, X[idx], dlogits / len(idx)), lr)


def _train_mixture(f: DenseNet, s: DenseNet, X: np.ndarray, y: np.ndarray,
                   expert_onehot: np.ndarray, epochs: int, lr: float,
                   batch_size: int, rng: np.random.Generator,
                   cost: DeferCostConfig, stage: str = "mixture") -> None:
    for epoch in range(epochs):
        for idx in minibatch_indices(len(y), batch_size, rng):
            f_log = forward_batch(f, X[idx])
            s_log = forward_batch(s, X[idx])[:, 0]
            vals, df, ds = ltd_mixture_batch(f_log, s_log, expert_onehot[idx],
                                             y[idx], cost)
            _check_finite(vals, epoch, stage)
            b = len(idx)
            sgd_step_(f, backward_batch(f, X[idx], df / b), lr)
            sgd_step_(s, backward_batch(s, X[idx], (ds / b)[:, None]), lr)


def _onehot(preds: np.ndarray, K: int) -> np.ndarray:
    out = np.zeros((len(preds), K))
    out[np.arange(len(preds)), preds] = 1.0
    return out


def _identity_feedback_head(machine_dim: int, K: int) -> DenseNet:
    """A fixed net on (x, h) whose logits are the feedback block itself."""
    from .nn_core import Layer

    w = np.vstack([np.zeros((machine_dim, K)), np.eye(K)])
    return DenseNet([Layer(w, np.zeros(K), "identity")])


def train_ltd(ds: TaskDataset, expert, plan: TrainPlan) -> ModelBundle:
    """Defer baseline: f and s on the CE defer mixture against the expert."""
    if expert is None or not isinstance(expert, (TreeExpert, ConsensusExpert)):
        raise ConfigurationError("train_ltd needs a predicting expert")
    train = ds.subset("train")
    if train.n == 0:
        raise ConfigurationError("training split is empty")
    streams = _streams(plan.sgd.seed)
    x_norm = fit_normalizer(train.machine_inputs())
    Xm = x_norm.apply(train.machine_inputs())
    mdim = Xm.shape[1]

    if isinstance(expert, TreeExpert):
        expert_preds = expert.predict_batch(
            train.X, streams["expert"] if expert.stochastic else None)
    else:
        if train.consensus is None:
            raise ConfigurationError("consensus expert needs consensus columns")
        expert_preds = expert.predict_batch_from_consensus(
            train.consensus, streams["expert"])
    E = _onehot(expert_preds, ds.K)

    f = init_net((mdim, plan.hidden, ds.K), seed=streams["init_f"])
    s = init_net((mdim, plan.hidden, 1), seed=streams["init_s"])
    epochs = plan.total_epochs
    _train_mixture(f, s, Xm, train.y, E, epochs, plan.sgd.learning_rate,
                   plan.sgd.batch_size, streams["shuffle"], plan.cost,
                   stage="ltd")
    return ModelBundle(
        f=f, g=_identity_feedback_head(mdim, ds.K), s=s,
        machine_view=ds.machine_view, method="ltd",
        feedback_mode="ltd_feedback", seed=plan.sgd.seed,
        delta=plan.cost.delta, epochs_spent=epochs, x_norm=x_norm,
    )


def _init_g(plan: TrainPlan, mdim: int, fdim: int, K: int, rng):
    if plan.g_conditioning == "film":
        return init_film_net(mdim, fdim, plan.hidden, K, seed=rng)
    return init_net((mdim + fdim, plan.hidden, K), seed=rng)


def _train_g_ce(g, Xm: np.ndarray, H: np.ndarray, y: np.ndarray,
                epochs: int, plan: TrainPlan, rng: np.random.Generator) -> None:
    if plan.g_conditioning == "film":
        lr, bsz = plan.sgd.learning_rate, plan.sgd.batch_size
        for epoch in range(epochs):
            for idx in minibatch_indices(len(y), bsz, rng):
                logits = film_forward_batch(g, Xm[idx], H[idx])
                vals, dlogits = ce_batch(logits, y[idx])
                _check_finite(vals, epoch, "g pretrain")
                grads, dws, dwt = film_backward_batch(g, Xm[idx], H[idx],
                                                      dlogits / len(idx))
                sgd_step_(g.base, grads, lr)
                g.w_scale -= lr * dws
                g.w_shift -= lr * dwt
    else:
        _train_ce(g, np.hstack([Xm, H]), y, epochs,
                  plan.sgd.learning_rate, plan.sgd.batch_size, rng,
                  stage="g pretrain")


def _g_forward(g, Xm, H, conditioning):
    if conditioning == "film":
        return film_forward_batch(g, Xm, H)
    return forward_batch(g, np.hstack([Xm, H]))


def train_lta_seq(ds: TaskDataset, feedback_mode: str,
                  plan: TrainPlan) -> ModelBundle:
    """Two-stage method: learn g on (x, h), then learn f and s with the
    defer mixture using g's predicted labels as the expert."""
    train = ds.subset("train")
    if train.H is None:
        raise ConfigurationError("feedback must be materialized before training")
    streams = _streams(plan.sgd.seed)
    x_norm = fit_normalizer(train.machine_inputs())
    h_norm = fit_normalizer(train.H)
    Xm, H = x_norm.apply(train.machine_inputs()), h_norm.apply(train.H)
    mdim, fdim = Xm.shape[1], train.feedback_dim

    g = _init_g(plan, mdim, fdim, ds.K, streams["init_g"])
    _train_g_ce(g, Xm, H, train.y, plan.pretrain_epochs, plan,
                streams["shuffle"])

    g_preds = np.argmax(_g_forward(g, Xm, H, plan.g_conditioning), axis=1)
    E = _onehot(g_preds, ds.K)
    f = init_net((mdim, plan.hidden, ds.K), seed=streams["init_f"])
    s = init_net((mdim, plan.hidden, 1), seed=streams["init_s"])
    _train_mixture(f, s, Xm, train.y, E, plan.main_epochs,
                   plan.sgd.learning_rate, plan.sgd.batch_size,
                   streams["shuffle"], plan.cost, stage="lta_seq")
    return ModelBundle(
        f=f, g=g, s=s, machine_view=ds.machine_view, method="lta_seq",
        feedback_mode=feedback_mode, seed=plan.sgd.seed,
        delta=plan.cost.delta, g_conditioning=plan.g_conditioning,
        epochs_spent=plan.total_epochs, x_norm=x_norm, h_norm=h_norm,
    )


def train_lta_joint(ds: TaskDataset, feedback_mode: str,
                    plan: TrainPlan) -> ModelBundle:
    """Pretrain f and g independently, then optimize f, g, s together on the
    joint surrogate."""
    train = ds.subset("train")
    if train.H is None:
        raise ConfigurationError("feedback must be materialized before training")
    streams = _streams(plan.sgd.seed)
    x_norm = fit_normalizer(train.machine_inputs())
    h_norm = fit_normalizer(train.H)
    Xm, H = x_norm.apply(train.machine_inputs()), h_norm.apply(train.H)
    y = train.y
    mdim, fdim = Xm.shape[1], train.feedback_dim
    lr, bsz = plan.sgd.learning_rate, plan.sgd.batch_size

    f = init_net((mdim, plan.hidden, ds.K), seed=streams["init_f"])
    g = _init_g(plan, mdim, fdim, ds.K, streams["init_g"])
    s = init_net((mdim, plan.hidden, 1), seed=streams["init_s"])

    _train_ce(f, Xm, y, plan.pretrain_epochs, lr, bsz, streams["shuffle"],
              stage="f pretrain")
    _train_g_ce(g, Xm, H, y, plan.pretrain_epochs, plan, streams["shuffle"])

    epoch_losses = []
    for epoch in range(plan.main_epochs):
        total, count = 0.0, 0
        for idx in minibatch_indices(len(y), bsz, streams["shuffle"]):
            f_log = forward_batch(f, Xm[idx])
            g_log = _g_forward(g, Xm[idx], H[idx], plan.g_conditioning)
            s_log = forward_batch(s, Xm[idx])[:, 0]
            vals, df, dg, dsv = joint_batch(f_log, g_log, s_log, y[idx],
                                            plan.cost)
            _check_finite(vals, epoch, "joint phase")
            b = len(idx)
            total += float(vals.sum())
            count += b
            sgd_step_(f, backward_batch(f, Xm[idx], df / b), lr)
            if plan.g_conditioning == "film":
                grads, dws, dwt = film_backward_batch(g, Xm[idx], H[idx], dg / b)
                sgd_step_(g.base, grads, lr)
                g.w_scale -= lr * dws
                g.w_shift -= lr * dwt
            else:
                sgd_step_(g, backward_batch(g, np.hstack([Xm[idx], H[idx]]),
                                            dg / b), lr)
            sgd_step_(s, backward_batch(s, Xm[idx], (dsv / b)[:, None]), lr)
        if count:
            epoch_losses.append(total / count)
    return ModelBundle(
        f=f, g=g, s=s, machine_view=ds.machine_view, method="lta_joint",
        feedback_mode=feedback_mode, seed=plan.sgd.seed,
        delta=plan.cost.delta, g_conditioning=plan.g_conditioning,
        epochs_spent=plan.total_epochs, x_norm=x_norm, h_norm=h_norm,
        history={"joint_epoch_loss": epoch_losses},
    )


def train_standard_alone(ds: TaskDataset, plan: TrainPlan):
    """Plain cross-entropy classifier on the machine view; the machine-alone
    baseline for complementarity reporting. Returns (net, input normalizer)."""
    train = ds.subset("train")
    streams = _streams(plan.sgd.seed)
    x_norm = fit_normalizer(train.machine_inputs())
    Xm = x_norm.apply(train.machine_inputs())
    net = init_net((Xm.shape[1], plan.hidden, ds.K), seed=streams["init_f"])
    _train_ce(net, Xm, train.y, plan.total_epochs, plan.sgd.learning_rate,
              plan.sgd.batch_size, streams["shuffle"], stage="standard alone")
    return net, x_norm


# ---------------------------------------------------------------------------
# Bundle serialization (plain text, provenance embedded)
# ---------------------------------------------------------------------------


def _norm_line(name: str, norm: Optional[Normalizer]) -> str:
    if norm is None:
        return f"{name} none"
    vals = np.concatenate([norm.mean, norm.sd])
    return f"{name} " + " ".join(format(v, ".17g") for v in vals)


def bundle_to_text(bundle: ModelBundle) -> str:
    lines = [
        "# askdefer-bundle",
        f"method {bundle.method}",
        f"feedback {bundle.feedback_mode}",
        f"seed {bundle.seed}",
        f"delta {format(bundle.delta, '.17g')}",
        f"machine_view {' '.join(map(str, bundle.machine_view))}",
        f"g_conditioning {bundle.g_conditioning}",
        f"epochs_spent {bundle.epochs_spent}",
        _norm_line("x_norm", bundle.x_norm),
        _norm_line("h_norm", bundle.h_norm),
    ]
    parts = ["\n".join(lines)]
    for name, net in (("f", bundle.f), ("s", bundle.s)):
        parts.append(f"[{name}]\n" + net_to_text(net))
    if bundle.g_conditioning == "film":
        parts.append("[g.base]\n" + net_to_text(bundle.g.base))
        parts.append("w_scale " + " ".join(
            format(v, ".17g") for v in bundle.g.w_scale.ravel()))
        parts.append("w_shift " + " ".join(
            format(v, ".17g") for v in bundle.g.w_shift.ravel()))
        parts.append(f"film_dims {bundle.g.h_dim} {bundle.g.w_scale.shape[1]}")
    else:
        parts.append("[g]\n" + net_to_text(bundle.g))
    return "\n".join(parts) + "\n"


def bundle_from_text(text: str) -> ModelBundle:
    head, *sections = text.split("\n[")
    meta = {}
    for ln in head.splitlines():
        if ln.startswith("#") or not ln.strip():
            continue
        key, _, val = ln.partition(" ")
        meta[key] = val
    nets = {}
    film_extra = {}
    for sec in sections:
        name, _, body = sec.partition("]\n")
        net_lines, extra = [], []
        for ln in body.splitlines():
            if ln.startswith(("w_scale", "w_shift", "film_dims")):
                extra.append(ln)
            else:
                net_lines.append(ln)
        nets[name] = net_from_text("\n".join(net_lines))
        for ln in extra:
            key, _, val = ln.partition(" ")
            film_extra[key] = val
    conditioning = meta.get("g_conditioning", "concat")
    if conditioning == "film":
        h_dim, hidden = (int(v) for v in film_extra["film_dims"].split())
        g = FilmNet(
            base=nets["g.base"],
            w_scale=np.array([float(v) for v in film_extra["w_scale"].split()]
                             ).reshape(h_dim, hidden),
            w_shift=np.array([float(v) for v in film_extra["w_shift"].split()]
                             ).reshape(h_dim, hidden),
        )
    else:
        g = nets["g"]
    def parse_norm(raw: Optional[str]) -> Optional[Normalizer]:
        if raw is None or raw == "none":
            return None
        vals = np.array([float(v) for v in raw.split()])
        half = len(vals) // 2
        return Normalizer(mean=vals[:half], sd=vals[half:])

    return ModelBundle(
        f=nets["f"], g=g, s=nets["s"],
        machine_view=tuple(int(v) for v in meta["machine_view"].split()),
        method=meta["method"],
        feedback_mode=None if meta["feedback"] == "None" else meta["feedback"],
        seed=int(meta["seed"]),
        delta=float(meta["delta"]),
        g_conditioning=conditioning,
        epochs_spent=int(meta.get("epochs_spent", 0)),
        x_norm=parse_norm(meta.get("x_norm")),
        h_norm=parse_norm(meta.get("h_norm")),
    )
