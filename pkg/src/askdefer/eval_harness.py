"""Coverage-accuracy evaluation and multi-seed sweeps.

`evaluate` fits the ask threshold on the calibration split only and applies
it to the test split for every budget on the grid. Test labels are kept in
a vault that only opens after all predictions and scores are computed, so a
code path peeking at them early fails loudly. The curve may overshoot the
budget on test by sampling error; that is reported, not corrected.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Optional

import numpy as np

from .datagen import (ConsensusSpec, ScenarioSpec, TaskDataset, make_consensus_task,
                      make_scenario, make_synth, make_toy_table, split)
from .errors import ConfigurationError
from .expert_sim import (ConsensusExpert, FeatureOracleExpert, TreeExpert,
                         fit_expert, materialize_feedback)
from .losses import DeferCostConfig
from .nn_core import forward_batch
from .selection import delta_scores, fit_threshold
from .training import (ModelBundle, default_plan, train_ltd, train_lta_joint,
                       train_lta_seq, train_standard_alone)

TASKS = ("toy_table", "scenario", "synth", "consensus")

RESULT_COLUMNS = ("method", "seed", "delta", "beta", "coverage", "tau",
                  "ask_rate", "system_accuracy", "f_only_accuracy",
                  "g_accuracy", "expert_alone", "machine_alone")


@dataclass
class CoveragePoint:
    beta: float
    coverage: float
    system_accuracy: float
    f_only_accuracy: float
    g_or_expert_accuracy: float
    ask_rate: float
    tau: float


@dataclass
class CoverageCurve:
    method: str
    seed: int
    delta: float
    points: list
    expert_alone: float = float("nan")
    machine_alone: float = float("nan")


class LabelVault:
    """Holds test labels until the prediction side of an evaluation is done."""

    def __init__(self, y: np.ndarray):
        self._y = y
        self._open = False

    def unlock(self) -> None:
        self._open = True

    @property
    def values(self) -> np.ndarray:
        if not self._open:
            raise RuntimeError("test labels read before predictions were made")
        return self._y


def evaluate(bundle: ModelBundle, ds: TaskDataset, beta_grid,
             policy_mode: str = "loss_gap") -> CoverageCurve:
    """Coverage curve over the budget grid.

    For each budget the threshold is fit on the calibration scores and then
    applied to the test scores; asked instances are answered by the enriched
    path, the rest by the standard model.
    """
    betas = [float(b) for b in beta_grid]
    if any(b2 <= b1 for b1, b2 in zip(betas, betas[1:])):
        raise ConfigurationError("beta grid must be strictly increasing")
    cal, test = ds.subset("cal"), ds.subset("test")
    if cal.n == 0 or test.n == 0:
        raise ConfigurationError("calibration and test splits must be non-empty")

    vault = LabelVault(test.y)
    cal_scores = delta_scores(bundle, cal.X, cal.H, policy_mode)
    test_scores = delta_scores(bundle, test.X, test.H, policy_mode)
    f_preds = bundle.predict_f(test.X)
    if test.H is None:
        raise ConfigurationError("evaluation needs materialized feedback")
    g_preds = bundle.predict_g(test.X, test.H)

    vault.unlock()
    y = vault.values
    w = test.weights
    f_only = float(np.average(f_preds == y, weights=w))
    g_only = float(np.average(g_preds == y, weights=w))

    points = []
    for beta in betas:
        policy = fit_threshold(cal_scores, beta)
        ask = test_scores > policy.tau
        system = np.where(ask, g_preds, f_preds)
        ask_rate = float(np.average(ask, weights=w))
        points.append(CoveragePoint(
            beta=beta,
            coverage=1.0 - ask_rate,
            system_accuracy=float(np.average(system == y, weights=w)),
            f_only_accuracy=f_only,
            g_or_expert_accuracy=g_only,
            ask_rate=ask_rate,
            tau=policy.tau,
        ))
    return CoverageCurve(method=bundle.method, seed=bundle.seed,
                         delta=bundle.delta, points=points)


@dataclass
class ComplementarityReport:
    expert_alone: float
    machine_alone: float
    complementary_betas: list

    @property
    def any_complementary(self) -> bool:
        return bool(self.complementary_betas)


def complementarity(curve: CoverageCurve, expert_alone: float,
                    machine_alone: float) -> ComplementarityReport:
    """Budgets where the team strictly beats both solo baselines."""
    bar = max(expert_alone, machine_alone)
    betas = [p.beta for p in curve.points if p.system_accuracy > bar]
    return ComplementarityReport(expert_alone, machine_alone, betas)


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    task: str = "synth"
    n: int = 4000
    feedback_mode: str = "ltd_feedback"
    methods: tuple = ("ltd", "lta_seq", "lta_joint")
    seeds: tuple = (1, 2, 3, 4, 5)
    deltas: tuple = (0.0,)
    beta_grid: tuple = tuple(round(0.1 * i, 1) for i in range(11))
    ratios: tuple = (0.7, 0.1, 0.2)
    epochs: int = 150
    pretrain_epochs: Optional[int] = None  # default: a third of the budget
    lr: float = 0.001
    batch_size: int = 128
    hidden: int = 32
    alpha: float = 1.0
    tree_depth: int = 3
    policy_mode: str = "loss_gap"
    g_conditioning: str = "concat"
    out_dir: Optional[str] = None
    task_params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigurationError(f"unknown task {self.task!r}")
        for m in self.methods:
            if m not in ("ltd", "lta_seq", "lta_joint"):
                raise ConfigurationError(f"unknown method {m!r}")
        if self.feedback_mode not in ("ltd_feedback", "unc_feedback",
                                      "feature_feedback"):
            raise ConfigurationError(
                f"unknown feedback mode {self.feedback_mode!r}")
        if not self.seeds:
            raise ConfigurationError("seeds must be non-empty")


@dataclass
class RunFailure:
    method: str
    seed: int
    delta: float
    error: str


@dataclass
class SweepResult:
    curves: list
    failures: list
    bundles: list = field(default_factory=list)


def build_task(config: ExperimentConfig, seed: int) -> TaskDataset:
    p = config.task_params
    if config.task == "toy_table":
        ds = make_toy_table(n_per_row=int(p.get("n_per_row", 50)))
    elif config.task == "scenario":
        ds = make_scenario(ScenarioSpec(
            sep=float(p.get("sep", 1.2)),
            noise_sd=float(p.get("noise_sd", 0.4)),
            machine_shift=float(p.get("machine_shift", 0.0)),
            expert_shift=float(p.get("expert_shift", 0.0)),
            n=config.n, seed=seed))
    elif config.task == "synth":
        ds = make_synth(seed=seed, n=config.n,
                        noise_sd=float(p.get("noise_sd", 0.8)))
    else:
        ds = make_consensus_task(ConsensusSpec(
            n_conditions=int(p.get("n_conditions", 4)),
            n_annotators=int(p.get("n_annotators", 20)),
            condition_signal=float(p.get("condition_signal", 0.45)),
            annotator_error=float(p.get("annotator_error", 0.06)),
            prevalence=float(p.get("prevalence", 0.3)),
            n=config.n, seed=seed))
    return split(ds, config.ratios, seed=seed)


def build_experts(config: ExperimentConfig, ds: TaskDataset):
    """(predicting expert for deferral, feedback expert for h)."""
    if config.task == "consensus":
        predictor = ConsensusExpert(n_conditions=ds.consensus.shape[1])
        return predictor, predictor
    predictor = fit_expert(ds, ds.expert_view, max_depth=config.tree_depth,
                           stochastic=config.task == "toy_table")
    if config.feedback_mode == "feature_feedback":
        return predictor, FeatureOracleExpert(feature_indices=ds.expert_view)
    return predictor, predictor


def _expert_alone_accuracy(expert, test: TaskDataset, seed: int,
                           resamples: int = 5) -> float:
    if isinstance(expert, TreeExpert) and not expert.stochastic:
        return float(np.average(expert.predict_batch(test.X) == test.y,
                                weights=test.weights))
    accs = []
    for i in range(resamples):
        rng = np.random.default_rng([seed, 2000 + i])
        if isinstance(expert, TreeExpert):
            preds = expert.predict_batch(test.X, rng)
        else:
            preds = expert.predict_batch_from_consensus(test.consensus, rng)
        accs.append(np.average(preds == test.y, weights=test.weights))
    return float(np.mean(accs))


def run_single(config: ExperimentConfig, method: str, seed: int, delta: float,
               baselines: Optional[dict] = None):
    """One (method, seed, delta) cell: generate, train, evaluate.

    Returns (CoverageCurve, ModelBundle)."""
    ds = build_task(config, seed)
    predictor, feedback_expert = build_experts(config, ds)
    mode = "ltd_feedback" if method == "ltd" else config.feedback_mode
    fb_expert = predictor if method == "ltd" else feedback_expert

    cost = DeferCostConfig(alpha=config.alpha, delta=delta)
    plan = default_plan(method, epochs=config.epochs, lr=config.lr,
                        batch_size=config.batch_size, seed=seed, cost=cost,
                        hidden=config.hidden,
                        g_conditioning=config.g_conditioning,
                        pretrain_epochs=config.pretrain_epochs)

    train_rng = np.random.default_rng([seed, 1000])
    ds_train = materialize_feedback(ds, fb_expert, mode, train_rng)
    if method == "ltd":
        bundle = train_ltd(ds_train, predictor, plan)
    elif method == "lta_seq":
        bundle = train_lta_seq(ds_train, mode, plan)
    else:
        bundle = train_lta_joint(ds_train, mode, plan)

    eval_rng = np.random.default_rng([seed, 3000])
    ds_eval = materialize_feedback(ds, fb_expert, mode, eval_rng)
    curve = evaluate(bundle, ds_eval, config.beta_grid, config.policy_mode)

    test = ds.subset("test")
    curve.expert_alone = _expert_alone_accuracy(predictor, test, seed)
    if baselines is not None and seed in baselines:
        curve.machine_alone = baselines[seed]
    else:
        curve.machine_alone = _machine_alone_accuracy(ds, plan)
        if baselines is not None:
            baselines[seed] = curve.machine_alone
    return curve, bundle


def _machine_alone_accuracy(ds: TaskDataset, plan) -> float:
    net, x_norm = train_standard_alone(ds, plan)
    test = ds.subset("test")
    preds = np.argmax(forward_batch(net, x_norm.apply(test.machine_inputs())),
                      axis=1)
    return float(np.average(preds == test.y, weights=test.weights))


def sweep(config: ExperimentConfig, workers: int = 1) -> SweepResult:
    """Cross product of methods x seeds x deltas; per-run failures are
    recorded and the sweep continues.

    Runs are independent (no shared mutable state), so `workers > 1`
    executes them in a thread pool; results are merged afterwards in the
    deterministic cell order either way.
    """
    cells = [(m, s, d) for m in config.methods for s in config.seeds
             for d in config.deltas]
    baselines: dict = {}
    if workers > 1:
        # warm the per-seed baseline cache first so threads only read it
        for seed in config.seeds:
            try:
                ds = build_task(config, seed)
                plan = default_plan("ltd", epochs=config.epochs, lr=config.lr,
                                    batch_size=config.batch_size, seed=seed,
                                    hidden=config.hidden)
                baselines[seed] = _machine_alone_accuracy(ds, plan)
            except Exception:  # noqa: BLE001 - the real pass records it
                pass
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(
                lambda cell: _guarded_run(config, cell, baselines), cells))
    else:
        outcomes = [_guarded_run(config, cell, baselines) for cell in cells]

    curves, failures, bundles = [], [], []
    for cell, outcome in zip(cells, outcomes):
        if isinstance(outcome, RunFailure):
            failures.append(outcome)
        else:
            curves.append(outcome[0])
            bundles.append(outcome[1])
    return SweepResult(curves=curves, failures=failures, bundles=bundles)


def _guarded_run(config: ExperimentConfig, cell, baselines):
    method, seed, delta = cell
    try:
        return run_single(config, method, seed, delta, baselines)
    except Exception as exc:  # noqa: BLE001 - recorded, not raised
        return RunFailure(method, seed, delta, str(exc))


def aggregate(curves) -> dict:
    """(method, delta, beta) -> dict of mean/std across seeds."""
    groups: dict = {}
    for curve in curves:
        for p in curve.points:
            groups.setdefault((curve.method, curve.delta, p.beta), []).append(
                (p.system_accuracy, p.ask_rate))
    out = {}
    for key, vals in groups.items():
        accs = np.array([v[0] for v in vals])
        asks = np.array([v[1] for v in vals])
        out[key] = {
            "mean_accuracy": float(accs.mean()),
            "std_accuracy": float(accs.std()),
            "mean_ask_rate": float(asks.mean()),
            "n_runs": len(vals),
        }
    return out


def write_results_csv(path, curves) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULT_COLUMNS)
        for curve in curves:
            for p in curve.points:
                writer.writerow([
                    curve.method, curve.seed, curve.delta, p.beta, p.coverage,
                    p.tau, p.ask_rate, p.system_accuracy, p.f_only_accuracy,
                    p.g_or_expert_accuracy, curve.expert_alone,
                    curve.machine_alone,
                ])


def write_manifest(path, config: ExperimentConfig) -> None:
    """Flat key = value manifest (sectioned) capturing the full config."""
    path = Path(path)
    lines = ["[experiment]"]
    d = asdict(config)
    params = d.pop("task_params")
    for key, val in d.items():
        if isinstance(val, (tuple, list)):
            val = " ".join(str(v) for v in val)
        lines.append(f"{key} = {val}")
    lines.append("")
    lines.append("[task_params]")
    for key, val in params.items():
        lines.append(f"{key} = {val}")
    path.write_text("\n".join(lines) + "\n")
