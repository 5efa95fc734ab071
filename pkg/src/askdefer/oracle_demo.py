"""Why deferring alone can be a dead end: oracle strategy comparison.

For each task we compare four numbers on held-out data:

* machine — accuracy of a Bayes-style agent reading only the machine-side
  feature(s),
* expert — same, reading only the expert-side feature(s),
* defer oracle (LtD*) — the best achievable accuracy when every instance
  must be answered entirely by one of the two agents: the pointwise max of
  the agents' conditional correctness probabilities,
* ask oracle (LtA*) — the same selector choosing between the machine and an
  enriched agent that reads both feature sets.

On the exact two-bit table these are closed-form (0.5 and 1.0). On the
Gaussian scenarios the agents are class-conditional Gaussian fits estimated
on a 60:40 train/test split (priors are uniform by design of the
generators), and an agent's conditional correctness at x is the posterior
mass it puts on the true label; the reported solo accuracies use the same
posterior-sampling semantics, so all four columns are comparable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datagen import ScenarioSpec, TaskDataset, make_scenario, make_toy_table, split
from .errors import ConfigurationError
from .selection import selector_oracle_accuracy

DEMO_SCENARIOS = (
    ("balanced", dict(sep=1.2, noise_sd=0.4)),
    ("machine_favored", dict(sep=0.4, noise_sd=0.4, machine_shift=0.8)),
    ("expert_favored", dict(sep=0.4, noise_sd=0.4, expert_shift=0.8)),
)


@dataclass
class GaussianAgent:
    """Class-conditional Gaussian classifier on a feature view
    (per-class means, pooled per-dimension variance, empirical priors)."""

    view: tuple
    means: np.ndarray   # (K, d)
    var: np.ndarray     # (d,)
    priors: np.ndarray  # (K,)


def fit_gaussian_agent(ds: TaskDataset, view,
                       uniform_priors: bool = True) -> GaussianAgent:
    view = tuple(view)
    train = ds.subset("train")
    if train.n == 0:
        raise ConfigurationError("training split is empty")
    X = train.X[:, list(view)]
    K = ds.K
    means = np.zeros((K, X.shape[1]))
    priors = np.zeros(K)
    ss = np.zeros(X.shape[1])
    for c in range(K):
        m = train.y == c
        if not m.any():
            raise ConfigurationError(f"class {c} absent from training split")
        means[c] = X[m].mean(axis=0)
        priors[c] = m.mean()
        ss += ((X[m] - means[c]) ** 2).sum(axis=0)
    var = np.maximum(ss / train.n, 1e-12)
    if uniform_priors:
        priors = np.full(K, 1.0 / K)
    return GaussianAgent(view=view, means=means, var=var, priors=priors)


def agent_posterior(agent: GaussianAgent, X: np.ndarray) -> np.ndarray:
    Xv = np.asarray(X, dtype=np.float64)[:, list(agent.view)]
    d2 = ((Xv[:, None, :] - agent.means[None, :, :]) ** 2) / agent.var
    logp = np.log(agent.priors)[None, :] - 0.5 * d2.sum(axis=2)
    logp -= logp.max(axis=1, keepdims=True)
    p = np.exp(logp)
    return p / p.sum(axis=1, keepdims=True)


def table_posterior(ds: TaskDataset, view) -> np.ndarray:
    """Exact conditional label distribution given the view columns, for
    weighted exact-table datasets."""
    view = list(view)
    w = ds.weights if ds.weights is not None else np.full(ds.n, 1.0 / ds.n)
    post = np.zeros((ds.n, ds.K))
    keys = [tuple(row) for row in ds.X[:, view]]
    for i, key in enumerate(keys):
        same = np.array([k == key for k in keys])
        for c in range(ds.K):
            post[i, c] = w[same & (ds.y == c)].sum()
        post[i] /= w[same].sum()
    return post


@dataclass
class OracleRow:
    task: str
    machine: float
    machine_std: float
    expert: float
    expert_std: float
    ltd_star: float
    ltd_star_std: float
    lta_star: float
    lta_star_std: float


def toy_oracle_row() -> OracleRow:
    """Closed-form oracle accuracies on the exact two-bit table."""
    ds = make_toy_table()
    w = ds.weights
    idx = np.arange(ds.n)
    p_machine = table_posterior(ds, ds.machine_view)[idx, ds.y]
    p_expert = table_posterior(ds, ds.expert_view)[idx, ds.y]
    p_both = table_posterior(ds, ds.machine_view + ds.expert_view)[idx, ds.y]
    machine = float(np.average(p_machine, weights=w))
    expert = float(np.average(p_expert, weights=w))
    ltd = selector_oracle_accuracy(p_machine, p_expert, weights=w)
    lta = selector_oracle_accuracy(p_machine, p_both, weights=w)
    return OracleRow("toy_table", machine, 0.0, expert, 0.0, ltd, 0.0, lta, 0.0)


def scenario_oracle_run(spec: ScenarioSpec):
    """(machine, expert, ltd_star, lta_star) test accuracies for one draw."""
    ds = split(make_scenario(spec), (0.6, 0.0, 0.4), seed=spec.seed)
    machine_agent = fit_gaussian_agent(ds, ds.machine_view)
    expert_agent = fit_gaussian_agent(ds, ds.expert_view)
    both_agent = fit_gaussian_agent(ds, ds.machine_view + ds.expert_view)
    test = ds.subset("test")
    idx = np.arange(test.n)
    pm = agent_posterior(machine_agent, test.X)[idx, test.y]
    pe = agent_posterior(expert_agent, test.X)[idx, test.y]
    pb = agent_posterior(both_agent, test.X)[idx, test.y]
    machine = float(np.mean(pm))
    expert = float(np.mean(pe))
    ltd = selector_oracle_accuracy(pm, pe)
    lta = selector_oracle_accuracy(pm, pb)
    return machine, expert, ltd, lta


def run_oracle_demo(seeds=(1, 2, 3, 4, 5), n: int = 4000) -> list:
    """Toy-table row (exact) plus the three scenario rows (mean and std
    over the given seeds)."""
    rows = [toy_oracle_row()]
    for name, params in DEMO_SCENARIOS:
        runs = np.array([
            scenario_oracle_run(ScenarioSpec(n=n, seed=seed, **params))
            for seed in seeds
        ])
        mean, std = runs.mean(axis=0), runs.std(axis=0)
        rows.append(OracleRow(name, mean[0], std[0], mean[1], std[1],
                              mean[2], std[2], mean[3], std[3]))
    return rows


def format_oracle_table(rows) -> str:
    header = (f"{'task':<16} {'machine':>15} {'expert':>15} "
              f"{'LtD*':>15} {'LtA*':>15}")
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append(
            f"{r.task:<16} "
            f"{r.machine:.3f} ± {r.machine_std:.3f} "
            f"{r.expert:>7.3f} ± {r.expert_std:.3f} "
            f"{r.ltd_star:>7.3f} ± {r.ltd_star_std:.3f} "
            f"{r.lta_star:>7.3f} ± {r.lta_star_std:.3f}"
        )
    return "\n".join(lines)
