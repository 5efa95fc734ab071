"""Command-line entry point.

Subcommands: generate, run, oracle-demo, eval. Every flag has a default
visible in --help; a config file (flat `key = value` with sections, same
names as the flags) supplies defaults that explicit flags override. All
randomness flows from the seeds given here.

Exit codes: 0 success, 2 configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import configparser
import sys
from pathlib import Path

import numpy as np

from . import eval_harness, report
from .datagen import save_dataset
from .errors import ConfigurationError, DataError, TrainingError
from .eval_harness import (ExperimentConfig, aggregate, build_experts,
                           build_task, evaluate, sweep, write_manifest,
                           write_results_csv)
from .expert_sim import materialize_feedback
from .oracle_demo import format_oracle_table, run_oracle_demo
from .training import bundle_from_text, bundle_to_text

DEFAULT_FEEDBACK = {
    "toy_table": "feature_feedback",
    "scenario": "feature_feedback",
    "synth": "ltd_feedback",
    "consensus": "unc_feedback",
}

_TASK_PARAM_FLAGS = (
    ("sep", float), ("noise_sd", float), ("machine_shift", float),
    ("expert_shift", float), ("n_conditions", int), ("n_annotators", int),
    ("annotator_error", float), ("prevalence", float),
    ("condition_signal", float), ("n_per_row", int),
)


def _add_task_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None,
                   help="flat key = value config file; flags override it")
    p.add_argument("--task", choices=eval_harness.TASKS, default="synth",
                   help="which synthetic task to build")
    p.add_argument("--n", type=int, default=4000, help="sample count")
    p.add_argument("--feedback",
                   choices=("ltd", "unc", "feature"), default=None,
                   help="feedback mode (default depends on the task)")
    for name, typ in _TASK_PARAM_FLAGS:
        p.add_argument("--" + name.replace("_", "-"), type=typ, default=None,
                       help=f"{name} for the task generator")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epochs", type=int, default=150,
                   help="total training epoch budget per run")
    p.add_argument("--lr", type=float, default=0.001, help="SGD learning rate")
    p.add_argument("--batch-size", type=int, default=128, help="minibatch size")
    p.add_argument("--hidden", type=int, default=32, help="hidden layer width")
    p.add_argument("--alpha", type=float, default=1.0,
                   help="expert error scale in the defer cost")
    p.add_argument("--tree-depth", type=int, default=3,
                   help="decision-tree expert depth")
    p.add_argument("--g-conditioning", choices=("concat", "film"),
                   default="concat", help="how h enters the enriched model")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="askdefer",
        description="Budgeted expert-query classification experiments",
    )
    parser.add_argument("--config", default=None,
                        help="flat key = value config file; flags override it")
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    g = sub.add_parser("generate", help="write a dataset file",
                       formatter_class=fmt)
    _add_task_flags(g)
    g.add_argument("--seed", type=int, default=1, help="generator seed")
    g.add_argument("--tree-depth", type=int, default=3,
                   help="decision-tree expert depth (feedback materialization)")
    g.add_argument("--out", default=".", help="output directory")

    r = sub.add_parser("run", help="train, evaluate, and sweep methods",
                       formatter_class=fmt)
    _add_task_flags(r)
    _add_train_flags(r)
    r.add_argument("--methods", nargs="+", default=["ltd", "lta_seq", "lta_joint"],
                   choices=("ltd", "lta_seq", "lta_joint"), help="methods to run")
    r.add_argument("--seeds", nargs="+", type=int, default=[1, 2, 3, 4, 5],
                   help="run seeds (fresh data and split per seed)")
    r.add_argument("--delta", nargs="+", type=float, default=[0.0],
                   help="defer costs to sweep")
    r.add_argument("--beta-grid", nargs="+", type=float,
                   default=[round(0.1 * i, 1) for i in range(11)],
                   help="budget grid")
    r.add_argument("--policy-mode", choices=("loss_gap", "selector_logit"),
                   default="loss_gap", help="ask-score definition")
    r.add_argument("--out", default="results", help="output directory")
    r.add_argument("--save-bundles", action="store_true",
                   help="also write trained bundles for later `eval`")
    r.add_argument("--workers", type=int, default=1,
                   help="thread workers for the sweep (runs are independent)")
    r.add_argument("--no-figures", action="store_true",
                   help="skip figure rendering")

    o = sub.add_parser("oracle-demo",
                       help="oracle strategy table on the demo tasks",
                       formatter_class=fmt)
    o.add_argument("--config", default=None,
                   help="flat key = value config file; flags override it")
    o.add_argument("--seeds", nargs="+", type=int, default=[1, 2, 3, 4, 5],
                   help="scenario seeds")
    o.add_argument("--n", type=int, default=4000, help="scenario sample count")
    o.add_argument("--out", default=None,
                   help="optional output directory for CSV + figure")

    e = sub.add_parser("eval", help="re-evaluate a saved bundle",
                       formatter_class=fmt)
    _add_task_flags(e)
    e.add_argument("--bundle", required=True, help="bundle file from `run`")
    e.add_argument("--seed", type=int, default=1, help="data seed")
    e.add_argument("--tree-depth", type=int, default=3,
                   help="decision-tree expert depth")
    e.add_argument("--beta-grid", nargs="+", type=float,
                   default=[round(0.1 * i, 1) for i in range(11)],
                   help="budget grid")
    e.add_argument("--policy-mode", choices=("loss_gap", "selector_logit"),
                   default="loss_gap", help="ask-score definition")
    e.add_argument("--out", default=None, help="optional output directory")
    return parser


def _load_config_file(path: str) -> dict:
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise ConfigurationError(f"cannot read config file {path!r}")
    merged = {}
    for section in cp.sections():
        for key, val in cp.items(section):
            merged[key.replace("-", "_")] = val
    return merged


def _apply_config_defaults(parser, argv, raw: dict) -> None:
    """Install config values as subcommand defaults; flags still override."""
    sub_actions = [a for a in parser._actions
                   if isinstance(a, argparse._SubParsersAction)]
    command = next((tok for tok in argv if not tok.startswith("-")), None)
    if not sub_actions or command not in sub_actions[0].choices:
        return
    sub = sub_actions[0].choices[command]
    defaults = {}
    for action in sub._actions:
        if action.dest in raw:
            val = raw[action.dest]
            if action.nargs in ("+", "*"):
                parts = val.split()
                defaults[action.dest] = (
                    [action.type(p) for p in parts] if action.type else parts)
            elif isinstance(action.const, bool) or isinstance(action.default, bool):
                defaults[action.dest] = val.strip().lower() in ("1", "true", "yes")
            elif action.type:
                defaults[action.dest] = action.type(val)
            else:
                defaults[action.dest] = val
    sub.set_defaults(**defaults)


def _feedback_mode(args) -> str:
    short = args.feedback or {"ltd_feedback": "ltd", "unc_feedback": "unc",
                              "feature_feedback": "feature"}[
                                  DEFAULT_FEEDBACK[args.task]]
    return {"ltd": "ltd_feedback", "unc": "unc_feedback",
            "feature": "feature_feedback"}[short]


def _task_params(args) -> dict:
    return {name: getattr(args, name) for name, _ in _TASK_PARAM_FLAGS
            if getattr(args, name, None) is not None}


def cmd_generate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    mode = _feedback_mode(args)
    config = ExperimentConfig(
        task=args.task, n=args.n, feedback_mode=mode, seeds=(args.seed,),
        tree_depth=args.tree_depth, task_params=_task_params(args),
    )
    ds = build_task(config, args.seed)
    _, feedback_expert = build_experts(config, ds)
    rng = np.random.default_rng([args.seed, 1000])
    ds = materialize_feedback(ds, feedback_expert, mode, rng)
    stem = f"{args.task}_seed{args.seed}"
    save_dataset(ds, out / f"{stem}.csv")
    write_manifest(out / f"{stem}.manifest.txt", config)
    print(f"wrote {out / (stem + '.csv')} ({ds.n} rows, K={ds.K}, "
          f"feedback={mode})")
    return 0


def _print_summary(curves) -> None:
    agg = aggregate(curves)
    print(f"{'method':<10} {'delta':>6} {'beta':>5} {'accuracy':>16} "
          f"{'ask rate':>9}")
    for (method, delta, beta), stats in sorted(agg.items()):
        print(f"{method:<10} {delta:>6.2f} {beta:>5.2f} "
              f"{stats['mean_accuracy']:>8.4f} ± {stats['std_accuracy']:.4f} "
              f"{stats['mean_ask_rate']:>9.3f}")


def cmd_run(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = ExperimentConfig(
        task=args.task, n=args.n, feedback_mode=_feedback_mode(args),
        methods=tuple(args.methods), seeds=tuple(args.seeds),
        deltas=tuple(args.delta), beta_grid=tuple(args.beta_grid),
        epochs=args.epochs, lr=args.lr, batch_size=args.batch_size,
        hidden=args.hidden, alpha=args.alpha, tree_depth=args.tree_depth,
        policy_mode=args.policy_mode, g_conditioning=args.g_conditioning,
        out_dir=str(out), task_params=_task_params(args),
    )
    result = sweep(config, workers=args.workers)
    write_results_csv(out / "results.csv", result.curves)
    write_manifest(out / "manifest.txt", config)
    if args.save_bundles:
        for curve, bundle in zip(result.curves, result.bundles):
            name = (f"bundle_{curve.method}_seed{curve.seed}"
                    f"_delta{curve.delta:g}.txt")
            (out / name).write_text(bundle_to_text(bundle))
    if not args.no_figures and result.curves:
        for delta in config.deltas:
            sel = [c for c in result.curves if c.delta == delta]
            if sel:
                report.coverage_figure(
                    sel, out / f"accuracy_vs_coverage_delta{delta:g}.png",
                    title=f"{config.task}, delta={delta:g}")
        if len(config.deltas) > 1:
            for method in config.methods:
                sel = [c for c in result.curves if c.method == method]
                if sel:
                    report.coverage_figure(
                        sel, out / f"delta_effect_{method}.png",
                        title=f"{config.task}, {method} across defer costs",
                        by="delta")
    _print_summary(result.curves)
    print(f"results: {out / 'results.csv'}")
    if result.failures:
        for f in result.failures:
            print(f"FAILED {f.method} seed={f.seed} delta={f.delta}: {f.error}",
                  file=sys.stderr)
        return 3
    return 0


def cmd_oracle_demo(args) -> int:
    rows = run_oracle_demo(seeds=tuple(args.seeds), n=args.n)
    print(format_oracle_table(rows))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with (out / "oracle_demo.csv").open("w") as fh:
            fh.write("task,machine,machine_std,expert,expert_std,"
                     "ltd_star,ltd_star_std,lta_star,lta_star_std\n")
            for r in rows:
                fh.write(f"{r.task},{r.machine},{r.machine_std},{r.expert},"
                         f"{r.expert_std},{r.ltd_star},{r.ltd_star_std},"
                         f"{r.lta_star},{r.lta_star_std}\n")
        report.oracle_demo_figure(rows, out / "oracle_demo.png")
        print(f"wrote {out / 'oracle_demo.csv'}")
    return 0


def cmd_eval(args) -> int:
    bundle = bundle_from_text(Path(args.bundle).read_text())
    mode = (args.feedback and _feedback_mode(args)) or bundle.feedback_mode \
        or DEFAULT_FEEDBACK[args.task]
    config = ExperimentConfig(
        task=args.task, n=args.n, feedback_mode=mode, seeds=(args.seed,),
        beta_grid=tuple(args.beta_grid), tree_depth=args.tree_depth,
        policy_mode=args.policy_mode, task_params=_task_params(args),
    )
    ds = build_task(config, args.seed)
    _, feedback_expert = build_experts(config, ds)
    rng = np.random.default_rng([args.seed, 3000])
    ds = materialize_feedback(ds, feedback_expert, mode, rng)
    curve = evaluate(bundle, ds, config.beta_grid, config.policy_mode)
    _print_summary([curve])
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_results_csv(out / "eval_results.csv", [curve])
        report.coverage_figure([curve], out / "eval_accuracy_vs_coverage.png",
                               title=f"{config.task} ({bundle.method})")
        print(f"wrote {out / 'eval_results.csv'}")
    return 0


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        pre = argparse.ArgumentParser(add_help=False)
        pre.add_argument("--config", default=None)
        known, _ = pre.parse_known_args(argv)
        if known.config:
            _apply_config_defaults(parser, argv,
                                   _load_config_file(known.config))
        args = parser.parse_args(argv)
        if args.command == "generate":
            return cmd_generate(args)
        if args.command == "run":
            return cmd_run(args)
        if args.command == "oracle-demo":
            return cmd_oracle_demo(args)
        return cmd_eval(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (DataError, TrainingError, OSError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
