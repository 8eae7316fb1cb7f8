"""Command-line harness.

Subcommands: ``train``, ``eval``, ``predict-acc``, ``export-embeddings``,
``derive-oracle``, ``report``. Exit codes: 0 success, 1 configuration
error (bad flags, unreadable or invalid config), 2 runtime abort.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .config import ConfigError, ExperimentConfig, from_mapping, load_config

__all__ = ["main"]


class _Parser(argparse.ArgumentParser):
    """argparse that treats usage errors as configuration errors (exit 1)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _add_common(parser, *, config=True, seed=True, out=True, variant=True):
    if config:
        parser.add_argument("--config", metavar="PATH",
                            help="key=value experiment config file")
    if seed:
        parser.add_argument("--seed", type=int, default=0, metavar="N",
                            help="master seed (default 0)")
    if out:
        parser.add_argument("--out", metavar="DIR",
                            help="artifact directory")
    if variant:
        parser.add_argument("--variant",
                            choices=["lia2c", "lia2c-wokld", "ia2cdm"],
                            help="override the configured learner variant")


def _load(args, need_config=False) -> ExperimentConfig:
    overrides = {}
    if getattr(args, "variant", None):
        overrides["variant"] = args.variant
    if args.config is not None:
        return load_config(args.config, overrides)
    if need_config:
        raise ConfigError("--config is required for this command")
    return from_mapping({k: str(v) for k, v in overrides.items()})


def _cmd_train(args) -> int:
    from .harness import run_training

    config = _load(args)
    seeds = [args.seed + i for i in range(config.n_seeds)]
    outcomes = run_training(config, seeds, args.out)
    failed = 0
    for outcome in outcomes:
        if outcome.error is not None:
            failed += 1
            print(f"seed {outcome.seed}: FAILED: {outcome.error}")
        else:
            where = outcome.out_dir or "(not persisted)"
            final = ("" if outcome.final_return is None
                     else f" final_return={outcome.final_return:.4f}")
            print(f"seed {outcome.seed}: {outcome.steps} steps, "
                  f"{outcome.episodes} episodes{final} -> {where}")
    if failed:
        print(f"{failed}/{len(outcomes)} seeds failed", file=sys.stderr)
        return 2
    return 0


def _cmd_eval(args) -> int:
    from .harness import evaluate

    config = _load(args)
    if args.out is None and args.snapshot is None:
        raise ConfigError("eval needs --out RUNDIR or --snapshot PATH")
    snapshot = args.snapshot or os.path.join(args.out, "snapshots", "final")
    episodes = args.episodes if args.episodes is not None else config.eval_episodes
    summary = evaluate(snapshot, config, episodes, args.seed,
                       greedy=True if args.greedy else None)
    print(f"episodes={summary.episodes}")
    if summary.episodes:
        print(f"mean_return={summary.mean_return!r}")
        print(f"std_return={summary.std_return!r}")
        if summary.manager_return is not None:
            print(f"manager_return={summary.manager_return!r}")
        sizes = summary.roster_trajectory or []
        if sizes:
            print(f"mean_roster_first_tick={sizes[0]!r}")
            print(f"mean_roster_last_tick={sizes[-1]!r}")
    return 0


def _require_out(args) -> None:
    if not getattr(args, "out", None):
        raise ConfigError("--out DIR is required for this command")


def _cmd_predict_acc(args) -> int:
    from .harness import load_predictions, prediction_accuracy

    _require_out(args)
    path = os.path.join(args.out, "predictions.csv")
    if not os.path.exists(path):
        raise FileNotFoundError(
            f"{path} not found; rerun training with log_predictions = true")
    result = prediction_accuracy(load_predictions(path), window=args.window)
    overall = result["overall"]
    print(f"action_acc={overall['action_acc']!r}")
    print(f"obs_acc={overall['obs_acc']!r}")
    out_path = os.path.join(args.out, "predict_acc.csv")
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write("window_start,action_acc,obs_acc\n")
        rows = result["windows"] or [dict(overall, start=0)]
        for row in rows:
            a = "" if row["action_acc"] is None else repr(row["action_acc"])
            o = "" if row["obs_acc"] is None else repr(row["obs_acc"])
            fh.write(f"{row['start']},{a},{o}\n")
    print(f"wrote {out_path}")
    return 0


def _cmd_export_embeddings(args) -> int:
    from .harness import export_embeddings

    _require_out(args)
    dest = args.dest or os.path.join(args.out, "embeddings_export.csv")
    rows = export_embeddings(args.out, dest)
    print(f"wrote {rows} rows to {dest}")
    return 0


def _cmd_derive_oracle(args) -> int:
    import numpy as np

    from .chains import (best_constant_staffing, best_symmetric_policy,
                         constant_staffing_returns,
                         evaluate_symmetric_policy)

    config = _load(args)
    env_config = config.env_config()
    oracle: dict = {}
    if env_config.open_mode:
        returns = constant_staffing_returns(env_config, max_size=8)
        best_size, best_value = best_constant_staffing(env_config, max_size=8)
        oracle["staffing_returns"] = {str(k): v for k, v in returns.items()}
        oracle["best_staffing"] = best_size
        oracle["best_staffing_return"] = best_value
        print(f"best steady employee count: {best_size} "
              f"(manager return {best_value!r})")
        for size in sorted(returns):
            print(f"  employees={size}: {returns[size]!r}")
    else:
        value, choice = best_symmetric_policy(env_config)
        group = np.zeros((3, 3))
        group[:, 2] = 1.0
        selfish = np.zeros((3, 3))
        selfish[:, 0] = 1.0
        uniform = np.full((3, 3), 1.0 / 3.0)
        oracle["optimal_return"] = value
        oracle["optimal_policy_by_label"] = list(choice)
        oracle["threshold_90pct"] = 0.9 * value
        oracle["all_group_return"] = evaluate_symmetric_policy(group, env_config)
        oracle["all_self_return"] = evaluate_symmetric_policy(selfish, env_config)
        oracle["uniform_return"] = evaluate_symmetric_policy(uniform, env_config)
        print(f"optimal stationary return: {value!r} "
              f"(labels -> actions {choice})")
        print(f"90% threshold: {oracle['threshold_90pct']!r}")
        print(f"all-group: {oracle['all_group_return']!r}  "
              f"all-self: {oracle['all_self_return']!r}  "
              f"uniform: {oracle['uniform_return']!r}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "oracle.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(oracle, fh, sort_keys=True, indent=1)
            fh.write("\n")
        print(f"wrote {path}")
    return 0


def _cmd_report(args) -> int:
    from .report import render_report

    _require_out(args)
    for path in render_report(args.out, window=args.window):
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="orglab",
                     description="Decentralized organization-game learners")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p = sub.add_parser("train",
                       help="run seeded training")
    _add_common(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval",
                       help="roll out a saved snapshot without learning")
    _add_common(p)
    p.add_argument("--snapshot", metavar="PATH",
                   help="snapshot directory (default OUT/snapshots/final)")
    p.add_argument("--episodes", type=int, metavar="N",
                   help="evaluation episodes (default from config)")
    p.add_argument("--greedy", action="store_true",
                   help="argmax actions instead of sampling")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("predict-acc",
                       help="model prediction accuracy from run artifacts")
    _add_common(p)
    p.add_argument("--window", type=int, default=1000, metavar="N",
                   help="steps per accuracy window (default 1000)")
    p.set_defaults(func=_cmd_predict_acc)

    p = sub.add_parser("export-embeddings",
                       help="write the logged embeddings CSV")
    _add_common(p)
    p.add_argument("--dest", metavar="PATH",
                   help="destination file (default OUT/embeddings_export.csv)")
    p.set_defaults(func=_cmd_export_embeddings)

    p = sub.add_parser("derive-oracle",
                       help="exact reference values for the configured game")
    _add_common(p)
    p.set_defaults(func=_cmd_derive_oracle)

    p = sub.add_parser("report",
                       help="render figures and summary from metrics")
    _add_common(p)
    p.add_argument("--window", type=int, default=100, metavar="N",
                   help="smoothing window in episodes (default 100)")
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
