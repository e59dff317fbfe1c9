"""Command-line entry point: ``snnprune <subcommand> [--config F] [--seed N] [--out DIR]``.

Exit codes: 0 success, 1 other failure, 2 missing artifact, 3 no feasible
policy, 4 configuration error.
"""

import argparse
import logging
import sys
from pathlib import Path

from . import pipeline
from .config import load_config
from .errors import ConfigError, DegenerateDesignError, MissingArtifactError, SnnPruneError

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_MISSING = 2
EXIT_NO_FEASIBLE = 3
EXIT_CONFIG = 4


def _cmd_gen_data(cfg, out, args):
    train_ds, test_ds = pipeline.gen_data(cfg, out)
    print(f"wrote {len(train_ds)} training and {len(test_ds)} test samples to {out}")


def _cmd_pretrain(cfg, out, args):
    res = pipeline.pretrain(cfg, out)
    print(f"val_acc={res.val_acc!r} test_acc={res.test_acc!r}")


def _cmd_lre(cfg, out, args):
    res = pipeline.fit_lre(cfg, out)
    m = res.model
    print(f"w={m.w!r} b={m.b!r} mse={m.mse!r} r2={m.r2!r}")
    print(f"holdout_mse={res.holdout_rmse!r} holdout_r2={res.holdout_r2!r} points={len(res.points)}")


def _cmd_search(cfg, out, args):
    outcome, env = pipeline.search(cfg, out)
    best = outcome.best
    ratios = ",".join(f"{r:.4f}" for r in best.policy.ratios)
    print(
        f"best reward={best.reward!r} acc={best.acc!r} "
        f"s_es_ratio={best.s_es / env.base_synops!r} p_ratio={best.p_cur / env.base_params!r} "
        f"feasible={best.feasible} policy=[{ratios}]"
    )
    if not best.feasible:
        print("E_NO_FEASIBLE: no episode met the targets; best-effort policy written", file=sys.stderr)
        return EXIT_NO_FEASIBLE
    return EXIT_OK


def _cmd_finalize(cfg, out, args):
    _, rep = pipeline.finalize_policy(cfg, out, Path(args.policy) if args.policy else None)
    print(
        f"acc={rep.acc!r} synops_ratio={rep.synops_ratio!r} params_ratio={rep.params_ratio!r} "
        f"s_feasible={rep.s_feasible} p_feasible={rep.p_feasible}"
    )


def _cmd_report(cfg, out, args):
    rep, curve = pipeline.report(
        cfg, out, Path(args.checkpoint) if args.checkpoint else None,
        calibrate=args.calibrate, tolerance=args.tolerance, step=args.step,
    )
    print(f"synops_avg={rep.total!r} samples={rep.n_samples_used}")
    if curve is not None:
        print(f"calibration converged_at={curve.converged_at} tolerance={curve.tolerance}")


COMMANDS = {
    "gen-data": (_cmd_gen_data, "write the synthetic train/test datasets"),
    "pretrain": (_cmd_pretrain, "train the spiking network and save a checkpoint"),
    "lre": (_cmd_lre, "sample pruning policies, finetune, and fit the SynOps estimator"),
    "search": (_cmd_search, "run the reinforcement-learning policy search"),
    "finalize": (_cmd_finalize, "prune with a policy, finetune, and write the final report"),
    "report": (_cmd_report, "write a per-layer SynOps/parameter report for a checkpoint"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="config file of 'section.key = value' lines")
    common.add_argument("--seed", type=int, help="root seed (overrides the config)")
    common.add_argument("--out", default="runs/default", help="artifact directory (default: runs/default)")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="snnprune", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=help_text)
        if name == "finalize":
            p.add_argument("--policy", help="policy CSV (default: <out>/best_policy.csv)")
        if name == "report":
            p.add_argument("--checkpoint", help="network checkpoint (default: <out>/pretrained.spnn)")
            p.add_argument("--calibrate", action="store_true", help="also write the subset calibration curve")
            p.add_argument("--tolerance", type=float, default=0.01)
            p.add_argument("--step", type=int, default=10)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.seed)
        out = Path(args.out)
        handler = COMMANDS[args.command][0]
        return handler(cfg, out, args) or EXIT_OK
    except ConfigError as exc:
        print(f"E_CONFIG: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingArtifactError as exc:
        print(f"E_MISSING_ARTIFACT: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except DegenerateDesignError as exc:
        print(f"E_DEGENERATE_FIT: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except SnnPruneError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
