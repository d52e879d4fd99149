"""Command-line surface: train, eval, and compare.

    ctrlsched train   --config run.json --out results/
    ctrlsched eval    --config run.json --checkpoint results/checkpoint.ckpt --out eval/
    ctrlsched compare --config run.json [--checkpoint ...] --out cmp/

Every command accepts --seed to override the config's master seed. All
output files are written atomically (write-then-rename), and floats are
emitted with shortest round-trip formatting, so identical runs produce
byte-identical files.
"""

import argparse
import os
import sys

import numpy as np

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, parse_config, with_seed
from .plants import sample_ensemble
from .rollout import (
    baseline_scheduler,
    compare,
    policy_scheduler,
    rollout,
    stability_count,
)
from .seeding import substream
from .training import TrainingDivergedError, metrics_header, train

COMPARISON_HEADER = ["scheduler", "seed", "stable_count", "mean_cost",
                     "violation_rate"]


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path, header, rows):
    """Atomic CSV write; the target is never left half-written."""
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    os.replace(tmp, path)


def write_metrics_csv(path, n, history):
    rows = [[int(row[0])] + [float(v) for v in row[1:]] for row in history]
    write_csv(path, metrics_header(n), rows)


def write_trajectories_csv(path, result):
    """Per-(cycle, system) rows with the cycle's scheduled channel times."""
    horizon, m, _ = result.trajectories.shape
    n = result.nominal_times.shape[1]
    header = ["cycle", "system", "state_norm", "received"]
    header += [f"channel_time_{j + 1}" for j in range(n)]
    rows = []
    norms = np.linalg.norm(result.trajectories, axis=2)
    for t in range(horizon):
        times = [float(v) for v in result.nominal_times[t]]
        for i in range(m):
            rows.append([t, i, float(norms[t, i]),
                         int(result.received[t, i])] + times)
    write_csv(path, header, rows)


def _restore(checkpoint_path, config):
    """Rebuild (policy, ensemble) from a checkpoint, guarding dimensions."""
    ckpt = load_checkpoint(checkpoint_path)
    policy = ckpt.restore_policy()
    ensemble = ckpt.restore_ensemble()
    if policy.n != config.phy.n:
        raise CheckpointError(
            f"checkpoint policy expects n={policy.n} channels, "
            f"config has n={config.phy.n}"
        )
    if policy.kind == "mlp" and policy.m != len(ensemble):
        raise CheckpointError(
            f"checkpoint policy expects m={policy.m} systems, "
            f"checkpoint ensemble has m={len(ensemble)}"
        )
    return policy, ensemble


def cmd_train(config, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    ensemble = sample_ensemble(
        config.ensemble, substream(config.seed, "ensemble")
    )
    ckpt_path = os.path.join(out_dir, "checkpoint.ckpt")
    snapshot = config.to_dict()

    def checkpoint_fn(state):
        save_checkpoint(ckpt_path, state.policy, state.lam, state.iteration,
                        snapshot, ensemble)

    state = train(ensemble, config.phy, config.latency, config.train,
                  checkpoint_fn=checkpoint_fn)
    checkpoint_fn(state)
    metrics_path = os.path.join(out_dir, "metrics.csv")
    write_metrics_csv(metrics_path, config.phy.n, state.history)
    last = state.history[-1]
    n = config.phy.n
    sat = ", ".join(f"{v:.3f}" for v in last[3 + 2 * n : 3 + 3 * n])
    print(f"trained {state.iteration} iterations; "
          f"final objective {last[1]:.4f}, satisfaction [{sat}]")
    print(f"wrote {ckpt_path}")
    print(f"wrote {metrics_path}")


def cmd_eval(config, checkpoint_path, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    policy, ensemble = _restore(checkpoint_path, config)
    scheduler = policy_scheduler(policy, mode=config.rollout.execution)
    summary = []
    for idx in range(config.rollout.num_seeds):
        result = rollout(scheduler, ensemble, config.phy, config.latency,
                         config.rollout, config.seed, idx)
        path = os.path.join(out_dir, f"trajectories_{idx}.csv")
        write_trajectories_csv(path, result)
        summary.append(["learned", idx, stability_count(result, config.rollout),
                        result.mean_cost, result.violation_rate])
        print(f"wrote {path}")
    summary_path = os.path.join(out_dir, "summary.csv")
    write_csv(summary_path, COMPARISON_HEADER, summary)
    stable = [row[2] for row in summary]
    print(f"stable systems per seed: {stable} of m={len(ensemble)}")
    print(f"wrote {summary_path}")


def cmd_compare(config, checkpoint_path, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    if checkpoint_path is not None:
        policy, ensemble = _restore(checkpoint_path, config)
        schedulers = [
            ("learned", policy_scheduler(policy, mode=config.rollout.execution))
        ]
    else:
        ensemble = sample_ensemble(
            config.ensemble, substream(config.seed, "ensemble")
        )
        schedulers = []
    lyaps = [model.lyap for model in ensemble]
    schedulers.append(
        ("round_robin",
         baseline_scheduler("round_robin", config.phy, config.latency))
    )
    schedulers.append(
        ("priority_ranking",
         baseline_scheduler("priority_ranking", config.phy, config.latency,
                            lyaps=lyaps))
    )
    rows = compare(schedulers, ensemble, config.phy, config.latency,
                   config.rollout, config.seed)
    table = [[r["scheduler"], r["seed"], r["stable_count"], r["mean_cost"],
              r["violation_rate"]] for r in rows]
    path = os.path.join(out_dir, "comparison.csv")
    write_csv(path, COMPARISON_HEADER, table)
    for name, _ in schedulers:
        mine = [r for r in rows if r["scheduler"] == name]
        mean_stable = np.mean([r["stable_count"] for r in mine])
        mean_cost = np.mean([r["mean_cost"] for r in mine])
        print(f"{name}: mean stable {mean_stable:.1f}/{len(ensemble)}, "
              f"mean cost {mean_cost:.4g}")
    print(f"wrote {path}")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ctrlsched",
        description="Train and evaluate latency-constrained control-aware "
                    "wireless schedulers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("train", "run primal-dual training"),
        ("eval", "roll out a checkpointed policy"),
        ("compare", "paired comparison against the heuristic baselines"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="JSON run config")
        cmd.add_argument("--out", required=True, help="output directory")
        cmd.add_argument("--seed", type=int, default=None,
                         help="override the config's master seed")
        if name == "eval":
            cmd.add_argument("--checkpoint", required=True,
                             help="checkpoint to evaluate")
        if name == "compare":
            cmd.add_argument("--checkpoint", default=None,
                             help="include a learned policy in the comparison")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        config = parse_config(args.config)
        if args.seed is not None:
            config = with_seed(config, args.seed)
        if args.command == "train":
            cmd_train(config, args.out)
        elif args.command == "eval":
            cmd_eval(config, args.checkpoint, args.out)
        else:
            cmd_compare(config, args.checkpoint, args.out)
    except (ConfigError, CheckpointError, TrainingDivergedError,
            OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
