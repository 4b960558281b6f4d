"""Command-line entry point: ``clickcal {gen-tasks,train,eval,stability,heatmap}``.

Every subcommand validates its flags and inputs before doing any work, and
every output is a pure function of flags, input files and seed.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .codec import RecordFormatError, dumps_line, ensure_parent, write_records
from .env import CONF_HEADS, TaskConfig, generate_tasks, load_policy, read_tasks, save_policy, write_tasks
from .geometry import DEFAULT_ALPHA, InvalidParameterError
from .grpo import TrainingFailureError, UpdateConfig
from .metrics import (
    AP_THRESHOLDS,
    InvalidInputError,
    calibration_report,
    heatmap,
    predict,
    stability,
    write_heatmap,
)
from .rewards import REWARD_MODES
from .training import TrainConfig, train

_DEFAULT_UPDATE = UpdateConfig()
_DEFAULT_TRAIN = TrainConfig()


class UsageError(Exception):
    pass


def _grid(text: str) -> tuple[int, int]:
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}") from None
    return w, h


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _existing(path: str | None, what: str) -> Path:
    if path is None:
        raise UsageError(f"--{what} is required")
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} file not found: {p}")
    return p


def _write_json(path, obj) -> None:
    ensure_parent(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# --------------------------------------------------------------------------

def cmd_gen_tasks(args) -> None:
    w, h = args.grid
    cfg = TaskConfig(grid_w=w, grid_h=h, cell_size=args.cell_size, min_box_cells=args.min_box,
                     max_box_cells=args.max_box, noise=args.noise, odd_boxes=args.odd_boxes)
    cfg.validate()
    if args.count < 0:
        raise UsageError(f"--count must be >= 0, got {args.count}")
    tasks = generate_tasks(args.count, cfg, args.seed, args.prefix)
    write_tasks(ensure_parent(args.out), tasks)


def _train_config(args) -> TrainConfig:
    update = UpdateConfig(epsilon=args.epsilon, beta=args.beta, learning_rate=args.lr,
                          conf_learning_rate=args.conf_lr, group_size=args.group_size, seed=args.seed)
    cfg = TrainConfig(steps=args.steps, update=update, reward_mode=args.reward_mode, alpha=args.alpha,
                      conf_bins=args.conf_bins, temperature=args.temperature, init_scale=args.init_scale,
                      cell_gain=args.cell_gain, conf_head=args.conf_head)
    cfg.validate()
    return cfg


def cmd_train(args) -> None:
    cfg = _train_config(args)
    tasks = read_tasks(_existing(args.tasks, "tasks"))
    if not tasks:
        raise UsageError(f"{args.tasks}: no tasks")
    policy, log = train(tasks, cfg)
    out = ensure_parent(args.out)
    save_policy(out, policy, meta={"config": cfg.header(), "tasks": len(tasks)})
    log_path = ensure_parent(args.log or f"{out}.metrics.jsonl")
    with open(log_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_line({"header": {"config": cfg.header(), "tasks": len(tasks)}}) + "\n")
        for row in log:
            fh.write(dumps_line(row) + "\n")


def cmd_eval(args) -> None:
    thresholds = args.thresholds or list(AP_THRESHOLDS)
    if any(not 0 <= t <= 1 for t in thresholds):
        raise UsageError(f"thresholds must lie in [0, 1], got {thresholds}")
    policy = load_policy(_existing(args.policy, "policy"))
    tasks = read_tasks(_existing(args.tasks, "tasks"))
    if not tasks:
        raise UsageError(f"{args.tasks}: no tasks")
    records = predict(policy, tasks)
    report = calibration_report(records, thresholds)
    prefix = args.out
    write_records(ensure_parent(f"{prefix}.records.jsonl"), records)
    ensure_parent(f"{prefix}.report.json").write_text(report.to_json(), encoding="utf-8")
    ensure_parent(f"{prefix}.report.txt").write_text(report.to_text(), encoding="utf-8")
    sys.stdout.write(report.to_text())


def cmd_stability(args) -> None:
    if args.repeats < 2:
        raise UsageError(f"--repeats must be >= 2, got {args.repeats}")
    if args.temperature < 0:
        raise UsageError(f"--temperature must be >= 0, got {args.temperature}")
    policy = load_policy(_existing(args.policy, "policy"))
    tasks = read_tasks(_existing(args.tasks, "tasks"))
    if not tasks:
        raise UsageError(f"{args.tasks}: no tasks")
    rep = stability(policy, tasks, repeats=args.repeats, temperature=args.temperature,
                    rng=np.random.default_rng(args.seed), sample_sizes=args.sample_sizes)
    doc = rep.to_dict()
    doc.update(repeats=args.repeats, temperature=args.temperature, seed=args.seed)
    _write_json(args.out, doc)
    for n, v in zip(rep.sample_sizes, rep.mean_variance):
        print(f"n={n}  mean_variance={v:.6f}")


def cmd_heatmap(args) -> None:
    if args.mode == "policy" and args.policy is None:
        raise UsageError("--mode policy needs --policy")
    tasks = read_tasks(_existing(args.tasks, "tasks"))
    matches = [t for t in tasks if t.task_id == args.task_id] if args.task_id else tasks[args.index:args.index + 1]
    if not matches:
        wanted = args.task_id if args.task_id else f"index {args.index}"
        raise UsageError(f"{args.tasks}: no task {wanted}")
    source = load_policy(_existing(args.policy, "policy")) if args.mode == "policy" else "truth"
    m = heatmap(source, matches[0], args.resolution, args.alpha)
    write_heatmap(args.out, m)


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="clickcal", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-tasks", help="write a synthetic task file")
    g.add_argument("--count", type=int, default=1000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--grid", type=_grid, default=(12, 12), metavar="WxH")
    g.add_argument("--cell-size", type=float, default=10.0)
    g.add_argument("--noise", type=float, default=TaskConfig.noise)
    g.add_argument("--min-box", type=int, default=TaskConfig.min_box_cells)
    g.add_argument("--max-box", type=int, default=TaskConfig.max_box_cells)
    g.add_argument("--odd-boxes", action="store_true", help="only odd box spans")
    g.add_argument("--prefix", default="t", help="task id prefix")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_tasks)

    t = sub.add_parser("train", help="GRPO-train a toy policy")
    t.add_argument("--tasks", required=True)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    t.add_argument("--reward-mode", choices=REWARD_MODES, default=_DEFAULT_TRAIN.reward_mode)
    t.add_argument("--group-size", type=int, default=_DEFAULT_UPDATE.group_size)
    t.add_argument("--epsilon", type=float, default=_DEFAULT_UPDATE.epsilon)
    t.add_argument("--beta", type=float, default=_DEFAULT_UPDATE.beta)
    t.add_argument("--lr", type=float, default=_DEFAULT_UPDATE.learning_rate)
    t.add_argument("--conf-lr", type=float, default=_DEFAULT_UPDATE.conf_learning_rate,
                   help="confidence-head step size")
    t.add_argument("--steps", type=int, default=_DEFAULT_TRAIN.steps)
    t.add_argument("--conf-bins", type=int, default=_DEFAULT_TRAIN.conf_bins)
    t.add_argument("--temperature", type=float, default=_DEFAULT_TRAIN.temperature)
    t.add_argument("--cell-gain", type=float, default=_DEFAULT_TRAIN.cell_gain)
    t.add_argument("--init-scale", type=float, default=_DEFAULT_TRAIN.init_scale)
    t.add_argument("--conf-head", choices=CONF_HEADS, default=_DEFAULT_TRAIN.conf_head)
    t.add_argument("--out", required=True, help="policy file")
    t.add_argument("--log", help="metrics log (default: <out>.metrics.jsonl)")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="greedy predictions and a calibration report")
    e.add_argument("--policy", required=True)
    e.add_argument("--tasks", required=True)
    e.add_argument("--thresholds", type=_floats, default=None)
    e.add_argument("--out", required=True, help="output prefix")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("stability", help="variance of resampled confidence at the greedy click")
    s.add_argument("--policy", required=True)
    s.add_argument("--tasks", required=True)
    s.add_argument("--repeats", type=int, default=8)
    s.add_argument("--temperature", type=float, default=1.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--sample-sizes", type=_ints, default=None)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_stability)

    h = sub.add_parser("heatmap", help="export a confidence heatmap as CSV and PGM")
    h.add_argument("--tasks", required=True)
    h.add_argument("--task-id")
    h.add_argument("--index", type=int, default=0)
    h.add_argument("--mode", choices=("truth", "policy"), default="truth")
    h.add_argument("--policy")
    h.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    h.add_argument("--resolution", type=_grid, default=None, metavar="WxH")
    h.add_argument("--out", required=True, help="output prefix")
    h.set_defaults(func=cmd_heatmap)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (UsageError, InvalidParameterError, InvalidInputError, RecordFormatError,
            TrainingFailureError, FileNotFoundError, OSError) as exc:
        print(f"clickcal {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
