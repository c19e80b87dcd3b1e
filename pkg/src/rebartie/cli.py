"""Command-line front end.

Subcommands: gen (write synthetic scenes), detect (run the pipeline on
a cloud), eval (score saved results against saved truths), sweep
(success-rate curve over thresholds), demo (batch over the stock
benchmark conditions). Exit codes: 0 ok, 1 pipeline/stage error, 2
config error.
"""

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import io
from .errors import ConfigError, RebartieError
from .metrics import node_detection_rate, sweep_thresholds
from .pipeline import (PipelineConfig, aggregate_rows, condition_spec,
                       demo_conditions, evaluate_detection, result_to_dict,
                       run_batch, run_pipeline)
from .geometry import pose_from_dict
from .scenes import generate_scene


def _load_config(path) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    try:
        with open(path) as f:
            data = json.load(f)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return PipelineConfig.from_dict(data)


def _parse_noise(text: str):
    parts = [float(v) for v in text.split(",")]
    if len(parts) == 1:
        return parts[0]
    if len(parts) == 2:
        return (parts[0], parts[1])
    raise ConfigError(f"noise must be SIGMA or LO,HI, got {text!r}")


def _write_csv(path, rows, fields):
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fields, extrasaction="ignore")
        writer.writeheader()
        writer.writerows(rows)


def cmd_gen(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    condition = {
        "rows": args.rows, "cols": args.cols, "layers": args.layers,
        "n_obstacles": args.obstacles, "noise_sigma": _parse_noise(args.noise),
    }
    if args.spacing is not None:
        condition["spacing"] = args.spacing
    if args.bar_radius is not None:
        condition["bar_radius"] = args.bar_radius
    if args.density is not None:
        condition["points_per_meter"] = args.density
    tool_written = False
    for seed in range(args.seed, args.seed + args.scenes):
        scene, tool, truth = generate_scene(condition_spec(condition, seed))
        io.write_cloud(out / f"scene_{seed:04d}.{args.format}", scene)
        io.save_truth(out / f"truth_{seed:04d}.json", truth)
        if not tool_written:
            io.write_cloud(out / f"tool.{args.format}", tool)
            tool_written = True
    print(f"wrote {args.scenes} scene(s) to {out}")
    return 0


def cmd_detect(args) -> int:
    config = _load_config(args.config)
    if args.seed is not None:
        config = config.with_seed(args.seed)
    scene = io.read_cloud(args.scene)
    tool = io.read_cloud(args.tool)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = run_pipeline(scene, tool, config)
    with open(out / "result.json", "w") as f:
        json.dump(result_to_dict(result), f, indent=1)
    io.write_labels_csv(out / "labels.csv", scene, result.labeling.labels)
    nodes = result.ordered_nodes.nodes
    for rank, idx in enumerate(result.ordered_nodes.order):
        io.write_ply(out / f"crop_{rank:02d}.ply", nodes.crops[idx])
    if args.truth is not None:
        truth = io.load_truth(args.truth)
        report = evaluate_detection(nodes.centroids, result.ordered_nodes.order,
                                    result.tying_poses, truth, config.eval)
        with open(out / "metrics.json", "w") as f:
            json.dump(report, f, indent=1)
    print(f"detected {len(nodes)} node(s); results in {out}")
    return 0


def _paired_runs(run_dir):
    """(seed, result dict, truth) triples for result_/truth_ file pairs."""
    run_dir = Path(run_dir)
    pairs = []
    for rpath in sorted(run_dir.glob("result_*.json")):
        seed = rpath.stem.split("_", 1)[1]
        tpath = run_dir / f"truth_{seed}.json"
        if not tpath.exists():
            raise ConfigError(f"{rpath.name} has no matching {tpath.name}")
        with open(rpath) as f:
            pairs.append((seed, json.load(f), io.load_truth(tpath)))
    if not pairs:
        raise ConfigError(f"no result_*.json files under {run_dir}")
    return pairs


def cmd_eval(args) -> int:
    config = _load_config(args.config)
    rows = []
    for seed, result, truth in _paired_runs(args.run_dir):
        poses = [pose_from_dict(p) for p in result["tying_poses"]]
        report = evaluate_detection(np.asarray(result["centroids"]),
                                    result["order"], poses, truth, config.eval)
        rows.append({"seed": seed, **report})
    _write_csv(args.out, rows,
               ["seed", "n_detected", "n_truth", "detection_rate",
                "order_correct", "pose_success_rate", "mean_pose_error"])
    mean_det = float(np.mean([r["detection_rate"] for r in rows]))
    print(f"evaluated {len(rows)} run(s); mean detection rate {mean_det:.4f}")
    return 0


def cmd_sweep(args) -> int:
    config = _load_config(args.config)
    thresholds = np.linspace(args.t_min, args.t_max, args.t_steps)
    demos_pred, demos_truth = [], []
    for _seed, result, truth in _paired_runs(args.run_dir):
        poses = [pose_from_dict(p) for p in result["tying_poses"]]
        # sweep over matched pairs only; the shape contract needs equal lists
        match = node_detection_rate(np.asarray(result["centroids"]),
                                    truth.node_positions,
                                    config.eval.match_radius)
        to_truth = dict(match.matches)
        pred, gt = [], []
        for rank, det in enumerate(result["order"]):
            j = to_truth.get(int(det))
            if j is not None:
                pred.append(poses[rank])
                gt.append(truth.tying_poses[j])
        if pred:
            demos_pred.append(pred)
            demos_truth.append(gt)
    if not demos_pred:
        raise RebartieError("no matched poses to sweep over")
    curve = sweep_thresholds(demos_pred, demos_truth, config.eval.gamma,
                             thresholds, config.eval.squared_translation)
    with open(args.out, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["t_g", "success_rate"])
        writer.writerows(curve)
    print(f"wrote {len(curve)} curve points to {args.out}")
    return 0


def cmd_demo(args) -> int:
    config = _load_config(args.config)
    conditions = demo_conditions()
    if args.conditions:
        wanted = {name.strip() for name in args.conditions.split(",")}
        byname = {c["name"] for c in conditions}
        missing = sorted(wanted - byname)
        if missing:
            raise ConfigError(f"unknown condition(s) {missing}; "
                              f"choose from {sorted(byname)}")
        conditions = [c for c in conditions if c["name"] in wanted]
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seeds = range(args.seed, args.seed + args.scenes)
    summary = []
    fields = ["condition", "seed", "n_detected", "n_truth", "detection_rate",
              "order_correct", "pose_success_rate", "mean_pose_error",
              "total_ms", "error"]
    for condition in conditions:
        rows = run_batch(condition, seeds, config, jobs=args.jobs)
        cdir = out / condition["name"]
        cdir.mkdir(exist_ok=True)
        for row in rows:
            with open(cdir / f"scene_{row['seed']:04d}.json", "w") as f:
                json.dump(row, f, indent=1)
        _write_csv(cdir / "scenes.csv", rows, fields)
        agg = aggregate_rows(rows)
        summary.append({"condition": condition["name"], **agg})
        print(f"{condition['name']}: detection "
              f"{agg['mean_detection_rate']:.4f}, order "
              f"{agg['order_correct_fraction']:.4f}, "
              f"{agg['mean_total_ms']:.0f} ms/scene")
    _write_csv(out / "summary.csv", summary,
               ["condition", "scenes", "failures", "mean_detection_rate",
                "order_correct_fraction", "mean_pose_success_rate",
                "mean_pose_error", "mean_total_ms"])
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rebartie",
        description="Rebar-node detection pipeline over synthetic point clouds")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate synthetic scenes with ground truth")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--scenes", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rows", type=int, default=2)
    p.add_argument("--cols", type=int, default=2)
    p.add_argument("--layers", type=int, default=1)
    p.add_argument("--obstacles", type=int, default=0)
    p.add_argument("--noise", default="0.0", help="sigma in meters, or LO,HI")
    p.add_argument("--spacing", type=float, default=None)
    p.add_argument("--bar-radius", type=float, default=None)
    p.add_argument("--density", type=float, default=None)
    p.add_argument("--format", choices=("ply", "csv"), default="ply")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("detect", help="run the pipeline on one scene cloud")
    p.add_argument("--scene", required=True)
    p.add_argument("--tool", required=True)
    p.add_argument("--truth", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("eval", help="score result_*.json against truth_*.json")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out", default="eval.csv")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="success-rate curve over T_g thresholds")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--t-min", type=float, default=0.02)
    p.add_argument("--t-max", type=float, default=1.0)
    p.add_argument("--t-steps", type=int, default=25)
    p.add_argument("--out", default="sweep.csv")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("demo", help="batch-run the stock benchmark conditions")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--conditions", default=None,
                   help="comma-separated names; default all")
    p.add_argument("--scenes", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_demo)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except RebartieError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
