"""Command-line surface: simulate, track, evaluate, ablate.

All randomness flows from --seed; every run echoes its effective config into
the output directory so results are reproducible from the artifacts alone.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

from . import io_formats
from .engine import run_sequence
from .metrics import compute_clear
from .synthetic import (
    SCENARIOS,
    SimParams,
    SyntheticBackend,
    generate_detections,
    ground_truth_entries,
    load_scenario,
)
from .trajectory import TrackerConfig


def _load_config(args) -> TrackerConfig:
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            cfg = TrackerConfig.from_json(fh.read())
    else:
        cfg = TrackerConfig()
    if getattr(args, "det_conf", None) is not None:
        cfg = dataclasses.replace(cfg, det_conf_threshold=args.det_conf)
    return cfg


def _load_params(args) -> SimParams:
    if getattr(args, "params", None):
        with open(args.params, encoding="utf-8") as fh:
            params = SimParams.from_dict(json.load(fh))
    else:
        params = SimParams()
    if getattr(args, "seed", None) is not None:
        params = dataclasses.replace(params, seed=args.seed)
    return params


def _toggles(args) -> dict:
    return {
        "enable_addition": not args.no_add,
        "enable_interaction": not args.no_coi,
        "enable_reconstruction": not args.no_qr,
    }


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _echo_config(out_dir: str, cfg: TrackerConfig, params: SimParams | None) -> None:
    _write(os.path.join(out_dir, "config.json"), cfg.to_json() + "\n")
    if params is not None:
        _write(os.path.join(out_dir, "params.json"), params.to_json() + "\n")


def _add_toggle_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--no-add", action="store_true", help="disable object addition")
    parser.add_argument("--no-coi", action="store_true",
                        help="disable cross-object interaction")
    parser.add_argument("--no-qr", action="store_true",
                        help="disable quality reconstruction")


def cmd_simulate(args) -> int:
    script = load_scenario(args.scenario)
    params = _load_params(args)
    cfg = _load_config(args)
    frames = args.frames or script.last_frame
    detections = {f: generate_detections(script, f, params) for f in range(1, frames + 1)}
    backend = SyntheticBackend(script, params)
    results = run_sequence(frames, detections, backend, script.grid, cfg, **_toggles(args))

    gt, visibility = ground_truth_entries(script, frames)
    report = compute_clear(gt, io_formats.results_to_pred_entries(results), args.iou)

    os.makedirs(args.out, exist_ok=True)
    _write(os.path.join(args.out, "gt.csv"), io_formats.render_gt(gt, visibility))
    _write(os.path.join(args.out, "detections.csv"), io_formats.render_detections(detections))
    _write(os.path.join(args.out, "results.csv"), io_formats.render_results(results))
    _write(os.path.join(args.out, "trace.jsonl"), io_formats.render_trace(results))
    io_formats.write_report(report, os.path.join(args.out, "report.json"))
    _echo_config(args.out, cfg, params)
    print(report.to_table())
    return 0


def cmd_track(args) -> int:
    script = load_scenario(args.scenario)
    params = _load_params(args)
    cfg = _load_config(args)
    detections = io_formats.parse_detections(args.detections)
    frames = args.frames or (max(detections) if detections else script.last_frame)
    backend = SyntheticBackend(script, params)
    results = run_sequence(frames, detections, backend, script.grid, cfg, **_toggles(args))

    os.makedirs(args.out, exist_ok=True)
    _write(os.path.join(args.out, "results.csv"), io_formats.render_results(results))
    _write(os.path.join(args.out, "trace.jsonl"), io_formats.render_trace(results))
    _echo_config(args.out, cfg, params)
    print(f"tracked {frames} frames, wrote {os.path.join(args.out, 'results.csv')}")
    return 0


def cmd_evaluate(args) -> int:
    gt = io_formats.parse_gt(args.gt)
    preds = io_formats.parse_results(args.results)
    report = compute_clear(gt, preds, args.iou)
    print(report.to_table())
    if args.out:
        io_formats.write_report(report, args.out)
    return 0


_ABLATION_ROWS = (
    ("full", {}),
    ("no-add", {"enable_addition": False}),
    ("no-coi", {"enable_interaction": False}),
    ("no-qr", {"enable_reconstruction": False}),
)


def _ablation_run(script, params, cfg, frames, detections, gt, iou, overrides):
    toggles = {
        "enable_addition": True,
        "enable_interaction": True,
        "enable_reconstruction": True,
        **overrides,
    }
    backend = SyntheticBackend(script, params)
    results = run_sequence(frames, detections, backend, script.grid, cfg, **toggles)
    return compute_clear(gt, io_formats.results_to_pred_entries(results), iou)


def cmd_ablate(args) -> int:
    script = load_scenario(args.scenario)
    params = _load_params(args)
    cfg = _load_config(args)
    frames = args.frames or script.last_frame
    detections = {f: generate_detections(script, f, params) for f in range(1, frames + 1)}
    gt, _ = ground_truth_entries(script, frames)

    def run_one(row):
        _, overrides = row
        return _ablation_run(script, params, cfg, frames, detections, gt, args.iou, overrides)

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            reports = list(pool.map(run_one, _ABLATION_ROWS))
    else:
        reports = [run_one(row) for row in _ABLATION_ROWS]

    header = f"{'run':8} {'Add':>4} {'CoI':>4} {'Q-R':>4} {'MOTA':>8} {'IDF1':>8} " \
             f"{'IDSW':>5} {'FP':>5} {'FN':>5} {'MT':>3} {'ML':>3}"
    lines = [header]
    payload = {}
    for (label, overrides), report in zip(_ABLATION_ROWS, reports):
        on = lambda key: "off" if overrides.get(key) is False else "on"
        lines.append(
            f"{label:8} {on('enable_addition'):>4} {on('enable_interaction'):>4} "
            f"{on('enable_reconstruction'):>4} {report.mota:8.3f} {report.idf1:8.3f} "
            f"{report.idsw:5d} {report.fp:5d} {report.fn:5d} {report.mt:3d} {report.ml:3d}"
        )
        payload[label] = report.to_dict()
    table = "\n".join(lines)
    print(table)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _write(os.path.join(args.out, "ablation.json"),
               json.dumps(payload, indent=2) + "\n")
        _write(os.path.join(args.out, "ablation.txt"), table + "\n")
        _echo_config(args.out, cfg, params)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="masktrack",
        description="tracking-by-segmentation engine, synthetic world, and evaluation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common_sim = argparse.ArgumentParser(add_help=False)
    common_sim.add_argument("--scenario", required=True,
                            help=f"built-in ({', '.join(sorted(SCENARIOS))}) or script JSON path")
    common_sim.add_argument("--seed", type=int, default=None, help="simulation seed")
    common_sim.add_argument("--frames", type=int, default=None)
    common_sim.add_argument("--config", help="TrackerConfig JSON path")
    common_sim.add_argument("--params", help="SimParams JSON path")
    common_sim.add_argument("--det-conf", type=float, default=None,
                            help="per-sequence detection confidence threshold")

    p = sub.add_parser("simulate", parents=[common_sim],
                       help="run a scenario end to end and write gt/detections/results")
    p.add_argument("--out", required=True)
    p.add_argument("--iou", type=float, default=0.5)
    _add_toggle_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("track", parents=[common_sim],
                       help="run a detections file against a scenario backend")
    p.add_argument("--detections", required=True)
    p.add_argument("--out", required=True)
    _add_toggle_flags(p)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("evaluate", help="score a results file against ground truth")
    p.add_argument("--gt", required=True)
    p.add_argument("--results", required=True)
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--out", help="write the report JSON here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", parents=[common_sim],
                       help="compare module toggles on one scenario")
    p.add_argument("--out")
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
