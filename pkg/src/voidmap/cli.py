"""Command-line entry point: ``voidmap {clean,online,eval,synth,ablate}``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import io as vio
from .grid import InvalidInputError, Params
from .metrics import compute_metrics, confusion, metrics_json
from .pipeline import LabeledSequence, ScanLabels, export_cleaned, ground_truth, run_offline, run_online
from .synth import SpecError, generate, read_scene

log = logging.getLogger("voidmap")

# (d_s, d_p, voxel size) rows of the ablation table
ABLATION_GRID = [
    (0.0, 0, 0.1),
    (0.2, 0, 0.1),
    (0.0, 1, 0.1),
    (0.2, 1, 0.2),
    (0.2, 1, 0.1),
]


def _add_input(p):
    p.add_argument("--input", required=True, help="directory of NNNNNN.pcd scans")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--poses", help="pose file (default: <input>/poses.txt)")
    src.add_argument("--viewpoint", action="store_true", help="take poses from PCD VIEWPOINT")
    p.add_argument("--world-frame", action="store_true", help="points in files are world-frame")


def _add_params(p):
    p.add_argument("--config", help="key=value parameter file; flags override it")
    p.add_argument("--voxel-size", type=float)
    p.add_argument("--ds", type=float)
    p.add_argument("--dp", type=int)
    p.add_argument("--max-range", type=float)
    p.add_argument("--hit-extension", type=int)
    p.add_argument("--online-order", choices=["classify_first", "integrate_first"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="voidmap", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_ in (("clean", "label all points against the final void map"),
                        ("online", "label each scan against the map built so far")):
        p = sub.add_parser(name, help=help_)
        _add_input(p)
        _add_params(p)
        if name == "clean":
            p.add_argument("--mode", choices=["offline", "online"])
        p.add_argument("--out", required=True)
        p.add_argument("--gt", action="store_true", help="evaluate against label fields")

    p = sub.add_parser("eval", help="score predicted labels against ground truth")
    _add_input(p)
    p.add_argument("--pred", required=True, help="labels directory written by clean/online")
    p.add_argument("--out", help="directory for metrics.json")

    p = sub.add_parser("synth", help="write a synthetic dataset from a scene file")
    p.add_argument("--spec", required=True)
    p.add_argument("--seed", type=int, help="override the scene's seed")
    p.add_argument("--out", required=True)
    p.add_argument("--ascii", action="store_true")

    p = sub.add_parser("ablate", help="metrics over a (d_s, d_p, voxel size) grid")
    _add_input(p)
    _add_params(p)
    p.add_argument("--grid", help="';'-separated 'd_s,d_p,voxel_size' triples")
    p.add_argument("--out", required=True)
    return parser


def resolve_params(args) -> tuple:
    cfg = vio.read_config(args.config) if getattr(args, "config", None) else {}
    flags = {
        "voxel_size": args.voxel_size,
        "d_s": args.ds,
        "d_p": args.dp,
        "max_range": args.max_range,
        "hit_extension": args.hit_extension,
        "online_order": args.online_order,
    }
    cfg.update({k: v for k, v in flags.items() if v is not None})
    mode = getattr(args, "mode", None) or cfg.get("mode", "offline")
    return vio.params_from_config(cfg), mode


def _load(args):
    return vio.load_sequence(
        args.input,
        pose_source="viewpoint" if args.viewpoint else "file",
        pose_file=args.poses,
        world_frame=args.world_frame,
    )


def _timing(ts) -> dict:
    ts = np.asarray(ts, dtype=np.float64)
    return {
        "per_scan": ts.tolist(),
        "mean": float(ts.mean()) if ts.size else 0.0,
        "std": float(ts.std()) if ts.size else 0.0,
    }


def write_labels(directory, scans, labels: LabeledSequence) -> None:
    """One file per scan, one line per raw point: 0 static, 1 dynamic, -1 dropped."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, scan in enumerate(scans):
        np.savetxt(directory / f"{scan.scan_id:06d}.txt", labels.raw_labels(scan, i), fmt="%d")


def read_labels(directory, scans) -> LabeledSequence:
    directory = Path(directory)
    out = []
    for scan in scans:
        path = directory / f"{scan.scan_id:06d}.txt"
        if not path.exists():
            raise FileNotFoundError(f"missing label file {path}")
        raw = np.loadtxt(path, dtype=np.int64, ndmin=1)
        if len(raw) != len(scan.points):
            raise InvalidInputError(
                f"scan {scan.scan_id}: {len(raw)} labels for {len(scan.points)} points"
            )
        idx = np.flatnonzero(raw >= 0)
        out.append(ScanLabels(scan.scan_id, idx, raw[idx].astype(np.uint8)))
    return LabeledSequence(out)


def _restrict(gt: LabeledSequence, pred: LabeledSequence) -> LabeledSequence:
    """Ground truth limited to the points the prediction kept."""
    out = []
    for g, p in zip(gt, pred):
        keep = np.isin(g.indices, p.indices)
        out.append(ScanLabels(g.scan_id, g.indices[keep], g.labels[keep]))
    return LabeledSequence(out)


def cmd_clean(args, online: bool = False) -> int:
    params, mode = resolve_params(args)
    online = online or mode == "online"
    scans = _load(args)
    timings: list = []
    runner = run_online if online else run_offline
    void_map, labels = runner(scans, params, timings=timings)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    static, dynamic = export_cleaned(scans, labels)
    vio.write_pcd(out / "static_map.pcd", vio.CloudFile(static))
    vio.write_pcd(out / "dynamic_points.pcd", vio.CloudFile(dynamic))
    write_labels(out / "labels", scans, labels)

    n_in = sum(len(s.points) for s in scans)
    counts = labels.counts()
    report = {
        "mode": "online" if online else "offline",
        "params": params.as_dict(),
        "scans": len(scans),
        "void_voxels": len(void_map),
        ("latency_s" if online else "integrate_time_s"): _timing(timings),
        "totals": {"points_in": n_in, "dropped": n_in - counts["retained"], **counts},
    }
    if args.gt:
        c = confusion(labels, ground_truth(scans))
        report["metrics"] = metrics_json(c)
        print(compute_metrics(c).row("voidmap" + ("*" if online else "")))
    (out / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    log.info("static %d, dynamic %d -> %s", counts["static"], counts["dynamic"], out)
    return 0


def cmd_online(args) -> int:
    return cmd_clean(args, online=True)


def cmd_eval(args) -> int:
    scans = _load(args)
    pred = read_labels(args.pred, scans)
    gt = _restrict(ground_truth(scans), pred)
    c = confusion(pred, gt)
    result = metrics_json(c)
    print(f"{'':<28s} {'SA':>6s} {'DA':>6s} {'AA':>6s}")
    print(compute_metrics(c).row(Path(args.pred).name))
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "metrics.json").write_text(json.dumps(result, indent=2) + "\n")
    return 0


def cmd_synth(args) -> int:
    spec = read_scene(args.spec)
    if args.seed is not None:
        spec.seed = args.seed
    scans = generate(spec)
    vio.save_sequence(args.out, scans, mode="ascii" if args.ascii else "binary")
    log.info("wrote %d scans to %s", len(scans), args.out)
    return 0


def parse_grid(text: str) -> list:
    rows = []
    for item in filter(None, (s.strip() for s in text.split(";"))):
        parts = item.split(",")
        if len(parts) != 3:
            raise ValueError(f"grid entry {item!r} is not 'd_s,d_p,voxel_size'")
        rows.append((float(parts[0]), int(parts[1]), float(parts[2])))
    return rows


def cmd_ablate(args) -> int:
    base, _ = resolve_params(args)
    grid = parse_grid(args.grid) if args.grid else ABLATION_GRID
    scans = _load(args)
    gt = ground_truth(scans)
    rows = []
    print(f"{'setting':<28s} {'SA':>6s} {'DA':>6s} {'AA':>6s}")
    for d_s, d_p, v in grid:
        params = Params(voxel_size=v, d_s=d_s, d_p=d_p, max_range=base.max_range,
                        hit_extension=base.hit_extension)
        _, labels = run_offline(scans, params)
        c = confusion(labels, gt)
        name = f"d_s={d_s:g}, d_p={d_p}, v={v:g}"
        print(compute_metrics(c).row(name))
        rows.append({"params": params.as_dict(), **metrics_json(c)})
    Path(args.out).mkdir(parents=True, exist_ok=True)
    (Path(args.out) / "ablation.json").write_text(json.dumps(rows, indent=2) + "\n")
    return 0


COMMANDS = {
    "clean": cmd_clean,
    "online": cmd_online,
    "eval": cmd_eval,
    "synth": cmd_synth,
    "ablate": cmd_ablate,
}


def _cap_threads() -> None:
    value = os.environ.get("DUFO_THREADS")
    if not value:
        return
    import numba

    numba.set_num_threads(max(1, min(int(value), numba.config.NUMBA_NUM_THREADS)))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        _cap_threads()
        return COMMANDS[args.command](args)
    except (OSError, ValueError, SpecError) as exc:
        print(f"voidmap {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
