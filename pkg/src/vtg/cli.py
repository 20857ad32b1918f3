"""Command line entry point: ``vtg <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import bench
from .baselines import GpisConfig
from .grid import PointCloud, read_vtg, write_vtg
from .mesh import save_obj
from .net import (MODE_ALIASES, NetConfig, TrainConfig, jsonl_logger, load_checkpoint, normalize_mode,
                  save_checkpoint, train)
from .synth.shapes import BASIC_PRIMITIVES, PROFILES, ShapePairSpec
from .synth.triplet import SPLIT_TAGS, ObservationTriplet, shape_pair_observation
from .synth.tactile import make_rng

log = logging.getLogger("vtg")


def _config(path, seed=None) -> bench.BenchConfig:
    cfg = bench.BenchConfig.load(path) if path else bench.BenchConfig()
    return bench.with_overrides(cfg, seed=seed)


def cmd_gen_shapes(args) -> int:
    """Two-part geometric shapes, front-facing, tactile on the occluded back."""
    out = Path(args.out)
    primitives = tuple(args.primitives.split(",")) if args.primitives else BASIC_PRIMITIVES
    unknown = set(primitives) - set(PROFILES)
    if unknown:
        raise SystemExit(f"unknown primitives: {sorted(unknown)}")
    pairs = [(a, b) for a in primitives for b in primitives if a != b]
    rng = make_rng(args.seed, 0x7A1)
    entries = []
    for i in range(args.count):
        front, back = pairs[int(rng.integers(len(pairs)))]
        spec = ShapePairSpec(front, back, seed=int(rng.integers(2 ** 63)))
        tactile_seed = int(rng.integers(2 ** 63))
        obs = shape_pair_observation(spec, args.dim, args.npts, tactile_seed)
        split = "holdout_mesh" if i >= args.count - args.holdout else "train_view"
        (out / split).mkdir(parents=True, exist_ok=True)
        stem = f"s{i:05d}_v00"
        files = {k: f"{split}/{stem}_{k}.vtg" for k in ("depth", "tactile", "gt")}
        files.update(depth_cloud=f"{split}/{stem}_depth.xyz", tactile_cloud=f"{split}/{stem}_tactile.xyz",
                     gt_mesh=f"{split}/{stem}_gt.obj")
        t = obs.triplet
        write_vtg(out / files["depth"], t.depth)
        write_vtg(out / files["tactile"], t.tactile)
        write_vtg(out / files["gt"], t.ground_truth)
        obs.depth_cloud.save(out / files["depth_cloud"])
        obs.tactile_cloud.save(out / files["tactile_cloud"])
        save_obj(out / files["gt_mesh"], obs.mesh)
        entries.append({"split": split, "mesh": f"s{i:05d}", "view": 0, "front": front, "back": back,
                        "shape_seed": spec.seed, "tactile_seed": tactile_seed, "files": files})
    manifest = {
        "config": bench.with_overrides(bench.BenchConfig(), seed=args.seed, grid_dim=args.dim,
                                       npts=args.npts).to_dict(),
        "kind": "shape_pairs",
        "splits": {"train_meshes": [e["mesh"] for e in entries if e["split"] == "train_view"],
                   "holdout_meshes": [e["mesh"] for e in entries if e["split"] == "holdout_mesh"]},
        "entries": entries,
    }
    (out / bench.MANIFEST).write_text(json.dumps(manifest, indent=1))
    print(f"wrote {len(entries)} shape-pair triplets to {out}")
    return 0


def cmd_gen_dataset(args) -> int:
    cfg = _config(args.config, args.seed)
    manifest = bench.gen_dataset(args.out, cfg, log=log.info)
    counts = {tag: sum(e["split"] == tag for e in manifest["entries"]) for tag in SPLIT_TAGS}
    print(f"wrote {len(manifest['entries'])} triplets to {args.out}: {counts}")
    return 0


def cmd_train(args) -> int:
    manifest = bench.load_manifest(args.data)
    cfg = bench.BenchConfig.from_dict(manifest["config"])
    mode = normalize_mode(args.mode)
    entries = bench.select_entries(manifest, ("train_view",))
    holdout_ids = set(manifest["splits"]["holdout_meshes"])
    if {e["mesh"] for e in entries} & holdout_ids:
        raise SystemExit("holdout meshes found in the training split")
    triplets = [bench.load_sample(args.data, e).triplet for e in entries]
    held = None
    if args.validate:
        held = [bench.load_sample(args.data, e).triplet for e in bench.select_entries(manifest, ("holdout_mesh",))]
    net_cfg = NetConfig(triplets[0].frame.dims[0])
    train_cfg = TrainConfig(learning_rate=args.lr, batch_size=args.batch_size,
                            epochs=args.epochs if args.epochs is not None else cfg.epochs,
                            seed=args.seed if args.seed is not None else cfg.train_seed)
    sink = None
    if args.log:
        Path(args.log).write_text(json.dumps({"mode": mode, "train_meshes": sorted({e["mesh"] for e in entries}),
                                              "samples": len(triplets)}) + "\n")
        sink = jsonl_logger(args.log)

    def report(rec):
        log.info(json.dumps(rec))
        if sink:
            sink(rec)

    augment = cfg.augment if args.augment is None else args.augment
    result = train(triplets, net_cfg, train_cfg, mode, holdout=held, log=report, threshold=args.threshold,
                   augment=augment)
    params = result.best_params if held else result.params
    save_checkpoint(args.out, params, net_cfg, train_cfg, result.best_epoch, result.history[-1])
    print(f"saved {mode} network ({len(triplets)} samples, {train_cfg.epochs} epochs) to {args.out}")
    return 0


def _method_params(args) -> dict:
    params = {}
    for mode, path in (("depth_only", args.ckpt_depth), ("tactile_and_depth", args.ckpt_both)):
        if path:
            params[mode] = load_checkpoint(path, dtype="float32")[0]
    return params


def cmd_complete(args) -> int:
    depth = read_vtg(args.depth)
    tactile = read_vtg(args.tactile)
    entry = {"split": "adhoc", "mesh": Path(args.depth).stem, "view": 0}
    sample = bench.Sample(
        entry, ObservationTriplet(depth, tactile, depth, entry),
        PointCloud.load(args.depth_cloud) if args.depth_cloud else None,
        PointCloud.load(args.tactile_cloud) if args.tactile_cloud else None,
        None,
    )
    cfg = bench.BenchConfig(timing_repeats=args.repeats, cnn_threshold=args.threshold)
    if args.gpis_n:
        cfg = bench.with_overrides(cfg, gpis={"n": args.gpis_n})
    params = {}
    if args.method in bench.CNN_MODES:
        if not args.checkpoint:
            raise SystemExit(f"--checkpoint is required for {args.method}")
        params[bench.CNN_MODES[args.method]] = load_checkpoint(args.checkpoint, dtype="float32")[0]
    mesh, seconds = bench.timed_complete(args.method, sample, params, cfg)
    save_obj(args.out, mesh)
    timing = {"method": args.method, "seconds": seconds, "repeats": cfg.timing_repeats,
              "vertices": len(mesh.vertices), "faces": len(mesh.faces)}
    timing_path = Path(args.timing) if args.timing else Path(args.out).with_suffix(".json")
    timing_path.write_text(json.dumps(timing, indent=1) + "\n")
    print(json.dumps(timing))
    return 0


def cmd_eval(args) -> int:
    manifest = bench.load_manifest(args.data)
    cfg = bench.BenchConfig.from_dict(manifest["config"])
    cfg = bench.with_overrides(cfg, timing_repeats=args.timing_repeats, cnn_threshold=args.threshold)
    methods = tuple(args.methods.split(",")) if args.methods else bench.METHODS
    params = _method_params(args)
    missing = [m for m in methods if m in bench.CNN_MODES and bench.CNN_MODES[m] not in params]
    if missing:
        raise SystemExit(f"methods {missing} need --ckpt-depth / --ckpt-both")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("")
    records = bench.run_benchmark(args.data, methods, params, cfg, results_path=out, log=log.info)
    paths = bench.write_reports(records, args.report_dir or out.parent)
    print(bench.summary_table(records, "jaccard"), end="")
    print(f"{len(records)} records -> {out}; tables: {', '.join(str(p) for p in paths.values())}")
    return 0


def cmd_report(args) -> int:
    records = bench.read_records(args.results)
    out_dir = Path(args.out_dir) if args.out_dir else Path(args.results).parent
    paths = bench.write_reports(records, out_dir)
    for name in ("jaccard", "hausdorff", "timing", "delta"):
        if name in paths:
            print(f"# {name}")
            print(paths[name].read_text(), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vtg", description="Visual-tactile shape completion toolkit.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("gen-shapes", help="two-part geometric shape triplets")
    s.add_argument("--out", required=True)
    s.add_argument("--count", type=int, default=2500)
    s.add_argument("--holdout", type=int, default=500, help="last N shapes go to the holdout split")
    s.add_argument("--dim", type=int, default=20)
    s.add_argument("--npts", type=int, default=40)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--primitives", help=f"comma list from {sorted(PROFILES)}")
    s.set_defaults(func=cmd_gen_shapes)

    s = sub.add_parser("gen-dataset", help="render the desk benchmark corpus")
    s.add_argument("--out", required=True)
    s.add_argument("--config", help="experiment JSON (defaults otherwise)")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_gen_dataset)

    s = sub.add_parser("train", help="fit the completion network on the train_view split")
    s.add_argument("--data", required=True)
    s.add_argument("--mode", required=True, choices=sorted(MODE_ALIASES))
    s.add_argument("--out", required=True, help="checkpoint path")
    s.add_argument("--epochs", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--lr", type=float, default=1e-4)
    s.add_argument("--batch-size", type=int, default=32)
    s.add_argument("--log", help="JSON-lines training log")
    s.add_argument("--validate", action="store_true",
                   help="score holdout_mesh after each epoch and keep the best epoch")
    s.add_argument("--threshold", type=float, default=0.5, help="binarization threshold for validation Jaccard")
    s.add_argument("--augment", action=argparse.BooleanOptionalAction, default=None,
                   help="random x/y flips and transposes of each batch (default from the dataset config)")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("complete", help="complete one observation with one method")
    s.add_argument("--method", required=True, choices=bench.METHODS)
    s.add_argument("--depth", required=True, help="depth occupancy .vtg")
    s.add_argument("--tactile", required=True, help="tactile occupancy .vtg")
    s.add_argument("--depth-cloud", help="depth points (.xyz); voxel centres are used otherwise")
    s.add_argument("--tactile-cloud", help="tactile points (.xyz)")
    s.add_argument("--checkpoint", help="network checkpoint for cnn-* methods")
    s.add_argument("--out", required=True, help="output OBJ")
    s.add_argument("--timing", help="timing JSON (default: next to the OBJ)")
    s.add_argument("--repeats", type=int, default=3)
    s.add_argument("--gpis-n", type=int, help=f"GPIS lattice resolution (default {GpisConfig().n})")
    s.add_argument("--threshold", type=float, default=0.5, help="iso level for meshing cnn-* output")
    s.set_defaults(func=cmd_complete)

    s = sub.add_parser("eval", help="score completion methods on a dataset")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True, help="results JSON-lines file")
    s.add_argument("--methods", help=f"comma list (default {','.join(bench.METHODS)})")
    s.add_argument("--ckpt-depth")
    s.add_argument("--ckpt-both")
    s.add_argument("--report-dir")
    s.add_argument("--timing-repeats", type=int)
    s.add_argument("--threshold", type=float, help="iso level for meshing cnn-* output (default from config)")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("report", help="summary tables from a results file")
    s.add_argument("--results", required=True)
    s.add_argument("--out-dir")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(message)s", stream=sys.stderr)
    start = time.perf_counter()
    code = args.func(args)
    log.info("done in %.1fs", time.perf_counter() - start)
    return code


if __name__ == "__main__":
    sys.exit(main())
