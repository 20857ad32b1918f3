"""Desk-scale benchmark: corpus generation, splits, evaluation and reports.

A dataset directory looks like::

    manifest.json
    meshes/m000.obj                      object frame, +z up
    train_view/m000_v03_depth.vtg        depth / tactile / gt occupancy
    train_view/m000_v03_depth.xyz        clouds used by the baselines
    train_view/m000_v03_gt.obj           ground truth in the camera frame
    ...

Everything downstream (training, evaluation) reads only these files, so a
manifest fully determines the metric values.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .baselines import (GpisConfig, convex_hull_completion, cnn_completion, gpis_completion,
                        partial_completion)
from .grid import GridFrame, InvalidInputError, PointCloud, jaccard, read_vtg, write_vtg
from .mesh import TriMesh, load_obj, save_obj
from .meshing import hausdorff, mesh_to_eval_grid
from .net import NetConfig, TrainConfig, TrainResult, train
from .synth.objects import FAMILIES, ObjectSpec, gen_object
from .synth.render import CameraModel, look_at
from .synth.tactile import TactileSampleConfig, make_rng
from .synth.triplet import SPLIT_TAGS, ObservationTriplet, observe

METHODS = ("partial", "hull", "gpis", "cnn-depth", "cnn-tactile")
METHOD_LABELS = {
    "partial": "Partial",
    "hull": "Convex Hull",
    "gpis": "GPIS",
    "cnn-depth": "Depth CNN",
    "cnn-tactile": "Tactile+Depth CNN",
    "oracle": "Oracle",
}
CNN_MODES = {"cnn-depth": "depth_only", "cnn-tactile": "tactile_and_depth"}
MANIFEST = "manifest.json"


@dataclass(frozen=True)
class BenchConfig:
    """Everything that defines one experiment; serialized into the manifest."""

    seed: int = 0
    n_meshes: int = 40
    n_holdout: int = 10
    views_per_mesh: int = 8
    holdout_views_per_mesh: int = 2
    azimuths: int = 8
    elevations: tuple = (15.0, 40.0)
    distance: float = 0.8
    grid_dim: int = 40
    eval_dim: int = 80
    padding: float = 1.1
    npts: int = 40
    object_resolution: int = 64
    camera: dict = field(default_factory=lambda: {"width": 160, "height": 120, "fx": 120.0, "fy": 120.0})
    eval_views: dict = field(default_factory=lambda: {"train_view": 1, "holdout_view": 1, "holdout_mesh": 3})
    hausdorff_samples: int = 10_000
    timing_repeats: int = 3
    gpis: dict = field(default_factory=dict)
    epochs: int = 60
    train_seed: int = 1
    augment: bool = False
    cnn_threshold: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "elevations", tuple(float(e) for e in self.elevations))
        if not 0 < self.n_holdout < self.n_meshes:
            raise InvalidInputError("need 0 < n_holdout < n_meshes")
        if self.views_per_mesh + self.holdout_views_per_mesh > self.n_poses:
            raise InvalidInputError("not enough poses in the view lattice for the requested views")
        if not 0 < self.cnn_threshold < 1:
            raise InvalidInputError("cnn_threshold must lie in (0, 1)")
        if set(self.eval_views) - set(SPLIT_TAGS):
            raise InvalidInputError(f"eval_views keys must be split tags {SPLIT_TAGS}")

    @property
    def n_poses(self) -> int:
        return self.azimuths * len(self.elevations)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["elevations"] = list(self.elevations)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "BenchConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidInputError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "BenchConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def camera_model(self, pose=None) -> CameraModel:
        cam = CameraModel(**self.camera)
        return cam if pose is None else cam.with_pose(pose)


@dataclass(frozen=True)
class SplitSpec:
    """Which meshes train the network, which are held out, and how views are drawn."""

    train_meshes: tuple
    holdout_meshes: tuple
    views_per_mesh: int = 8
    holdout_views_per_mesh: int = 2
    n_poses: int = 16
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "train_meshes", tuple(self.train_meshes))
        object.__setattr__(self, "holdout_meshes", tuple(self.holdout_meshes))
        if set(self.train_meshes) & set(self.holdout_meshes):
            raise InvalidInputError("holdout meshes overlap the training meshes")
        if self.views_per_mesh + self.holdout_views_per_mesh > self.n_poses:
            raise InvalidInputError("not enough poses for the requested views")

    @classmethod
    def from_config(cls, cfg: BenchConfig) -> "SplitSpec":
        ids = mesh_ids(cfg.n_meshes)
        cut = cfg.n_meshes - cfg.n_holdout
        return cls(ids[:cut], ids[cut:], cfg.views_per_mesh, cfg.holdout_views_per_mesh, cfg.n_poses, cfg.seed)

    def views(self, mesh_id: str) -> dict[str, list[int]]:
        """Pose indices per split tag for one mesh."""
        order = make_rng(self.seed, 0x71E, _mesh_index(mesh_id)).permutation(self.n_poses)
        if mesh_id in self.holdout_meshes:
            return {"holdout_mesh": sorted(order[:self.views_per_mesh].tolist())}
        if mesh_id not in self.train_meshes:
            raise InvalidInputError(f"unknown mesh id {mesh_id!r}")
        head = self.views_per_mesh
        return {"train_view": sorted(order[:head].tolist()),
                "holdout_view": sorted(order[head:head + self.holdout_views_per_mesh].tolist())}


def mesh_ids(n: int) -> list[str]:
    return [f"m{k:03d}" for k in range(n)]


def _mesh_index(mesh_id: str) -> int:
    return int(mesh_id[1:])


def object_spec(cfg: BenchConfig, mesh_id: str) -> ObjectSpec:
    """Families cycle over mesh ids, so every family shows up in both splits."""
    k = _mesh_index(mesh_id)
    families = sorted(FAMILIES)
    seed = int(make_rng(cfg.seed, 0xC0, k).integers(2 ** 63))
    return ObjectSpec(families[k % len(families)], seed, cfg.object_resolution)


def pose_lattice(cfg: BenchConfig) -> list[np.ndarray]:
    """Camera-from-object transforms orbiting the object at fixed distance."""
    poses = []
    for el in cfg.elevations:
        for k in range(cfg.azimuths):
            az = 2 * np.pi * k / cfg.azimuths
            e = np.radians(el)
            eye = cfg.distance * np.array([np.cos(e) * np.cos(az), np.cos(e) * np.sin(az), np.sin(e)])
            poses.append(look_at(eye, (0.0, 0.0, 0.0)))
    return poses


# --- dataset ---------------------------------------------------------------------------

def _stem(mesh_id: str, view: int) -> str:
    return f"{mesh_id}_v{view:02d}"


def gen_dataset(root, cfg: BenchConfig | None = None, log=None) -> dict:
    """Render every (mesh, view) of the desk corpus into ``root``; returns the manifest."""
    cfg = cfg or BenchConfig()
    root = Path(root)
    split = SplitSpec.from_config(cfg)
    poses = pose_lattice(cfg)
    (root / "meshes").mkdir(parents=True, exist_ok=True)
    for tag in SPLIT_TAGS:
        (root / tag).mkdir(exist_ok=True)
    entries = []
    for mesh_id in split.train_meshes + split.holdout_meshes:
        spec = object_spec(cfg, mesh_id)
        mesh = gen_object(spec)
        save_obj(root / "meshes" / f"{mesh_id}.obj", mesh)
        for tag, views in split.views(mesh_id).items():
            for view in views:
                pose = poses[view]
                cam = cfg.camera_model(pose)
                frame = GridFrame.around_mesh(mesh.transformed(pose), cfg.grid_dim, cfg.padding).as_float32()
                tactile_seed = int(make_rng(cfg.seed, 0x7AC, _mesh_index(mesh_id), view).integers(2 ** 63))
                obs = observe(mesh, cam, TactileSampleConfig(cfg.npts, tactile_seed), frame)
                stem = _stem(mesh_id, view)
                files = {
                    "depth": f"{tag}/{stem}_depth.vtg",
                    "tactile": f"{tag}/{stem}_tactile.vtg",
                    "gt": f"{tag}/{stem}_gt.vtg",
                    "depth_cloud": f"{tag}/{stem}_depth.xyz",
                    "tactile_cloud": f"{tag}/{stem}_tactile.xyz",
                    "gt_mesh": f"{tag}/{stem}_gt.obj",
                }
                t = obs.triplet
                write_vtg(root / files["depth"], t.depth)
                write_vtg(root / files["tactile"], t.tactile)
                write_vtg(root / files["gt"], t.ground_truth)
                obs.depth_cloud.save(root / files["depth_cloud"])
                obs.tactile_cloud.save(root / files["tactile_cloud"])
                save_obj(root / files["gt_mesh"], obs.mesh)
                entries.append({
                    "split": tag, "mesh": mesh_id, "view": view, "family": spec.family,
                    "object_seed": spec.seed, "tactile_seed": tactile_seed,
                    "pose": pose.tolist(), "files": files,
                    "frame": {"dims": list(frame.dims), "voxel_size": frame.voxel_size, "origin": list(frame.origin)},
                    "depth_points": len(obs.depth_cloud), "tactile_points": len(obs.tactile_cloud),
                })
                if log is not None:
                    log(f"{tag} {stem} ({spec.family})")
    manifest = {
        "config": cfg.to_dict(),
        "camera": cfg.camera_model().to_dict(),
        "splits": {"train_meshes": list(split.train_meshes), "holdout_meshes": list(split.holdout_meshes)},
        "entries": entries,
    }
    (root / MANIFEST).write_text(json.dumps(manifest, indent=1))
    return manifest


def load_manifest(root) -> dict:
    path = Path(root) / MANIFEST
    if not path.exists():
        raise InvalidInputError(f"no {MANIFEST} in {root}")
    return json.loads(path.read_text())


@dataclass(frozen=True, eq=False)
class Sample:
    entry: dict
    triplet: ObservationTriplet
    depth_cloud: PointCloud | None
    tactile_cloud: PointCloud | None
    gt_mesh: TriMesh | None

    @property
    def key(self) -> str:
        return _stem(self.entry["mesh"], self.entry["view"])


def _load_cloud(path: Path) -> PointCloud:
    if path.stat().st_size == 0:
        return PointCloud.empty()
    return PointCloud.load(path)


def load_sample(root, entry: dict) -> Sample:
    root = Path(root)
    files = entry["files"]
    triplet = ObservationTriplet(read_vtg(root / files["depth"]), read_vtg(root / files["tactile"]),
                                 read_vtg(root / files["gt"]), dict(entry))
    clouds = [_load_cloud(root / files[k]) if k in files else None for k in ("depth_cloud", "tactile_cloud")]
    gt_mesh = load_obj(root / files["gt_mesh"]) if "gt_mesh" in files else None
    return Sample(entry, triplet, clouds[0], clouds[1], gt_mesh)


def select_entries(manifest: dict, splits=None, per_mesh: dict | None = None) -> list[dict]:
    """Manifest entries in the given splits, keeping the first ``per_mesh[split]`` views of each mesh."""
    splits = tuple(splits or SPLIT_TAGS)
    seen: dict = {}
    out = []
    for e in manifest["entries"]:
        if e["split"] not in splits:
            continue
        key = (e["split"], e["mesh"])
        seen[key] = seen.get(key, 0) + 1
        if per_mesh is not None and seen[key] > per_mesh.get(e["split"], 0):
            continue
        out.append(e)
    return out


def training_triplets(root, split: str = "train_view") -> list[ObservationTriplet]:
    manifest = load_manifest(root)
    return [load_sample(root, e).triplet for e in select_entries(manifest, (split,))]


def train_network(root, mode: str, cfg: BenchConfig | None = None, log=None) -> TrainResult:
    """Fit one network on the ``train_view`` split of a dataset directory."""
    manifest = load_manifest(root)
    cfg = cfg or BenchConfig.from_dict(manifest["config"])
    entries = select_entries(manifest, ("train_view",))
    holdout = set(manifest["splits"]["holdout_meshes"])
    leaked = sorted({e["mesh"] for e in entries} & holdout)
    if leaked:
        raise InvalidInputError(f"holdout meshes in the training split: {leaked}")
    triplets = [load_sample(root, e).triplet for e in entries]
    dim = triplets[0].frame.dims[0]
    return train(triplets, NetConfig(dim), TrainConfig(epochs=cfg.epochs, seed=cfg.train_seed), mode, log=log,
                 threshold=cfg.cnn_threshold, augment=cfg.augment)


# --- evaluation -------------------------------------------------------------------------

@dataclass(frozen=True)
class EvalRecord:
    method: str
    split: str
    mesh: str
    view: int
    jaccard: float | None
    hausdorff_mm: float | None
    seconds: float | None
    status: str = "ok"
    error: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_json(self) -> str:
        return json.dumps(asdict(self))

    @classmethod
    def from_json(cls, line: str) -> "EvalRecord":
        return cls(**json.loads(line))


def complete(method: str, sample: Sample, params: dict | None = None, cfg: BenchConfig | None = None) -> TriMesh:
    """Run one completion method on a loaded sample (camera frame in, camera frame out)."""
    cfg = cfg or BenchConfig()
    t = sample.triplet
    if method == "oracle":
        return sample.gt_mesh
    if method in CNN_MODES:
        mode = CNN_MODES[method]
        if not params or mode not in params:
            raise InvalidInputError(f"{method} needs trained parameters for {mode}")
        return cnn_completion(params[mode], t.depth, t.tactile, mode, threshold=cfg.cnn_threshold)
    depth = sample.depth_cloud if sample.depth_cloud is not None else t.depth.to_points()
    tactile = sample.tactile_cloud if sample.tactile_cloud is not None else t.tactile.to_points()
    frame80 = t.frame.resampled(cfg.eval_dim)
    if method == "partial":
        return partial_completion(depth, tactile, frame80)
    if method == "hull":
        return convex_hull_completion(depth, tactile, max_edge=frame80.voxel_size)
    if method == "gpis":
        return gpis_completion(depth, tactile, GpisConfig(**cfg.gpis), (0.0, 0.0, 0.0), t.frame)
    raise InvalidInputError(f"unknown method {method!r}; expected one of {METHODS + ('oracle',)}")


def timed_complete(method: str, sample: Sample, params=None, cfg: BenchConfig | None = None):
    """Completion mesh and the median wall-clock time of ``cfg.timing_repeats`` runs."""
    cfg = cfg or BenchConfig()
    times = []
    mesh = None
    for _ in range(max(1, cfg.timing_repeats)):
        start = time.perf_counter()
        out = complete(method, sample, params, cfg)
        times.append(time.perf_counter() - start)
        mesh = out if mesh is None else mesh
    return mesh, float(np.median(times))


def evaluate_sample(sample: Sample, methods, params=None, cfg: BenchConfig | None = None) -> list[EvalRecord]:
    cfg = cfg or BenchConfig()
    e = sample.entry
    frame80 = sample.triplet.frame.resampled(cfg.eval_dim)
    gt80 = mesh_to_eval_grid(sample.gt_mesh, frame80)
    out = []
    for method in methods:
        try:
            mesh, seconds = timed_complete(method, sample, params, cfg)
            if mesh.is_empty:
                raise InvalidInputError("empty completion")
            jac = jaccard(mesh_to_eval_grid(mesh, frame80), gt80)
            hd = hausdorff(mesh, sample.gt_mesh, cfg.hausdorff_samples, seed=cfg.seed).symmetric_mean
            out.append(EvalRecord(method, e["split"], e["mesh"], e["view"], jac, hd, seconds))
        except (ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
            out.append(EvalRecord(method, e["split"], e["mesh"], e["view"], None, None, None,
                                  "failed", f"{type(exc).__name__}: {exc}"))
    return out


def run_benchmark(root, methods=METHODS, params: dict | None = None, cfg: BenchConfig | None = None,
                  results_path=None, log=None) -> list[EvalRecord]:
    """Score every selected sample with every method.

    ``params`` maps network modes (``depth_only``, ``tactile_and_depth``) to
    trained parameters. With ``results_path`` each record is appended to a
    JSON-lines file as soon as it is computed.
    """
    manifest = load_manifest(root)
    cfg = cfg or BenchConfig.from_dict(manifest["config"])
    records = []
    sink = open(results_path, "a") if results_path else None
    try:
        for entry in select_entries(manifest, per_mesh=cfg.eval_views):
            sample = load_sample(root, entry)
            recs = evaluate_sample(sample, methods, params, cfg)
            for r in recs:
                if sink:
                    sink.write(r.to_json() + "\n")
                    sink.flush()
            records.extend(recs)
            if log is not None:
                log(" ".join(f"{r.method}={r.jaccard:.3f}" if r.ok else f"{r.method}=FAIL" for r in recs)
                    + f"  [{entry['split']} {sample.key}]")
    finally:
        if sink:
            sink.close()
    return records


def read_records(path) -> list[EvalRecord]:
    return [EvalRecord.from_json(line) for line in Path(path).read_text().splitlines() if line.strip()]


# --- reports ---------------------------------------------------------------------------

def _mean(values) -> float:
    values = list(values)
    return float(np.mean(values)) if values else math.nan


def aggregate(records) -> dict:
    """Per (method, split) means over successful records; split ``"all"`` pools every split."""
    out = {}
    methods = list(dict.fromkeys(r.method for r in records))
    for method in methods:
        for split in SPLIT_TAGS + ("all",):
            rs = [r for r in records if r.method == method and (split == "all" or r.split == split)]
            if not rs:
                continue
            good = [r for r in rs if r.ok]
            out[(method, split)] = {
                "jaccard": _mean(r.jaccard for r in good),
                "hausdorff_mm": _mean(r.hausdorff_mm for r in good),
                "seconds": _mean(r.seconds for r in good),
                "n": len(good),
                "failed": len(rs) - len(good),
            }
    return out


def summary_table(records, metric: str = "jaccard") -> str:
    """CSV with one row per method and one column per split (plus pooled and failures)."""
    agg = aggregate(records)
    methods = list(dict.fromkeys(r.method for r in records))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method"] + list(SPLIT_TAGS) + ["all", "failed"])
    for m in methods:
        row = [METHOD_LABELS.get(m, m)]
        for split in SPLIT_TAGS + ("all",):
            a = agg.get((m, split))
            row.append("" if a is None or math.isnan(a[metric]) else f"{a[metric]:.6g}")
        row.append(agg[(m, "all")]["failed"])
        w.writerow(row)
    return buf.getvalue()


def delta_report(records, better: str = "cnn-tactile", base: str = "cnn-depth") -> list[dict]:
    """Mean per-sample Jaccard gain of ``better`` over ``base``, split by split.

    Only samples where both methods succeeded are paired.
    """
    present = {r.method for r in records}
    for m in (better, base):
        if m not in present:
            raise InvalidInputError(f"method {m!r} missing from records")
    score = {(r.method, r.split, r.mesh, r.view): r.jaccard for r in records if r.ok}
    rows = []
    for split in SPLIT_TAGS:
        keys = sorted({(r.mesh, r.view) for r in records if r.split == split})
        deltas = [score[(better, split) + k] - score[(base, split) + k] for k in keys
                  if (better, split) + k in score and (base, split) + k in score]
        if deltas:
            rows.append({"split": split, "delta": float(np.mean(deltas)), "n": len(deltas)})
    return rows


def delta_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["split", "delta_jaccard", "n"])
    for r in rows:
        w.writerow([r["split"], f"{r['delta']:.6g}", r["n"]])
    return buf.getvalue()


def write_reports(records, out_dir) -> dict[str, Path]:
    """Jaccard / Hausdorff / timing tables and the delta table as CSV files."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {}
    for name, metric in (("jaccard", "jaccard"), ("hausdorff", "hausdorff_mm"), ("timing", "seconds")):
        paths[name] = out_dir / f"{name}.csv"
        paths[name].write_text(summary_table(records, metric))
    methods = {r.method for r in records}
    if {"cnn-tactile", "cnn-depth"} <= methods:
        paths["delta"] = out_dir / "delta.csv"
        paths["delta"].write_text(delta_csv(delta_report(records)))
    return paths


def with_overrides(cfg: BenchConfig, **changes) -> BenchConfig:
    return replace(cfg, **{k: v for k, v in changes.items() if v is not None})
