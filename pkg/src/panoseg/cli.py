"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 input parse error, 3 validation or
numeric error.  Every command prints a JSON summary on stdout.
"""

import argparse
import json
import logging
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import _accel
from .cloud import read_cloud, write_ply
from .errors import PanosegError, ParseError, ValidationError
from .evaluation import coverage, evaluate
from .fusion import (FusionParams, backproject_labels, parse_label_map, propagate_labels,
                     write_label_map)
from .prep import (SorParams, apply_rigid_transform, estimate_scan_center, load_transform,
                   parse_box, parse_center, prepare)
from .projection import (DEFAULT_NEAR_CLIP, ProjectionSpec, dilate_empty_pixels,
                         parse_pixel_map, parse_ppm, project_equirectangular,
                         write_pixel_map, write_ppm)
from .segmenter import FhParams, segment_color_graph
from .synth import builtin_room_scene, generate_scene, load_scene_spec

logger = logging.getLogger("panoseg")

EXIT_OK, EXIT_USAGE, EXIT_PARSE, EXIT_VALIDATION = 0, 1, 2, 3
MIN_SIZE, MAX_SIZE = 16, 16384


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# --------------------------------------------------------------------------
# small IO helpers; all reads go through here so errors carry the path

def _read_bytes(path, what):
    path = Path(path)
    try:
        return path.read_bytes()
    except FileNotFoundError:
        raise ParseError(f"{what} file not found", path=path) from None
    except IsADirectoryError:
        raise ParseError(f"{what} path is a directory", path=path) from None


def _with_path(fn, path, what):
    data = _read_bytes(path, what)
    try:
        return fn(data)
    except ParseError as exc:
        exc.path = Path(path)
        raise


def _load_cloud(path):
    _read_bytes(path, "cloud")
    try:
        return read_cloud(path)
    except ParseError as exc:
        exc.path = Path(path)
        raise


def _write(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)
    return str(path)


def _check_size(width, height):
    for flag, v in (("--width", width), ("--height", height)):
        if not MIN_SIZE <= v <= MAX_SIZE:
            raise ValidationError(f"{flag} must be within {MIN_SIZE}..{MAX_SIZE}, got {v}")


def _center_of(seg, text):
    mode, point = parse_center(text)
    return estimate_scan_center(seg, mode, point)


def _label_format(path):
    return "pgm" if Path(path).suffix.lower() == ".pgm" else "lbl1"


def _emit(summary):
    sys.stdout.write(json.dumps(summary, indent=2, sort_keys=True) + "\n")


# --------------------------------------------------------------------------
# stage functions shared by the single commands and the pipeline

def stage_prep(seg, transform_path=None, crop=None, sor_k=None, sor_alpha=None, threads=None):
    transform = load_transform(transform_path) if transform_path else None
    box = parse_box(crop) if crop else None
    sor = None
    if sor_k is not None:
        sor = SorParams(int(sor_k), float(sor_alpha) if sor_alpha is not None else 2.0)
    return prepare(seg, transform, box, sor, threads)


def stage_project(seg, center, width, height, dilate, near_clip=DEFAULT_NEAR_CLIP):
    _check_size(width, height)
    spec = ProjectionSpec(_center_of(seg, center), width, height, near_clip)
    pano, pmap, skipped = project_equirectangular(seg.cloud, spec)
    if dilate:
        pano = dilate_empty_pixels(pano, pmap, int(dilate))
    return spec, pano, pmap, skipped


def stage_segment(pano, seg_k, seg_min_size):
    return segment_color_graph(pano, FhParams(float(seg_k), int(seg_min_size)))


def stage_backproject(seg, pmap, lmap, center, mode, eps, fill_radius, fill_k, threads,
                      near_clip=DEFAULT_NEAR_CLIP):
    params = FusionParams(mode, float(eps), float(fill_radius), int(fill_k))
    spec = None
    if mode == "frustum":
        spec = ProjectionSpec(_center_of(seg, center), pmap.width, pmap.height, near_clip)
    out = backproject_labels(seg.cloud, pmap, lmap, params, spec)
    if params.fill_radius > 0:
        out = propagate_labels(out, params.fill_radius, params.fill_k, threads)
    return out


# --------------------------------------------------------------------------
# commands

def cmd_synth(args):
    if args.scene:
        spec = load_scene_spec(args.scene)
    else:
        spec = builtin_room_scene(occluder=args.occluder, sample_spacing=args.spacing)
    seg = generate_scene(spec)
    _write(args.out, write_ply(seg))
    return {"command": "synth", "points": len(seg),
            "labels": sorted(int(v) for v in np.unique(seg.labels)), "output": str(args.out)}


def cmd_prep(args):
    seg = _load_cloud(args.input)
    t0 = time.perf_counter()
    out, _, stats = stage_prep(seg, args.transform, args.crop, args.sor_k, args.sor_alpha,
                               args.threads)
    _write(args.out, write_ply(out))
    return {"command": "prep", **stats, "output": str(args.out),
            "timings": {"prep": time.perf_counter() - t0}}


def cmd_project(args):
    seg = _load_cloud(args.input)
    t0 = time.perf_counter()
    spec, pano, pmap, skipped = stage_project(seg, args.center, args.width, args.height,
                                              args.dilate, args.near_clip)
    elapsed = time.perf_counter() - t0
    _write(args.out, write_ppm(pano))
    if args.map:
        _write(args.map, write_pixel_map(pmap))
    return {"command": "project", "input_points": len(seg), "skipped_points": skipped,
            "occupied_pixels": int(pmap.occupied.sum()),
            "center": [float(c) for c in spec.center],
            "outputs": {"panorama": str(args.out), "map": args.map and str(args.map)},
            "timings": {"project": elapsed}}


def cmd_segment(args):
    pano = _with_path(parse_ppm, args.input, "panorama")
    t0 = time.perf_counter()
    lmap = stage_segment(pano, args.seg_k, args.seg_min_size)
    elapsed = time.perf_counter() - t0
    _write(args.out, write_label_map(lmap, _label_format(args.out)))
    return {"command": "segment", "segments": int(lmap.labels.max()), "output": str(args.out),
            "timings": {"segment": elapsed}}


def cmd_backproject(args):
    seg = _load_cloud(args.input)
    pmap = _with_path(parse_pixel_map, args.map, "map")
    lmap = _with_path(parse_label_map, args.labels, "label map")
    t0 = time.perf_counter()
    out = stage_backproject(seg, pmap, lmap, args.center, args.mode, args.frustum_eps,
                            args.fill_radius, args.fill_k, args.threads, args.near_clip)
    elapsed = time.perf_counter() - t0
    _write(args.out, write_ply(out))
    return {"command": "backproject", "points": len(out), "coverage": coverage(out),
            "output": str(args.out), "timings": {"backproject": elapsed}}


def cmd_eval(args):
    pred = _load_cloud(args.input)
    gt = _load_cloud(args.gt)
    report = evaluate(pred, gt, args.iou_threshold)
    if args.out:
        _write(args.out, report.to_json().encode())
    summary = {"command": "eval", "output": args.out and str(args.out)}
    summary.update(report.to_dict())
    return summary


# --------------------------------------------------------------------------
# pipeline

_DEFAULT_OUTPUTS = {
    "panorama": "panorama.ppm",
    "map": "map.ppmap",
    "labels": "labels.lbl",
    "segmented": "segmented.ply",
    "report": "report.json",
    "summary": "summary.json",
}


@dataclass
class PipelineConfig:
    input: str = None
    transform: str = None
    crop: str = None
    sor_k: int = None
    sor_alpha: float = 2.0
    center: str = "origin"
    width: int = 2048
    height: int = 1024
    dilate: int = 2
    near_clip: float = DEFAULT_NEAR_CLIP
    seg_k: float = 100.0
    seg_min_size: int = 50
    labels: str = None  # external label map replaces the built-in segmenter
    mode: str = "visible"
    frustum_eps: float = 0.01
    fill_radius: float = 0.0
    fill_k: int = 5
    gt: str = None
    threads: int = None
    outputs: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d, base=Path(".")):
        """Build from the nested JSON layout; relative paths resolve against ``base``."""
        def path(v):
            return None if v is None else str((base / v) if not Path(v).is_absolute() else v)

        prep = d.get("prep", {}) or {}
        proj = d.get("projection", {}) or {}
        segm = d.get("segmenter", {}) or {}
        fus = d.get("fusion", {}) or {}
        sor = prep.get("sor") or {}
        crop = prep.get("crop")
        if isinstance(crop, (list, tuple)):
            crop = ",".join(str(v) for v in crop)
        center = d.get("center", "origin")
        if isinstance(center, (list, tuple)):
            center = ",".join(str(v) for v in center)
        builtin = segm.get("builtin", {}) or {}
        cfg = cls(
            input=path(d.get("input")),
            transform=path(prep.get("transform")),
            crop=crop,
            sor_k=sor.get("k"),
            sor_alpha=sor.get("alpha", 2.0),
            center=center,
            width=proj.get("width", 2048),
            height=proj.get("height", 1024),
            dilate=proj.get("dilate", 2),
            near_clip=proj.get("near_clip", DEFAULT_NEAR_CLIP),
            seg_k=builtin.get("k", 100.0),
            seg_min_size=builtin.get("min_size", 50),
            labels=path(segm.get("external")),
            mode=fus.get("mode", "visible"),
            frustum_eps=fus.get("frustum_eps", 0.01),
            fill_radius=fus.get("fill_radius", 0.0),
            fill_k=fus.get("fill_k", 5),
            gt=path(d.get("ground_truth")),
            threads=d.get("threads"),
            outputs={k: path(v) for k, v in (d.get("outputs") or {}).items()},
        )
        unknown = set(cfg.outputs) - set(_DEFAULT_OUTPUTS)
        if unknown:
            raise ValidationError(f"unknown output keys {sorted(unknown)}")
        return cfg


def _load_config(path):
    data = _read_bytes(path, "config")
    try:
        d = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", offset=exc.pos, path=path) from None
    if not isinstance(d, dict):
        raise ParseError("config must be a JSON object", offset=0, path=path)
    return PipelineConfig.from_dict(d, Path(path).parent)


_OVERRIDES = ("input", "center", "width", "height", "dilate", "seg_k", "seg_min_size",
              "labels", "mode", "frustum_eps", "fill_radius", "fill_k", "gt", "threads",
              "sor_k", "sor_alpha", "near_clip")


def _gt_for(gt_seg, raw_len, prepped, transform_path, kept):
    """Bring a ground-truth cloud into the prepped cloud's frame and point order."""
    if len(gt_seg) == raw_len:
        if transform_path:
            gt_seg = apply_rigid_transform(gt_seg, load_transform(transform_path))
        return gt_seg.subset(kept)
    if len(gt_seg) == len(prepped):
        return gt_seg
    raise ValidationError(
        f"ground truth has {len(gt_seg)} points; expected {raw_len} (raw) or {len(prepped)}")


def run_pipeline(cfg):
    """Run every stage; returns the summary dict."""
    if cfg.input is None:
        raise UsageError("pipeline needs an input cloud (--in or config 'input')")
    _check_size(cfg.width, cfg.height)
    outputs = {k: cfg.outputs.get(k) for k in _DEFAULT_OUTPUTS}
    timings = {}
    summary = {"command": "pipeline", "backend": _accel.BACKEND,
               "threads": _accel.set_threads(cfg.threads)}

    t = time.perf_counter()
    raw = _load_cloud(cfg.input)
    timings["read"] = time.perf_counter() - t
    summary["input_points"] = len(raw)

    t = time.perf_counter()
    seg, kept, stats = stage_prep(raw, cfg.transform, cfg.crop, cfg.sor_k, cfg.sor_alpha,
                                  cfg.threads)
    timings["prep"] = time.perf_counter() - t
    summary["prep"] = stats

    t = time.perf_counter()
    spec, pano, pmap, skipped = stage_project(seg, cfg.center, cfg.width, cfg.height,
                                              cfg.dilate, cfg.near_clip)
    timings["project"] = time.perf_counter() - t
    summary["skipped_points"] = skipped
    summary["occupied_pixels"] = int(pmap.occupied.sum())
    summary["center"] = [float(c) for c in spec.center]
    if outputs["panorama"]:
        _write(outputs["panorama"], write_ppm(pano))
    if outputs["map"]:
        _write(outputs["map"], write_pixel_map(pmap))

    t = time.perf_counter()
    if cfg.labels:
        lmap = _with_path(parse_label_map, cfg.labels, "label map")
        summary["segmenter"] = "external"
    else:
        lmap = stage_segment(pano, cfg.seg_k, cfg.seg_min_size)
        summary["segmenter"] = "builtin"
    timings["segment"] = time.perf_counter() - t
    summary["segments"] = int(lmap.labels.max()) if lmap.labels.size else 0
    if outputs["labels"]:
        _write(outputs["labels"], write_label_map(lmap, _label_format(outputs["labels"])))

    t = time.perf_counter()
    out = stage_backproject(seg, pmap, lmap, cfg.center, cfg.mode, cfg.frustum_eps,
                            cfg.fill_radius, cfg.fill_k, cfg.threads, cfg.near_clip)
    timings["backproject"] = time.perf_counter() - t
    summary["coverage"] = coverage(out) if len(out) else 0.0
    if outputs["segmented"]:
        _write(outputs["segmented"], write_ply(out))

    if cfg.gt:
        t = time.perf_counter()
        gt = _gt_for(_load_cloud(cfg.gt), len(raw), seg, cfg.transform, kept)
        report = evaluate(out, gt)
        timings["eval"] = time.perf_counter() - t
        summary["report"] = report.to_dict()
        if outputs["report"]:
            _write(outputs["report"], report.to_json().encode())

    summary["timings"] = timings
    summary["outputs"] = {k: v for k, v in outputs.items() if v}
    if outputs["summary"]:
        _write(outputs["summary"], (json.dumps(summary, indent=2, sort_keys=True) + "\n").encode())
    return summary


def cmd_pipeline(args):
    cfg = _load_config(args.config) if args.config else PipelineConfig()
    # flags win over the config file
    overrides = {k: getattr(args, k) for k in _OVERRIDES if getattr(args, k, None) is not None}
    cfg = replace(cfg, **overrides)
    if args.out:
        out_dir = Path(args.out)
        cfg.outputs = {k: str(out_dir / v) for k, v in _DEFAULT_OUTPUTS.items()}
        if not cfg.gt:
            cfg.outputs.pop("report")
    elif not cfg.outputs:
        raise UsageError("pipeline needs output paths (--out DIR or config 'outputs')")
    return run_pipeline(cfg)


# --------------------------------------------------------------------------
# argument parsing

def _add_common(p):
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads, 0 = auto (default: $PANOSEG_THREADS or 0)")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_projection(p, defaults=True):
    d = (lambda v: v) if defaults else (lambda v: None)
    p.add_argument("--center", default=d("origin"), help="origin|centroid|bbox|x,y,z")
    p.add_argument("--near-clip", dest="near_clip", type=float, default=d(DEFAULT_NEAR_CLIP))


def build_parser():
    parser = _Parser(prog="panoseg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("synth", help="write a synthetic labeled scene")
    p.add_argument("--out", required=True)
    p.add_argument("--scene", help="scene spec JSON (default: built-in room)")
    p.add_argument("--occluder", action="store_true")
    p.add_argument("--spacing", type=float, default=0.01)
    _add_common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("prep", help="transform, crop and denoise a cloud")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--transform")
    p.add_argument("--crop", help="minx,miny,minz,maxx,maxy,maxz")
    p.add_argument("--sor-k", dest="sor_k", type=int)
    p.add_argument("--sor-alpha", dest="sor_alpha", type=float, default=2.0)
    _add_common(p)
    p.set_defaults(func=cmd_prep)

    p = sub.add_parser("project", help="render a panorama and pixel-to-point map")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True, help="panorama (PPM)")
    p.add_argument("--map", help="pixel-to-point map (PPMAP1)")
    p.add_argument("--width", type=int, default=2048)
    p.add_argument("--height", type=int, default=1024)
    p.add_argument("--dilate", type=int, default=0)
    _add_projection(p)
    _add_common(p)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("segment", help="segment a panorama with the built-in segmenter")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True, help="label map (.lbl or .pgm)")
    p.add_argument("--seg-k", dest="seg_k", type=float, default=100.0)
    p.add_argument("--seg-min-size", dest="seg_min_size", type=int, default=50)
    _add_common(p)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("backproject", help="transfer pixel labels onto the cloud")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--map", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=("visible", "frustum"), default="visible")
    p.add_argument("--frustum-eps", dest="frustum_eps", type=float, default=0.01)
    p.add_argument("--fill-radius", dest="fill_radius", type=float, default=0.0)
    p.add_argument("--fill-k", dest="fill_k", type=int, default=5)
    _add_projection(p)
    _add_common(p)
    p.set_defaults(func=cmd_backproject)

    p = sub.add_parser("eval", help="compare a segmented cloud with ground truth")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", help="report JSON")
    p.add_argument("--iou-threshold", dest="iou_threshold", type=float, default=0.5)
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pipeline", help="run every stage from a JSON config")
    p.add_argument("--config")
    p.add_argument("--in", dest="input")
    p.add_argument("--out", help="output directory (overrides config outputs)")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--dilate", type=int)
    p.add_argument("--seg-k", dest="seg_k", type=float)
    p.add_argument("--seg-min-size", dest="seg_min_size", type=int)
    p.add_argument("--labels")
    p.add_argument("--mode", choices=("visible", "frustum"))
    p.add_argument("--frustum-eps", dest="frustum_eps", type=float)
    p.add_argument("--fill-radius", dest="fill_radius", type=float)
    p.add_argument("--fill-k", dest="fill_k", type=int)
    p.add_argument("--gt")
    p.add_argument("--sor-k", dest="sor_k", type=int)
    p.add_argument("--sor-alpha", dest="sor_alpha", type=float)
    _add_projection(p, defaults=False)
    _add_common(p)
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("panoseg: a command is required (see --help)")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        _accel.set_threads(args.threads)
        summary = args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (ValidationError, PanosegError, FloatingPointError, OverflowError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ValueError as exc:
        # thread counts and similar plain-argument problems
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    _emit(summary)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
