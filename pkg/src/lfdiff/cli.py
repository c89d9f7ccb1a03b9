"""Command-line entry points: gen-data, train, sample, eval, refocus, export-sr.

Exit status is 0 on success, 2 on invalid input and 3 on numerical abort.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import lfio
from .analysis import RefocusParams, estimate_epi_slope, lf_metrics, refocus
from .checkpoint import load_checkpoint
from .config import RunConfig, format_config, load_config
from .diffusion import SamplerConfig, make_schedule
from .errors import DegenerateRegionError, LFError, NumericalAbort
from .inference import synthesize
from .lightfield import central_view, warp_central_view
from .scenes import crop_patches, export_sr_pairs, generate_scene, ingest_depth, random_scene_spec
from .training import DATASET_NAME, train

EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


def _out_dir(args) -> Path:
    if args.out is None:
        raise LFError("--out is required")
    return Path(args.out)


def cmd_gen_data(cfg: RunConfig, out_dir, log=print) -> dict:
    d = cfg.data
    out_dir = Path(out_dir)
    try:
        (out_dir / "scenes").mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise LFError(f"cannot write to {out_dir}: {e}") from None
    scenes, patches = [], []
    splits = {"train": [], "val": []}
    for i in range(d.scenes + d.val_scenes):
        split = "train" if i < d.scenes else "val"
        rng = np.random.default_rng([d.seed, i])
        spec = random_scene_spec(rng, d.U, d.V, d.H, d.W, d.disparity_range, d.max_layers)
        scene_seed = int(rng.integers(0, 2**31))
        sid = f"{i:05d}"
        lf, _, disp = generate_scene(spec, scene_seed)
        lfio.write_lightfield(out_dir / "scenes" / sid, lf, 16, disp, d.disparity_range)
        for tp in crop_patches(lf, disp, d.patch, d.stride, seed=scene_seed, jitter=d.jitter):
            patches.append({"scene": sid, "origin": list(tp.origin), "size": d.patch})
        scenes.append({"id": sid, "seed": scene_seed, "split": split, "spec": spec.to_dict()})
        splits[split].append(sid)
    manifest = {"seed": d.seed, "data": json.loads(json.dumps(d.__dict__)),
                "scenes": scenes, "splits": splits, "patches": patches}
    lfio.write_json_atomic(out_dir / DATASET_NAME, manifest)
    log(f"{len(scenes)} scenes, {len(patches)} patches -> {out_dir}")
    return manifest


def cmd_train(cfg: RunConfig, dataset, out_dir, log=print) -> dict:
    (Path(out_dir)).mkdir(parents=True, exist_ok=True)
    (Path(out_dir) / "config.cfg").write_text(format_config(cfg))
    summary = train(cfg, dataset, out_dir, log)
    lfio.write_json_atomic(Path(out_dir) / "train_summary.json", summary)
    log(f"lead loss {summary['lead_loss']:.4f}, trail loss {summary['trail_loss']:.4f}")
    return summary


def cmd_sample(cfg: RunConfig, ckpt, image_path, depth_path, out_dir, center_only=False, log=print):
    s = cfg.sample
    model, header = load_checkpoint(ckpt)
    center = lfio.read_png(image_path)
    d_norm = ingest_depth(depth_path)
    diff = cfg.diffusion
    sched = make_schedule(diff.T, diff.beta_1, diff.beta_T)
    scfg = SamplerConfig(s.sampler, s.steps, s.eta, s.seed)
    lf = synthesize(model, center, d_norm, s.disparity_range, scfg, sched, center_only)
    sidecar = {
        "seed": s.seed, "sampler": s.sampler, "steps": s.steps if s.sampler == "ddim" else diff.T,
        "eta": s.eta, "T": diff.T, "beta_1": diff.beta_1, "beta_T": diff.beta_T,
        "disparity_range": list(s.disparity_range), "center_only": bool(center_only),
    }
    lfio.write_lightfield(out_dir, lf, 16, disparity_range=s.disparity_range,
                          extra_files={"sample.json": sidecar})
    log(f"sampled {lf.shape[0]}x{lf.shape[1]} views of {lf.shape[2]}x{lf.shape[3]} -> {out_dir}")
    return lf


def _slope_or_none(lf, region):
    try:
        return estimate_epi_slope(lf, region)
    except DegenerateRegionError:
        return None


def cmd_eval(lf_dirs, reference, region=None, warp_baseline=False) -> dict:
    ref, ref_meta = lfio.read_lightfield(reference)
    candidates = [(str(p), lfio.read_lightfield(p)[0]) for p in lf_dirs]
    if warp_baseline:
        disp = lfio.read_lightfield_disparity(reference)
        U, V = ref.shape[:2]
        candidates.append(("warp-baseline", np.clip(warp_central_view(central_view(ref), disp, U, V), 0, 1)))
    if not candidates:
        raise LFError("nothing to evaluate")
    results = []
    for name, lf in candidates:
        if lf.shape != ref.shape:
            raise LFError(f"{name} has shape {lf.shape}, reference has {ref.shape}")
        m = lf_metrics(lf, ref)
        m["epi_slope"] = _slope_or_none(lf, region)
        m["name"] = name
        results.append(m)
    return {"reference": str(reference), "reference_epi_slope": _slope_or_none(ref, region),
            "region": list(region) if region else None, "results": results}


def cmd_refocus(lf_dir, slope: float, out_path, bit_depth: int = 16) -> np.ndarray:
    lf, _ = lfio.read_lightfield(lf_dir)
    img = refocus(lf, RefocusParams(slope))
    Path(out_path).parent.mkdir(parents=True, exist_ok=True)
    lfio.write_png(out_path, img, bit_depth)
    return img


def cmd_export_sr(lf_dirs, factor: int, out_dir) -> dict:
    lfs, prov = [], []
    for p in lf_dirs:
        lf, meta = lfio.read_lightfield(p)
        lfs.append(lf)
        side = Path(p) / "sample.json"
        info = json.loads(side.read_text()) if side.exists() else {}
        info.setdefault("disparity_range", meta.get("disparity_range"))
        info["source"] = str(p)
        prov.append(info)
    return export_sr_pairs(lfs, factor, out_dir, prov)


def _dump_json(obj, path=None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True)
    if path is None:
        print(text)
    else:
        lfio.write_bytes_atomic(path, (text + "\n").encode())


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration file (section.key = value)")
    common.add_argument("--seed", type=int, help="override the seed of the command's config section")
    common.add_argument("--out", help="output directory or file")

    ap = argparse.ArgumentParser(prog="lfdiff", description="Light-field synthesis with conditional diffusion.")
    sub = ap.add_subparsers(dest="command", required=True)

    sub.add_parser("gen-data", parents=[common], help="render a synthetic layered-scene dataset")

    p = sub.add_parser("train", parents=[common], help="train the denoiser")
    p.add_argument("--dataset", required=True)

    p = sub.add_parser("sample", parents=[common], help="synthesize a light field from one image")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--depth", required=True, help="inverse depth (.png or .f32)")
    p.add_argument("--disparity-range", type=float, nargs=2, metavar=("MIN", "MAX"))
    p.add_argument("--sampler", choices=("ddim", "ddpm"))
    p.add_argument("--steps", type=int)
    p.add_argument("--eta", type=float)
    p.add_argument("--center-only", action="store_true", help="condition on the bare image only")

    p = sub.add_parser("eval", parents=[common], help="score light fields against a reference")
    p.add_argument("--lf", nargs="*", default=[])
    p.add_argument("--reference", required=True)
    p.add_argument("--region", type=int, nargs=4, metavar=("Y0", "Y1", "X0", "X1"))
    p.add_argument("--warp-baseline", action="store_true")

    p = sub.add_parser("refocus", parents=[common], help="shift-and-add refocus to a PNG")
    p.add_argument("--lf", required=True)
    p.add_argument("--slope", type=float, required=True)

    p = sub.add_parser("export-sr", parents=[common], help="write super-resolution training pairs")
    p.add_argument("--lf", nargs="+", required=True)
    p.add_argument("--factor", type=int, default=2)
    return ap


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if args.command == "gen-data" and args.seed is not None:
        cfg = replace(cfg, data=replace(cfg.data, seed=args.seed))
    if args.command == "train" and args.seed is not None:
        cfg = replace(cfg, train=replace(cfg.train, seed=args.seed))
    if args.command == "sample":
        s = cfg.sample
        upd = {"seed": args.seed, "sampler": args.sampler, "steps": args.steps, "eta": args.eta,
               "disparity_range": tuple(args.disparity_range) if args.disparity_range else None}
        cfg = replace(cfg, sample=replace(s, **{k: v for k, v in upd.items() if v is not None}))
    return cfg.validate()


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = _apply_overrides(load_config(args.config), args)
    if args.command == "gen-data":
        cmd_gen_data(cfg, _out_dir(args))
    elif args.command == "train":
        cmd_train(cfg, args.dataset, _out_dir(args))
    elif args.command == "sample":
        cmd_sample(cfg, args.ckpt, args.image, args.depth, _out_dir(args), args.center_only)
    elif args.command == "eval":
        _dump_json(cmd_eval(args.lf, args.reference, args.region, args.warp_baseline), args.out)
    elif args.command == "refocus":
        cmd_refocus(args.lf, args.slope, _out_dir(args))
    elif args.command == "export-sr":
        m = cmd_export_sr(args.lf, args.factor, _out_dir(args))
        print(f"{m['count']} pairs -> {args.out}")
    return 0


def main(argv=None) -> int:
    try:
        return run(argv)
    except NumericalAbort as e:
        print(f"numerical abort: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except LFError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
