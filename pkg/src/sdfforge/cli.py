"""Command-line front end wiring the library into reproducible experiments.

Typical flow: gen-family or prepare -> train -> embed/complete ->
extract/render/interp -> eval. The pipeline subcommand runs a whole
experiment from a flat key = value config file.

Exit codes: 0 success, 2 config error, 3 data error, 4 numeric fault.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import families, metrics
from .cameras import make_camera
from .decoder import NetConfig, read_checkpoint, write_checkpoint
from .errors import ConfigError, DataError, NumericFault, SdfForgeError
from .geometry import (
    load_obj,
    normalize_to_unit_sphere,
    sample_mesh_surface,
    sample_mesh_surface_even,
)
from .inference import (
    CompletionConfig,
    complete_shape,
    depth_to_observation,
    estimate_latent,
    perturb_depth,
)
from .parallel import default_threads
from .sampling import (
    PrepConfig,
    extract_shell,
    accept_mesh,
    generate_samples,
    read_depth,
    read_samples,
    write_samples,
)
from .surfacing import extract_mesh, interpolate_latents, render, write_ppm
from .training import TrainConfig, train_auto_decoder, train_single_shape


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: SDFFORGE_THREADS or 1)")


def _threads(args) -> int:
    return args.threads if args.threads is not None else default_threads()


def _parse_vec3(text: str) -> np.ndarray:
    parts = text.split(",")
    if len(parts) != 3:
        raise ConfigError(f"expected x,y,z triple, got {text!r}")
    try:
        return np.array([float(p) for p in parts])
    except ValueError:
        raise ConfigError(f"bad coordinate in {text!r}")


def _parse_skips(text: str) -> tuple[int, ...]:
    if not text:
        return ()
    try:
        return tuple(int(p) for p in text.split(","))
    except ValueError:
        raise ConfigError(f"bad skip-layer list {text!r}")


def _load_latent(args, codebook):
    if getattr(args, "latent_file", None):
        return np.load(args.latent_file)
    if getattr(args, "shape_id", None):
        if codebook is None or args.shape_id not in codebook:
            raise DataError(f"shape id {args.shape_id!r} not in checkpoint codebook")
        return codebook[args.shape_id]
    raise ConfigError("need --shape-id or --latent-file")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_gen_family(args) -> int:
    prep = PrepConfig(n_surface=args.surface, n_uniform=args.uniform)
    manifest = families.gen_family(
        args.family, args.count, args.out_dir, prep, seed=args.seed,
        gt_resolution=args.gt_res,
    )
    print(manifest)
    return 0


def cmd_prepare(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    prep = PrepConfig(
        n_cameras=args.cameras,
        depth_resolution=args.resolution,
        n_surface=args.surface,
        n_uniform=args.uniform,
    )
    threads = _threads(args)
    entries = []
    h = families.prep_config_hash(prep)
    for mesh_path in args.meshes:
        shape_id = Path(mesh_path).stem
        mesh = load_obj(mesh_path)
        mesh, _, _ = normalize_to_unit_sphere(mesh)
        shell, fraction = extract_shell(mesh, prep, threads=threads)
        if not accept_mesh(fraction, prep):
            print(f"skipping {shape_id}: {fraction:.1%} double-sided triangles",
                  file=sys.stderr)
            continue
        samples = generate_samples(mesh, prep, seed=args.seed, shape_id=shape_id,
                                   shell=shell)
        sample_file = f"{shape_id}.sdfs"
        write_samples(out / sample_file, samples)
        entries.append(families.ManifestEntry(
            shape_id=shape_id,
            sample_file=sample_file,
            n_positive=samples.n_positive,
            n_negative=samples.n_negative,
            double_sided_fraction=fraction,
            provenance={"mesh": str(mesh_path)},
            prep_hash=h,
        ))
    if not entries:
        raise DataError("no mesh passed the double-sided check")
    manifest = out / "manifest.jsonl"
    families.write_manifest(manifest, entries)
    print(manifest)
    return 0


def _net_config(args, latent_dim: int) -> NetConfig:
    return NetConfig(
        latent_dim=latent_dim,
        hidden_width=args.hidden,
        n_layers=args.layers,
        skip_layers=_parse_skips(args.skips),
        dropout_rate=args.dropout,
        seed=args.seed,
    )


def cmd_train(args) -> int:
    sample_sets = families.load_manifest_samples(args.manifest)
    net = _net_config(args, args.latent_dim)
    cfg = TrainConfig(
        delta=args.delta,
        decoder_lr=args.lr,
        latent_lr=args.latent_lr,
        reg_weight=getattr(args, "lambda"),
        samples_per_step=args.samples_per_step,
        shapes_per_batch=args.shapes_per_batch,
        epochs=args.epochs,
        seed=args.seed,
    )
    params, codebook, record = train_auto_decoder(sample_sets, net, cfg)
    write_checkpoint(args.out, params, codebook)
    record.write_csv(str(args.out) + ".csv")
    print(f"{args.out}: final sdf loss {record.sdf_loss[-1]:.6f}")
    return 0


def cmd_train_single(args) -> int:
    samples = read_samples(args.samples)
    net = _net_config(args, 0)
    cfg = TrainConfig(
        delta=args.delta,
        decoder_lr=args.lr,
        samples_per_step=args.samples_per_step,
        epochs=args.epochs,
        seed=args.seed,
    )
    params, record = train_single_shape(samples, net, cfg)
    write_checkpoint(args.out, params, None)
    record.write_csv(str(args.out) + ".csv")
    print(f"{args.out}: final sdf loss {record.sdf_loss[-1]:.6f}")
    return 0


def cmd_embed(args) -> int:
    params, _ = read_checkpoint(args.checkpoint)
    samples = read_samples(args.samples)
    fit = estimate_latent(
        params, samples, reg_weight=getattr(args, "lambda"),
        iterations=args.iters, lr=args.lr, seed=args.seed, delta=args.delta,
    )
    np.save(args.out_latent, fit.z)
    if args.out_mesh:
        extract_mesh(params, fit.z, args.res, threads=_threads(args)).write_obj(args.out_mesh)
    print(f"objective {fit.objective:.6f}")
    return 0


def cmd_complete(args) -> int:
    params, _ = read_checkpoint(args.checkpoint)
    depth = read_depth(args.depth)
    if args.alpha > 0:
        depth = perturb_depth(depth, args.alpha, seed=args.seed)
    obs = depth_to_observation(depth, args.eta, args.free_per_ray, seed=args.seed)
    cfg = CompletionConfig(
        eta=args.eta,
        iterations=args.iters,
        latent_lr=args.lr,
        reg_weight=getattr(args, "lambda"),
        free_points_per_ray=args.free_per_ray,
        use_freespace=not args.no_freespace,
        seed=args.seed,
    )
    fit = complete_shape(params, obs, cfg)
    if args.out_latent:
        np.save(args.out_latent, fit.z)
    if args.out_mesh:
        extract_mesh(params, fit.z, args.res, threads=_threads(args)).write_obj(args.out_mesh)
    print(f"objective {fit.objective:.6f}")
    return 0


def cmd_extract(args) -> int:
    params, codebook = read_checkpoint(args.checkpoint)
    z = _load_latent(args, codebook)
    mesh = extract_mesh(params, z, args.res, threads=_threads(args))
    mesh.write_obj(args.out)
    print(f"{args.out}: {len(mesh.vertices)} vertices, {len(mesh.triangles)} triangles")
    return 0


def cmd_render(args) -> int:
    params, codebook = read_checkpoint(args.checkpoint)
    z = _load_latent(args, codebook)
    camera = make_camera(_parse_vec3(args.camera), args.width, args.height)
    light = _parse_vec3(args.light) if args.light else None
    image = render(params, z, camera, light_dir=light, threads=_threads(args))
    write_ppm(args.out, image)
    print(args.out)
    return 0


def cmd_interp(args) -> int:
    params, codebook = read_checkpoint(args.checkpoint)
    if codebook is None:
        raise DataError("checkpoint has no latent codebook")
    for sid in (args.a, args.b):
        if sid not in codebook:
            raise DataError(f"shape id {sid!r} not in checkpoint codebook")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    threads = _threads(args)
    for i in range(args.steps):
        t = i / (args.steps - 1) if args.steps > 1 else 0.5
        z = interpolate_latents(codebook[args.a], codebook[args.b], t)
        mesh = extract_mesh(params, z, args.res, threads=threads)
        mesh.write_obj(out / f"interp_{i:03d}.obj")
    print(out)
    return 0


def cmd_eval(args) -> int:
    gen = load_obj(args.gen)
    gt = load_obj(args.gt)
    wanted = args.metrics.split(",")
    known = {"chamfer", "emd", "acc", "comp", "cos"}
    bad = set(wanted) - known
    if bad:
        raise ConfigError(f"unknown metrics {sorted(bad)}, expected {sorted(known)}")
    rng = np.random.default_rng(args.seed)
    result: dict[str, float] = {}
    if "chamfer" in wanted:
        # even spreading suppresses the sampling noise floor; above a few
        # thousand points the floor is negligible and thinning too slow
        sampler = sample_mesh_surface_even if args.n_chamfer <= 5000 else sample_mesh_surface
        p1 = sampler(gen, args.n_chamfer, rng)
        p2 = sampler(gt, args.n_chamfer, rng)
        result["chamfer"] = metrics.chamfer(p1, p2)
    if "emd" in wanted:
        p1 = sample_mesh_surface(gen, args.n_emd, rng)
        p2 = sample_mesh_surface(gt, args.n_emd, rng)
        result["emd"] = metrics.emd(p1, p2)
    if "acc" in wanted:
        pts = sample_mesh_surface(gen, 1000, rng)
        result["acc"] = metrics.mesh_accuracy(pts, gt)
    if "comp" in wanted:
        pts = sample_mesh_surface(gt, 1000, rng)
        result["comp"] = metrics.mesh_completion(gen, pts, delta=args.comp_delta)
    if "cos" in wanted:
        pts, normals = sample_mesh_surface(gt, 2500, rng, with_normals=True)
        result["cos"] = metrics.cosine_similarity(gen, pts, normals)
    print(json.dumps(result, sort_keys=True))
    return 0


def cmd_info(args) -> int:
    params, codebook = read_checkpoint(args.checkpoint)
    cfg = params.config
    info = {
        "latent_dim": cfg.latent_dim,
        "hidden_width": cfg.hidden_width,
        "n_layers": cfg.n_layers,
        "skip_layers": list(cfg.skip_layers),
        "dropout_rate": cfg.dropout_rate,
        "seed": cfg.seed,
        "n_codes": 0 if codebook is None else len(codebook),
        "shape_ids": [] if codebook is None else codebook.ids(),
    }
    print(json.dumps(info, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------

_PIPELINE_DEFAULTS = {
    "family": "boxes",
    "count": 8,
    "out_dir": "run",
    "seed": 0,
    "threads": 0,  # 0 = SDFFORGE_THREADS or 1
    "surface": 4000,
    "uniform": 2000,
    "gt_res": 64,
    "latent_dim": 8,
    "hidden": 128,
    "layers": 4,
    "skips": "",
    "dropout": 0.0,
    "delta": 0.1,
    "lambda": 1e-4,
    "lr": 1e-3,
    "latent_lr": 1e-3,
    "epochs": 200,
    "samples_per_step": 2048,
    "shapes_per_batch": 0,  # 0 = all shapes per step
    "mc_res": 64,
    "eval_points": 2000,
}


def parse_pipeline_config(path) -> dict:
    """Flat `key = value` config with # comments; unknown keys are rejected."""
    cfg = dict(_PIPELINE_DEFAULTS)
    with open(path, "r", encoding="utf-8") as f:
        for line_no, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{line_no}: expected key = value")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key not in cfg:
                raise ConfigError(f"{path}:{line_no}: unknown config key {key!r}")
            default = _PIPELINE_DEFAULTS[key]
            try:
                if isinstance(default, int):
                    cfg[key] = int(value)
                elif isinstance(default, float):
                    cfg[key] = float(value)
                else:
                    cfg[key] = value
            except ValueError:
                raise ConfigError(f"{path}:{line_no}: bad value for {key!r}: {value!r}")
    return cfg


def cmd_pipeline(args) -> int:
    cfg = parse_pipeline_config(args.config)
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    threads = cfg["threads"] or default_threads()
    summary: dict = {"config": cfg, "wall_times": {}}
    stage = "gen"
    try:
        t0 = time.perf_counter()
        prep = PrepConfig(n_surface=cfg["surface"], n_uniform=cfg["uniform"])
        manifest = families.gen_family(
            cfg["family"], cfg["count"], out / "data", prep,
            seed=cfg["seed"], gt_resolution=cfg["gt_res"],
        )
        summary["wall_times"]["gen"] = time.perf_counter() - t0

        stage = "train"
        t0 = time.perf_counter()
        sample_sets = families.load_manifest_samples(manifest)
        net = NetConfig(
            latent_dim=cfg["latent_dim"], hidden_width=cfg["hidden"],
            n_layers=cfg["layers"], skip_layers=_parse_skips(cfg["skips"]),
            dropout_rate=cfg["dropout"], seed=cfg["seed"],
        )
        tc = TrainConfig(
            delta=cfg["delta"], decoder_lr=cfg["lr"], latent_lr=cfg["latent_lr"],
            reg_weight=cfg["lambda"], samples_per_step=cfg["samples_per_step"],
            shapes_per_batch=cfg["shapes_per_batch"] or None,
            epochs=cfg["epochs"], seed=cfg["seed"],
        )
        params, codebook, record = train_auto_decoder(sample_sets, net, tc)
        ckpt = out / "model.dsdf"
        write_checkpoint(ckpt, params, codebook)
        record.write_csv(out / "loss.csv")
        summary["final_sdf_loss"] = record.sdf_loss[-1]
        summary["final_reg_loss"] = record.reg_loss[-1]
        summary["wall_times"]["train"] = time.perf_counter() - t0

        stage = "eval"
        t0 = time.perf_counter()
        entries = families.read_manifest(manifest)
        per_shape = {}
        rng = np.random.default_rng(cfg["seed"])
        for entry in entries:
            mesh = extract_mesh(params, codebook[entry.shape_id], cfg["mc_res"],
                                threads=threads)
            if mesh.is_empty():
                per_shape[entry.shape_id] = None
                continue
            gt = load_obj(Path(manifest).parent / entry.gt_mesh)
            p1 = sample_mesh_surface_even(_iso_to_mesh(mesh), cfg["eval_points"], rng)
            p2 = sample_mesh_surface_even(gt, cfg["eval_points"], rng)
            per_shape[entry.shape_id] = metrics.chamfer(p1, p2)
        summary["per_shape_chamfer"] = per_shape
        summary["wall_times"]["eval"] = time.perf_counter() - t0
    except Exception as exc:
        print(f"pipeline stage {stage!r} failed: {exc}", file=sys.stderr)
        raise
    with open(out / "summary.json", "w", encoding="utf-8") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
    print(out / "summary.json")
    return 0


def _iso_to_mesh(iso_mesh):
    from .geometry import TriangleMesh

    return TriangleMesh(iso_mesh.vertices, iso_mesh.triangles)


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sdfforge",
        description="Learned continuous signed distance fields: data prep, "
                    "training, completion, surfacing, and evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-family", help="generate an analytic shape family")
    p.add_argument("--family", choices=families.FAMILY_KINDS, default="boxes")
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--surface", type=int, default=8000, help="surface points per shape")
    p.add_argument("--uniform", type=int, default=3000, help="uniform ball points")
    p.add_argument("--gt-res", type=int, default=96, help="ground-truth mesh grid resolution")
    _add_common(p)
    p.set_defaults(func=cmd_gen_family)

    p = sub.add_parser("prepare", help="turn OBJ meshes into training samples")
    p.add_argument("meshes", nargs="+", help="input OBJ files")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--cameras", type=int, default=100)
    p.add_argument("--resolution", type=int, default=128, help="virtual depth resolution")
    p.add_argument("--surface", type=int, default=250_000)
    p.add_argument("--uniform", type=int, default=25_000)
    _add_common(p)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="auto-decoder training over a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--latent-dim", type=int, default=128)
    p.add_argument("--layers", type=int, default=8)
    p.add_argument("--hidden", type=int, default=512)
    p.add_argument("--skips", default="4", help="comma-separated skip layers")
    p.add_argument("--dropout", type=float, default=0.2)
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--lambda", type=float, default=1e-4, dest="lambda")
    p.add_argument("--lr", type=float, default=None,
                   help="decoder learning rate (default 1e-5 * shapes per batch)")
    p.add_argument("--latent-lr", type=float, default=1e-3)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--samples-per-step", type=int, default=16384)
    p.add_argument("--shapes-per-batch", type=int, default=None)
    p.add_argument("--out", required=True, help="checkpoint path (.dsdf)")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("train-single", help="fit one latent-free network to one shape")
    p.add_argument("--samples", required=True, help="input .sdfs file")
    p.add_argument("--layers", type=int, default=8)
    p.add_argument("--hidden", type=int, default=512)
    p.add_argument("--skips", default="")
    p.add_argument("--dropout", type=float, default=0.0)
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--epochs", type=int, default=1000)
    p.add_argument("--samples-per-step", type=int, default=4096)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_train_single)

    p = sub.add_parser("embed", help="MAP-estimate a code for a full sample set")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--samples", required=True)
    p.add_argument("--iters", type=int, default=800)
    p.add_argument("--lr", type=float, default=5e-3)
    p.add_argument("--lambda", type=float, default=1e-4, dest="lambda")
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--out-latent", required=True, help="output .npy code")
    p.add_argument("--out-mesh", default=None)
    p.add_argument("--res", type=int, default=64)
    _add_common(p)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("complete", help="complete a shape from one depth view")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--depth", required=True, help="input .dpth depth file")
    p.add_argument("--eta", type=float, default=0.005)
    p.add_argument("--alpha", type=float, default=0.0, help="inverse-depth noise stddev")
    p.add_argument("--iters", type=int, default=800)
    p.add_argument("--lr", type=float, default=5e-3)
    p.add_argument("--lambda", type=float, default=1e-4, dest="lambda")
    p.add_argument("--free-per-ray", type=int, default=2)
    p.add_argument("--no-freespace", action="store_true")
    p.add_argument("--out-latent", default=None)
    p.add_argument("--out-mesh", default=None)
    p.add_argument("--res", type=int, default=64)
    _add_common(p)
    p.set_defaults(func=cmd_complete)

    p = sub.add_parser("extract", help="marching-cubes mesh for a code")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--shape-id", default=None)
    p.add_argument("--latent-file", default=None)
    p.add_argument("--res", type=int, default=64)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("render", help="sphere-traced rendering of a code")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--shape-id", default=None)
    p.add_argument("--latent-file", default=None)
    p.add_argument("--width", type=int, default=256)
    p.add_argument("--height", type=int, default=256)
    p.add_argument("--camera", default="1.2,1.0,1.4", help="eye position x,y,z")
    p.add_argument("--light", default=None, help="light direction x,y,z")
    p.add_argument("--out", required=True, help="output .ppm image")
    _add_common(p)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("interp", help="meshes along a latent interpolation")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--a", required=True, help="first shape id")
    p.add_argument("--b", required=True, help="second shape id")
    p.add_argument("--steps", type=int, default=5)
    p.add_argument("--res", type=int, default=64)
    p.add_argument("--out-dir", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_interp)

    p = sub.add_parser("eval", help="compare a generated mesh against ground truth")
    p.add_argument("--gen", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--metrics", default="chamfer,emd,acc,comp,cos")
    p.add_argument("--n-chamfer", type=int, default=30_000)
    p.add_argument("--n-emd", type=int, default=500)
    p.add_argument("--comp-delta", type=float, default=0.01)
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pipeline", help="run gen/train/eval from a config file")
    p.add_argument("config", help="flat key = value config file")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("info", help="print checkpoint configuration")
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_info)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericFault as exc:
        print(f"numeric fault: {exc}", file=sys.stderr)
        return 4
    except SdfForgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
