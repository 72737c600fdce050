"""Single entry point wiring all modules into the pipeline subcommands."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import bake as bake_mod
from . import curation, diffusion, errors, fixtures, gltf, metrics
from .config import PipelineConfig
from . import strength as strength_mod
from .exr import read_exr, write_exr
from .pipeline import CurationRenderer
from .render import (
    BloomParams,
    RenderConfig,
    ViewSpec,
    canonical_views,
    render_asset,
    rig_to_dict,
    sample_light_rig,
)
from .textures import TextureMap

log = logging.getLogger("emberforge")

PASS_NAMES = ("beauty", "albedo", "emission", "normal", "position")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # validation errors exit 1, not argparse's 2
        self.exit(1, f"{self.prog}: error: {message}\n")


class ProcessingError(RuntimeError):
    pass


def _write_json(path, payload) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _load_json(path) -> dict:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"input not found: {p}")
    return json.loads(p.read_text())


# ---------------------------------------------------------------------------
# subcommands

def cmd_fixtures(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    built = {
        "quad.glb": fixtures.quad_asset(),
        "sphere.glb": fixtures.sphere_asset(),
        "led_panel.glb": fixtures.led_panel_asset(),
        "two_cubes.glb": fixtures.multi_object_asset(),
    }
    for name, asset in built.items():
        gltf.save_asset(asset, out / name)
        log.info("wrote %s", out / name)
    return 0


def cmd_curate(args) -> int:
    src = Path(args.in_dir)
    if not src.is_dir():
        raise FileNotFoundError(f"input not found: {src}")
    cfg = (PipelineConfig.load(args.config) if args.config
           else PipelineConfig()).curation
    renderer = CurationRenderer(seed=args.seed)
    paths = sorted(list(src.glob("*.glb")) + list(src.glob("*.gltf")))
    if not paths:
        raise FileNotFoundError(f"no .glb/.gltf assets in {src}")
    with open(args.out, "w") as fh:
        for path in paths:
            asset = gltf.load_asset(path)
            if args.classifier == "mock":
                client = curation.MockSingleObjectClient(asset.metadata)
            elif args.classifier.startswith("http:") or args.classifier.startswith("https:"):
                client = curation.HttpSingleObjectClient(args.classifier)
            else:
                raise ProcessingError(f"unknown classifier {args.classifier!r}")
            verdict = curation.curate(asset, cfg, client, renderer)
            fh.write(json.dumps(verdict.to_dict(), sort_keys=True) + "\n")
            log.info("curated %s: %s", asset.id,
                     verdict.rejection_reason or "accepted")
    return 0


def _save_rendered_view(rv, out_dir: Path, view_name: str) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for name in PASS_NAMES:
        tex = getattr(rv, "beauty" if name == "beauty" else f"{name}_pass")
        write_exr(out_dir / f"{view_name}_{name}.exr", tex.data)


def cmd_render(args) -> int:
    asset = gltf.load_asset(args.asset)
    strengths = [float(s) for s in args.strengths.split(",") if s]
    rng = np.random.default_rng(args.seed)
    radius = max(asset.mesh.bounding_radius(), 1e-6)
    rigs = [sample_light_rig(rng, radius) for _ in range(args.rigs)]
    cfg = RenderConfig(samples_per_pixel=args.spp, seed=args.seed,
                       bloom=BloomParams())
    views = render_asset(asset, strengths, rigs, cfg,
                         distance=args.distance, fov=args.fov,
                         resolution=args.resolution, jobs=args.jobs)
    out = Path(args.out)
    for rv in views:
        rig_dir = out / asset.id / f"rig{rv.rig_index}" / f"s{rv.strength:.2f}"
        _save_rendered_view(rv, rig_dir, f"view{rv.view_index:02d}")
    manifest = {
        "asset": asset.id,
        "seed": args.seed,
        "strengths": strengths,
        "rigs": [rig_to_dict(r) for r in rigs],
        "views": [
            {"index": i, "azimuth": v.azimuth, "elevation": v.elevation,
             "distance": v.distance, "fov": v.fov, "resolution": v.resolution}
            for i, v in enumerate(canonical_views(args.distance, args.fov,
                                                  args.resolution))
        ],
        "config": {"samples_per_pixel": cfg.samples_per_pixel,
                   "max_bounces": cfg.max_bounces, "seed": cfg.seed},
    }
    _write_json(out / asset.id / "manifest.json", manifest)
    return 0


def cmd_select(args) -> int:
    root = Path(args.renders)
    manifest = _load_json(root / "manifest.json")
    cfg = (PipelineConfig.load(args.config) if args.config
           else PipelineConfig()).curation
    per_strength = {}
    for s in manifest["strengths"]:
        sdir = root / "rig0" / f"s{s:.2f}"
        passes = []
        for i in range(len(manifest["views"])):
            path = sdir / f"view{i:02d}_emission.exr"
            if not path.exists():
                raise FileNotFoundError(f"input not found: {path}")
            passes.append(TextureMap.from_array(read_exr(path)))
        per_strength[float(s)] = passes
    valid = curation.select_strengths(per_strength, cfg)
    _write_json(args.out, {"asset": manifest["asset"], "valid_strengths": valid})
    return 0


def cmd_bake(args) -> int:
    asset = gltf.load_asset(args.mesh)
    root = Path(args.views)
    # manifest lives either beside the images or at the asset level two up
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        manifest_path = root.parent.parent / "manifest.json"
    manifest = _load_json(manifest_path)
    views = []
    for entry in manifest["views"]:
        name = f"view{entry['index']:02d}"
        albedo = TextureMap.from_array(read_exr(root / f"{name}_albedo.exr"))
        emission = TextureMap.from_array(
            np.clip(read_exr(root / f"{name}_emission.exr"), 0.0, 1.0))
        spec = ViewSpec(azimuth=entry["azimuth"], elevation=entry["elevation"],
                        distance=entry["distance"], fov=entry["fov"],
                        resolution=entry["resolution"])
        views.append((spec, albedo, emission))
    cfg = bake_mod.BakeConfig(texture_resolution=args.texture_resolution)
    result = bake_mod.bake(asset.mesh, views, cfg, asset_for_depth=asset)
    baked = bake_mod.assemble_asset(asset.mesh, result, asset.materials.metallic,
                                    asset.materials.roughness, args.strength,
                                    asset_id=f"{asset.id}_baked")
    gltf.save_asset(baked, args.out)
    log.info("baked %s (unseen texels: %d)", args.out, result.unseen_texel_count)
    return 0


def cmd_evaluate(args) -> int:
    pred = gltf.load_asset(args.pred)
    gt = gltf.load_asset(args.gt)
    proto_dict = _load_json(args.protocol) if args.protocol else {}
    protocol = metrics.EvalProtocol(**proto_dict)
    report = metrics.evaluate(pred, gt, protocol, strength_mod.StatFeatures(),
                              jobs=args.jobs)
    _write_json(args.out, report.to_dict())
    return 0


def cmd_loss_check(args) -> int:
    rng = np.random.default_rng(args.seed)
    schedule = diffusion.default_schedule()
    report = {}

    z0 = rng.normal(size=(4, 2, 8, 8))
    eps = rng.normal(size=(4, 2, 8, 8))
    worst = 0.0
    for t in range(0, schedule.T, 37):
        zt = diffusion.forward_diffuse(z0, eps, t, schedule)
        v = diffusion.velocity_target(z0, eps, t, schedule)
        worst = max(worst, float(np.abs(
            diffusion.recover_clean(zt, v, t, schedule) - z0).max()))
    report["clean_latent_identity_max_err"] = worst

    task = diffusion.make_synthetic_task()
    batch = task.make_batch(rng, n=2)
    v_pred = batch.v_target + rng.normal(0, 0.3, batch.v_target.shape)
    _, grad = diffusion.total_loss(v_pred, batch.v_target, batch.zt, batch.t,
                                   schedule, task.decoder, task.params,
                                   with_grad=True)
    h, max_rel = 1e-4, 0.0
    flat = v_pred.ravel()
    for idx in rng.choice(flat.size, size=32, replace=False):
        vp = v_pred.copy().ravel()
        vp[idx] += h
        up = diffusion.total_loss(vp.reshape(v_pred.shape), batch.v_target,
                                  batch.zt, batch.t, schedule, task.decoder,
                                  task.params).l_total
        vp[idx] -= 2 * h
        dn = diffusion.total_loss(vp.reshape(v_pred.shape), batch.v_target,
                                  batch.zt, batch.t, schedule, task.decoder,
                                  task.params).l_total
        fd = (up - dn) / (2 * h)
        an = grad.ravel()[idx]
        max_rel = max(max_rel, abs(fd - an) / max(abs(fd), abs(an), 1e-12))
    report["gradient_max_rel_err"] = max_rel

    decoded = task.decoder.decode(batch.z0)
    hard = decoded.max(axis=1) > task.params.tau
    devs = []
    for k in (10.0, 100.0, 1000.0, 10000.0):
        m, _ = diffusion.mask_from_decoded(
            decoded, diffusion.SoftMaskParams(tau=task.params.tau, k=k))
        sel = np.abs(decoded.max(axis=1) - task.params.tau) > 0.01
        devs.append(float(np.abs(m - hard)[sel].max()))
    report["soft_mask_deviations"] = devs

    report["passed"] = bool(worst < 1e-12 and max_rel < 1e-5
                            and devs[-1] < 1e-10
                            and all(a > b for a, b in zip(devs, devs[1:])))
    _write_json(args.report, report)
    return 0 if report["passed"] else 2


def run_ablation_pair(seed: int, steps: int, lams, lr: float = 0.05):
    """Paired-seed toy training runs, one per lambda value."""
    task = diffusion.make_synthetic_task()
    results = {}
    for lam in lams:
        rng = np.random.default_rng(seed)
        batches = [task.make_batch(rng, n=8) for _ in range(steps)]
        holdout = task.make_batch(np.random.default_rng(seed + 10_000), n=16)
        model = diffusion.ToyDenoiser.zeros(task.channels)
        results[lam] = diffusion.toy_train(
            batches, model, task.decoder, task.schedule, task.params,
            holdout, lam=lam, lr=lr)
    return results


def cmd_toy_ablate(args) -> int:
    lams = [float(x) for x in args.lambdas.split(",") if x]
    results = run_ablation_pair(args.seed, args.steps, lams)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step"] + [f"l_mcp_lam{lam}" for lam in lams]
                        + [f"l_seg_lam{lam}" for lam in lams])
        for i in range(args.steps):
            writer.writerow([i]
                            + [results[lam].history_mcp[i] for lam in lams]
                            + [results[lam].history_seg[i] for lam in lams])
    summary = {str(lam): {"holdout_seg_loss": results[lam].holdout_seg_loss,
                          "holdout_hard_dice": results[lam].holdout_hard_dice}
               for lam in lams}
    log.info("ablation summary: %s", json.dumps(summary, sort_keys=True))
    _write_json(Path(args.out).with_suffix(".summary.json"), summary)
    return 0


def cmd_strength(args) -> int:
    provider = strength_mod.StatFeatures()
    if args.strength_cmd == "train":
        entries = _load_json(args.manifest)
        samples = []
        for entry in entries:
            img = TextureMap.from_array(read_exr(entry["image"]))
            samples.append((img, entry["strength"]))
        head = strength_mod.train_head(samples, provider, epochs=args.epochs,
                                       seed=args.seed)
        Path(args.out).write_text(head.to_json())
        log.info("train MSE %.4g, val MSE %.4g",
                 head.final_train_mse, head.final_val_mse)
        return 0
    head = strength_mod.MlpHead.from_json(Path(args.head).read_text())
    img = TextureMap.from_array(read_exr(args.image))
    pred = strength_mod.predict_strength(img, provider, head)
    print(f"{pred:.4f}")
    return 0


# ---------------------------------------------------------------------------
# argument wiring

def build_parser() -> _Parser:
    parser = _Parser(prog="emberforge",
                     description="Emission-texture curation, rendering, "
                                 "loss math, and evaluation toolkit")
    parser.add_argument("--verbose", action="store_true")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("fixtures", help="materialize bundled fixture assets")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fixtures)

    p = sub.add_parser("curate", help="run the curation pipeline over a directory")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--classifier", default="mock")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_curate)

    p = sub.add_parser("render", help="multi-view/strength/rig rendering")
    p.add_argument("--asset", required=True)
    p.add_argument("--strengths", default="1.0")
    p.add_argument("--rigs", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--resolution", type=int, default=64)
    p.add_argument("--spp", type=int, default=8)
    p.add_argument("--distance", type=float, default=2.5)
    p.add_argument("--fov", type=float, default=40.0)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("select", help="strength selection from rendered emission AOVs")
    p.add_argument("--renders", required=True, help="render output dir for one asset")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("bake", help="back-project view images into UV textures")
    p.add_argument("--mesh", required=True)
    p.add_argument("--views", required=True,
                   help="directory holding view*_albedo/emission.exr")
    p.add_argument("--strength", type=float, required=True)
    p.add_argument("--texture-resolution", type=int, default=128)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bake)

    p = sub.add_parser("evaluate", help="render-then-evaluate two assets")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--protocol", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("loss-check", help="identity/gradient/convergence suites")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_loss_check)

    p = sub.add_parser("toy-ablate", help="paired toy training curves")
    p.add_argument("--lambdas", dest="lambdas", default="0,0.1")
    p.add_argument("--steps", type=int, default=300)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_toy_ablate)

    p = sub.add_parser("strength", help="train or apply the strength head")
    ssub = p.add_subparsers(dest="strength_cmd", required=True)
    pt = ssub.add_parser("train")
    pt.add_argument("--manifest", required=True)
    pt.add_argument("--out", required=True)
    pt.add_argument("--epochs", type=int, default=300)
    pt.add_argument("--seed", type=int, default=0)
    pp = ssub.add_parser("predict")
    pp.add_argument("--image", required=True)
    pp.add_argument("--head", required=True)
    p.set_defaults(func=cmd_strength)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    log.info("resolved args: %s", {k: v for k, v in vars(args).items()
                                   if k != "func"})
    validation = (FileNotFoundError, errors.MalformedFile,
                  errors.UnsupportedFeature, errors.MissingBuffer,
                  errors.InvalidAsset, errors.MissingUVs, ValueError)
    try:
        return args.func(args)
    except validation as exc:
        print(f"emberforge: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # processing errors from any module
        print(f"emberforge: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
