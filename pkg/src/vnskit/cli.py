"""``vnskit`` command line: eval, vns-score, prompts, demo-forward, selftest.

Exit codes: 0 success, 1 one or more records failed, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__, decoder, metrics, nn, nsfm, prompts, selftest
from . import vns_score as vs
from .config import Config, resolve
from .data import (
    ImageFormatError,
    ManifestError,
    ShapeError,
    load_mask,
    load_softmap,
    make_rng,
    parse_manifest,
    read_color,
    save_gray,
    save_softmap,
)
from .decoder import ConfigurationError

EXIT_OK, EXIT_RECORDS, EXIT_USAGE = 0, 1, 2
GLOBAL_KEYS = ("seed", "jobs")
# errors that fail a single record rather than the run
RECORD_ERRORS = (OSError, ImageFormatError, ShapeError, ValueError)


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- helpers

def _provenance(cfg: Config):
    # jobs changes scheduling only, so it stays out of reports to keep them identical across N
    return {k: v for k, v in cfg.to_dict().items() if k != "jobs"}


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _map_records(fn, records, jobs):
    """Ordered map; each item is ``(result, None)`` or ``(None, error message)``."""
    def guarded(item):
        try:
            return fn(*item), None
        except RECORD_ERRORS as exc:
            return None, f"{type(exc).__name__}: {exc}"

    items = list(enumerate(records))
    if jobs == 1:
        return [guarded(it) for it in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(guarded, items))


def _load_records(args):
    if not args.manifest:
        raise UsageError("a manifest is required")
    try:
        return parse_manifest(args.manifest)
    except FileNotFoundError as exc:
        raise UsageError(f"manifest not found: {args.manifest}") from exc
    except ManifestError as exc:
        raise UsageError(str(exc)) from exc


def _sha256(a):
    return hashlib.sha256(np.ascontiguousarray(a, "<f8").tobytes()).hexdigest()


# ---------------------------------------------------------------- eval

def _eval_record(cfg, i, rec):
    gt = load_mask(rec.gt_mask, cfg.binarize)
    entry = {"index": i, "path": str(rec.gt_mask)}
    if rec.pred is None and not rec.instances:
        raise ValueError("record has neither 'pred' nor 'instances'")
    if rec.pred is not None:
        pred = load_softmap(rec.pred)
        d = metrics.default_band_width(gt.shape, cfg.biou_fraction)
        binary = pred.binarize(cfg.binarize / 255.0)
        entry["iou"] = metrics.iou(binary, gt)
        entry["biou"] = metrics.boundary_iou(binary, gt, d)
        entry["e_phi"] = metrics.e_measure_mean(pred, gt)
        try:
            entry["f_beta_w"] = metrics.weighted_f_beta(pred, gt)
        except metrics.UndefinedMetricError:
            entry["f_beta_w"] = None
    if rec.instances:
        preds = [(load_mask(inst.mask, cfg.binarize), inst.score) for inst in rec.instances]
        gts = [gt] if gt.count else []
        entry["ap"], entry["ap50"], entry["ap75"] = metrics.instance_ap(preds, gts)
    return entry


def cmd_eval(args, cfg: Config):
    records = _load_records(args)
    report = metrics.MetricReport()
    failed = []
    for i, (entry, err) in enumerate(_map_records(lambda i, r: _eval_record(cfg, i, r), records, cfg.jobs)):
        if err is None:
            report.add(entry)
        else:
            failed.append({"index": i, "path": str(records[i].gt_mask), "error": err})
    out = report.to_dict()
    out.update(config=_provenance(cfg), failed=failed, n_records=len(records))
    write_json(Path(args.out) / "metrics.json", out)
    return EXIT_RECORDS if failed else EXIT_OK


# ---------------------------------------------------------------- vns-score

def _vns_record(cfg, i, rec):
    img = read_color(rec.image)
    mask = load_mask(rec.gt_mask, cfg.binarize)
    if mask.shape != img.shape[:2]:
        raise ShapeError(f"mask {mask.shape} does not match image {img.shape[:2]}")
    b = vs.vns_score(
        img, mask,
        weights=(cfg.weight_cfb, cfg.weight_boundary),
        levels=cfg.glcm_levels,
        normalization=cfg.sobel_normalization,
    )
    return {
        "index": i,
        "path": str(rec.image),
        "color_contrast": b.color_contrast,
        "texture_contrast": b.texture_contrast,
        "c_fb": b.c_fb,
        "boundary_clarity": b.boundary_clarity,
        "vns_score": b.score,
        "partition": vs.partition(b.score, cfg.vns_threshold),
    }


def cmd_vns_score(args, cfg: Config):
    records = _load_records(args)
    out_dir = Path(args.out)
    rows, failed = [], []
    with warnings.catch_warnings():
        # a region without pixel pairs scores texture 0; that is reported, not fatal
        warnings.simplefilter("ignore", vs.NoPairsWarning)
        results = _map_records(lambda i, r: _vns_record(cfg, i, r), records, cfg.jobs)
    for i, (row, err) in enumerate(results):
        if err is None:
            rows.append(row)
        else:
            failed.append({"index": i, "path": str(records[i].image), "error": err})
    write_json(out_dir / "vns_scores.json", {
        "config": _provenance(cfg),
        "threshold": cfg.vns_threshold,
        "records": rows,
        "failed": failed,
    })
    for name, part in (("salient.txt", "salient"), ("non_salient.txt", "non-salient")):
        lines = [r["path"] for r in rows if r["partition"] == part]
        (out_dir / name).write_text("".join(p + "\n" for p in lines), encoding="utf-8")
    return EXIT_RECORDS if failed else EXIT_OK


# ---------------------------------------------------------------- prompts

def _prompt_record(cfg, out_dir, i, rec):
    mask = load_mask(rec.gt_mask, cfg.binarize)
    entry = {"index": i, "path": str(rec.gt_mask)}
    if mask.count == 0:
        entry["flag"] = "empty-gt"
        return entry
    box = prompts.gt_box(mask)
    noisy = prompts.noisy_box(box, cfg.noise_scale, mask.width, mask.height, make_rng(cfg.seed, i, 0))
    pts = prompts.sample_points(mask, cfg.n_points, make_rng(cfg.seed, i, 1))
    entry.update(box=box.as_list(), noisy_box=noisy.as_list(), points=[list(p) for p in pts.points])
    try:
        coarse = prompts.coarse_mask(mask, make_rng(cfg.seed, i, 2))
    except prompts.DegradationError as exc:
        entry.update(coarse_mask=None, flag=f"coarse-mask: {exc}")
    else:
        rel = Path("coarse") / f"{i:05d}.png"
        save_softmap(out_dir / rel, coarse)
        entry["coarse_mask"] = rel.as_posix()
    return entry


def cmd_prompts(args, cfg: Config):
    records = _load_records(args)
    out_dir = Path(args.out)
    (out_dir / "coarse").mkdir(parents=True, exist_ok=True)
    rows, failed = [], []
    results = _map_records(lambda i, r: _prompt_record(cfg, out_dir, i, r), records, cfg.jobs)
    for i, (row, err) in enumerate(results):
        if err is None:
            rows.append(row)
        else:
            failed.append({"index": i, "path": str(records[i].gt_mask), "error": err})
    write_json(out_dir / "prompts.json", {
        "config": _provenance(cfg),
        "noise_scale": cfg.noise_scale,
        "n_points": cfg.n_points,
        "records": rows,
        "flagged": [r["index"] for r in rows if "flag" in r],
        "failed": failed,
    })
    return EXIT_RECORDS if failed else EXIT_OK


# ---------------------------------------------------------------- demo-forward

def build_weights(cfg: Config):
    rng = make_rng(cfg.seed, 0)
    params = nsfm.init_nsfm(cfg.nsfm(), rng)
    decoder.init_decoder(cfg.decoder(), rng, params)
    return params


def synthetic_inputs(cfg: Config, params):
    rng = make_rng(cfg.seed, 1)
    g = cfg.grid
    emb = rng.normal(size=(g, g, cfg.dim))
    feats = [rng.normal(size=(g, g, cfg.enc_channels)) for _ in range(cfg.nsfm().levels)]
    s = cfg.image_size
    x1, y1 = (int(v) for v in rng.integers(0, s // 2, size=2))
    x2, y2 = (int(v) for v in rng.integers(s // 2 + 1, s + 1, size=2))
    points = [tuple(int(v) for v in rng.integers(0, s, size=2)) for _ in range(2)]
    tokens = decoder.assemble_tokens(decoder.encode_prompts(params, (s, s), (x1, y1, x2, y2), points), params)
    return emb, feats, tokens


def _preview(path, logits):
    save_gray(path, np.rint(nn.sigmoid(logits) * 255.0))


def cmd_demo_forward(args, cfg: Config):
    out_dir = Path(args.out)
    fresh = build_weights(cfg)
    params = fresh
    if args.weights:
        try:
            params, _ = nn.load_weights(args.weights)
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot load weights: {exc}") from exc
        bad = sorted(k for k in fresh if k not in params or params[k].shape != fresh[k].shape)
        if bad or set(params) != set(fresh):
            raise UsageError(f"weights do not match the configured shapes (first mismatch: {(bad or ['extra tensors'])[0]})")
    if args.save_weights:
        nn.save_weights(args.save_weights, params, {"config": _provenance(cfg)})

    emb, feats, tokens = synthetic_inputs(cfg, params)
    f_mk, f_eg = nsfm.nsfm_forward(feats, params, cfg.nsfm())
    dcfg = cfg.decoder()
    runs = {m: decoder.decoder_forward(emb, tokens, f_mk, f_eg, params, dcfg, m) for m in ("train", "infer")}

    (out_dir / "previews").mkdir(parents=True, exist_ok=True)
    modes = {}
    for mode, out in runs.items():
        maps = []
        for name, logits in out.maps():
            rel = Path("previews") / f"{mode}_{name}.pgm"
            _preview(out_dir / rel, logits)
            maps.append({"name": name, "shape": list(logits.shape), "sha256": _sha256(logits), "preview": rel.as_posix()})
        dev = max(float(np.abs(p.sum(axis=-1) - 1.0).max()) for p in out.attention)
        modes[mode] = {"n_maps": len(maps), "maps": maps, "softmax_max_deviation": dev}
    train, infer = runs["train"], runs["infer"]
    report = {
        "config": _provenance(cfg),
        "features": {"f_mk": list(f_mk.shape), "f_eg": list(f_eg.shape), "sha256_f_mk": _sha256(f_mk), "sha256_f_eg": _sha256(f_eg)},
        "param_counts": {
            "nsfm": nn.count(params, "nsfm"),
            "decoder": nn.count(params, "dec"),
            "mpl_per_level": decoder.mpl_param_count(dcfg),
            "epl_per_level": decoder.epl_param_count(dcfg),
        },
        "modes": modes,
        "agreement": {
            "vns_mask_l2": bool(np.array_equal(train.vns_mask[2], infer.vns_mask[2])),
            "sam_mask": bool(np.array_equal(train.sam_mask, infer.sam_mask)),
        },
    }
    write_json(out_dir / "report.json", report)
    return EXIT_OK


# ---------------------------------------------------------------- selftest

def cmd_selftest(args, cfg: Config):
    results = selftest.run(inject=args.inject_fault)
    ok = all(r["passed"] for r in results)
    print(json.dumps({"passed": ok, "suites": results}, indent=2, sort_keys=True))
    for r in results:
        if not r["passed"]:
            print(f"FAILED: {r['name']} (max error {r['max_error']:.3g} vs tolerance {r['tolerance']:g})", file=sys.stderr)
    return EXIT_OK if ok else EXIT_RECORDS


# ---------------------------------------------------------------- parser

COMMANDS = {
    "eval": (cmd_eval, "score predictions in a manifest (metrics.json)"),
    "vns-score": (cmd_vns_score, "score images for visual non-salience and partition them"),
    "prompts": (cmd_prompts, "generate box, point and coarse-mask prompts"),
    "demo-forward": (cmd_demo_forward, "run the feature module and decoder on synthetic inputs"),
    "selftest": (cmd_selftest, "run the built-in oracle suites"),
}


def _common_flags():
    p = argparse.ArgumentParser(add_help=False)
    S = argparse.SUPPRESS
    p.add_argument("--seed", type=int, default=S, help="random seed (default 0)")
    p.add_argument("--jobs", type=int, default=S, help="worker threads (default 1)")
    p.add_argument("--config", default=S, help="key=value config file")
    p.add_argument("--out", default=S, help="output directory (default ./out)")
    return p


def build_parser():
    common = _common_flags()
    parser = argparse.ArgumentParser(prog="vnskit", parents=[common], description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"vnskit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, (_, help_text) in COMMANDS.items():
        sp = sub.add_parser(name, parents=[common], help=help_text)
        if name in ("eval", "vns-score", "prompts"):
            sp.add_argument("manifest", help="JSON Lines manifest")
        cfg_group = sp.add_argument_group("config overrides")
        for f in fields(Config):
            if f.name not in GLOBAL_KEYS:
                cfg_group.add_argument("--" + f.name.replace("_", "-"), dest="cfg_" + f.name, default=None, metavar=f.name.upper())
        if name == "demo-forward":
            sp.add_argument("--weights", help="load weights instead of seeded initialisation")
            sp.add_argument("--save-weights", help="write the weights used to this file")
        if name == "selftest":
            sp.add_argument("--inject-fault", choices=["haar"], default=None, help=argparse.SUPPRESS)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg_")}
    for key in GLOBAL_KEYS:
        if hasattr(args, key):
            overrides[key] = getattr(args, key)
    if not hasattr(args, "out"):
        args.out = "out"
    try:
        cfg = resolve(getattr(args, "config", None), overrides)
        return COMMANDS[args.command][0](args, cfg)
    except (UsageError, ConfigurationError) as exc:
        print(f"vnskit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"vnskit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
