"""Command line entry point: ``kpgan gen-data | train | detect | eval | export-heatmap``.

Exit codes: 0 success, 1 runtime failure, 2 usage error. Every output file
is written to a temporary name and renamed into place, so a failed or
rejected command never leaves a half-written file behind.
"""
from __future__ import annotations

import argparse
import logging
import os
import shutil
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .autograd import CheckpointError, TrainingError
from .config import ABLATIONS, ConfigError, load_config
from .data import FAMILIES, downsample, make_corpus, read_dataset, write_dataset
from .geometry import GeometryError, PlyError, read_ply, write_ply
from .metrics import (
    MIOU_THRESHOLDS, MetricError, correspondence_iou, keypoint_miou, mean_correspondence_ratio,
    miou_curve, read_keypoints, rotation_repeatability, top_k_by_score, write_curve,
    write_embeddings, write_keypoints, write_report,
)
from .model import DetectionResult, Model, detect, run_model

log = logging.getLogger("kpgan")

TASKS = ("part", "miou", "repeat", "corr")


class UsageError(Exception):
    pass


# ----------------------------------------------------------------- helpers
def _threads(args):
    if args.threads is not None:
        n = args.threads
    else:
        raw = os.environ.get("UKP_THREADS", "1")
        try:
            n = int(raw)
        except ValueError:
            raise UsageError(f"UKP_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise UsageError("--threads must be >= 1")
    return n


def _pmap(fn, items, threads):
    """Ordered map, run on up to ``threads`` worker threads."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _families(text):
    fams = [f.strip() for f in text.split(",") if f.strip()]
    bad = [f for f in fams if f not in FAMILIES]
    if bad or not fams:
        raise UsageError(f"unknown family {', '.join(bad) or '(none)'}; "
                         f"choose from {','.join(FAMILIES)}")
    return fams


def _atomic_dir_commit(tmp, out):
    """Move every file of ``tmp`` into ``out`` (each move is atomic)."""
    os.makedirs(out, exist_ok=True)
    for name in sorted(os.listdir(tmp)):
        os.replace(os.path.join(tmp, name), os.path.join(out, name))
    shutil.rmtree(tmp, ignore_errors=True)


def _load_model(path):
    if not os.path.exists(path):
        raise FileNotFoundError(f"model file not found: {path}")
    return Model.load(path)


def _clouds(args):
    """Clouds to evaluate: ``--cloud`` files or a ``--data`` split."""
    if args.cloud:
        clouds = [read_ply(p) for p in args.cloud]
        return clouds, [_category(pc) for pc in clouds]
    if not args.data:
        raise UsageError("give --data DIR or --cloud FILE")
    fams = _families(args.families) if args.families else None
    items = read_dataset(args.data, split=args.split, families=fams)
    if not items:
        raise UsageError(f"no clouds in {args.data} for split '{args.split}'")
    for it in items:
        it.cloud.name = it.id
    return [it.cloud for it in items], [it.family for it in items]


def _category(pc):
    return pc.name.rsplit("_", 1)[0] if "_" in pc.name else "all"


# --------------------------------------------------------------- commands
def cmd_gen_data(args):
    fams = _families(args.families)
    if args.per_family < 1:
        raise UsageError("--per-family must be >= 1")
    items = make_corpus(fams, per_family=args.per_family, seed=args.seed,
                        n_points=args.n_points)
    parent = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(parent, exist_ok=True)
    tmp = tempfile.mkdtemp(prefix=".gen-", dir=parent)
    try:
        write_dataset(items, tmp)
        _atomic_dir_commit(tmp, args.out)
    finally:
        shutil.rmtree(tmp, ignore_errors=True)
    counts = {s: sum(it.split == s for it in items) for s in ("train", "val", "test")}
    print(f"wrote {len(items)} clouds ({len(fams)} families x {args.per_family}) to {args.out}: "
          f"train {counts['train']}, val {counts['val']}, test {counts['test']}")
    return 0


def _train_config(args):
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got '{item}'")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    if args.ablate:
        overrides["ablations"] = ",".join(args.ablate)
    if args.epochs is not None:
        overrides["epochs"] = args.epochs
    if args.seed is not None:
        overrides["seed"] = args.seed
    overrides["threads"] = _threads(args)
    return load_config(args.config, overrides)


def cmd_train(args):
    from .training import Trainer

    try:
        cfg = _train_config(args)
    except ConfigError as exc:
        raise UsageError(str(exc)) from None
    fams = _families(args.families) if args.families else None
    items = read_dataset(args.data, split="train", families=fams)
    if not items:
        raise UsageError(f"no training clouds in {args.data}")
    log.info("training on %d clouds, %d epochs", len(items), cfg.epochs)
    model = None
    resume = args.resume and os.path.exists(os.path.join(args.out, "model.ukpf"))
    if resume:
        model = Model.load(os.path.join(args.out, "model.ukpf"), cfg)
    trainer = Trainer(cfg, [it.cloud for it in items], out_dir=args.out, model=model)
    if resume:
        trainer.load_optimizer_state(os.path.join(args.out, "model.adam.ukpf"))
        log.info("resumed at epoch %d", trainer.epoch)
    trainer.fit(max(cfg.epochs - trainer.epoch, 0))
    last = trainer.history[-1] if trainer.history else None
    summary = f"epoch {trainer.epoch}" + (f", l_recon {last['l_recon']:.6g}" if last else "")
    print(f"trained {summary}; checkpoint in {os.path.join(args.out, 'model.ukpf')}")
    return 0


def cmd_detect(args):
    if args.top_k is not None and args.top_k < 1:
        raise UsageError("--top-k must be >= 1")
    model = _load_model(args.model)
    pc = read_ply(args.cloud)
    result = detect(model, pc, nms_radius=args.nms_radius, threshold=args.threshold,
                    top_k=args.top_k)
    if args.out:
        write_keypoints(args.out, result)
    else:
        for i, s in zip(result.keypoint_indices, result.scores):
            print(f"{int(i)} {s:.9g}")
    if args.embeddings:
        write_embeddings(args.embeddings, result.embeddings)
    log.info("%d keypoints on %s", len(result.keypoint_indices), args.cloud)
    return 0


def cmd_export_heatmap(args):
    model = _load_model(args.model)
    pc = read_ply(args.cloud)
    phi, _, _ = run_model(model, pc)
    red = np.rint(np.clip(phi, 0.0, 1.0) * 255).astype(np.uint8)
    colors = np.stack([red, np.zeros_like(red), 255 - red], axis=1)
    write_ply(args.out, pc, colors=colors)
    print(f"wrote heatmap of {len(pc)} points to {args.out}")
    return 0


# ------------------------------------------------------------------ eval
def _detector(args, model, pc):
    """Keypoints of ``pc`` from a keypoint file directory or from the model."""
    if args.keypoints:
        return read_keypoints(os.path.join(args.keypoints, f"{pc.name}.kp"), pc.name)
    return detect(model, pc, nms_radius=args.nms_radius, threshold=args.threshold,
                  top_k=args.top_k)


def _top_ranked(model, pc, k, nms_radius):
    phi, h, valid = run_model(model, pc)
    idx = top_k_by_score(phi, valid, k, pc.points, nms_radius)
    return DetectionResult(pc.name, idx, phi[idx], h, phi, valid)


def _per_category(values, cats):
    rows = {}
    for v, c in zip(values, cats):
        rows.setdefault(c, []).append(v)
    return [(c, float(np.mean(vs))) for c, vs in sorted(rows.items())]


def _eval_part(args, model, clouds, cats, threads):
    def one(pc):
        if pc.part_labels is None:
            raise MetricError(f"cloud '{pc.name}' has no part labels; --task part needs them")
        if args.keypoints:
            return _detector(args, model, pc)
        return _top_ranked(model, pc, args.n_keypoints, args.nms_radius)

    results = _pmap(one, clouds, threads)
    rows = []
    for cat in sorted(set(cats)):
        sel = [i for i, c in enumerate(cats) if c == cat]
        score = mean_correspondence_ratio([results[i] for i in sel], [clouds[i] for i in sel],
                                          k=args.k, seed=args.eval_seed)
        rows.append(("correspondence_ratio", cat, score))
    return rows


def _eval_miou(args, model, clouds, cats, threads):
    def one(pc):
        if pc.gt_keypoints is None or len(pc.gt_keypoints) == 0:
            raise MetricError(f"cloud '{pc.name}' has no annotated keypoints; "
                              "--task miou needs them")
        det = _detector(args, model, pc).keypoint_indices
        curve = miou_curve(det, pc.gt_keypoints, pc) if args.curve else None
        return keypoint_miou(det, pc.gt_keypoints, pc, args.geo_threshold), curve

    out = _pmap(one, clouds, threads)
    if args.curve:
        curves = np.array([c for _, c in out])
        lines = []
        for cat, _ in _per_category([0] * len(cats), cats):
            sel = [i for i, c in enumerate(cats) if c == cat]
            lines.append((cat, curves[sel].mean(axis=0)))
        _write_curves(args.curve, lines)
    return [("miou", c, v) for c, v in _per_category([m for m, _ in out], cats)]


def _write_curves(path, lines):
    tmp = f"{path}.parts"
    os.makedirs(tmp, exist_ok=True)
    try:
        chunks = []
        for i, (cat, values) in enumerate(lines):
            part = os.path.join(tmp, f"{i}.csv")
            write_curve(part, MIOU_THRESHOLDS, values, cat)
            with open(part) as fh:
                body = fh.read().splitlines()
            chunks.extend(body if i == 0 else body[1:])
        final = f"{path}.tmp"
        with open(final, "w", newline="") as fh:
            fh.write("\n".join(chunks) + "\n")
        os.replace(final, path)
    finally:
        shutil.rmtree(tmp, ignore_errors=True)


def _eval_repeat(args, model, clouds, cats, threads):
    def one(pc):
        if args.detector == "oracle":
            if pc.gt_keypoints is None or len(pc.gt_keypoints) < args.n_keypoints:
                raise MetricError(f"cloud '{pc.name}' lacks {args.n_keypoints} annotated "
                                  "keypoints for the oracle detector")
            gt = np.asarray(pc.gt_keypoints)

            def fn(points):
                return gt
        else:
            def fn(points):
                phi, _, valid = run_model(model, points)
                return top_k_by_score(phi, valid, args.n_keypoints, points, args.nms_radius)
        return rotation_repeatability(fn, pc, args.n_keypoints, args.dist_threshold,
                                      args.rotations, seed=args.eval_seed)

    return [("repeatability", c, v)
            for c, v in _per_category(_pmap(one, clouds, threads), cats)]


def _eval_corr(args, model, clouds, cats, threads):
    def one(pc):
        if pc.correspondence_ids is None:
            raise MetricError(f"cloud '{pc.name}' has no correspondence ids; "
                              "--task corr needs them")
        if args.points > len(pc):
            raise MetricError(f"cannot downsample '{pc.name}' ({len(pc)} points) "
                              f"to {args.points}")
        small = downsample(pc, args.points, seed=args.eval_seed)
        small.name = pc.name
        a = detect(model, pc, args.nms_radius, args.threshold, args.top_k)
        b = detect(model, small, args.nms_radius, args.threshold, args.top_k)
        if len(a.keypoint_indices) == 0 and len(b.keypoint_indices) == 0:
            raise MetricError(f"no keypoints on '{pc.name}' at threshold {args.threshold}")
        return correspondence_iou(a, b, pc.correspondence_ids, small.correspondence_ids,
                                  dice=args.dice, on_collision=args.on_collision)

    return [("correspondence_iou", c, v)
            for c, v in _per_category(_pmap(one, clouds, threads), cats)]


def cmd_eval(args):
    threads = _threads(args)
    needs_model = not (args.task == "repeat" and args.detector == "oracle") and \
        not (args.keypoints and args.task in ("part", "miou"))
    if args.task == "corr" and args.keypoints:
        raise UsageError("--task corr detects on both resolutions; use --model")
    if needs_model and not args.model:
        raise UsageError(f"--task {args.task} needs --model"
                         + (" or --keypoints" if args.task in ("part", "miou") else ""))
    if args.curve and args.task != "miou":
        raise UsageError("--curve applies to --task miou only")
    clouds, cats = _clouds(args)
    model = _load_model(args.model) if needs_model else None
    runner = {"part": _eval_part, "miou": _eval_miou, "repeat": _eval_repeat,
              "corr": _eval_corr}[args.task]
    rows = runner(args, model, clouds, cats, threads)
    if len(rows) > 1:
        metric = rows[0][0]
        rows.append((metric, "mean", float(np.mean([v for _, _, v in rows]))))
    if args.out:
        write_report(args.out, rows)
    metric, cat, value = rows[-1]
    print(f"{metric},{cat},{value:.6f}")
    return 0


# ---------------------------------------------------------------- parser
def _common(p):
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads for descriptor extraction and evaluation "
                        "(default: $UKP_THREADS or 1)")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    p.add_argument("-q", "--quiet", action="store_true", help="warnings and errors only")


def build_parser():
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="kpgan", formatter_class=fmt,
                                     description="Unsupervised 3D keypoint detection.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    p = sub.add_parser("gen-data", formatter_class=fmt, help="generate the synthetic corpus")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--families", default=",".join(FAMILIES), help="comma separated families")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--per-family", type=int, default=84, help="clouds per family")
    p.add_argument("--n-points", type=int, default=2048, help="points per cloud")
    _common(p)
    p.set_defaults(func=cmd_gen_data, parser=p)

    p = sub.add_parser("train", formatter_class=fmt, help="train a detector")
    p.add_argument("--data", required=True, help="dataset directory (train split is used)")
    p.add_argument("--config", default=None, help="config file (key = value lines)")
    p.add_argument("--out", required=True, help="checkpoint directory")
    p.add_argument("--ablate", action="append", choices=ABLATIONS, default=None,
                   help="ablation to apply; repeat for several")
    p.add_argument("--epochs", type=int, default=None, help="override the config epochs")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--families", default=None, help="restrict training to these families")
    p.add_argument("--set", action="append", default=None, metavar="KEY=VALUE",
                   help="override any config key")
    p.add_argument("--resume", action="store_true",
                   help="continue from the checkpoint in --out if present")
    _common(p)
    p.set_defaults(func=cmd_train, parser=p)

    p = sub.add_parser("detect", formatter_class=fmt, help="detect keypoints on a cloud")
    p.add_argument("--model", required=True, help="checkpoint (.ukpf)")
    p.add_argument("--cloud", required=True, help="point cloud (.ply)")
    p.add_argument("--out", default=None, help="keypoint file (default: stdout)")
    p.add_argument("--nms-radius", type=float, default=0.1, help="NMS radius")
    p.add_argument("--threshold", type=float, default=0.5, help="minimum saliency")
    p.add_argument("--top-k", type=int, default=None, help="keep at most K keypoints")
    p.add_argument("--embeddings", default=None, help="also write per-point embeddings here")
    _common(p)
    p.set_defaults(func=cmd_detect, parser=p)

    p = sub.add_parser("eval", formatter_class=fmt, help="evaluate keypoints")
    p.add_argument("--task", required=True, choices=TASKS, help="metric")
    p.add_argument("--model", default=None, help="checkpoint to detect with")
    p.add_argument("--keypoints", default=None,
                   help="directory of <cloud id>.kp files instead of a model (part, miou)")
    p.add_argument("--data", default=None, help="dataset directory")
    p.add_argument("--split", default="test", help="dataset split")
    p.add_argument("--families", default=None, help="restrict to these families")
    p.add_argument("--cloud", action="append", default=None, help="evaluate this PLY instead")
    p.add_argument("--out", default=None, help="CSV report (metric, category, value)")
    p.add_argument("--nms-radius", type=float, default=0.1, help="NMS radius")
    p.add_argument("--threshold", type=float, default=0.5, help="minimum saliency")
    p.add_argument("--top-k", type=int, default=None, help="keep at most K keypoints")
    p.add_argument("--k", type=int, default=8, help="K-means clusters (part)")
    p.add_argument("--n-keypoints", type=int, default=8,
                   help="keypoints per cloud (part, repeat)")
    p.add_argument("--geo-threshold", type=float, default=0.1,
                   help="geodesic match distance (miou)")
    p.add_argument("--curve", default=None,
                   help="also write mIoU over thresholds 0.01..0.1 to this CSV (miou)")
    p.add_argument("--rotations", type=int, default=20, help="random rotations (repeat)")
    p.add_argument("--dist-threshold", type=float, default=0.1,
                   help="re-detection distance (repeat)")
    p.add_argument("--detector", choices=("model", "oracle"), default="model",
                   help="oracle returns the annotated keypoints (repeat)")
    p.add_argument("--points", type=int, default=512, help="downsampled size (corr)")
    p.add_argument("--dice", action="store_true",
                   help="divide by the mean set size instead of the union (corr)")
    p.add_argument("--on-collision", choices=("error", "merge"), default="error",
                   help="keypoints sharing a correspondence id (corr)")
    p.add_argument("--eval-seed", type=int, default=0,
                   help="seed for rotations, K-means and downsampling")
    _common(p)
    p.set_defaults(func=cmd_eval, parser=p)

    p = sub.add_parser("export-heatmap", formatter_class=fmt,
                       help="PLY coloured by saliency (red 1, blue 0)")
    p.add_argument("--model", required=True, help="checkpoint (.ukpf)")
    p.add_argument("--cloud", required=True, help="point cloud (.ply)")
    p.add_argument("--out", required=True, help="output PLY")
    _common(p)
    p.set_defaults(func=cmd_export_heatmap, parser=p)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)
    try:
        _threads(args)
        return args.func(args)
    except UsageError as exc:
        args.parser.print_usage(sys.stderr)
        print(f"kpgan {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (CheckpointError, TrainingError, MetricError, ConfigError, PlyError, GeometryError,
            OSError, ValueError) as exc:
        print(f"kpgan {args.command}: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
