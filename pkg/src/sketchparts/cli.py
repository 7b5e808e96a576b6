"""Command-line surface.

Subcommands cover the full pipeline: gen-corpus, sketchify, train-parser,
train-router, infer, eval, rerank, describe, selfcheck. Every run with the
same seeds and inputs writes byte-identical outputs.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .augment import sketchify
from .checks import run_selfcheck
from .config import RunConfig, load_config
from .corpus import DEFAULT_TAXONOMY_TEXT, CorpusSpec, gen_corpus, load_corpus
from .describe import describe
from .errors import CheckpointError, ConfigError, ContractViolation, TaxonomyParseError
from .graphmatch import rerank
from .imaging import LabelMap, Raster
from .metrics import iou_report, pose_eval
from .model import ModelConfig, build_model, load_checkpoint, save_checkpoint
from .pgm import read_pgm, write_pgm
from .pipeline import infer_record, part_counts, summarize
from .poses import POSES
from .router import build_router, load_router, save_router
from .taxonomy import load_taxonomy, load_taxonomy_file
from .training import train_parser, train_router


def _load_tax(args, fallback_root=None):
    if getattr(args, "taxonomy", None):
        return load_taxonomy_file(args.taxonomy)
    if fallback_root is not None:
        candidate = Path(fallback_root) / "taxonomy.tax"
        if candidate.exists():
            return load_taxonomy_file(candidate)
    return load_taxonomy(DEFAULT_TAXONOMY_TEXT)


def _run_config(args):
    if getattr(args, "config", None):
        return load_config(args.config)
    return RunConfig()


def cmd_gen_corpus(args):
    cfg = _run_config(args)
    tax = _load_tax(args)
    corpus_opts = dict(cfg.corpus)
    if args.per_category is not None:
        corpus_opts["per_category"] = args.per_category
    if args.size is not None:
        corpus_opts["image_size"] = args.size
    if args.categories:
        corpus_opts["categories"] = tuple(args.categories.split(","))
    corpus_opts.setdefault("per_category", 10)
    seed = args.seed if args.seed is not None else cfg.seed
    spec = CorpusSpec(
        tax,
        per_category=corpus_opts["per_category"],
        seed=seed,
        image_size=corpus_opts.get("image_size", 128),
        categories=tuple(corpus_opts.get("categories", ())),
    )
    written = gen_corpus(spec, args.out)
    print(f"wrote {len(written)} samples under {args.out}")
    return 0


def cmd_sketchify(args):
    photo = Raster(read_pgm(args.photo))
    labels = LabelMap(read_pgm(args.labels))
    out = sketchify(photo, labels)
    write_pgm(args.out, out.pixels)
    print(f"wrote {args.out}")
    return 0


def _write_loss_log(path, log, fields):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(fields)
        for row in log:
            writer.writerow([repr(row[f]) if isinstance(row[f], float) else row[f] for f in fields])


def cmd_train_parser(args):
    cfg = _run_config(args)
    tax = _load_tax(args, fallback_root=args.train)
    samples, _ = load_corpus(args.train, tax)
    seed = args.seed if args.seed is not None else cfg.seed
    plan = cfg.train_plan(
        iterations=args.iterations,
        lr_body=args.lr_body,
        lr_seg_head=args.lr_seg,
        lr_pose_head=args.lr_pose,
        lam=args.lam,
        seed=seed,
        freeze=("shared",) if args.freeze_shared else None,
        class_balance=False if args.no_class_balance else None,
        balance_background=False if args.no_balance_background else None,
    )
    if args.init:
        model = load_checkpoint(args.init, ModelConfig(), tax)
    else:
        model = build_model(ModelConfig(), tax, seed=seed)
    log = train_parser(model, samples, plan)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, out / "model.ckpt")
    _write_loss_log(out / "train_log.csv", log, ["iter", "seg_loss", "pose_loss", "total", "lr"])
    print(f"trained {plan.iterations} iterations; wrote {out / 'model.ckpt'}")
    return 0


def cmd_train_router(args):
    cfg = _run_config(args)
    tax = _load_tax(args, fallback_root=args.train)
    samples, _ = load_corpus(args.train, tax)
    labelled = [(s.sketch, tax.branch_of(s.category)) for s in samples]
    seed = args.seed if args.seed is not None else cfg.seed
    plan = cfg.router_plan(
        iterations=args.iterations,
        lr=args.lr,
        batch_size=args.batch_size,
        seed=seed,
        augment=False if args.no_augment else None,
    )
    net = build_router(tax.num_branches, seed=seed, digest=tax.digest())
    log = train_router(net, labelled, plan)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_router(net, out / "router.ckpt")
    _write_loss_log(out / "router_log.csv", log, ["iter", "loss", "lr"])
    print(f"trained {plan.iterations} iterations; wrote {out / 'router.ckpt'}")
    return 0


def _sketch_files(path):
    path = Path(path)
    if path.is_file():
        return [path]
    files = sorted(path.rglob("*.sketch.pgm"))
    if not files:
        files = sorted(p for p in path.rglob("*.pgm") if not p.name.endswith(".labels.pgm"))
    return files


def cmd_infer(args):
    tax = _load_tax(args, fallback_root=args.sketches)
    parser = load_checkpoint(args.model, ModelConfig(), tax)
    router = None
    if args.router:
        router = load_router(args.router, tax.num_branches, expected_digest=tax.digest())
    elif not args.force_branch:
        raise ContractViolation("infer needs --router or --force-branch")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for path in _sketch_files(args.sketches):
        sketch = Raster(read_pgm(path))
        category = path.parent.name if path.parent.name in tax.categories else None
        record, labelmap = infer_record(
            parser, router, sketch, force_branch=args.force_branch, category=category
        )
        stem = path.name.replace(".sketch.pgm", "").replace(".pgm", "")
        prefix = f"{category}_" if category else ""
        write_pgm(out / f"{prefix}{stem}.pred.pgm", labelmap.labels)
        with open(out / f"{prefix}{stem}.json", "w", encoding="utf-8") as fh:
            json.dump(record, fh, indent=2)
            fh.write("\n")
    print(f"wrote predictions under {out}")
    return 0


def cmd_eval(args):
    gt_root = Path(args.gt)
    pred_root = Path(args.pred)
    pairs = []
    pose_preds, pose_truths = [], []
    poses = {}
    poses_csv = gt_root / "poses.csv"
    if poses_csv.exists():
        with open(poses_csv, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            next(reader)
            poses = {rel: pose for rel, pose in reader}
    for gt_path in sorted(gt_root.rglob("*.labels.pgm")):
        rel = gt_path.relative_to(gt_root)
        category = rel.parent.name
        stem = gt_path.name.replace(".labels.pgm", "")
        candidates = [
            pred_root / rel.parent / f"{stem}.pred.pgm",
            pred_root / f"{category}_{stem}.pred.pgm",
            pred_root / rel,
        ]
        pred_path = next((p for p in candidates if p.exists()), None)
        if pred_path is None:
            raise ConfigError(f"no prediction found for {rel}")
        pairs.append((category, LabelMap(read_pgm(pred_path)), LabelMap(read_pgm(gt_path))))
        rel_sketch = str(rel).replace(".labels.pgm", ".sketch.pgm")
        json_candidates = [
            pred_root / rel.parent / f"{stem}.json",
            pred_root / f"{category}_{stem}.json",
        ]
        json_path = next((p for p in json_candidates if p.exists()), None)
        if json_path is not None and rel_sketch in poses:
            with open(json_path, encoding="utf-8") as fh:
                pose_preds.append(json.load(fh)["pose"])
            pose_truths.append(poses[rel_sketch])
    if not pairs:
        raise ConfigError(f"no ground-truth label maps under {gt_root}")
    report = iou_report(pairs)
    print(report.table())
    outputs = {}
    if pose_preds:
        pose_report = pose_eval(pose_preds, pose_truths, merge=args.merge4)
        print(pose_report.table())
        outputs["pose.csv"] = pose_report.csv()
    outputs["iou.csv"] = report.csv()
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for name, text in outputs.items():
            (out / name).write_text(text, encoding="utf-8")
    return 0


def cmd_rerank(args):
    query = LabelMap(read_pgm(args.query))
    ranking = [
        line.strip()
        for line in Path(args.ranking).read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    db = Path(args.db)
    candidates = []
    for cid in ranking:
        path = db / f"{cid}.labels.pgm"
        if not path.exists():
            raise ConfigError(f"candidate label map {path} does not exist")
        candidates.append((cid, LabelMap(read_pgm(path))))
    reordered = rerank(query, candidates, top_t=args.top)
    text = "\n".join(reordered) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_describe(args):
    tax = _load_tax(args)
    labels = LabelMap(read_pgm(args.labels))
    if args.category:
        branch = tax.branch_of(args.category)
        category = args.category
    elif args.supercategory:
        branch = tax.branch_index(args.supercategory)
        category = None
    else:
        raise ContractViolation("describe needs --category or --supercategory")
    summary = summarize(labels, tax, branch, args.pose, category=category)
    print(describe(summary))
    return 0


def cmd_selfcheck(args):
    results = run_selfcheck(seed=args.seed if args.seed is not None else 0)
    failed = 0
    for name, ok, detail in results:
        mark = "ok  " if ok else "FAIL"
        line = f"{mark} {name}"
        if detail:
            line += f" ({detail})"
        print(line)
        failed += not ok
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 1 if failed else 0


def build_arg_parser():
    p = argparse.ArgumentParser(prog="sketchparts", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, *, seed=True, config=True):
        if seed:
            sp.add_argument("--seed", type=int, default=None)
        if config:
            sp.add_argument("--config", default=None)

    sp = sub.add_parser("gen-corpus", help="write a synthetic paired corpus")
    sp.add_argument("--out", required=True)
    sp.add_argument("--taxonomy", default=None)
    sp.add_argument("--per-category", type=int, default=None)
    sp.add_argument("--size", type=int, default=None)
    sp.add_argument("--categories", default=None)
    common(sp)
    sp.set_defaults(fn=cmd_gen_corpus)

    sp = sub.add_parser("sketchify", help="photo + labels -> sketchified raster")
    sp.add_argument("--photo", required=True)
    sp.add_argument("--labels", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_sketchify)

    sp = sub.add_parser("train-parser", help="train the routed part parser")
    sp.add_argument("--train", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--taxonomy", default=None)
    sp.add_argument("--init", default=None, help="checkpoint to fine-tune from")
    sp.add_argument("--iterations", type=int, default=None)
    sp.add_argument("--lr-body", type=float, default=None)
    sp.add_argument("--lr-seg", type=float, default=None)
    sp.add_argument("--lr-pose", type=float, default=None)
    sp.add_argument("--lam", type=float, default=None)
    sp.add_argument("--freeze-shared", action="store_true")
    sp.add_argument("--no-class-balance", action="store_true")
    sp.add_argument("--no-balance-background", action="store_true")
    common(sp)
    sp.set_defaults(fn=cmd_train_parser)

    sp = sub.add_parser("train-router", help="train the super-category classifier")
    sp.add_argument("--train", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--taxonomy", default=None)
    sp.add_argument("--iterations", type=int, default=None)
    sp.add_argument("--lr", type=float, default=None)
    sp.add_argument("--batch-size", type=int, default=None)
    sp.add_argument("--no-augment", action="store_true")
    common(sp)
    sp.set_defaults(fn=cmd_train_router)

    sp = sub.add_parser("infer", help="route and parse sketches")
    sp.add_argument("--model", required=True)
    sp.add_argument("--router", default=None)
    sp.add_argument("--sketches", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--taxonomy", default=None)
    sp.add_argument("--force-branch", default=None)
    common(sp, config=False)
    sp.set_defaults(fn=cmd_infer)

    sp = sub.add_parser("eval", help="IOU and pose reports for predictions")
    sp.add_argument("--pred", required=True)
    sp.add_argument("--gt", required=True)
    sp.add_argument("--out", default=None)
    sp.add_argument("--merge4", action="store_true")
    sp.set_defaults(fn=cmd_eval)

    sp = sub.add_parser("rerank", help="re-rank retrieval results by part graphs")
    sp.add_argument("--query", required=True)
    sp.add_argument("--ranking", required=True)
    sp.add_argument("--db", required=True)
    sp.add_argument("--top", type=int, default=50)
    sp.add_argument("--out", default=None)
    sp.set_defaults(fn=cmd_rerank)

    sp = sub.add_parser("describe", help="template description for a label map")
    sp.add_argument("--labels", required=True)
    sp.add_argument("--taxonomy", default=None)
    sp.add_argument("--category", default=None)
    sp.add_argument("--supercategory", default=None)
    sp.add_argument("--pose", required=True, choices=POSES)
    sp.set_defaults(fn=cmd_describe)

    sp = sub.add_parser("selfcheck", help="run the invariant suite")
    common(sp, config=False)
    sp.set_defaults(fn=cmd_selfcheck)

    return p


def main(argv=None):
    parser = build_arg_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ContractViolation, ConfigError, TaxonomyParseError, CheckpointError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
