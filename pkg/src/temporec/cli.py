"""Command line entry points: prepare, synth, train, eval, gradcheck, histogram."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, restore_params
from .checks import SUITES
from .config import ABLATION_VARIANTS, RunConfig, load_config
from .data import (compute_stats, kcore_filter, load_interactions,
                   load_item_categories, time_histogram)
from .hmft import read_hmft, write_hmft
from .model import Model
from .synth import SynthConfig, generate
from .train import evaluate, prepare_training_data, run_ablation


def _cmd_prepare(args) -> int:
    log = load_interactions(args.interactions)
    filtered = kcore_filter(log, args.kcore)
    stats = compute_stats(filtered)
    if filtered.n_actions == 0:
        print(f"warning: {args.kcore}-core filtering removed every interaction",
              file=sys.stderr)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = [f"{it.user_id}\t{it.item_id}\t{it.timestamp}\n"
             for seq in filtered.by_user.values() for it in seq]
    (out / "interactions.tsv").write_text("".join(lines), encoding="utf-8")

    keep = sorted(filtered.item_ids())
    cats = load_item_categories(args.items)
    item_lines = []
    for token in keep:
        ids = ",".join(str(c) for c in sorted(cats.get(token, ())))
        item_lines.append(f"{token}\t{ids}\n")
    (out / "items.tsv").write_text("".join(item_lines), encoding="utf-8")

    for flag, name in ((args.txt_features, "txt_features.hmft"),
                       (args.img_features, "img_features.hmft")):
        if flag is None:
            continue
        ids, matrix = read_hmft(flag)
        row_of = {i: r for r, i in enumerate(ids)}
        missing = [t for t in keep if t not in row_of]
        if missing:
            raise SystemExit(
                f"{flag}: missing feature rows for {len(missing)} items, "
                f"e.g. {missing[:3]}")
        write_hmft(out / name, keep,
                   np.stack([matrix[row_of[t]] for t in keep]))

    (out / "stats.json").write_text(stats.to_json() + "\n", encoding="utf-8")
    print(stats.to_json())
    return 0


def _cmd_synth(args) -> int:
    cfg = SynthConfig(n_users=args.users, n_items=args.items,
                      d_txt=args.d_txt, d_img=args.d_img,
                      n_categories=args.categories,
                      min_interactions=args.min_interactions,
                      max_interactions=args.max_interactions,
                      drift=args.drift, seed=args.seed,
                      span_days=args.span_days)
    generate(cfg, args.out)
    print(json.dumps({"out": str(args.out), "drift": cfg.drift,
                      "seed": cfg.seed}))
    return 0


def _load_run_config(path: str | None) -> RunConfig:
    return load_config(path) if path else RunConfig()


def _cmd_train(args) -> int:
    cfg = _load_run_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    metrics_path = out / "metrics.jsonl"
    metrics_path.write_text("", encoding="utf-8")

    def log_fn(report):
        line = json.dumps(report.as_dict())
        print(line, flush=True)
        with open(metrics_path, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")

    result, test_metrics = run_ablation(cfg, args.data, args.variant,
                                        out_dir=out, log_fn=log_fn)
    summary = {"variant": args.variant, "best_epoch": result.best_epoch,
               "best_valid_ndcg@10": result.best_metric}
    summary.update({f"test_{k}": v for k, v in test_metrics.items()})
    print(json.dumps(summary))
    return 0


def _cmd_eval(args) -> int:
    ckpt_path = Path(args.checkpoint)
    config_path = ckpt_path.parent / "config.txt"
    if not config_path.exists():
        raise SystemExit(f"no config.txt next to checkpoint {ckpt_path}")
    cfg = load_config(config_path)
    dataset = prepare_training_data(cfg, args.data)
    model = Model(cfg, dataset.n_items, dataset.n_categories,
                  dataset.min_timestamp, dataset.txt_features,
                  dataset.img_features)
    restore_params(model.params, load_checkpoint(ckpt_path))
    metrics = evaluate(model, dataset, args.split)
    print(json.dumps({"split": args.split, **metrics}))
    return 0


def _cmd_gradcheck(args) -> int:
    names = [args.module] if args.module else list(SUITES)
    failed = False
    for name in names:
        report = SUITES[name]()
        print(f"[{name}]")
        print(report.format())
        failed |= not report.passed
    return 1 if failed else 0


def _cmd_histogram(args) -> int:
    log = load_interactions(Path(args.data) / "interactions.tsv")
    counts = time_histogram(log, args.bins)
    print(json.dumps({"bins": args.bins, "counts": counts.tolist()}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="temporec",
        description="Time-aware mixture-of-experts sequential recommender")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="filter raw logs into a dataset directory")
    p.add_argument("--interactions", required=True)
    p.add_argument("--items", required=True)
    p.add_argument("--txt-features", dest="txt_features")
    p.add_argument("--img-features", dest="img_features")
    p.add_argument("--kcore", type=int, default=5)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_prepare)

    p = sub.add_parser("synth", help="generate a synthetic dataset directory")
    p.add_argument("--users", type=int, required=True)
    p.add_argument("--items", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--drift", action="store_true")
    p.add_argument("--categories", type=int, default=4)
    p.add_argument("--d-txt", dest="d_txt", type=int, default=16)
    p.add_argument("--d-img", dest="d_img", type=int, default=16)
    p.add_argument("--min-interactions", type=int, default=8)
    p.add_argument("--max-interactions", type=int, default=14)
    p.add_argument("--span-days", type=int, default=240)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_synth)

    p = sub.add_parser("train", help="train a model on a dataset directory")
    p.add_argument("--data", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--variant", default="full", choices=ABLATION_VARIANTS)
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="test", choices=("valid", "test"))
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suites")
    p.add_argument("--module", choices=sorted(SUITES))
    p.set_defaults(fn=_cmd_gradcheck)

    p = sub.add_parser("histogram", help="interaction-time histogram")
    p.add_argument("--data", required=True)
    p.add_argument("--bins", type=int, default=30)
    p.set_defaults(fn=_cmd_histogram)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
