"""Command-line entry point: train, evaluate, ablate, make-toy."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import PRESETS, apply_preset, load_config
from .data import DataError
from .frontend import ConfigError
from .metrics import compute_eer, format_eer, write_scores
from .trainer import Checkpoint, TrainingDiverged, evaluate, run_ablation, train

log = logging.getLogger("aasistx")


def _config(args):
    overrides = list(args.override or [])
    if getattr(args, "seed", None) is not None:
        overrides.append(f"seed={args.seed}")
    cfg = load_config(args.config, overrides)
    return cfg


def _manifests(cfg, args):
    train_m = getattr(args, "train_manifest", None) or cfg.data.train_manifest
    val_m = getattr(args, "val_manifest", None) or cfg.data.val_manifest
    if not train_m:
        raise ConfigError("no training manifest: set data.train_manifest or pass --train-manifest")
    return train_m, val_m


def cmd_train(args) -> int:
    cfg = _config(args)
    cfg = apply_preset(cfg, args.preset or cfg.preset)
    train_m, val_m = _manifests(cfg, args)
    out = Path(args.out_dir or cfg.data.out_dir)
    result = train(cfg, train_m, val_m, out_dir=out)
    best = result.best.best_val_eer
    print(f"trained preset {cfg.preset} for {cfg.epochs} epochs; best val EER "
          f"{'n/a' if best is None else format_eer(best) + '%'}; checkpoints in {out}")
    return 0


def cmd_evaluate(args) -> int:
    ckpt = Checkpoint.load(args.checkpoint)
    scores = evaluate(ckpt, args.manifest)
    write_scores(scores, args.out)
    bona, spoof = scores.arrays()
    if bona.size and spoof.size:
        print(f"EER {format_eer(compute_eer(scores)[0])}% over {len(scores)} utterances")
    else:
        print(f"wrote {len(scores)} scores (EER needs both classes)")
    return 0


def cmd_ablate(args) -> int:
    cfg = _config(args)
    presets = [p.strip() for p in args.presets.split(",") if p.strip()]
    train_m, val_m = _manifests(cfg, args)
    report = run_ablation(presets, cfg, train_m, val_m, out_dir=args.out_dir)
    text_path, csv_path = report.save(args.report)
    sys.stdout.write(report.render_text())
    print(f"report written to {text_path} and {csv_path}")
    return 0 if all(r.error is None for r in report.rows) else 1


def cmd_make_toy(args) -> int:
    from .toy import write_toy_corpus

    train_m, dev_m = write_toy_corpus(args.root, args.n_train, args.n_dev, args.seconds, args.seed)
    print(f"wrote {train_m} and {dev_m}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aasistx", description="Spoofed-speech countermeasure training toolkit")
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def config_args(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("-o", "--override", action="append", metavar="KEY=VALUE",
                       help="dotted config override, e.g. model.attention.num_heads=2")
        p.add_argument("--train-manifest")
        p.add_argument("--val-manifest")
        p.add_argument("--out-dir")

    p = sub.add_parser("train", help="train one preset")
    config_args(p)
    p.add_argument("--preset", choices=PRESETS)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a manifest with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="score TSV path")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="train and score several presets")
    config_args(p)
    p.add_argument("--presets", default=",".join(PRESETS))
    p.add_argument("--seed", type=int)
    p.add_argument("--report", required=True, help="text report path; a .csv sibling is also written")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("make-toy", help="write the separable synthetic corpus")
    p.add_argument("root")
    p.add_argument("--n-train", type=int, default=64, help="utterances per class")
    p.add_argument("--n-dev", type=int, default=32)
    p.add_argument("--seconds", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_make_toy)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, DataError, TrainingDiverged) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
