"""Command-line entry point for the full pipeline.

Subcommands: synth, train, generate, evaluate, backtranslate-train, stats,
render. Every run writes its outputs under --out together with a
run_manifest.json recording the resolved config, its hash, the seed, and
library versions. Runs are reproducible: identical config and seed produce
byte-identical JSON outputs in deterministic mode.

Exit codes: 0 on success, 1 on runtime errors, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .backtranslation import (BackTranslatorConfig, evaluate_models,
                              format_report, report_to_json,
                              train_backtranslator)
from .corpus import Dataset, load_dataset, load_split, synth_corpus
from .posstats import compare_sources, format_pos_report, load_tagged
from .render import render_sequence
from .trainer import Checkpoint, TrainConfig, fit, model_from_checkpoint


def _parse_override(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(
            f"override {text!r} must look like key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def _load_config(path: str | None, overrides: list[tuple[str, object]]) -> dict:
    config: dict = {}
    if path:
        p = Path(path)
        if not p.exists():
            raise FileNotFoundError(f"config file not found: {p}")
        with open(p, "r", encoding="utf-8") as fh:
            config = json.load(fh)
    for key, value in overrides:
        config[key] = value
    return config


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_run_manifest(out_dir: Path, command: str, config: dict,
                        seed: int | None, jobs: int = 1) -> None:
    canonical = json.dumps(config, sort_keys=True)
    manifest = {
        "command": command,
        "config": config,
        "config_hash": hashlib.sha256(canonical.encode("utf-8")).hexdigest(),
        "seed": seed,
        "jobs": jobs,
        "versions": {
            "dualsign": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
    }
    _write_json(out_dir / "run_manifest.json", manifest)


def _resolve_checkpoint(path: str) -> Path:
    p = Path(path)
    if p.is_dir():
        candidates = sorted(p.glob("*.ckpt"))
        if not candidates:
            raise FileNotFoundError(f"no .ckpt file under {p}")
        return candidates[0]
    if not p.exists():
        raise FileNotFoundError(f"checkpoint not found: {p}")
    return p


def _denormalize(dataset: Dataset, frames: np.ndarray) -> np.ndarray:
    if dataset.stats is None:
        return frames
    return dataset.stats.denormalize(frames)


# ---------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------

def cmd_synth(args) -> int:
    out = Path(args.out)
    synth_corpus(out, seed=args.seed, n_samples=args.samples,
                 n_words=args.words, min_glosses=args.min_glosses,
                 max_glosses=args.max_glosses,
                 modifier_prob=args.modifier_prob,
                 eval_samples=args.eval_samples)
    config = {"samples": args.samples, "words": args.words,
              "min_glosses": args.min_glosses, "max_glosses": args.max_glosses,
              "modifier_prob": args.modifier_prob,
              "eval_samples": args.eval_samples}
    _write_run_manifest(out, "synth", config, args.seed, args.jobs)
    print(f"wrote synthetic corpus to {out}")
    return 0


def cmd_train(args) -> int:
    config_dict = _load_config(args.config, args.override)
    data_path = args.data or config_dict.pop("data", None)
    config_dict.pop("data", None)
    if not data_path:
        raise ValueError("no dataset: pass --data or put a 'data' key in the config")
    if args.seed is not None:
        config_dict["seed"] = args.seed
    if args.deterministic:
        config_dict["deterministic"] = True
    if args.max_frames is not None:
        config_dict["max_frames"] = args.max_frames
    if args.stop_eps is not None:
        config_dict["stop_eps"] = args.stop_eps
    config = TrainConfig.from_dict(config_dict)
    dataset = load_dataset(data_path)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = fit(dataset, config, log_path=out / "train_log.jsonl")
    ckpt.save(out / "model.ckpt")
    _write_run_manifest(out, "train", config.to_dict(), config.seed, args.jobs)
    print(f"trained {config.variant} for {config.max_steps} steps; "
          f"checkpoint at {out / 'model.ckpt'}")
    return 0


def cmd_generate(args) -> int:
    ckpt = Checkpoint.load(_resolve_checkpoint(args.model))
    model, config, _ = model_from_checkpoint(ckpt)
    dataset = load_dataset(args.data)
    records = dataset.splits.get(args.split)
    if not records:
        raise ValueError(f"split {args.split!r} is empty or missing")
    max_frames = args.max_frames or config.max_frames
    stop_eps = args.stop_eps if args.stop_eps is not None else config.stop_eps
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "generated.jsonl", "w", encoding="utf-8") as fh:
        for record in records:
            frames, _ = model.generate(text=record.text, gloss=record.gloss,
                                       max_frames=max_frames, stop_eps=stop_eps)
            fh.write(json.dumps({
                "id": record.id, "text": record.text, "gloss": record.gloss,
                "frames": _denormalize(dataset, frames).tolist(),
            }) + "\n")
    _write_run_manifest(out, "generate",
                        {"model": str(args.model), "split": args.split,
                         "max_frames": max_frames, "stop_eps": stop_eps},
                        config.seed, args.jobs)
    print(f"wrote {len(records)} generated sequences to {out / 'generated.jsonl'}")
    return 0


def cmd_backtranslate_train(args) -> int:
    config_dict = _load_config(args.config, args.override)
    data_path = args.data or config_dict.pop("data", None)
    config_dict.pop("data", None)
    if not data_path:
        raise ValueError("no dataset: pass --data or put a 'data' key in the config")
    if args.seed is not None:
        config_dict["seed"] = args.seed
    config = BackTranslatorConfig.from_dict(config_dict)
    dataset = load_dataset(data_path)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = train_backtranslator(dataset, config,
                                log_path=out / "train_log.jsonl")
    ckpt.save(out / "backtranslator.ckpt")
    _write_run_manifest(out, "backtranslate-train", config.to_dict(),
                        config.seed, args.jobs)
    print(f"trained backtranslator; checkpoint at {out / 'backtranslator.ckpt'}")
    return 0


def cmd_evaluate(args) -> int:
    dataset = load_dataset(args.data)
    generators = {}
    for spec in args.models:
        if "=" in spec:
            name, path = spec.split("=", 1)
        else:
            name, path = None, spec
        ckpt = Checkpoint.load(_resolve_checkpoint(path))
        if name is None:
            name = ckpt.meta.get("config", {}).get("variant", "model")
        base, k = name, 2
        while name in generators:
            name = f"{base}_{k}"
            k += 1
        generators[name] = ckpt
    bt_ckpt = Checkpoint.load(_resolve_checkpoint(args.backtranslator))
    splits = tuple(s.strip() for s in args.splits.split(",") if s.strip())
    report = evaluate_models(generators, bt_ckpt, dataset, splits=splits,
                             include_ground_truth=args.ground_truth)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "report.json", report_to_json(report))
    table = format_report(report, splits)
    (out / "report.txt").write_text(table, encoding="utf-8")
    _write_run_manifest(out, "evaluate",
                        {"models": list(args.models), "splits": list(splits),
                         "ground_truth": args.ground_truth}, args.seed, args.jobs)
    print(table, end="")
    return 0


def cmd_stats(args) -> int:
    grouped = load_tagged(args.tagged)
    if "gloss" not in grouped or "text" not in grouped:
        raise ValueError("tagged corpus must contain both gloss and text sources")
    result = compare_sources(grouped["gloss"], grouped["text"],
                             alpha=args.alpha)
    text = format_pos_report(result)
    print(text, end="")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "pos_report.json", result)
        (out / "pos_report.txt").write_text(text, encoding="utf-8")
        _write_run_manifest(out, "stats", {"tagged": str(args.tagged),
                                           "alpha": args.alpha},
                            args.seed, args.jobs)
    return 0


def cmd_render(args) -> int:
    dataset = load_dataset(args.data)
    layout = dataset.layout
    out = Path(args.out)
    frames_path = Path(args.frames)
    if not frames_path.exists():
        raise FileNotFoundError(f"frames file not found: {frames_path}")
    records = load_split(frames_path, layout)
    count = 0
    for record in records[:args.max_samples]:
        render_sequence(record.frames, layout, out / record.id,
                        every=args.every)
        count += 1
    _write_run_manifest(out, "render",
                        {"frames": str(args.frames), "every": args.every,
                         "max_samples": args.max_samples}, args.seed, args.jobs)
    print(f"rendered {count} sequences under {out}")
    return 0


# ---------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dualsign",
        description="Dual-encoder sign language generation pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--out", required=out_required,
                       help="output directory for this run")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--jobs", type=int, default=1,
                       help="worker cap (runs are serial at desk scale)")
        p.add_argument("--deterministic", action="store_true")

    p = sub.add_parser("synth", help="write a synthetic dataset")
    common(p)
    p.set_defaults(seed=7)
    p.add_argument("--samples", type=int, default=50)
    p.add_argument("--words", type=int, default=6)
    p.add_argument("--min-glosses", type=int, default=3)
    p.add_argument("--max-glosses", type=int, default=5)
    p.add_argument("--modifier-prob", type=float, default=0.4)
    p.add_argument("--eval-samples", type=int, default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a generator variant")
    common(p)
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--data", help="dataset manifest path")
    p.add_argument("--max-frames", type=int, default=None)
    p.add_argument("--stop-eps", type=float, default=None)
    p.add_argument("override", nargs="*", type=_parse_override,
                   help="config overrides as key=value")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="generate frames for a split")
    common(p)
    p.add_argument("--model", required=True, help="checkpoint file or directory")
    p.add_argument("--data", required=True, help="dataset manifest path")
    p.add_argument("--split", default="test")
    p.add_argument("--max-frames", type=int, default=None)
    p.add_argument("--stop-eps", type=float, default=None)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("backtranslate-train",
                       help="train the pose-to-text evaluation model")
    common(p)
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--data", help="dataset manifest path")
    p.add_argument("override", nargs="*", type=_parse_override)
    p.set_defaults(func=cmd_backtranslate_train)

    p = sub.add_parser("evaluate",
                       help="back-translation scores for trained models")
    common(p)
    p.add_argument("--models", nargs="+", required=True,
                   help="checkpoints as path or name=path")
    p.add_argument("--backtranslator", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--splits", default="dev,test")
    p.add_argument("--ground-truth", action="store_true",
                   help="also score ground-truth frames fed directly")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("stats", help="POS occurrence table and Z-tests")
    common(p, out_required=False)
    p.add_argument("--tagged", required=True,
                   help="JSON-lines of tagged sentences")
    p.add_argument("--alpha", type=float, default=0.05)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("render", help="SVG stick figures from a frames file")
    common(p)
    p.add_argument("--frames", required=True,
                   help="JSON-lines frames file (dataset split or generated)")
    p.add_argument("--data", required=True,
                   help="dataset manifest declaring the channel layout")
    p.add_argument("--every", type=int, default=1)
    p.add_argument("--max-samples", type=int, default=16)
    p.set_defaults(func=cmd_render)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BrokenPipeError:
        return 1
    except Exception as exc:  # runtime failures map to exit code 1
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
