"""Command-line entry points: train, eval, pareto, audio, serve.

Outputs default to $QUIETWALK_OUT_DIR (or ./runs). Every training run writes
a checkpoint, a JSONL metrics log, and a manifest that reproduces the run
bit-exactly when passed back as --config.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import yaml

from . import __version__
from .checkpoint import (
    CheckpointError,
    bundle_from_trainer,
    file_hash,
    load_checkpoint,
    save_checkpoint,
)
from .config import (
    ConfigError,
    ExperimentConfig,
    apply_overrides,
    config_hash,
    load_config,
    to_dict,
)
from .evaluate import evaluate_checkpoint
from .logs import RecordWriter, SchemaMismatch, read_records, write_records
from .report import build_report, format_report, report_records
from .trainer import Trainer, TrainingDiverged

OUT_DIR_ENV = "QUIETWALK_OUT_DIR"


def default_out_dir() -> Path:
    return Path(os.environ.get(OUT_DIR_ENV, "runs"))


def parse_mode(text: str):
    """'cncp' | 'conc' | 'rc' | 'ppo' | 'oracle_safe:EPS' | 'oracle_morl:BETA'."""
    if ":" in text:
        name, arg = text.split(":", 1)
        try:
            value = float(arg)
        except ValueError:
            raise ConfigError(f"mode argument '{arg}' is not a number") from None
        if name == "oracle_safe":
            return name, {"fixed_eps": value}
        if name == "oracle_morl":
            return name, {"beta": value}
        raise ConfigError(f"mode '{name}' does not take an argument")
    if text in ("cncp", "conc", "rc", "ppo"):
        return text, {}
    raise ConfigError(f"unknown mode '{text}'")


def _load_cfg(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if getattr(args, "set", None):
        cfg = apply_overrides(cfg, args.set)
    if getattr(args, "seed", None) is not None:
        cfg = apply_overrides(cfg, [f"trainer.seed={args.seed}"])
    return cfg


def cmd_train(args) -> int:
    try:
        cfg = _load_cfg(args)
        mode, extra = parse_mode(args.mode)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out) if args.out else default_out_dir() / f"{args.mode.replace(':', '_')}_s{cfg.trainer.seed}"
    out.mkdir(parents=True, exist_ok=True)

    chash = config_hash(cfg)
    version_string = f"quietwalk-{__version__}+cfg.{chash}"
    manifest = {
        "kind": "manifest",
        "config": to_dict(cfg),
        "mode": args.mode,
        "seed": cfg.trainer.seed,
        "config_hash": chash,
        "version_string": version_string,
    }
    with open(out / "manifest.yaml", "w") as fh:
        yaml.safe_dump(manifest, fh, sort_keys=True)

    trainer = Trainer(mode, cfg.env, cfg.cost, cfg.agent, cfg.trainer, **extra)
    ckpt_path = out / "checkpoint.npz"

    def on_checkpoint(iteration):
        save_checkpoint(out / f"checkpoint_{iteration:06d}.npz",
                        bundle_from_trainer(trainer, chash, version_string))

    try:
        with RecordWriter(out / "metrics.jsonl") as writer:
            trainer.run(
                on_metrics=lambda m: writer.write({"kind": "train_iter", **m}),
                on_checkpoint=on_checkpoint,
            )
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 3
    save_checkpoint(ckpt_path, bundle_from_trainer(trainer, chash, version_string))
    print(f"wrote {ckpt_path} and {out / 'metrics.jsonl'}")
    return 0


def cmd_eval(args) -> int:
    try:
        cfg = _load_cfg(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    records = []
    for path in args.checkpoint:
        try:
            bundle = load_checkpoint(path)
        except CheckpointError as exc:
            print(f"checkpoint error: {exc}", file=sys.stderr)
            return 2
        records.extend(
            evaluate_checkpoint(bundle, cfg.eval_eps, cfg.eval_v_targets,
                                method=args.method or bundle.mode)
        )
    out = Path(args.out) if args.out else default_out_dir() / "eval.jsonl"
    write_records(out, records)
    print(f"wrote {len(records)} records to {out}")
    return 0


def cmd_pareto(args) -> int:
    records = []
    try:
        for path in args.log:
            records.extend(read_records(path, kinds={"eval"}))
    except (SchemaMismatch, OSError) as exc:
        print(f"log error: {exc}", file=sys.stderr)
        return 2
    if not records:
        print("no eval records found", file=sys.stderr)
        return 2
    report = build_report(records)
    text = format_report(report)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.txt").write_text(text)
        write_records(out / "report.jsonl", report_records(report))
        print(f"wrote {out / 'report.txt'} and {out / 'report.jsonl'}")
    else:
        print(text, end="")
    return 0


def _parse_segment(text: str):
    try:
        start, end = text.split(":")
        return float(start), float(end)
    except ValueError:
        raise ValueError(f"segment '{text}' is not of the form START:END") from None


def cmd_audio(args) -> int:
    from .audio import (
        Calibration,
        MalformedWav,
        UndefinedLevel,
        UnsupportedEncoding,
        locomotion_spl,
        parse_wav,
        rms,
        spl_db,
    )

    try:
        data = Path(args.wav).read_bytes()
    except OSError as exc:
        print(f"cannot read {args.wav}: {exc}", file=sys.stderr)
        return 2
    try:
        clip = parse_wav(data)
    except (MalformedWav, UnsupportedEncoding) as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return 2
    cal = Calibration(pa_per_unit=args.calibration)
    try:
        segments = [_parse_segment(s) for s in args.segment] or [(0.0, clip.duration)]
        env_segment = _parse_segment(args.env_segment) if args.env_segment else None
    except ValueError as exc:
        print(str(exc), file=sys.stderr)
        return 2

    lines = [f"# {args.wav}: {clip.sample_rate} Hz, {clip.channels} ch, {clip.duration:.3f} s"]
    lines.append("start_s\tend_s\trms\tdb_spl")
    for seg in segments:
        try:
            amplitude = rms(clip, seg)
        except ValueError as exc:
            print(f"segment error: {exc}", file=sys.stderr)
            return 2
        try:
            if env_segment is not None:
                level = f"{locomotion_spl(clip, seg, env_segment, cal):.3f}"
            else:
                level = f"{spl_db(amplitude, cal):.3f}"
        except UndefinedLevel:
            level = "undefined"
        lines.append(f"{seg[0]:.6f}\t{seg[1]:.6f}\t{amplitude:.8f}\t{level}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    else:
        print(text, end="")
    return 0


def cmd_serve(args) -> int:
    from .service import serve

    try:
        bundle = load_checkpoint(args.checkpoint)
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return 2
    host, _, port = args.bind.rpartition(":")
    host = host or "127.0.0.1"
    try:
        port = int(port)
    except ValueError:
        print(f"invalid bind address '{args.bind}'", file=sys.stderr)
        return 2
    serve(bundle, host, port, seed=args.seed or 0, pace=not args.no_pace,
          checkpoint_hash=file_hash(args.checkpoint))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="quietwalk",
        description="Noise-budgeted locomotion: training, evaluation, and steering.",
    )
    parser.add_argument("--version", action="version", version=f"quietwalk {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train a policy")
    train.add_argument("--config", help="experiment config (YAML; manifests accepted)")
    train.add_argument("--mode", required=True,
                       help="cncp | conc | rc | ppo | oracle_safe:EPS | oracle_morl:BETA")
    train.add_argument("--seed", type=int, help="override trainer.seed")
    train.add_argument("--out", help="output directory")
    train.add_argument("--set", action="append", default=[],
                       metavar="PATH=VALUE", help="dotted-path config override")
    train.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="evaluate checkpoints over the (eps, v) grid")
    ev.add_argument("--checkpoint", action="append", required=True)
    ev.add_argument("--config", help="experiment config for the eval grid")
    ev.add_argument("--method", help="method label for the records")
    ev.add_argument("--seed", type=int, help=argparse.SUPPRESS)
    ev.add_argument("--out", help="output JSONL path")
    ev.add_argument("--set", action="append", default=[], metavar="PATH=VALUE")
    ev.set_defaults(func=cmd_eval)

    par = sub.add_parser("pareto", help="build comparison report from eval logs")
    par.add_argument("--log", action="append", required=True)
    par.add_argument("--out", help="report output directory")
    par.set_defaults(func=cmd_pareto)

    aud = sub.add_parser("audio", help="SPL analysis of a WAV recording")
    aud.add_argument("--wav", required=True)
    aud.add_argument("--segment", action="append", default=[],
                     metavar="START:END", help="analysis segment in seconds")
    aud.add_argument("--env-segment", metavar="START:END",
                     help="ambient-noise segment subtracted in the power domain")
    aud.add_argument("--calibration", type=float, default=1.0,
                     help="pascals per digital full-scale unit")
    aud.add_argument("--out", help="report output path")
    aud.set_defaults(func=cmd_audio)

    srv = sub.add_parser("serve", help="run the live steering service")
    srv.add_argument("--checkpoint", required=True)
    srv.add_argument("--bind", default="127.0.0.1:8750", metavar="HOST:PORT")
    srv.add_argument("--seed", type=int, default=0)
    srv.add_argument("--no-pace", action="store_true",
                     help="free-run the simulation instead of 50 Hz wall-clock pacing")
    srv.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
