"""Command-line interface: train, encode, decode, eval, plot and presets.

Exit codes are 0 on success, 1 on runtime failure and 2 on configuration
errors. ``HAC_OUTPUT_DIR`` overrides the output directory of every
subcommand unless ``--out-dir`` is given.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import torch
import yaml

from . import config as C
from .data import Utterance, attach_teachers, load_corpus
from .evaluation import (
    THRESHOLDS,
    AbxItem,
    abx_error,
    abx_items_from_alignment,
    mel_distance,
    pnmi,
    si_sdr,
    stft_distance,
    token_features,
    word_detector_f1,
)
from .io import (
    FormatError,
    Waveform,
    align_to_frames,
    load_waveform,
    parse_alignment,
    read_tokens,
    save_waveform,
    tier_of,
    write_tokens,
)
from .train import TrainingDiverged, load_model, train_loop

logger = logging.getLogger("hac")

SCHEMA_VERSION = 1
OUTPUT_ENV = "HAC_OUTPUT_DIR"
METRICS = ("pnmi", "word_f1", "abx", "reconstruction")
METRIC_COLUMNS = ["metric", "layer", "value"]
DETECTOR_COLUMNS = ["layer", "word", "token", "precision", "recall", "f1",
                    "runs_on_word", "runs_of_token", "occurrences", "occurrences_hit"]
CURVE_COLUMNS = ["layer", "threshold", "tokens"]
MANIFEST_COLUMNS = ["utterance", "start", "end", "label", "speaker"]


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


# ---------------------------------------------------------------------------
# run configuration
# ---------------------------------------------------------------------------


@dataclass
class RunConfig:
    preset: C.Preset
    data_root: Path
    output_dir: Path
    alignments: Optional[Path] = None
    teachers: Optional[Path] = None
    phonetic_teacher: str = "mock"
    lexical_teacher: str = "mock"
    onehot_noise: float = 0.1
    steps: int = 1000
    checkpoint_every: int = 0
    resume: Optional[Path] = None
    seed: int = 0
    raw: Dict[str, Any] = field(default_factory=dict)


_TOP_KEYS = {"schema_version", "preset", "seed", "output_dir", "data", "train", "overrides"}
_DATA_KEYS = {"root", "alignments", "teachers", "phonetic_teacher", "lexical_teacher", "onehot_noise"}
_TRAIN_KEYS = {"steps", "checkpoint_every", "resume"}
_OVERRIDE_KEYS = {"codec", "discriminator", "train", "weights"}


def _section(d, name: str, keys) -> Dict[str, Any]:
    sec = d.get(name) or {}
    if not isinstance(sec, dict):
        raise ConfigError(name, "must be a mapping")
    for k in sec:
        if k not in keys:
            raise ConfigError(f"{name}.{k}", "unknown field")
    return sec


def _int(value, name: str, minimum: int = 0) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(name, f"expected an integer >= {minimum}, got {value!r}")
    return value


def _replace(obj, values: Dict[str, Any], name: str):
    names = {f.name for f in dataclasses.fields(obj)}
    for k in values:
        if k not in names:
            raise ConfigError(f"{name}.{k}", "unknown field")
    cur = C.to_dict(obj)
    cur.update(values)
    try:
        if isinstance(obj, C.CodecConfig):
            return C.codec_from_dict(cur)
        if isinstance(obj, C.DiscriminatorConfig):
            return C.discriminator_from_dict(cur)
        if isinstance(obj, C.LossWeights):
            return C.LossWeights(**cur)
        return C.train_from_dict(cur)
    except (TypeError, ValueError) as exc:
        raise ConfigError(name, str(exc)) from None


def build_run_config(raw: Dict[str, Any], cli: Optional[Dict[str, Any]] = None) -> RunConfig:
    """Validate a parsed config mapping; ``cli`` values override it."""
    cli = {k: v for k, v in (cli or {}).items() if v is not None}
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a mapping")
    for k in raw:
        if k not in _TOP_KEYS:
            raise ConfigError(k, "unknown field")
    if raw.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"expected {SCHEMA_VERSION}, got {raw.get('schema_version')!r}")
    data = _section(raw, "data", _DATA_KEYS)
    train = _section(raw, "train", _TRAIN_KEYS)
    overrides = _section(raw, "overrides", _OVERRIDE_KEYS)

    name = cli.get("preset", raw.get("preset"))
    if name is None:
        raise ConfigError("preset", "required")
    try:
        preset = C.get_preset(str(name))
    except KeyError as exc:
        raise ConfigError("preset", exc.args[0]) from None
    codec = _replace(preset.codec, overrides.get("codec") or {}, "overrides.codec")
    disc = _replace(preset.discriminator, overrides.get("discriminator") or {}, "overrides.discriminator")
    tcfg = _replace(preset.train, overrides.get("train") or {}, "overrides.train")
    if overrides.get("weights"):
        tcfg = dataclasses.replace(tcfg, weights=_replace(tcfg.weights, overrides["weights"], "overrides.weights"))
    preset = dataclasses.replace(preset, codec=codec, discriminator=disc, train=tcfg)

    root = cli.get("data_root", data.get("root"))
    if root is None:
        raise ConfigError("data.root", "required")
    if not Path(root).is_dir():
        raise ConfigError("data.root", f"directory not found: {root}")
    paths = {}
    for key in ("alignments", "teachers"):
        p = cli.get(key, data.get(key))
        if p is not None and not Path(p).is_dir():
            raise ConfigError(f"data.{key}", f"directory not found: {p}")
        paths[key] = Path(p) if p is not None else None
    phn = str(data.get("phonetic_teacher", "mock"))
    lex = str(data.get("lexical_teacher", "mock"))
    if phn not in ("mock", "file", "onehot", "none"):
        raise ConfigError("data.phonetic_teacher", f"expected mock|file|onehot|none, got {phn!r}")
    if lex not in ("mock", "file", "none"):
        raise ConfigError("data.lexical_teacher", f"expected mock|file|none, got {lex!r}")
    for kind, key in ((phn, "phonetic_teacher"), (lex, "lexical_teacher")):
        if kind == "file" and paths["teachers"] is None:
            raise ConfigError(f"data.{key}", "'file' needs data.teachers")
    needs_words = codec.has_lexical and lex == "mock"
    if (needs_words or phn == "onehot") and paths["alignments"] is None:
        raise ConfigError("data.alignments", f"required by the {'onehot' if phn == 'onehot' else 'mock lexical'} teacher")
    noise = data.get("onehot_noise", 0.1)
    if not isinstance(noise, (int, float)) or noise < 0:
        raise ConfigError("data.onehot_noise", f"expected a non-negative number, got {noise!r}")

    steps = _int(cli.get("steps", train.get("steps", 1000)), "train.steps", 1)
    every = _int(cli.get("checkpoint_every", train.get("checkpoint_every", 0)), "train.checkpoint_every")
    resume = cli.get("resume", train.get("resume"))
    if resume is not None and not Path(resume).is_file():
        raise ConfigError("train.resume", f"checkpoint not found: {resume}")
    seed = _int(cli.get("seed", raw.get("seed", 0)), "seed")
    out = output_dir(cli.get("output_dir"), raw.get("output_dir"))
    return RunConfig(
        preset=preset,
        data_root=Path(root),
        output_dir=out,
        alignments=paths["alignments"],
        teachers=paths["teachers"],
        phonetic_teacher=phn,
        lexical_teacher=lex,
        onehot_noise=float(noise),
        steps=steps,
        checkpoint_every=every,
        resume=Path(resume) if resume is not None else None,
        seed=seed,
        raw=raw,
    )


def load_run_config(path, cli: Optional[Dict[str, Any]] = None) -> RunConfig:
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError("--config", f"file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError("--config", f"not valid YAML: {exc}") from None
    return build_run_config(raw, cli)


def output_dir(flag=None, configured=None, default: str = ".") -> Path:
    """Flag beats the environment variable, which beats the config file."""
    if flag is not None:
        return Path(flag)
    if os.environ.get(OUTPUT_ENV):
        return Path(os.environ[OUTPUT_ENV])
    return Path(configured) if configured is not None else Path(default)


def seed_everything(seed: int) -> None:
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def prepare_corpus(run: RunConfig) -> List[Utterance]:
    codec = run.preset.codec
    utts = load_corpus(run.data_root, codec, run.alignments, run.teachers)
    inventory = None
    if run.phonetic_teacher == "onehot":
        inventory = sorted({p for u in utts if u.phones is not None for p in u.phones.labels})
    for u in utts:
        attach_teachers(
            u,
            codec,
            phonetic=None if run.phonetic_teacher == "none" else run.phonetic_teacher,
            lexical=None if run.lexical_teacher == "none" else run.lexical_teacher,
            seed=run.seed,
            phone_inventory=inventory,
            onehot_noise=run.onehot_noise,
        )
    return utts


def cmd_train(args) -> int:
    cli = {
        "preset": args.preset,
        "data_root": args.data_root,
        "alignments": args.alignments,
        "teachers": args.teachers,
        "steps": args.steps,
        "checkpoint_every": args.checkpoint_every,
        "resume": args.resume,
        "seed": args.seed,
        "output_dir": args.out_dir,
    }
    run = load_run_config(args.config, cli)
    seed_everything(run.seed)
    utts = prepare_corpus(run)
    run.output_dir.mkdir(parents=True, exist_ok=True)
    resolved = {
        "schema_version": SCHEMA_VERSION,
        "preset": run.preset.name,
        "seed": run.seed,
        "config_hash": C.config_hash(run.preset.codec, run.preset.train),
        "codec": C.to_dict(run.preset.codec),
        "train": C.to_dict(run.preset.train),
    }
    (run.output_dir / "resolved_config.yaml").write_text(yaml.safe_dump(resolved, sort_keys=True))
    every = run.checkpoint_every or run.steps
    state = train_loop(run.preset, utts, run.steps, run.output_dir, checkpoint_every=every,
                       seed=run.seed, resume=str(run.resume) if run.resume else None,
                       log_every=args.log_every)
    print(f"trained {state.step} steps; checkpoint {run.output_dir / 'last.pt'}")
    return 0


def cmd_encode(args) -> int:
    seed_everything(args.seed)
    model = load_model(args.model)
    out = output_dir(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for path in args.audio:
        wav = load_waveform(path, model.cfg.sample_rate)
        tokens = model.tokenize(wav)
        dest = out / (Path(path).stem + ".hact")
        write_tokens(tokens, dest)
        print(f"{path} -> {dest} ({tokens.num_frames} frames, {tokens.bits_per_frame} bits/frame)")
    return 0


def cmd_decode(args) -> int:
    seed_everything(args.seed)
    model = load_model(args.model)
    out = output_dir(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for path in args.tokens:
        wav = model.detokenize(read_tokens(path))
        dest = out / (Path(path).stem + ".wav")
        save_waveform(wav, dest)
        print(f"{path} -> {dest} ({wav.duration:.3f} s)")
    return 0


@dataclass
class EvalUtterance:
    uid: str
    speaker: str
    tokens: Any  # TokenMatrix
    words: Any = None
    phones: Any = None
    audio: Optional[Waveform] = None
    reconstruction: Optional[Waveform] = None


def _find_alignment(root: Optional[Path], uid: str):
    if root is None:
        return None, None
    for ext in (".TextGrid", ".txt"):
        p = root / f"{uid}{ext}"
        if p.is_file():
            tiers = parse_alignment(p)
            return tier_of(tiers, "word"), tier_of(tiers, "phone")
    return None, None


def read_manifest(path) -> List[Dict[str, Any]]:
    """ABX items as rows of utterance, start, end, label, speaker[, prev, next]."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in MANIFEST_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise ConfigError("--abx-manifest", f"missing columns {missing}")
        rows = list(reader)
    for i, r in enumerate(rows):
        try:
            r["start"], r["end"] = float(r["start"]), float(r["end"])
        except ValueError:
            raise ConfigError("--abx-manifest", f"row {i + 1}: start/end must be numbers") from None
    return rows


def abx_items_from_manifest(rows, features: Dict[str, np.ndarray], frame_rate: float) -> List[AbxItem]:
    items = []
    for r in rows:
        feats = features.get(r["utterance"])
        if feats is None:
            raise ValueError(f"ABX manifest names unknown utterance {r['utterance']!r}")
        centers = (np.arange(feats.shape[0]) + 0.5) / frame_rate
        rows_in = np.nonzero((centers >= r["start"]) & (centers < r["end"]))[0]
        if rows_in.size == 0:
            raise ValueError(f"ABX item {r['utterance']} [{r['start']}, {r['end']}) covers no frame")
        context = (r["prev"], r["next"]) if r.get("prev") and r.get("next") else None
        items.append(AbxItem(feats[rows_in], r["label"], r["speaker"], context))
    return items


def evaluate(
    utts: Sequence[EvalUtterance],
    metrics: Sequence[str],
    layers: Sequence[str],
    model=None,
    manifest=None,
    abx_modes: Sequence[str] = ("CI",),
    pairing: str = "within_speaker",
):
    """Metric rows, word-detector rows and curve rows for the chosen layers."""
    rows, detectors, curves = [], [], []
    rate = float(utts[0].tokens.frame_rate)
    need_align = [m for m in metrics if m in ("pnmi", "word_f1")]
    for m in need_align:
        tier = "phones" if m == "pnmi" else "words"
        lacking = [u.uid for u in utts if getattr(u, tier) is None]
        if lacking:
            raise ConfigError("--alignments", f"{m} needs a {tier[:-1]} tier; missing for {lacking[0]}")
    for layer in layers:
        seqs = [u.tokens.layer(layer) for u in utts]
        if "pnmi" in metrics:
            labels = [align_to_frames(u.phones, rate, len(s)) for u, s in zip(utts, seqs)]
            rows.append({"metric": "pnmi", "layer": layer, "value": pnmi(labels, seqs)})
        if "word_f1" in metrics:
            table, curve = word_detector_f1(seqs, [u.words for u in utts], rate)
            for r in table:
                detectors.append({"layer": layer, **dataclasses.asdict(r)})
            for t, n in curve.items():
                curves.append({"layer": layer, "threshold": t, "tokens": n})
            rows.append({"metric": "word_detectors_f1_0.5", "layer": layer, "value": curve[0.5]})
        if "abx" in metrics:
            k = dict(utts[0].tokens.layers)[layer]
            entries = model.quantizer_for(layer).entries.detach().cpu().double().numpy() if model else None
            feats = {u.uid: token_features(u.tokens.layer(layer), entries, k) for u in utts}
            if manifest is not None:
                items = abx_items_from_manifest(manifest, feats, rate)
            else:
                lacking = [u.uid for u in utts if u.phones is None]
                if lacking:
                    raise ConfigError("--abx-manifest", f"abx needs a manifest or phone alignments; missing for {lacking[0]}")
                items = [it for u in utts for it in abx_items_from_alignment(feats[u.uid], u.phones, rate, u.speaker)]
            for mode in abx_modes:
                rows.append({"metric": f"abx_{mode}_{pairing}", "layer": layer,
                             "value": abx_error(items, mode, pairing)})
    if "reconstruction" in metrics:
        pairs = [(u.audio, u.reconstruction) for u in utts if u.audio is not None]
        if not pairs:
            raise ConfigError("--model", "reconstruction metrics need a model and audio")
        refs = [a.samples[: len(r)] for a, r in pairs]
        ests = [r.samples for _, r in pairs]
        sr = pairs[0][0].sample_rate
        rows.append({"metric": "si_sdr", "layer": "", "value": float(np.mean([si_sdr(a, b) for a, b in zip(refs, ests)]))})
        rows.append({"metric": "mel_distance", "layer": "", "value": float(np.mean([mel_distance(a, b, sr) for a, b in zip(refs, ests)]))})
        rows.append({"metric": "stft_distance", "layer": "", "value": float(np.mean([stft_distance(a, b) for a, b in zip(refs, ests)]))})
    return rows, detectors, curves


def _write_csv(path: Path, columns, rows) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        writer.writeheader()
        writer.writerows(rows)


def cmd_eval(args) -> int:
    seed_everything(args.seed)
    metrics = [m.strip() for m in args.metrics.split(",") if m.strip()]
    for m in metrics:
        if m not in METRICS:
            raise ConfigError("--metrics", f"unknown metric {m!r}; choose from {', '.join(METRICS)}")
    if (args.model is None) == (not args.tokens):
        raise ConfigError("--model/--tokens", "give exactly one of --model (with --data-root) or --tokens")
    alignments = Path(args.alignments) if args.alignments else None
    manifest = read_manifest(args.abx_manifest) if args.abx_manifest else None
    model = None
    utts: List[EvalUtterance] = []
    if args.model:
        if args.data_root is None:
            raise ConfigError("--data-root", "required with --model")
        model = load_model(args.model)
        for u in load_corpus(args.data_root, model.cfg, alignments):
            tokens = model.tokenize(u.wav)
            recon = model.detokenize(tokens) if "reconstruction" in metrics else None
            utts.append(EvalUtterance(u.uid, u.speaker, tokens, u.words, u.phones, u.wav, recon))
        cfg_hash = C.config_hash(model.cfg)
    else:
        for path in sorted(args.tokens):
            uid = Path(path).stem
            words, phones = _find_alignment(alignments, uid)
            utts.append(EvalUtterance(uid, uid.split("_")[0], read_tokens(path), words, phones))
        cfg_hash = C.config_hash({"layers": [list(l) for l in utts[0].tokens.layers]})
    names = utts[0].tokens.layer_names
    layers = names if not args.layer else args.layer
    for layer in layers:
        if layer not in names:
            raise ConfigError("--layer", f"unknown layer {layer!r}; available: {', '.join(names)}")
    modes = ("CI", "CD") if args.abx_mode == "both" else (args.abx_mode,)
    rows, detectors, curves = evaluate(utts, metrics, layers, model, manifest, modes, args.abx_pairing)

    out = output_dir(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "metrics.csv", METRIC_COLUMNS, rows)
    if "word_f1" in metrics:
        _write_csv(out / "word_detectors.csv", DETECTOR_COLUMNS, detectors)
        _write_csv(out / "word_curve.csv", CURVE_COLUMNS, curves)
    summary = {"config_hash": cfg_hash, "seed": args.seed, "metrics": rows}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    for r in rows:
        print(f"{r['metric']:<28} {r['layer']:<12} {r['value']:.4f}")
    return 0


def cmd_plot(args) -> int:
    from .plots import render

    seed_everything(args.seed)
    out = Path(args.output)
    if not out.is_absolute() and (args.out_dir or os.environ.get(OUTPUT_ENV)):
        out = output_dir(args.out_dir) / out
    out.parent.mkdir(parents=True, exist_ok=True)
    labels = args.labels.split(",") if args.labels else [Path(p).parent.name or Path(p).stem for p in args.csv]
    if len(labels) != len(args.csv):
        raise ConfigError("--labels", f"{len(labels)} labels for {len(args.csv)} CSV files")
    render(args.kind, args.csv, labels, out)
    print(out)
    return 0


def cmd_presets(args) -> int:
    for name in C.preset_names():
        p = C.get_preset(name)
        c = p.codec
        print(f"{name:<14} {c.tokens_per_frame} tokens/frame  {c.bits_per_frame:>3} bits/frame  "
              f"{c.bits_per_frame * c.frame_rate:>7.0f} bit/s  {p.description}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed (default: config value or 0)")
    common.add_argument("--out-dir", default=None, help=f"output directory (overrides ${OUTPUT_ENV})")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = argparse.ArgumentParser(prog="hac", description="Hierarchical audio codec toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common], help="train a codec from a YAML config")
    p.add_argument("--config", required=True, help="YAML run config (schema_version 1)")
    p.add_argument("--preset", help="override the preset name")
    p.add_argument("--data-root", help="override data.root")
    p.add_argument("--alignments", help="override data.alignments")
    p.add_argument("--teachers", help="override data.teachers")
    p.add_argument("--steps", type=int, help="override train.steps")
    p.add_argument("--checkpoint-every", type=int, help="override train.checkpoint_every")
    p.add_argument("--resume", help="resume from this checkpoint")
    p.add_argument("--log-every", type=int, default=100, help="log the mel loss every N steps")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("encode", parents=[common], help="audio files to token files")
    p.add_argument("--model", required=True, help="checkpoint or exported model")
    p.add_argument("audio", nargs="+", help="input .wav files")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", parents=[common], help="token files to audio files")
    p.add_argument("--model", required=True, help="checkpoint or exported model")
    p.add_argument("tokens", nargs="+", help="input .hact token files")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("eval", parents=[common], help="token metrics and reconstruction quality")
    p.add_argument("--model", help="checkpoint or exported model; tokenizes --data-root")
    p.add_argument("--data-root", help="directory of .wav files (with --model)")
    p.add_argument("--tokens", nargs="+", help="precomputed .hact files instead of --model")
    p.add_argument("--alignments", help="directory of <uid>.TextGrid / <uid>.txt alignments")
    p.add_argument("--metrics", default="pnmi,word_f1", help=f"comma list from {','.join(METRICS)}")
    p.add_argument("--layer", action="append", help="token layer to analyse (repeatable; default all)")
    p.add_argument("--abx-manifest", help="CSV of ABX items: utterance,start,end,label,speaker[,prev,next]")
    p.add_argument("--abx-mode", choices=("CI", "CD", "both"), default="CI", help="ABX context mode")
    p.add_argument("--abx-pairing", choices=("within_speaker", "across_speaker", "any"),
                   default="within_speaker", help="speaker constraint on ABX triples")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plot", parents=[common], help="render figures from eval CSVs")
    p.add_argument("csv", nargs="+", help="metrics.csv or word_curve.csv files, one per model")
    p.add_argument("--kind", required=True, choices=("abx", "pnmi", "words", "table"), help="figure type")
    p.add_argument("--labels", help="comma-separated model labels (default: parent directory names)")
    p.add_argument("-o", "--output", required=True, help="output .png path")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("presets", parents=[common], help="list model presets")
    p.set_defaults(func=cmd_presets)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.seed is None:
        args.seed = None if args.command == "train" else 0
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (TrainingDiverged, FormatError, ValueError, FileNotFoundError, KeyError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
