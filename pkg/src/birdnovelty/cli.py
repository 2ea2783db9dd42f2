"""Command-line front end.

Subcommands::

    features  AUDIO_DIR --out DIR             per-file feature CSVs
    train     SPECIES_DIR --out DIR           model file(s) + MDL report
    score     RECORDING MODEL --out FILE      windowed density trace
    evaluate  MODELS BACKGROUNDS BIRDS --out DIR
    report    SUMMARY_JSON --out DIR          re-render table (and figure)
    synth     OUT_DIR                         synthetic demo corpus

Common flags: --config, --seed, --jobs. The default config path may be set
with $BIRDNOVELTY_CONFIG.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .audio_io import load_audio, save_wav
from .config import RunConfig, load_config
from .detector import score_trace
from .evaluation import Condition, run_experiment
from .features import CATALOGUED_FEATURE_SETS, FeatureSet, clip_features
from .persistence import (
    atomic_write,
    creation_stamp,
    model_filename,
    read_model,
    read_summary,
    table_text,
    write_feature_csv,
    write_model,
    write_summary,
    write_trace,
    write_training_report,
)
from .trainer import build_training_pool, corpus_digest, train_species

logger = logging.getLogger("birdnovelty")


class CliError(Exception):
    pass


def wav_files(directory) -> list[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise CliError(f"not a directory: {directory}")
    return sorted(p for p in directory.iterdir() if p.is_file() and p.suffix.lower() == ".wav")


def load_dir(directory) -> list:
    files = wav_files(directory)
    if not files:
        raise CliError(f"no input files in {directory}")
    clips = []
    for f in files:
        try:
            clips.append(load_audio(f))
        except Exception as exc:
            raise CliError(f"failed to read {f}: {exc}") from exc
    return clips


def _config(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _provenance(cfg: RunConfig, **extra) -> dict:
    prov = {"config": cfg.to_dict(), "seed": cfg.seed, **extra}
    stamp = creation_stamp()
    if stamp is not None:
        prov["created"] = stamp
    return prov


def cmd_features(args) -> int:
    cfg = _config(args)
    files = wav_files(args.audio_dir)
    if not files:
        raise CliError(f"no input files in {args.audio_dir}")
    out = Path(args.out)
    for f in files:
        try:
            clip = load_audio(f)
            feats, idx, pmf = clip_features(clip, cfg.spectrogram, select=args.select)
        except Exception as exc:
            raise CliError(f"{f}: {exc}") from exc
        write_feature_csv(out / f"{f.stem}.features.csv", feats, idx, pmf.frame_hop_s)
        logger.info("%s: %d feature rows", f.name, len(idx))
    return 0


def _feature_sets(args, cfg: RunConfig) -> list[FeatureSet]:
    if args.all_feature_sets:
        return list(CATALOGUED_FEATURE_SETS)
    if args.feature_set:
        return [FeatureSet.parse(s) for s in args.feature_set]
    return [cfg.train.feature_set]


def cmd_train(args) -> int:
    cfg = _config(args)
    corpus_dir = Path(args.species_dir)
    species = args.species or corpus_dir.name
    clips = load_dir(corpus_dir)
    digest = corpus_digest(clips)
    out = Path(args.out)
    for fs in _feature_sets(args, cfg):
        tcfg = replace(cfg.train, feature_set=fs)
        pool = build_training_pool(clips, cfg.spectrogram, fs)
        try:
            model = train_species(pool, tcfg, species_id=species, spectrogram_cfg=cfg.spectrogram,
                                  digest=digest, jobs=args.jobs)
        except ValueError as exc:
            raise CliError(f"{species} {fs.label}: {exc}") from exc
        model.provenance.update(_provenance(
            cfg, corpus={"dir": str(args.species_dir), "files": [c.source_id for c in clips]}))
        path = write_model(model, out / model_filename(model))
        write_training_report(model, out / path.name.removesuffix(".model.json"))
        print(f"{model.model_id}: K={model.selected_k} (MDL over K={min(model.mdl_by_k)}..{max(model.mdl_by_k)}) -> {path}")
    return 0


def cmd_score(args) -> int:
    cfg = _config(args)
    clip = load_audio(args.recording)
    model = read_model(args.model)
    trace = score_trace(clip, model, cfg.detection)
    prov = _provenance(cfg, recording=str(args.recording), model=str(args.model))
    write_trace(trace, args.out, prov, as_json=args.json)
    if args.plot:
        from .plotting import plot_trace

        plot_trace(clip, trace, args.plot)
    return 0


def _load_models(models_dir: Path, conditions: list[Condition]):
    def read_all(d):
        files = sorted(d.glob("*.model.json"))
        return [read_model(f) for f in files]

    sub = {c.label: models_dir / c.label for c in conditions}
    if all(p.is_dir() for p in sub.values()):
        models = {label: read_all(p) for label, p in sub.items()}
        if not all(models.values()):
            raise CliError(f"empty per-condition model directory under {models_dir}")
        return models
    models = read_all(models_dir)
    if not models:
        raise CliError(f"no *.model.json files in {models_dir}")
    return models


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    conditions = [Condition.parse(c) for c in (args.condition or cfg.conditions)]
    reps = args.reps if args.reps is not None else cfg.reps
    models = _load_models(Path(args.models_dir), conditions)
    model_list = models if isinstance(models, list) else [m for ms in models.values() for m in ms]
    species = list(dict.fromkeys(m.species_id for m in model_list))

    birds = {}
    for sp in species:
        d = Path(args.birds_dir) / sp
        files = wav_files(d) if d.is_dir() else []
        if not files:
            raise CliError(f"no bird clips for species {sp!r} (expected WAVs in {d})")
        birds[sp] = load_dir(d)
    backgrounds = {}
    for c in conditions:
        if c.tag not in backgrounds:
            backgrounds[c.tag] = load_dir(Path(args.backgrounds_dir) / c.tag)

    summary = run_experiment(models, backgrounds, birds, conditions, reps=reps,
                             master_seed=cfg.seed, det_cfg=cfg.detection, jobs=args.jobs)
    prov = _provenance(
        replace(cfg, conditions=tuple(f"{c.tag}:{c.snr_db:g}" for c in conditions), reps=reps),
        corpora={
            "models": str(args.models_dir),
            "backgrounds": {tag: corpus_digest(v) for tag, v in backgrounds.items()},
            "birds": {sp: corpus_digest(v) for sp, v in birds.items()},
        },
    )
    json_path, csv_path = write_summary(summary, args.out, prov)
    if args.svg:
        from .plotting import plot_summary

        plot_summary(summary, Path(args.out) / "summary.svg")
    for cell in summary.cells:
        print(f"{cell.species} {cell.feature_set} {cell.condition}: median AUC {cell.median:.3f} "
              f"[{cell.p25:.3f}, {cell.p75:.3f}] K={cell.selected_k}")
    print(f"wrote {json_path} and {csv_path}")
    return 0


def cmd_report(args) -> int:
    summary = read_summary(args.summary)
    out = Path(args.out)
    atomic_write(out / "table.csv", table_text(summary))
    for row in summary.table_rows():
        print("\t".join(row))
    if args.svg:
        from .plotting import plot_summary

        plot_summary(summary, out / "summary.svg")
    return 0


def cmd_synth(args) -> int:
    from .synthetic import chirp_song, pink_noise, speech_shaped_noise, training_corpus

    out = Path(args.out_dir)
    fs = args.sample_rate
    seed = args.seed if args.seed is not None else 0
    for i, clip in enumerate(training_corpus(args.train_recordings, args.train_duration, fs, seed)):
        save_wav(clip, out / "train" / "chirp" / f"train{i:03d}.wav", bit_depth=24)
    for i in range(args.birds):
        rng = np.random.default_rng([seed, 1, i])
        clip = chirp_song(rng.uniform(0.8, 2.0), fs, rng)
        save_wav(clip, out / "birds" / "chirp" / f"bird{i:03d}.wav", bit_depth=24)
    for i in range(args.backgrounds):
        rng = np.random.default_rng([seed, 2, i])
        make = pink_noise if i % 2 == 0 else speech_shaped_noise
        clip = make(args.background_duration, fs, rng)
        save_wav(clip, out / "backgrounds" / "noise" / f"{make.__name__}{i:03d}.wav", bit_depth=24)
    print(f"synthetic corpus written to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML/JSON run config (default: $BIRDNOVELTY_CONFIG)")
    common.add_argument("--seed", type=int, help="master seed, overrides the config")
    common.add_argument("--jobs", type=int, default=1, help="worker processes")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="birdnovelty", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("features", parents=[common], help="spectral features per WAV file")
    s.add_argument("audio_dir")
    s.add_argument("--out", required=True)
    s.add_argument("--select", action="store_true", help="keep only top-decile power frames")
    s.set_defaults(func=cmd_features)

    s = sub.add_parser("train", parents=[common], help="fit MDL-selected GMM(s) for one species")
    s.add_argument("species_dir")
    s.add_argument("--out", required=True)
    s.add_argument("--species", help="species id (default: directory name)")
    s.add_argument("--feature-set", action="append", help='e.g. "[5]" or "1,2,6"; repeatable')
    s.add_argument("--all-feature-sets", action="store_true", help="the 8 catalogued sets")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("score", parents=[common], help="density trace for one recording")
    s.add_argument("recording")
    s.add_argument("model")
    s.add_argument("--out", required=True)
    s.add_argument("--json", action="store_true", help="write JSON instead of CSV")
    s.add_argument("--plot", help="also save a waveform + trace figure (png/svg)")
    s.set_defaults(func=cmd_score)

    s = sub.add_parser("evaluate", parents=[common], help="AUC over synthetic mixtures")
    s.add_argument("models_dir")
    s.add_argument("backgrounds_dir", help="one subdirectory of WAVs per condition tag")
    s.add_argument("birds_dir", help="one subdirectory of WAVs per species id")
    s.add_argument("--condition", action="append", help="TAG:SNR_DB, repeatable")
    s.add_argument("--reps", type=int)
    s.add_argument("--out", required=True)
    s.add_argument("--svg", action="store_true", help="also write summary.svg")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("report", parents=[common], help="render an evaluation summary")
    s.add_argument("summary")
    s.add_argument("--out", required=True)
    s.add_argument("--svg", action="store_true")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("synth", parents=[common], help="write a synthetic demo corpus")
    s.add_argument("out_dir")
    s.add_argument("--sample-rate", type=int, default=22050)
    s.add_argument("--train-recordings", type=int, default=16)
    s.add_argument("--train-duration", type=float, default=40.0)
    s.add_argument("--birds", type=int, default=10)
    s.add_argument("--backgrounds", type=int, default=10)
    s.add_argument("--background-duration", type=float, default=5.0)
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CliError, ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
