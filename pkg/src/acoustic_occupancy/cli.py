"""Command-line interface: ``acoustic-occupancy {extract,train,predict,evaluate,synth}``.

Configuration comes from an optional JSON file (``--config``) whose keys
mirror the flag names with underscores; explicit flags win. Set
``OCCUPANCY_LOG`` to a logging level name for progress output.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import read_ground_truth, write_ground_truth
from .errors import ConfigError, IngestError, NumericError, OccupancyError
from .evaluation import SweepConfig, bootstrap_leave_two_out, export_report
from .features import (
    AudioClip,
    FeatureConfig,
    extract_features,
    read_feature_csv,
    read_wav,
    summary_features,
    write_feature_csv,
    write_wav,
)
from .gmm import EmConfig
from .pipeline import (
    ALL_STRATEGIES,
    GLM,
    PipelineConfig,
    load_bundle,
    make_bootstrap_pipeline,
    save_bundle,
    train_pipeline,
)
from .synth import generate, load_scenario, scenario_to_dict

log = logging.getLogger("acoustic_occupancy")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_INGEST = 3
EXIT_NUMERIC = 4

_FEATURE_KEYS = {f.name for f in fields(FeatureConfig)}
_EM_KEYS = {f.name for f in fields(EmConfig)}
_PIPELINE_KEYS = {f.name for f in fields(PipelineConfig)}
_SWEEP_KEYS = {"window_sizes", "bootstrap_iters", "strategies", "jobs"}


def _candidates(text: str) -> tuple:
    try:
        return tuple(int(c) for c in text.split(",") if c.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _window_sizes(text: str) -> tuple:
    """``30,60,90`` or a ``start:stop:step`` range with inclusive stop."""
    try:
        if ":" in text:
            start, stop, step = (float(v) for v in text.split(":"))
            return tuple(np.arange(start, stop + step / 2, step).tolist())
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad window sizes {text!r}")


def _add_common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("configuration")
    g.add_argument("--config", type=Path, help="JSON config file; flags override it")
    g.add_argument("--fft-size", type=int)
    g.add_argument("--hop-size", type=int)
    g.add_argument("--window-seconds", type=float)
    g.add_argument("--strategy", choices=ALL_STRATEGIES)
    g.add_argument("--tau", type=float, help="transition decay of the HMM heuristic")
    g.add_argument("--self-bias", type=float, help="extra self-transition weight")
    g.add_argument("--transitions-csv", help="n x n transition matrix replacing the heuristic")
    g.add_argument("--bic-candidates", type=_candidates, help="e.g. 2,3,4,5,6,7,8,16,32")
    g.add_argument("--em-max-iters", type=int)
    g.add_argument("--em-n-init", type=int)
    g.add_argument("--bootstrap-iters", type=int)
    g.add_argument("--window-sizes", type=_window_sizes, help="30:260:10 or 30,60,90")
    g.add_argument("--seed", type=int)
    g.add_argument("--jobs", type=int)
    g.add_argument("--out-dir", type=Path)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="acoustic-occupancy",
        description="Room occupancy estimation from audio with bin-dependent GMMs and an HMM.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="compute the MFCC+delta feature CSV of a WAV file")
    p.add_argument("audio", type=Path)
    p.add_argument("-o", "--output", type=Path, help="feature CSV path (default: <audio>.features.csv)")
    p.add_argument("--summary", action="store_true", help="also print summary statistics as JSON")
    _add_common(p)

    p = sub.add_parser("train", help="train bin-dependent GMMs from a ground-truth CSV")
    p.add_argument("ground_truth", type=Path)
    p.add_argument("-o", "--output", type=Path, help="bundle path (default: <out-dir>/model.json)")
    _add_common(p)

    p = sub.add_parser("predict", help="predict occupancy for one recording")
    p.add_argument("model", type=Path)
    p.add_argument("audio", type=Path, help="WAV file or feature CSV")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.add_argument("--round", action="store_true", help="round the occupancy to an integer")
    _add_common(p)

    p = sub.add_parser("evaluate", help="bootstrap sweep over window sizes and strategies")
    p.add_argument("ground_truth", type=Path)
    _add_common(p)

    p = sub.add_parser("synth", help="generate a synthetic dataset from a scenario JSON")
    p.add_argument("scenario", type=Path)
    _add_common(p)
    return parser


def load_settings(args) -> dict:
    """Merge the JSON config file and explicit flags into one flat dict."""
    settings = {}
    if args.config is not None:
        try:
            settings.update(json.loads(Path(args.config).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{args.config}: cannot read config: {exc}") from exc
    flag_map = {
        "fft_size": "fft_size", "hop_size": "hop_size", "window_seconds": "window_seconds",
        "strategy": "strategy", "tau": "tau", "self_bias": "self_bias",
        "transitions_csv": "transitions_csv", "bic_candidates": "bic_candidates",
        "em_max_iters": "max_iters", "em_n_init": "n_init",
        "bootstrap_iters": "bootstrap_iters", "window_sizes": "window_sizes",
        "seed": "seed", "jobs": "jobs", "out_dir": "out_dir",
    }
    for attr, key in flag_map.items():
        value = getattr(args, attr, None)
        if value is not None:
            settings[key] = value
    return settings


def pipeline_config(settings: dict, base: PipelineConfig | None = None) -> PipelineConfig:
    base = base or PipelineConfig()
    settings = dict(settings)
    for nested in ("features", "em"):
        if isinstance(settings.get(nested), dict):
            settings = {**settings.pop(nested), **settings}
    unknown = set(settings) - _FEATURE_KEYS - _EM_KEYS - _PIPELINE_KEYS - _SWEEP_KEYS - {"out_dir"}
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    feat = replace(base.features, **{k: settings[k] for k in _FEATURE_KEYS & set(settings)})
    em_kw = {k: settings[k] for k in _EM_KEYS & set(settings)}
    em = replace(base.em, **em_kw)
    top = {k: settings[k] for k in (_PIPELINE_KEYS - {"features", "em"}) & set(settings)}
    return replace(base, features=feat, em=em, **top)


def _load_frames(path: Path, config: PipelineConfig, window_seconds: float):
    if path.suffix.lower() == ".csv":
        feats = read_feature_csv(path)
        return feats.tail(min(window_seconds, feats.duration)), None
    clip = read_wav(path)
    n = min(len(clip), int(round(window_seconds * clip.sample_rate)))
    tail = AudioClip(clip.samples[len(clip) - n:], clip.sample_rate)
    return (extract_features(tail, config.features),
            summary_features(tail, config.features).as_array())


def cmd_extract(args, settings) -> int:
    cfg = pipeline_config(settings)
    clip = read_wav(args.audio)
    feats = extract_features(clip, cfg.features)
    out = args.output or args.audio.with_suffix(".features.csv")
    write_feature_csv(out, feats)
    print(f"{out}: {feats.n_frames} frames x {feats.dim} features at {feats.frame_rate:.4f} fps")
    if args.summary:
        s = summary_features(clip, cfg.features)
        print(json.dumps(dict(zip(s.__dataclass_fields__, s.as_array().tolist()))))
    return EXIT_OK


def cmd_train(args, settings) -> int:
    cfg = pipeline_config(settings)
    windows = read_ground_truth(args.ground_truth)
    trained = train_pipeline(windows, cfg)
    out = args.output or Path(settings.get("out_dir") or ".") / "model.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    save_bundle(out, trained)
    bm = trained.bin_models
    for b in range(bm.n_bins):
        if bm.fallback[b]:
            print(f"bin {b:2d}: no data, using bin {bm.source_bin[b]}")
        else:
            scores = " ".join(f"M={m}:{s:.1f}" for m, s in sorted(bm.bic_scores[b].items()))
            print(f"bin {b:2d}: M={bm.models[b].n_components}  BIC {scores}")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_predict(args, settings) -> int:
    trained = load_bundle(args.model)
    cfg = pipeline_config(settings, trained.config)
    frames, summary = _load_frames(args.audio, cfg, cfg.window_seconds)
    preds = trained.predict(frames, summary, (cfg.strategy,))
    if cfg.strategy not in preds:
        raise ConfigError(
            f"strategy {cfg.strategy} needs WAV input and a bundle with a GLM"
            if cfg.strategy == GLM else f"strategy {cfg.strategy} unavailable"
        )
    p = preds[cfg.strategy]
    occupancy = round(p.occupancy) if args.round else p.occupancy
    record = {
        "strategy": p.strategy,
        "bin": p.bin,
        "fractional_bin": p.bin_estimate,
        "occupancy": occupancy,
        "frames": frames.n_frames,
        "window_seconds": cfg.window_seconds,
    }
    if args.json:
        print(json.dumps(record))
    else:
        print(f"strategy {p.strategy}: bin {p.bin} (fractional {p.bin_estimate:.4f}), "
              f"occupancy {occupancy}")
    return EXIT_OK


def sweep_config(settings: dict) -> SweepConfig:
    kw = {}
    if "window_sizes" in settings:
        kw["window_sizes"] = tuple(settings["window_sizes"])
    if "bootstrap_iters" in settings:
        kw["n_bootstrap"] = int(settings["bootstrap_iters"])
    if "strategies" in settings:
        kw["strategies"] = tuple(settings["strategies"])
    if "jobs" in settings:
        kw["jobs"] = int(settings["jobs"])
    if "seed" in settings:
        kw["seed"] = int(settings["seed"])
    return SweepConfig(**kw)


def cmd_evaluate(args, settings) -> int:
    cfg = pipeline_config(settings)
    sweep = sweep_config(settings)
    windows = [w.load() for w in read_ground_truth(args.ground_truth)]
    report = bootstrap_leave_two_out(windows, sweep, make_bootstrap_pipeline(cfg, sweep.strategies))
    out_dir = Path(settings.get("out_dir") or "report")
    for path in export_report(report, out_dir):
        print(f"wrote {path}")
    for w in report.windows():
        line = "  ".join(
            f"{s}={report.cells[(w, s)].mean_rmse:.3f}±{report.cells[(w, s)].standard_error:.3f}"
            for s in report.strategies() if (w, s) in report.cells
        )
        print(f"window {w:g}s: {line}")
    strategy, window = report.selected
    print(f"one-standard-error selection: strategy={strategy} window={window:g}s")
    return EXIT_OK


def cmd_synth(args, settings) -> int:
    scenario = load_scenario(args.scenario)
    if "seed" in settings:
        scenario = replace(scenario, seed=settings["seed"])
    windows, truth = generate(scenario)
    out_dir = Path(settings.get("out_dir") or "synth")
    payload_dir = out_dir / "data"
    payload_dir.mkdir(parents=True, exist_ok=True)
    refs = []
    for k, w in enumerate(windows):
        if w.audio is not None:
            name = f"window_{k:04d}.wav"
            write_wav(payload_dir / name, w.audio)
        else:
            name = f"window_{k:04d}.csv"
            write_feature_csv(payload_dir / name, w.features)
        refs.append(f"data/{name}")
    write_ground_truth(out_dir / "ground_truth.csv", windows, refs)
    truth_doc = {
        "scenario": scenario_to_dict(scenario),
        "counts": truth.counts.tolist(),
        "bins": truth.bins.tolist(),
        "generative_models": [m.to_dict() for m in truth.models],
    }
    (out_dir / "truth.json").write_text(json.dumps(truth_doc, indent=1))
    print(f"wrote {len(windows)} windows to {out_dir}")
    return EXIT_OK


COMMANDS = {
    "extract": cmd_extract,
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    level = getattr(logging, os.environ.get("OCCUPANCY_LOG", "WARNING").upper(), None)
    logging.basicConfig(
        level=level if isinstance(level, int) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args, load_settings(args))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IngestError, FileNotFoundError) as exc:
        print(f"ingest error: {exc}", file=sys.stderr)
        return EXIT_INGEST
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OccupancyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
