"""Command-line entry point: ``rqcurve <subcommand> ...``.

Failures print one JSON line to stderr, ``{"error": kind, "message": ...}``,
and exit with 1 (usage), 2 (data or schema) or 3 (backend).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, fields, replace
from pathlib import Path

from . import simcodec
from .codec import BackendConfig, BackendError, ExternalBackend, StatsParseError, parse_kv_config
from .core import DEFAULT_ANCHOR_CRF, GridError
from .evaluation import (
    DEFAULT_TARGET, emit_curve_csv, evaluate, evaluate_dynamic, run_ablation_suite,
)
from .features import CodecSchemaError, GlcmError, extract_record
from .ingest import Y4MParseError
from .nn import LossConfig, ModelFileError
from .pipeline import (
    ABLATIONS, DegenerateAnchorError, FeatureFileError, PredictorConfig, TrainConfig,
    TrainingError, load_model, read_feature_file, save_model, train, write_feature_file,
)
from .strategy import DEFAULT_SLOPE_THRESHOLD, crf_for_slope, crf_for_target_vmaf

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_BACKEND = 0, 1, 2, 3
TRAIN_FILE, TEST_FILE = "train.features", "test.features"

_DATA_ERRORS = (FeatureFileError, ModelFileError, CodecSchemaError, Y4MParseError, GlcmError,
                StatsParseError, GridError, DegenerateAnchorError, TrainingError, ValueError,
                KeyError, OSError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# -- config files ------------------------------------------------------------------------------


def _coerce(value: str, default):
    if isinstance(default, bool):
        return value.lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    return value


def default_config_items():
    """Every tunable with its default, as ``(key, value)`` pairs."""
    pc, tc, lc = PredictorConfig(), TrainConfig(), LossConfig()
    items = [("anchor_crf", pc.anchor_crf), ("suspension_mode", pc.suspension_mode),
             ("lam", lc.lam)]
    items += [(f.name, getattr(tc, f.name)) for f in fields(TrainConfig)]
    return items


def load_predictor_config(path, ablation: str) -> PredictorConfig:
    raw = parse_kv_config(Path(path).read_text()) if path else {}
    defaults = dict(default_config_items())
    unknown = sorted(set(raw) - set(defaults))
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(unknown)}")
    vals = {k: _coerce(raw[k], defaults[k]) if k in raw else v for k, v in defaults.items()}
    tc = TrainConfig(**{f.name: vals[f.name] for f in fields(TrainConfig)})
    return PredictorConfig(anchor_crf=vals["anchor_crf"], ablation=ablation,
                           suspension_mode=vals["suspension_mode"],
                           loss=replace(LossConfig(), lam=vals["lam"]), train=tc)


def _backend_pair(path):
    raw = parse_kv_config(Path(path).read_text())
    main = BackendConfig.from_file(path)
    pre = replace(main, encode_cmd=raw.get("pre_encode_cmd", main.encode_cmd),
                  metric_cmd=raw.get("pre_metric_cmd", main.metric_cmd))
    return ExternalBackend(main), ExternalBackend(pre)


def _samples(path):
    return read_feature_file(path).samples


# -- subcommands -------------------------------------------------------------------------------


def cmd_synth_data(args):
    tr, te = simcodec.synth_dataset(args.train, args.test, seed=args.seed, noise_sigma=args.noise,
                                    anchor_crf=args.anchor_crf, anchor_noise=args.anchor_noise)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_feature_file(out / TRAIN_FILE, tr)
    if te:
        write_feature_file(out / TEST_FILE, te)
    print(json.dumps({"train": len(tr), "test": len(te), "out": str(out)}))


def cmd_extract(args):
    backend, pre = _backend_pair(args.backend)
    with ThreadPoolExecutor(max_workers=args.jobs) as pool:
        records = list(pool.map(
            lambda p: extract_record(p, backend, pre, anchor_crf=args.anchor_crf), args.input))
    write_feature_file(args.out, records)
    print(json.dumps({"records": len(records), "out": args.out}))


def cmd_train(args):
    cfg = load_predictor_config(args.config, args.ablation)
    data = Path(args.data)
    tr = _samples(data / TRAIN_FILE)
    te = _samples(data / TEST_FILE) if (data / TEST_FILE).exists() else None
    model, report = train(tr, cfg, seed=args.seed, test_samples=te)
    save_model(args.out, model)
    Path(str(args.out) + ".report.json").write_text(json.dumps(report.epochs))
    print(json.dumps({"model": args.out, **report.final}))


def cmd_predict(args):
    model = load_model(args.model)
    samples = _samples(args.features)
    curves = model.predict_samples(samples)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "crf", "vmaf", "bitrate"])
        for s, c in zip(samples, curves):
            for crf, v, b in zip(c.crf, c.vmaf, c.bitrate):
                w.writerow([s.id, f"{crf:.1f}", repr(float(v)), repr(float(b))])
    print(json.dumps({"videos": len(samples), "out": args.out}))


def cmd_recommend(args):
    model = load_model(args.model)
    samples = _samples(args.features)
    for s, c in zip(samples, model.predict_samples(samples)):
        if args.policy == "quality":
            d = crf_for_target_vmaf(c, args.target)
        else:
            d = crf_for_slope(c, args.threshold)
        print(json.dumps({"id": s.id, "policy": args.policy, **asdict(d)}))


def cmd_evaluate(args):
    data = Path(args.data)
    if args.ablation_suite:
        cfg = load_predictor_config(args.config, "full")
        table = run_ablation_suite(_samples(data / TRAIN_FILE), _samples(data / TEST_FILE),
                                   seed=args.seed, train_config=cfg.train, base=cfg)
        print(table.to_text())
        print(table.to_json())
        return
    if not args.model:
        raise UsageError("evaluate needs --model unless --ablation-suite is given")
    model = load_model(args.model)
    path = data / TEST_FILE if data.is_dir() else data
    samples = _samples(path)
    if args.dynamic_anchor:
        report = evaluate_dynamic(model, samples, simcodec.SimCodecBackend(), args.target)
    else:
        report = evaluate(model, samples, args.target)
    print(f"n={report.n} vmaf_mae={report.vmaf_mae:.4f} bitrate_mae={report.bitrate_mae:.2f} "
          f"vacc={report.vacc:.4f}")
    print(report.to_json())


def cmd_plot_data(args):
    model = load_model(args.model)
    samples = _samples(args.features)
    truths = {s.id: s for s in _samples(args.truth)}
    pick = samples[0] if args.id is None else next((s for s in samples if s.id == args.id), None)
    if pick is None:
        raise ValueError(f"no record with id {args.id!r}")
    truth = truths.get(pick.id)
    if truth is None or truth.truth is None:
        raise ValueError(f"no ground-truth curve for {pick.id!r}")
    emit_curve_csv(model.predict_samples([pick])[0], truth.truth, args.out)
    print(json.dumps({"id": pick.id, "out": args.out}))


def cmd_show_config(args):
    for key, value in default_config_items():
        print(f"{key} = {value}")


# -- parser ------------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rqcurve", description="Rate-quality curve prediction toolkit.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth-data", help="write a simulated dataset")
    s.add_argument("--train", type=int, default=2000)
    s.add_argument("--test", type=int, default=500)
    s.add_argument("--seed", type=int, default=7)
    s.add_argument("--noise", type=float, default=simcodec.DEFAULT_NOISE)
    s.add_argument("--anchor-crf", type=float, default=DEFAULT_ANCHOR_CRF)
    s.add_argument("--anchor-noise", type=float, default=0.0,
                   help="VMAF sigma (and bitrate percent) of anchor measurement noise")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth_data)

    s = sub.add_parser("extract", help="features for real videos via an external encoder")
    s.add_argument("--input", nargs="+", required=True, help="Y4M files")
    s.add_argument("--backend", required=True, help="key = value backend config")
    s.add_argument("--anchor-crf", type=float, default=DEFAULT_ANCHOR_CRF)
    s.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("train", help="train a model bundle")
    s.add_argument("--data", required=True, help=f"directory holding {TRAIN_FILE}")
    s.add_argument("--config", help="key = value training config")
    s.add_argument("--ablation", choices=ABLATIONS, default="full")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("predict", help="predicted curves as CSV")
    s.add_argument("--model", required=True)
    s.add_argument("--features", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("recommend", help="pick a CRF per video")
    s.add_argument("--model", required=True)
    s.add_argument("--features", required=True)
    s.add_argument("--policy", choices=("quality", "slope"), default="quality")
    s.add_argument("--target", type=float, default=DEFAULT_TARGET)
    s.add_argument("--threshold", type=float, default=DEFAULT_SLOPE_THRESHOLD)
    s.set_defaults(func=cmd_recommend)

    s = sub.add_parser("evaluate", help="MAE and VACC on labelled data")
    s.add_argument("--model")
    s.add_argument("--data", required=True, help="dataset directory or labelled feature file")
    s.add_argument("--target", type=float, default=DEFAULT_TARGET)
    s.add_argument("--ablation-suite", action="store_true")
    s.add_argument("--dynamic-anchor", action="store_true",
                   help="re-anchor near the target with the simulated codec")
    s.add_argument("--config")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("plot-data", help="predicted vs true curves for one video")
    s.add_argument("--model", required=True)
    s.add_argument("--features", required=True)
    s.add_argument("--truth", required=True, help="labelled feature file")
    s.add_argument("--id")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_plot_data)

    s = sub.add_parser("show-config", help="print every config default")
    s.set_defaults(func=cmd_show_config)
    return p


def _fail(kind, message, code):
    print(json.dumps({"error": kind, "message": " ".join(str(message).split())}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        args.func(args)
    except UsageError as exc:
        return _fail("usage", exc, EXIT_USAGE)
    except BackendError as exc:
        return _fail("backend", exc, EXIT_BACKEND)
    except _DATA_ERRORS as exc:
        return _fail("data", f"{type(exc).__name__}: {exc}", EXIT_DATA)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
