"""Command-line interface: ``kpcanet train|eval|extract|inspect``."""
from __future__ import annotations

import argparse
import json
import logging
import struct
import sys
import time
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from . import configfile, modelfile
from .classifier import TrainLog, error_metrics
from .core import ConfigError, DataError, make_rng, split_dataset
from .ingest import load_dataset, write_pgm
from .kpca import InsufficientSpectrumError, reconstruct_linear_filters
from .network import StageError, fit

log = logging.getLogger("kpcanet")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

EPILOG = """exit status:
  0  success
  2  config error (bad or missing keys, invalid values)
  3  data error (unreadable/mismatched datasets, corrupt model files)
  4  numeric failure (insufficient positive kernel spectrum)
"""


class Report:
    """Collects metrics and writes them as text and as JSON lines."""

    def __init__(self, title: str):
        self.title = title
        self.items: list[tuple[str, object]] = []

    def add(self, key: str, value) -> None:
        if isinstance(value, np.ndarray):
            value = value.tolist()
        elif isinstance(value, np.generic):
            value = value.item()
        self.items.append((key, value))

    def text(self) -> str:
        lines = [self.title, "=" * len(self.title)]
        for key, value in self.items:
            if isinstance(value, list) and value and isinstance(value[0], list):
                lines.append(f"{key}:")
                lines += ["  " + " ".join(f"{v:>5}" for v in row) for row in value]
            elif isinstance(value, list):
                lines.append(f"{key}: " + " ".join(_fmt(v) for v in value))
            else:
                lines.append(f"{key}: {_fmt(value)}")
        return "\n".join(lines) + "\n"

    def jsonl(self) -> str:
        return "".join(json.dumps({"metric": k, "value": v}) + "\n" for k, v in self.items)

    def write(self, out_dir: Path | None, stem: str, text=True, jsonl=True) -> None:
        if out_dir is None:
            return
        out_dir.mkdir(parents=True, exist_ok=True)
        if text:
            (out_dir / f"{stem}.txt").write_text(self.text())
        if jsonl:
            (out_dir / f"{stem}.jsonl").write_text(self.jsonl())


def _fmt(v) -> str:
    return f"{v:.6g}" if isinstance(v, float) else str(v)


def _threads(n: int | None):
    if not n:
        return nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=n)


def _load_data(path):
    data = load_dataset(configfile.manifest(path))
    if len(data) == 0:
        raise DataError(f"{path}: no samples")
    return data


def _add_eval(report: Report, prefix: str, model, data) -> float:
    pred = model.predict(data.images)
    err, confusion = error_metrics(data.labels, pred, model.class_count)
    report.add(f"{prefix}.samples", len(data))
    report.add(f"{prefix}.class_counts", data.class_counts())
    report.add(f"{prefix}.error_rate", err)
    report.add(f"{prefix}.confusion", confusion)
    return err


def cmd_train(args) -> int:
    run = configfile.run_config(args.config, seed=args.seed)
    if run.train_data is None:
        raise ConfigError("train_data is required")
    out_dir = Path(args.out or run.output_dir)
    train = _load_data(run.train_data)
    test = _load_data(run.test_data) if run.test_data else None
    if test is None and run.train_fraction is not None:
        train, test = split_dataset(train, run.train_fraction, make_rng(run.net.seed))
    if test is not None and test.shape != train.shape:
        raise DataError(f"test images are {test.shape[0]}x{test.shape[1]}, "
                        f"training images are {train.shape[0]}x{train.shape[1]}")

    report = Report("kpcanet training report")
    report.add("kernel", str(run.net.kernel))
    report.add("stages", run.net.stages)
    report.add("filters_per_stage", list(run.net.filters_per_stage))
    report.add("seed", run.net.seed)
    telemetry = TrainLog()
    t0 = time.perf_counter()
    model, train_feats = fit(train, run.net, run.lam, telemetry)
    report.add("train_seconds", round(time.perf_counter() - t0, 3))
    for s, basis in enumerate(model.stage_bases, 1):
        report.add(f"stage{s}.eigenvalues", basis.eigenvalues)
    report.add("feature_length", train_feats.shape[1])
    report.add("classifier.sweeps", telemetry.sweeps)
    err, _ = error_metrics(train.labels, model.classifier.predict(train_feats), model.class_count)
    report.add("train.samples", len(train))
    report.add("train.class_counts", train.class_counts())
    report.add("train.error_rate", err)
    if test is not None:
        t0 = time.perf_counter()
        _add_eval(report, "test", model, test)
        report.add("eval_seconds", round(time.perf_counter() - t0, 3))

    out_dir.mkdir(parents=True, exist_ok=True)
    modelfile.save(model, out_dir / "model.kpcn")
    report.write(out_dir, "train_report", run.report_text, run.report_jsonl)
    sys.stdout.write(report.text())
    log.info("wrote %s", out_dir / "model.kpcn")
    return EXIT_OK


def cmd_eval(args) -> int:
    model = modelfile.load(args.model)
    data = _load_data(args.data)
    if data.shape != tuple(model.image_shape):
        raise DataError(f"dataset images are {data.shape[0]}x{data.shape[1]}, model expects "
                        f"{model.image_shape[0]}x{model.image_shape[1]}")
    if data.class_count > model.class_count:
        raise DataError(f"dataset has {data.class_count} classes, model knows {model.class_count}")
    report = Report("kpcanet evaluation report")
    _add_eval(report, "eval", model, data)
    report.write(Path(args.out) if args.out else None, "eval_report")
    sys.stdout.write(report.text())
    return EXIT_OK


def write_features(path, features: np.ndarray) -> None:
    """Header of two little-endian u64 (count, D), then u32 counts row by row."""
    count, dim = features.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack("<QQ", count, dim))
        fh.write(np.ascontiguousarray(features, dtype="<u4").tobytes())


def read_features(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    count, dim = struct.unpack_from("<QQ", raw)
    return np.frombuffer(raw, dtype="<u4", offset=16, count=count * dim).reshape(count, dim)


def cmd_extract(args) -> int:
    if not args.out:
        raise ConfigError("extract needs --out")
    model = modelfile.load(args.model)
    data = load_dataset(configfile.manifest(args.data))
    if len(data) and data.shape != tuple(model.image_shape):
        raise DataError(f"dataset images are {data.shape[0]}x{data.shape[1]}, model expects "
                        f"{model.image_shape[0]}x{model.image_shape[1]}")
    feats = model.features(data.images.reshape(-1, *model.image_shape))
    write_features(args.out, feats)
    print(f"wrote {feats.shape[0]} x {feats.shape[1]} features to {args.out}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    model = modelfile.load(args.model)
    cfg = model.config
    print(f"kernel: {cfg.kernel}")
    print(f"stages: {cfg.stages}  patch: {cfg.patch_rows}x{cfg.patch_cols}  "
          f"filters: {list(cfg.filters_per_stage)}  blocks: {cfg.block_rows}x{cfg.block_cols} "
          f"overlap {cfg.overlap_ratio:g}")
    print(f"image shape: {model.image_shape[0]}x{model.image_shape[1]}  classes: {model.class_count}  "
          f"feature length: {model.classifier.dim}")
    for s, basis in enumerate(model.stage_bases, 1):
        spectrum = " ".join(f"{v:.6g}" for v in basis.eigenvalues)
        print(f"stage {s}: {basis.basis_patches.shape[0]} basis patches; eigenvalues: {spectrum}")
    if cfg.kernel.kind != "linear":
        print(f"note: no input-space filters exist for the {cfg.kernel.kind} kernel")
        return EXIT_OK
    # Filters are rendered with zero at mid-grey, scaled by their peak magnitude.
    out_dir = Path(args.out) if args.out else Path(args.model).parent / "filters"
    out_dir.mkdir(parents=True, exist_ok=True)
    written = 0
    for s, basis in enumerate(model.stage_bases, 1):
        for l, w in enumerate(reconstruct_linear_filters(basis)):
            img = w.reshape(cfg.patch_rows, cfg.patch_cols)
            span = np.abs(img).max() or 1.0
            write_pgm(out_dir / f"stage{s}_filter{l}.pgm", 0.5 + 0.5 * img / span)
            written += 1
    print(f"wrote {written} filter images to {out_dir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kpcanet", description="Kernel-PCA filter cascade image features.",
        epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--threads", type=int, default=None, help="cap BLAS worker threads")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None)
        return p

    p = common(sub.add_parser("train", help="learn filters and classifier from a config file"))
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_train)
    p = common(sub.add_parser("eval", help="error rate and confusion matrix on a dataset"))
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="dataset manifest file")
    p.set_defaults(func=cmd_eval)
    p = common(sub.add_parser("extract", help="write pooled features to a flat binary file"))
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="dataset manifest file")
    p.set_defaults(func=cmd_extract)
    p = common(sub.add_parser("inspect", help="print spectra; dump linear filters as PGM"))
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with _threads(args.threads):
            return args.func(args)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except (InsufficientSpectrumError, StageError) as exc:
        cause = exc.cause if isinstance(exc, StageError) else exc
        if isinstance(cause, InsufficientSpectrumError):
            log.error("numeric failure: %s", exc)
            return EXIT_NUMERIC
        log.error("data error: %s", exc)
        return EXIT_DATA
    except (DataError, OSError) as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
