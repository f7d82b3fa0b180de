"""Flat ``key = value`` config files for runs and dataset manifests.

Grammar: one ``key = value`` per line; ``#`` starts a comment; blank lines
are ignored. Values are typed on read: ``true``/``false``, integers, floats,
comma-separated lists of those, double-quoted strings, or bare strings.

Run config keys are the network fields (``stages``, ``patch_rows``,
``patch_cols``, ``filters_per_stage``, ``kernel``, ``kernel.<param>``,
``block_rows``, ``block_cols``, ``overlap_ratio``, ``train_patch_budget``,
``seed``, ``remove_patch_mean``, ``share_stage_filters``) plus ``lambda``,
``train_data``, ``test_data``, ``train_fraction``, ``output_dir``,
``report_text`` and ``report_jsonl``. Dataset paths are manifest files in
the same grammar (``name``, ``source``, ``images``, ``labels``, ``root``,
``class_count``, ``rows``, ``cols``, ``subset``, ``subset_seed``).
Relative paths resolve against the file that mentions them.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, fields
from pathlib import Path

from .core import ConfigError, NetConfig
from .ingest import DatasetManifest, resolve
from .kernels import KernelSpec

_INT = re.compile(r"[+-]?\d+$")
_FLOAT = re.compile(r"[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")


def parse_value(text: str):
    text = text.strip()
    if len(text) >= 2 and text[0] == text[-1] == '"':
        return text[1:-1]
    if "," in text:
        return [parse_value(part) for part in text.split(",") if part.strip()]
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    if _INT.match(text):
        return int(text)
    if _FLOAT.match(text):
        return float(text)
    return text


def parse(text: str, source: str = "<config>") -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = parse_value(value)
    return out


def read(path) -> dict:
    try:
        return parse(Path(path).read_text(), str(path))
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc


_NET_FIELDS = {f.name for f in fields(NetConfig)} - {"kernel"}


@dataclass(frozen=True)
class RunConfig:
    net: NetConfig
    lam: float = 1e-3
    train_data: str | None = None
    test_data: str | None = None
    train_fraction: float | None = None
    output_dir: str = "kpcanet-out"
    report_text: bool = True
    report_jsonl: bool = True


def net_config(values: dict) -> NetConfig:
    values = dict(values)
    kernel_params = {k.split(".", 1)[1]: values.pop(k) for k in list(values) if k.startswith("kernel.")}
    kwargs = {}
    try:
        kernel = KernelSpec(str(values.pop("kernel", "linear")), kernel_params)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    for key in list(values):
        if key in _NET_FIELDS:
            kwargs[key] = values.pop(key)
    fps = kwargs.get("filters_per_stage")
    if fps is not None and not isinstance(fps, list):
        kwargs["filters_per_stage"] = [fps]
    if "filters_per_stage" in kwargs and "stages" not in kwargs:
        kwargs["stages"] = len(kwargs["filters_per_stage"])
    if values:
        raise ConfigError(f"unknown config key(s): {', '.join(sorted(values))}")
    try:
        return NetConfig(kernel=kernel, **kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def run_config(path, seed: int | None = None) -> RunConfig:
    values = read(path)
    base = Path(path).parent
    run = {}
    for key, name in (("lambda", "lam"), ("train_data", "train_data"), ("test_data", "test_data"),
                      ("train_fraction", "train_fraction"), ("output_dir", "output_dir"),
                      ("report_text", "report_text"), ("report_jsonl", "report_jsonl")):
        if key in values:
            run[name] = values.pop(key)
    for key in ("train_data", "test_data", "output_dir"):
        if key in run:
            run[key] = resolve(base, str(run[key]))
    if seed is not None:
        values["seed"] = seed
    lam = run.get("lam", 1e-3)
    if not isinstance(lam, (int, float)) or not lam > 0:
        raise ConfigError("lambda must be a positive number")
    frac = run.get("train_fraction")
    if frac is not None and not 0 < frac < 1:
        raise ConfigError("train_fraction must be in (0, 1)")
    return RunConfig(net=net_config(values), **run)


def manifest(path) -> DatasetManifest:
    values = read(path)
    base = Path(path).parent
    known = {"name", "source", "images", "labels", "root", "class_count", "rows", "cols",
             "subset", "subset_seed"}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"{path}: unknown manifest key(s): {', '.join(sorted(unknown))}")
    paths = {k: resolve(base, str(values[k])) for k in ("images", "labels", "root") if k in values}
    shape = None
    if "rows" in values or "cols" in values:
        shape = (int(values["rows"]), int(values["cols"]))
    return DatasetManifest(
        name=str(values.get("name", Path(path).stem)),
        source=str(values.get("source", "idx_pair")),
        paths=paths,
        class_count=values.get("class_count"),
        shape=shape,
        subset=values.get("subset"),
        subset_seed=int(values.get("subset_seed", 0)),
    )
