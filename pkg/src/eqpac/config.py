"""Flat ``key=value`` run configuration with a fixed schema."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

from .errors import ConfigError


def _list_of(cast: Callable) -> Callable:
    def parse(text: str):
        if text.strip() == "none":
            return None
        return tuple(cast(v.strip()) for v in text.split(",") if v.strip())

    return parse


def _optional_int(text: str):
    return None if text.strip() in ("", "none") else int(text)


@dataclass(frozen=True)
class Key:
    parse: Callable
    default: Any
    choices: tuple | None = None
    doc: str = ""


SCHEMA: dict[str, Key] = {
    "run.seed": Key(_optional_int, None, doc="master seed; required by stochastic commands"),
    "run.out_dir": Key(str, "out"),
    "scenario.name": Key(str, "swap-toy", ("swap-toy", "restricted-rotation", "shifted-signals")),
    "scenario.kernel": Key(str, "default", ("default", "uniform", "nonuniform")),
    "scenario.kernel_mix": Key(float, 0.0, doc="blend towards the uniform kernel"),
    "scenario.n_train": Key(int, 4000),
    "scenario.n_val": Key(int, 1000),
    "scenario.n_prior": Key(int, 1000),
    "group.order": Key(_optional_int, None, doc="override the cyclic group order of restricted-rotation"),
    "kernel.kind": Key(str, "scenario", ("scenario", "estimated")),
    "kernel.bucketing": Key(str, "global", ("global", "hash")),
    "kernel.n_buckets": Key(_optional_int, None),
    "model.family": Key(str, "tabular", ("tabular", "linear")),
    "data.dir": Key(str, "", doc="load train/val/prior/representatives CSVs from here instead of generating"),
    "bound.delta": Key(float, 0.05),
    "bound.loss": Key(str, "squared-clipped", ("squared-clipped", "zero-one", "logistic-normalized")),
    "bound.n_models": Key(int, 256),
    "bound.empirical": Key(str, "monte-carlo", ("monte-carlo", "exact")),
    "bound.prior_std": Key(float, 0.05),
    "opt.loss": Key(str, "squared-clipped", ("squared-clipped", "logistic-normalized")),
    "opt.steps": Key(int, 2000),
    "opt.lr": Key(float, 1e-2),
    "opt.draws": Key(int, 8),
    "opt.eval_every": Key(int, 50),
    "axioms.loss": Key(str, "squared", ("squared", "squared-clipped", "zero-one", "logistic-normalized")),
    "axioms.n_predictors": Key(int, 100),
    "axioms.kl_trials": Key(int, 200),
    "sweep.n": Key(_list_of(int), None),
    "sweep.delta": Key(_list_of(float), None),
    "sweep.kernel_mix": Key(_list_of(float), None),
    "sweep.group_order": Key(_list_of(int), None),
}


def _render(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, tuple):
        return ",".join(_render(v) for v in value)
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


class RunConfig:
    """Typed view of a flat config; unknown keys and bad values raise :class:`ConfigError`."""

    def __init__(self, values: dict | None = None):
        self._values = {k: spec.default for k, spec in SCHEMA.items()}
        self._explicit: set[str] = set()
        for key, value in (values or {}).items():
            self.set(key, value)

    def set(self, key: str, value) -> None:
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        spec = SCHEMA[key]
        if isinstance(value, str):
            try:
                value = spec.parse(value)
            except ValueError as exc:
                raise ConfigError(f"{key}: {exc}") from None
        if spec.choices and value not in spec.choices:
            raise ConfigError(f"{key} must be one of {', '.join(spec.choices)}; got {value!r}")
        self._values[key] = value
        self._explicit.add(key)

    def __getitem__(self, key: str):
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        return self._values[key]

    def is_set(self, key: str) -> bool:
        return key in self._explicit

    def require_seed(self) -> int:
        seed = self["run.seed"]
        if seed is None:
            raise ConfigError("run.seed is required for this command (set it in the config or pass --seed)")
        return seed

    def copy(self) -> "RunConfig":
        out = RunConfig()
        out._values = dict(self._values)
        out._explicit = set(self._explicit)
        return out

    def resolved_text(self) -> str:
        """Every key with its effective value, in a form :func:`parse_config` reads back."""
        return "".join(f"{k}={_render(self._values[k])}\n" for k in sorted(SCHEMA))


def parse_config(text: str) -> RunConfig:
    cfg = RunConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        try:
            cfg.set(key, value)
        except ConfigError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from None
    return cfg


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text())
