"""Flat ``key = value`` run configuration.

Lines starting with ``#`` are comments. Grids accept comma-separated numbers
or ``linspace(start, stop, n)`` / ``logspace(start_exp, stop_exp, n)``.
Times are in the model's abstract time unit; rates are per that unit.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .asymptotics import Thresholds
from .model import DomainError, ModelParams
from .simulate import OuSpec, SeedSpec


class ConfigError(ValueError):
    def __init__(self, message: str, key: str | None = None, line: int | None = None) -> None:
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"field '{key}'")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.key = key
        self.line = line


# key -> (type, default, unit/description)
SCHEMA: dict[str, tuple[str, object, str]] = {
    "D": ("float", 0.3, "decay exponent in (0, 1/2)"),
    "V": ("float", None, "large-time volatility, per sqrt(time)"),
    "C_sf": ("float", 0.5, "tail constant (alternative to V)"),
    "lambda": ("float", 1.0, "shock intensity, per time"),
    "tau0": ("float", None, "virtual shock time, negative"),
    "sigma0": ("float", 0.1, "initial volatility (alternative to tau0)"),
    "n_samples": ("int", 100_000, "Monte Carlo sample count"),
    "chunk_size": ("int", 100_000, "samples per deterministic chunk"),
    "master_seed": ("int", 20240601, "unsigned 64-bit seed"),
    "stream_index": ("int", 0, "stream selector"),
    "workers": ("int", 1, "worker threads"),
    "kappa": ("grid", None, "log-strike(s)"),
    "t": ("grid", None, "maturity(ies), time"),
    "out": ("str", None, "output path (stdout if unset)"),
    "manifest": ("str", None, "manifest path (default: next to output)"),
    "format": ("str", "csv", "csv or json"),
    "theta_low": ("float", 0.5, "lower band multiplier around bkappa2"),
    "theta_high": ("float", 2.0, "upper band multiplier around bkappa2"),
    "near": ("float", 0.1, "relative proximity for candidate tagging"),
    "ou_jump": ("str", "constant", "constant, exponential or pareto"),
    "ou_size": ("float", 1.0, "jump size / mean / scale"),
    "ou_shape": ("float", 2.0, "pareto tail index"),
    "ou_sigma0": ("float", None, "comparator initial volatility (default sigma0)"),
    "ou_paths": ("int", 10_000, "paths for the domination table"),
    "verify_scale": ("float", 1.0, "multiplier on verification sample sizes"),
    "expect_C_sf": ("float", None, "expected tail constant (verification)"),
    "expect_sigma0": ("float", None, "expected initial volatility (verification)"),
}

_ALIASES = {"lam": "lambda", "seed": "master_seed", "samples": "n_samples", "chunk": "chunk_size"}
_FUNC = re.compile(r"^(linspace|logspace)\((.*)\)$")


def _parse_grid(text: str, key: str, line: int | None) -> tuple[float, ...]:
    text = text.strip()
    m = _FUNC.match(text)
    try:
        if m:
            args = [a.strip() for a in m.group(2).split(",")]
            if len(args) != 3:
                raise ValueError("expected three arguments")
            a, b, n = float(args[0]), float(args[1]), int(args[2])
            if n < 1:
                raise ValueError("need at least one point")
            fn = np.linspace if m.group(1) == "linspace" else np.logspace
            vals = tuple(float(x) for x in fn(a, b, n))
        else:
            vals = tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise ConfigError(f"cannot parse grid {text!r} ({exc})", key, line) from None
    if not vals:
        raise ConfigError("grid is empty", key, line)
    if any(not math.isfinite(v) for v in vals):
        raise ConfigError("grid values must be finite", key, line)
    if any(b <= a for a, b in zip(vals, vals[1:])):
        raise ConfigError("grid must be strictly increasing", key, line)
    return vals


def _convert(key: str, raw: str, line: int | None):
    kind = SCHEMA[key][0]
    if kind == "grid":
        return _parse_grid(raw, key, line)
    if kind == "str":
        return raw.strip()
    try:
        if kind == "int":
            v = int(raw.strip(), 0)
        else:
            v = float(raw.strip())
    except ValueError:
        raise ConfigError(f"expected {kind}, got {raw.strip()!r}", key, line) from None
    return v


@dataclass(frozen=True)
class RunConfig:
    values: dict = field(default_factory=dict)

    def __getitem__(self, key: str):
        if key in self.values:
            return self.values[key]
        return SCHEMA[key][1]

    def get(self, key: str, default=None):
        v = self[key]
        return default if v is None else v

    def echo(self) -> dict:
        """Every schema field with its resolved value, in schema order."""
        out = {}
        for k in SCHEMA:
            v = self[k]
            out[k] = list(v) if isinstance(v, tuple) else v
        return out

    def replace(self, **updates) -> "RunConfig":
        vals = dict(self.values)
        for k, v in updates.items():
            k = _ALIASES.get(k, k)
            if k not in SCHEMA:
                raise ConfigError("unknown key", k)
            if v is not None:
                vals[k] = _convert(k, v, None) if isinstance(v, str) and SCHEMA[k][0] != "str" else v
        return validate(RunConfig(vals))

    # --- resolved objects

    def params(self) -> ModelParams:
        v = self.values
        D, lam = self["D"], self["lambda"]
        try:
            if "V" in v:
                V = v["V"]
                if "tau0" in v:
                    return ModelParams(D, V, lam, v["tau0"])
                return ModelParams.from_sigma0(D, V, lam, self["sigma0"])
            if "tau0" in v:
                # C_sf with an explicit tau0: recover V from C_sf, keep tau0
                base = ModelParams.from_tail_constant(D, self["C_sf"], lam, 1.0)
                return ModelParams(D, base.V, lam, v["tau0"])
            return ModelParams.from_tail_constant(D, self["C_sf"], lam, self["sigma0"])
        except DomainError as exc:
            raise ConfigError(str(exc)) from None

    def seed(self) -> SeedSpec:
        try:
            return SeedSpec(self["master_seed"], self["stream_index"])
        except DomainError as exc:
            raise ConfigError(str(exc), "master_seed") from None

    def thresholds(self) -> Thresholds:
        try:
            return Thresholds(self["theta_low"], self["theta_high"], self["near"])
        except DomainError as exc:
            raise ConfigError(str(exc), "theta_low") from None

    def ou_spec(self) -> OuSpec:
        try:
            return OuSpec(self["ou_jump"], self["ou_size"], self["ou_shape"], self["ou_sigma0"])
        except DomainError as exc:
            raise ConfigError(str(exc), "ou_jump") from None

    def queries(self) -> list[tuple[float, float]]:
        """Cartesian (kappa, t) grid in input order, t outermost."""
        ks, ts = self["kappa"], self["t"]
        if ks is None:
            raise ConfigError("no log-strike given", "kappa")
        if ts is None:
            raise ConfigError("no maturity given", "t")
        return [(k, t) for t in ts for k in ks]


def validate(cfg: RunConfig) -> RunConfig:
    v = cfg.values
    if "V" in v and "C_sf" in v:
        raise ConfigError("give exactly one of V and C_sf", "C_sf")
    if "tau0" in v and "sigma0" in v:
        raise ConfigError("give exactly one of tau0 and sigma0", "sigma0")
    if not 0.0 < cfg["D"] < 0.5:
        raise ConfigError(f"must lie in (0, 1/2), got {cfg['D']}", "D")
    for key in ("V", "C_sf", "lambda", "sigma0"):
        if key in v and not v[key] > 0.0:
            raise ConfigError(f"must be positive, got {v[key]}", key)
    if "tau0" in v and not v["tau0"] < 0.0:
        raise ConfigError(f"must be negative, got {v['tau0']}", "tau0")
    for key in ("n_samples", "chunk_size", "workers", "ou_paths"):
        if cfg[key] < 1:
            raise ConfigError("must be positive", key)
    if cfg["format"] not in ("csv", "json"):
        raise ConfigError("must be csv or json", "format")
    if cfg["t"] is not None and min(cfg["t"]) <= 0.0:
        raise ConfigError("maturities must be positive", "t")
    if not cfg["verify_scale"] > 0.0:
        raise ConfigError("must be positive", "verify_scale")
    cfg.params()
    cfg.seed()
    cfg.thresholds()
    cfg.ou_spec()
    return cfg


def parse_config(text: str) -> RunConfig:
    values: dict = {}
    lines: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", line=lineno)
        key, val = (s.strip() for s in line.split("=", 1))
        key = _ALIASES.get(key, key)
        if key not in SCHEMA:
            raise ConfigError("unknown key", key, lineno)
        if key in values:
            raise ConfigError("duplicate key", key, lineno)
        values[key] = _convert(key, val, lineno)
        lines[key] = lineno
    try:
        return validate(RunConfig(values))
    except ConfigError as exc:
        if exc.line is None and exc.key in lines:
            raise ConfigError(str(exc).split(": ", 1)[-1], exc.key, lines[exc.key]) from None
        raise


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return validate(RunConfig({}))
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(text)


def dump_config(cfg: RunConfig) -> str:
    """Serialize the explicitly set keys back to the text format."""
    lines = []
    for k in SCHEMA:
        if k in cfg.values:
            v = cfg.values[k]
            if isinstance(v, tuple):
                v = ", ".join(repr(x) for x in v)
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"

