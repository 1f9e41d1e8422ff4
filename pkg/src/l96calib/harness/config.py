"""Experiment configuration: dotted-key files, profiles, CLI overrides.

A config is a flat mapping of dotted keys to typed values.  Two built-in
profiles exist: 'paper' carries the reference experiment settings
(K=36, J=10, T=100 days, 46,416-day control run, r levels 0.1/0.2/0.5/1.0,
ensembles of 10 and 100, 2200-step chains) and 'smoke' is a scaled-down
variant (K=8, J=4, T=10, M=10, 200-step chains) meant to finish in
seconds.  A config file overlays the profile, and command-line flags of
the same dotted names overlay the file.

File grammar: one `key = value` per line, '#' starts a comment, blank
lines are ignored.  Lists are comma-separated; booleans are true/false;
priors are written normal(mean, var) or lognormal(mean_log, var_log).
A manifest.json from a previous run is also accepted wherever a config
file is, which is how runs are reproduced.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Mapping

from ..dynamics import IntegratorConfig, Params, SystemShape
from ..priors import PriorSet, PriorSpec


class ConfigError(Exception):
    """Bad key, bad value, or an unreadable config file (CLI exit code 4)."""


def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("true", "false"):
        return v == "true"
    raise ValueError(f"expected true/false, got {s!r}")


def _parse_float_list(s: str) -> tuple[float, ...]:
    return tuple(float(v) for v in s.split(","))


def _parse_int_list(s: str) -> tuple[int, ...]:
    return tuple(int(v) for v in s.split(","))


_PRIOR_RE = re.compile(r"^(normal|lognormal)\(([^,]+),([^)]+)\)$")


def _parse_prior(s: str) -> PriorSpec:
    m = _PRIOR_RE.match(s.replace(" ", ""))
    if not m:
        raise ValueError(f"expected normal(mean, var) or lognormal(mu, var), got {s!r}")
    return PriorSpec(m.group(1), float(m.group(2)), float(m.group(3)))


def _fmt(value) -> str:
    """Canonical string form; parsing it back yields an equal value."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, PriorSpec):
        return f"{value.kind}({value.mean!r}, {value.var!r})"
    return str(value)


# key -> parser; every key a config may contain, with its value grammar.
SCHEMA: dict = {
    "seed": int,
    "system.K": int,
    "system.J": int,
    "true.F": float,
    "true.h": float,
    "true.c": float,
    "true.b": float,
    "integrator.dt": float,
    "integrator.scheme": str,
    "prior.F": _parse_prior,
    "prior.h": _parse_prior,
    "prior.c": _parse_prior,
    "prior.b": _parse_prior,
    "control.duration": float,
    "control.spinup": float,
    "target.window": float,
    "noise.r": float,
    "noise.levels": _parse_float_list,
    "scan.window": float,
    "scan.param": str,
    "scan.min": float,
    "scan.max": float,
    "scan.num": int,
    "eki.ensemble_sizes": _parse_int_list,
    "eki.M": int,
    "eki.n_max": int,
    "eki.perturb": _parse_bool,
    "mcmc.n_iter": int,
    "mcmc.burn_in": int,
    "mcmc.thin": int,
    "mcmc.scale_factor": float,
    "mcmc.adapt": _parse_bool,
    "mcmc.warm_start": str,
    "fast.window": float,
    "fast.r": float,
    "fast.x_fixed": float,
    "fast.control_duration": float,
    "simulate.duration": float,
    "simulate.snapshot_every": float,
    "hist.bins": int,
}

PAPER_PROFILE: dict = {
    "seed": 42,
    "system.K": 36,
    "system.J": 10,
    "true.F": 10.0,
    "true.h": 1.0,
    "true.c": 10.0,
    "true.b": 10.0,
    "integrator.dt": 1e-3,
    "integrator.scheme": "rk4",
    "prior.F": PriorSpec("normal", 10.0, 10.0),
    "prior.h": PriorSpec("normal", 0.0, 1.0),
    "prior.c": PriorSpec("lognormal", 2.0, 0.1),
    "prior.b": PriorSpec("normal", 5.0, 10.0),
    "control.duration": 46416.0,
    "control.spinup": 0.0,
    "target.window": 100.0,
    "noise.r": 0.5,
    "noise.levels": (0.1, 0.2, 0.5, 1.0),
    "scan.window": 1e4,
    "scan.param": "F",
    "scan.min": 6.0,
    "scan.max": 14.0,
    "scan.num": 17,
    "eki.ensemble_sizes": (10, 100),
    "eki.M": 100,
    "eki.n_max": 25,
    "eki.perturb": True,
    "mcmc.n_iter": 2200,
    "mcmc.burn_in": 200,
    "mcmc.thin": 2,
    "mcmc.scale_factor": 0.02,
    "mcmc.adapt": True,
    "mcmc.warm_start": "eki",
    "fast.window": 20.0,
    "fast.r": 0.5,
    "fast.x_fixed": 2.556,
    "fast.control_duration": 46416.0,
    "simulate.duration": 1e4,
    "simulate.snapshot_every": 1.0,
    "hist.bins": 30,
}

SMOKE_PROFILE: dict = dict(PAPER_PROFILE) | {
    "system.K": 8,
    "system.J": 4,
    "control.duration": 2000.0,
    "target.window": 10.0,
    "noise.levels": (0.2, 0.5),
    "scan.window": 50.0,
    "scan.num": 5,
    "eki.ensemble_sizes": (4, 10),
    "eki.M": 10,
    "eki.n_max": 10,
    "mcmc.n_iter": 200,
    "mcmc.burn_in": 50,
    "fast.window": 10.0,
    "fast.control_duration": 2000.0,
    "simulate.duration": 100.0,
}

PROFILES = {"paper": PAPER_PROFILE, "smoke": SMOKE_PROFILE}


def parse_value(key: str, raw: str):
    if key not in SCHEMA:
        raise ConfigError(f"unknown config key {key!r}")
    try:
        return SCHEMA[key](raw.strip())
    except (ValueError, TypeError) as e:
        raise ConfigError(f"bad value for {key}: {e}") from None


def read_config_file(path) -> dict:
    """Parse a key-value config file, or pull the config out of a manifest."""
    try:
        text = open(path, encoding="utf-8").read()
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from None
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            manifest = json.loads(text)
            raw_items = manifest["config"].items()
        except (json.JSONDecodeError, KeyError, AttributeError) as e:
            raise ConfigError(f"{path} looks like JSON but is not a manifest: {e}") from None
        return {k: parse_value(k, str(v)) for k, v in raw_items}

    values = {}
    for ln, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{ln}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        values[key] = parse_value(key, raw)
    return values


@dataclass(frozen=True)
class ExperimentConfig:
    """A complete, validated experiment configuration."""

    values: Mapping
    profile: str = "paper"

    def __post_init__(self):
        unknown = [k for k in self.values if k not in SCHEMA]
        if unknown:
            raise ConfigError(f"unknown config keys {unknown}")
        missing = [k for k in SCHEMA if k not in self.values]
        if missing:
            raise ConfigError(f"config is missing keys {missing}")
        for key in ("control.duration", "target.window", "fast.window",
                    "scan.window", "fast.control_duration"):
            if self.values[key] <= 0:
                raise ConfigError(f"{key} must be > 0, got {self.values[key]}")
        if self.values["simulate.duration"] < 0 or self.values["control.spinup"] < 0:
            raise ConfigError("durations must be >= 0")
        if self.values["mcmc.warm_start"] not in ("eki", "prior"):
            raise ConfigError("mcmc.warm_start must be 'eki' or 'prior'")
        try:
            self.shape
            self.integrator
            self.true_params
        except ValueError as e:
            raise ConfigError(str(e)) from None

    def __getitem__(self, key: str):
        return self.values[key]

    @property
    def seed(self) -> int:
        return self.values["seed"]

    @property
    def shape(self) -> SystemShape:
        return SystemShape(self.values["system.K"], self.values["system.J"])

    @property
    def true_params(self) -> Params:
        return Params(self.values["true.F"], self.values["true.h"],
                      self.values["true.c"], self.values["true.b"])

    @property
    def integrator(self) -> IntegratorConfig:
        return IntegratorConfig(self.values["integrator.dt"], self.values["integrator.scheme"])

    @property
    def priors(self) -> PriorSet:
        return PriorSet({n: self.values[f"prior.{n}"] for n in ("F", "h", "c", "b")})

    def flat(self) -> dict[str, str]:
        """Canonical string form of every key (what goes into a manifest)."""
        return {k: _fmt(self.values[k]) for k in SCHEMA}


def build_config(
    profile: str = "paper",
    config_file=None,
    overrides: Mapping[str, str] | None = None,
    seed: int | None = None,
) -> ExperimentConfig:
    """Layer profile defaults, an optional file, and CLI overrides."""
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}")
    values = dict(PROFILES[profile])
    if config_file is not None:
        values.update(read_config_file(config_file))
    for key, raw in (overrides or {}).items():
        values[key] = parse_value(key, raw)
    if seed is not None:
        values["seed"] = int(seed)
    return ExperimentConfig(values, profile)
