"""Per-parameter priors and constrained/unconstrained transforms.

Each parameter carries an independent marginal prior, either normal or
log-normal (the log-normal is parameterized by the mean and variance of
log theta).  Calibration walks in unconstrained coordinates: parameters
with a log-normal prior are log-transformed, the rest pass through, and
densities in the unconstrained space include the change-of-variables
Jacobian.  The defaults are F ~ N(10, 10), h ~ N(0, 1), b ~ N(5, 10) and
log c ~ N(2, 0.1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .dynamics import PARAM_NAMES, Params

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class PriorSpec:
    """One marginal prior: normal(mean, var) or lognormal(mean/var of log)."""

    kind: str
    mean: float
    var: float

    def __post_init__(self):
        if self.kind not in ("normal", "lognormal"):
            raise ValueError(f"kind must be 'normal' or 'lognormal', got {self.kind!r}")
        if self.var <= 0:
            raise ValueError(f"variance must be > 0, got {self.var}")

    @property
    def log_transformed(self) -> bool:
        """Whether the calibration walks this parameter in log space."""
        return self.kind == "lognormal"

    def log_density(self, x: float) -> float:
        """Log density in constrained coordinates; -inf outside support."""
        if self.kind == "normal":
            return -0.5 * (_LOG_2PI + math.log(self.var)) - (x - self.mean) ** 2 / (2 * self.var)
        if x <= 0:
            return -math.inf
        lx = math.log(x)
        return (
            -0.5 * (_LOG_2PI + math.log(self.var))
            - lx
            - (lx - self.mean) ** 2 / (2 * self.var)
        )

    def log_density_unconstrained(self, u: float) -> float:
        """Log density of the transformed variable (plain normal either way)."""
        return -0.5 * (_LOG_2PI + math.log(self.var)) - (u - self.mean) ** 2 / (2 * self.var)

    def sample(self, rng: np.random.Generator, size=None):
        draw = rng.normal(self.mean, math.sqrt(self.var), size=size)
        return np.exp(draw) if self.kind == "lognormal" else draw

    def sample_unconstrained(self, rng: np.random.Generator, size=None):
        return rng.normal(self.mean, math.sqrt(self.var), size=size)

    @property
    def unconstrained_std(self) -> float:
        return math.sqrt(self.var)

    def to_unconstrained(self, x: float) -> float:
        if self.log_transformed:
            if x <= 0:
                raise ValueError(f"cannot log-transform non-positive value {x}")
            return math.log(x)
        return x

    def from_unconstrained(self, u: float) -> float:
        return math.exp(u) if self.log_transformed else u


@dataclass(frozen=True)
class PriorSet:
    """Independent marginals for (F, h, c, b); joint density is the product."""

    specs: Mapping[str, PriorSpec]

    def __post_init__(self):
        missing = [n for n in PARAM_NAMES if n not in self.specs]
        if missing:
            raise ValueError(f"priors missing for {missing}")

    def __getitem__(self, name: str) -> PriorSpec:
        return self.specs[name]


def default_priors() -> PriorSet:
    return PriorSet({
        "F": PriorSpec("normal", 10.0, 10.0),
        "h": PriorSpec("normal", 0.0, 1.0),
        "c": PriorSpec("lognormal", 2.0, 0.1),
        "b": PriorSpec("normal", 5.0, 10.0),
    })


def log_density(priors: PriorSet, params: Params) -> float:
    """Joint log prior density at params; -inf outside support."""
    return sum(priors[n].log_density(getattr(params, n)) for n in PARAM_NAMES)


def sample(priors: PriorSet, rng: np.random.Generator) -> Params:
    """One independent draw per marginal."""
    return Params(**{n: float(priors[n].sample(rng)) for n in PARAM_NAMES})


def to_unconstrained(params: Params) -> np.ndarray:
    """(F, h, log c, b); fails on c <= 0."""
    if params.c <= 0:
        raise ValueError(f"c must be > 0 to map to unconstrained coordinates, got {params.c}")
    return np.array([params.F, params.h, math.log(params.c), params.b])


def from_unconstrained(u: np.ndarray) -> Params:
    """Inverse of to_unconstrained; always yields c > 0."""
    u = np.asarray(u, dtype=float)
    return Params(float(u[0]), float(u[1]), math.exp(float(u[2])), float(u[3]))


def log_jacobian(u: np.ndarray) -> float:
    """Log |d theta / d u| of from_unconstrained, i.e. log c."""
    return float(np.asarray(u, dtype=float)[2])


@dataclass(frozen=True)
class ParamSpace:
    """The calibrated subset of parameters and its unconstrained chart.

    names lists the calibrated parameters in order; everything else must
    appear in fixed.  Parameters whose prior is log-normal are walked in
    log space.  All vector methods operate on unconstrained coordinates.
    """

    priors: PriorSet
    names: tuple[str, ...] = PARAM_NAMES
    fixed: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        unknown = [n for n in self.names if n not in PARAM_NAMES]
        if unknown:
            raise ValueError(f"unknown parameter names {unknown}")
        uncovered = [n for n in PARAM_NAMES if n not in self.names and n not in self.fixed]
        if uncovered:
            raise ValueError(f"parameters neither calibrated nor fixed: {uncovered}")

    @property
    def dim(self) -> int:
        return len(self.names)

    def to_unconstrained(self, params: Params) -> np.ndarray:
        return np.array(
            [self.priors[n].to_unconstrained(getattr(params, n)) for n in self.names]
        )

    def from_unconstrained(self, u: np.ndarray) -> Params:
        vals = dict(self.fixed)
        for n, ui in zip(self.names, np.asarray(u, dtype=float)):
            vals[n] = self.priors[n].from_unconstrained(float(ui))
        return Params(**vals)

    def constrained(self, u: np.ndarray) -> np.ndarray:
        """Constrained values of the calibrated parameters (vectorized over rows)."""
        u = np.asarray(u, dtype=float)
        out = u.copy()
        for i, n in enumerate(self.names):
            if self.priors[n].log_transformed:
                out[..., i] = np.exp(u[..., i])
        return out

    def log_prior_unconstrained(self, u: np.ndarray) -> float:
        """Joint log prior of the calibrated parameters in the walk coordinates
        (Jacobian included); fixed parameters contribute a constant and are
        omitted."""
        u = np.asarray(u, dtype=float)
        return float(
            sum(self.priors[n].log_density_unconstrained(float(ui))
                for n, ui in zip(self.names, u))
        )

    def log_prior_constrained(self, u: np.ndarray) -> float:
        """Joint log prior density of theta(u) in constrained coordinates."""
        u = np.asarray(u, dtype=float)
        return float(
            sum(self.priors[n].log_density(self.priors[n].from_unconstrained(float(ui)))
                for n, ui in zip(self.names, u))
        )

    def sample_unconstrained(self, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
        if n is None:
            return np.array([self.priors[m].sample_unconstrained(rng) for m in self.names])
        cols = [self.priors[m].sample_unconstrained(rng, size=n) for m in self.names]
        return np.column_stack(cols)

    def unconstrained_std(self) -> np.ndarray:
        return np.array([self.priors[n].unconstrained_std for n in self.names])
