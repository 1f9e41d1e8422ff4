"""Noise models, weighted misfits, and the posterior potential energy.

The misfit of a simulated moment vector m against a target vector y under
a diagonal noise covariance Sigma is (1/2) ||m - y||_Sigma^2 with
||v||_Sigma = ||Sigma^{-1/2} v||; diag Sigma = r^2 * var with var the
control-run variances of the instantaneous moments and r a dimensionless
noise level.

The two objective functions integrate the model from a caller-supplied
initial state, accumulate the matching moment function over the target's
window, and return both the misfit and the trajectory end state so that
successive evaluations can be chained (no spin-up is discarded after a
parameter update).  A trajectory blow-up is reported as an infinite misfit
with a None end state, which keeps it distinguishable from a merely
enormous but finite misfit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .dynamics import IntegratorConfig, ModelState, Params, ShapeError, n_steps
from .priors import PriorSet, log_density
from .statistics import MomentLayout


@dataclass(frozen=True)
class NoiseModel:
    """Diagonal misfit covariance: diag Sigma = r^2 * variances."""

    r: float
    variances: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "variances", np.asarray(self.variances, dtype=float))
        if self.r <= 0:
            raise ValueError(f"noise level r must be > 0, got {self.r}")
        bad = np.flatnonzero(~(self.variances > 0))
        if bad.size:
            raise ValueError(
                f"{bad.size} noise variance entries are not positive "
                f"(first offenders at indices {bad[:5].tolist()})"
            )

    @property
    def diag(self) -> np.ndarray:
        return self.r ** 2 * self.variances

    def with_r(self, r: float) -> "NoiseModel":
        return NoiseModel(r, self.variances)


@dataclass(frozen=True)
class CalibrationTarget:
    """Everything an objective evaluation needs besides the parameters.

    target is the long-run mean moment vector to match; window is the
    accumulation span T in days; x_fixed selects the frozen slow variable
    for fast-layout targets (and must be None for full ones).
    """

    layout: MomentLayout
    target: np.ndarray
    noise: NoiseModel
    window: float
    x_fixed: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "target", np.asarray(self.target, dtype=float))
        if self.target.shape != (len(self.layout),):
            raise ShapeError(
                f"target length {self.target.shape} does not match layout "
                f"length {len(self.layout)}"
            )
        if self.noise.variances.shape != self.target.shape:
            raise ShapeError("noise model and target have different lengths")
        if self.window <= 0:
            raise ValueError(f"window must be > 0, got {self.window}")
        if (self.layout.variant == "fast") != (self.x_fixed is not None):
            raise ValueError("x_fixed is required for fast layouts and only those")

    def with_noise_level(self, r: float) -> "CalibrationTarget":
        return CalibrationTarget(self.layout, self.target, self.noise.with_r(r),
                                 self.window, self.x_fixed)


def weighted_misfit(sim: np.ndarray, target: np.ndarray, noise: NoiseModel) -> float:
    """(1/2) sum_i (sim_i - target_i)^2 / diag_i."""
    sim = np.asarray(sim, dtype=float)
    target = np.asarray(target, dtype=float)
    if sim.shape != target.shape or sim.shape != noise.variances.shape:
        raise ShapeError(
            f"length mismatch: sim {sim.shape}, target {target.shape}, "
            f"noise {noise.variances.shape}"
        )
    d = sim - target
    return float(0.5 * np.sum(d * d / noise.diag))


def evaluate_Jo(
    params: Params,
    target: CalibrationTarget,
    init_state: ModelState,
    cfg: IntegratorConfig,
) -> tuple[float, ModelState | None]:
    """Full-dynamics objective: integrate T days from init_state, average
    the full moment function, and score it against the target.

    Returns (J_o, end state); (inf, None) if the trajectory blew up.
    """
    if target.layout.variant != "full":
        raise ValueError("evaluate_Jo needs a full-layout target")
    init_state.check_shape(target.layout.shape)
    n = n_steps(target.window, cfg.dt)
    X = init_state.X.copy()
    Yf = init_state.Y.reshape(-1).copy()
    sums = np.zeros(len(target.layout))
    status = _kernels.integrate_full(
        X, Yf, params.F, params.h, params.c, params.b,
        cfg.dt, n, sums, sums, _kernels.ACC_SUM,
    )
    if status >= 0:
        return math.inf, None
    mean = sums / (n * cfg.dt)
    final = ModelState(X, Yf.reshape(init_state.Y.shape), init_state.t + n * cfg.dt)
    return weighted_misfit(mean, target.target, target.noise), final


def evaluate_Js(
    params_fast,
    target: CalibrationTarget,
    ycol_init: np.ndarray,
    cfg: IntegratorConfig,
) -> tuple[float, np.ndarray | None]:
    """Fast-dynamics objective over (h, c, b) with the slow variable frozen.

    params_fast is a Params (F ignored) or an (h, c, b) triple.  Returns
    (J_s, end chain); (inf, None) on blow-up.
    """
    if target.layout.variant != "fast":
        raise ValueError("evaluate_Js needs a fast-layout target")
    if isinstance(params_fast, Params):
        h, c, b = params_fast.h, params_fast.c, params_fast.b
    else:
        h, c, b = (float(v) for v in params_fast)
    Y = np.ascontiguousarray(ycol_init, dtype=float).copy()
    if Y.shape != (target.layout.shape.J,):
        raise ShapeError(f"ycol has shape {Y.shape}, need ({target.layout.shape.J},)")
    n = n_steps(target.window, cfg.dt)
    sums = np.zeros(len(target.layout))
    status = _kernels.integrate_fast(
        Y, h, c, b, target.x_fixed, cfg.dt, n, sums, sums, _kernels.ACC_SUM
    )
    if status >= 0:
        return math.inf, None
    mean = sums / (n * cfg.dt)
    return weighted_misfit(mean, target.target, target.noise), Y


def potential_energy(params: Params, J_value: float, priors: PriorSet | None) -> float:
    """Negative log posterior up to a constant: U = J - sum_i log p_i.

    priors=None means a flat improper prior (zero contribution).  Outside
    the prior support (e.g. c <= 0 under the log-normal) the potential is
    +inf.
    """
    if priors is None:
        return float(J_value)
    lp = log_density(priors, params)
    if lp == -math.inf:
        return math.inf
    return float(J_value - lp)
