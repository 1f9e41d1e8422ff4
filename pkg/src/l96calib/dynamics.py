"""Two-scale Lorenz-96 dynamics.

The system couples K slow variables X_k to J fast variables Y_{j,k} per
slow variable:

    dX_k/dt     = -X_{k-1} (X_{k-2} - X_{k+1}) - X_k + F - h c Ybar_k
    dY_{j,k}/dt = c [ -b Y_{j+1,k} (Y_{j+2,k} - Y_{j-1,k}) - Y_{j,k} + (h/J) X_k ]

with Ybar_k the mean of Y_{.,k} over j.  Both chains are cyclic:
X_{k+K} = X_k, Y_{j,k+K} = Y_{j,k}, and Y_{j+J,k} = Y_{j,k+1}, i.e. the
fast variables form one cyclic chain of length K*J that threads through
the slow cells.  Time is in days (the slow damping timescale).

A fast-only mode integrates a single J-cycle with the slow variable frozen,
and a conservative mode (quadratic + coupling terms only) exists for energy
conservation tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from . import _kernels

PARAM_NAMES = ("F", "h", "c", "b")
ROLE_TAGS = ("computable", "non-computable", "unspecified")

#: Hard ceiling on the step size; RK4 is unstable for the default
#: parameter regime (fast damping time 1/c = 0.1 day) well before this.
DT_LIMIT = 0.005


class ShapeError(ValueError):
    """Array dimensions inconsistent with the declared system shape."""


class BlowUpError(RuntimeError):
    """A trajectory produced a non-finite (or > 1e50) component.

    Calibration layers are expected to catch this and treat the proposal
    as an infinite-misfit outcome rather than crash.
    """

    def __init__(self, params, t, step):
        self.params = params
        self.t = t
        self.step = step
        super().__init__(
            f"trajectory blew up at step {step} (t = {t:.6g} days) "
            f"with params {params}"
        )


@dataclass(frozen=True)
class SystemShape:
    """System size: K slow variables, J fast variables per slow one."""

    K: int
    J: int

    def __post_init__(self):
        # The cyclic quadratic term needs k-2, k-1, k+1 distinct (same for j).
        if self.K < 4:
            raise ValueError(f"K must be >= 4, got {self.K}")
        if self.J < 4:
            raise ValueError(f"J must be >= 4, got {self.J}")


@dataclass(frozen=True)
class Params:
    """Model parameters (F, h, c, b).

    F is the large-scale forcing, h the slow-fast interaction coefficient,
    c the fast-damping rate ratio, and b the fast nonlinearity amplitude.
    Calibrated values keep c > 0 (it walks in log space and carries a
    log-normal prior); raw instances may hold any finite values so that
    out-of-support points can still be scored by the priors.

    roles optionally tags each entry as computable / non-computable /
    unspecified (learnable from fast-only runs vs. requiring full-system
    data).
    """

    F: float
    h: float
    c: float
    b: float
    roles: tuple = ("unspecified",) * 4

    def __post_init__(self):
        for v, name in zip((self.F, self.h, self.c, self.b), PARAM_NAMES):
            if not math.isfinite(v):
                raise ValueError(f"parameter {name} must be finite, got {v}")
        if len(self.roles) != 4 or any(r not in ROLE_TAGS for r in self.roles):
            raise ValueError(f"roles must be 4 tags from {ROLE_TAGS}")

    def as_array(self) -> np.ndarray:
        return np.array([self.F, self.h, self.c, self.b], dtype=float)

    @classmethod
    def from_array(cls, a, roles=("unspecified",) * 4) -> "Params":
        F, h, c, b = (float(v) for v in a)
        return cls(F, h, c, b, roles)

    def replace(self, **kw) -> "Params":
        vals = {n: getattr(self, n) for n in PARAM_NAMES}
        vals.update(kw)
        return Params(roles=self.roles, **vals)


@dataclass
class ModelState:
    """Slow field X (K,), fast field Y (K, J), and elapsed time in days."""

    X: np.ndarray
    Y: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.X = np.ascontiguousarray(self.X, dtype=float)
        self.Y = np.ascontiguousarray(self.Y, dtype=float)
        if self.X.ndim != 1 or self.Y.ndim != 2 or self.Y.shape[0] != self.X.shape[0]:
            raise ShapeError(
                f"expected X (K,) and Y (K, J); got {self.X.shape} and {self.Y.shape}"
            )

    @property
    def shape(self) -> SystemShape:
        return SystemShape(self.X.shape[0], self.Y.shape[1])

    def copy(self) -> "ModelState":
        return ModelState(self.X.copy(), self.Y.copy(), self.t)

    def check_shape(self, shape: SystemShape):
        if self.X.shape != (shape.K,) or self.Y.shape != (shape.K, shape.J):
            raise ShapeError(
                f"state arrays {self.X.shape}/{self.Y.shape} do not match "
                f"shape K={shape.K}, J={shape.J}"
            )


@dataclass(frozen=True)
class IntegratorConfig:
    """Fixed-step integrator settings; 'rk4' is the only scheme."""

    dt: float = 1e-3
    scheme: str = "rk4"

    def __post_init__(self):
        if not (0.0 < self.dt <= DT_LIMIT):
            raise ValueError(f"dt must be in (0, {DT_LIMIT}], got {self.dt}")
        if self.scheme != "rk4":
            raise ValueError(f"unknown scheme {self.scheme!r}")


class Tendency(NamedTuple):
    """State derivative in ModelState layout: dX (K,), dY (K, J)."""

    dX: np.ndarray
    dY: np.ndarray


def n_steps(duration: float, dt: float) -> int:
    """Number of fixed steps covering `duration`, ceil with a tiny slack
    so that exact multiples of dt do not round up."""
    if duration < 0:
        raise ValueError(f"duration must be >= 0, got {duration}")
    return max(0, int(math.ceil(duration / dt - 1e-9)))


def _kernel_indices(n):
    p1, p2, m1, m2 = _kernels._cyclic_offsets(n)
    return p1, p2, m1, m2


def full_tendency(state: ModelState, params: Params, shape: SystemShape | None = None) -> Tendency:
    """Right-hand side of the full two-scale system."""
    if shape is not None:
        state.check_shape(shape)
    K, J = state.Y.shape
    Yf = state.Y.reshape(K * J)
    kp1, _, km1, km2 = _kernel_indices(K)
    mp1, mp2, mm1, _ = _kernel_indices(K * J)
    dX = np.empty(K)
    dYf = np.empty(K * J)
    _kernels.full_tendency(
        state.X, Yf, params.F, params.h, params.c, params.b,
        kp1, km1, km2, mp1, mp2, mm1, dX, dYf,
    )
    return Tendency(dX, dYf.reshape(K, J))


def fast_tendency(ycol: np.ndarray, params: Params, x_fixed: float) -> np.ndarray:
    """Right-hand side of a single fast chain with X frozen at x_fixed.

    The chain closes on itself (Y_{j+J} = Y_j); F plays no role.
    """
    ycol = np.ascontiguousarray(ycol, dtype=float)
    if ycol.ndim != 1 or ycol.shape[0] < 4:
        raise ShapeError(f"ycol must be 1-d with J >= 4, got shape {ycol.shape}")
    J = ycol.shape[0]
    jp1, jp2, jm1, _ = _kernel_indices(J)
    dY = np.empty(J)
    _kernels.fast_tendency(ycol, params.h, params.c, params.b, x_fixed, jp1, jp2, jm1, dY)
    return dY


def conservative_tendency(state: ModelState, params: Params) -> Tendency:
    """Quadratic (advective) and coupling terms only; damping and F dropped.

    Conserves sum(X^2) + sum(Y^2) exactly, which is what the energy
    conservation tests integrate.
    """
    X = state.X
    K, J = state.Y.shape
    Yf = state.Y.reshape(K * J)
    ybar = state.Y.mean(axis=1)
    dX = -np.roll(X, 1) * (np.roll(X, 2) - np.roll(X, -1)) - params.h * params.c * ybar
    drive = (params.h / J) * np.repeat(X, J)
    dYf = params.c * (
        -params.b * np.roll(Yf, -1) * (np.roll(Yf, -2) - np.roll(Yf, 1)) + drive
    )
    return Tendency(dX, dYf.reshape(K, J))


def step(state: ModelState, params: Params, cfg: IntegratorConfig) -> ModelState:
    """One RK4 step; deterministic given inputs, input state untouched."""
    X = state.X.copy()
    Yf = state.Y.reshape(-1).copy()
    dummy = np.empty(0)
    status = _kernels.integrate_full(
        X, Yf, params.F, params.h, params.c, params.b,
        cfg.dt, 1, dummy, dummy, _kernels.ACC_NONE,
    )
    if status >= 0:
        raise BlowUpError(params, state.t + cfg.dt, status)
    return ModelState(X, Yf.reshape(state.Y.shape), state.t + cfg.dt)


def integrate(
    state0: ModelState,
    params: Params,
    duration: float,
    cfg: IntegratorConfig,
    observer: Callable[[ModelState], None] | None = None,
) -> ModelState:
    """Advance ceil(duration/dt) steps; observer sees each post-step state.

    Without an observer the whole run stays inside the compiled kernel.
    """
    n = n_steps(duration, cfg.dt)
    if observer is not None:
        state = state0
        for _ in range(n):
            state = step(state, params, cfg)
            observer(state)
        return state

    X = state0.X.copy()
    Yf = state0.Y.reshape(-1).copy()
    dummy = np.empty(0)
    status = _kernels.integrate_full(
        X, Yf, params.F, params.h, params.c, params.b,
        cfg.dt, n, dummy, dummy, _kernels.ACC_NONE,
    )
    if status >= 0:
        raise BlowUpError(params, state0.t + (status + 1) * cfg.dt, status)
    return ModelState(X, Yf.reshape(state0.Y.shape), state0.t + n * cfg.dt)


def step_fast(ycol: np.ndarray, params: Params, x_fixed: float, cfg: IntegratorConfig) -> np.ndarray:
    """One RK4 step of the fast-only chain."""
    Y = np.ascontiguousarray(ycol, dtype=float).copy()
    dummy = np.empty(0)
    status = _kernels.integrate_fast(
        Y, params.h, params.c, params.b, x_fixed, cfg.dt, 1, dummy, dummy, _kernels.ACC_NONE
    )
    if status >= 0:
        raise BlowUpError(params, cfg.dt, status)
    return Y


def integrate_fast(
    ycol: np.ndarray,
    params: Params,
    x_fixed: float,
    duration: float,
    cfg: IntegratorConfig,
    observer: Callable[[np.ndarray], None] | None = None,
) -> np.ndarray:
    """Fast-chain counterpart of integrate()."""
    n = n_steps(duration, cfg.dt)
    if observer is not None:
        Y = np.ascontiguousarray(ycol, dtype=float)
        for _ in range(n):
            Y = step_fast(Y, params, x_fixed, cfg)
            observer(Y)
        return Y

    Y = np.ascontiguousarray(ycol, dtype=float).copy()
    dummy = np.empty(0)
    status = _kernels.integrate_fast(
        Y, params.h, params.c, params.b, x_fixed, cfg.dt, n, dummy, dummy, _kernels.ACC_NONE
    )
    if status >= 0:
        raise BlowUpError(params, (status + 1) * cfg.dt, status)
    return Y


def random_initial_state(shape: SystemShape, rng: np.random.Generator) -> ModelState:
    """Generic initial condition: X ~ N(0, 1) i.i.d., Y = 0."""
    return ModelState(rng.standard_normal(shape.K), np.zeros((shape.K, shape.J)))


def random_initial_ycol(J: int, rng: np.random.Generator) -> np.ndarray:
    """Fast-chain initial condition: Y ~ N(0, 1) i.i.d.

    A uniform fast chain is an invariant manifold (the advective terms
    vanish identically), so the fast-only control run must start from an
    asymmetric state to reach the attractor.
    """
    return rng.standard_normal(J)
