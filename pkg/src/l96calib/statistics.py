"""Time-averaged moment statistics along trajectories.

Two moment layouts exist.  The full layout stacks five K-blocks of
single-cell statistics, (X_k, Ybar_k, X_k^2, X_k Ybar_k, Y2bar_k), giving a
vector of length 5K.  The fast layout holds the first moments Y_j of one
fast chain followed by all pair products Y_j Y_j' with j <= j', giving
J + J(J+1)/2 entries.  Entry order is fixed and carried by the CSV label
grammar X[k], Ybar[k], X2[k], XYbar[k], Y2bar[k], Y[j], YY[j,jp] with
1-based indices.

Time averages are left out of the integrator as dt-weighted Riemann sums
over post-step states; `control_run` fuses integration and accumulation to
estimate the long-run target moments and their sampling variances.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import _kernels
from .dynamics import (
    IntegratorConfig,
    ModelState,
    Params,
    ShapeError,
    SystemShape,
    BlowUpError,
    n_steps,
    random_initial_state,
    random_initial_ycol,
)

FULL_BLOCKS = ("X", "Ybar", "X2", "XYbar", "Y2bar")


@dataclass(frozen=True)
class MomentLayout:
    """Declared ordering of a moment vector (full or fast variant)."""

    variant: str
    shape: SystemShape

    def __post_init__(self):
        if self.variant not in ("full", "fast"):
            raise ValueError(f"variant must be 'full' or 'fast', got {self.variant!r}")

    def __len__(self):
        K, J = self.shape.K, self.shape.J
        if self.variant == "full":
            return 5 * K
        return J + J * (J + 1) // 2

    def labels(self) -> list[str]:
        K, J = self.shape.K, self.shape.J
        if self.variant == "full":
            return [f"{blk}[{k}]" for blk in FULL_BLOCKS for k in range(1, K + 1)]
        out = [f"Y[{j}]" for j in range(1, J + 1)]
        out += [f"YY[{j},{jp}]" for j in range(1, J + 1) for jp in range(j, J + 1)]
        return out

    def index_of(self, label: str) -> int:
        try:
            return self.labels().index(label)
        except ValueError:
            raise KeyError(f"label {label!r} not in {self.variant} layout") from None

    def block(self, name: str) -> slice:
        """Index range of one K-block of the full layout."""
        if self.variant != "full":
            raise ValueError("blocks are a full-layout concept")
        i = FULL_BLOCKS.index(name)
        K = self.shape.K
        return slice(i * K, (i + 1) * K)


def moment_f(state: ModelState) -> np.ndarray:
    """Instantaneous full-layout moment vector of a model state."""
    X = state.X
    ybar = state.Y.mean(axis=1)
    y2bar = (state.Y ** 2).mean(axis=1)
    return np.concatenate([X, ybar, X * X, X * ybar, y2bar])


def moment_g(ycol: np.ndarray) -> np.ndarray:
    """Instantaneous fast-layout moment vector of one fast chain."""
    y = np.asarray(ycol, dtype=float)
    if y.ndim != 1:
        raise ShapeError(f"ycol must be 1-d, got shape {y.shape}")
    iu, ju = np.triu_indices(y.shape[0])
    return np.concatenate([y, y[iu] * y[ju]])


@dataclass
class RunningAverage:
    """dt-weighted running sums of a moment vector over a time window.

    mean() is invariant under splitting the window and merging the parts.
    With track_variance the accumulator also sums squares, from which
    variance() returns the weighted population variance of the
    instantaneous samples.
    """

    layout: MomentLayout
    t0: float = 0.0
    elapsed: float = 0.0
    track_variance: bool = False
    sum: np.ndarray = field(default=None)  # type: ignore[assignment]
    second_sum: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        n = len(self.layout)
        if self.sum is None:
            self.sum = np.zeros(n)
        if self.second_sum is None and self.track_variance:
            self.second_sum = np.zeros(n)

    def accumulate(self, sample: np.ndarray, weight: float):
        if weight < 0:
            raise ValueError(f"weight must be >= 0, got {weight}")
        sample = np.asarray(sample, dtype=float)
        if sample.shape != self.sum.shape:
            raise ShapeError(
                f"sample length {sample.shape} does not match layout length {self.sum.shape}"
            )
        self.sum += weight * sample
        if self.track_variance:
            self.second_sum += weight * sample * sample
        self.elapsed += weight

    def mean(self) -> np.ndarray:
        if self.elapsed <= 0:
            raise ValueError("mean() undefined for an empty window")
        return self.sum / self.elapsed

    def variance(self) -> np.ndarray:
        if not self.track_variance:
            raise ValueError("accumulator was created without track_variance")
        m = self.mean()
        return self.second_sum / self.elapsed - m * m

    def merge(self, other: "RunningAverage") -> "RunningAverage":
        if other.layout != self.layout or other.track_variance != self.track_variance:
            raise ValueError("cannot merge accumulators with different layouts")
        out = RunningAverage(self.layout, t0=min(self.t0, other.t0),
                             track_variance=self.track_variance)
        out.sum = self.sum + other.sum
        if self.track_variance:
            out.second_sum = self.second_sum + other.second_sum
        out.elapsed = self.elapsed + other.elapsed
        return out


def accumulate(avg: RunningAverage, sample: np.ndarray, weight: float) -> RunningAverage:
    """Functional spelling of RunningAverage.accumulate (mutates and returns avg)."""
    avg.accumulate(sample, weight)
    return avg


@dataclass
class ControlRunStats:
    """Long-run moment means and instantaneous variances at fixed parameters.

    final_state is the end of the run: a ModelState for the full layout, a
    fast-chain array for the fast layout.  It doubles as a draw from the
    statistically steady state for experiments that need one.
    """

    layout: MomentLayout
    means: np.ndarray
    variances: np.ndarray
    elapsed: float
    final_state: object


def control_run(
    params_true: Params,
    duration: float,
    layout: MomentLayout,
    cfg: IntegratorConfig,
    seed: int | np.random.Generator,
    x_fixed: float | None = None,
    spinup: float = 0.0,
) -> ControlRunStats:
    """Integrate at fixed parameters and estimate target moments + variances.

    The initial condition is the generic random draw (X ~ N(0,1), Y = 0 for
    the full system; Y ~ N(0,1) for the fast chain), advanced through an
    optional spin-up before accumulation starts.
    """
    if duration <= 0:
        raise ValueError(f"duration must be > 0, got {duration}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    sums = np.zeros(len(layout))
    sq = np.zeros(len(layout))
    n_spin = n_steps(spinup, cfg.dt)
    n_acc = n_steps(duration, cfg.dt)

    if layout.variant == "full":
        state0 = random_initial_state(layout.shape, rng)
        X = state0.X.copy()
        Yf = state0.Y.reshape(-1).copy()
        p = params_true
        if n_spin:
            status = _kernels.integrate_full(
                X, Yf, p.F, p.h, p.c, p.b, cfg.dt, n_spin, sums, sq, _kernels.ACC_NONE
            )
            if status >= 0:
                raise BlowUpError(p, (status + 1) * cfg.dt, status)
        status = _kernels.integrate_full(
            X, Yf, p.F, p.h, p.c, p.b, cfg.dt, n_acc, sums, sq, _kernels.ACC_SUM_SQ
        )
        if status >= 0:
            raise BlowUpError(p, spinup + (status + 1) * cfg.dt, status)
        K, J = layout.shape.K, layout.shape.J
        final = ModelState(X, Yf.reshape(K, J), spinup + n_acc * cfg.dt)
    else:
        if x_fixed is None:
            raise ValueError("fast layout control run needs x_fixed")
        Y = random_initial_ycol(layout.shape.J, rng)
        p = params_true
        if n_spin:
            status = _kernels.integrate_fast(
                Y, p.h, p.c, p.b, x_fixed, cfg.dt, n_spin, sums, sq, _kernels.ACC_NONE
            )
            if status >= 0:
                raise BlowUpError(p, (status + 1) * cfg.dt, status)
        status = _kernels.integrate_fast(
            Y, p.h, p.c, p.b, x_fixed, cfg.dt, n_acc, sums, sq, _kernels.ACC_SUM_SQ
        )
        if status >= 0:
            raise BlowUpError(p, spinup + (status + 1) * cfg.dt, status)
        final = Y

    elapsed = n_acc * cfg.dt
    means = sums / elapsed
    variances = sq / elapsed - means * means
    return ControlRunStats(layout, means, variances, elapsed, final)


def control_run_variances(
    params_true: Params,
    duration: float,
    layout: MomentLayout,
    cfg: IntegratorConfig,
    seed: int | np.random.Generator,
    x_fixed: float | None = None,
    spinup: float = 0.0,
) -> tuple[np.ndarray, np.ndarray]:
    """(variances, means) of the instantaneous moments over a control run."""
    stats = control_run(params_true, duration, layout, cfg, seed, x_fixed, spinup)
    return stats.variances, stats.means


def steady_state_residuals(means: np.ndarray, params: Params, J: int) -> tuple[float, float]:
    """Residuals of the steady-state second-moment identities.

    From the k-pooled full-layout means the slow balance reads
    <X^2> - F <X> + h c <X Ybar> = 0 and the fast one
    <Y2bar> - (h/J) <X Ybar> = 0; returns (r_slow, r_fast).  J is the
    fast-chain length (it is not recoverable from the 5K-vector itself).
    """
    means = np.asarray(means, dtype=float)
    if means.ndim != 1 or means.shape[0] % 5 != 0:
        raise ShapeError(f"expected a full-layout vector (5K entries), got {means.shape}")
    K = means.shape[0] // 5
    mX = means[0:K].mean()
    mX2 = means[2 * K:3 * K].mean()
    mXY = means[3 * K:4 * K].mean()
    mY2 = means[4 * K:5 * K].mean()
    r_slow = mX2 - params.F * mX + params.h * params.c * mXY
    r_fast = mY2 - (params.h / J) * mXY
    return float(r_slow), float(r_fast)


def write_moment_csv(path, layout: MomentLayout, rows: Mapping[str, np.ndarray]):
    """Serialize named moment vectors; header = 'quantity' + layout labels.

    Values are written with repr so that a read-back round-trips exactly.
    """
    labels = layout.labels()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["quantity"] + labels)
        for name, vec in rows.items():
            vec = np.asarray(vec, dtype=float)
            if vec.shape != (len(layout),):
                raise ShapeError(f"row {name!r} has length {vec.shape}, need {len(layout)}")
            w.writerow([name] + [repr(float(v)) for v in vec])


def read_moment_csv(path) -> tuple[list[str], dict[str, np.ndarray]]:
    """Inverse of write_moment_csv: (labels, {quantity: vector})."""
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        labels = header[1:]
        rows = {}
        for line in r:
            rows[line[0]] = np.array([float(v) for v in line[1:]])
    return labels, rows
