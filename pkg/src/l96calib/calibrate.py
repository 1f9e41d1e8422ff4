"""Posterior sampling by random-walk Metropolis and ensemble Kalman inversion.

Both algorithms operate in unconstrained parameter coordinates (see
priors.ParamSpace): the RWM proposal is an isotropic-per-coordinate
Gaussian there, and the EKI update is linear there.  Forward evaluations
chain trajectory states: each objective accumulation starts from the end
state of the previous forward integration, without discarding spin-up
after a parameter update.

A blown-up forward run yields an infinite potential (MCMC auto-rejects the
proposal) or a flagged ensemble member whose output is replaced by the
mean of the surviving members' outputs for that iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import _kernels
from .dynamics import BlowUpError, IntegratorConfig, ModelState, Params, n_steps
from .objective import CalibrationTarget, NoiseModel, evaluate_Jo, evaluate_Js
from .priors import PARAM_NAMES, ParamSpace, PriorSet


# ---------------------------------------------------------------------------
# Random-walk Metropolis


@dataclass(frozen=True)
class MCMCConfig:
    """RWM chain settings.

    proposal_scale, if given, is the per-coordinate standard deviation of
    the unconstrained Gaussian proposal; by default it is scale_factor
    times the prior standard deviation per coordinate.  With adapt on, a
    single global multiplier is tuned toward adapt_target acceptance in
    blocks during burn-in only, then frozen.
    """

    n_iter: int = 2200
    burn_in: int = 200
    thin: int = 2
    proposal_scale: Sequence[float] | float | None = None
    scale_factor: float = 0.02
    adapt: bool = False
    adapt_target: float = 0.25
    adapt_block: int = 25
    seed: int = 0

    def __post_init__(self):
        if not (0 <= self.burn_in < self.n_iter):
            raise ValueError(f"need 0 <= burn_in < n_iter, got {self.burn_in}, {self.n_iter}")
        if self.thin < 1:
            raise ValueError(f"thinning stride must be >= 1, got {self.thin}")


@dataclass
class Chain:
    """RWM sample path.

    u holds the walk-space samples (one per iteration, the state after
    each Metropolis step), theta their constrained counterparts, pot the
    walk-space potentials used for acceptance, and U the constrained-space
    potential J - sum_i log p_i(theta_i) for reporting.  states[i] is the
    trajectory end state of the forward integration run at iteration i
    (the chaining state), when the evaluator has one.
    """

    names: tuple[str, ...]
    u: np.ndarray
    theta: np.ndarray
    pot: np.ndarray
    U: np.ndarray
    accepted: np.ndarray
    burn_in: int
    thin: int
    states: list | None = None
    final_scale: np.ndarray | None = None

    @property
    def acceptance_rate(self) -> float:
        return float(self.accepted.mean())

    def retained(self) -> np.ndarray:
        """Post-burn-in constrained samples."""
        return self.theta[self.burn_in:]

    def thinned(self) -> np.ndarray:
        """Every thin-th retained sample, starting at the first one."""
        return self.theta[self.burn_in::self.thin]


def rwm_step(
    current_u: np.ndarray,
    current_pot: float,
    rng: np.random.Generator,
    scale: np.ndarray,
    evaluate: Callable,
    carry=None,
):
    """One Metropolis step with Gaussian proposal u* = u + scale * xi.

    evaluate(u, carry) -> (potential, new_carry); acceptance probability is
    min(1, exp(current_pot - potential)), so an infinite potential always
    rejects.  The carry (chained trajectory state) advances with every
    completed forward run, accepted or not; a blown-up run (new_carry is
    None) leaves it unchanged.

    Returns (u, pot, accepted, carry, proposal_pot).
    """
    prop = current_u + scale * rng.standard_normal(current_u.shape[0])
    pot, new_carry = evaluate(prop, carry)
    if math.isnan(pot):
        pot = math.inf
    if new_carry is not None:
        carry = new_carry
    dU = current_pot - pot
    accepted = dU >= 0 or rng.random() < math.exp(dU)
    if accepted:
        return prop, pot, True, carry, pot
    return current_u, current_pot, False, carry, pot


def _run_chain(
    cfg: MCMCConfig,
    evaluate: Callable,
    init_u: np.ndarray,
    names: tuple[str, ...],
    space: ParamSpace | None,
    carry0=None,
    keep_states: bool = False,
) -> Chain:
    rng = np.random.default_rng(cfg.seed)
    d = len(init_u)
    if cfg.proposal_scale is not None:
        scale = np.broadcast_to(np.asarray(cfg.proposal_scale, dtype=float), (d,)).copy()
    elif space is not None:
        scale = cfg.scale_factor * space.unconstrained_std()
    else:
        scale = np.full(d, cfg.scale_factor)

    u = np.asarray(init_u, dtype=float).copy()
    pot, carry = evaluate(u, carry0)
    if not math.isfinite(pot):
        raise ValueError("initial point has non-finite potential; pick another start")

    us = np.empty((cfg.n_iter, d))
    pots = np.empty(cfg.n_iter)
    acc = np.zeros(cfg.n_iter, dtype=bool)
    states = [] if keep_states else None
    block_acc = 0
    for i in range(cfg.n_iter):
        u, pot, accepted, carry, _ = rwm_step(u, pot, rng, scale, evaluate, carry)
        us[i] = u
        pots[i] = pot
        acc[i] = accepted
        if keep_states:
            states.append(carry)
        if cfg.adapt and i < cfg.burn_in:
            block_acc += accepted
            if (i + 1) % cfg.adapt_block == 0:
                rate = block_acc / cfg.adapt_block
                scale *= math.exp(rate - cfg.adapt_target)
                block_acc = 0

    if space is not None:
        theta = space.constrained(us)
        # Constrained-space potential: add back the prior-density difference
        # between the two charts (the log-Jacobian).
        jac = np.zeros(cfg.n_iter)
        for j, name in enumerate(space.names):
            if space.priors[name].log_transformed:
                jac += us[:, j]
        U = pots + jac
    else:
        theta = us.copy()
        U = pots.copy()
    return Chain(names, us, theta, pots, U, acc, cfg.burn_in, cfg.thin,
                 states=states, final_scale=scale)


def run_mcmc(
    cfg: MCMCConfig,
    target: CalibrationTarget,
    priors: PriorSet,
    init: Params,
    *,
    integrator: IntegratorConfig | None = None,
    init_state=None,
    space: ParamSpace | None = None,
) -> Chain:
    """Sample the posterior of the calibrated parameters by RWM.

    For a full-layout target all four parameters are calibrated and
    init_state must be (or defaults to) a ModelState; for a fast-layout
    target the space is (h, c, b) with F frozen at init.F and init_state
    is the starting fast chain.  Each iteration's forward run starts from
    the end state of the previous one.
    """
    integrator = integrator or IntegratorConfig()
    if space is None:
        if target.layout.variant == "full":
            space = ParamSpace(priors)
        else:
            space = ParamSpace(priors, names=("h", "c", "b"), fixed={"F": init.F})

    if init_state is None:
        raise ValueError("run_mcmc needs an initial trajectory state")

    if target.layout.variant == "full":
        def evaluate(u, carry):
            params = space.from_unconstrained(u)
            J, final = evaluate_Jo(params, target, carry, integrator)
            if not math.isfinite(J):
                return math.inf, None
            return J - space.log_prior_unconstrained(u), final
        carry0 = init_state.copy()
    else:
        def evaluate(u, carry):
            params = space.from_unconstrained(u)
            J, final = evaluate_Js(params, target, carry, integrator)
            if not math.isfinite(J):
                return math.inf, None
            return J - space.log_prior_unconstrained(u), final
        carry0 = np.ascontiguousarray(init_state, dtype=float).copy()

    init_u = space.to_unconstrained(init)
    return _run_chain(cfg, evaluate, init_u, space.names, space,
                      carry0=carry0, keep_states=True)


def sample_potential(
    cfg: MCMCConfig,
    potential: Callable[[np.ndarray], float],
    init_u: np.ndarray,
    names: tuple[str, ...] | None = None,
) -> Chain:
    """Run the RWM kernel on an analytic potential (no dynamics, no priors)."""
    init_u = np.asarray(init_u, dtype=float)
    if names is None:
        names = tuple(f"u{i}" for i in range(init_u.shape[0]))

    def evaluate(u, carry):
        return float(potential(u)), carry

    return _run_chain(cfg, evaluate, init_u, names, None)


def estimate_posterior_pdf(chain: Chain, bins: int = 30) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Per-parameter marginal histograms of the retained, thinned samples.

    Returns {name: (edges, masses)} with masses summing to 1; a degenerate
    sample set collapses to a single bin of mass 1.
    """
    if bins < 1:
        raise ValueError(f"bins must be >= 1, got {bins}")
    samples = chain.thinned()
    if samples.shape[0] == 0:
        raise ValueError("no retained samples to bin")
    out = {}
    for j, name in enumerate(chain.names):
        col = samples[:, j]
        lo, hi = float(col.min()), float(col.max())
        if lo == hi:
            out[name] = (np.array([lo, hi]), np.array([1.0]))
            continue
        counts, edges = np.histogram(col, bins=bins, range=(lo, hi))
        out[name] = (edges, counts / counts.sum())
    return out


def error_norm(estimate: Params, truth: Params) -> float:
    """Euclidean distance between two parameter vectors (constrained)."""
    return float(np.linalg.norm(estimate.as_array() - truth.as_array()))


# ---------------------------------------------------------------------------
# Ensemble Kalman inversion


@dataclass(frozen=True)
class EKIConfig:
    """Perturbed-observation EKI settings."""

    M: int = 100
    n_max: int = 25
    perturb: bool = True
    seed: int = 0
    collapse_tol: float = 1e-10

    def __post_init__(self):
        if self.M < 2:
            raise ValueError(f"ensemble size must be >= 2, got {self.M}")
        if self.n_max < 1:
            raise ValueError(f"n_max must be >= 1, got {self.n_max}")


@dataclass
class EKIIteration:
    """Snapshot after one analysis step (index 0 is the prior draw)."""

    index: int
    members: np.ndarray              # (M, d) constrained parameter values
    outputs: np.ndarray | None       # (M, p) forward outputs that fed this update
    mean: np.ndarray
    std: np.ndarray
    iqr: np.ndarray                  # (2, d) 25th/75th percentiles
    error_norm: float
    n_blowups: int
    collapsed: bool


@dataclass
class EnsembleRecord:
    """Full EKI history; iterations[0] is the initial prior ensemble."""

    names: tuple[str, ...]
    truth: Params | None
    iterations: list[EKIIteration] = field(default_factory=list)

    @property
    def final(self) -> EKIIteration:
        return self.iterations[-1]

    @property
    def collapsed(self) -> bool:
        return any(it.collapsed for it in self.iterations)

    def error_norms(self) -> np.ndarray:
        return np.array([it.error_norm for it in self.iterations])

    def mean_params(self, priors_space: ParamSpace | None = None) -> np.ndarray:
        return self.final.mean


def eki_update(
    members: np.ndarray,
    outputs: np.ndarray,
    target_y: np.ndarray,
    noise,
    rng: np.random.Generator | None = None,
    perturb: bool = True,
) -> np.ndarray:
    """One ensemble Kalman analysis step in parameter space.

    members (M, d) and outputs (M, p) are deviation-correlated through the
    1/M-normalized cross covariance C^uw and output covariance C^ww; each
    member moves by C^uw (C^ww + Sigma)^{-1} (y + eta_j - w_j), with
    eta_j ~ N(0, Sigma) when perturb is on and Sigma the diagonal noise
    covariance.  The solve is a Cholesky factorization, which exists since
    Sigma > 0.
    """
    members = np.asarray(members, dtype=float)
    outputs = np.asarray(outputs, dtype=float)
    target_y = np.asarray(target_y, dtype=float)
    diag = noise.diag if isinstance(noise, NoiseModel) else np.asarray(noise, dtype=float)
    M = members.shape[0]
    if outputs.shape[0] != M or M < 2:
        raise ValueError(f"need matching ensembles with M >= 2, got {members.shape}, {outputs.shape}")
    if outputs.shape[1] != target_y.shape[0] or diag.shape != target_y.shape:
        raise ValueError("output, target, and noise lengths differ")

    du = members - members.mean(axis=0)
    dw = outputs - outputs.mean(axis=0)
    cuw = du.T @ dw / M
    cww = dw.T @ dw / M
    a = cww + np.diag(diag)

    if perturb:
        if rng is None:
            raise ValueError("perturbed update needs an rng")
        y = target_y + rng.standard_normal(outputs.shape) * np.sqrt(diag)
    else:
        y = np.broadcast_to(target_y, outputs.shape)

    residual = y - outputs                     # (M, p)
    gain_applied = cho_solve(cho_factor(a, lower=True), residual.T)  # (p, M)
    return members + (cuw @ gain_applied).T


def _norm_over_names(mean: np.ndarray, names, truth: Params | None) -> float:
    if truth is None:
        return math.nan
    ref = np.array([getattr(truth, n) for n in names])
    return float(np.linalg.norm(mean - ref))


def _snapshot(index, space, members_u, outputs, truth, n_blowups, collapse_tol):
    theta = space.constrained(members_u)
    mean = theta.mean(axis=0)
    std = theta.std(axis=0)
    iqr = np.percentile(theta, [25.0, 75.0], axis=0)
    collapsed = bool(np.all(std < collapse_tol))
    return EKIIteration(
        index, theta, outputs, mean, std, iqr,
        _norm_over_names(mean, space.names, truth), n_blowups, collapsed,
    )


def run_eki(
    cfg: EKIConfig,
    target: CalibrationTarget,
    priors: PriorSet,
    init_state,
    *,
    integrator: IntegratorConfig | None = None,
    truth: Params | None = None,
    space: ParamSpace | None = None,
    fixed_F: float = 0.0,
    store_outputs: bool = True,
) -> EnsembleRecord:
    """Iterate evaluate-then-update n_max times from a prior ensemble.

    All members start from the single trajectory state init_state (a
    ModelState for full targets, a fast chain for fast ones) and then each
    chains its own trajectory across iterations.  Member evaluations
    within an iteration are independent and run in parallel; results do
    not depend on the execution order.
    """
    integrator = integrator or IntegratorConfig()
    if space is None:
        if target.layout.variant == "full":
            space = ParamSpace(priors)
        else:
            space = ParamSpace(priors, names=("h", "c", "b"), fixed={"F": fixed_F})

    rng = np.random.default_rng(cfg.seed)
    M = cfg.M
    members = space.sample_unconstrained(rng, M)
    p = len(target.layout)
    nsteps = n_steps(target.window, integrator.dt)
    full = target.layout.variant == "full"

    if full:
        shape = target.layout.shape
        init_state.check_shape(shape)
        Xs = np.tile(init_state.X, (M, 1))
        Yfs = np.tile(init_state.Y.reshape(-1), (M, 1))
    else:
        ycol = np.ascontiguousarray(init_state, dtype=float)
        Ys = np.tile(ycol, (M, 1))

    record = EnsembleRecord(space.names, truth)
    record.iterations.append(_snapshot(0, space, members, None, truth, 0, cfg.collapse_tol))

    for it in range(1, cfg.n_max + 1):
        thetas = np.empty((M, 4 if full else 3))
        for m in range(M):
            pm = space.from_unconstrained(members[m])
            thetas[m] = (pm.F, pm.h, pm.c, pm.b) if full else (pm.h, pm.c, pm.b)

        sums = np.zeros((M, p))
        statuses = np.empty(M, dtype=np.int64)
        if full:
            prev_X, prev_Y = Xs.copy(), Yfs.copy()
            _kernels.ensemble_integrate_full(Xs, Yfs, thetas, integrator.dt, nsteps, sums, statuses)
        else:
            prev_Ys = Ys.copy()
            _kernels.ensemble_integrate_fast(Ys, thetas, target.x_fixed,
                                             integrator.dt, nsteps, sums, statuses)

        ok = statuses == -1
        if not ok.any():
            raise BlowUpError(space.from_unconstrained(members[0]),
                              (int(statuses[0]) + 1) * integrator.dt, int(statuses[0]))
        outputs = sums / (nsteps * integrator.dt)
        if not ok.all():
            fallback = outputs[ok].mean(axis=0)
            outputs[~ok] = fallback
            if full:
                Xs[~ok] = prev_X[~ok]
                Yfs[~ok] = prev_Y[~ok]
            else:
                Ys[~ok] = prev_Ys[~ok]

        members = eki_update(members, outputs, target.target, target.noise, rng, cfg.perturb)
        record.iterations.append(
            _snapshot(it, space, members, outputs if store_outputs else None,
                      truth, int((~ok).sum()), cfg.collapse_tol)
        )
    return record
