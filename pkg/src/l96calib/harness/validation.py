"""Built-in property checks behind the `validate` command.

Each check returns a CheckResult with the measured value and the threshold
it was held against, so the report can show margins rather than bare
pass/fail verdicts.  The energy-conservation check accepts a tendency
override, which the test suite uses to prove that a corrupted tendency is
actually caught.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import quad

from ..calibrate import MCMCConfig, eki_update, sample_potential
from ..dynamics import (
    IntegratorConfig,
    ModelState,
    Params,
    conservative_tendency,
    integrate,
    random_initial_state,
)
from ..priors import PriorSpec
from ..statistics import MomentLayout, control_run, steady_state_residuals
from .config import ExperimentConfig
from .seeding import derive_rng


@dataclass
class CheckResult:
    name: str
    measured: float
    threshold: float
    op: str  # "<" or ">"
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.measured < self.threshold if self.op == "<" else self.measured > self.threshold

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        extra = f"  ({self.detail})" if self.detail else ""
        return (f"{verdict}  {self.name}: measured {self.measured:.6g} "
                f"{self.op} threshold {self.threshold:.6g}{extra}")


def _rk4_generic(state: ModelState, params: Params, dt: float, nsteps: int,
                 tendency: Callable) -> ModelState:
    """Plain-numpy RK4 over an arbitrary tendency; slow but hookable."""
    X, Y = state.X.copy(), state.Y.copy()
    for _ in range(nsteps):
        s = ModelState(X, Y)
        k1 = tendency(s, params)
        k2 = tendency(ModelState(X + 0.5 * dt * k1.dX, Y + 0.5 * dt * k1.dY), params)
        k3 = tendency(ModelState(X + 0.5 * dt * k2.dX, Y + 0.5 * dt * k2.dY), params)
        k4 = tendency(ModelState(X + dt * k3.dX, Y + dt * k3.dY), params)
        X = X + (dt / 6.0) * (k1.dX + 2 * k2.dX + 2 * k3.dX + k4.dX)
        Y = Y + (dt / 6.0) * (k1.dY + 2 * k2.dY + 2 * k3.dY + k4.dY)
    return ModelState(X, Y, state.t + nsteps * dt)


def check_energy_conservation(cfg: ExperimentConfig,
                              tendency: Callable | None = None) -> CheckResult:
    """Total energy drift of the conservative tendency over 1 day at dt=1e-3."""
    tendency = tendency or conservative_tendency
    rng = derive_rng(cfg.seed, "validate/energy")
    # Resolved-regime amplitudes: the fast advective rate c*b*|Y| stays well
    # below 1/dt, so the RK4 invariant drift sits far under the threshold
    # while a corrupted tendency still blows through it immediately.
    state = ModelState(0.3 * rng.standard_normal(cfg.shape.K),
                       0.05 * rng.standard_normal((cfg.shape.K, cfg.shape.J)))
    e0 = float(np.sum(state.X ** 2) + np.sum(state.Y ** 2))
    final = _rk4_generic(state, cfg.true_params, 1e-3, 1000, tendency)
    e1 = float(np.sum(final.X ** 2) + np.sum(final.Y ** 2))
    drift = abs(e1 - e0) / e0
    return CheckResult("energy_conservation", drift, 1e-6, "<",
                       f"E0={e0:.6g}, E1={e1:.6g}")


def check_steady_identities(cfg: ExperimentConfig, duration: float = 1e4) -> CheckResult:
    """Relative residuals of the steady-state moment identities at true params."""
    layout = MomentLayout("full", cfg.shape)
    stats = control_run(cfg.true_params, duration, layout, cfg.integrator,
                        derive_rng(cfg.seed, "validate/identities"))
    r_slow, r_fast = steady_state_residuals(stats.means, cfg.true_params, cfg.shape.J)
    mX2 = stats.means[layout.block("X2")].mean()
    mY2 = stats.means[layout.block("Y2bar")].mean()
    worst = max(abs(r_slow) / abs(mX2), abs(r_fast) / abs(mY2))
    return CheckResult("steady_state_identities", worst, 0.02, "<",
                       f"slow {r_slow/mX2:.2e}, fast {r_fast/mY2:.2e}")


def check_integrator_order(cfg: ExperimentConfig) -> CheckResult:
    """Global self-convergence order over a short window (expect ~4)."""
    rng = derive_rng(cfg.seed, "validate/order")
    state = random_initial_state(cfg.shape, rng)
    params = cfg.true_params
    state = integrate(state, params, 1.0, IntegratorConfig(1e-3))  # settle onto attractor
    span = 0.05

    def err(dt):
        a = integrate(state, params, span, IntegratorConfig(dt))
        r = integrate(state, params, span, IntegratorConfig(dt / 100.0))
        return float(np.linalg.norm(a.X - r.X) + np.linalg.norm(a.Y - r.Y))

    ratio = err(1e-3) / err(5e-4)
    order = math.log2(ratio)
    return CheckResult("integrator_order", abs(order - 4.0), 0.5, "<",
                       f"error ratio {ratio:.2f}, order {order:.2f}")


def check_eki_linear_oracle(cfg: ExperimentConfig) -> CheckResult:
    """Algebraic agreement of the EKI mean update with a dense Kalman formula."""
    rng = derive_rng(cfg.seed, "validate/eki-linear")
    d, p, M = 5, 8, 4000
    A = rng.standard_normal((p, d))
    mu0 = rng.normal(0.0, 3.0, d)
    cov0 = np.diag(rng.uniform(0.5, 1.5, d))
    members = rng.multivariate_normal(mu0, cov0, size=M)
    outputs = members @ A.T
    sigma = rng.uniform(0.5, 2.0, p)
    y = A @ mu0 + rng.normal(0.0, 1.0, p)

    updated = eki_update(members, outputs, y, sigma, rng=None, perturb=False)

    ubar = members.mean(axis=0)
    wbar = outputs.mean(axis=0)
    du = members - ubar
    dw = outputs - wbar
    cuw = du.T @ dw / M
    cww = dw.T @ dw / M
    oracle_mean = ubar + cuw @ np.linalg.inv(cww + np.diag(sigma)) @ (y - wbar)
    rel = float(np.linalg.norm(updated.mean(axis=0) - oracle_mean)
                / np.linalg.norm(oracle_mean))
    return CheckResult("eki_linear_oracle", rel, 1e-8, "<")


def check_mcmc_gaussian_oracle(cfg: ExperimentConfig, n_iter: int = 100_000) -> CheckResult:
    """RWM on a 4-D standard Gaussian: mean within 3 MC standard errors and
    variances within 15%."""

    def potential(u):
        return 0.5 * float(u @ u)

    mcfg = MCMCConfig(n_iter=n_iter, burn_in=min(1000, n_iter // 10), thin=1,
                      proposal_scale=1.2, seed=int(derive_rng(cfg.seed, "validate/mcmc").integers(2**31)))
    chain = sample_potential(mcfg, potential, np.zeros(4))
    samples = chain.retained()
    nb = 50
    batches = samples[: samples.shape[0] // nb * nb].reshape(nb, -1, 4).mean(axis=1)
    se = batches.std(axis=0, ddof=1) / math.sqrt(nb)
    mean_sigmas = float(np.max(np.abs(samples.mean(axis=0)) / se))
    var_err = float(np.max(np.abs(samples.var(axis=0) - 1.0)))
    # Single scalar: worst of (mean z-score / 3) and (variance error / 0.15).
    worst = max(mean_sigmas / 3.0, var_err / 0.15)
    return CheckResult("mcmc_gaussian_oracle", worst, 1.0, "<",
                       f"max|mean|/se {mean_sigmas:.2f}, max var err {var_err:.3f}")


def check_prior_normalization(cfg: ExperimentConfig) -> CheckResult:
    """Each marginal prior density integrates to 1 over +-12 sigma."""
    worst = 0.0
    for name in ("F", "h", "c", "b"):
        spec: PriorSpec = cfg.priors[name]
        s = math.sqrt(spec.var)
        if spec.kind == "normal":
            lo, hi = spec.mean - 12 * s, spec.mean + 12 * s
        else:
            lo, hi = math.exp(spec.mean - 12 * s), math.exp(spec.mean + 12 * s)
        total, _ = quad(lambda x: math.exp(spec.log_density(x)), lo, hi, limit=200)
        worst = max(worst, abs(total - 1.0))
    return CheckResult("prior_normalization", worst, 1e-6, "<")


ALL_CHECKS = (
    check_energy_conservation,
    check_steady_identities,
    check_integrator_order,
    check_eki_linear_oracle,
    check_mcmc_gaussian_oracle,
    check_prior_normalization,
)


def run_all(cfg: ExperimentConfig) -> list[CheckResult]:
    return [check(cfg) for check in ALL_CHECKS]
