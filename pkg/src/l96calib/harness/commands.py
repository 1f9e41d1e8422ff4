"""The six CLI commands: simulate, scan, eki, mcmc, fast, validate.

Every command resolves its inputs from an ExperimentConfig, derives all
randomness from the master seed through labeled streams, writes CSVs plus
a manifest.json into the output directory, and returns a process exit
code (0 ok, 2 validation failure; blow-ups and config errors are raised
and mapped to 3 and 4 by the CLI).

CSV schemas (columns, in order):
  trajectory.csv      t, X[1..K], Ybar[1..K]
  moments.csv         t, <layout labels>, r_slow, r_fast
  scan_<param>.csv    value, r, U
  eki_summary.csv     r, M, iter, theta_mean_F, theta_mean_h, theta_mean_c,
                      theta_mean_b, theta_std_F, theta_std_h, theta_std_c,
                      theta_std_b, error_norm, collapsed
  eki_convergence.csv r, M, iter, error_norm, iqr_F, iqr_h, iqr_c, iqr_b
  chain.csv           iter, F, h, c, b, U, accepted
  hist_<param>.csv    bin_lo, bin_hi, mass

Floats are written with repr so re-parsing is lossless and reruns are
byte-comparable.
"""

from __future__ import annotations

import csv
import json
import math
import time
from pathlib import Path

import numpy as np

from .. import _kernels
from ..calibrate import (
    Chain,
    EKIConfig,
    EnsembleRecord,
    MCMCConfig,
    estimate_posterior_pdf,
    run_eki,
    run_mcmc,
)
from ..dynamics import BlowUpError, ModelState, Params, n_steps
from ..objective import CalibrationTarget, NoiseModel, weighted_misfit
from ..priors import ParamSpace, sample as sample_prior
from ..statistics import ControlRunStats, MomentLayout, control_run, steady_state_residuals
from .config import ConfigError, ExperimentConfig
from .manifest import RunManifest
from .seeding import Seeder
from .validation import run_all

PARAMS = ("F", "h", "c", "b")


def _cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def _finish(manifest: RunManifest, out: Path, names, t0: float) -> None:
    manifest.wall_clock_s = time.perf_counter() - t0
    manifest.add_outputs(out, names)
    manifest.write(out)


def _prepare(cfg: ExperimentConfig, command: str, out) -> tuple[Path, Seeder, RunManifest, float]:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    seeder = Seeder(cfg.seed)
    manifest = RunManifest(command, cfg.profile, cfg.flat(), cfg.seed)
    return out, seeder, manifest, time.perf_counter()


def build_full_target(cfg: ExperimentConfig, seeder: Seeder,
                      r: float | None = None) -> tuple[CalibrationTarget, ControlRunStats]:
    """Control run at the true parameters -> target moments + noise model."""
    layout = MomentLayout("full", cfg.shape)
    stats = control_run(cfg.true_params, cfg["control.duration"], layout,
                        cfg.integrator, seeder.rng("control"),
                        spinup=cfg["control.spinup"])
    noise = NoiseModel(cfg["noise.r"] if r is None else r, stats.variances)
    target = CalibrationTarget(layout, stats.means, noise, cfg["target.window"])
    return target, stats


def build_fast_target(cfg: ExperimentConfig, seeder: Seeder) -> tuple[CalibrationTarget, ControlRunStats]:
    """Fast-only control run with the slow variable frozen at fast.x_fixed."""
    layout = MomentLayout("fast", cfg.shape)
    stats = control_run(cfg.true_params, cfg["fast.control_duration"], layout,
                        cfg.integrator, seeder.rng("fast/control"),
                        x_fixed=cfg["fast.x_fixed"], spinup=cfg["control.spinup"])
    noise = NoiseModel(cfg["fast.r"], stats.variances)
    target = CalibrationTarget(layout, stats.means, noise, cfg["fast.window"],
                               x_fixed=cfg["fast.x_fixed"])
    return target, stats


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(cfg: ExperimentConfig, out) -> int:
    out, seeder, manifest, t0 = _prepare(cfg, "simulate", out)
    layout = MomentLayout("full", cfg.shape)
    labels = layout.labels()
    params = cfg.true_params
    dt = cfg.integrator.dt
    duration = cfg["simulate.duration"]
    every = cfg["simulate.snapshot_every"]

    rng = seeder.rng("simulate/init")
    X = rng.standard_normal(cfg.shape.K)
    Yf = np.zeros(cfg.shape.K * cfg.shape.J)
    sums = np.zeros(len(layout))
    sq = np.zeros(len(layout))

    K = cfg.shape.K
    traj_rows = []
    mom_rows = []
    done = 0
    total = n_steps(duration, dt)
    chunk = max(1, n_steps(every, dt))
    while done < total:
        n = min(chunk, total - done)
        status = _kernels.integrate_full(
            X, Yf, params.F, params.h, params.c, params.b, dt, n, sums, sq,
            _kernels.ACC_SUM,
        )
        if status >= 0:
            raise BlowUpError(params, (done + status + 1) * dt, done + status)
        done += n
        t = done * dt
        ybar = Yf.reshape(K, -1).mean(axis=1)
        traj_rows.append([t, *X, *ybar])
        means = sums / (done * dt)
        r_slow, r_fast = steady_state_residuals(means, params, cfg.shape.J)
        mom_rows.append([t, *means, r_slow, r_fast])

    _write_csv(out / "trajectory.csv",
               ["t"] + [f"X[{k}]" for k in range(1, K + 1)]
               + [f"Ybar[{k}]" for k in range(1, K + 1)], traj_rows)
    _write_csv(out / "moments.csv", ["t"] + labels + ["r_slow", "r_fast"], mom_rows)
    manifest.sub_seeds = dict(seeder.used)
    _finish(manifest, out, ["trajectory.csv", "moments.csv"], t0)
    print(f"simulate: {duration:g} days -> {out}")
    return 0


# ---------------------------------------------------------------------------
# scan


def cmd_scan(cfg: ExperimentConfig, out) -> int:
    out, seeder, manifest, t0 = _prepare(cfg, "scan", out)
    name = cfg["scan.param"]
    if name not in PARAMS:
        raise ConfigError(f"scan.param must be one of {PARAMS}, got {name!r}")
    grid = np.linspace(cfg["scan.min"], cfg["scan.max"], cfg["scan.num"])
    priors = cfg.priors
    for v in grid:
        if priors[name].log_density(float(v)) == -math.inf:
            raise ConfigError(f"scan grid value {name}={v} is outside the prior support")

    target, stats = build_full_target(cfg, seeder)
    dt = cfg.integrator.dt
    nsteps = n_steps(cfg["scan.window"], dt)
    rows = []
    for v in grid:
        params = cfg.true_params.replace(**{name: float(v)})
        log_prior = sum(priors[n].log_density(getattr(params, n)) for n in PARAMS)
        X = stats.final_state.X.copy()
        Yf = stats.final_state.Y.reshape(-1).copy()
        sums = np.zeros(len(target.layout))
        status = _kernels.integrate_full(
            X, Yf, params.F, params.h, params.c, params.b, dt, nsteps,
            sums, sums, _kernels.ACC_SUM,
        )
        for r in cfg["noise.levels"]:
            if status >= 0:
                U = math.inf
            else:
                mean = sums / (nsteps * dt)
                U = weighted_misfit(mean, target.target, target.noise.with_r(r)) - log_prior
            rows.append([float(v), r, U])

    fname = f"scan_{name}.csv"
    _write_csv(out / fname, ["value", "r", "U"], rows)
    manifest.sub_seeds = dict(seeder.used)
    _finish(manifest, out, [fname], t0)
    print(f"scan: {name} over [{grid[0]:g}, {grid[-1]:g}] x {len(cfg['noise.levels'])} "
          f"noise levels -> {out}")
    return 0


# ---------------------------------------------------------------------------
# eki


def run_eki_grid(cfg: ExperimentConfig, seeder: Seeder,
                 cells=None) -> dict[tuple[float, int], EnsembleRecord]:
    """Run the (r, M) grid of inversions; cell order cannot affect results
    because each cell's seed derives from its own label."""
    target, stats = build_full_target(cfg, seeder)
    if cells is None:
        cells = [(r, M) for r in cfg["noise.levels"] for M in cfg["eki.ensemble_sizes"]]
    results = {}
    for r, M in cells:
        ecfg = EKIConfig(M=M, n_max=cfg["eki.n_max"], perturb=cfg["eki.perturb"],
                         seed=seeder.seed(f"eki/r={r}/M={M}"))
        results[(r, M)] = run_eki(ecfg, target.with_noise_level(r), cfg.priors,
                                  stats.final_state, integrator=cfg.integrator,
                                  truth=cfg.true_params)
    return results


def _eki_rows(results):
    summary, convergence = [], []
    for (r, M), rec in sorted(results.items()):
        for it in rec.iterations:
            summary.append([r, M, it.index, *it.mean, *it.std, it.error_norm,
                            bool(it.collapsed)])
            convergence.append([r, M, it.index, it.error_norm,
                                *(it.iqr[1] - it.iqr[0])])
    return summary, convergence


def cmd_eki(cfg: ExperimentConfig, out) -> int:
    out, seeder, manifest, t0 = _prepare(cfg, "eki", out)
    results = run_eki_grid(cfg, seeder)
    summary, convergence = _eki_rows(results)
    _write_csv(out / "eki_summary.csv",
               ["r", "M", "iter",
                "theta_mean_F", "theta_mean_h", "theta_mean_c", "theta_mean_b",
                "theta_std_F", "theta_std_h", "theta_std_c", "theta_std_b",
                "error_norm", "collapsed"], summary)
    _write_csv(out / "eki_convergence.csv",
               ["r", "M", "iter", "error_norm", "iqr_F", "iqr_h", "iqr_c", "iqr_b"],
               convergence)
    manifest.sub_seeds = dict(seeder.used)
    _finish(manifest, out, ["eki_summary.csv", "eki_convergence.csv"], t0)
    for (r, M), rec in sorted(results.items()):
        flag = " [collapsed]" if rec.collapsed else ""
        print(f"eki r={r:<4g} M={M:<4d} mean=({', '.join(f'{v:.3f}' for v in rec.final.mean)}) "
              f"err={rec.final.error_norm:.3f}{flag}")
    return 0


# ---------------------------------------------------------------------------
# mcmc (full dynamics) and fast (fast dynamics only)


def _warm_start_full(cfg, seeder, target, stats) -> Params:
    if cfg["mcmc.warm_start"] == "eki":
        ecfg = EKIConfig(M=cfg["eki.M"], n_max=cfg["eki.n_max"],
                         perturb=cfg["eki.perturb"], seed=seeder.seed("mcmc/warm-eki"))
        rec = run_eki(ecfg, target, cfg.priors, stats.final_state,
                      integrator=cfg.integrator, truth=cfg.true_params)
        return Params.from_array(rec.final.mean)
    return sample_prior(cfg.priors, seeder.rng("mcmc/init"))


def _warm_start_fast(cfg, seeder, target, stats) -> Params:
    F = cfg.true_params.F
    if cfg["mcmc.warm_start"] == "eki":
        ecfg = EKIConfig(M=cfg["eki.M"], n_max=cfg["eki.n_max"],
                         perturb=cfg["eki.perturb"], seed=seeder.seed("fast/warm-eki"))
        rec = run_eki(ecfg, target, cfg.priors, stats.final_state,
                      integrator=cfg.integrator, truth=cfg.true_params, fixed_F=F)
        h, c, b = rec.final.mean
        return Params(F, h, c, b)
    draw = sample_prior(cfg.priors, seeder.rng("fast/init"))
    return Params(F, draw.h, draw.c, draw.b)


def _chain_outputs(cfg, out, chain: Chain, fixed_F: float | None = None):
    """chain.csv + per-parameter histograms + summary.json; returns filenames."""
    rows = []
    for i in range(chain.theta.shape[0]):
        vals = dict(zip(chain.names, chain.theta[i]))
        full = [vals.get(n, fixed_F) for n in PARAMS]
        rows.append([i + 1, *full, chain.U[i], bool(chain.accepted[i])])
    _write_csv(out / "chain.csv", ["iter", *PARAMS, "U", "accepted"], rows)
    names = ["chain.csv"]

    hists = estimate_posterior_pdf(chain, cfg["hist.bins"])
    modes = {}
    for name, (edges, masses) in hists.items():
        fname = f"hist_{name}.csv"
        _write_csv(out / fname, ["bin_lo", "bin_hi", "mass"],
                   [[edges[i], edges[i + 1], masses[i]] for i in range(len(masses))])
        names.append(fname)
        peak = int(np.argmax(masses))
        modes[name] = 0.5 * (edges[peak] + edges[peak + 1])

    thinned = chain.thinned()
    mean = thinned.mean(axis=0)
    std = thinned.std(axis=0)
    q05, q95 = np.percentile(thinned, [5.0, 95.0], axis=0)
    summary = {
        "names": list(chain.names),
        "acceptance_rate": chain.acceptance_rate,
        "n_samples": int(chain.theta.shape[0]),
        "n_retained": int(chain.retained().shape[0]),
        "n_thinned": int(thinned.shape[0]),
        "mean": mean.tolist(),
        "std": std.tolist(),
        "normalized_spread": (std / np.abs(mean)).tolist(),
        "q05": q05.tolist(),
        "q95": q95.tolist(),
        "mode": [modes[n] for n in chain.names],
    }
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    names.append("summary.json")
    return names, summary


def cmd_mcmc(cfg: ExperimentConfig, out) -> int:
    out, seeder, manifest, t0 = _prepare(cfg, "mcmc", out)
    target, stats = build_full_target(cfg, seeder)
    init = _warm_start_full(cfg, seeder, target, stats)
    mcfg = MCMCConfig(n_iter=cfg["mcmc.n_iter"], burn_in=cfg["mcmc.burn_in"],
                      thin=cfg["mcmc.thin"], scale_factor=cfg["mcmc.scale_factor"],
                      adapt=cfg["mcmc.adapt"], seed=seeder.seed("mcmc/chain"))
    chain = run_mcmc(mcfg, target, cfg.priors, init,
                     integrator=cfg.integrator, init_state=stats.final_state)
    names, summary = _chain_outputs(cfg, out, chain)
    manifest.sub_seeds = dict(seeder.used)
    _finish(manifest, out, names, t0)
    print(f"mcmc: acceptance {summary['acceptance_rate']:.2f}, "
          f"posterior mean ({', '.join(f'{v:.3f}' for v in summary['mean'])}) -> {out}")
    return 0


def cmd_fast(cfg: ExperimentConfig, out) -> int:
    out, seeder, manifest, t0 = _prepare(cfg, "fast", out)
    target, stats = build_fast_target(cfg, seeder)
    init = _warm_start_fast(cfg, seeder, target, stats)
    mcfg = MCMCConfig(n_iter=cfg["mcmc.n_iter"], burn_in=cfg["mcmc.burn_in"],
                      thin=cfg["mcmc.thin"], scale_factor=cfg["mcmc.scale_factor"],
                      adapt=cfg["mcmc.adapt"], seed=seeder.seed("fast/chain"))
    chain = run_mcmc(mcfg, target, cfg.priors, init,
                     integrator=cfg.integrator, init_state=stats.final_state)
    names, summary = _chain_outputs(cfg, out, chain, fixed_F=init.F)
    manifest.sub_seeds = dict(seeder.used)
    _finish(manifest, out, names, t0)
    print(f"fast: acceptance {summary['acceptance_rate']:.2f}, "
          f"posterior mean ({', '.join(f'{v:.3f}' for v in summary['mean'])}) -> {out}")
    return 0


# ---------------------------------------------------------------------------
# validate


def cmd_validate(cfg: ExperimentConfig, out) -> int:
    out, seeder, manifest, t0 = _prepare(cfg, "validate", out)
    results = run_all(cfg)
    lines = [res.line() for res in results]
    with open(out / "validate_report.txt", "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    manifest.sub_seeds = dict(seeder.used)
    _finish(manifest, out, ["validate_report.txt"], t0)
    for line in lines:
        print(line)
    return 0 if all(r.passed for r in results) else 2


COMMANDS = {
    "simulate": cmd_simulate,
    "scan": cmd_scan,
    "eki": cmd_eki,
    "mcmc": cmd_mcmc,
    "fast": cmd_fast,
    "validate": cmd_validate,
}
