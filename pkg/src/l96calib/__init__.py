"""Calibration of the two-scale Lorenz-96 model by matching time-averaged
statistics, with random-walk Metropolis MCMC and ensemble Kalman inversion."""

__version__ = "0.1.0"

from .dynamics import (
    BlowUpError,
    IntegratorConfig,
    ModelState,
    Params,
    ShapeError,
    SystemShape,
)
from .statistics import MomentLayout, RunningAverage, moment_f, moment_g
from .objective import CalibrationTarget, NoiseModel, potential_energy, weighted_misfit
from .priors import ParamSpace, PriorSet, PriorSpec, default_priors
from .calibrate import (
    Chain,
    EKIConfig,
    EnsembleRecord,
    MCMCConfig,
    eki_update,
    error_norm,
    estimate_posterior_pdf,
    run_eki,
    run_mcmc,
)

__all__ = [
    "BlowUpError", "IntegratorConfig", "ModelState", "Params", "ShapeError",
    "SystemShape", "MomentLayout", "RunningAverage", "moment_f", "moment_g",
    "CalibrationTarget", "NoiseModel", "potential_energy", "weighted_misfit",
    "ParamSpace", "PriorSet", "PriorSpec", "default_priors", "Chain",
    "EKIConfig", "EnsembleRecord", "MCMCConfig", "eki_update", "error_norm",
    "estimate_posterior_pdf", "run_eki", "run_mcmc", "__version__",
]
