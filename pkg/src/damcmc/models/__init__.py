"""Benchmark models: reaction networks, exact simulation, particle filter,
and the linear noise approximation."""

from .networks import (
    ReactionNetwork,
    lv_hazards,
    ar_hazards,
    lotka_volterra,
    autoregulatory,
    log_prior,
    LV_X0,
    LV_TRUE_NU,
    LV_SIGMA,
    AR_X0,
    AR_K,
    AR_TRUE_NU,
    AR_SIGMA,
)
from .gillespie import gillespie_simulate, gillespie_advance, corrupt_observations
from .data import (
    ObservationModel,
    Dataset,
    save_dataset,
    load_dataset,
    simulate_lv_dataset,
    simulate_ar_dataset,
    simulate_dataset,
)
from .pf import ParticleFilterConfig, particle_filter_loglik, bootstrap_pf_loglik
from .ode import IntegrationError, rkf45_integrate
from .lna import LnaState, lna_ode_rhs, lna_marginal_loglik, lna_simulate
from .targets import (
    LV_LAMBDA,
    AR_LAMBDA,
    make_lv_psm_target,
    make_ar_lna_target,
    ar_true_theta,
    lv_true_theta,
)

__all__ = [
    "ReactionNetwork",
    "lv_hazards",
    "ar_hazards",
    "lotka_volterra",
    "autoregulatory",
    "log_prior",
    "LV_X0",
    "LV_TRUE_NU",
    "LV_SIGMA",
    "AR_X0",
    "AR_K",
    "AR_TRUE_NU",
    "AR_SIGMA",
    "gillespie_simulate",
    "gillespie_advance",
    "corrupt_observations",
    "ObservationModel",
    "Dataset",
    "save_dataset",
    "load_dataset",
    "simulate_lv_dataset",
    "simulate_ar_dataset",
    "simulate_dataset",
    "ParticleFilterConfig",
    "particle_filter_loglik",
    "bootstrap_pf_loglik",
    "IntegrationError",
    "rkf45_integrate",
    "LnaState",
    "lna_ode_rhs",
    "lna_marginal_loglik",
    "lna_simulate",
    "LV_LAMBDA",
    "AR_LAMBDA",
    "make_lv_psm_target",
    "make_ar_lna_target",
    "ar_true_theta",
    "lv_true_theta",
]
