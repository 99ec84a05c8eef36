"""Adaptive, delayed-acceptance (pseudo-marginal) MCMC with a KD-tree
k-nearest-neighbour surrogate posterior."""

from .kdtree import (
    KdTree,
    TreeEntry,
    TreeStats,
    merge_pm,
    merge_keep_existing,
    median_split_error_prob,
    save_entries,
    load_entries,
)
from .surrogate import (
    WhiteningTransform,
    SurrogateConfig,
    fit_whitening,
    merge_radius,
    p_keep_bounds,
    estimate_log_posterior,
    expected_neighbours,
    save_whitening,
    load_whitening,
)
from .kernels import (
    ExactTarget,
    StochasticTarget,
    ProposalSpec,
    MixtureSchedule,
    ChainState,
    Trace,
    PilotResult,
    rwm_propose,
    mh_accept_prob,
    stage1_accept_prob,
    stage2_accept_prob,
    psm_accept_prob,
    stage2_psm_accept_prob,
    adaptation_prob,
    choose_beta,
    run_da_mh,
    run_da_psmmh,
    pilot_run,
)
from .harness import (
    RunConfig,
    Diagnostics,
    ess,
    multi_ess,
    summarize,
    run_experiment,
    sweep,
)
from . import models

__version__ = "0.1.0"
