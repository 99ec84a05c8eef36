"""Metropolis-Hastings kernels: plain, pseudo-marginal, and their adaptive
delayed-acceptance versions backed by the KD-tree surrogate.

One driver implements all four samplers.  Per iteration it either applies the
fixed random-walk kernel (probability ``beta``), which always evaluates the
expensive posterior, or the delayed-acceptance kernel, which screens the
proposal against the k-NN surrogate first and evaluates the expensive
posterior only for proposals that survive the screen.  Every expensive value
is queued, and the queue is flushed into the tree with probability
``p_i = (1 + c i)^{-1}`` after the i-th expensive evaluation, so adaptation
diminishes over the run.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .kdtree import KdTree, TreeEntry, merge_keep_existing, merge_pm
from .surrogate import (
    SurrogateConfig,
    WhiteningTransform,
    estimate_log_posterior,
    fit_whitening,
)

__all__ = [
    "ExactTarget",
    "StochasticTarget",
    "ProposalSpec",
    "MixtureSchedule",
    "ChainState",
    "Trace",
    "PilotResult",
    "rwm_propose",
    "mh_accept_prob",
    "stage1_accept_prob",
    "stage2_accept_prob",
    "psm_accept_prob",
    "stage2_psm_accept_prob",
    "adaptation_prob",
    "choose_beta",
    "default_lambda",
    "run_da_mh",
    "run_da_psmmh",
    "pilot_run",
]

BRANCH_FIXED = 0
BRANCH_DA = 1


@dataclass(frozen=True)
class ExactTarget:
    """Expensive posterior with an exactly computable log density."""

    log_density: Callable[[np.ndarray], float]
    dim: int
    log_prior: Callable[[np.ndarray], float] | None = None


@dataclass(frozen=True)
class StochasticTarget:
    """Expensive posterior known only through a non-negative unbiased
    estimator; ``estimator(theta, rng)`` returns one log-scale realisation."""

    estimator: Callable[[np.ndarray, np.random.Generator], float]
    dim: int
    log_prior: Callable[[np.ndarray], float] | None = None


@dataclass
class ProposalSpec:
    """Gaussian random-walk proposal: N(theta, V) for the fixed kernel and
    N(theta, xi^2 V) for the delayed-acceptance kernel."""

    V: np.ndarray
    xi: float = 1.0

    def __post_init__(self):
        self.V = np.asarray(self.V, dtype=float)
        if self.V.ndim != 2 or self.V.shape[0] != self.V.shape[1]:
            raise ValueError("V must be a square matrix")
        if self.xi <= 0:
            raise ValueError("xi must be > 0")
        self.chol = np.linalg.cholesky(self.V)

    @property
    def dim(self) -> int:
        return self.V.shape[0]


@dataclass
class MixtureSchedule:
    """Kernel mixture weight and the adaptation schedule.

    ``beta`` is the probability of the fixed kernel (1.0 gives a plain,
    non-DA run).  ``c`` controls the adaptation rate ``p_i = (1 + c i)^{-1}``
    with ``c = inf`` meaning no adaptation.  ``mode='every-other'`` selects
    the alternating schedule p_even=1, p_odd=0 (available for
    experimentation; the default diminishing schedule is the supported one).
    ``pending`` holds (psi, log value) pairs awaiting transfer to the tree.
    """

    beta: float
    c: float = 0.001
    kappa: float | None = None
    mode: str = "reciprocal"
    pending: list = field(default_factory=list)

    def __post_init__(self):
        if not 0.0 < self.beta <= 1.0:
            raise ValueError("beta must lie in (0, 1]")
        if self.c < 0:
            raise ValueError("c must be >= 0 (inf allowed)")
        if self.mode not in ("reciprocal", "every-other"):
            raise ValueError(f"unknown adaptation mode {self.mode!r}")

    def adapt_prob(self, i: int) -> float:
        if self.mode == "every-other":
            return 1.0 if i % 2 == 0 else 0.0
        return adaptation_prob(i, self.c)


@dataclass
class ChainState:
    """Current chain position with its carried log values."""

    theta: np.ndarray
    psi: np.ndarray
    log_expensive: float
    log_cheap: float | None = None
    i: int = 0


# ----------------------------------------------------------------------
# acceptance probabilities

def mh_accept_prob(log_p, log_p_star, log_q_rev=0.0, log_q_fwd=0.0) -> float:
    """Metropolis-Hastings acceptance probability, computed on the log
    scale.  ``log_q_rev`` is log q(theta | theta*) and ``log_q_fwd`` is
    log q(theta* | theta)."""
    if log_p == -math.inf and log_p_star == -math.inf:
        raise ValueError("both log densities are -inf (chain outside support)")
    if log_p_star == -math.inf:
        return 0.0
    if log_p == -math.inf:
        return 1.0
    log_ratio = (log_p_star + log_q_rev) - (log_p + log_q_fwd)
    return math.exp(min(0.0, log_ratio))


def stage1_accept_prob(log_c, log_c_star, log_q_ratio=0.0) -> float:
    """Stage-1 screen: the MH formula with the cheap surrogate substituted.
    ``log_q_ratio`` is log q(theta | theta*) - log q(theta* | theta)."""
    if log_c == -math.inf and log_c_star == -math.inf:
        raise ValueError("both surrogate values are -inf")
    if log_c_star == -math.inf:
        return 0.0
    if log_c == -math.inf:
        return 1.0
    return math.exp(min(0.0, log_c_star - log_c + log_q_ratio))


def stage2_accept_prob(log_p, log_p_star, log_c, log_c_star) -> float:
    """Stage-2 correction restoring detailed balance with respect to the
    expensive posterior: 1 ^ [p(theta*) c(theta)] / [p(theta) c(theta*)]."""
    for v in (log_p, log_p_star, log_c, log_c_star):
        if not math.isfinite(v):
            raise ValueError("stage-2 requires finite log values")
    return math.exp(min(0.0, (log_p_star - log_p) + (log_c - log_c_star)))


def psm_accept_prob(log_s, log_s_star, log_q_rev=0.0, log_q_fwd=0.0) -> float:
    """Pseudo-marginal acceptance: the MH formula on stored estimator
    realisations.  The current state's realisation is reused, never
    re-simulated."""
    return mh_accept_prob(log_s, log_s_star, log_q_rev, log_q_fwd)


def stage2_psm_accept_prob(log_s, log_s_star, log_c, log_c_star) -> float:
    """Stage-2 correction with the unbiased estimate in place of the exact
    posterior."""
    return stage2_accept_prob(log_s, log_s_star, log_c, log_c_star)


def adaptation_prob(i: int, c: float) -> float:
    """Probability of flushing the pending queue after the i-th expensive
    evaluation: ``(1 + c i)^{-1}``; ``c = inf`` encodes never adapting."""
    if i < 0:
        raise ValueError("i must be >= 0")
    if c < 0:
        raise ValueError("c must be >= 0")
    if math.isinf(c):
        return 0.0
    return 1.0 / (1.0 + c * i)


def choose_beta(alpha1_hat: float, beta_ref: float, alpha1_new: float) -> float:
    """Rescale the fixed-kernel probability in proportion to the observed
    Stage-1 acceptance rate: ``beta_ref * alpha1_new / alpha1_hat``."""
    if alpha1_hat <= 0.0:
        raise ValueError("reference stage-1 rate must be positive")
    if not (0.0 < alpha1_hat <= 1.0 and 0.0 < alpha1_new <= 1.0):
        raise ValueError("stage-1 rates must lie in (0, 1]")
    beta = beta_ref * alpha1_new / alpha1_hat
    return min(max(beta, 1e-12), 1.0 - 1e-12)


def default_lambda(d: int) -> float:
    """Proposal-variance scaling 2.38^2 / d used for exact-likelihood runs."""
    return 2.38**2 / d


def rwm_propose(theta: np.ndarray, spec: ProposalSpec, which: str, rng: np.random.Generator) -> np.ndarray:
    """Draw a random-walk proposal from the fixed kernel (``which='fixed'``,
    covariance V) or the DA kernel (``which='da'``, covariance xi^2 V)."""
    theta = np.asarray(theta, dtype=float)
    step = spec.chol @ rng.standard_normal(spec.dim)
    if which == "fixed":
        return theta + step
    if which == "da":
        return theta + spec.xi * step
    raise ValueError(f"which must be 'fixed' or 'da', got {which!r}")


# ----------------------------------------------------------------------
# trace

class Trace:
    """Per-iteration record of a run.

    Columns: current theta, branch taken (fixed/da), stage reached
    (0 for the fixed kernel, 1 or 2 for DA), acceptance flag, cumulative
    expensive-evaluation count, and the carried log values (log_cheap is
    NaN when no surrogate value is cached for the current state).
    """

    def __init__(self, thetas, branch, stage, accepted, i_n, log_expensive, log_cheap, meta=None):
        self.thetas = np.asarray(thetas, dtype=float)
        self.branch = np.asarray(branch, dtype=np.int8)
        self.stage = np.asarray(stage, dtype=np.int8)
        self.accepted = np.asarray(accepted, dtype=bool)
        self.i_n = np.asarray(i_n, dtype=np.int64)
        self.log_expensive = np.asarray(log_expensive, dtype=float)
        self.log_cheap = np.asarray(log_cheap, dtype=float)
        self.meta = dict(meta or {})

    def __len__(self) -> int:
        return len(self.branch)

    @property
    def d(self) -> int:
        return self.thetas.shape[1]

    def write_csv(self, path) -> None:
        d = self.d
        names = {BRANCH_FIXED: "fixed", BRANCH_DA: "da"}
        with open(path, "w") as fh:
            cols = ["iter", "branch", "stage", "accepted", "i_n", "log_expensive", "log_cheap"]
            cols += [f"theta_{j + 1}" for j in range(d)]
            fh.write(",".join(cols) + "\n")
            for t in range(len(self)):
                row = [
                    str(t + 1),
                    names[int(self.branch[t])],
                    str(int(self.stage[t])),
                    str(int(self.accepted[t])),
                    str(int(self.i_n[t])),
                    repr(float(self.log_expensive[t])),
                    repr(float(self.log_cheap[t])),
                ]
                row += [repr(float(x)) for x in self.thetas[t]]
                fh.write(",".join(row) + "\n")

    @classmethod
    def read_csv(cls, path) -> "Trace":
        codes = {"fixed": BRANCH_FIXED, "da": BRANCH_DA}
        branch, stage, accepted, i_n, le, lc, thetas = [], [], [], [], [], [], []
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            if header[:7] != ["iter", "branch", "stage", "accepted", "i_n", "log_expensive", "log_cheap"]:
                raise ValueError(f"unexpected trace header in {path}")
            for line in fh:
                parts = line.strip().split(",")
                if not parts or parts == [""]:
                    continue
                branch.append(codes[parts[1]])
                stage.append(int(parts[2]))
                accepted.append(bool(int(parts[3])))
                i_n.append(int(parts[4]))
                le.append(float(parts[5]))
                lc.append(float(parts[6]))
                thetas.append([float(x) for x in parts[7:]])
        return cls(np.array(thetas), branch, stage, accepted, i_n, le, lc)


# ----------------------------------------------------------------------
# driver

def run_da_mh(
    target: ExactTarget,
    tree: KdTree,
    transform: WhiteningTransform,
    spec: ProposalSpec,
    schedule: MixtureSchedule,
    surrogate_cfg: SurrogateConfig,
    n_iters: int,
    rng: np.random.Generator,
    theta0: np.ndarray,
    log0: float | None = None,
    max_expensive: int | None = None,
    deadline: float | None = None,
) -> Trace:
    """Adaptive delayed-acceptance MH with an exact expensive posterior.
    With ``beta = 1`` this is a plain MH run (the tree still accumulates
    evaluations through the adaptation schedule)."""
    return _run_chain(
        target, tree, transform, spec, schedule, surrogate_cfg, n_iters, rng,
        theta0, log0, stochastic=False, max_expensive=max_expensive, deadline=deadline,
    )


def run_da_psmmh(
    target: StochasticTarget,
    tree: KdTree,
    transform: WhiteningTransform,
    spec: ProposalSpec,
    schedule: MixtureSchedule,
    surrogate_cfg: SurrogateConfig,
    n_iters: int,
    rng: np.random.Generator,
    theta0: np.ndarray,
    log0: float | None = None,
    max_expensive: int | None = None,
    deadline: float | None = None,
) -> Trace:
    """Adaptive delayed-acceptance pseudo-marginal MH.  Identical control
    flow with estimator realisations substituted for exact values; the tree
    stores the realisations, folded together by the running-mean merge."""
    return _run_chain(
        target, tree, transform, spec, schedule, surrogate_cfg, n_iters, rng,
        theta0, log0, stochastic=True, max_expensive=max_expensive, deadline=deadline,
    )


def _run_chain(
    target, tree, transform, spec, schedule, cfg, n_iters, rng,
    theta0, log0, stochastic, max_expensive, deadline,
):
    d = spec.dim
    if stochastic:
        estimator = target.estimator

        def evaluate(th):
            return float(estimator(th, rng))
    else:
        log_density = target.log_density

        def evaluate(th):
            return float(log_density(th))

    log_prior = target.log_prior
    merge = merge_pm if stochastic else merge_keep_existing
    chol = spec.chol
    xi = spec.xi
    beta = schedule.beta
    k = cfg.k
    epsilon = cfg.epsilon
    exponent = cfg.exponent
    neg_inf = -math.inf

    theta = np.array(theta0, dtype=float)
    if theta.shape != (d,):
        raise ValueError(f"theta0 has shape {theta.shape}, expected ({d},)")
    psi = transform.whiten(theta)
    lp = float(log0) if log0 is not None else evaluate(theta)
    if not np.isfinite(lp):
        raise ValueError("chain started at a point with non-finite log value")
    lc: float | None = None
    i_n = 0
    pending = schedule.pending

    thetas = np.empty((n_iters, d))
    branch_a = np.empty(n_iters, dtype=np.int8)
    stage_a = np.empty(n_iters, dtype=np.int8)
    accepted_a = np.empty(n_iters, dtype=bool)
    i_a = np.empty(n_iters, dtype=np.int64)
    le_a = np.empty(n_iters)
    lc_a = np.empty(n_iters)

    filled = 0
    for t in range(n_iters):
        if max_expensive is not None and i_n >= max_expensive:
            break
        if deadline is not None and time.monotonic() >= deadline:
            break
        use_fixed = rng.random() < beta
        # the DA kernel needs at least k stored entries for the surrogate;
        # until then fall back to the fixed kernel for the iteration
        if not use_fixed and tree.entry_count < k:
            use_fixed = True
        step = chol @ rng.standard_normal(d)
        expensive = False
        accept = False
        if use_fixed:
            branch = BRANCH_FIXED
            stage = 0
            th_star = theta + step
            lp_star = evaluate(th_star)
            expensive = True
            i_n += 1
            psi_star = None
            if lp_star > neg_inf:
                psi_star = transform.whiten(th_star)
                pending.append((psi_star, lp_star))
                if rng.random() < math.exp(min(0.0, lp_star - lp)):
                    accept = True
                    theta = th_star
                    psi = psi_star
                    lp = lp_star
                    lc = None
        else:
            branch = BRANCH_DA
            stage = 1
            th_star = theta + xi * step
            if log_prior is not None and log_prior(th_star) == neg_inf:
                pass  # outside the prior support: stage-1 rejection, no work
            else:
                psi_star = transform.whiten(th_star)
                lc_star = estimate_log_posterior(tree, psi_star, k, exponent)
                if lc is None:
                    lc = estimate_log_posterior(tree, psi, k, exponent)
                if rng.random() < math.exp(min(0.0, lc_star - lc)):
                    stage = 2
                    lp_star = evaluate(th_star)
                    expensive = True
                    i_n += 1
                    if lp_star > neg_inf:
                        pending.append((psi_star, lp_star))
                        log_a2 = (lp_star - lp) + (lc - lc_star)
                        if rng.random() < math.exp(min(0.0, log_a2)):
                            accept = True
                            theta = th_star
                            psi = psi_star
                            lp = lp_star
                            lc = lc_star
        if expensive and rng.random() < schedule.adapt_prob(i_n):
            for psi_p, val in pending:
                tree.insert_or_merge(TreeEntry(psi_p, val), epsilon, merge)
            pending.clear()
            lc = None  # surrogate values are stale once the tree changes

        thetas[t] = theta
        branch_a[t] = branch
        stage_a[t] = stage
        accepted_a[t] = accept
        i_a[t] = i_n
        le_a[t] = lp
        lc_a[t] = math.nan if lc is None else lc
        filled = t + 1

    n = filled
    return Trace(
        thetas[:n], branch_a[:n], stage_a[:n], accepted_a[:n],
        i_a[:n], le_a[:n], lc_a[:n],
        meta={
            "beta": schedule.beta, "xi": spec.xi, "c": schedule.c,
            "k": cfg.k, "epsilon": cfg.epsilon, "b": tree.b,
            "n_iters": n_iters, "stochastic": stochastic,
        },
    )


# ----------------------------------------------------------------------
# pilot run

@dataclass
class PilotResult:
    """Everything the main run needs from the preliminary fixed-kernel run."""

    samples: np.ndarray        # chain states, one row per pilot iteration
    proposals: np.ndarray      # proposal points with finite evaluations
    log_values: np.ndarray     # their expensive log values
    transform: WhiteningTransform
    v_fixed: np.ndarray
    alpha_ref: float
    tree: KdTree
    theta_last: np.ndarray
    log_last: float


def pilot_run(
    target,
    spec: ProposalSpec,
    n_pilot: int,
    rng: np.random.Generator,
    theta0: np.ndarray,
    *,
    stochastic: bool = False,
    lam: float | None = None,
    b: int = 10,
    tree_seed: int | None = None,
    log0: float | None = None,
) -> PilotResult:
    """Preliminary run of the fixed kernel.

    Fits the whitening transform from the chain states, reports the tuned
    main-run proposal variance ``V_fixed = lam * Sigma_hat`` (default
    ``lam = 2.38^2 / d``), seeds a balanced tree from the whitened proposal
    evaluations, and returns the pilot acceptance rate as the reference rate
    for beta tuning.
    """
    d = spec.dim
    if n_pilot <= 10 * d:
        raise ValueError(f"n_pilot must exceed 10 d = {10 * d}")
    if stochastic:
        def evaluate(th):
            return float(target.estimator(th, rng))
    else:
        def evaluate(th):
            return float(target.log_density(th))

    theta = np.array(theta0, dtype=float)
    lp = float(log0) if log0 is not None else evaluate(theta)
    if not np.isfinite(lp):
        raise ValueError("pilot started at a point with non-finite log value")
    chol = spec.chol
    samples = np.empty((n_pilot, d))
    prop_list = []
    val_list = []
    accepts = 0
    for j in range(n_pilot):
        th_star = theta + chol @ rng.standard_normal(d)
        lp_star = evaluate(th_star)
        if lp_star > -math.inf:
            prop_list.append(th_star)
            val_list.append(lp_star)
            if rng.random() < math.exp(min(0.0, lp_star - lp)):
                theta = th_star
                lp = lp_star
                accepts += 1
        samples[j] = theta

    transform = fit_whitening(samples)
    sigma_hat = np.cov(samples, rowvar=False, ddof=1).reshape(d, d)
    if lam is None:
        lam = default_lambda(d)
    v_fixed = lam * sigma_hat
    proposals = np.array(prop_list)
    log_values = np.array(val_list)
    if tree_seed is None:
        tree_seed = int(rng.integers(2**31 - 1))
    entries = [
        TreeEntry(transform.whiten(p), float(v))
        for p, v in zip(proposals, log_values)
    ]
    tree = KdTree.build_balanced(entries, d, b=b, seed=tree_seed)
    return PilotResult(
        samples=samples,
        proposals=proposals,
        log_values=log_values,
        transform=transform,
        v_fixed=v_fixed,
        alpha_ref=accepts / n_pilot,
        tree=tree,
        theta_last=theta,
        log_last=lp,
    )
