"""Posterior targets for the two benchmark models.

Samplers work on the log-parameter vector throughout; the targets
exponentiate on entry, apply the uniform log-parameter prior, and add the
model's marginal log likelihood (exact for the LNA model, one particle
filter realisation for the jump process).
"""

from __future__ import annotations

import math
import warnings

import numpy as np

from ..kernels import ExactTarget, StochasticTarget
from . import networks as nw
from .lna import lna_marginal_loglik
from .ode import IntegrationError
from .pf import bootstrap_pf_loglik

__all__ = ["LV_LAMBDA", "AR_LAMBDA", "make_lv_psm_target", "make_ar_lna_target"]

# proposal-variance scalings tuned for the fixed kernels of the two models
LV_LAMBDA = 1.1 * 2.56**2 / 5
AR_LAMBDA = 2.38**2 / 10


def make_lv_psm_target(dataset, m: int = 200, x0=None, resampling: str = "multinomial") -> StochasticTarget:
    """Pseudo-marginal target for the predator-prey model.

    theta = (log nu_1..3, log sigma_1, log sigma_2); the estimator runs a
    bootstrap particle filter with ``m`` particles.
    """
    net = nw.lotka_volterra()
    if x0 is None:
        x0 = nw.LV_X0

    def estimator(theta, rng):
        lp = nw.log_prior(theta)
        if lp == -math.inf:
            return -math.inf
        nu = np.exp(theta[:3])
        D = np.exp(theta[3:5]) ** 2
        ll = bootstrap_pf_loglik(net, dataset, nu, D, x0, m, rng, resampling)
        return ll + lp

    return StochasticTarget(estimator, dim=5, log_prior=nw.log_prior)


def make_ar_lna_target(dataset, x0=None, K: float = nw.AR_K, rtol: float = 1e-6, atol: float = 1e-8) -> ExactTarget:
    """Exact LNA posterior for the autoregulatory model.

    theta = (log nu_2, log nu_3, log nu_4, log nu_6, log nu_7, log nu_8,
    log sigma_1..4); the reversible-reaction rates nu_1 and nu_5 are held at
    their ground-truth values.  An ODE integration failure is scored -inf
    with a warning.
    """
    net = nw.autoregulatory(K)
    if x0 is None:
        x0 = nw.AR_X0
    nu1 = nw.AR_TRUE_NU[0]
    nu5 = nw.AR_TRUE_NU[4]

    def log_density(theta):
        lp = nw.log_prior(theta)
        if lp == -math.inf:
            return -math.inf
        r = np.exp(theta[:6])
        nu = np.array([nu1, r[0], r[1], r[2], nu5, r[3], r[4], r[5]])
        D = np.exp(theta[6:10]) ** 2
        try:
            ll = lna_marginal_loglik(net, dataset, nu, D, x0, rtol, atol)
        except IntegrationError as err:
            warnings.warn(f"LNA integration failed, scoring -inf: {err}")
            return -math.inf
        return ll + lp

    return ExactTarget(log_density, dim=10, log_prior=nw.log_prior)


def ar_true_theta() -> np.ndarray:
    """Ground-truth log-parameter vector for the autoregulatory target."""
    free = [nw.AR_TRUE_NU[i] for i in (1, 2, 3, 5, 6, 7)]
    return np.log(np.concatenate([free, nw.AR_SIGMA]))


def lv_true_theta() -> np.ndarray:
    """Ground-truth log-parameter vector for the predator-prey target."""
    return np.log(np.concatenate([nw.LV_TRUE_NU, nw.LV_SIGMA]))
