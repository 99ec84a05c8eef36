"""Linear noise approximation: coupled mean/covariance ODEs, the exact
marginal likelihood recursion, and LNA-based path simulation.

The state distribution is Gaussian, ``X_t ~ N(z_t + m_t, V_t)``, with

    dz/dt = S h(z)
    dm/dt = F m
    dV/dt = V F^T + S diag{h(z)} S^T + F V

where F is the Jacobian of S h(z).  In the filtering recursion the residual
mean m is identically zero, so only (z, V) is integrated.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .networks import ReactionNetwork
from .ode import rkf45_integrate

__all__ = ["LnaState", "lna_ode_rhs", "lna_marginal_loglik", "lna_simulate"]


@dataclass
class LnaState:
    """Mean trajectory, residual mean, and covariance of the LNA."""

    z: np.ndarray
    m: np.ndarray
    V: np.ndarray


def lna_ode_rhs(state: LnaState, nu, net: ReactionNetwork) -> LnaState:
    """Time derivatives of the LNA state at the given point."""
    h = net.hazards(state.z, nu)
    S = net.stoichiometry
    F = S @ net.hazard_jacobian(state.z, nu)
    dz = S @ h
    dm = F @ state.m
    dV = state.V @ F.T + (S * h) @ S.T + F @ state.V
    return LnaState(dz, dm, dV)


def _make_rhs(net, nu):
    if net.lna_rhs_factory is not None:
        return net.lna_rhs_factory(nu)
    p = net.n_species
    S = net.stoichiometry
    hazards = net.hazards
    jac = net.hazard_jacobian

    def rhs(t, y):
        z_ = y[:p]
        V_ = y[p:].reshape(p, p)
        h = hazards(z_, nu)
        F = S @ jac(z_, nu)
        dz = S @ h
        dV = V_ @ F.T + (S * h) @ S.T + F @ V_
        return np.concatenate([dz, dV.ravel()])

    return rhs


def _propagate(net, nu, z, V, t0, t1, rtol, atol, rhs=None):
    """Integrate (z, V) forward from t0 to t1 with m = 0."""
    p = len(z)
    if rhs is None:
        rhs = _make_rhs(net, nu)
    y = rkf45_integrate(rhs, np.concatenate([z, V.ravel()]), t0, t1, rtol, atol)
    z1 = y[:p]
    V1 = y[p:].reshape(p, p)
    return z1, 0.5 * (V1 + V1.T)


def _gauss_logpdf(y, mean, cov) -> float:
    """Multivariate normal log density with the repair policy for marginal
    covariances: on a failed Cholesky, symmetrize and add a trace-scaled
    jitter once; a second failure warns and yields -inf."""
    r = y - mean
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        fixed = 0.5 * (cov + cov.T) + 1e-10 * np.trace(cov) * np.eye(len(mean))
        try:
            L = np.linalg.cholesky(fixed)
        except np.linalg.LinAlgError:
            warnings.warn("forecast covariance is not positive definite; scoring -inf")
            return -math.inf
    w = np.linalg.solve(L, r)
    return float(
        -0.5 * w @ w - np.log(np.diag(L)).sum() - 0.5 * len(mean) * math.log(2.0 * math.pi)
    )


def lna_marginal_loglik(
    net: ReactionNetwork,
    dataset,
    nu,
    D,
    x0,
    rtol: float = 1e-6,
    atol: float = 1e-8,
) -> float:
    """Exact marginal log likelihood of the observations under the LNA with
    Gaussian observation noise.

    The state at the first observation time is fixed at ``x0``, so the first
    term is ``log phi(y_1; x0, Sigma)`` and the filtering posterior starts as
    a point mass (zero covariance).  Each step integrates the LNA from the
    current posterior to the next observation time, scores the one-step
    forecast ``N(z, V + Sigma)``, and applies the Gaussian posterior update.
    """
    times = np.asarray(dataset.times, dtype=float)
    ys = np.asarray(dataset.observations, dtype=float)
    D = np.asarray(D, dtype=float)
    p = net.n_species
    if np.any(D <= 0):
        raise ValueError("observation variances must be positive")
    Sigma = np.diag(D)
    a = np.array(x0, dtype=float)
    C = np.zeros((p, p))
    ll = _gauss_logpdf(ys[0], a, Sigma)
    rhs = _make_rhs(net, nu)
    for t in range(len(times) - 1):
        z, V = _propagate(net, nu, a, C, times[t], times[t + 1], rtol, atol, rhs=rhs)
        ll += _gauss_logpdf(ys[t + 1], z, V + Sigma)
        if ll == -math.inf:
            return -math.inf
        G = np.linalg.solve(V + Sigma, V).T  # V (V + Sigma)^{-1}
        a = z + G @ (ys[t + 1] - z)
        C = V - G @ V
        C = 0.5 * (C + C.T)
    return float(ll)


def lna_simulate(
    net: ReactionNetwork,
    x0,
    nu,
    times,
    rng: np.random.Generator,
    rtol: float = 1e-6,
    atol: float = 1e-8,
) -> np.ndarray:
    """Draw a skeleton path from the LNA transition densities: between
    observation times the LNA is restarted at the sampled state with zero
    covariance and the next state is drawn from N(z, V)."""
    times = np.asarray(times, dtype=float)
    p = net.n_species
    out = np.empty((len(times), p))
    x = np.array(x0, dtype=float)
    out[0] = x
    for t in range(len(times) - 1):
        z, V = _propagate(net, nu, x, np.zeros((p, p)), times[t], times[t + 1], rtol, atol)
        w, U = np.linalg.eigh(0.5 * (V + V.T))
        w = np.clip(w, 0.0, None)
        x = z + (U * np.sqrt(w)) @ rng.standard_normal(p)
        out[t + 1] = x
    return out
