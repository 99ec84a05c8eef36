"""Exact stochastic simulation of reaction networks (Gillespie's direct
method) and the Gaussian observation model."""

from __future__ import annotations

import numpy as np

from .networks import ReactionNetwork

__all__ = ["gillespie_simulate", "gillespie_advance", "corrupt_observations"]


def gillespie_simulate(
    net: ReactionNetwork,
    x0,
    nu,
    t_end: float,
    record_times,
    rng: np.random.Generator,
) -> np.ndarray:
    """Simulate one exact path and record the state at the requested times.

    Waiting times are exponential with the total hazard as rate; the
    reaction is picked proportionally to its hazard.  Recorded values are
    right-continuous (the state at time t includes any jump at t).  A state
    with zero total hazard is absorbing: it is held until ``t_end``.
    """
    record_times = np.asarray(record_times, dtype=float)
    out = np.empty((len(record_times), net.n_species))
    x = np.array(x0, dtype=float)
    h = net.hazards(x, nu)
    if not np.all(np.isfinite(h)):
        raise ValueError("hazards are not finite at the initial state")
    S = net.stoichiometry
    t = 0.0
    ri = 0
    n_rec = len(record_times)
    while True:
        total = h.sum()
        if total <= 0.0:
            t_next = np.inf  # absorbing state
        else:
            t_next = t + rng.exponential(1.0 / total)
        while ri < n_rec and record_times[ri] < t_next:
            out[ri] = x
            ri += 1
        if ri >= n_rec or t_next > t_end:
            # any remaining record times are beyond t_end; hold the state
            while ri < n_rec:
                out[ri] = x
                ri += 1
            return out
        j = np.searchsorted(np.cumsum(h), rng.random() * total)
        x = x + S[:, j]
        t = t_next
        h = net.hazards(x, nu)


def gillespie_advance(
    net: ReactionNetwork,
    x,
    nu,
    t0: float,
    t1: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Advance a single state from t0 to t1 without recording."""
    x = np.array(x, dtype=float)
    S = net.stoichiometry
    hazards = net.hazards
    t = t0
    while True:
        h = hazards(x, nu)
        total = h.sum()
        if total <= 0.0:
            return x
        t = t + rng.exponential(1.0 / total)
        if t > t1:
            return x
        j = np.searchsorted(np.cumsum(h), rng.random() * total)
        x = x + S[:, j]


def corrupt_observations(skeleton: np.ndarray, D, rng: np.random.Generator) -> np.ndarray:
    """Add independent Gaussian noise with diagonal covariance ``D`` (given
    as the vector of per-species variances) to each recorded state."""
    skeleton = np.asarray(skeleton, dtype=float)
    D = np.asarray(D, dtype=float)
    if np.any(D < 0):
        raise ValueError("observation variances must be non-negative")
    return skeleton + rng.standard_normal(skeleton.shape) * np.sqrt(D)
