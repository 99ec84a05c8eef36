"""Benchmark reaction networks and the shared log-parameter prior.

Two mass-action systems: a predator-prey (Lotka-Volterra) Markov jump
process, and an autoregulatory gene network in which the free and bound DNA
copies sum to a conserved total K.  Inference always works on the logarithms
of the positive parameters, with independent U(-8, 8) priors per component.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "ReactionNetwork",
    "lv_hazards",
    "lv_hazard_jacobian",
    "ar_hazards",
    "ar_hazard_jacobian",
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
    "AR_FIXED",
]

# ground-truth simulation settings for the shipped datasets
LV_X0 = np.array([71.0, 79.0])
LV_TRUE_NU = np.array([1.0, 0.005, 0.6])
LV_SIGMA = np.array([8.0, 8.0])

AR_X0 = np.array([5.0, 8.0, 8.0, 8.0])
AR_K = 10.0
AR_TRUE_NU = np.array([0.1, 0.7, 0.35, 0.2, 0.1, 0.9, 0.3, 0.1])
AR_SIGMA = np.array([0.5, 0.5, 1.0, 1.0])
AR_FIXED = (0, 4)  # indices of the rate constants held at truth (nu_1, nu_5)


@dataclass(frozen=True)
class ReactionNetwork:
    """A mass-action reaction system.

    ``stoichiometry`` is the p x r net-effect matrix (species by reaction),
    ``hazards(x, nu)`` returns the r non-negative reaction rates, and
    ``hazard_jacobian(x, nu)`` their r x p derivative matrix (hand-derived,
    used by the linear noise approximation).
    """

    name: str
    species: tuple[str, ...]
    stoichiometry: np.ndarray
    hazards: Callable[[np.ndarray, np.ndarray], np.ndarray]
    hazard_jacobian: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    conserved_total: float | None = None
    # optional hand-fused right-hand side over the packed (z, V) vector of
    # the linear noise approximation; must agree with the generic assembly
    lna_rhs_factory: Callable[[np.ndarray], Callable] | None = None

    @property
    def n_species(self) -> int:
        return self.stoichiometry.shape[0]

    @property
    def n_reactions(self) -> int:
        return self.stoichiometry.shape[1]


# ----------------------------------------------------------------------
# Lotka-Volterra: prey X1, predators X2
#   R1: X1 -> 2 X1          (prey reproduction)     rate nu1 X1
#   R2: X1 + X2 -> 2 X2     (predation)             rate nu2 X1 X2
#   R3: X2 -> 0             (predator death)        rate nu3 X2

_LV_S = np.array([
    [1.0, -1.0, 0.0],
    [0.0, 1.0, -1.0],
])


def lv_hazards(x, nu) -> np.ndarray:
    x1, x2 = x
    if x1 < 0 or x2 < 0:
        raise ValueError(f"negative species count {tuple(x)}")
    return np.array([nu[0] * x1, nu[1] * x1 * x2, nu[2] * x2])


def lv_hazard_jacobian(x, nu) -> np.ndarray:
    x1, x2 = x
    return np.array([
        [nu[0], 0.0],
        [nu[1] * x2, nu[1] * x1],
        [0.0, nu[2]],
    ])


def lotka_volterra() -> ReactionNetwork:
    return ReactionNetwork(
        name="lotka-volterra",
        species=("prey", "predator"),
        stoichiometry=_LV_S,
        hazards=lv_hazards,
        hazard_jacobian=lv_hazard_jacobian,
    )


# ----------------------------------------------------------------------
# Autoregulatory network: X1 = free DNA, X2 = RNA, X3 = P, X4 = P2.
# Bound DNA is not tracked explicitly: free + bound = K is conserved.
#   R1: DNA + P2 -> DNA.P2      rate nu1 X1 X4
#   R2: DNA.P2 -> DNA + P2      rate nu2 (K - X1)
#   R3: DNA -> DNA + RNA        rate nu3 X1
#   R4: RNA -> RNA + P          rate nu4 X2
#   R5: 2P -> P2                rate nu5 X3 (X3 - 1) / 2
#   R6: P2 -> 2P                rate nu6 X4
#   R7: RNA -> 0                rate nu7 X2
#   R8: P -> 0                  rate nu8 X3

_AR_S = np.array([
    [-1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0, 0.0],
    [0.0, 0.0, 0.0, 1.0, -2.0, 2.0, 0.0, -1.0],
    [-1.0, 1.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0],
])


def ar_hazards(x, nu, K=AR_K) -> np.ndarray:
    x1, x2, x3, x4 = x
    if x1 < 0 or x2 < 0 or x3 < 0 or x4 < 0:
        raise ValueError(f"negative species count {tuple(x)}")
    if x1 > K:
        raise ValueError(f"free DNA count {x1} exceeds the conserved total {K}")
    return np.array([
        nu[0] * x1 * x4,
        nu[1] * (K - x1),
        nu[2] * x1,
        nu[3] * x2,
        nu[4] * x3 * (x3 - 1.0) / 2.0,
        nu[5] * x4,
        nu[6] * x2,
        nu[7] * x3,
    ])


def ar_hazard_jacobian(x, nu, K=AR_K) -> np.ndarray:
    x1, x2, x3, x4 = x
    J = np.zeros((8, 4))
    J[0, 0] = nu[0] * x4
    J[0, 3] = nu[0] * x1
    J[1, 0] = -nu[1]
    J[2, 0] = nu[2]
    J[3, 1] = nu[3]
    J[4, 2] = nu[4] * (x3 - 0.5)
    J[5, 3] = nu[5]
    J[6, 1] = nu[6]
    J[7, 2] = nu[7]
    return J


def _ar_lna_rhs_factory(K: float):
    def factory(nu):
        n1, n2, n3, n4, n5, n6, n7, n8 = (float(v) for v in nu)
        F = np.zeros((4, 4))
        Q = np.zeros((4, 4))
        F[1, 0] = n3
        F[1, 1] = -n7
        F[2, 1] = n4

        def rhs(t, y):
            z1, z2, z3, z4 = y[:4].tolist()
            V = y[4:].reshape(4, 4)
            h1 = n1 * z1 * z4
            h2 = n2 * (K - z1)
            h3 = n3 * z1
            h4 = n4 * z2
            h5 = 0.5 * n5 * z3 * (z3 - 1.0)
            h6 = n6 * z4
            h7 = n7 * z2
            h8 = n8 * z3
            out = np.empty(20)
            out[0] = h2 - h1
            out[1] = h3 - h7
            out[2] = h4 - 2.0 * h5 + 2.0 * h6 - h8
            out[3] = h2 - h1 + h5 - h6
            # Jacobian of S h and the noise matrix S diag(h) S^T, written out
            F[0, 0] = -n1 * z4 - n2
            F[0, 3] = -n1 * z1
            F[2, 2] = -2.0 * n5 * (z3 - 0.5) - n8
            F[2, 3] = 2.0 * n6
            F[3, 0] = -n1 * z4 - n2
            F[3, 2] = n5 * (z3 - 0.5)
            F[3, 3] = -n1 * z1 - n6
            b12 = h1 + h2
            d56 = h5 + h6
            Q[0, 0] = b12
            Q[0, 3] = b12
            Q[3, 0] = b12
            Q[1, 1] = h3 + h7
            Q[2, 2] = h4 + 4.0 * h5 + 4.0 * h6 + h8
            Q[2, 3] = -2.0 * d56
            Q[3, 2] = -2.0 * d56
            Q[3, 3] = b12 + d56
            A = F @ V
            out[4:] = (A + A.T + Q).ravel()
            return out

        return rhs

    return factory


def autoregulatory(K: float = AR_K) -> ReactionNetwork:
    return ReactionNetwork(
        name="autoregulatory",
        species=("dna", "rna", "p", "p2"),
        stoichiometry=_AR_S,
        hazards=lambda x, nu: ar_hazards(x, nu, K),
        hazard_jacobian=lambda x, nu: ar_hazard_jacobian(x, nu, K),
        conserved_total=K,
        lna_rhs_factory=_ar_lna_rhs_factory(K),
    )


# ----------------------------------------------------------------------

def log_prior(theta, low: float = -8.0, high: float = 8.0) -> float:
    """Independent uniform priors on the log parameters, open interval:
    each component must satisfy low < theta_i < high."""
    theta = np.asarray(theta, dtype=float)
    if np.all((theta > low) & (theta < high)):
        return -theta.size * math.log(high - low)
    return -math.inf
