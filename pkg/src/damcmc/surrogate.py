"""Whitening transform, merge-radius calibration, and the k-NN surrogate
log-posterior estimate.

A pilot run supplies a sample mean and covariance; points are mapped to
``psi = Sigma^{-1/2} (theta - mu)`` so that Euclidean distance in the stored
coordinates is a sensible metric.  The merge radius is calibrated so that the
expected number of stored neighbours within ``epsilon`` of a fresh draw from
a standard Gaussian cloud of size ``n`` equals a target value (0.5 in all of
the shipped configurations).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .kdtree import KdTree

__all__ = [
    "WhiteningTransform",
    "SurrogateConfig",
    "fit_whitening",
    "merge_radius",
    "p_keep_bounds",
    "estimate_log_posterior",
    "expected_neighbours",
    "chi2_cdf",
    "chi2_quantile",
    "save_whitening",
    "load_whitening",
]


@dataclass(frozen=True)
class WhiteningTransform:
    """Affine map ``theta -> psi`` fixed after the pilot run.

    ``inv_sqrt`` is the inverse symmetric square root of the pilot sample
    covariance and ``sqrt`` its inverse, kept for the reverse map.  The
    transform is immutable and safe for shared concurrent reads.
    """

    mean: np.ndarray
    inv_sqrt: np.ndarray
    sqrt: np.ndarray

    @property
    def d(self) -> int:
        return len(self.mean)

    def whiten(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        return (theta - self.mean) @ self.inv_sqrt

    def unwhiten(self, psi: np.ndarray) -> np.ndarray:
        psi = np.asarray(psi, dtype=float)
        return psi @ self.sqrt + self.mean


@dataclass
class SurrogateConfig:
    """Tuning knobs of the k-NN surrogate."""

    k: int = 5
    epsilon: float = 0.0
    exponent: float = 1.0  # inverse-distance weight w_i = 1 / d_i^exponent

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")


def fit_whitening(samples: np.ndarray, ridge: float = 1e-8) -> WhiteningTransform:
    """Fit the whitening transform from pilot samples (rows).

    Uses the sample mean and the eigendecomposition of the sample
    covariance.  A numerically singular covariance is regularized by adding
    ``ridge * trace / d`` to the diagonal, with a warning; a covariance with
    zero trace cannot be repaired and raises.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2:
        raise ValueError("samples must be a 2-D array (n, d)")
    n, d = samples.shape
    if n <= d:
        raise ValueError(f"need more than d={d} samples, got {n}")
    mean = samples.mean(axis=0)
    cov = np.cov(samples, rowvar=False, ddof=1).reshape(d, d)
    w, _ = np.linalg.eigh(cov)
    if w.min() <= w.max() * 1e-12:
        tr = np.trace(cov)
        if tr <= 0:
            raise ValueError(
                "pilot covariance is singular and has zero trace; run a longer pilot"
            )
        warnings.warn(
            "pilot covariance is numerically singular; adding ridge "
            f"{ridge * tr / d:.3g} to the diagonal (consider a longer pilot run)"
        )
        cov = cov + (ridge * tr / d) * np.eye(d)
    w, U = np.linalg.eigh(cov)
    inv_sqrt = (U / np.sqrt(w)) @ U.T
    sqrt = (U * np.sqrt(w)) @ U.T
    return WhiteningTransform(mean=mean, inv_sqrt=inv_sqrt, sqrt=sqrt)


def save_whitening(transform: WhiteningTransform, path) -> None:
    """CSV snapshot: the mean row followed by the rows of ``inv_sqrt``."""
    with open(path, "w") as fh:
        fh.write(",".join(repr(float(x)) for x in transform.mean) + "\n")
        for row in transform.inv_sqrt:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")


def load_whitening(path) -> WhiteningTransform:
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(np.array([float(x) for x in line.split(",")]))
    mean = rows[0]
    inv_sqrt = np.vstack(rows[1:])
    if inv_sqrt.shape != (len(mean), len(mean)):
        raise ValueError("malformed whitening snapshot")
    return WhiteningTransform(mean=mean, inv_sqrt=inv_sqrt, sqrt=np.linalg.inv(inv_sqrt))


# ----------------------------------------------------------------------
# merge-radius calibration
#
# For n standard-Gaussian points and an independent standard-Gaussian query,
# the squared distance over 2 is chi^2_d, so the expected number of points
# within epsilon is n * F_{chi2_d}(epsilon^2 / 2).  The radius giving a
# target expectation e is epsilon = sqrt(2 * q_{chi2_d}(e / n)).

def _lower_gamma_reg(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x), by series for x < a + 1
    and by a Lentz continued fraction for the upper tail otherwise."""
    if x < 0 or a <= 0:
        raise ValueError("require x >= 0 and a > 0")
    if x == 0.0:
        return 0.0
    log_pre = a * math.log(x) - x - math.lgamma(a)
    if x < a + 1.0:
        # series: P(a,x) = pre * sum_n x^n / (a (a+1) ... (a+n))
        term = 1.0 / a
        total = term
        ap = a
        for _ in range(1000):
            ap += 1.0
            term *= x / ap
            total += term
            if abs(term) < abs(total) * 1e-16:
                break
        return min(1.0, math.exp(log_pre) * total)
    # continued fraction for Q(a,x) (Lentz's method)
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 1000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    q = math.exp(log_pre) * h
    return max(0.0, 1.0 - q)


def chi2_cdf(x: float, d: int) -> float:
    """CDF of the chi-square distribution with d degrees of freedom."""
    if x <= 0:
        return 0.0
    return _lower_gamma_reg(d / 2.0, x / 2.0)


def chi2_quantile(p: float, d: int) -> float:
    """Quantile of chi^2_d by bracketed bisection on :func:`chi2_cdf`."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    lo, hi = 0.0, float(d)
    while chi2_cdf(hi, d) < p:
        hi *= 2.0
        if hi > 1e12:
            raise RuntimeError("chi2_quantile bracket failed")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if chi2_cdf(mid, d) < p:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-14 * lo:
            break
    return 0.5 * (lo + hi)


def expected_neighbours(n: int, d: int, epsilon: float) -> float:
    """Expected count of stored points within ``epsilon`` of a fresh query,
    for standard-Gaussian clouds of size ``n`` in dimension ``d``."""
    return n * chi2_cdf(epsilon * epsilon / 2.0, d)


def merge_radius(n: int, d: int, e_target: float = 0.5) -> float:
    """Merge radius such that the expected neighbour count is ``e_target``
    once ``n`` points are stored: ``sqrt(2 q_{chi2_d}(e_target / n))``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0.0 < e_target < n:
        raise ValueError("e_target must lie in (0, n)")
    return math.sqrt(2.0 * chi2_quantile(e_target / n, d))


def p_keep_bounds(e: float) -> tuple[float, float]:
    """Bounds ``(1 - e, exp(-e))`` on the probability that a fresh point has
    no stored neighbour within the merge radius, given expected neighbour
    count ``e``."""
    if not 0.0 < e < 1.0:
        raise ValueError("bounds are vacuous unless 0 < e < 1")
    return 1.0 - e, math.exp(-e)


# ----------------------------------------------------------------------
# surrogate evaluation

def estimate_log_posterior(
    tree: KdTree,
    psi_star: np.ndarray,
    k: int,
    exponent: float = 1.0,
) -> float:
    """Inverse-distance-weighted k-NN estimate of the log posterior.

    With neighbours ``(psi_i, l_i)`` at distances ``d_i`` the estimate is
    ``log(sum w_i e^{l_i} / sum w_i)`` with ``w_i = 1 / d_i^exponent``,
    evaluated in log space.  An exact positional hit returns that entry's
    stored value directly.
    """
    ids, dists = tree.knn_ids(psi_star, k)
    if dists[0] == 0.0:
        return float(tree._logv[ids[0]])
    log_values = tree._logv[ids]
    log_w = -exponent * np.log(dists)
    a = log_w + log_values
    a_shift = a.max()
    log_num = a_shift + math.log(np.exp(a - a_shift).sum())
    w_shift = log_w.max()
    log_den = w_shift + math.log(np.exp(log_w - w_shift).sum())
    return float(log_num - log_den)
