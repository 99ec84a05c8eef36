"""Embedded Runge-Kutta-Fehlberg 4(5) integrator with adaptive step size."""

from __future__ import annotations

import numpy as np

__all__ = ["IntegrationError", "rkf45_integrate"]

# Fehlberg tableau: six stages; the 4th-order solution is propagated and the
# difference to the embedded 5th-order solution estimates the local error.
_C = np.array([0.0, 0.25, 3.0 / 8.0, 12.0 / 13.0, 1.0, 0.5])
_A = [
    np.array([0.25]),
    np.array([3.0 / 32.0, 9.0 / 32.0]),
    np.array([1932.0 / 2197.0, -7200.0 / 2197.0, 7296.0 / 2197.0]),
    np.array([439.0 / 216.0, -8.0, 3680.0 / 513.0, -845.0 / 4104.0]),
    np.array([-8.0 / 27.0, 2.0, -3544.0 / 2565.0, 1859.0 / 4104.0, -11.0 / 40.0]),
]
_B4 = np.array([25.0 / 216.0, 0.0, 1408.0 / 2565.0, 2197.0 / 4104.0, -0.2, 0.0])
_ERR = np.array([1.0 / 360.0, 0.0, -128.0 / 4275.0, -2197.0 / 75240.0, 1.0 / 50.0, 2.0 / 55.0])


class IntegrationError(RuntimeError):
    """Raised when the adaptive step size underflows."""


def rkf45_integrate(rhs, y0, t0: float, t1: float, rtol: float = 1e-6, atol: float = 1e-8):
    """Integrate ``dy/dt = rhs(t, y)`` from t0 to t1.

    A step is accepted when the embedded error estimate is below the mixed
    tolerance ``atol + rtol * |y|`` componentwise; the step size follows the
    usual 1/5-power rule.  Raises :class:`IntegrationError` if the step
    falls below ``1e-12 * (t1 - t0)``.
    """
    if t1 < t0:
        raise ValueError("t1 must be >= t0")
    if rtol <= 0 or atol <= 0:
        raise ValueError("tolerances must be positive")
    y = np.array(y0, dtype=float)
    span = t1 - t0
    if span == 0.0:
        return y
    n = y.shape[0]
    K = np.empty((6, n))
    t = t0
    h = span / 10.0
    h_min = 1e-12 * span
    while True:
        remaining = t1 - t
        if remaining <= 1e-14 * span:
            return y
        if h > remaining:
            h = remaining
        K[0] = rhs(t, y)
        for s in range(1, 6):
            ys = y + (h * _A[s - 1]) @ K[:s]
            K[s] = rhs(t + _C[s] * h, ys)
        y_new = y + (h * _B4) @ K
        err = (h * _ERR) @ K
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        ratio = float((np.abs(err) / scale).max())
        if ratio <= 1.0:
            t += h
            y = y_new
            factor = 5.0 if ratio == 0.0 else min(5.0, max(0.2, 0.9 * ratio ** -0.2))
        else:
            factor = min(1.0, max(0.2, 0.9 * ratio ** -0.2))
        h *= factor
        if h < h_min:
            raise IntegrationError(
                f"step size underflow at t={t:.6g} (h={h:.3g} < {h_min:.3g})"
            )
