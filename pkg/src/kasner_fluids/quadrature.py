"""Endpoint-singular quadrature on intervals [t, 0] with t < 0."""

from __future__ import annotations

from typing import Callable

import numpy as np
from scipy import integrate

__all__ = ["QuadratureError", "singular_quadrature"]


class QuadratureError(RuntimeError):
    def __init__(self, message: str, achieved_error: float):
        super().__init__(message)
        self.achieved_error = achieved_error


def singular_quadrature(f: Callable[[float], float], t: float, a_min: float, rtol: float = 1e-10,
                        limit: int = 200, atol: float = 0.0) -> float:
    """Integral of f over [t, 0] for f(s) ~ |s|^{a-1} with a >= a_min > 0.

    With s = -sigma^{1/a_min} the integrand becomes
    f(s) sigma^{1/a_min - 1} / a_min, which is bounded at sigma = 0, and the
    remaining integral over sigma in [0, |t|^{a_min}] is done with adaptive
    Gauss-Kronrod panels. The achieved error must be within ten times
    max(rtol |value|, atol).
    """
    if t >= 0:
        raise ValueError("t must be negative")
    if a_min <= 0:
        raise ValueError("a_min must be positive")
    inv = 1.0 / a_min
    upper = (-t) ** a_min

    tiny = np.finfo(float).tiny

    def g(sig):
        s = sig**inv if sig > 0.0 else 0.0
        if s < tiny:
            # the transformed integrand is bounded at 0; an underflowed abscissa contributes nothing
            return 0.0 if inv > 1.0 else float(f(-tiny)) * inv
        return float(f(-s)) * sig ** (inv - 1.0) * inv

    res = integrate.quad(g, 0.0, upper, epsabs=atol, epsrel=rtol, limit=limit, full_output=1)
    val, err = res[0], res[1]
    # quad reports divergence only through its message
    if len(res) > 3 and "divergent" in str(res[3]):
        raise QuadratureError("integral judged divergent (not integrable at 0 for this a_min?)", err)
    if err > 10.0 * max(rtol * abs(val), atol, 1e-300):
        raise QuadratureError(f"quadrature tolerance not met: estimated error {err:.3e}", err)
    return val
