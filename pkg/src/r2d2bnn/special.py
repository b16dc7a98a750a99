"""Scalar special functions used by the shrinkage densities, moments and KL terms.

The modified Bessel function of the second kind K_nu(x) appears in the
generalized inverse-Gaussian normalizing constant and needs to stay accurate
over a wide order range: the global-shrinkage conditional puts nu on the order
of the layer parameter count, so |nu| in the hundreds is routine.  Plain
double-precision K_nu overflows (small x, large nu) or underflows (large x)
long before the log of the value stops being representable, so the log-scale
evaluation ``log_bessel_k`` is the primary surface and ``bessel_k`` is derived
from it when the direct path is out of range.

Evaluation strategy:
  * ``scipy.special.kve`` (exponentially scaled AMOS routine) wherever it is
    finite, which covers almost the entire parameter space;
  * Olver's uniform large-order asymptotic expansion (Abramowitz & Stegun
    9.7.8, terms through u_5) for |nu| >= 50 when kve overflows;
  * arbitrary-precision evaluation via mpmath for the residual corner
    (small |nu| together with extremely small x), which is rare enough that
    the cost does not matter.
"""

from __future__ import annotations

import functools
import math

import mpmath
import numpy as np
from scipy import special as _sp

__all__ = [
    "bessel_k",
    "log_bessel_k",
    "dlog_bessel_k_dnu",
    "log_gamma",
    "digamma",
    "softplus",
]

# Order above which the uniform asymptotic expansion is at least as accurate
# as the scaled AMOS routine; the expansion error decays like nu**-6.
_OLVER_MIN_ORDER = 50.0


def _check_positive(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite, got {x!r}")
    if np.any(arr <= 0.0):
        raise ValueError(f"{name} must be > 0, got {x!r}")
    return arr


def _olver_log_k(nu: np.ndarray, x: np.ndarray) -> np.ndarray:
    """log K_nu(x) by the uniform large-order expansion, nu >= _OLVER_MIN_ORDER."""
    z = x / nu
    root = np.sqrt(1.0 + z * z)
    t = 1.0 / root
    eta = root + np.log(z / (1.0 + root))
    t2 = t * t
    # u_k(t) polynomials, Abramowitz & Stegun 9.3.9 / 9.3.10.
    u1 = t * (3.0 - 5.0 * t2) / 24.0
    u2 = t2 * (81.0 + t2 * (-462.0 + t2 * 385.0)) / 1152.0
    u3 = t * t2 * (30375.0 + t2 * (-369603.0 + t2 * (765765.0 - t2 * 425425.0))) / 414720.0
    u4 = (
        t2
        * t2
        * (4465125.0 + t2 * (-94121676.0 + t2 * (349922430.0 + t2 * (-446185740.0 + t2 * 185910725.0))))
        / 39813120.0
    )
    u5 = (
        t * t2 * t2
        * (
            1519035525.0
            + t2
            * (
                -49286948607.0
                + t2 * (284499769554.0 + t2 * (-614135872350.0 + t2 * (566098157625.0 - t2 * 188699385875.0)))
            )
        )
        / 6688604160.0
    )
    series = 1.0 - u1 / nu + u2 / nu**2 - u3 / nu**3 + u4 / nu**4 - u5 / nu**5
    return 0.5 * np.log(np.pi / (2.0 * nu)) - nu * eta - 0.25 * np.log1p(z * z) + np.log(series)


@functools.lru_cache(maxsize=4096)
def _mpmath_log_k(nu: float, x: float) -> float:
    with mpmath.workdps(40):
        return float(mpmath.log(mpmath.besselk(nu, x)))


def log_bessel_k(nu, x):
    """Natural log of the modified Bessel function of the second kind.

    Accepts scalars or arrays (broadcast together).  Accurate to better than
    1e-10 relative error in K itself for 0 < x <= 1e4 and |nu| <= 200, a
    range over which the raw function value spans thousands of orders of
    magnitude.
    """
    nu_arr, x_arr = np.broadcast_arrays(np.asarray(nu, dtype=float), np.asarray(x, dtype=float))
    if not (np.all(np.isfinite(nu_arr)) and np.all(np.isfinite(x_arr))):
        raise ValueError("bessel order and argument must be finite")
    if np.any(x_arr <= 0.0):
        raise ValueError("bessel argument must be > 0")

    # K is even in the order.
    anu = np.abs(nu_arr)
    with np.errstate(over="ignore", invalid="ignore"):
        scaled = _sp.kve(anu, x_arr)
    out = np.where(scaled > 0.0, np.log(np.where(scaled > 0.0, scaled, 1.0)) - x_arr, np.inf)

    bad = ~np.isfinite(out) | ~np.isfinite(scaled)
    if np.any(bad):
        out = np.array(out, dtype=float)
        big = bad & (anu >= _OLVER_MIN_ORDER)
        if np.any(big):
            out[big] = _olver_log_k(anu[big], x_arr[big])
        rest = bad & ~big
        if np.any(rest):
            flat_nu = anu[rest].ravel()
            flat_x = x_arr[rest].ravel()
            out[rest] = np.array([_mpmath_log_k(float(n), float(v)) for n, v in zip(flat_nu, flat_x)])

    if out.ndim == 0:
        return float(out)
    return out


def bessel_k(nu, x):
    """Modified Bessel function of the second kind K_nu(x).

    Satisfies the order symmetry K_{-nu}(x) = K_nu(x).  Where the true value
    lies outside the double-precision range the result saturates to 0 or inf;
    use ``log_bessel_k`` in that regime.
    """
    nu_arr, x_arr = np.broadcast_arrays(np.asarray(nu, dtype=float), np.asarray(x, dtype=float))
    if not (np.all(np.isfinite(nu_arr)) and np.all(np.isfinite(x_arr))):
        raise ValueError("bessel order and argument must be finite")
    if np.any(x_arr <= 0.0):
        raise ValueError("bessel argument must be > 0")
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        direct = _sp.kv(np.abs(nu_arr), x_arr)
    bad = ~np.isfinite(direct) | (direct <= 0.0)
    if np.any(bad):
        direct = np.array(direct, dtype=float)
        with np.errstate(over="ignore"):
            direct[bad] = np.exp(np.asarray(log_bessel_k(nu_arr, x_arr))[bad])
    if direct.ndim == 0:
        return float(direct)
    return direct


def dlog_bessel_k_dnu(nu, x):
    """Central-difference estimate of d log K_nu(x) / d nu.

    Step size h = max(1e-5, 1e-7 * |nu|), fixed for reproducibility.  This is
    the numerical derivative that enters E[log X] for the generalized
    inverse-Gaussian distribution; no analytic form exists for general order.
    """
    nu_arr = np.asarray(nu, dtype=float)
    x_arr = _check_positive(x, "bessel argument")
    if not np.all(np.isfinite(nu_arr)):
        raise ValueError("bessel order must be finite")
    h = np.maximum(1e-5, 1e-7 * np.abs(nu_arr))
    out = (log_bessel_k(nu_arr + h, x_arr) - log_bessel_k(nu_arr - h, x_arr)) / (2.0 * h)
    if np.ndim(out) == 0:
        return float(out)
    return out


def log_gamma(x):
    """log Gamma(x) for x > 0 (scipy gammaln under the hood)."""
    arr = _check_positive(x, "log_gamma argument")
    out = _sp.gammaln(arr)
    if out.ndim == 0:
        return float(out)
    return out


def digamma(x):
    """Digamma function psi(x) = d/dx log Gamma(x) for x > 0."""
    arr = _check_positive(x, "digamma argument")
    out = _sp.psi(arr)
    if out.ndim == 0:
        return float(out)
    return out


def softplus(rho):
    """Overflow-safe softplus log(1 + exp(rho)); strictly positive.

    For large rho the direct form overflows, so the identity
    softplus(rho) = rho + log1p(exp(-rho)) is used past rho = 30.
    """
    arr = np.asarray(rho, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"softplus argument must be finite, got {rho!r}")
    out = np.where(
        arr > 30.0,
        arr + np.log1p(np.exp(-np.where(arr > 30.0, arr, 30.0))),
        np.log1p(np.exp(np.where(arr > 30.0, 0.0, arr))),
    )
    if out.ndim == 0:
        return float(out)
    return out
