"""
Special functions on the closed lower half-plane.

E1 is evaluated by its convergent power series for |z| <= 4 and by a
vectorized modified-Lentz continued fraction beyond. The Fourier transform
of w*(y) = 1/y on [1, inf) is E1(i xi); its real part and negated imaginary
part are the x(xi), y(xi) pair used by the disk-margin diagnostics.
"""

import logging
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import ConfigError, NumericDomainError

logger = logging.getLogger(__name__)

EULER_GAMMA = float(np.euler_gamma)
SERIES_RADIUS = 4.0

ArrayLike = Union[float, complex, np.ndarray]


def chi(z: ArrayLike) -> np.ndarray:
    """Entire part of E1: sum_{k>=1} (-1)^{k+1} z^k / (k k!)"""
    z = np.asarray(z, dtype=complex)
    n_terms = int(max(60, 3 * float(np.max(np.abs(z), initial=0.0)) + 40))
    total = np.zeros_like(z)
    term = -np.ones_like(z)  # (-1)^{k+1} z^k / k!
    for k in range(1, n_terms + 1):
        term = term * (-z) / k
        total = total + term / k
    return total


def _e1_series(z: np.ndarray) -> np.ndarray:
    return -np.log(z) - EULER_GAMMA + chi(z)


def _e1_continued_fraction(z: np.ndarray, max_iter: int = 5000, eps: float = 1e-15) -> np.ndarray:
    tiny = 1e-300
    b = z + 1.0
    c = np.full_like(z, 1.0 / tiny)
    d = 1.0 / b
    h = d.copy()
    active = np.ones(z.shape, dtype=bool)
    for i in range(1, max_iter + 1):
        an = -float(i * i)
        b = b + 2.0
        d_new = 1.0 / (an * d + b)
        c_new = b + an / c
        delta = c_new * d_new
        d = np.where(active, d_new, d)
        c = np.where(active, c_new, c)
        h = np.where(active, h * delta, h)
        active &= np.abs(delta - 1.0) > eps
        if not active.any():
            break
    else:
        raise NumericDomainError(f"E1 continued fraction did not converge in {max_iter} iterations")
    return h * np.exp(-z)


def exp_integral_e1(z: ArrayLike, method: str = "auto") -> np.ndarray:
    """
    Exponential integral E1(z) with the principal branch.

    Args:
        z: scalar or array, z != 0 and not on the negative real axis
        method: "auto", "series" or "continued_fraction"

    Raises:
        NumericDomainError: at z = 0 or on the branch cut
    """
    z = np.asarray(z, dtype=complex)
    scalar = z.ndim == 0
    z = np.atleast_1d(z)
    if np.any(z == 0):
        raise NumericDomainError("E1 is singular at z = 0")
    if np.any((z.real < 0) & (z.imag == 0)):
        raise NumericDomainError("E1 requested on the negative real axis")

    if method == "series":
        out = _e1_series(z)
    elif method == "continued_fraction":
        out = _e1_continued_fraction(z)
    elif method == "auto":
        out = np.empty_like(z)
        near = np.abs(z) <= SERIES_RADIUS
        if near.any():
            out[near] = _e1_series(z[near])
        if (~near).any():
            out[~near] = _e1_continued_fraction(z[~near])
    else:
        raise ConfigError(f"Unknown E1 method: {method}")
    return out[0] if scalar else out


def w_star_hat(xi: ArrayLike) -> np.ndarray:
    """Fourier transform of w*(y) = 1/y on [1, inf): E1(i xi), Im(xi) <= 0"""
    xi = np.asarray(xi, dtype=complex)
    if np.any(xi == 0):
        raise NumericDomainError("w*-hat has a logarithmic singularity at xi = 0")
    if np.any(xi.imag > 0):
        raise NumericDomainError("w*-hat is only defined on the closed lower half-plane")
    return exp_integral_e1(1j * xi)


def x_y_pair(xi: ArrayLike):
    """Return (x(xi), y(xi)) with E1(i xi) = x - i y for real xi > 0"""
    w = w_star_hat(np.asarray(xi, dtype=float))
    return np.real(w), -np.imag(w)


def k_function(xi: ArrayLike) -> np.ndarray:
    """K(xi) = x(xi) + log(2 cos y(xi))"""
    x, y = x_y_pair(xi)
    return x + np.log(2.0 * np.cos(y))


@dataclass
class MarginReport:
    """Disk-margin diagnostics for 1 - exp(-theta w*-hat) on a frequency grid"""
    theta: float
    margin: float
    k_min: float
    argmin_xi: float


def disk_margin(theta: float, xi_grid: ArrayLike) -> MarginReport:
    """Minimum of 1 - |1 - exp(-theta E1(i xi))| over the grid, with the K(xi) minimum"""
    xi = np.asarray(xi_grid, dtype=float)
    if xi.size == 0 or np.any(xi <= 0):
        raise ConfigError("Frequency grid must be nonempty and strictly positive")
    w = w_star_hat(xi)
    slack = 1.0 - np.abs(1.0 - np.exp(-theta * w))
    idx = int(np.argmin(slack))
    k_vals = np.real(w) + np.log(2.0 * np.cos(-np.imag(w)))
    return MarginReport(theta=float(theta), margin=float(slack[idx]),
                        k_min=float(np.min(k_vals)), argmin_xi=float(xi[idx]))
