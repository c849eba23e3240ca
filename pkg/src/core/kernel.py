"""
Merge polynomial Q(z) = sum_j p_j z^j and the analytic objects derived from it.

A Kernel is built once by new_kernel() and is immutable afterwards. All constants
(q, kappa, R, n_min, lambda) and the Psi power series are computed eagerly.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
from numpy.polynomial import polynomial as P
from scipy import integrate, optimize

from .errors import ConfigError, NumericDomainError
from .special import EULER_GAMMA, chi, w_star_hat

logger = logging.getLogger(__name__)

WEIGHT_SUM_TOL = 1e-12
ROOT_SEPARATION_TOL = 1e-8
KAPPA_SPLIT = 1e-3
LAMBDA_BRACKET = (1e-8, 50.0)


@dataclass(frozen=True)
class PowerSeries:
    """Truncated power series sum_k c_k u^k with a nominal convergence radius"""
    coefficients: np.ndarray
    radius: float

    def __call__(self, u):
        return P.polyval(np.asarray(u), self.coefficients)

    @property
    def order(self) -> int:
        return len(self.coefficients) - 1


@dataclass(frozen=True)
class Kernel:
    """Merge polynomial with cached constants. Use new_kernel() to build one."""
    weights: tuple
    q: float
    kappa: float
    radius_R: float
    n_min: int
    psi: PowerSeries
    lambda_decay: float
    eps_guard: float = 0.02
    tail_tol: float = 1e-10
    _poly: np.ndarray = field(default=None, repr=False, compare=False)

    @property
    def degree(self) -> int:
        return len(self.weights)

    @property
    def psi_coeffs(self) -> np.ndarray:
        return self.psi.coefficients

    @property
    def is_identity(self) -> bool:
        return self.degree == 1

    def Q(self, z):
        return P.polyval(np.asarray(z), self._poly)

    def dQ(self, z):
        return P.polyval(np.asarray(z), P.polyder(self._poly))

    def as_record(self) -> Dict:
        """Plain mapping used for artifact headers and the verify report"""
        return {
            "weights": list(self.weights),
            "q": self.q,
            "kappa": self.kappa,
            "R": self.radius_R if np.isfinite(self.radius_R) else "inf",
            "n_min": self.n_min,
            "lambda": self.lambda_decay if np.isfinite(self.lambda_decay) else "inf",
            "psi_coeffs": [float(c) for c in self.psi.coefficients],
        }


def _validate_weights(weights: Sequence[float]) -> np.ndarray:
    w = np.asarray(list(weights), dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ConfigError("Kernel needs at least one weight")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ConfigError(f"Kernel weights must be finite and nonnegative: {list(w)}")
    if abs(w.sum() - 1.0) > WEIGHT_SUM_TOL:
        raise ConfigError(f"Kernel weights must sum to 1, got {w.sum():.15g}")
    nonzero = np.nonzero(w)[0]
    return w[: nonzero[-1] + 1]


def _regular_part(poly: np.ndarray, q: float):
    """
    Split 1/(1-z) - q/(1-Q(z)) = N2(z)/D1(z) with polynomials that have no zero at z = 1.
    The numerator 1 - Q(z) - q(1-z) has a double root at 1 and 1 - Q(z) a simple one.
    """
    one_minus_q = P.polysub([1.0], poly)
    numerator = P.polyadd(one_minus_q, [-q, q])
    n2, rem_n = P.polydiv(numerator, [1.0, -2.0, 1.0])
    d1, rem_d = P.polydiv(one_minus_q, [1.0, -1.0])
    if np.max(np.abs(rem_n), initial=0.0) > 1e-10 or np.max(np.abs(rem_d), initial=0.0) > 1e-10:
        raise NumericDomainError("Polynomial division at z = 1 left a remainder")
    return n2, d1


def _kappa(poly: np.ndarray, q: float) -> float:
    n2, d1 = _regular_part(poly, q)
    f = lambda z: P.polyval(z, n2) / P.polyval(z, d1)
    # adaptive quadrature on [0, 1-delta]; cubic Taylor of the reduced form on the rest
    head, _ = integrate.quad(f, 0.0, 1.0 - KAPPA_SPLIT, epsabs=1e-14, epsrel=1e-13, limit=200)
    # f(1-s) = f(1) - f'(1) s + f''(1) s^2 / 2 integrated over s in [0, delta]
    n0, n1, n2_ = (P.polyval(1.0, P.polyder(n2, m)) for m in range(3))
    d0, d1_, d2_ = (P.polyval(1.0, P.polyder(d1, m)) for m in range(3))
    f0 = n0 / d0
    f1 = (n1 * d0 - n0 * d1_) / d0 ** 2
    f2 = (n2_ * d0 ** 2 - n0 * d0 * d2_ - 2 * d1_ * (n1 * d0 - n0 * d1_)) / d0 ** 3
    t = KAPPA_SPLIT
    tail = f0 * t - f1 * t ** 2 / 2 + f2 * t ** 3 / 6
    return float(np.exp(head + tail))


def _radius(poly: np.ndarray, q: float) -> float:
    if len(poly) == 2:
        return float("inf")
    n2, d1 = _regular_part(poly, q)
    inner, _ = integrate.quad(lambda z: P.polyval(z, n2) / P.polyval(z, d1), 0.0, 2.0,
                              epsabs=1e-14, epsrel=1e-13, limit=200)
    outer, _ = integrate.quad(lambda z: q / (1.0 - P.polyval(z, poly)), 2.0, np.inf,
                              epsabs=1e-14, epsrel=1e-13, limit=200)
    return float(1.0 + np.exp(inner - outer))


def psi_series(weights: np.ndarray, q: float, order: int, radius: float = float("inf")) -> PowerSeries:
    """
    Taylor coefficients of Psi from q (1-u) Psi'(u) = 1 - Q(Psi(u)), Psi(0) = 0.

    powers[j][m] holds the u^m coefficient of Psi^j, which only needs c_1..c_m.
    """
    if order < 2:
        raise ConfigError(f"Series order must be at least 2, got {order}")
    n = len(weights)
    c = np.zeros(order + 1)
    powers = np.zeros((n + 1, order + 1))
    powers[0, 0] = 1.0
    for m in range(order):
        for j in range(1, n + 1):
            powers[j, m] = np.dot(c[1:m + 1], powers[j - 1, m - 1::-1][:m]) if m > 0 else 0.0
        source = (1.0 if m == 0 else 0.0) - np.dot(weights, powers[1:, m])
        c[m + 1] = (m * c[m] + source / q) / (m + 1)
        if c[m + 1] < -1e-14:
            raise NumericDomainError(f"Psi coefficient {m + 1} is negative ({c[m + 1]:.3e})")
    return PowerSeries(coefficients=np.clip(c, 0.0, None), radius=radius)


def _lambda_residual(lam: float, target: float) -> float:
    return lam * np.exp(EULER_GAMMA - float(np.real(chi(-lam)))) - target


def _lambda_decay(radius: float) -> float:
    if not np.isfinite(radius):
        return float("inf")
    target = radius - 1.0
    lo, hi = LAMBDA_BRACKET
    if _lambda_residual(lo, target) * _lambda_residual(hi, target) > 0:
        raise NumericDomainError(f"No sign change for lambda on [{lo}, {hi}]")
    lam = optimize.bisect(_lambda_residual, lo, hi, args=(target,), xtol=1e-15, maxiter=200)
    if abs(_lambda_residual(lam, target)) > 1e-10 * max(1.0, target):
        raise NumericDomainError("Lambda bisection did not reach the residual tolerance")
    return float(lam)


def new_kernel(weights: Sequence[float], series_order: int = 128, eps_guard: float = 0.02) -> Kernel:
    """
    Build a Kernel from p_1..p_N.

    Raises:
        ConfigError: weights negative, not summing to 1, or series_order < 2
    """
    w = _validate_weights(weights)
    if series_order < 2:
        raise ConfigError(f"Series order must be at least 2, got {series_order}")
    poly = np.concatenate([[0.0], w])
    q = float(np.dot(np.arange(1, len(w) + 1), w))
    n_min = int(np.nonzero(w)[0][0]) + 1
    if len(w) == 1:
        kappa = 1.0
    else:
        kappa = _kappa(poly, q)
    radius = _radius(poly, q)
    psi = psi_series(w, q, series_order, radius)
    lam = _lambda_decay(radius)
    logger.debug("Kernel %s: q=%.6g kappa=%.12g R=%.12g lambda=%.6g", list(w), q, kappa, radius, lam)
    return Kernel(weights=tuple(float(x) for x in w), q=q, kappa=kappa, radius_R=radius,
                  n_min=n_min, psi=psi, lambda_decay=lam, eps_guard=eps_guard, _poly=poly)


def _roots(k: Kernel) -> Optional[np.ndarray]:
    """Roots of 1 - Q when they are simple and well separated, else None"""
    roots = P.polyroots(P.polysub([1.0], k._poly))
    if len(roots) > 1:
        gaps = np.abs(roots[:, None] - roots[None, :])
        np.fill_diagonal(gaps, np.inf)
        if np.min(gaps) < ROOT_SEPARATION_TOL:
            return None
    return roots


def phi_eval(k: Kernel, z) -> np.ndarray:
    """
    phi(z) = int_0^z ds / (1 - Q(s)) for |z| < 1.

    Closed form sum_r A_r log(1 - z/r) over the roots r of 1 - Q, A_r = -1/Q'(r).
    Falls back to quadrature along the segment when roots nearly coincide.
    """
    z_arr = np.asarray(z)
    real_input = not np.iscomplexobj(z_arr)
    zc = np.atleast_1d(z_arr).astype(complex)
    if np.any(np.abs(zc) >= 1.0):
        raise NumericDomainError("phi is only defined for |z| < 1")
    roots = _roots(k)
    if roots is not None:
        residues = -1.0 / k.dQ(roots)
        out = np.zeros_like(zc)
        for r, a in zip(roots, residues):
            out += a * np.log(1.0 - zc / r)
    else:
        out = np.array([
            zi * integrate.quad(lambda t: 1.0 / (1.0 - k.Q(t * zi)), 0.0, 1.0,
                                complex_func=True, epsabs=1e-13, epsrel=1e-12)[0]
            for zi in zc
        ])
    if real_input:
        out = out.real
    return out[0] if z_arr.ndim == 0 else out


def phi_regular(k: Kernel, z) -> np.ndarray:
    """
    q phi(z) + log(1 - z), the part of q phi that stays bounded at z = 1.

    Equals -log(kappa) at z = 1. Closed form drops the root r = 1 from the phi sum;
    the fallback integrates -N2/D1 from the regular split along the segment.
    """
    z_arr = np.asarray(z)
    zc = np.atleast_1d(z_arr).astype(complex)
    roots = _roots(k)
    if roots is not None:
        at_one = int(np.argmin(np.abs(roots - 1.0)))
        residues = -1.0 / k.dQ(roots)
        out = np.zeros_like(zc)
        for i, (r, a) in enumerate(zip(roots, residues)):
            if i != at_one:
                out += k.q * a * np.log(1.0 - zc / r)
    else:
        n2, d1 = _regular_part(k._poly, k.q)
        out = np.array([
            -zi * integrate.quad(lambda t: P.polyval(t * zi, n2) / P.polyval(t * zi, d1), 0.0, 1.0,
                                 complex_func=True, epsabs=1e-13, epsrel=1e-12)[0]
            for zi in zc
        ])
    if not np.iscomplexobj(z_arr):
        out = out.real
    return out[0] if z_arr.ndim == 0 else out


def Phi_eval(k: Kernel, z) -> np.ndarray:
    """Phi(z) = 1 - exp(-q phi(z))"""
    return 1.0 - np.exp(-k.q * phi_eval(k, z))


def psi_eval(k: Kernel, u) -> np.ndarray:
    """
    Evaluate the truncated Psi series with a tail estimate.

    Raises:
        NumericDomainError: |u| >= R (1 - eps_guard) or the tail exceeds tail_tol
    """
    u_arr = np.asarray(u)
    if np.isfinite(k.radius_R):
        limit = k.radius_R * (1.0 - k.eps_guard)
        if np.any(np.abs(u_arr) >= limit):
            raise NumericDomainError(
                f"Psi argument |u|={np.max(np.abs(u_arr)):.6g} outside the guarded disk {limit:.6g}")
        coeffs = k.psi.coefficients
        ratio = np.max(np.abs(u_arr), initial=0.0) / k.radius_R
        tail = coeffs[-1] * np.max(np.abs(u_arr), initial=0.0) ** k.psi.order * ratio / (1.0 - ratio)
        if tail > k.tail_tol:
            raise NumericDomainError(
                f"Psi series of order {k.psi.order} too short at |u|={np.max(np.abs(u_arr)):.6g} (tail {tail:.2e})")
    return k.psi(u_arr)


def psi_continued(k: Kernel, w, n_steps: int = 256) -> np.ndarray:
    """psi(w), the inverse of phi, by RK4 along the segment [0, w] of dpsi/ds = w (1 - Q(psi))"""
    w = np.asarray(w, dtype=complex)
    psi = np.zeros_like(w)
    ds = 1.0 / n_steps
    rhs = lambda p: w * (1.0 - k.Q(p))
    for _ in range(n_steps):
        k1 = rhs(psi)
        k2 = rhs(psi + 0.5 * ds * k1)
        k3 = rhs(psi + 0.5 * ds * k2)
        k4 = rhs(psi + ds * k3)
        psi = psi + ds / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return psi


def psi_of(k: Kernel, w, series_fraction: float = 0.5, n_steps: int = 256, polish: int = 2) -> np.ndarray:
    """
    psi(w) on arrays without a disk limit.

    The Psi series is used where u = 1 - exp(-q w) lies within series_fraction * R and
    q w has not wrapped around the log branch. Other samples are continued along the
    segment and refined by Newton steps on phi(psi) = w while |psi| < 1.

    Raises:
        NumericDomainError: the continuation produced non-finite values
    """
    w = np.asarray(w, dtype=complex)
    flat = np.atleast_1d(w).ravel()
    u = 1.0 - np.exp(-k.q * flat)
    if np.isfinite(k.radius_R):
        inside = (np.abs(u) <= series_fraction * k.radius_R) & (np.abs(k.q * flat.imag) < np.pi)
    else:
        inside = np.ones(flat.shape, dtype=bool)
    out = np.empty_like(flat)
    out[inside] = k.psi(u[inside])
    rest = np.nonzero(~inside)[0]
    if rest.size:
        target = flat[rest]
        p = psi_continued(k, target, n_steps)
        for _ in range(polish):
            ok = np.abs(p) < 1.0
            if not np.any(ok):
                break
            p[ok] = p[ok] - (phi_eval(k, p[ok]) - target[ok]) * (1.0 - k.Q(p[ok]))
        if not np.all(np.isfinite(p)):
            raise NumericDomainError(f"psi continuation diverged at {int(np.sum(~np.isfinite(p)))} samples")
        out[rest] = p
        logger.debug("psi_of: %d of %d samples continued", rest.size, flat.size)
    out = out.reshape(np.shape(w)) if np.ndim(w) else out[0]
    return out


def lambda_decay(k: Kernel) -> float:
    """Decay rate lambda of the finite-mean profile (inf for Q(z) = z)"""
    return k.lambda_decay


def _theta_grid(n_points: int) -> np.ndarray:
    return np.logspace(-4.0, 3.0, n_points)


def _crossing_excess(theta: float, w_hat: np.ndarray, radius: float) -> float:
    """Largest real-axis crossing of 1 - exp(-theta w*-hat) minus R (-inf if none)"""
    F = 1.0 - np.exp(-theta * w_hat)
    im = F.imag
    idx = np.nonzero(im[:-1] * im[1:] <= 0.0)[0]
    idx = idx[(im[idx] != 0.0) | (im[idx + 1] != 0.0)]
    if idx.size == 0:
        return -np.inf
    t = im[idx] / (im[idx] - im[idx + 1])
    crossings = F.real[idx] + t * (F.real[idx + 1] - F.real[idx])
    return float(np.max(crossings) - radius)


def _theta_star_on_grid(radius: float, n_points: int, tol: float) -> float:
    w_hat = w_star_hat(_theta_grid(n_points))
    lo, hi = 1.0, 20.0
    while _crossing_excess(hi, w_hat, radius) < 0.0:
        lo, hi = hi, 2.0 * hi
        if hi > 1e3:
            raise NumericDomainError("No disk crossing found for theta up to 1e3")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _crossing_excess(mid, w_hat, radius) >= 0.0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def theta_star(k: Kernel, n_points: int = 4096, tol: float = 1e-10, refine_tol: float = 1e-4) -> float:
    """
    Largest theta for which the curve 1 - exp(-theta E1(i xi)), xi > 0, stays off the
    real half-line [R, inf). Beyond it the continued profile leaves the Psi disk.

    Raises:
        NumericDomainError: doubling the frequency grid moves the result by more than refine_tol
    """
    if not np.isfinite(k.radius_R):
        return float("inf")
    coarse = _theta_star_on_grid(k.radius_R, n_points, tol)
    fine = _theta_star_on_grid(k.radius_R, 2 * n_points, tol)
    if abs(coarse - fine) > refine_tol:
        raise NumericDomainError(f"theta* unstable under grid refinement: {coarse:.8f} vs {fine:.8f}")
    return fine


def disk_bound(k: Kernel, theta: float, n_points: int = 4096) -> float:
    """sup over the frequency grid of |1 - exp(-theta E1(i xi))|"""
    w_hat = w_star_hat(_theta_grid(n_points))
    return float(np.max(np.abs(1.0 - np.exp(-theta * w_hat))))


def parse_weights(text: Union[str, List[float]]) -> List[float]:
    """Parse "0,1" or "[0, 1]" into a weight list"""
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    cleaned = text.strip().strip("[]")
    try:
        return [float(x) for x in cleaned.replace(";", ",").split(",") if x.strip()]
    except ValueError as e:
        raise ConfigError(f"Cannot parse kernel weights '{text}': {e}")
