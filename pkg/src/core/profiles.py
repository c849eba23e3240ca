"""
Self-similar profiles eta*_theta.

Two independent routes: spectral inversion of eta-hat = Psi(1 - exp(-theta E1(i xi)))
and marching the stationary delay equation (y eta)' = -beta T1 Q[eta] interval by
interval. Plus the convolution operator Q[.], the unit shift T1 and the tail and
lower-bound diagnostics.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.interpolate import CubicSpline, PchipInterpolator
from scipy.special import gamma
from sklearn.linear_model import LinearRegression

from .errors import ConfigError, NumericDomainError, PreconditionError
from .grid import (
    GridDensity, GridSpec, SpectralGrid, apply_weights_polynomial, clamp_negatives,
)
from .kernel import Kernel, psi_continued, psi_eval
from .special import EULER_GAMMA, w_star_hat

logger = logging.getLogger(__name__)

RENORM_TOL = 1e-4
OVERFLOW_TOL = 1e-8


def _cells_per_unit(h: float) -> int:
    n = 1.0 / h
    if abs(n - round(n)) > 1e-9:
        raise PreconditionError(f"Grid step h={h} does not divide 1")
    return int(round(n))


def _profile_symbol(k: Kernel, theta: float, grid: SpectralGrid, continued: bool) -> np.ndarray:
    nz = grid.xi != 0.0
    eta_hat = np.ones(grid.Mp, dtype=complex)
    w_hat = w_star_hat(grid.xi[nz])
    if continued:
        eta_hat[nz] = psi_continued(k, theta * w_hat / k.q)
    else:
        u = 1.0 - np.exp(-theta * w_hat)
        eta_hat[nz] = psi_eval(k, u)
    return eta_hat


def steady_state_spectral(k: Kernel, theta: float, spec: Optional[GridSpec] = None) -> GridDensity:
    """
    eta*_theta for 0 < theta <= 1 by inverting its transform on the padded grid.

    Raises:
        ConfigError: theta outside (0, 1]
        NumericDomainError: Psi argument leaves the guarded disk, or ringing below -1e-9
    """
    if not (0.0 < theta <= 1.0):
        raise ConfigError(f"Steady states in P need 0 < theta <= 1, got {theta}")
    spec = spec or GridSpec()
    grid = SpectralGrid(spec)
    eta_hat = _profile_symbol(k, theta, grid, continued=False)
    values = clamp_negatives(grid.inverse(eta_hat)[: spec.M], what=f"eta*_{theta}")
    eta = GridDensity(h=spec.h, values=values, support_min=1.0)
    raw_mass = eta.mass
    meta: Dict = {"theta": theta, "beta": theta / k.q, "raw_mass": raw_mass, "method": "spectral", "in_p": True}
    if abs(raw_mass - 1.0) < RENORM_TOL:
        values = values / raw_mass
        meta["tail_mass"] = 0.0
    else:
        meta["tail_mass"] = 1.0 - raw_mass
        logger.info("eta*_%g keeps %.4g of its mass on [1, %g]", theta, raw_mass, spec.y_max)
    return eta.with_values(values, meta=meta)


def generalized_profile_spectral(k: Kernel, theta: float, spec: Optional[GridSpec] = None) -> GridDensity:
    """
    Inverse transform of psi(theta E1(i xi) / q) for any theta > 0.

    For theta > 1 the result is not a probability density; it is returned unclamped
    with meta["in_p"] = False.
    """
    if theta <= 0.0:
        raise ConfigError(f"theta must be positive, got {theta}")
    spec = spec or GridSpec()
    if theta <= 1.0:
        return steady_state_spectral(k, theta, spec)
    grid = SpectralGrid(spec)
    eta_hat = _profile_symbol(k, theta, grid, continued=True)
    values = grid.inverse(eta_hat)[: spec.M]
    meta = {"theta": theta, "beta": theta / k.q, "method": "spectral-continued", "in_p": False,
            "min_value": float(np.min(values))}
    return GridDensity(h=spec.h, values=values, support_min=1.0, meta=meta)


def apply_Q(k: Kernel, eta: GridDensity, allow_truncation: bool = False,
            overflow_tol: float = OVERFLOW_TOL) -> GridDensity:
    """
    sum_j p_j eta^{*j} on the same grid; mass + truncated mass = Q(mass(eta)).

    Raises:
        NumericDomainError: truncated mass above overflow_tol unless allow_truncation
    """
    K = _cells_per_unit(eta.h)
    if eta.y0 != 1.0:
        raise PreconditionError("Q[eta] needs a density on a grid starting at y = 1")
    values, truncated = apply_weights_polynomial(k.weights, eta.values, eta.h, K)
    if truncated > overflow_tol and not allow_truncation:
        raise NumericDomainError(
            f"Convolution support exceeds the grid (truncated mass {truncated:.3e}); enlarge y_max")
    out = GridDensity(h=eta.h, values=values, support_min=k.n_min * eta.support_min)
    out.meta["truncated_mass"] = truncated
    return out


def shift_T1(eta: GridDensity) -> GridDensity:
    """(T1 eta)(y) = eta(y - 1), an exact shift by 1/h cells"""
    K = _cells_per_unit(eta.h)
    out = np.zeros(eta.M)
    if K < eta.M:
        out[K:] = eta.values[: eta.M - K]
    dropped = float(np.dot(eta.weights[eta.M - K:], eta.values[eta.M - K:])) if K < eta.M else eta.mass
    shifted = GridDensity(h=eta.h, values=out, y0=eta.y0, support_min=eta.support_min + 1.0)
    shifted.meta["truncated_mass"] = dropped
    return shifted


def _march_delay(k: Kernel, beta: float, y_max: float, h: float) -> Tuple[np.ndarray, float]:
    n = k.n_min
    spec = GridSpec(h=h, y_max=y_max)
    K = spec.cells_per_unit
    y = spec.y
    M = spec.M
    eta = np.zeros(M)
    first = min(M, n * K + 1)
    eta[:first] = beta / y[:first]
    start = first - 1
    est = 0.0
    while start < M - 1:
        end = min(start + n * K, M - 1)
        q_vals, _ = apply_weights_polynomial(k.weights, eta, h, K)
        rhs = q_vals[start - K: end - K + 1]
        nodes = y[start: end + 1]
        spline = CubicSpline(nodes, rhs)
        mid = spline(nodes[:-1] + 0.5 * h)
        increments = h / 6.0 * (rhs[:-1] + 4.0 * mid + rhs[1:])
        g = y[start] * eta[start] - beta * np.concatenate([[0.0], np.cumsum(increments)])
        eta[start: end + 1] = g / nodes
        # disagreement with a shape-preserving interpolant as a local error estimate
        pchip_mid = PchipInterpolator(nodes, rhs)(nodes[:-1] + 0.5 * h)
        est = max(est, beta * float(np.sum(np.abs(mid - pchip_mid))) * 4.0 * h / 6.0)
        if not np.all(np.isfinite(eta[start: end + 1])):
            raise NumericDomainError(f"Delay marcher produced non-finite values on [{y[start]}, {y[end]}]")
        start = end
    return eta, est


def steady_state_ode(k: Kernel, beta: float, y_max: float, h: float = 1.0 / 64.0,
                     tol: float = 1e-6, max_refinements: int = 3) -> GridDensity:
    """
    March (y eta)' = -beta T1 Q[eta], eta = beta / y on [1, n+1].

    On I_k = [kn+1, (k+1)n+1] the right side only involves eta on [1, kn+1], so it is
    computed once per interval by convolution; g = y eta is then advanced by
    classical RK4 steps of size h. With the right side frozen the stages collapse
    to Simpson's rule, the midpoint stage read from a cubic spline.

    The step is halved while the local error estimate exceeds tol * beta; a refined
    march is reported on the requested grid.

    Raises:
        NumericDomainError: estimate above tol after max_refinements halvings
    """
    if beta <= 0.0:
        raise ConfigError(f"beta must be positive, got {beta}")
    if y_max <= k.n_min + 1:
        raise ConfigError(f"y_max={y_max} must exceed n+1={k.n_min + 1}")
    step = h
    for refinement in range(max_refinements + 1):
        eta, est = _march_delay(k, beta, y_max, step)
        if est <= tol * beta:
            meta = {"beta": beta, "theta": beta * k.q, "method": "ode", "error_estimate": est,
                    "h_refinements": refinement, "in_p": True}
            return GridDensity(h=h, values=eta[:: 2 ** refinement], support_min=1.0, meta=meta)
        logger.debug("Delay marcher estimate %.3e above %.1e at h=%g, halving", est, tol * beta, step)
        step *= 0.5
    raise NumericDomainError(f"Delay marcher error estimate {est:.3e} above {tol * beta:.1e} "
                             f"after {max_refinements} refinements")


def tail_constant(k: Kernel, theta: float) -> float:
    """lim y^{1+theta} eta*_theta(y) = theta e^{theta gamma} / (kappa Gamma(1 - theta))"""
    if not (0.0 < theta < 1.0):
        raise NumericDomainError(f"Tail constant needs 0 < theta < 1, got {theta}")
    return float(theta * np.exp(theta * EULER_GAMMA) / (k.kappa * gamma(1.0 - theta)))


def moment_target(k: Kernel) -> float:
    """First moment of eta*_1: e^gamma / kappa"""
    return float(np.exp(EULER_GAMMA) / k.kappa)


@dataclass
class LowerBoundReport:
    """Slack of Q[eta](y) >= eta(y) Q'(int_1^{y/N} eta) on the grid, y >= N"""
    min_slack: float
    argmin_y: float
    passed: bool


def check_lower_bound(k: Kernel, eta: GridDensity, tol: float = 1e-8,
                      slack_floor: float = -1e-8) -> LowerBoundReport:
    """
    Monotonicity and sign are checked relative to max |eta|.

    Raises:
        PreconditionError: eta negative or increasing beyond tol
    """
    v = eta.values
    scale = float(np.max(np.abs(v), initial=0.0))
    if np.min(v) < -tol * scale:
        raise PreconditionError("Lower bound needs a nonnegative density")
    if np.max(np.diff(v)) > tol * scale:
        raise PreconditionError("Lower bound needs a non-increasing density")
    N = k.degree
    lhs = apply_Q(k, eta, allow_truncation=True).values
    cum = eta.cdf()
    H = np.interp(eta.y / N, eta.y, cum, left=0.0)
    slack = lhs - v * k.dQ(H)
    mask = eta.y >= N - 1e-12
    idx = np.argmin(np.where(mask, slack, np.inf))
    min_slack = float(slack[idx])
    return LowerBoundReport(min_slack=min_slack, argmin_y=float(eta.y[idx]), passed=min_slack >= slack_floor)


def laplace_transform(eta: GridDensity, p: np.ndarray) -> np.ndarray:
    """Trapezoid Laplace transform sum_i w_i v_i exp(-p y_i)"""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    return np.exp(-np.outer(p, eta.y)) @ (eta.weights * eta.values)


def complete_monotonicity_defect(eta: GridDensity, p_grid: Optional[np.ndarray] = None,
                                 k_max: int = 6) -> float:
    """min over k <= k_max and the grid of (-1)^k Delta^k eta-tilde(p); nonnegative for CM data"""
    if p_grid is None:
        p_grid = np.linspace(0.1, 2.0, 39)
    values = laplace_transform(eta, p_grid)
    worst = np.inf
    diff = values
    for order in range(k_max + 1):
        worst = min(worst, float(np.min((-1) ** order * diff)))
        diff = np.diff(diff)
    return worst


def decay_slope(eta: GridDensity, window: Tuple[float, float] = (15.0, 30.0)) -> float:
    """Least-squares slope of log eta over the window"""
    mask = (eta.y >= window[0]) & (eta.y <= window[1])
    v = eta.values[mask]
    if v.size < 3 or np.any(v <= 0.0):
        raise NumericDomainError(f"Cannot fit a log slope on {window}: nonpositive or too few values")
    model = LinearRegression().fit(eta.y[mask].reshape(-1, 1), np.log(v))
    return float(model.coef_[0])
