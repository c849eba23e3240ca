"""
Global linearization N = F^-1 o phi o F, its inverse, the counter-term split
N(eta) = (theta/q) w* + d, the cut-off semigroup S_tau and weighted norms.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, Optional

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.interpolate import CubicSpline, PchipInterpolator

from .errors import ConfigError, NumericDomainError
from .grid import GridDensity, GridSpec, SpectralGrid
from .kernel import Kernel, phi_eval, phi_regular, psi_of
from .special import EULER_GAMMA, chi, w_star_hat

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class WeightedNormSpec:
    """||f||_{p,gamma} = ||y^gamma f||_{L^p}"""
    p: int = 2
    gamma: float = 1.0

    def __post_init__(self):
        if self.p not in (1, 2):
            raise ConfigError(f"Weighted norms support p in {{1, 2}}, got {self.p}")
        if self.gamma < 0:
            raise ConfigError(f"Weight exponent must be nonnegative, got {self.gamma}")

    def label(self) -> str:
        return f"norm[p={self.p},gamma={self.gamma:g}]"


def weighted_norm(f: GridDensity, spec: WeightedNormSpec) -> float:
    integrand = (f.y ** spec.gamma * np.abs(f.values)) ** spec.p
    return float(np.dot(f.weights, integrand) ** (1.0 / spec.p))


def semigroup_apply(f: GridDensity, tau: float, kind: str = "cubic") -> GridDensity:
    """
    (S_tau f)(y) = e^tau f(e^tau y), zero where e^tau y leaves the stored grid.

    kind="pchip" uses the shape-preserving interpolant (no new negative values).
    """
    if tau < 0:
        raise ConfigError(f"tau must be nonnegative, got {tau}")
    if tau == 0.0:
        return f.with_values(f.values.copy())
    if kind == "cubic":
        interp = CubicSpline(f.y, f.values)
    elif kind == "pchip":
        interp = PchipInterpolator(f.y, f.values)
    else:
        raise ConfigError(f"Unknown interpolation kind: {kind}")
    scale = np.exp(tau)
    x = scale * f.y
    inside = x <= f.y_max + 1e-12
    out = np.zeros(f.M)
    out[inside] = scale * interp(np.minimum(x[inside], f.y_max))
    return f.with_values(out, support_min=max(f.y0, f.support_min / scale))


@dataclass
class CounterTermDecomposition:
    """
    N(eta) = (theta/q) w* + d. d lives on the zero-padded grid so that its tail
    is not cut at y_max; eta_hat0 is the transform of eta at xi = 0.
    """
    theta: float
    theta_over_q: float
    d: GridDensity
    d0: float
    eta_hat0: float
    spec: GridSpec
    meta: Dict = field(default_factory=dict)

    @property
    def d_on_grid(self) -> GridDensity:
        return self.d.with_values(self.d.values[: self.spec.M])

    def with_d(self, d: GridDensity) -> "CounterTermDecomposition":
        return replace(self, d=d, meta=dict(self.meta))


def _spectral_grid(spec: GridSpec) -> SpectralGrid:
    return SpectralGrid(spec)


def _small_frequency_band(k: Kernel, eta_hat: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """
    d-hat for theta = 1 written as (-log J + phi_reg(eta-hat) + gamma_E - chi(i xi)) / q
    with J = (1 - eta-hat) / (i xi), so that no two diverging logs are subtracted.
    """
    J = (1.0 - eta_hat) / (1j * xi)
    return (-np.log(J) + phi_regular(k, eta_hat) + EULER_GAMMA - chi(1j * xi)) / k.q


def _small_frequency_slope(k: Kernel, eta: GridDensity) -> float:
    """Coefficient c with d-hat(xi) = d-hat(0) + i c xi + O(xi^2) at theta = 1"""
    mass = eta.mass
    mu = eta.first_moment / mass
    m2 = float(np.dot(eta.weights, eta.y ** 2 * eta.values)) / mass
    q2 = float(P.polyval(1.0, P.polyder(k._poly, 2)))
    return (m2 / (2.0 * mu) - mu * q2 / (2.0 * k.q) - 1.0) / k.q


def forward_transform(k: Kernel, eta: GridDensity, theta_hint: float = 1.0) -> CounterTermDecomposition:
    """
    d-hat = phi(eta-hat) - (theta/q) E1(i xi) on the padded grid, d = F^-1 d-hat.

    For theta = 1 the band |xi| < 2 pi / y_max uses the regularized form and
    d-hat(0) = (gamma_E - log(kappa mu)) / q. For theta < 1 the xi = 0 sample is the
    even quadratic extrapolation of the real part from the first two frequencies.

    Raises:
        NumericDomainError: |eta-hat| >= 1 at a nonzero frequency
    """
    if not (0.0 < theta_hint <= 1.0):
        raise ConfigError(f"theta_hint must lie in (0, 1], got {theta_hint}")
    spec = GridSpec(h=eta.h, y_max=eta.y_max)
    grid = _spectral_grid(spec)
    eta_hat = grid.forward(eta.values)
    nz = grid.xi != 0.0
    if np.any(np.abs(eta_hat[nz]) >= 1.0):
        raise NumericDomainError("|eta-hat| >= 1 at a nonzero frequency; input is not a probability density")
    theta_over_q = theta_hint / k.q
    d_hat = np.zeros(grid.Mp, dtype=complex)
    d_hat[nz] = phi_eval(k, eta_hat[nz]) - theta_over_q * w_star_hat(grid.xi[nz])
    meta: Dict = {"w_hat_abs_max": float(np.max(np.abs(d_hat[nz] + theta_over_q * w_star_hat(grid.xi[nz]))))}
    if theta_hint == 1.0:
        band = nz & (np.abs(grid.xi) < 2.0 * np.pi / eta.y_max)
        d_hat[band] = _small_frequency_band(k, eta_hat[band], grid.xi[band])
        mu = eta.first_moment / eta.mass
        d_hat[0] = (EULER_GAMMA - np.log(k.kappa * mu)) / k.q
        slope = _small_frequency_slope(k, eta)
        series = d_hat[0] + 1j * slope * grid.xi[band]
        meta["first_moment"] = mu
        meta["d0_analytic"] = float(d_hat[0].real)
        meta["small_xi_slope"] = slope
        meta["small_xi_band"] = int(np.sum(band))
        meta["small_xi_series_defect"] = float(np.max(np.abs(d_hat[band] - series), initial=0.0))
    else:
        d_hat[0] = (4.0 * d_hat[1].real - d_hat[2].real) / 3.0
    d_values = grid.inverse(d_hat)
    d = GridDensity(h=spec.h, values=d_values, support_min=1.0)
    return CounterTermDecomposition(theta=theta_hint, theta_over_q=theta_over_q, d=d, d0=float(d_hat[0].real),
                                    eta_hat0=float(eta_hat[0].real), spec=spec, meta=meta)


def counter_term_zero(k: Kernel, spec: GridSpec, theta: float = 1.0,
                      eta_hat0: float = 1.0) -> CounterTermDecomposition:
    """Decomposition with d = 0, whose inverse is eta*_theta"""
    grid = _spectral_grid(spec)
    d = GridDensity(h=spec.h, values=np.zeros(grid.Mp), support_min=1.0)
    return CounterTermDecomposition(theta=theta, theta_over_q=theta / k.q, d=d, d0=0.0,
                                    eta_hat0=eta_hat0, spec=spec)


def inverse_transform(k: Kernel, dec: CounterTermDecomposition,
                      reference: Optional[GridDensity] = None,
                      norm: WeightedNormSpec = WeightedNormSpec(p=2, gamma=1.0)) -> GridDensity:
    """
    eta-hat = psi((theta/q) w*-hat + d-hat), inverted and cut to [1, y_max].

    psi comes from the Psi series inside the guarded disk and from continuation
    outside it, so large |1 - exp(-q w)| at aliased frequencies is not an error.

    Raises:
        NumericDomainError: the continuation of psi diverged
    """
    grid = _spectral_grid(dec.spec)
    values = dec.d.values
    d_hat = grid.forward(grid.pad(values) if len(values) != grid.Mp else values)
    nz = grid.xi != 0.0
    w = dec.theta_over_q * w_star_hat(grid.xi[nz]) + d_hat[nz]
    eta_hat = np.full(grid.Mp, dec.eta_hat0, dtype=complex)
    eta_hat[nz] = psi_of(k, w)
    full = grid.inverse(eta_hat)
    M = dec.spec.M
    eta = GridDensity(h=dec.spec.h, values=full[:M], support_min=1.0)
    meta: Dict = {
        "theta": dec.theta,
        "min_value": float(np.min(eta.values)),
        "tail_mass": float(np.dot(grid.w[M:], full[M:])),
        "first_moment": eta.first_moment,
        "moment_target": float(np.exp(EULER_GAMMA - k.q * float(d_hat[0].real)) / k.kappa),
        "psi_arg_max": float(np.max(np.abs(1.0 - np.exp(-k.q * w)))),
    }
    if reference is not None:
        d_norm = weighted_norm(dec.d_on_grid, norm)
        gap = weighted_norm(eta.with_values(eta.values - reference.values), norm)
        meta["lipschitz_ratio"] = gap / d_norm if d_norm > 0 else float("nan")
    eta.meta.update(meta)
    return eta


def evolve_exact(k: Kernel, eta0: GridDensity, tau: float, theta_hint: float = 1.0) -> GridDensity:
    """eta(tau) = N^-1((theta/q) w* + S_tau d) with d from eta0"""
    dec = forward_transform(k, eta0, theta_hint)
    return evolve_decomposition(k, dec, tau)


def evolve_decomposition(k: Kernel, dec: CounterTermDecomposition, tau: float) -> GridDensity:
    moved = dec.with_d(semigroup_apply(dec.d, tau, kind="cubic"))
    eta = inverse_transform(k, moved)
    eta.meta["tau"] = tau
    return eta
