"""
Direct time integrator for the rescaled coarsening equation and the measurements
built on it: trace extraction, unscaling, number-density recovery, convergence
rates and the spectral residuals of the linearized operator.

The integrator works on the integral form. The initial datum is transported
afresh from tau = 0 at every step, and the source contributions accumulate in a
separate part that is transported step by step. The weight of each source
increment is the exact outflow through y = 1 read off the step-start state.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import PchipInterpolator
from scipy.signal import fftconvolve
from sklearn.linear_model import LinearRegression

from .errors import ConfigError, NumericDomainError, PreconditionError
from .grid import GridDensity, GridSpec, SpectralGrid, convolve_power, trapezoid_weights
from .kernel import Kernel
from .linearize import (
    CounterTermDecomposition, WeightedNormSpec, counter_term_zero, evolve_decomposition, forward_transform,
    inverse_transform, semigroup_apply, weighted_norm,
)
from .profiles import apply_Q, shift_T1, steady_state_spectral

logger = logging.getLogger(__name__)

LOG2 = float(np.log(2.0))
DEFAULT_DTAU = LOG2 / 32.0
DEFAULT_NORMS = (WeightedNormSpec(p=1, gamma=0.0), WeightedNormSpec(p=2, gamma=1.0))
CARRY_RESCALE_MAX = 1e-3


@dataclass
class EvolutionTrace:
    """Per-step record of an integration; snapshots are thinned by snapshot_stride"""
    q: float
    taus: List[float] = field(default_factory=list)
    beta_values: List[float] = field(default_factory=list)
    masses: List[float] = field(default_factory=list)
    min_values: List[float] = field(default_factory=list)
    norms: List[Dict[str, float]] = field(default_factory=list)
    snapshot_taus: List[float] = field(default_factory=list)
    snapshots: List[GridDensity] = field(default_factory=list)

    def record(self, tau: float, eta: GridDensity, norm_specs: Sequence[WeightedNormSpec]) -> None:
        self.taus.append(float(tau))
        self.beta_values.append(float(eta.values[0]))
        self.masses.append(eta.mass)
        self.min_values.append(float(np.min(eta.values)))
        self.norms.append({s.label(): weighted_norm(eta, s) for s in norm_specs})

    def snapshot(self, tau: float, eta: GridDensity) -> None:
        self.snapshot_taus.append(float(tau))
        self.snapshots.append(eta.with_values(eta.values.copy(), meta={"tau": float(tau)}))

    @property
    def final(self) -> GridDensity:
        return self.snapshots[-1]

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame({"tau": self.taus, "mass": self.masses, "beta": self.beta_values})
        norms = pd.DataFrame(self.norms)
        return pd.concat([df, norms], axis=1)


def _source(k: Kernel, eta: GridDensity, dt: float, target_mass: float) -> np.ndarray:
    """S_dt T1 Q[eta] scaled to target_mass; compensates the part cut at y_max"""
    shifted = shift_T1(apply_Q(k, eta, allow_truncation=True))
    moved = semigroup_apply(shifted, dt, kind="pchip")
    m = moved.mass
    if m <= 0.0:
        return np.zeros(eta.M)
    return moved.values * (target_mass / m)


def _outflow(eta: GridDensity, dt: float) -> float:
    """Mass on [1, e^dt] under the pchip interpolant: the integral of beta over the next dt"""
    upper = min(float(np.exp(dt)), eta.y_max)
    n = min(eta.M, int(np.ceil((upper - eta.y0) / eta.h)) + 4)
    return float(PchipInterpolator(eta.y[:n], eta.values[:n]).integrate(eta.y0, upper))


def integrate(k: Kernel, eta0: GridDensity, tau_end: float, dtau: float = DEFAULT_DTAU,
              snapshot_stride: int = 1, norm_specs: Sequence[WeightedNormSpec] = DEFAULT_NORMS,
              mass_tol: float = 1e-3, neg_tol: float = 1e-6) -> EvolutionTrace:
    """
    Advance eta0 to tau_end.

    Each step transports the initial datum from 0 and the accumulated source part
    by dtau. The outflow B is the integral of the step-start state over [1, e^dtau],
    and the new source increment is B Q(m) S_{dtau/2} T1 Q[eta] with Q[eta] taken at
    an explicit midpoint state. The interpolation mass error of the transport is
    folded into a rescaling of the carried source part, so mass is conserved to
    rounding and no value turns negative.

    Raises:
        ConfigError: dtau > log 2 / 8 or eta0 not a probability density
        NumericDomainError: mass drift beyond mass_tol or negativity beyond neg_tol
    """
    if not (0.0 < dtau <= LOG2 / 8.0 + 1e-15):
        raise ConfigError(f"dtau must lie in (0, log2/8], got {dtau}")
    if tau_end < 0:
        raise ConfigError(f"tau_end must be nonnegative, got {tau_end}")
    if abs(eta0.mass - 1.0) > 1e-6 or np.min(eta0.values) < -neg_tol:
        raise PreconditionError(f"Initial datum must be a probability density (mass {eta0.mass:.8g})")
    snapshot_stride = max(1, int(snapshot_stride))

    trace = EvolutionTrace(q=k.q)
    sigma = eta0.with_values(np.zeros(eta0.M))
    eta = eta0
    tau = 0.0
    trace.record(tau, eta, norm_specs)
    trace.snapshot(tau, eta)
    step = 0
    while tau < tau_end - 1e-12:
        dt = min(dtau, tau_end - tau)
        m_n = eta.mass
        source_mass = float(k.Q(m_n))
        outflow = _outflow(eta, dt)

        # midpoint state
        base_half = semigroup_apply(eta0, tau + 0.5 * dt, kind="pchip")
        sigma_half = semigroup_apply(sigma, 0.5 * dt, kind="pchip")
        predictor = (base_half.values + sigma_half.values
                     + _outflow(eta, 0.5 * dt) * _source(k, eta, 0.25 * dt, source_mass))
        eta_half = eta.with_values(predictor)

        base_next = semigroup_apply(eta0, tau + dt, kind="pchip")
        sigma_next = semigroup_apply(sigma, dt, kind="pchip")
        carried = sigma_next.values
        excess = m_n - base_next.mass - sigma_next.mass - outflow
        if sigma_next.mass > 0.0 and abs(excess) <= CARRY_RESCALE_MAX * sigma_next.mass:
            carried = carried * (1.0 + excess / sigma_next.mass)
            weight = outflow
        else:
            weight = max(outflow + excess, 0.0)
        sigma = sigma_next.with_values(carried + weight * _source(k, eta_half, 0.5 * dt, source_mass))
        eta = eta0.with_values(base_next.values + sigma.values, support_min=1.0)
        tau += dt
        step += 1

        drift = abs(eta.mass - 1.0)
        low = float(np.min(eta.values))
        if drift > mass_tol:
            raise NumericDomainError(f"Mass drifted by {drift:.3e} at tau={tau:.4f}")
        if low < -neg_tol:
            raise NumericDomainError(f"Negative value {low:.3e} at tau={tau:.4f}")
        trace.record(tau, eta, norm_specs)
        if step % snapshot_stride == 0 or tau >= tau_end - 1e-12:
            trace.snapshot(tau, eta)
    logger.info("Integrated to tau=%.4f in %d steps (final mass %.12f)", tau, step, eta.mass)
    return trace


def trace_beta(trace: EvolutionTrace, tau: float) -> float:
    """
    beta(tau) = e^{tau - tau0} eta(tau0, e^{tau - tau0}) from the latest snapshot tau0 <= tau
    within log 2.
    """
    candidates = [i for i, t0 in enumerate(trace.snapshot_taus) if 0.0 <= tau - t0 <= LOG2 + 1e-12]
    if not candidates:
        raise ConfigError(f"No snapshot within log 2 before tau={tau}")
    i = max(candidates, key=lambda j: trace.snapshot_taus[j])
    return beta_from_snapshot(trace.snapshots[i], tau - trace.snapshot_taus[i])


def beta_from_snapshot(snapshot: GridDensity, lag: float) -> float:
    scale = np.exp(lag)
    return float(scale * PchipInterpolator(snapshot.y, snapshot.values)(scale))


def unscale(eta: GridDensity, t: float) -> GridDensity:
    """rho(t, x) = eta(x / t) / t on the x grid [t, t y_max]"""
    if t < 1.0:
        raise ConfigError(f"Coarsening time must be at least 1, got {t}")
    return GridDensity(h=eta.h * t, values=eta.values / t, y0=eta.y0 * t,
                       support_min=eta.support_min * t, meta={"t": t})


def recover_number_density(trace: EvolutionTrace, N0: float) -> pd.DataFrame:
    """N(t) from dN/dt = -q beta(log t) N / t, i.e. N = N0 exp(-q int_0^tau beta)"""
    if N0 <= 0:
        raise ConfigError(f"N0 must be positive, got {N0}")
    taus = np.asarray(trace.taus)
    integral = cumulative_trapezoid(np.asarray(trace.beta_values), taus, initial=0.0)
    return pd.DataFrame({"t": np.exp(taus), "tau": taus, "N": N0 * np.exp(-trace.q * integral)})


@dataclass
class ConvergenceFit:
    rate: float
    taus: np.ndarray
    norms: np.ndarray
    norm: WeightedNormSpec
    gamma: float
    theta: float

    @property
    def bound(self) -> float:
        """Decay rate gamma - theta - 1/2 of the weighted-space estimate"""
        return self.gamma - self.theta - 0.5

    @property
    def relative_error(self) -> float:
        return (self.rate - self.bound) / self.bound


def edge_decomposition(k: Kernel, spec: GridSpec, gamma: float, theta: float = 1.0,
                       amplitude: float = 0.02, excess: float = 0.03) -> CounterTermDecomposition:
    """
    Counter term d = -amplitude y^-a on the padded grid with a = 1 + (1 + excess)(gamma - theta - 1/2),
    just inside L^2_{gamma - theta}.

    S_tau d = e^{-(a-1) tau} d wherever the cut at the padded end has not arrived, so
    the distance to eta*_theta decays at a - 1, within the factor 1 + excess of the bound.
    """
    if gamma <= theta + 0.5:
        raise ConfigError(f"gamma must exceed theta + 1/2, got gamma={gamma}, theta={theta}")
    base = counter_term_zero(k, spec, theta)
    a = 1.0 + (1.0 + excess) * (gamma - theta - 0.5)
    d = base.d.with_values(-amplitude * base.d.y ** (-a))
    d0 = float(SpectralGrid(spec).forward(d.values)[0].real)
    meta = {"tail_exponent": a, "amplitude": amplitude}
    return replace(base, d=d, d0=d0, meta=meta)


def decomposition_rate(k: Kernel, dec: CounterTermDecomposition, gamma: float,
                       window: Tuple[float, float] = (1.0, 3.0), n_samples: int = 9,
                       floor: float = 1e-12, start_floor: float = 1e-6) -> ConvergenceFit:
    """
    Fit -d/dtau log ||eta(tau) - eta*_theta||_{2, gamma - theta} on the window, with
    eta(tau) from the exact evolution of the decomposition.

    Raises:
        NumericDomainError: the decomposition is already the steady state, or a norm below floor
    """
    theta = dec.theta
    if gamma <= theta + 0.5:
        raise ConfigError(f"gamma must exceed theta + 1/2, got gamma={gamma}, theta={theta}")
    norm = WeightedNormSpec(p=2, gamma=gamma - theta)
    star = inverse_transform(k, counter_term_zero(k, dec.spec, theta, eta_hat0=dec.eta_hat0))
    distance = lambda eta: weighted_norm(star.with_values(eta.values - star.values), norm)
    initial = distance(inverse_transform(k, dec))
    if initial < start_floor:
        raise NumericDomainError(f"Degenerate fit: initial distance {initial:.2e} is at the numerical floor")
    taus = np.linspace(window[0], window[1], n_samples)
    norms = np.array([distance(evolve_decomposition(k, dec, t)) for t in taus])
    if np.min(norms) < floor:
        raise NumericDomainError(f"Degenerate fit: distance {np.min(norms):.2e} below floor {floor:.0e}")
    model = LinearRegression().fit(taus.reshape(-1, 1), np.log(norms))
    fit = ConvergenceFit(rate=float(-model.coef_[0]), taus=taus, norms=norms, norm=norm, gamma=gamma, theta=theta)
    logger.info("Decay rate %.4f against bound %.4f (%s)", fit.rate, fit.bound, norm.label())
    return fit


def convergence_rate(k: Kernel, eta0: GridDensity, gamma: float, window: Tuple[float, float] = (1.0, 3.0),
                     theta: float = 1.0, n_samples: int = 9, floor: float = 1e-12,
                     start_floor: float = 1e-6) -> ConvergenceFit:
    """Decay rate of eta0 towards eta*_theta; see decomposition_rate"""
    if gamma <= theta + 0.5:
        raise ConfigError(f"gamma must exceed theta + 1/2, got gamma={gamma}, theta={theta}")
    dec = forward_transform(k, eta0, theta)
    return decomposition_rate(k, dec, gamma, window, n_samples, floor, start_floor)


def _grid_convolve(a: np.ndarray, b: np.ndarray, h: float, K: int) -> np.ndarray:
    """Trapezoid convolution of two grid functions on [1, y_max]; result starts at y = 2"""
    M = len(a)
    w = trapezoid_weights(M, h)
    nu = fftconvolve(w * a, w * b)
    out = np.zeros(M)
    if K < M:
        n = M - K
        out[K:] = nu[:n] / w[K:]
    return out


def linearized_apply(k: Kernel, b: GridDensity, eta_star: GridDensity, mean_tol: float = 1e-8) -> GridDensity:
    """
    A b = (y b)' + (1/q) T1(Q'[eta*] * b) + b(1) T1 Q[eta*], with
    Q'[eta] * b = p_1 b + sum_{j>=2} j p_j eta^{*(j-1)} * b.

    Raises:
        PreconditionError: b not mean-zero within mean_tol
    """
    scale = max(1.0, float(np.dot(b.weights, np.abs(b.values))))
    if abs(b.mass) > mean_tol * scale:
        raise PreconditionError(f"Linearized operator needs a mean-zero perturbation (mean {b.mass:.3e})")
    if eta_star.M != b.M or eta_star.h != b.h:
        raise ConfigError("b and eta* must share a grid")
    h = b.h
    K = eta_star.spec.cells_per_unit
    transport = np.gradient(b.y * b.values, h)
    conv = np.zeros(b.M)
    for j, p in enumerate(k.weights, start=1):
        if p == 0.0:
            continue
        if j == 1:
            conv += p * b.values
        else:
            power, _ = convolve_power(eta_star.values, h, j - 1, K)
            conv += j * p * _grid_convolve(power, b.values, h, K)
    coupling = shift_T1(b.with_values(conv)).values / k.q
    qstar = shift_T1(apply_Q(k, eta_star, allow_truncation=True)).values
    return b.with_values(transport + coupling + b.values[0] * qstar)


def b_delta(spec: GridSpec, delta: float, bump_end: float = 2.0) -> GridDensity:
    """
    Lipschitz mean-zero test function y^-delta - A (bump_end - y)_+, with the
    amplitude A solved so that the grid mean vanishes.
    """
    if delta <= 1.0:
        raise ConfigError(f"delta must exceed 1, got {delta}")
    if not (1.0 < bump_end < spec.y_max):
        raise ConfigError(f"bump_end must lie inside (1, y_max), got {bump_end}")
    y = spec.y
    weights = trapezoid_weights(spec.M, spec.h)
    tail = y ** (-delta)
    bump = np.clip(bump_end - y, 0.0, None)
    amplitude = float(np.dot(weights, tail) / np.dot(weights, bump))
    return GridDensity(h=spec.h, values=tail - amplitude * bump, support_min=1.0,
                       meta={"delta": delta, "amplitude": amplitude})


def spectral_residuals(k: Kernel, gamma: float, deltas: Sequence[float],
                     eta_star: Optional[GridDensity] = None,
                     spec: Optional[GridSpec] = None) -> Dict[float, float]:
    """||A b_delta + (gamma - 3/2) b_delta||_{2,gamma} / ||b_delta||_{2,gamma} per delta"""
    spec = spec or GridSpec()
    eta_star = eta_star or steady_state_spectral(k, 1.0, spec)
    norm = WeightedNormSpec(p=2, gamma=gamma)
    ratios = {}
    for delta in deltas:
        b = b_delta(spec, delta)
        ab = linearized_apply(k, b, eta_star)
        residual = ab.with_values(ab.values + (gamma - 1.5) * b.values)
        ratios[float(delta)] = weighted_norm(residual, norm) / weighted_norm(b, norm)
    return ratios
