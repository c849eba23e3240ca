import numpy as np
import pytest

from src.core.errors import ConfigError, NumericDomainError, PreconditionError
from src.core.grid import GridDensity, GridSpec, uniform_density
from src.core.kernel import lambda_decay
from src.core.profiles import (
    apply_Q, check_lower_bound, complete_monotonicity_defect, decay_slope,
    generalized_profile_spectral, moment_target, shift_T1, steady_state_ode,
    steady_state_spectral, tail_constant,
)
from src.core.special import EULER_GAMMA


def test_first_interval_is_beta_over_y(star1):
    # trapezoid renormalization shifts values by O(h^2)
    y = star1.y
    mask = y <= 3.0
    assert np.max(np.abs(star1.values[mask] - 0.5 / y[mask])) <= 5e-5


def test_star1_is_probability_density(star1):
    assert np.isclose(star1.mass, 1.0, atol=1e-6)
    assert star1.meta["in_p"]
    assert np.min(star1.values) >= 0.0


def test_first_moment_identity(square, star1):
    target = moment_target(square)
    assert np.isclose(target, 2.0 * np.exp(EULER_GAMMA))
    assert abs(star1.first_moment - target) / target <= 1e-3


def test_spectral_matches_delay_ode(square, star1):
    ode = steady_state_ode(square, 0.5, y_max=12.0, h=star1.h)
    assert np.max(np.abs(star1.values[: ode.M] - ode.values)) <= 1e-4


def test_dickman_value(identity):
    eta = steady_state_ode(identity, 1.0, y_max=6.0)
    assert abs(3.0 * eta(np.array([3.0]))[0] - (1.0 - np.log(2.0))) <= 1e-6


def test_ode_first_interval(square):
    eta = steady_state_ode(square, 0.25, y_max=8.0, h=1.0 / 32.0)
    mask = eta.y <= 3.0
    assert np.allclose(eta.values[mask], 0.25 / eta.y[mask])
    assert eta.meta["theta"] == 0.5


def test_ode_rejects_short_grid(square):
    with pytest.raises(ConfigError):
        steady_state_ode(square, 0.5, y_max=2.5)


def test_theta_range_rejected(square, grid):
    with pytest.raises(ConfigError):
        steady_state_spectral(square, 1.5, grid)
    with pytest.raises(ConfigError):
        steady_state_spectral(square, 0.0, grid)


def test_heavy_tail_profile_keeps_tail_mass(square, grid):
    eta = steady_state_spectral(square, 0.5, grid)
    assert eta.meta["tail_mass"] > 0.0
    assert eta.mass < 1.0
    assert np.all(np.diff(eta.values) <= 1e-9)


def test_generalized_profile_flags_outside_p(square, small_grid):
    eta = generalized_profile_spectral(square, 2.0, small_grid)
    assert eta.meta["in_p"] is False
    assert eta.meta["beta"] == 1.0
    assert "min_value" in eta.meta


def test_tail_constant_value(square):
    assert np.isclose(tail_constant(square, 0.5), 0.75295, atol=1e-5)
    with pytest.raises(NumericDomainError):
        tail_constant(square, 1.0)


@pytest.mark.slow
def test_tail_law(square):
    eta = steady_state_spectral(square, 0.5, GridSpec(h=1.0 / 16.0, y_max=400.0, pad=32))
    scaled = 300.0 ** 1.5 * eta(np.array([300.0]))[0]
    assert abs(scaled - tail_constant(square, 0.5)) / tail_constant(square, 0.5) <= 0.03


def test_apply_Q_mass_identity(square, grid):
    eta = uniform_density(grid)
    out = apply_Q(square, eta)
    assert np.isclose(out.mass + out.meta["truncated_mass"], float(square.Q(eta.mass)), atol=1e-12)
    assert out.support_min == 2.0


def test_apply_Q_overflow(square):
    spec = GridSpec(h=1.0 / 16.0, y_max=3.0)
    eta = uniform_density(spec, 1.0, 3.0)
    with pytest.raises(NumericDomainError):
        apply_Q(square, eta)
    assert apply_Q(square, eta, allow_truncation=True).meta["truncated_mass"] > 0.0


def test_shift_T1(grid):
    eta = uniform_density(grid)
    shifted = shift_T1(eta)
    assert np.array_equal(shifted.values[64:128], eta.values[:64])
    assert np.all(shifted.values[:64] == 0.0)
    assert shifted.support_min == eta.support_min + 1.0


def test_lower_bound_holds_for_star1(square, star1):
    report = check_lower_bound(square, star1)
    assert report.passed
    assert report.argmin_y >= 2.0


def test_lower_bound_needs_monotone_density(square, grid):
    bumpy = GridDensity(h=grid.h, values=np.sin(grid.y) ** 2)
    with pytest.raises(PreconditionError):
        check_lower_bound(square, bumpy)


@pytest.mark.parametrize('theta', [0.5, 1.0])
def test_complete_monotonicity(square, grid, theta):
    eta = steady_state_spectral(square, theta, grid)
    assert complete_monotonicity_defect(eta) >= -1e-8


def test_exponential_decay_of_star1(square, star1):
    slope = decay_slope(star1, window=(10.0, 25.0))
    assert slope < 0.0


def test_lower_bound_identity_kernel_is_tight(identity, grid):
    eta = GridDensity(h=grid.h, values=1.0 / grid.y ** 2)
    report = check_lower_bound(identity, eta)
    assert abs(report.min_slack) <= 1e-12


def test_lower_bound_power_law(square):
    spec = GridSpec(h=1.0 / 32.0, y_max=40.0)
    eta = GridDensity(h=spec.h, values=1.0 / spec.y ** 2)
    assert check_lower_bound(square, eta).passed


def test_lower_bound_heavy_tail_profile(square, grid):
    assert check_lower_bound(square, steady_state_spectral(square, 0.5, grid)).passed


def test_star1_strictly_decreasing_above_rounding(star1):
    v = star1.values
    step = np.diff(v)
    assert np.max(step) <= 1e-8 * v[0]
    resolved = v[1:] > 1e-5 * v[0]
    assert resolved.sum() > 10 * 64
    assert np.all(step[resolved] < 0.0)


def test_decay_slope_matches_lambda(square, star1):
    lam = lambda_decay(square)
    slope = decay_slope(star1, window=(15.0, 30.0))
    assert abs(slope + lam) <= 0.2 * lam


def test_ode_refines_until_estimate_is_met(square):
    coarse = steady_state_ode(square, 0.5, y_max=8.0, h=1.0 / 16.0, tol=np.inf)
    est = coarse.meta["error_estimate"]
    assert est > 0.0
    fine = steady_state_ode(square, 0.5, y_max=8.0, h=1.0 / 16.0, tol=0.99 * est / 0.5, max_refinements=4)
    assert fine.meta["h_refinements"] >= 1
    assert fine.meta["error_estimate"] <= 0.99 * est
    assert fine.h == coarse.h
    assert fine.M == coarse.M
    assert np.allclose(fine.values, coarse.values, atol=1e-3)


def test_ode_raises_when_estimate_cannot_be_met(square):
    with pytest.raises(NumericDomainError):
        steady_state_ode(square, 0.5, y_max=8.0, h=1.0 / 16.0, tol=0.0, max_refinements=1)
