import numpy as np
import pytest

from src.core.errors import ConfigError, NumericDomainError
from src.core.grid import GridDensity, SpectralGrid, uniform_density
from src.core.kernel import phi_eval
from src.core.linearize import (
    WeightedNormSpec, counter_term_zero, evolve_exact, forward_transform, inverse_transform,
    semigroup_apply, weighted_norm,
)
from src.core.special import EULER_GAMMA, w_star_hat


def test_weighted_norm_spec_validation():
    with pytest.raises(ConfigError):
        WeightedNormSpec(p=3)
    with pytest.raises(ConfigError):
        WeightedNormSpec(gamma=-0.5)
    assert WeightedNormSpec(p=2, gamma=1.5).label() == "norm[p=2,gamma=1.5]"


def test_weighted_norm_of_uniform(uniform):
    assert np.isclose(weighted_norm(uniform, WeightedNormSpec(p=1, gamma=0.0)), 1.0)
    assert np.isclose(weighted_norm(uniform, WeightedNormSpec(p=1, gamma=1.0)), 1.5, atol=1e-6)
    assert np.isclose(weighted_norm(uniform, WeightedNormSpec(p=2, gamma=0.0)), 1.0, atol=1e-2)


def test_semigroup_zero_time_is_copy(uniform):
    out = semigroup_apply(uniform, 0.0)
    assert np.array_equal(out.values, uniform.values)
    assert out.values is not uniform.values


def test_semigroup_removes_mass_below_one(grid):
    eta = GridDensity(h=grid.h, values=np.exp(-(grid.y - 1.0)))
    tau = np.log(1.5)
    moved = semigroup_apply(eta, tau)
    # mass of e^tau f(e^tau y) on [1, inf) is the mass of f on [e^tau, inf)
    assert np.isclose(moved.mass, np.exp(-0.5), atol=1e-4)


def test_semigroup_rejects_negative_time(uniform):
    with pytest.raises(ConfigError):
        semigroup_apply(uniform, -0.1)


def test_counter_term_zero_moment(square, uniform):
    dec = forward_transform(square, uniform)
    analytic = (EULER_GAMMA - np.log(square.kappa * 1.5)) / square.q
    assert abs(dec.d0 - analytic) <= 1e-4
    assert np.isclose(dec.meta["d0_analytic"], analytic, atol=1e-6)
    assert dec.theta_over_q == 0.5


def test_roundtrip_moment_identity(square, uniform):
    dec = forward_transform(square, uniform)
    back = inverse_transform(square, dec)
    target = np.exp(EULER_GAMMA - square.q * dec.d0) / square.kappa
    assert abs(back.first_moment - target) / target <= 1e-3


def test_forward_inverse_reproduces_density(square, uniform):
    back = inverse_transform(square, forward_transform(square, uniform))
    l1 = np.dot(uniform.weights, np.abs(back.values - uniform.values))
    assert l1 <= 1e-8


def test_zero_counter_term_gives_steady_state(square, grid, star1):
    star = inverse_transform(square, counter_term_zero(square, grid))
    assert np.max(np.abs(star.values - star1.values)) <= 1e-4


def test_evolve_exact_at_zero_time(square, uniform):
    eta = evolve_exact(square, uniform, 0.0)
    assert np.allclose(eta.values, uniform.values, atol=1e-8)
    assert eta.meta["tau"] == 0.0


def test_evolve_exact_keeps_mass(square, uniform):
    eta = evolve_exact(square, uniform, 1.0)
    assert abs(eta.mass - 1.0) <= 1e-3


def test_lipschitz_ratio_reported(square, uniform, star1):
    dec = forward_transform(square, uniform)
    eta = inverse_transform(square, dec, reference=star1)
    assert np.isfinite(eta.meta["lipschitz_ratio"])
    assert eta.meta["lipschitz_ratio"] > 0.0


def test_transform_rejects_non_probability(square, uniform):
    doubled = uniform.with_values(2.0 * uniform.values)
    with pytest.raises(NumericDomainError):
        forward_transform(square, doubled)


def test_theta_hint_range(square, uniform):
    with pytest.raises(ConfigError):
        forward_transform(square, uniform, theta_hint=1.5)


def _spike(grid):
    values = np.zeros(grid.M)
    values[31:34] = [16.0, 32.0, 16.0]
    return GridDensity(h=grid.h, values=values)


def test_roundtrip_outside_series_disk(square, grid):
    spike = _spike(grid)
    back = inverse_transform(square, forward_transform(square, spike))
    assert back.meta["psi_arg_max"] > square.radius_R
    assert np.dot(spike.weights, np.abs(back.values - spike.values)) <= 1e-8


def test_small_frequency_band_matches_direct_formula(square, uniform):
    dec = forward_transform(square, uniform)
    grid = SpectralGrid(dec.spec)
    d_hat = grid.forward(dec.d.values)
    band = (grid.xi != 0.0) & (np.abs(grid.xi) < 2.0 * np.pi / uniform.y_max)
    eta_hat = grid.forward(uniform.values)[band]
    direct = phi_eval(square, eta_hat) - 0.5 * w_star_hat(grid.xi[band])
    assert dec.meta["small_xi_band"] == int(np.sum(band)) > 0
    assert np.allclose(d_hat[band], direct, atol=1e-10)


def test_small_frequency_slope(square, uniform):
    dec = forward_transform(square, uniform)
    grid = SpectralGrid(dec.spec)
    xi1 = grid.xi[1]
    d_hat1 = grid.forward(dec.d.values)[1]
    assert abs(d_hat1.real - dec.d0) <= 1e-2
    assert abs(d_hat1.imag / xi1 - dec.meta["small_xi_slope"]) <= 5e-2


def test_d0_uses_analytic_value_exactly(square, grid):
    eta = _exponential(grid)
    dec = forward_transform(square, eta)
    mu = eta.first_moment / eta.mass
    assert dec.d0 == pytest.approx((EULER_GAMMA - np.log(square.kappa * mu)) / square.q, abs=1e-14)


def _exponential(grid):
    eta = GridDensity(h=grid.h, values=np.exp(-(grid.y - 1.0)))
    return eta.with_values(eta.values / eta.mass)


def _linearized(k, eta):
    dec = forward_transform(k, eta)
    return dec.d_on_grid.values + dec.theta_over_q / eta.y


@pytest.mark.parametrize("taus", [(0.25, 0.5), (0.5, 1.0), (1.0, 0.3)])
def test_semigroup_law(grid, taus):
    f = GridDensity(h=grid.h, values=grid.y * np.exp(-(grid.y - 1.0)))
    twice = semigroup_apply(semigroup_apply(f, taus[0]), taus[1])
    once = semigroup_apply(f, taus[0] + taus[1])
    assert np.max(np.abs(twice.values - once.values)) <= 1e-6


@pytest.mark.parametrize("tau", [0.1, 0.7, 2.0])
def test_semigroup_leaves_w_star_invariant(grid, tau):
    w = GridDensity(h=grid.h, values=1.0 / grid.y)
    moved = semigroup_apply(w, tau)
    inside = np.exp(tau) * grid.y <= grid.y_max + 1e-12
    assert np.allclose(moved.values[inside], w.values[inside], rtol=0.0, atol=1e-7)
    assert np.all(moved.values[~inside] == 0.0)


@pytest.mark.parametrize("tau", [0.25, 0.5, 1.0])
def test_semigroup_decay_bound(grid, tau):
    gamma = 3.0
    norm = WeightedNormSpec(p=2, gamma=gamma - 1.0)
    for values in (np.exp(-(grid.y - 1.0)), grid.y ** -4.0 * np.cos(grid.y)):
        f = GridDensity(h=grid.h, values=values)
        ratio = weighted_norm(semigroup_apply(f, tau), norm) / weighted_norm(f, norm)
        assert ratio <= np.exp(-(gamma - 1.5) * tau) * (1.0 + 1e-6)


def test_linearization_is_identity_below_n_plus_one(square, grid):
    eta = _exponential(grid)
    n_eta = _linearized(square, eta)
    window = (grid.y > 1.1) & (grid.y < 2.9)
    assert np.max(np.abs(n_eta[window] - eta.values[window])) <= 1e-3


@pytest.mark.parametrize("make", [_exponential, uniform_density])
def test_linearization_is_nonnegative(square, grid, make):
    n_eta = _linearized(square, make(grid))
    assert np.min(n_eta) >= -1e-4 * np.max(n_eta)


def test_linearization_has_logarithmic_singularity(square, grid):
    sg = SpectralGrid(grid)
    nz = sg.xi != 0.0
    w_hat = phi_eval(square, sg.forward(_exponential(grid).values)[nz])
    envelope = np.maximum(1.0, -np.log(np.abs(sg.xi[nz])))
    assert np.max(np.abs(w_hat) / envelope) <= 5.0
