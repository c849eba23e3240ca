import numpy as np
import pytest

from src.core.errors import ConfigError, NumericDomainError, PreconditionError
from src.core.grid import (
    GridDensity, GridSpec, SpectralGrid, apply_weights_polynomial, clamp_negatives,
    density_from_function, trapezoid_weights, uniform_density,
)


def test_grid_spec_nodes(grid):
    assert grid.M == 63 * 64 + 1
    assert grid.y[0] == 1.0
    assert np.isclose(grid.y[-1], 64.0)
    assert grid.cells_per_unit == 64


def test_grid_spec_validation():
    with pytest.raises(ConfigError):
        GridSpec(h=-1.0)
    with pytest.raises(ConfigError):
        GridSpec(y_max=1.0)
    with pytest.raises(ConfigError):
        GridSpec(pad=1)
    with pytest.raises(PreconditionError):
        GridSpec(h=0.3, y_max=10.0).cells_per_unit


def test_trapezoid_weights():
    w = trapezoid_weights(5, 0.5)
    assert np.allclose(w, [0.25, 0.5, 0.5, 0.5, 0.25])


def test_uniform_density(grid):
    eta = uniform_density(grid, 1.0, 2.0)
    assert np.isclose(eta.mass, 1.0)
    assert eta.values[0] > 0.0
    # jump node at y = 2 carries half the value
    assert np.isclose(eta.values[64], 0.5 * eta.values[63])
    assert np.all(eta.values[65:] == 0.0)
    with pytest.raises(ConfigError):
        uniform_density(grid, 0.5, 2.0)


def test_moments_of_uniform(grid):
    eta = uniform_density(grid)
    assert np.isclose(eta.first_moment, 1.5, atol=1e-6)


def test_cdf_and_interpolation(grid):
    eta = uniform_density(grid)
    cum = eta.cdf()
    assert cum[0] == 0.0
    assert np.isclose(cum[-1], eta.mass)
    assert np.all(np.diff(cum) >= 0.0)
    assert eta(np.array([0.5, 100.0])).tolist() == [0.0, 0.0]


def test_csv_roundtrip(tmp_path, grid):
    eta = density_from_function(grid, lambda y: np.exp(-(y - 1.0)))
    path = str(tmp_path / "eta.csv")
    eta.to_csv(path, header_lines=["source: test"])
    back = GridDensity.from_csv(path)
    assert back.h == eta.h
    assert back.M == eta.M
    assert np.array_equal(back.values, eta.values)


def test_csv_roundtrip_keeps_every_bit(tmp_path, small_grid):
    rng = np.random.default_rng(7)
    values = rng.random(small_grid.M) * np.exp(-rng.random(small_grid.M) * 40.0)
    eta = GridDensity(h=small_grid.h, values=values)
    path = str(tmp_path / "noisy.csv")
    eta.to_csv(path)
    back = GridDensity.from_csv(path)
    assert back.values.tobytes() == eta.values.tobytes()


def test_binary_roundtrip_bit_exact(tmp_path, grid):
    eta = uniform_density(grid, 1.0, 3.0)
    path = str(tmp_path / "eta.bin")
    eta.to_binary(path)
    back = GridDensity.from_binary(path)
    assert back.values.tobytes() == eta.values.tobytes()
    assert (back.h, back.support_min, back.y0) == (eta.h, eta.support_min, eta.y0)


def test_binary_rejects_foreign_file(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"not a grid snapshot at all" * 4)
    with pytest.raises(ConfigError):
        GridDensity.from_binary(str(path))


def test_missing_files(tmp_path):
    with pytest.raises(FileNotFoundError):
        GridDensity.from_csv(str(tmp_path / "missing.csv"))
    with pytest.raises(FileNotFoundError):
        GridDensity.from_binary(str(tmp_path / "missing.bin"))


def test_clamp_negatives():
    assert clamp_negatives(np.array([1.0, -1e-12])).tolist() == [1.0, 0.0]
    with pytest.raises(NumericDomainError):
        clamp_negatives(np.array([1.0, -1e-3]))


def test_square_convolution_conserves_mass(grid):
    eta = uniform_density(grid)
    values, truncated = apply_weights_polynomial((0.0, 1.0), eta.values, grid.h, grid.cells_per_unit)
    conv = eta.with_values(values)
    assert np.isclose(conv.mass + truncated, 1.0, atol=1e-12)
    assert np.all(values[: grid.cells_per_unit] == 0.0)
    # uniform * uniform is the triangle on [2, 4] with peak 1 at y = 3
    assert np.isclose(conv(np.array([3.0]))[0], 1.0, atol=1e-2)


def test_spectral_grid_is_odd_length(grid):
    sg = SpectralGrid(grid)
    assert sg.Mp % 2 == 1
    assert sg.xi[0] == 0.0


def test_forward_exact_on_jump_profile():
    spec = GridSpec(h=1.0 / 32.0, y_max=16.0)
    sg = SpectralGrid(spec)
    f = np.exp(-(sg.y_pad - 1.0))
    exact = np.exp(-1j * sg.xi) / (1.0 + 1j * sg.xi)
    assert np.allclose(sg.forward(f), exact, atol=1e-12)


def test_forward_inverse_roundtrip(small_grid):
    sg = SpectralGrid(small_grid)
    eta = uniform_density(small_grid, 1.0, 2.5)
    back = sg.inverse(sg.forward(eta.values))
    assert np.allclose(back[: small_grid.M], eta.values, atol=1e-12)
    assert np.allclose(back[small_grid.M:], 0.0, atol=1e-12)


def test_transform_conjugate_symmetry(small_grid):
    sg = SpectralGrid(small_grid)
    transform = sg.transform(uniform_density(small_grid))
    transform.check_symmetry()
    assert transform.symmetry_defect() < 1e-12
