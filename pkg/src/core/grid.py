"""
Uniform grids on [1, y_max], grid densities, and the discrete Fourier pair used by
every solver.

The transform pair is the trapezoid rule corrected for the jump at y = 1: the
defect of the trapezoid transform of j(y) = exp(-(y-1)) against its exact
transform is added in proportion to f(1). The correction is rank one, so the
inverse is exact and forward/inverse round trips hold to rounding.
"""

import logging
import os
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, Optional

import numpy as np
import pandas as pd
from scipy import fft as sfft
from scipy.signal import fftconvolve

from .errors import ConfigError, NumericDomainError, PreconditionError

logger = logging.getLogger(__name__)

BINARY_MAGIC = b"CGRIDv1\x00"
NEG_TOL = 1e-9


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid y_i = 1 + i h on [1, y_max] with zero padding factor for transforms"""
    h: float = 1.0 / 64.0
    y_max: float = 64.0
    pad: int = 4

    def __post_init__(self):
        if not (self.h > 0) or not (self.y_max > 1.0 + self.h):
            raise ConfigError(f"Invalid grid: h={self.h}, y_max={self.y_max}")
        if self.pad < 2:
            raise ConfigError(f"Padding factor must be at least 2, got {self.pad}")

    @property
    def M(self) -> int:
        return int(round((self.y_max - 1.0) / self.h)) + 1

    @property
    def y(self) -> np.ndarray:
        return 1.0 + self.h * np.arange(self.M)

    @property
    def cells_per_unit(self) -> int:
        """Number of cells in a unit shift; requires h to divide 1"""
        n = 1.0 / self.h
        if abs(n - round(n)) > 1e-9:
            raise PreconditionError(f"Grid step h={self.h} does not divide 1")
        return int(round(n))

    def as_record(self) -> Dict:
        return {"h": self.h, "y_max": self.y_max, "M": self.M, "pad": self.pad}


def trapezoid_weights(M: int, h: float) -> np.ndarray:
    w = np.full(M, h)
    w[0] = w[-1] = 0.5 * h
    return w


@dataclass
class GridDensity:
    """Density samples v_i at y_i = y0 + i h, identically zero below support_min"""
    h: float
    values: np.ndarray
    y0: float = 1.0
    support_min: float = 1.0
    meta: Dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)

    @property
    def M(self) -> int:
        return len(self.values)

    @property
    def y(self) -> np.ndarray:
        return self.y0 + self.h * np.arange(self.M)

    @property
    def y_max(self) -> float:
        return self.y0 + self.h * (self.M - 1)

    @property
    def weights(self) -> np.ndarray:
        return trapezoid_weights(self.M, self.h)

    @property
    def mass(self) -> float:
        return float(np.dot(self.weights, self.values))

    @property
    def first_moment(self) -> float:
        return float(np.dot(self.weights, self.y * self.values))

    @property
    def spec(self) -> GridSpec:
        return GridSpec(h=self.h, y_max=self.y_max)

    def with_values(self, values: np.ndarray, **changes) -> "GridDensity":
        meta = changes.pop("meta", dict(self.meta))
        return replace(self, values=np.asarray(values, dtype=float), meta=meta, **changes)

    def cdf(self) -> np.ndarray:
        """Cumulative trapezoid integral from y0"""
        v = self.values
        return np.concatenate([[0.0], np.cumsum(0.5 * self.h * (v[1:] + v[:-1]))])

    def __call__(self, y: np.ndarray) -> np.ndarray:
        """Linear interpolation, zero outside the stored range"""
        return np.interp(y, self.y, self.values, left=0.0, right=0.0)

    def to_csv(self, path: str, header_lines: Optional[list] = None) -> None:
        df = pd.DataFrame({"y": self.y, "value": self.values})
        with open(path, "w", encoding="utf-8") as f:
            for line in header_lines or []:
                f.write(f"# {line}\n")
            df.to_csv(f, index=False, float_format="%.17g")

    @classmethod
    def from_csv(cls, path: str) -> "GridDensity":
        if not os.path.exists(path):
            raise FileNotFoundError(f"Density CSV not found at {path}")
        df = pd.read_csv(path, comment="#", float_precision="round_trip")
        if list(df.columns[:2]) != ["y", "value"]:
            raise ConfigError(f"{path}: expected columns y,value")
        y = df["y"].to_numpy()
        steps = np.diff(y)
        if len(y) < 3 or np.max(np.abs(steps - steps.mean())) > 1e-9 * max(1.0, y[-1]):
            raise ConfigError(f"{path}: y column is not a uniform grid")
        h = float(np.round(steps.mean() * 2 ** 20) / 2 ** 20)
        values = df["value"].to_numpy(dtype=float)
        nz = np.nonzero(values)[0]
        support = float(y[nz[0]]) if nz.size else float(y[0])
        return cls(h=h, values=values, y0=float(y[0]), support_min=support)

    def to_binary(self, path: str) -> None:
        header = np.array([self.h, float(self.M), self.support_min, self.y0], dtype="<f8")
        with open(path, "wb") as f:
            f.write(BINARY_MAGIC)
            f.write(header.tobytes())
            f.write(self.values.astype("<f8").tobytes())

    @classmethod
    def from_binary(cls, path: str) -> "GridDensity":
        if not os.path.exists(path):
            raise FileNotFoundError(f"Binary snapshot not found at {path}")
        with open(path, "rb") as f:
            raw = f.read()
        if raw[:8] != BINARY_MAGIC:
            raise ConfigError(f"{path}: not a grid snapshot")
        h, m, support, y0 = np.frombuffer(raw[8:40], dtype="<f8")
        values = np.frombuffer(raw[40:], dtype="<f8").copy()
        if len(values) != int(m):
            raise ConfigError(f"{path}: payload has {len(values)} values, header says {int(m)}")
        return cls(h=float(h), values=values, y0=float(y0), support_min=float(support))


def density_from_function(spec: GridSpec, f: Callable[[np.ndarray], np.ndarray]) -> GridDensity:
    values = np.asarray(f(spec.y), dtype=float)
    nz = np.nonzero(values)[0]
    return GridDensity(h=spec.h, values=values, support_min=float(spec.y[nz[0]]) if nz.size else 1.0)


def uniform_density(spec: GridSpec, a: float = 1.0, b: float = 2.0) -> GridDensity:
    """Indicator of [a, b] scaled to unit trapezoid mass; interior jump nodes carry half values"""
    if not (1.0 <= a < b):
        raise ConfigError(f"Uniform density needs 1 <= a < b, got [{a}, {b}]")
    y = spec.y
    tol = 1e-9 * spec.h
    values = ((y >= a - tol) & (y <= b + tol)).astype(float)
    for edge in (a, b):
        on_node = np.abs(y - edge) < tol
        if on_node.any() and 0 < np.argmax(on_node) < spec.M - 1:
            values[on_node] = 0.5
    eta = GridDensity(h=spec.h, values=values, support_min=a)
    return eta.with_values(values / eta.mass)


def clamp_negatives(values: np.ndarray, tol: float = NEG_TOL, what: str = "density") -> np.ndarray:
    """Zero out ringing down to -tol; anything more negative is a sign violation"""
    low = float(np.min(values))
    if low < -tol:
        raise NumericDomainError(f"{what} has a negative value {low:.3e} beyond tolerance {tol:.0e}")
    return np.where(values < 0.0, 0.0, values)


def convolve_power(values: np.ndarray, h: float, power: int, cells_per_unit: int) -> tuple:
    """
    power-fold convolution of a grid density via the trapezoid measure w_i v_i.

    Returns (values on the same grid, truncated mass). The j-fold measure index m
    sits at y = j + m h, i.e. grid index m + (j-1)/h.
    """
    M = len(values)
    w = trapezoid_weights(M, h)
    mu = w * values
    total = mu.copy()
    for _ in range(power - 1):
        total = fftconvolve(total, mu)
    offset = (power - 1) * cells_per_unit
    out = np.zeros(M)
    if offset < M:
        n = min(M - offset, len(total))
        out[offset:offset + n] = total[:n] / w[offset:offset + n]
        kept = float(np.sum(total[:n]))
    else:
        kept = 0.0
    truncated = float(np.sum(total)) - kept
    return out, truncated


def apply_weights_polynomial(weights: tuple, values: np.ndarray, h: float,
                             cells_per_unit: int) -> tuple:
    """sum_j p_j f^{*j} on the grid, returning (values, truncated mass)"""
    out = np.zeros(len(values))
    truncated = 0.0
    for j, p in enumerate(weights, start=1):
        if p == 0.0:
            continue
        conv, lost = convolve_power(values, h, j, cells_per_unit)
        out += p * conv
        truncated += p * lost
    return out, truncated


@dataclass
class SpectralFunction:
    """Complex transform samples at xi_k = xi_step * fftfreq index; index 0 is xi = 0"""
    xi_step: float
    samples: np.ndarray

    def symmetry_defect(self) -> float:
        s = self.samples
        return float(np.max(np.abs(s[1:] - np.conj(s[1:][::-1])), initial=0.0))

    def check_symmetry(self, tol: float = 1e-10) -> None:
        scale = max(1.0, float(np.max(np.abs(self.samples))))
        if self.symmetry_defect() > tol * scale:
            raise NumericDomainError(f"Transform samples lost conjugate symmetry ({self.symmetry_defect():.2e})")


class SpectralGrid:
    """
    Corrected trapezoid Fourier pair on the zero-padded grid.

    forward(f)(xi) approximates int_1^inf exp(-i xi y) f(y) dy; the padded
    length is odd so that every nonzero frequency has its conjugate partner.
    """

    def __init__(self, spec: GridSpec):
        self.spec = spec
        self.M = spec.M
        n = spec.pad * spec.M
        self.Mp = n + 1 if n % 2 == 0 else n
        h = spec.h
        self.h = h
        self.y_pad = 1.0 + h * np.arange(self.Mp)
        self.w = trapezoid_weights(self.Mp, h)
        self.w[-1] = h  # periodic grid: only the y = 1 node is a boundary
        self.xi = 2.0 * np.pi * sfft.fftfreq(self.Mp, d=h)
        self.xi_step = 2.0 * np.pi / (self.Mp * h)
        self._phase = np.exp(-1j * self.xi)
        jump = np.exp(-(self.y_pad - 1.0))
        exact = self._phase / (1.0 + 1j * self.xi)
        self._corr = exact - self._trap_forward(jump)
        self._e0 = float(np.real(self._trap_inverse(self._corr)[0]))

    def _trap_forward(self, f: np.ndarray) -> np.ndarray:
        return self._phase * sfft.fft(self.w * f)

    def _trap_inverse(self, g: np.ndarray) -> np.ndarray:
        return sfft.ifft(g / self._phase) / self.w

    def pad(self, values: np.ndarray) -> np.ndarray:
        out = np.zeros(self.Mp)
        n = min(len(values), self.Mp)
        out[:n] = values[:n]
        return out

    def forward(self, f: np.ndarray) -> np.ndarray:
        f = self.pad(f) if len(f) != self.Mp else f
        return self._trap_forward(f) + f[0] * self._corr

    def inverse(self, g: np.ndarray) -> np.ndarray:
        """Exact inverse of forward(); returns the real part on the padded grid"""
        g0 = self._trap_inverse(g)
        e = self._trap_inverse(self._corr)
        f0 = g0[0] / (1.0 + e[0])
        return np.real(g0 - f0 * e)

    def transform(self, eta: GridDensity) -> SpectralFunction:
        return SpectralFunction(xi_step=self.xi_step, samples=self.forward(eta.values))
