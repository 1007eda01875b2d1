"""
Discretized one-dimensional pointer wavefunctions.

Units have hbar = 1. The momentum representation uses the continuum convention
phi(p) = (2 pi)^-1/2 * integral psi(x) exp(-i p x) dx, evaluated with one FFT,
so a momentum kick is multiplication by exp(i delta_p x) in position space.
"""

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from config import (
    DEFAULT_GRID_HALF_WIDTH,
    DEFAULT_GRID_POINTS,
    EDGE_POINTS,
    LEAKAGE_LIMIT,
    MAX_GRID_POINTS,
    MIN_GRID_POINTS,
    TAIL_SIGMAS,
)
from error import RejectedInputError


def _read_only(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


@dataclass(frozen=True)
class Grid:
    """A uniform position grid of n points on [x_min, x_max) and its momentum dual."""

    n: int
    x_min: float
    x_max: float

    def __post_init__(self):
        if not isinstance(self.n, int) or isinstance(self.n, bool):
            raise RejectedInputError(f"Grid size must be an integer, got {self.n!r}")

        if self.n < MIN_GRID_POINTS or self.n > MAX_GRID_POINTS or self.n & (self.n - 1):
            raise RejectedInputError(
                f"Grid size must be a power of two in [{MIN_GRID_POINTS}, "
                f"{MAX_GRID_POINTS}], got {self.n}"
            )

        if not (math.isfinite(self.x_min) and math.isfinite(self.x_max)):
            raise RejectedInputError("Grid bounds must be finite")

        if self.x_max <= self.x_min:
            raise RejectedInputError(
                f"Grid needs x_max > x_min, got [{self.x_min}, {self.x_max}]"
            )

    @property
    def dx(self) -> float:
        """Position spacing."""
        return (self.x_max - self.x_min) / self.n

    @property
    def dp(self) -> float:
        """Momentum spacing, so that dx * dp * n = 2 pi."""
        return 2.0 * math.pi / (self.n * self.dx)

    @cached_property
    def positions(self) -> np.ndarray:
        """Grid points x_min + j dx."""
        return _read_only(self.x_min + self.dx * np.arange(self.n))

    @cached_property
    def momenta(self) -> np.ndarray:
        """Symmetric momentum grid dp * (k - n/2), k = 0..n-1."""
        return _read_only(self.dp * (np.arange(self.n) - self.n // 2))

    @cached_property
    def alternating_signs(self) -> np.ndarray:
        """(-1)^j, which centres the FFT output on p = 0."""
        return _read_only(np.where(np.arange(self.n) % 2 == 0, 1.0, -1.0))

    @cached_property
    def offset_phase(self) -> np.ndarray:
        """exp(-i p x_min), the phase from the grid not starting at x = 0."""
        return _read_only(np.exp(-1j * self.momenta * self.x_min))

    @property
    def momentum_limit(self) -> float:
        """Largest |p| representable on both sides of the momentum grid."""
        return (self.n // 2 - 1) * self.dp


def default_grid(sigma_p: float = 1.0) -> Grid:
    """The default 4096-point grid, widened in x by 1 / sigma_p."""
    if not (math.isfinite(sigma_p) and sigma_p > 0.0):
        raise RejectedInputError(f"sigma_p must be positive, got {sigma_p}")

    half_width = DEFAULT_GRID_HALF_WIDTH / sigma_p

    return Grid(DEFAULT_GRID_POINTS, -half_width, half_width)


@dataclass(frozen=True, eq=False)
class PointerWave:
    """Position-representation amplitudes on a grid, in (length)^-1/2."""

    grid: Grid
    amplitudes: np.ndarray

    def __post_init__(self):
        amplitudes = np.array(self.amplitudes, dtype=complex).reshape(-1)

        if amplitudes.size != self.grid.n:
            raise RejectedInputError(
                f"Expected {self.grid.n} amplitudes, got {amplitudes.size}"
            )

        if not np.all(np.isfinite(amplitudes)):
            raise RejectedInputError("Pointer amplitudes must be finite")

        object.__setattr__(self, "amplitudes", _read_only(amplitudes))

    def density(self) -> np.ndarray:
        """|psi(x)|^2 at each grid point."""
        return np.abs(self.amplitudes) ** 2

    def norm(self) -> float:
        """Riemann-sum probability, sum |psi|^2 dx."""
        return float(np.sum(self.density()) * self.grid.dx)

    def normalize(self) -> "PointerWave":
        """Unit-probability copy."""
        norm = self.norm()

        if norm <= 0.0:
            raise RejectedInputError("Cannot normalize a zero pointer wave")

        return PointerWave(self.grid, self.amplitudes / math.sqrt(norm))


@dataclass(frozen=True, eq=False)
class MomentumWave:
    """Momentum-representation amplitudes on the dual grid of `grid`."""

    grid: Grid
    amplitudes: np.ndarray

    def __post_init__(self):
        amplitudes = np.array(self.amplitudes, dtype=complex).reshape(-1)

        if amplitudes.size != self.grid.n:
            raise RejectedInputError(
                f"Expected {self.grid.n} amplitudes, got {amplitudes.size}"
            )

        object.__setattr__(self, "amplitudes", _read_only(amplitudes))

    def density(self) -> np.ndarray:
        """|phi(p)|^2 at each momentum grid point."""
        return np.abs(self.amplitudes) ** 2

    def norm(self) -> float:
        """sum |phi|^2 dp, equal to the position norm by Parseval."""
        return float(np.sum(self.density()) * self.grid.dp)


@dataclass(frozen=True)
class PointerMoments:
    """First and second moments of a pointer in both representations."""

    mean_x: float
    var_x: float
    mean_p: float
    var_p: float

    @property
    def std_x(self) -> float:
        """Position standard deviation."""
        return math.sqrt(self.var_x)

    @property
    def std_p(self) -> float:
        """Momentum standard deviation."""
        return math.sqrt(self.var_p)


def to_momentum(wave: PointerWave) -> MomentumWave:
    """Unitary discrete Fourier pairing into the momentum representation."""
    grid = wave.grid
    spectrum = np.fft.fft(wave.amplitudes * grid.alternating_signs)

    return MomentumWave(
        grid, grid.dx / math.sqrt(2.0 * math.pi) * grid.offset_phase * spectrum
    )


def to_position(wave: MomentumWave) -> PointerWave:
    """Inverse of to_momentum."""
    grid = wave.grid
    samples = np.fft.ifft(wave.amplitudes * grid.offset_phase.conj())

    return PointerWave(
        grid, grid.alternating_signs * samples * math.sqrt(2.0 * math.pi) / grid.dx
    )


def _weighted_moments(
    coords: np.ndarray, density: np.ndarray, spacing: float
) -> tuple[float, float]:
    weights = density * spacing
    total = float(np.sum(weights))
    mean = float(np.sum(coords * weights)) / total
    variance = float(np.sum((coords - mean) ** 2 * weights)) / total

    return mean, max(variance, 0.0)


def moments(wave: PointerWave) -> PointerMoments:
    """Plain Riemann-sum moments over the position and momentum densities."""
    return mixture_moments([wave])


def mixture_moments(waves: Sequence[PointerWave]) -> PointerMoments:
    """
    Moments of the summed densities of several waves on one grid, i.e. of the
    pointer marginal when the waves are branches of an entangled state.
    """
    grid = waves[0].grid

    if any(wave.grid != grid for wave in waves):
        raise RejectedInputError("All waves must share one grid")

    position_density = sum(wave.density() for wave in waves)
    momentum_density = sum(to_momentum(wave).density() for wave in waves)

    mean_x, var_x = _weighted_moments(grid.positions, position_density, grid.dx)
    mean_p, var_p = _weighted_moments(grid.momenta, momentum_density, grid.dp)

    return PointerMoments(mean_x=mean_x, var_x=var_x, mean_p=mean_p, var_p=var_p)


def _edge_leakage(density: np.ndarray) -> float:
    total = float(np.sum(density))
    edges = float(np.sum(density[:EDGE_POINTS]) + np.sum(density[-EDGE_POINTS:]))

    return edges / total if total > 0.0 else 0.0


def require_support(wave: PointerWave) -> None:
    """
    Rejects waves whose probability reaches the outermost grid points in either
    representation, where the periodic FFT would alias it.
    """
    if _edge_leakage(wave.density()) > LEAKAGE_LIMIT:
        raise RejectedInputError("Pointer wave leaks past the position extent")

    if _edge_leakage(to_momentum(wave).density()) > LEAKAGE_LIMIT:
        raise RejectedInputError("Pointer wave leaks past the momentum extent")


def gaussian(grid: Grid, x0: float, p0: float, sigma_p: float) -> PointerWave:
    """
    Normalized minimum-uncertainty Gaussian with mean position x0, mean momentum
    p0 and momentum spread sigma_p (position spread 1 / (2 sigma_p)).
    """
    if not all(math.isfinite(value) for value in (x0, p0, sigma_p)):
        raise RejectedInputError("Gaussian parameters must be finite")

    if sigma_p <= 0.0:
        raise RejectedInputError(f"sigma_p must be positive, got {sigma_p}")

    sigma_x = 1.0 / (2.0 * sigma_p)

    if (
        x0 - TAIL_SIGMAS * sigma_x < grid.x_min
        or x0 + TAIL_SIGMAS * sigma_x > grid.positions[-1]
    ):
        raise RejectedInputError(
            f"Gaussian (x0={x0}, sigma_x={sigma_x:g}) does not fit the position "
            f"extent [{grid.x_min}, {grid.x_max})"
        )

    if abs(p0) + TAIL_SIGMAS * sigma_p > grid.momentum_limit:
        raise RejectedInputError(
            f"Gaussian (p0={p0}, sigma_p={sigma_p:g}) does not fit the momentum "
            f"extent +-{grid.momentum_limit:g}"
        )

    x = grid.positions
    amplitudes = np.exp(-((x - x0) ** 2) / (4.0 * sigma_x**2) + 1j * p0 * x)
    wave = PointerWave(grid, amplitudes).normalize()
    require_support(wave)

    return wave


def translate_momentum(wave: PointerWave, delta_p: float) -> PointerWave:
    """Rigid momentum kick: psi(x) -> psi(x) exp(i delta_p x)."""
    if not math.isfinite(delta_p):
        raise RejectedInputError(f"Momentum shift must be finite, got {delta_p}")

    if delta_p == 0.0:
        return wave

    current = moments(wave)

    if abs(current.mean_p + delta_p) + TAIL_SIGMAS * current.std_p > (
        wave.grid.momentum_limit
    ):
        raise RejectedInputError(
            f"Momentum shift {delta_p:g} pushes the pointer off the momentum grid"
        )

    shifted = PointerWave(
        wave.grid, wave.amplitudes * np.exp(1j * delta_p * wave.grid.positions)
    )
    require_support(shifted)

    return shifted


def _inverse_cdf_draw(
    coords: np.ndarray,
    spacing: float,
    density: np.ndarray,
    rng_stream: np.random.Generator,
    size: int,
) -> np.ndarray:
    cdf = np.cumsum(density * spacing)
    cdf /= cdf[-1]

    cells = np.searchsorted(cdf, rng_stream.random(size), side="right")
    cells = np.minimum(cells, coords.size - 1)

    return coords[cells] + spacing * (rng_stream.random(size) - 0.5)


def sample_position(
    wave: PointerWave, rng_stream: np.random.Generator, size: Optional[int] = None
):
    """
    Draws detections from |psi|^2: a grid cell by inverse CDF, then a uniform
    position inside that cell. Cells are centred on the grid points, so the
    sample mean has no half-cell bias. Returns a float, or an array when size
    is given.
    """
    draws = _inverse_cdf_draw(
        wave.grid.positions,
        wave.grid.dx,
        wave.density(),
        rng_stream,
        1 if size is None else size,
    )

    return float(draws[0]) if size is None else draws


def sample_momentum(
    wave: PointerWave, rng_stream: np.random.Generator, size: Optional[int] = None
):
    """Same scheme as sample_position, over the momentum density."""
    draws = _inverse_cdf_draw(
        wave.grid.momenta,
        wave.grid.dp,
        to_momentum(wave).density(),
        rng_stream,
        1 if size is None else size,
    )

    return float(draws[0]) if size is None else draws
