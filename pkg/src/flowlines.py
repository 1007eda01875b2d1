"""
Flow lines of a scalar two-slit field.

Each slit is a 1-D paraxial Gaussian beam, u = (w^2 / a)^1/2 exp(-(x - x_s)^2 / a)
with a = w^2 + 2 i z / k, which solves 2 i k du/dz + d2u/dx2 = 0 exactly. The
flow velocity is the real part of the weak value of transverse momentum with
position postselection, Re[(-i dpsi/dx) / psi] / k, i.e. the phase gradient
over k. Lines are integral curves dx/dz = that velocity.
"""

import cmath
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import integrate

from config import (
    DEFAULT_FLOW_STATIONS,
    DEFAULT_FLOW_TOLERANCE,
    MAX_STEP_HALVINGS,
    NODE_FLOOR,
    thread_count,
)
from error import ConfigurationError, IntegrationFailedError, NodeError, RejectedInputError

BEAM_KEYS = ("slit_separation", "waist", "wavenumber", "relative_phase", "amplitudes")


def _parse_amplitude(value) -> complex:
    if isinstance(value, bool):
        raise ConfigurationError("Beam amplitudes must be numbers", ["amplitudes"])

    if isinstance(value, (int, float)):
        return complex(value)

    if isinstance(value, (list, tuple)) and len(value) == 2:
        return complex(float(value[0]), float(value[1]))

    raise ConfigurationError(
        f"Beam amplitude must be a number or a [re, im] pair, got {value!r}",
        ["amplitudes"],
    )


@dataclass(frozen=True)
class BeamSystem:
    """Two Gaussian slits at x = -d/2 and x = +d/2."""

    slit_separation: float
    waist: float
    wavenumber: float
    relative_phase: float = 0.0
    amplitudes: tuple = (1.0 + 0.0j, 1.0 + 0.0j)

    def __post_init__(self):
        for name in ("slit_separation", "waist", "wavenumber"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0.0):
                raise ConfigurationError(f"{name} must be positive, got {value}", [name])

        if not math.isfinite(self.relative_phase):
            raise ConfigurationError("relative_phase must be finite", ["relative_phase"])

        amplitudes = tuple(complex(value) for value in self.amplitudes)

        if len(amplitudes) != 2 or not all(cmath.isfinite(a) for a in amplitudes):
            raise ConfigurationError(
                "amplitudes must be two finite complex numbers", ["amplitudes"]
            )

        if all(a == 0 for a in amplitudes):
            raise ConfigurationError("amplitudes must not both be zero", ["amplitudes"])

        object.__setattr__(self, "amplitudes", amplitudes)

    @classmethod
    def from_config_json(cls, beams_json: dict) -> "BeamSystem":
        """Create a beam system from the `beams` object of a config file."""
        if not isinstance(beams_json, dict):
            raise ConfigurationError("beams must be a JSON object", ["beams"])

        unknown = sorted(set(beams_json) - set(BEAM_KEYS))
        if unknown:
            raise ConfigurationError(f"Unknown beams keys: {', '.join(unknown)}", unknown)

        values = dict(beams_json)

        for name in ("slit_separation", "waist", "wavenumber", "relative_phase"):
            if name in values and (
                isinstance(values[name], bool)
                or not isinstance(values[name], (int, float))
            ):
                raise ConfigurationError(f"{name} must be a number", [name])

        if "amplitudes" in values:
            if not isinstance(values["amplitudes"], list):
                raise ConfigurationError("amplitudes must be a list", ["amplitudes"])
            values["amplitudes"] = tuple(
                _parse_amplitude(value) for value in values["amplitudes"]
            )

        default = default_system()
        values.setdefault("slit_separation", default.slit_separation)
        values.setdefault("waist", default.waist)
        values.setdefault("wavenumber", default.wavenumber)

        return cls(**values)

    @property
    def rayleigh_range(self) -> float:
        """z_R = k w^2 / 2."""
        return self.wavenumber * self.waist**2 / 2.0

    @property
    def centres(self) -> tuple[float, float]:
        """Slit positions."""
        return (-self.slit_separation / 2.0, self.slit_separation / 2.0)

    @property
    def weights(self) -> tuple[complex, complex]:
        """Slit amplitudes with the relative phase applied to the second."""
        return (
            self.amplitudes[0],
            self.amplitudes[1] * cmath.exp(1j * self.relative_phase),
        )

    def to_record(self) -> dict:
        """Plain mapping for manifests and digests."""
        return {
            "slit_separation": self.slit_separation,
            "waist": self.waist,
            "wavenumber": self.wavenumber,
            "relative_phase": self.relative_phase,
            "amplitudes": [[a.real, a.imag] for a in self.amplitudes],
        }


def default_system() -> BeamSystem:
    """d = 4w and k w = 20, with w = 1."""
    return BeamSystem(slit_separation=4.0, waist=1.0, wavenumber=20.0)


def default_starts(system: BeamSystem, count: int = 21) -> list[float]:
    """count evenly spaced starts spanning +-3d, exactly symmetric about 0."""
    step = 6.0 * system.slit_separation / (count - 1)
    offsets = np.arange(count) - (count - 1) / 2.0

    return [float(offset * step) for offset in offsets]


def _terms(system: BeamSystem, x, z: float):
    """Field, its x-derivative and the incoherent amplitude sum at (x, z)."""
    if not (math.isfinite(z) and z >= 0.0):
        raise RejectedInputError(f"z must be finite and nonnegative, got {z}")

    x = np.asarray(x, dtype=float)
    width = system.waist**2 + 2j * z / system.wavenumber
    prefactor = np.sqrt(system.waist**2 / width)

    field = np.zeros_like(x, dtype=complex)
    derivative = np.zeros_like(x, dtype=complex)
    incoherent = np.zeros_like(x, dtype=float)

    for weight, centre in zip(system.weights, system.centres):
        offset = x - centre
        beam = weight * prefactor * np.exp(-(offset**2) / width)
        field = field + beam
        derivative = derivative + beam * (-2.0 * offset / width)
        incoherent = incoherent + np.abs(beam)

    return field, derivative, incoherent


def _unwrap(values: np.ndarray, like):
    """Plain Python scalars for scalar x, arrays otherwise."""
    if np.ndim(like) != 0:
        return values

    return complex(values) if np.iscomplexobj(values) else float(values)


def field_at(system: BeamSystem, x, z: float):
    """psi(x, z); x may be a float or an array."""
    field, _, _ = _terms(system, x, z)

    return _unwrap(field, x)


def intensity(system: BeamSystem, x, z: float):
    """|psi(x, z)|^2."""
    field, _, _ = _terms(system, x, z)

    return _unwrap(np.abs(field) ** 2, x)


def _log_derivative(system: BeamSystem, x, z: float):
    field, derivative, incoherent = _terms(system, x, z)

    if np.any(np.abs(field) <= NODE_FLOOR * incoherent):
        raise NodeError(f"Field has a node near x={x}, z={z}")

    return derivative / field


def weak_momentum(system: BeamSystem, x, z: float):
    """
    Re[(-i dpsi/dx) / psi] / k, the transverse flow velocity dx/dz.

    Raises NodeError where |psi| falls below NODE_FLOOR times the incoherent sum
    of the two beam moduli at that point.
    """
    return _unwrap(np.imag(_log_derivative(system, x, z)) / system.wavenumber, x)


def osmotic_momentum(system: BeamSystem, x, z: float):
    """Im[(-i dpsi/dx) / psi] / k = -Re[dpsi/dx / psi] / k."""
    return _unwrap(-np.real(_log_derivative(system, x, z)) / system.wavenumber, x)


def flux_between(system: BeamSystem, x_left: float, x_right: float, z: float) -> float:
    """integral of |psi|^2 over [x_left, x_right] at fixed z."""
    value, _ = integrate.quad(
        lambda x: intensity(system, x, z),
        x_left,
        x_right,
        epsabs=0.0,
        epsrel=1e-11,
        limit=200,
    )

    return value


@dataclass(frozen=True)
class FlowLine:
    """
    An integrated flow line as (x, z) points with z strictly increasing. A line
    that hit an unresolvable node keeps the points reached and the reason.
    """

    start_x: float
    points: tuple
    failure: Optional[str] = None

    @property
    def succeeded(self) -> bool:
        """True when the line reached z1."""
        return self.failure is None

    @property
    def xs(self) -> np.ndarray:
        """x at each point."""
        return np.array([x for x, _ in self.points])

    @property
    def zs(self) -> np.ndarray:
        """z at each point."""
        return np.array([z for _, z in self.points])


def _rk4(system: BeamSystem, z: float, x: float, step: float) -> float:
    k1 = weak_momentum(system, x, z)
    k2 = weak_momentum(system, x + step / 2.0 * k1, z + step / 2.0)
    k3 = weak_momentum(system, x + step / 2.0 * k2, z + step / 2.0)
    k4 = weak_momentum(system, x + step * k3, z + step)

    return x + step / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _advance(
    system: BeamSystem, x: float, z_from: float, z_to: float, tolerance: float, step: float
) -> tuple[float, float]:
    """
    Carries x from z_from to z_to by step-doubling RK4, keeping the local error
    estimate at or below tolerance per unit z. Returns the new x and the step
    to try next.
    """
    # pylint: disable=too-many-arguments
    z = z_from

    while z < z_to:
        remaining = z_to - z
        trial = min(step, remaining)
        halvings = 0

        while True:
            try:
                full = _rk4(system, z, x, trial)
                midway = _rk4(system, z, x, trial / 2.0)
                half = _rk4(system, z + trial / 2.0, midway, trial / 2.0)
                error = abs(half - full) / 15.0
            except NodeError:
                error = math.inf

            if error <= tolerance * trial:
                break

            trial /= 2.0
            halvings += 1

            if halvings > MAX_STEP_HALVINGS:
                raise IntegrationFailedError(
                    f"Flow line stuck at x={x}, z={z} after {MAX_STEP_HALVINGS} "
                    "step halvings"
                )

        x = half + (half - full) / 15.0
        z = z_to if trial == remaining else z + trial

        step = trial * 2.0 if error <= tolerance * trial / 32.0 else trial

    return x, step


def _integrate_line(
    system: BeamSystem, start_x: float, stations: np.ndarray, tolerance: float
) -> FlowLine:
    x = start_x
    step = float(stations[1] - stations[0])
    points = [(start_x, float(stations[0]))]

    try:
        for z_from, z_to in zip(stations[:-1], stations[1:]):
            x, step = _advance(system, x, float(z_from), float(z_to), tolerance, step)
            points.append((x, float(z_to)))
    except IntegrationFailedError as exc:
        logging.warning("Flow line from x=%s failed: %s", start_x, exc)
        return FlowLine(start_x=start_x, points=tuple(points), failure=str(exc))

    return FlowLine(start_x=start_x, points=tuple(points))


def integrate_flowlines(
    system: BeamSystem,
    start_xs: Sequence[float],
    z0: float,
    z1: float,
    tolerance: float = DEFAULT_FLOW_TOLERANCE,
    n_stations: int = DEFAULT_FLOW_STATIONS,
    threads: Optional[int] = None,
) -> list[FlowLine]:
    """
    Integrates dx/dz = weak_momentum from each start, sorted by start_x. Every
    line is recorded at the same n_stations values of z. A line that cannot get
    past a node is returned with its failure message; the others are unaffected.
    """
    # pylint: disable=too-many-arguments
    starts = [float(x) for x in start_xs]

    if not starts:
        raise RejectedInputError("At least one start position is required")

    if not all(math.isfinite(x) for x in starts):
        raise RejectedInputError("Start positions must be finite")

    if len(set(starts)) != len(starts):
        raise RejectedInputError("Start positions must be pairwise distinct")

    if not (math.isfinite(z0) and math.isfinite(z1) and 0.0 <= z0 < z1):
        raise RejectedInputError(f"Need 0 <= z0 < z1, got z0={z0}, z1={z1}")

    if not (math.isfinite(tolerance) and tolerance > 0.0):
        raise RejectedInputError(f"Tolerance must be positive, got {tolerance}")

    if n_stations < 2:
        raise RejectedInputError(f"Need at least 2 stations, got {n_stations}")

    stations = np.linspace(z0, z1, n_stations)

    with ThreadPoolExecutor(max_workers=threads or thread_count()) as executor:
        return list(
            executor.map(
                lambda x: _integrate_line(system, x, stations, tolerance), sorted(starts)
            )
        )
