"""
The Stern-Gerlach amplification scenario: a spin-1/2 preselected at angle alpha
in the xz-plane, a weak sigma_z kick on a Gaussian momentum pointer, and strong
postselection along a chosen axis.

Runs come in four flavours: the exact conditional pointer, a seeded Monte Carlo
ensemble of screen detections, the split of the conditional shift into a
spectrum-bounded branch term and an interference term, and sweeps over alpha.
"""

import dataclasses
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from config import (
    DEFAULT_GRID_HALF_WIDTH,
    DEFAULT_GRID_POINTS,
    DEFAULT_HISTOGRAM_BINS,
    ENSEMBLE_BLOCK_SIZE,
    TAIL_SIGMAS,
    WEAK_REGIME_RATIO,
    thread_count,
)
from error import ConfigurationError, RejectedInputError, WeakMeasurementError
from hilbert import (
    AXIS_VECTORS,
    HermitianOperator,
    StateVector,
    inner,
    pauli,
    spin_state,
)
from pointer import (
    Grid,
    PointerMoments,
    PointerWave,
    gaussian,
    moments,
    sample_momentum,
    translate_momentum,
)
from protocol import (
    WeakValue,
    couple_weak,
    pointer_readout,
    postselect,
    weak_value,
)
from rng import derive_stream, require_seed

REQUIRED_SCENARIO_KEYS = ("alpha_deg", "g")
INT_FIELDS = ("grid_points", "n_trials", "seed", "histogram_bins")


def _parse_axis(value: Union[str, Sequence[float]]) -> tuple[float, float, float]:
    if isinstance(value, str):
        label = value.strip().lower().lstrip("+")
        if label not in AXIS_VECTORS:
            raise ConfigurationError(f"Unknown post_axis label {value!r}", ["post_axis"])
        return AXIS_VECTORS[label]

    try:
        vector = tuple(float(component) for component in value)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(
            "post_axis must be an axis label or a list of three numbers", ["post_axis"]
        ) from exc

    if len(vector) != 3:
        raise ConfigurationError("post_axis must have three components", ["post_axis"])

    return vector


def _coerce(name: str, value):
    """Strict JSON-to-field conversion; booleans never pass as numbers."""
    if name == "post_axis":
        return _parse_axis(value)

    if name == "grid_half_width" and value is None:
        return None

    if isinstance(value, bool):
        raise ConfigurationError(f"{name} must be a number, got {value!r}", [name])

    if name in INT_FIELDS:
        if isinstance(value, float) and value.is_integer():
            return int(value)
        if not isinstance(value, int):
            raise ConfigurationError(f"{name} must be an integer, got {value!r}", [name])
        return value

    if not isinstance(value, (int, float)):
        raise ConfigurationError(f"{name} must be a number, got {value!r}", [name])

    return float(value)


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to build and run one amplification scenario."""

    # pylint: disable=too-many-instance-attributes
    alpha_deg: float
    g: float
    post_axis: tuple = (1.0, 0.0, 0.0)
    sigma_p: float = 1.0
    grid_points: int = DEFAULT_GRID_POINTS
    grid_half_width: Optional[float] = None
    lever_arm: float = 1.0
    n_trials: int = 100_000
    seed: int = 0
    histogram_bins: int = DEFAULT_HISTOGRAM_BINS

    def __post_init__(self):
        object.__setattr__(self, "post_axis", _parse_axis(self.post_axis))

        if not math.isfinite(self.alpha_deg):
            raise ConfigurationError("alpha_deg must be finite", ["alpha_deg"])

        for name in ("g", "sigma_p", "lever_arm"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0.0):
                raise ConfigurationError(f"{name} must be positive, got {value}", [name])

        if self.n_trials < 1:
            raise ConfigurationError(
                f"n_trials must be at least 1, got {self.n_trials}", ["n_trials"]
            )

        if self.histogram_bins < 1:
            raise ConfigurationError("histogram_bins must be positive", ["histogram_bins"])

        try:
            require_seed(self.seed)
        except RejectedInputError as exc:
            raise ConfigurationError(str(exc), ["seed"]) from exc

        try:
            pauli(self.post_axis)
        except RejectedInputError as exc:
            raise ConfigurationError(str(exc), ["post_axis"]) from exc

        try:
            self.grid()
        except RejectedInputError as exc:
            raise ConfigurationError(
                str(exc), ["grid_points", "grid_half_width"]
            ) from exc

        if self.outside_weak_regime:
            logging.warning(
                "Scenario leaves the weak regime: g / sigma_p = %s > %s",
                self.weakness_ratio,
                WEAK_REGIME_RATIO,
            )

    @classmethod
    def from_config_json(cls, scenario_json: dict) -> "ScenarioConfig":
        """Create a config from the `scenario` object of a config file, fail-closed."""
        if not isinstance(scenario_json, dict):
            raise ConfigurationError("scenario must be a JSON object", ["scenario"])

        known = {field.name for field in dataclasses.fields(cls)}
        unknown = sorted(set(scenario_json) - known)
        if unknown:
            raise ConfigurationError(
                f"Unknown scenario keys: {', '.join(unknown)}", unknown
            )

        missing = [key for key in REQUIRED_SCENARIO_KEYS if key not in scenario_json]
        if missing:
            raise ConfigurationError(
                f"Missing scenario keys: {', '.join(missing)}", missing
            )

        return cls(**{key: _coerce(key, value) for key, value in scenario_json.items()})

    @property
    def weakness_ratio(self) -> float:
        """g / sigma_p."""
        return self.g / self.sigma_p

    @property
    def outside_weak_regime(self) -> bool:
        """True when g / sigma_p exceeds WEAK_REGIME_RATIO."""
        return self.weakness_ratio > WEAK_REGIME_RATIO

    def grid(self) -> Grid:
        """The pointer grid, defaulting to a half width of 64 / sigma_p."""
        half_width = self.grid_half_width
        if half_width is None:
            half_width = DEFAULT_GRID_HALF_WIDTH / self.sigma_p

        return Grid(self.grid_points, -half_width, half_width)

    def to_record(self) -> dict:
        """Plain mapping for manifests and digests."""
        record = dataclasses.asdict(self)
        record["post_axis"] = list(self.post_axis)

        return record


@dataclass(frozen=True, eq=False)
class Scenario:
    """An executable scenario: states, observable and initial pointer."""

    config: ScenarioConfig
    pre: StateVector
    post: StateVector
    observable: HermitianOperator
    pointer: PointerWave

    @property
    def overlap(self) -> complex:
        """<post|pre>."""
        return inner(self.post, self.pre)

    @property
    def post_rate_analytic(self) -> float:
        """|<post|pre>|^2, the g -> 0 postselection probability."""
        return abs(self.overlap) ** 2

    def analytic_weak_value(self) -> WeakValue:
        """The weak value of the observable for this pre/post pair."""
        return weak_value(self.pre, self.post, self.observable)


def build_scenario(config: ScenarioConfig) -> Scenario:
    """
    Pre state spin_state(alpha), postselection on the +1 eigenvector of the
    post axis, A = sigma_z and a centred Gaussian pointer.
    """
    grid = config.grid()
    observable = pauli("z")
    pointer = gaussian(grid, 0.0, 0.0, config.sigma_p)

    max_kick = config.g * observable.spectral_radius
    if max_kick + TAIL_SIGMAS * config.sigma_p > grid.momentum_limit:
        raise RejectedInputError(
            f"Maximal kick {max_kick:g} pushes the pointer off the momentum extent "
            f"+-{grid.momentum_limit:g}"
        )

    return Scenario(
        config=config,
        pre=spin_state(config.alpha_deg),
        post=pauli(config.post_axis).eigenvector(1.0),
        observable=observable,
        pointer=pointer,
    )


@dataclass(frozen=True, eq=False)
class ExactResult:
    """Deterministic conditional statistics of a scenario."""

    conditional: PointerMoments
    estimate: WeakValue
    post_prob: float
    initial: PointerMoments
    conditional_wave: PointerWave

    @property
    def shift_over_g(self) -> float:
        """Conditional momentum shift in units of g."""
        return self.estimate.re


def run_exact(scenario: Scenario) -> ExactResult:
    """couple_weak, postselect, moments: no sampling."""
    config = scenario.config
    state = couple_weak(scenario.pre, scenario.observable, scenario.pointer, config.g)
    conditional, probability = postselect(state, scenario.post)

    initial = moments(scenario.pointer)
    final = moments(conditional)

    return ExactResult(
        conditional=final,
        estimate=pointer_readout(initial, final, config.g),
        post_prob=probability,
        initial=initial,
        conditional_wave=conditional,
    )


@dataclass(frozen=True)
class ScreenHistogram:
    """Screen detections binned on fixed edges, plus under/overflow counts."""

    edges: tuple
    counts: tuple
    underflow: int = 0
    overflow: int = 0

    @property
    def total(self) -> int:
        """All detections, overflow included."""
        return sum(self.counts) + self.underflow + self.overflow

    def rows(self) -> list[tuple[float, float, int]]:
        """(bin_left, bin_right, count) per bin."""
        return [
            (self.edges[index], self.edges[index + 1], count)
            for index, count in enumerate(self.counts)
        ]


def screen_edges(
    conditional: PointerMoments, lever_arm: float, bins: int
) -> np.ndarray:
    """Bins spanning the conditional mean +- TAIL_SIGMAS standard deviations."""
    centre = conditional.mean_p * lever_arm
    half_width = TAIL_SIGMAS * conditional.std_p * lever_arm

    return np.linspace(centre - half_width, centre + half_width, bins + 1)


@dataclass(frozen=True)
class _BlockTally:
    count: int
    mean: float
    sum_squares: float
    counts: np.ndarray
    underflow: int
    overflow: int


def _combine(
    left: tuple[int, float, float], right: _BlockTally
) -> tuple[int, float, float]:
    """Pairwise (Chan et al.) merge of count, mean and sum of squared deviations."""
    count_a, mean_a, squares_a = left

    if right.count == 0:
        return left

    count = count_a + right.count
    delta = right.mean - mean_a
    mean = mean_a + delta * right.count / count
    squares = squares_a + right.sum_squares + delta**2 * count_a * right.count / count

    return count, mean, squares


@dataclass(frozen=True)
class EnsembleStats:
    """Screen statistics of a Monte Carlo ensemble."""

    # pylint: disable=too-many-instance-attributes
    n_attempted: int
    n_postselected: int
    post_rate: float
    screen_mean: Optional[float]
    screen_stderr: Optional[float]
    wv_estimate: Optional[WeakValue]
    wv_stderr: Optional[float]
    exact_conditional_mean_p: float
    exact_post_prob: float
    histogram: ScreenHistogram

    @property
    def empty(self) -> bool:
        """True when no trial survived postselection."""
        return self.n_postselected == 0

    def to_record(self) -> dict:
        """Plain mapping for stats.json."""
        return {
            "n_attempted": self.n_attempted,
            "n_postselected": self.n_postselected,
            "post_rate": self.post_rate,
            "screen_mean": self.screen_mean,
            "screen_stderr": self.screen_stderr,
            "wv_estimate": self.wv_estimate.to_record() if self.wv_estimate else None,
            "wv_stderr": self.wv_stderr,
            "exact_conditional_mean_p": self.exact_conditional_mean_p,
            "exact_post_prob": self.exact_post_prob,
            "histogram_underflow": self.histogram.underflow,
            "histogram_overflow": self.histogram.overflow,
        }


def run_ensemble(scenario: Scenario, threads: Optional[int] = None) -> EnsembleStats:
    """
    Monte Carlo screen ensemble.

    Trials are split into blocks of ENSEMBLE_BLOCK_SIZE; block b draws from
    derive_stream(seed, b). Each trial is postselected with the exact
    probability, and survivors land at lever_arm times a draw from the exact
    conditional momentum density. Blocks are merged in block order, so the
    result depends on the seed only, not on the thread count.
    """
    config = scenario.config
    exact = run_exact(scenario)
    wave = exact.conditional_wave
    edges = screen_edges(exact.conditional, config.lever_arm, config.histogram_bins)

    n_blocks = math.ceil(config.n_trials / ENSEMBLE_BLOCK_SIZE)

    def run_block(block: int) -> _BlockTally:
        size = min(ENSEMBLE_BLOCK_SIZE, config.n_trials - block * ENSEMBLE_BLOCK_SIZE)
        stream = derive_stream(config.seed, block)

        survivors = int(np.count_nonzero(stream.random(size) < exact.post_prob))
        screen = sample_momentum(wave, stream, size=survivors) * config.lever_arm

        counts, _ = np.histogram(screen, bins=edges)
        mean = float(np.mean(screen)) if survivors else 0.0

        return _BlockTally(
            count=survivors,
            mean=mean,
            sum_squares=float(np.sum((screen - mean) ** 2)),
            counts=counts,
            underflow=int(np.count_nonzero(screen < edges[0])),
            overflow=int(np.count_nonzero(screen > edges[-1])),
        )

    with ThreadPoolExecutor(max_workers=threads or thread_count()) as executor:
        tallies = list(executor.map(run_block, range(n_blocks)))

    count, mean, squares = 0, 0.0, 0.0
    for tally in tallies:
        count, mean, squares = _combine((count, mean, squares), tally)

    histogram = ScreenHistogram(
        edges=tuple(float(edge) for edge in edges),
        counts=tuple(int(c) for c in np.sum([t.counts for t in tallies], axis=0)),
        underflow=sum(t.underflow for t in tallies),
        overflow=sum(t.overflow for t in tallies),
    )

    screen_mean = screen_stderr = estimate = wv_stderr = None

    if count == 0:
        logging.warning(
            "No trial out of %s survived postselection", config.n_trials
        )
    else:
        screen_mean = mean
        estimate = WeakValue(re=mean / (config.lever_arm * config.g), im=0.0)

    if count >= 2:
        screen_stderr = math.sqrt(squares / (count - 1) / count)
        wv_stderr = screen_stderr / (config.lever_arm * config.g)

    return EnsembleStats(
        n_attempted=config.n_trials,
        n_postselected=count,
        post_rate=count / config.n_trials,
        screen_mean=screen_mean,
        screen_stderr=screen_stderr,
        wv_estimate=estimate,
        wv_stderr=wv_stderr,
        exact_conditional_mean_p=exact.conditional.mean_p,
        exact_post_prob=exact.post_prob,
        histogram=histogram,
    )


@dataclass(frozen=True)
class ShiftDecomposition:
    """The conditional momentum shift split into branch and interference parts."""

    total_shift: float
    branch_term: float
    interference_term: float
    bound: float
    # ABL probabilities of the eigenvalue channels. branch_term mixes the
    # kicked pointers with amplitudes |c_j|, not with these weights.
    channel_weights: tuple

    @property
    def bound_check(self) -> bool:
        """|branch_term| <= g * max|eigenvalue|, up to rounding."""
        return abs(self.branch_term) <= self.bound * (1.0 + 1e-9)

    def to_record(self) -> dict:
        """Plain mapping for stats.json."""
        return {
            "total_shift": self.total_shift,
            "branch_term": self.branch_term,
            "interference_term": self.interference_term,
            "bound": self.bound,
            "bound_check": self.bound_check,
            "channel_weights": list(self.channel_weights),
        }


def decompose_shift(scenario: Scenario) -> ShiftDecomposition:
    """
    Splits the exact conditional momentum shift.

    With channel amplitudes c_j = <post|P_j|pre>, the conditional pointer is
    sum_j c_j * psi0 kicked by g a_j. The branch term is the mean momentum of the
    same sum with every c_j replaced by |c_j|: the kicks are kept, the relative
    phases that let postselection reweight the initial pointer are removed.
    Its cross terms are centred between two kicks, so the branch term is always
    a convex combination of points inside [g min a, g max a]. The interference
    term is whatever remains.
    """
    config = scenario.config
    exact = run_exact(scenario)
    total = exact.conditional.mean_p - exact.initial.mean_p

    pre = scenario.pre.normalize()
    post = scenario.post.normalize()
    op = scenario.observable

    magnitudes = [
        abs(np.vdot(post.amplitudes, projector @ pre.amplitudes))
        for projector in op.projectors
    ]
    stripped = sum(
        magnitude * translate_momentum(scenario.pointer, config.g * value).amplitudes
        for magnitude, value in zip(magnitudes, op.eigenvalues)
    )
    branch = (
        moments(PointerWave(scenario.pointer.grid, stripped)).mean_p
        - exact.initial.mean_p
    )

    weights = np.array(magnitudes) ** 2

    return ShiftDecomposition(
        total_shift=total,
        branch_term=branch,
        interference_term=total - branch,
        bound=config.g * op.spectral_radius,
        channel_weights=tuple(float(w) for w in weights / weights.sum()),
    )


@dataclass(frozen=True)
class SweepRow:
    """One alpha of an overlap sweep; failed rows carry a message instead of values."""

    # pylint: disable=too-many-instance-attributes
    alpha_deg: float
    overlap_abs: float
    aw_analytic: Optional[float] = None
    shift_over_g: Optional[float] = None
    post_prob: Optional[float] = None
    weak_flag: Optional[bool] = None
    failure: Optional[str] = None

    @property
    def failed(self) -> bool:
        """True when the row could not be computed."""
        return self.failure is not None


def sweep_overlap(base: ScenarioConfig, alphas: Sequence[float]) -> list[SweepRow]:
    """
    One row per alpha with the base config otherwise unchanged. Rows that hit a
    physics or numerics error are returned with the error message instead of
    raising.
    """
    rows = []

    for alpha in alphas:
        overlap_abs = None

        try:
            config = dataclasses.replace(base, alpha_deg=float(alpha))
            scenario = build_scenario(config)
            overlap_abs = abs(scenario.overlap)
            analytic = scenario.analytic_weak_value()
            exact = run_exact(scenario)
        except WeakMeasurementError as exc:
            logging.warning("Sweep row alpha=%s failed: %s", alpha, exc)
            rows.append(
                SweepRow(
                    alpha_deg=float(alpha),
                    overlap_abs=overlap_abs if overlap_abs is not None else math.nan,
                    failure=str(exc),
                )
            )
            continue

        weak_flag = (
            config.g * max(1.0, abs(analytic.value)) / config.sigma_p
            <= WEAK_REGIME_RATIO
        )

        rows.append(
            SweepRow(
                alpha_deg=config.alpha_deg,
                overlap_abs=overlap_abs,
                aw_analytic=analytic.re,
                shift_over_g=exact.shift_over_g,
                post_prob=exact.post_prob,
                weak_flag=weak_flag,
            )
        )

    return rows


@dataclass(frozen=True)
class SweepDiagnostics:
    """Monotonicity of a sweep over its successful rows."""

    shift_increasing: bool
    probability_decreasing: bool
    n_rows: int
    n_failed: int

    def to_record(self) -> dict:
        """Plain mapping for stats.json."""
        return dataclasses.asdict(self)


def sweep_monotonicity(rows: Sequence[SweepRow]) -> SweepDiagnostics:
    """
    Checks that shift/g strictly increases and post_prob strictly decreases with
    alpha. Repeated alphas are counted once.
    """
    unique = {row.alpha_deg: row for row in rows if not row.failed}
    ordered = [unique[alpha] for alpha in sorted(unique)]

    shifts = [row.shift_over_g for row in ordered]
    probabilities = [row.post_prob for row in ordered]

    return SweepDiagnostics(
        shift_increasing=all(b > a for a, b in zip(shifts, shifts[1:])),
        probability_decreasing=all(
            b < a for a, b in zip(probabilities, probabilities[1:])
        ),
        n_rows=len(rows),
        n_failed=sum(1 for row in rows if row.failed),
    )
