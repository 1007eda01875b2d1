"""
Measurement-theory core: the impulsive weak coupling, postselection, ABL
probabilities, weak values and their pointer-based estimates, and strong
projective measurements.

The coupling generator is A (x) q, so eigenbranch a receives the momentum kick
+g * a while its position distribution is untouched.
"""

import itertools
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from config import (
    ABL_DENOMINATOR_FLOOR,
    OVERLAP_FLOOR,
    PROB_FLOOR,
    QUADRATURE_KAPPA,
)
from error import (
    ImpossibleSequenceError,
    OrthogonalPostselectionError,
    PostselectionFailedError,
    RejectedInputError,
)
from hilbert import HermitianOperator, StateVector, inner, projector_observable
from pointer import (
    Grid,
    PointerMoments,
    PointerWave,
    default_grid,
    gaussian,
    mixture_moments,
    moments,
    translate_momentum,
)


@dataclass(frozen=True)
class WeakValue:
    """A complex weak value, in units of the measured observable."""

    re: float
    im: float

    def __post_init__(self):
        if not (math.isfinite(self.re) and math.isfinite(self.im)):
            raise RejectedInputError(
                f"Weak value components must be finite, got ({self.re}, {self.im})"
            )

    @classmethod
    def from_complex(cls, value: complex) -> "WeakValue":
        """Splits a Python complex into a WeakValue."""
        return cls(re=float(value.real), im=float(value.imag))

    @property
    def value(self) -> complex:
        """The weak value as a Python complex."""
        return complex(self.re, self.im)

    def to_record(self) -> dict:
        """Plain mapping for serialization."""
        return {"re": self.re, "im": self.im}


@dataclass(frozen=True)
class AblOutcome:
    """One eigenvalue of the intermediate observable and its ABL probability."""

    eigenvalue: float
    probability: float


def _basis_labels(dim: int) -> tuple[str, ...]:
    if dim == 2:
        return ("z+", "z-")

    return tuple(f"e{index}" for index in range(dim))


@dataclass(frozen=True, eq=False)
class CompositeState:
    """
    Joint system-pointer state. Branch i is the (unnormalized) pointer wave that
    multiplies system basis ket i.
    """

    branches: tuple
    basis_labels: tuple = ()

    def __post_init__(self):
        branches = tuple(self.branches)

        if not branches:
            raise RejectedInputError("A composite state needs at least one branch")

        grid = branches[0].grid
        if any(branch.grid != grid for branch in branches):
            raise RejectedInputError("All branches must share one grid")

        labels = tuple(self.basis_labels) or _basis_labels(len(branches))
        if len(labels) != len(branches):
            raise RejectedInputError(
                f"Got {len(labels)} basis labels for {len(branches)} branches"
            )

        object.__setattr__(self, "branches", branches)
        object.__setattr__(self, "basis_labels", labels)

    @property
    def system_dim(self) -> int:
        """Dimension of the system factor."""
        return len(self.branches)

    @property
    def grid(self) -> Grid:
        """The grid shared by every branch."""
        return self.branches[0].grid

    def amplitude_matrix(self) -> np.ndarray:
        """Branches stacked as a (system_dim, n) array."""
        return np.stack([branch.amplitudes for branch in self.branches])

    def total_norm(self) -> float:
        """sum_i integral |branch_i|^2 dx."""
        return sum(branch.norm() for branch in self.branches)


@dataclass(frozen=True)
class EstimateDiagnostics:
    """Raw pointer readings behind a weak-value estimate."""

    post_probability: float
    momentum_shift: float
    position_shift: float
    initial: PointerMoments
    conditional: PointerMoments


@dataclass(frozen=True)
class SequenceCounts:
    """Monte Carlo tallies of outcome tuples among postselected trials."""

    n_trials: int
    n_postselected: int
    counts: dict

    def frequency(self, outcome: tuple) -> float:
        """Conditional frequency of an outcome tuple (0 when nothing survived)."""
        if self.n_postselected == 0:
            return 0.0

        return self.counts.get(tuple(outcome), 0) / self.n_postselected

    def standard_error(self, probability: float) -> float:
        """Binomial standard error of a frequency with the given true probability."""
        if self.n_postselected == 0:
            return math.inf

        return math.sqrt(probability * (1.0 - probability) / self.n_postselected)


def _require_dims(*items) -> int:
    dims = {item.dim for item in items}

    if len(dims) != 1:
        raise RejectedInputError(f"Dimension mismatch: {sorted(dims)}")

    return dims.pop()


def weak_value(
    pre: StateVector,
    post: StateVector,
    A: HermitianOperator,
    overlap_floor: float = OVERLAP_FLOOR,
) -> WeakValue:
    """
    <post|A|pre> / <post|pre> for normalized copies of pre and post, so the result
    does not depend on their scale or global phase.
    """
    # pylint: disable=invalid-name
    _require_dims(pre, post, A)
    pre = pre.normalize()
    post = post.normalize()

    overlap = inner(post, pre)

    if abs(overlap) <= overlap_floor:
        raise OrthogonalPostselectionError(
            f"Orthogonal postselection: |<post|pre>| = {abs(overlap):.3e} is below "
            f"the overlap floor {overlap_floor:g}"
        )

    return WeakValue.from_complex(inner(post, A.apply(pre)) / overlap)


def _channel_weights(
    pre: StateVector, post: StateVector, observables: Sequence[HermitianOperator]
) -> dict:
    weights = {}
    index_ranges = [range(len(op.eigenvalues)) for op in observables]

    for indices in itertools.product(*index_ranges):
        amplitude = pre.amplitudes
        for op, index in zip(observables, indices):
            amplitude = op.projectors[index] @ amplitude

        key = tuple(op.eigenvalues[i] for op, i in zip(observables, indices))
        weights[key] = abs(np.vdot(post.amplitudes, amplitude)) ** 2

    return weights


def abl_sequence(
    pre: StateVector, post: StateVector, observables: Sequence[HermitianOperator]
) -> dict:
    """
    Probabilities of every outcome tuple for observables measured in sequence
    between preselection and postselection:

        P(d_1..d_k) ~ |<post| P_dk ... P_d1 |pre>|^2

    Keys are tuples of eigenvalues in measurement order.
    """
    if not observables:
        raise RejectedInputError("At least one intermediate observable is required")

    _require_dims(pre, post, *observables)
    weights = _channel_weights(pre.normalize(), post.normalize(), observables)
    total = sum(weights.values())

    if total <= ABL_DENOMINATOR_FLOOR:
        raise ImpossibleSequenceError(
            "Impossible sequence: no outcome of the intermediate measurement "
            "connects the pre- and postselected states"
        )

    return {key: weight / total for key, weight in weights.items()}


def abl_probability(
    pre: StateVector, post: StateVector, C: HermitianOperator
) -> tuple[AblOutcome, ...]:
    """
    ABL probabilities of each eigenvalue of C (descending order), with projector
    channels |<post|P_j|pre>|^2 so degenerate eigenspaces are handled whole.
    """
    # pylint: disable=invalid-name
    probabilities = abl_sequence(pre, post, [C])

    return tuple(
        AblOutcome(eigenvalue=value, probability=probabilities[(value,)])
        for value in C.eigenvalues
    )


def _probability_of(outcomes: Sequence[AblOutcome], eigenvalue: float) -> float:
    return next(o.probability for o in outcomes if o.eigenvalue == eigenvalue)


def verify_certainty(pre: StateVector, post: StateVector) -> tuple[float, float]:
    """
    Probability that an intermediate measurement of the preselection projector
    finds "pre", and of the postselection projector finds "post". Both are 1.
    """
    _require_dims(pre, post)

    if abs(inner(post.normalize(), pre.normalize())) <= OVERLAP_FLOOR:
        raise ImpossibleSequenceError("Pre- and postselected states are orthogonal")

    p_pre = _probability_of(abl_probability(pre, post, projector_observable(pre)), 1.0)
    p_post = _probability_of(
        abl_probability(pre, post, projector_observable(post)), 1.0
    )

    return p_pre, p_post


def couple_weak(
    pre: StateVector, A: HermitianOperator, pointer: PointerWave, g: float
) -> CompositeState:
    """
    Applies exp(-i g A (x) q): the component of pre in eigenspace a_j is paired
    with the pointer kicked by g * a_j, and the result is re-expressed in the
    computational basis.
    """
    # pylint: disable=invalid-name
    _require_dims(pre, A)

    if not math.isfinite(g):
        raise RejectedInputError(f"Coupling must be finite, got {g}")

    pre = pre.normalize()

    if g == 0.0:
        branches = np.outer(pre.amplitudes, pointer.amplitudes)
    else:
        components = np.stack([projector @ pre.amplitudes for projector in A.projectors])
        kicked = np.stack(
            [translate_momentum(pointer, g * value).amplitudes for value in A.eigenvalues]
        )
        branches = components.T @ kicked

    return CompositeState(
        branches=tuple(PointerWave(pointer.grid, row) for row in branches)
    )


def postselect(
    state: CompositeState, post: StateVector, prob_floor: float = PROB_FLOOR
) -> tuple[PointerWave, float]:
    """Projects the system onto post, returning the normalized pointer and its probability."""
    if post.dim != state.system_dim:
        raise RejectedInputError(
            f"Postselection state has dim {post.dim}, system has {state.system_dim}"
        )

    post = post.normalize()
    projected = PointerWave(
        state.grid, post.amplitudes.conj() @ state.amplitude_matrix()
    )
    probability = projected.norm()

    if probability < prob_floor:
        raise PostselectionFailedError(
            f"Postselection probability {probability:.3e} is below the floor "
            f"{prob_floor:g}"
        )

    return projected.normalize(), min(probability, 1.0)


def pointer_readout(
    initial: PointerMoments, conditional: PointerMoments, g: float
) -> WeakValue:
    """
    Weak value read from pointer shifts: the momentum shift over g for the real
    part, and the position shift over g * var_x scaled by QUADRATURE_KAPPA for
    the imaginary part.
    """
    return WeakValue(
        re=(conditional.mean_p - initial.mean_p) / g,
        im=QUADRATURE_KAPPA * (conditional.mean_x - initial.mean_x) / (g * initial.var_x),
    )


def estimate_weak_value(
    pre: StateVector,
    post: StateVector,
    A: HermitianOperator,
    sigma_p: float,
    g: float,
    grid: Optional[Grid] = None,
) -> tuple[WeakValue, EstimateDiagnostics]:
    """Couples a centred Gaussian pointer, postselects, and reads it out."""
    # pylint: disable=invalid-name,too-many-arguments
    if not (math.isfinite(g) and g > 0.0):
        raise RejectedInputError(f"Coupling must be positive, got {g}")

    grid = grid or default_grid(sigma_p)
    pointer = gaussian(grid, 0.0, 0.0, sigma_p)
    initial = moments(pointer)

    conditional, probability = postselect(couple_weak(pre, A, pointer, g), post)
    final = moments(conditional)

    return pointer_readout(initial, final, g), EstimateDiagnostics(
        post_probability=probability,
        momentum_shift=final.mean_p - initial.mean_p,
        position_shift=final.mean_x - initial.mean_x,
        initial=initial,
        conditional=final,
    )


def strong_measure(
    state: StateVector, A: HermitianOperator, rng_stream: np.random.Generator
) -> tuple[float, StateVector]:
    """Projective measurement with Lueders collapse."""
    # pylint: disable=invalid-name
    _require_dims(state, A)
    state = state.normalize()

    projected = [projector @ state.amplitudes for projector in A.projectors]
    probabilities = np.array([np.vdot(vector, vector).real for vector in projected])
    cumulative = np.cumsum(probabilities / probabilities.sum())

    index = int(np.searchsorted(cumulative, rng_stream.random(), side="right"))
    index = min(index, len(projected) - 1)

    return A.eigenvalues[index], StateVector(projected[index]).normalize()


def simulate_sequence(
    pre: StateVector,
    post: StateVector,
    observables: Sequence[HermitianOperator],
    n_trials: int,
    rng_stream: np.random.Generator,
) -> SequenceCounts:
    """
    Monte Carlo of preselection, strong measurements of each observable in turn,
    and a final postselection filter, vectorized over trials.
    """
    if n_trials < 1:
        raise RejectedInputError(f"n_trials must be positive, got {n_trials}")

    if not observables:
        raise RejectedInputError("At least one intermediate observable is required")

    _require_dims(pre, post, *observables)
    post = post.normalize()

    states = np.tile(pre.normalize().amplitudes, (n_trials, 1))
    choices = np.zeros((n_trials, len(observables)), dtype=int)
    trials = np.arange(n_trials)

    for step, op in enumerate(observables):
        projected = np.einsum("mij,nj->nmi", np.stack(op.projectors), states)
        probabilities = np.sum(np.abs(projected) ** 2, axis=2)
        cumulative = np.cumsum(probabilities, axis=1)
        cumulative /= cumulative[:, -1:]

        draws = rng_stream.random(n_trials)
        choice = np.minimum(
            np.sum(draws[:, None] >= cumulative, axis=1), len(op.eigenvalues) - 1
        )

        chosen = projected[trials, choice]
        states = chosen / np.linalg.norm(chosen, axis=1, keepdims=True)
        choices[:, step] = choice

    survival = np.abs(states @ post.amplitudes.conj()) ** 2
    kept = rng_stream.random(n_trials) < survival

    counts = {}
    if np.any(kept):
        rows, tallies = np.unique(choices[kept], axis=0, return_counts=True)
        for row, tally in zip(rows, tallies):
            key = tuple(op.eigenvalues[i] for op, i in zip(observables, row))
            counts[key] = int(tally)

    return SequenceCounts(
        n_trials=n_trials, n_postselected=int(np.sum(kept)), counts=counts
    )


def reduced_system_state(state: CompositeState) -> tuple[np.ndarray, float]:
    """Traces out the pointer; returns the system density matrix and its purity."""
    branches = state.amplitude_matrix()
    density = branches @ branches.conj().T * state.grid.dx
    density = density / np.trace(density).real
    purity = float(np.trace(density @ density).real)

    return density, purity


def reduced_pointer_moments(state: CompositeState) -> PointerMoments:
    """Moments of the pointer marginal, i.e. of the summed branch densities."""
    return mixture_moments(state.branches)
