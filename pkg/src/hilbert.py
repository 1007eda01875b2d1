"""
Exact complex linear algebra for small Hilbert spaces: state vectors, Hermitian
observables with their spectral projectors, and spin-direction construction.

Everything here is dimensionless; the spin observable is sigma rather than
(hbar / 2) * sigma and callers scale if they need to.
"""

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from config import (
    DEGENERACY_RTOL,
    HERMITIAN_ATOL,
    JACOBI_MAX_SWEEPS,
    PHASE_ZERO_RTOL,
)
from error import EigensolverError, RejectedInputError

MAX_EIGEN_DIM = 16
SPECTRAL_ATOL = 1e-10
AXIS_NORM_ATOL = 1e-9

PAULI_MATRICES = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}

AXIS_VECTORS = {
    "x": (1.0, 0.0, 0.0),
    "y": (0.0, 1.0, 0.0),
    "z": (0.0, 0.0, 1.0),
}


def _frozen(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class StateVector:
    """A finite-dimensional ket, stored as a read-only complex array."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amplitudes = np.array(self.amplitudes, dtype=complex).reshape(-1)

        if amplitudes.size == 0:
            raise RejectedInputError("A state vector needs at least one amplitude")

        if not np.all(np.isfinite(amplitudes)):
            raise RejectedInputError("State amplitudes must be finite")

        object.__setattr__(self, "amplitudes", _frozen(amplitudes))

    @property
    def dim(self) -> int:
        """Number of amplitudes."""
        return self.amplitudes.size

    def norm_squared(self) -> float:
        """Sum of squared moduli of the amplitudes."""
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def normalize(self) -> "StateVector":
        """Returns a unit-norm copy, rejecting the zero vector."""
        norm_squared = self.norm_squared()

        if not math.isfinite(norm_squared) or norm_squared <= 0.0:
            raise RejectedInputError("Cannot normalize a zero-norm state")

        return StateVector(self.amplitudes / math.sqrt(norm_squared))

    def phase_fixed(self) -> "StateVector":
        """
        Returns a copy whose first nonzero amplitude is real and nonnegative.

        Amplitudes below PHASE_ZERO_RTOL of the largest one count as zero, so
        rounding residue never decides the phase.
        """
        moduli = np.abs(self.amplitudes)
        largest = moduli.max()

        if largest == 0.0:
            return self

        leading = self.amplitudes[np.argmax(moduli > PHASE_ZERO_RTOL * largest)]

        return StateVector(self.amplitudes * (abs(leading) / leading))

    def isclose(self, other: "StateVector", atol: float = 1e-10) -> bool:
        """Entrywise comparison, phases included."""
        return self.dim == other.dim and bool(
            np.allclose(self.amplitudes, other.amplitudes, rtol=0.0, atol=atol)
        )


def inner(bra: StateVector, ket: StateVector) -> complex:
    """Returns <bra|ket>, conjugating the bra."""
    if bra.dim != ket.dim:
        raise RejectedInputError(
            f"Dimension mismatch in inner product: {bra.dim} vs {ket.dim}"
        )

    return complex(np.vdot(bra.amplitudes, ket.amplitudes))


def spin_state(alpha: float) -> StateVector:
    """
    Returns the +1 eigenstate of n.sigma for n = (cos alpha, 0, sin alpha), alpha in
    degrees measured from the +x axis toward +z.

    The real vector (cos g, sin g) is the +1 eigenstate along
    (sin 2g, 0, cos 2g), hence g = 45 - alpha / 2.
    """
    if not math.isfinite(alpha):
        raise RejectedInputError(f"Spin angle must be finite, got {alpha}")

    half_angle = math.radians(45.0 - alpha / 2.0)

    return StateVector([math.cos(half_angle), math.sin(half_angle)]).phase_fixed()


def _require_hermitian(matrix: np.ndarray) -> None:
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or matrix.shape[0] < 1:
        raise RejectedInputError(f"Expected a square matrix, got shape {matrix.shape}")

    if not np.all(np.isfinite(matrix)):
        raise RejectedInputError("Matrix entries must be finite")

    scale = max(1.0, float(np.max(np.abs(matrix))))

    if np.max(np.abs(matrix - matrix.conj().T)) > HERMITIAN_ATOL * scale:
        raise RejectedInputError("Matrix is not Hermitian")


def _jacobi_eigh(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    Cyclic Jacobi diagonalization of a Hermitian matrix.

    Each rotation first removes the phase of a[p, q] with diag(1, e^-i phi) and
    then applies the real symmetric Jacobi rotation to the (p, q) block.
    Returns real eigenvalues and the unitary whose columns are eigenvectors.
    """
    work = np.array(matrix, dtype=complex)
    size = work.shape[0]
    vectors = np.eye(size, dtype=complex)
    scale = np.linalg.norm(work)

    if size == 1 or scale == 0.0:
        return np.real(np.diag(work)).copy(), vectors

    for _ in range(JACOBI_MAX_SWEEPS):
        off_diagonal = np.linalg.norm(work - np.diag(np.diag(work)))

        if off_diagonal <= 1e-14 * scale:
            return np.real(np.diag(work)).copy(), vectors

        for p in range(size - 1):
            for q in range(p + 1, size):
                modulus = abs(work[p, q])

                if modulus < 1e-300:
                    continue

                phase = work[p, q] / modulus
                theta = (work[q, q].real - work[p, p].real) / (2.0 * modulus)
                tangent = math.copysign(1.0, theta) / (
                    abs(theta) + math.sqrt(theta * theta + 1.0)
                )
                cosine = 1.0 / math.sqrt(tangent * tangent + 1.0)
                sine = tangent * cosine

                rotation = np.eye(size, dtype=complex)
                rotation[p, p] = cosine
                rotation[p, q] = sine
                rotation[q, p] = -sine * phase.conjugate()
                rotation[q, q] = cosine * phase.conjugate()

                work = rotation.conj().T @ work @ rotation
                work[p, q] = 0.0
                work[q, p] = 0.0
                vectors = vectors @ rotation

    raise EigensolverError(
        f"Jacobi sweeps did not converge within {JACOBI_MAX_SWEEPS} sweeps"
    )


def eigendecompose(
    op: Union["HermitianOperator", np.ndarray],
) -> tuple[tuple[float, ...], tuple[np.ndarray, ...]]:
    """
    Spectral decomposition into distinct eigenvalues (descending) and their
    orthogonal projectors.

    Eigenvalues closer than DEGENERACY_RTOL times the spectral radius are merged
    into one eigenspace, so ABL sums always see whole degenerate subspaces.
    """
    matrix = op.matrix if isinstance(op, HermitianOperator) else np.asarray(op)
    matrix = np.asarray(matrix, dtype=complex)

    _require_hermitian(matrix)

    if matrix.shape[0] > MAX_EIGEN_DIM:
        raise RejectedInputError(
            f"Eigendecomposition supports dim <= {MAX_EIGEN_DIM}, got {matrix.shape[0]}"
        )

    values, vectors = _jacobi_eigh(matrix)
    order = np.argsort(-values, kind="stable")
    values = values[order]
    vectors = vectors[:, order]

    threshold = DEGENERACY_RTOL * float(np.max(np.abs(values)))

    groups = [[0]]
    for index in range(1, values.size):
        if values[index - 1] - values[index] > threshold:
            groups.append([index])
        else:
            groups[-1].append(index)

    eigenvalues = []
    projectors = []
    for group in groups:
        basis = vectors[:, group]
        projector = basis @ basis.conj().T
        eigenvalues.append(float(np.mean(values[group])))
        projectors.append((projector + projector.conj().T) / 2.0)

    return tuple(eigenvalues), tuple(projectors)


@dataclass(frozen=True, eq=False)
class HermitianOperator:
    """
    An observable together with its spectral decomposition.

    Build one with from_matrix (runs the eigensolver) or from_projectors (trusts
    a known decomposition); both paths validate the spectral invariants.
    """

    matrix: np.ndarray
    eigenvalues: tuple
    projectors: tuple

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=complex)
        _require_hermitian(matrix)

        projectors = tuple(_frozen(np.array(p, dtype=complex)) for p in self.projectors)
        eigenvalues = tuple(float(value) for value in self.eigenvalues)

        if len(projectors) != len(eigenvalues) or not projectors:
            raise RejectedInputError("Each eigenvalue needs exactly one projector")

        identity = np.eye(matrix.shape[0])
        total = np.zeros_like(matrix)
        reconstruction = np.zeros_like(matrix)

        for index, projector in enumerate(projectors):
            if projector.shape != matrix.shape:
                raise RejectedInputError("Projector shape does not match the matrix")

            if np.max(np.abs(projector @ projector - projector)) > SPECTRAL_ATOL:
                raise RejectedInputError("Projectors must be idempotent")

            for other in projectors[index + 1 :]:
                if np.max(np.abs(projector @ other)) > SPECTRAL_ATOL:
                    raise RejectedInputError("Projectors must be mutually orthogonal")

            total = total + projector
            reconstruction = reconstruction + eigenvalues[index] * projector

        if np.max(np.abs(total - identity)) > SPECTRAL_ATOL:
            raise RejectedInputError("Projectors must sum to the identity")

        # Rounding in the rebuild grows with the size of the eigenvalues.
        scale = max(1.0, max(abs(value) for value in eigenvalues))

        if np.max(np.abs(reconstruction - matrix)) > SPECTRAL_ATOL * scale:
            raise RejectedInputError("Spectral decomposition does not rebuild the matrix")

        object.__setattr__(self, "matrix", _frozen(matrix))
        object.__setattr__(self, "eigenvalues", eigenvalues)
        object.__setattr__(self, "projectors", projectors)

    @classmethod
    def from_matrix(cls, matrix) -> "HermitianOperator":
        """Diagonalizes a Hermitian matrix with the Jacobi eigensolver."""
        matrix = np.asarray(matrix, dtype=complex)
        eigenvalues, projectors = eigendecompose(matrix)

        return cls(matrix=matrix, eigenvalues=eigenvalues, projectors=projectors)

    @classmethod
    def from_projectors(
        cls, eigenvalues: Sequence[float], projectors: Sequence[np.ndarray]
    ) -> "HermitianOperator":
        """Assembles sum(eigenvalue * projector) from a known decomposition."""
        matrix = sum(
            value * np.asarray(projector, dtype=complex)
            for value, projector in zip(eigenvalues, projectors)
        )

        return cls(matrix=matrix, eigenvalues=eigenvalues, projectors=projectors)

    @property
    def dim(self) -> int:
        """Dimension of the Hilbert space acted on."""
        return self.matrix.shape[0]

    @property
    def spectral_radius(self) -> float:
        """Largest eigenvalue modulus."""
        return max(abs(value) for value in self.eigenvalues)

    def apply(self, state: StateVector) -> StateVector:
        """Returns op|state>."""
        if state.dim != self.dim:
            raise RejectedInputError(
                f"Operator of dim {self.dim} applied to a state of dim {state.dim}"
            )

        return StateVector(self.matrix @ state.amplitudes)

    def eigenvector(self, eigenvalue: float) -> StateVector:
        """Phase-fixed unit eigenvector of a nondegenerate eigenvalue."""
        index = int(np.argmin([abs(value - eigenvalue) for value in self.eigenvalues]))

        if abs(self.eigenvalues[index] - eigenvalue) > SPECTRAL_ATOL * max(
            1.0, self.spectral_radius
        ):
            raise RejectedInputError(f"{eigenvalue} is not an eigenvalue")

        return state_from_projector(self.projectors[index])


def state_from_projector(projector: np.ndarray) -> StateVector:
    """Recovers the ray of a rank-1 projector."""
    rank = float(np.trace(projector).real)

    if abs(rank - 1.0) > SPECTRAL_ATOL:
        raise RejectedInputError(f"Projector has rank {rank:.3f}, expected 1")

    column = projector[:, int(np.argmax(np.linalg.norm(projector, axis=0)))]

    return StateVector(column).normalize().phase_fixed()


def pauli(axis: Union[str, Sequence[float]]) -> HermitianOperator:
    """
    Returns n.sigma for a coordinate label or a unit 3-vector, with the exact
    spectrum {+1, -1} and projectors (I +- n.sigma) / 2.
    """
    if isinstance(axis, str):
        label = axis.strip().lower().lstrip("+")
        if label not in AXIS_VECTORS:
            raise RejectedInputError(f"Unknown axis label {axis!r}")
        vector = np.array(AXIS_VECTORS[label])
    else:
        vector = np.asarray(axis, dtype=float).reshape(-1)
        if vector.size != 3 or not np.all(np.isfinite(vector)):
            raise RejectedInputError("Axis must be a finite 3-vector")

    length = float(np.linalg.norm(vector))

    if abs(length - 1.0) > AXIS_NORM_ATOL:
        raise RejectedInputError(f"Axis must have unit length, got |n| = {length}")

    vector = vector / length
    n_sigma = sum(
        component * PAULI_MATRICES[label]
        for component, label in zip(vector, ("x", "y", "z"))
    )
    identity = np.eye(2, dtype=complex)

    return HermitianOperator(
        matrix=n_sigma,
        eigenvalues=(1.0, -1.0),
        projectors=((identity + n_sigma) / 2.0, (identity - n_sigma) / 2.0),
    )


def named_state(label: str) -> StateVector:
    """
    Returns the spin-1/2 eigenstates by name: "x+", "x-", "y+", "y-", "z+", "z-".
    A bare axis letter means the + state.
    """
    text = label.strip().lower()
    sign = -1.0 if text.endswith("-") else 1.0
    axis = text.rstrip("+-")

    if axis not in AXIS_VECTORS:
        raise RejectedInputError(f"Unknown named state {label!r}")

    return pauli(axis).eigenvector(sign)


def expectation(state: StateVector, op: HermitianOperator) -> float:
    """<state|op|state> for the normalized state."""
    normalized = state.normalize()

    return inner(normalized, op.apply(normalized)).real


def projector_observable(state: StateVector) -> HermitianOperator:
    """
    The yes/no observable for a ray: eigenvalue 1 on the state, 0 on its
    orthogonal complement (degenerate for dim > 2).
    """
    normalized = state.normalize()
    projector = np.outer(normalized.amplitudes, normalized.amplitudes.conj())

    if normalized.dim == 1:
        return HermitianOperator.from_projectors((1.0,), (projector,))

    complement = np.eye(normalized.dim, dtype=complex) - projector

    return HermitianOperator.from_projectors((1.0, 0.0), (projector, complement))


def identity(dim: int) -> HermitianOperator:
    """The identity observable, a single fully degenerate eigenvalue."""
    return HermitianOperator.from_projectors((1.0,), (np.eye(dim, dtype=complex),))
