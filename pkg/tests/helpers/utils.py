"""Pytest Helper Functions"""

import json
import pathlib

import numpy as np

from hilbert import HermitianOperator, StateVector


def random_state(rng: np.random.Generator, dim: int) -> StateVector:
    """A normalized state with Gaussian-distributed complex amplitudes."""
    amplitudes = rng.normal(size=dim) + 1j * rng.normal(size=dim)

    return StateVector(amplitudes).normalize()


def random_hermitian(rng: np.random.Generator, dim: int) -> HermitianOperator:
    """A random Hermitian observable, diagonalized by the Jacobi eigensolver."""
    raw = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))

    return HermitianOperator.from_matrix((raw + raw.conj().T) / 2.0)


def write_config(directory: pathlib.Path, document: dict, name="config.json") -> str:
    """Writes a JSON config document and returns its path as text."""
    path = directory / name
    path.write_text(json.dumps(document), encoding="utf-8")

    return str(path)


def without_timestamp(text: str) -> str:
    """Drops every line mentioning the manifest timestamp."""
    return "\n".join(line for line in text.splitlines() if "timestamp" not in line)
