"""Small dense linear-algebra helpers used throughout the package."""

from __future__ import annotations

from functools import reduce

import numpy as np

PAULI_I = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)

PAULIS = {"I": PAULI_I, "X": PAULI_X, "Y": PAULI_Y, "Z": PAULI_Z}


def dagger(a: np.ndarray) -> np.ndarray:
    return a.conj().T


def hermiticity_defect(a: np.ndarray) -> float:
    """Max-abs deviation of ``a`` from its conjugate transpose."""
    return float(np.max(np.abs(a - a.conj().T))) if a.size else 0.0


def kron_all(factors) -> np.ndarray:
    """Kronecker product of a sequence of matrices, left to right."""
    return reduce(np.kron, factors)


def embed_single_qubit(op: np.ndarray, site: int, n_qubits: int) -> np.ndarray:
    """Embed a 2x2 operator acting on ``site`` into the full N-qubit space."""
    factors = [PAULI_I] * n_qubits
    factors[site] = op
    return kron_all(factors)


def frozen(a: np.ndarray) -> np.ndarray:
    """Return a C-contiguous read-only copy, used for immutable value types."""
    out = np.ascontiguousarray(a)
    if out is a:
        out = a.copy()
    out.setflags(write=False)
    return out


def random_unitary_2x2(rng: np.random.Generator) -> np.ndarray:
    """Haar-random element of U(2), via QR of a Ginibre matrix."""
    g = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    q, r = np.linalg.qr(g)
    # Fix the phase convention so QR yields the Haar measure.
    return q * (np.diagonal(r) / np.abs(np.diagonal(r)))
