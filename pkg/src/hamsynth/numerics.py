"""Dense complex linear algebra kernel.

Matrix exponentials of Hermitian generators go through a single
eigendecomposition that is reusable across time steps; fidelity functionals
are phase-invariant.
"""
from __future__ import annotations

import numpy as np

from .constants import HERMITIAN_ATOL, UNITARY_ATOL

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def is_unitary(u: np.ndarray, atol: float = UNITARY_ATOL) -> bool:
    """Check U†U = I in max-norm."""
    d = u.shape[0]
    return bool(np.max(np.abs(u.conj().T @ u - np.eye(d))) < atol)


def is_hermitian(h: np.ndarray, atol: float = HERMITIAN_ATOL) -> bool:
    """Check H = H† in max-norm."""
    return bool(np.max(np.abs(h - h.conj().T)) < atol)


def dagger(a: np.ndarray) -> np.ndarray:
    return a.conj().T


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.kron(a, b)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"dimension mismatch: {a.shape} @ {b.shape}")
    return a @ b


def trace_inner(a: np.ndarray, b: np.ndarray) -> complex:
    """Tr(A† B), the Hilbert-Schmidt inner product."""
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return complex(np.sum(a.conj() * b))


class EigenSystem:
    """Cached Hermitian eigendecomposition, reused across time steps."""

    def __init__(self, h: np.ndarray):
        if not is_hermitian(h):
            raise ValueError("matrix is not Hermitian to tolerance")
        self.eigenvalues, self.eigenvectors = np.linalg.eigh(h)

    def expm(self, t: float) -> np.ndarray:
        """e^{-iHt} via diagonal phase multiplication in the eigenbasis."""
        v = self.eigenvectors
        phases = np.exp(-1j * self.eigenvalues * t)
        return (v * phases) @ v.conj().T


def expm_hermitian(h: np.ndarray, t: float) -> np.ndarray:
    """e^{-iHt} for Hermitian H. Rejects non-Hermitian input."""
    return EigenSystem(h).expm(t)


def process_fidelity(u: np.ndarray, v: np.ndarray) -> float:
    """|Tr(U†V)|² / d², invariant under global phase of either argument."""
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    d = u.shape[0]
    return float(abs(np.trace(u.conj().T @ v)) ** 2 / d**2)


def average_gate_fidelity(f: float, d: int) -> float:
    """Map process fidelity F to F_avg = (dF + 1)/(d + 1)."""
    return (d * f + 1.0) / (d + 1.0)
