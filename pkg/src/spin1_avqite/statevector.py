"""Dense statevectors as plain complex numpy arrays.

Index ``b`` of a length ``2**n`` array is the basis state whose bitstring has
qubit 0 as its most significant (leftmost) bit.
"""

from __future__ import annotations

import numpy as np

MAX_QUBITS = 24


class StateError(ValueError):
    pass


def _check_size(n_qubits: int, cap: int | None = None) -> None:
    cap = MAX_QUBITS if cap is None else cap
    if n_qubits > cap:
        raise StateError(f"{n_qubits} qubits exceeds the cap of {cap}")


def n_qubits_of(psi: np.ndarray) -> int:
    n = int(psi.shape[-1]).bit_length() - 1
    if 1 << n != psi.shape[-1]:
        raise StateError(f"length {psi.shape[-1]} is not a power of two")
    return n


def basis_state(bits: str, cap: int | None = None) -> np.ndarray:
    """One-hot state for a bitstring such as ``"0110"``."""
    if any(b not in "01" for b in bits):
        raise StateError(f"invalid bitstring {bits!r}")
    _check_size(len(bits), cap)
    psi = np.zeros(1 << len(bits), dtype=complex)
    psi[int(bits, 2) if bits else 0] = 1.0
    return psi


def hadamard(psi: np.ndarray, qubit: int) -> np.ndarray:
    n = n_qubits_of(psi)
    t = psi.reshape(1 << qubit, 2, 1 << (n - qubit - 1))
    a, b = t[:, 0, :], t[:, 1, :]
    out = np.stack([a + b, a - b], axis=1) / np.sqrt(2.0)
    return out.reshape(psi.shape)


def hadamard_all(psi: np.ndarray) -> np.ndarray:
    out = psi
    for q in range(n_qubits_of(psi)):
        out = hadamard(out, q)
    return out


def inner(phi: np.ndarray, psi: np.ndarray) -> complex:
    """``<phi|psi>``."""
    if phi.shape != psi.shape:
        raise StateError(f"dimension mismatch: {phi.shape} vs {psi.shape}")
    return complex(np.vdot(phi, psi))


def norm(psi: np.ndarray) -> float:
    return float(np.linalg.norm(psi))


def dump(psi: np.ndarray, path) -> None:
    """Write amplitudes as little-endian (re, im) float64 pairs.  Debug aid only."""
    np.asarray(psi, dtype="<c16").tofile(path)


def load(path) -> np.ndarray:
    return np.fromfile(path, dtype="<c16").astype(complex)
