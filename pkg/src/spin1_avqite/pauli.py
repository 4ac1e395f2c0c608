"""Pauli strings in symplectic form and real-weighted Pauli sums.

Bit convention: qubit 0 is the leftmost character of a label and the most
significant bit of an amplitude index, so a string acting on ``n`` qubits
stores qubit ``q`` at bit position ``n - 1 - q`` of its masks.  With that
choice the masks line up directly with basis-state indices.

A string with masks ``(x, z)`` denotes ``i**ny * X**x Z**z`` where ``ny`` is
the number of positions carrying a Y, which makes every string Hermitian.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Iterator, Mapping

import numpy as np

PRUNE_TOL = 1e-14
IMAG_TOL = 1e-12
NORM_TOL = 1e-10

_PHASES = (1, 1j, -1, -1j)


class PauliError(ValueError):
    """Raised on malformed Pauli input or a non-Hermitian result."""


def _popcount(v: int) -> int:
    return bin(v).count("1")


@dataclass(frozen=True, order=True)
class PauliString:
    n_qubits: int
    x_mask: int
    z_mask: int

    def __post_init__(self):
        full = (1 << self.n_qubits) - 1
        if self.n_qubits < 0 or self.x_mask & ~full or self.z_mask & ~full:
            raise PauliError(f"masks do not fit in {self.n_qubits} qubits")

    @classmethod
    def identity(cls, n_qubits: int) -> PauliString:
        return cls(n_qubits, 0, 0)

    @classmethod
    def from_label(cls, label: str) -> PauliString:
        n = len(label)
        x = z = 0
        for q, ch in enumerate(label.upper()):
            bit = 1 << (n - 1 - q)
            if ch == "X":
                x |= bit
            elif ch == "Z":
                z |= bit
            elif ch == "Y":
                x |= bit
                z |= bit
            elif ch != "I":
                raise PauliError(f"invalid Pauli character {ch!r} in {label!r}")
        return cls(n, x, z)

    @classmethod
    def from_ops(cls, n_qubits: int, ops: Mapping[int, str]) -> PauliString:
        """Build from a sparse ``{qubit: 'X'|'Y'|'Z'}`` mapping."""
        chars = ["I"] * n_qubits
        for q, ch in ops.items():
            if not 0 <= q < n_qubits:
                raise PauliError(f"qubit {q} out of range for {n_qubits} qubits")
            chars[q] = ch
        return cls.from_label("".join(chars))

    @property
    def label(self) -> str:
        out = []
        for q in range(self.n_qubits):
            bit = 1 << (self.n_qubits - 1 - q)
            xb, zb = bool(self.x_mask & bit), bool(self.z_mask & bit)
            out.append("Y" if xb and zb else "X" if xb else "Z" if zb else "I")
        return "".join(out)

    def __str__(self) -> str:
        return self.label

    @property
    def weight(self) -> int:
        return _popcount(self.x_mask | self.z_mask)

    @property
    def n_y(self) -> int:
        return _popcount(self.x_mask & self.z_mask)

    @property
    def is_identity(self) -> bool:
        return self.x_mask == 0 and self.z_mask == 0

    def commutes_with(self, other: PauliString) -> bool:
        s = _popcount(self.x_mask & other.z_mask) + _popcount(self.z_mask & other.x_mask)
        return s % 2 == 0

    def shifted(self, offset: int, n_qubits: int) -> PauliString:
        """Place this string on qubits ``offset..offset+n-1`` of a wider register."""
        shift = n_qubits - offset - self.n_qubits
        if shift < 0 or offset < 0:
            raise PauliError("embedding does not fit in target register")
        return PauliString(n_qubits, self.x_mask << shift, self.z_mask << shift)

    def to_matrix(self) -> np.ndarray:
        idx = np.arange(1 << self.n_qubits)
        mat = np.zeros((idx.size, idx.size), dtype=complex)
        mat[idx ^ self.x_mask, idx] = _phase_vector(self, idx)
        return mat


def _phase_vector(p: PauliString, idx: np.ndarray) -> np.ndarray:
    """Phase picked up by basis state ``idx`` under ``p``: P|b> = phase(b)|b^x>."""
    signs = 1 - 2 * (np.bitwise_count(idx & p.z_mask) & 1).astype(np.int8)
    return _PHASES[p.n_y % 4] * signs


def multiply(p: PauliString, q: PauliString) -> tuple[complex, PauliString]:
    """Return ``(phase, r)`` with ``p @ q == phase * r``."""
    if p.n_qubits != q.n_qubits:
        raise PauliError(f"size mismatch: {p.n_qubits} vs {q.n_qubits}")
    r = PauliString(p.n_qubits, p.x_mask ^ q.x_mask, p.z_mask ^ q.z_mask)
    # Z^zp X^xq = (-1)^{|zp & xq|} X^xq Z^zp
    k = p.n_y + q.n_y - r.n_y + 2 * _popcount(p.z_mask & q.x_mask)
    return _PHASES[k % 4], r


def _check_state(p_n: int, psi: np.ndarray) -> None:
    if psi.shape[-1] != 1 << p_n:
        raise PauliError(f"state of length {psi.shape[-1]} does not match {p_n} qubits")


@lru_cache(maxsize=4096)
def _gather(p: PauliString) -> tuple[np.ndarray, np.ndarray]:
    # (P psi)[c] = phase(c ^ x) * psi[c ^ x]
    src = np.arange(1 << p.n_qubits) ^ p.x_mask
    return src, _phase_vector(p, src)


def apply_string(p: PauliString, psi: np.ndarray) -> np.ndarray:
    """Return ``p|psi>``.  Works on a single vector or a stack of row vectors."""
    _check_state(p.n_qubits, psi)
    src, phase = _gather(p)
    return phase * psi[..., src]


@lru_cache(maxsize=4096)
def _real_kernel(p: PauliString) -> tuple[np.ndarray, np.ndarray]:
    src, phase = _gather(p)
    k = -1j * phase
    if np.any(k.imag != 0):
        raise PauliError(f"{p.label} is not an odd-Y string; -iP is not real")
    return src, k.real.astype(float)


def rotation_generator_apply(p: PauliString, psi: np.ndarray) -> np.ndarray:
    """Return ``-i p|psi>`` in real arithmetic for strings with odd Y count."""
    _check_state(p.n_qubits, psi)
    src, k = _real_kernel(p)
    return k * psi[..., src]


def exp_apply_real(p: PauliString, theta: float, psi: np.ndarray) -> np.ndarray:
    """``exp(-i theta p)|psi>`` for odd-Y ``p`` and real ``psi``, staying real."""
    return np.cos(theta) * psi + np.sin(theta) * rotation_generator_apply(p, psi)


def exp_apply(p: PauliString, theta: float, psi: np.ndarray) -> np.ndarray:
    """Return ``exp(-i theta p)|psi>`` for a non-identity string."""
    if p.is_identity:
        raise PauliError("identity generator only contributes a global phase")
    return np.cos(theta) * psi - 1j * np.sin(theta) * apply_string(p, psi)


class PauliSum:
    """Immutable real linear combination of Pauli strings on ``n_qubits``.

    Terms are kept in a dict keyed by ``(x_mask, z_mask)``; iteration order is
    canonical (sorted by masks), so two sums with the same content compare and
    print identically regardless of how they were assembled.
    """

    __slots__ = ("n_qubits", "_terms", "_groups")

    def __init__(self, n_qubits: int, terms: Mapping[tuple[int, int], float] | None = None):
        self.n_qubits = n_qubits
        cleaned = {}
        for key, c in sorted((terms or {}).items()):
            c = float(c)
            if abs(c) > PRUNE_TOL:
                cleaned[key] = c
        self._terms = cleaned
        self._groups = None

    @classmethod
    def from_complex(cls, n_qubits: int, terms: Mapping[tuple[int, int], complex]) -> PauliSum:
        """Drop a complex accumulator to a real sum, rejecting imaginary residue."""
        real = {}
        for key, c in terms.items():
            if abs(c.imag) > IMAG_TOL:
                raise PauliError(
                    f"non-Hermitian result: coefficient {c} on "
                    f"{PauliString(n_qubits, *key).label}"
                )
            real[key] = c.real
        return cls(n_qubits, real)

    @classmethod
    def from_terms(cls, n_qubits: int, terms: Iterable[tuple[float, PauliString | str]]) -> PauliSum:
        acc: dict[tuple[int, int], float] = {}
        for c, p in terms:
            if isinstance(p, str):
                p = PauliString.from_label(p)
            if p.n_qubits != n_qubits:
                raise PauliError("size mismatch in PauliSum terms")
            key = (p.x_mask, p.z_mask)
            acc[key] = acc.get(key, 0.0) + c
        return cls(n_qubits, acc)

    @classmethod
    def identity(cls, n_qubits: int, coeff: float = 1.0) -> PauliSum:
        return cls(n_qubits, {(0, 0): coeff})

    def __len__(self) -> int:
        return len(self._terms)

    def __iter__(self) -> Iterator[tuple[float, PauliString]]:
        for (x, z), c in self._terms.items():
            yield c, PauliString(self.n_qubits, x, z)

    def coeff(self, p: PauliString | str) -> float:
        if isinstance(p, str):
            p = PauliString.from_label(p)
        return self._terms.get((p.x_mask, p.z_mask), 0.0)

    def as_dict(self) -> dict[str, float]:
        return {p.label: c for c, p in self}

    def __repr__(self) -> str:
        body = " + ".join(f"{c:.6g}*{p.label}" for c, p in self)
        return f"PauliSum({self.n_qubits}, {body or '0'})"

    def _check(self, other: PauliSum) -> None:
        if self.n_qubits != other.n_qubits:
            raise PauliError(f"size mismatch: {self.n_qubits} vs {other.n_qubits}")

    def __add__(self, other: PauliSum) -> PauliSum:
        self._check(other)
        acc = dict(self._terms)
        for key, c in other._terms.items():
            acc[key] = acc.get(key, 0.0) + c
        return PauliSum(self.n_qubits, acc)

    def __sub__(self, other: PauliSum) -> PauliSum:
        return self + (-1.0) * other

    def __mul__(self, scalar: float) -> PauliSum:
        return PauliSum(self.n_qubits, {k: scalar * c for k, c in self._terms.items()})

    __rmul__ = __mul__

    def __neg__(self) -> PauliSum:
        return -1.0 * self

    def __matmul__(self, other: PauliSum) -> PauliSum:
        return sum_multiply(self, other)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PauliSum):
            return NotImplemented
        return self.n_qubits == other.n_qubits and self._terms == other._terms

    def allclose(self, other: PauliSum, atol: float = PRUNE_TOL) -> bool:
        if self.n_qubits != other.n_qubits:
            return False
        keys = set(self._terms) | set(other._terms)
        return all(
            abs(self._terms.get(k, 0.0) - other._terms.get(k, 0.0)) <= atol for k in keys
        )

    def is_zero(self) -> bool:
        return not self._terms

    def embed(self, offset: int, n_qubits: int) -> PauliSum:
        """Place this sum on qubits starting at ``offset`` of a wider register."""
        acc = {}
        for c, p in self:
            s = p.shifted(offset, n_qubits)
            acc[(s.x_mask, s.z_mask)] = c
        return PauliSum(n_qubits, acc)

    def _grouped(self) -> list[tuple[int, np.ndarray]]:
        # terms sharing an x mask act as one diagonal followed by one bit flip
        if self._groups is None:
            dim = 1 << self.n_qubits
            idx = np.arange(dim)
            diag: dict[int, np.ndarray] = {}
            for c, p in self:
                d = diag.setdefault(p.x_mask, np.zeros(dim, dtype=complex))
                d += c * _phase_vector(p, idx)
            self._groups = [
                (x, d.real.copy() if not np.any(d.imag) else d) for x, d in diag.items()
            ]
        return self._groups

    def apply(self, psi: np.ndarray) -> np.ndarray:
        """Return ``h|psi>`` for a vector or a stack of row vectors."""
        _check_state(self.n_qubits, psi)
        groups = self._grouped()
        dtype = np.result_type(psi.dtype, float, *(d.dtype for _, d in groups))
        out = np.zeros(psi.shape, dtype=dtype)
        idx = np.arange(psi.shape[-1])
        for x, d in groups:
            src = idx ^ x
            out += d[src] * psi[..., src]
        return out

    def to_matrix(self) -> np.ndarray:
        dim = 1 << self.n_qubits
        return self.apply(np.eye(dim, dtype=complex)).T

    def to_sparse(self):
        from scipy import sparse

        dim = 1 << self.n_qubits
        idx = np.arange(dim)
        rows, cols, vals = [], [], []
        for x, d in self._grouped():
            src = idx ^ x
            rows.append(idx)
            cols.append(src)
            vals.append(d[src])
        if not rows:
            return sparse.csr_matrix((dim, dim), dtype=complex)
        return sparse.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(dim, dim),
        )


def sum_multiply(a: PauliSum, b: PauliSum) -> PauliSum:
    """Canonical product ``a @ b``; raises if the product is not Hermitian."""
    a._check(b)
    acc: dict[tuple[int, int], complex] = {}
    for ca, pa in a:
        for cb, pb in b:
            phase, r = multiply(pa, pb)
            key = (r.x_mask, r.z_mask)
            acc[key] = acc.get(key, 0.0) + phase * ca * cb
    return PauliSum.from_complex(a.n_qubits, acc)


def _check_norm(psi: np.ndarray) -> None:
    nrm = np.linalg.norm(psi)
    if abs(nrm - 1.0) > NORM_TOL:
        raise PauliError(f"state is not normalized (norm {nrm:.3e})")


def expectation(h: PauliSum, psi: np.ndarray) -> float:
    _check_norm(psi)
    val = np.vdot(psi, h.apply(psi))
    if abs(val.imag) > IMAG_TOL:
        raise PauliError(f"expectation has imaginary part {val.imag:.3e}")
    return float(val.real)


def variance(h: PauliSum, psi: np.ndarray) -> float:
    """``||h psi||^2 - <h>^2``, clamped at zero."""
    _check_norm(psi)
    hpsi = h.apply(psi)
    mean = np.vdot(psi, hpsi)
    if abs(mean.imag) > IMAG_TOL:
        raise PauliError(f"expectation has imaginary part {mean.imag:.3e}")
    return max(float(np.vdot(hpsi, hpsi).real - mean.real**2), 0.0)
