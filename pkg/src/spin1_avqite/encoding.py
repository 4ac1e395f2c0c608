"""Spin-1 to qubit encodings.

Each spin-1 site is stored in ``n`` qubits (2 for standard, Gray and
multiplet; 3 for unary).  Site ``j`` (1-based) occupies qubits
``(j-1)*n .. j*n-1`` of the register.  Spin levels are ordered
``|0>, |1>, |2>`` with magnetic quantum numbers ``+1, 0, -1``.
"""

from __future__ import annotations

import enum
from functools import lru_cache

import numpy as np

from .pauli import PauliError, PauliString, PauliSum, sum_multiply
from .statevector import hadamard_all

_SQ2 = np.sqrt(2.0)

SX = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=complex) / _SQ2
SY = np.array([[0, -1j, 0], [1j, 0, -1j], [0, 1j, 0]], dtype=complex) / _SQ2
SZ = np.diag([1.0, 0.0, -1.0]).astype(complex)
SPIN_OPS = {"x": SX, "y": SY, "z": SZ}
MAGNETIZATION = np.array([1.0, 0.0, -1.0])


class Encoding(enum.Enum):
    STANDARD = "standard"
    GRAY = "gray"
    UNARY = "unary"
    MULTIPLET = "multiplet"

    @classmethod
    def parse(cls, value: Encoding | str) -> Encoding:
        if isinstance(value, Encoding):
            return value
        try:
            return cls(value.lower())
        except ValueError:
            raise ValueError(
                f"unknown encoding {value!r}; expected one of {[e.value for e in cls]}"
            ) from None

    @property
    def qubits_per_site(self) -> int:
        return 3 if self is Encoding.UNARY else 2

    @property
    def is_outer_product(self) -> bool:
        return self is not Encoding.MULTIPLET

    def site_isometry(self) -> np.ndarray:
        """``2**n x 3`` matrix whose columns are the encoded spin levels."""
        return _SITE_ISOMETRY[self]

    def n_qubits(self, L: int) -> int:
        return self.qubits_per_site * L


_LEVEL_BITS = {
    Encoding.STANDARD: ("00", "01", "10"),
    Encoding.GRAY: ("00", "01", "11"),
    Encoding.UNARY: ("001", "010", "100"),
    Encoding.MULTIPLET: ("00", None, "11"),
}


def _build_isometry(enc: Encoding) -> np.ndarray:
    n = enc.qubits_per_site
    iso = np.zeros((1 << n, 3), dtype=complex)
    for level, bits in enumerate(_LEVEL_BITS[enc]):
        if bits is None:
            iso[0b01, level] = iso[0b10, level] = 1 / _SQ2
        else:
            iso[int(bits, 2), level] = 1.0
    return iso


_SITE_ISOMETRY = {enc: _build_isometry(enc) for enc in Encoding}


def _parse_spins(spins: str) -> list[int]:
    if not spins or any(c not in "012" for c in spins):
        raise ValueError(f"invalid spin string {spins!r}; use characters 0, 1, 2")
    return [int(c) for c in spins]


# ---------------------------------------------------------------------------
# states
# ---------------------------------------------------------------------------


def embed(v: np.ndarray, enc: Encoding | str, L: int) -> np.ndarray:
    """Map a spin-1 vector of length ``3**L`` into the qubit register."""
    enc = Encoding.parse(enc)
    v = np.asarray(v, dtype=complex)
    if v.shape[-1] != 3**L:
        raise ValueError(f"vector of length {v.shape[-1]} does not match L={L}")
    iso = enc.site_isometry()
    t = v.reshape((3,) * L)
    for site in range(L):
        # contract the spin index of `site` and append a qubit-block index
        t = np.tensordot(iso, t, axes=([1], [site]))
        t = np.moveaxis(t, 0, site)
    return t.reshape(-1)


def project(psi: np.ndarray, enc: Encoding | str, L: int) -> np.ndarray:
    """Adjoint of :func:`embed`: components of ``psi`` in the encoded basis."""
    enc = Encoding.parse(enc)
    n = enc.qubits_per_site
    if psi.shape[-1] != 1 << (n * L):
        raise ValueError(f"state of length {psi.shape[-1]} does not match L={L}")
    iso_h = enc.site_isometry().conj().T
    t = psi.reshape((1 << n,) * L)
    for site in range(L):
        t = np.tensordot(iso_h, t, axes=([1], [site]))
        t = np.moveaxis(t, 0, site)
    return t.reshape(-1)


def encode_basis(spins: str, enc: Encoding | str) -> np.ndarray:
    """Encoded qubit state for a spin configuration such as ``"0211"``."""
    levels = _parse_spins(spins)
    v = np.zeros(3 ** len(levels), dtype=complex)
    v[int(spins, 3)] = 1.0
    return embed(v, enc, len(levels))


def reference_state(spins: str, basis: str, enc: Encoding | str) -> np.ndarray:
    """Encoded product reference; ``basis='x'`` adds a Hadamard on every qubit."""
    psi = encode_basis(spins, enc)
    if basis == "z":
        return psi
    if basis == "x":
        return hadamard_all(psi)
    raise ValueError(f"basis must be 'z' or 'x', got {basis!r}")


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------

# |a><b| on one qubit in terms of (coefficient, Pauli character)
_KETBRA = {
    (0, 0): ((0.5, "I"), (0.5, "Z")),
    (1, 1): ((0.5, "I"), (-0.5, "Z")),
    (0, 1): ((0.5, "X"), (0.5j, "Y")),
    (1, 0): ((0.5, "X"), (-0.5j, "Y")),
}


def _ketbra_terms(ket: str, bra: str) -> dict[str, complex]:
    """Pauli expansion of the multi-qubit outer product ``|ket><bra|``."""
    terms = {"": 1.0 + 0j}
    for a, b in zip(ket, bra):
        nxt: dict[str, complex] = {}
        for label, c in terms.items():
            for c1, ch in _KETBRA[(int(a), int(b))]:
                nxt[label + ch] = nxt.get(label + ch, 0.0) + c * c1
        terms = nxt
    return terms


def _outer_product_encode(op: np.ndarray, enc: Encoding) -> PauliSum:
    n = enc.qubits_per_site
    levels = _LEVEL_BITS[enc]
    acc: dict[tuple[int, int], complex] = {}
    for i in range(3):
        for j in range(3):
            if op[i, j] == 0:
                continue
            for label, c in _ketbra_terms(levels[i], levels[j]).items():
                p = PauliString.from_label(label)
                key = (p.x_mask, p.z_mask)
                acc[key] = acc.get(key, 0.0) + op[i, j] * c
    return PauliSum.from_complex(n, acc)


def _multiplet_generator(alpha: str) -> PauliSum:
    a = alpha.upper()
    return PauliSum.from_terms(2, [(0.5, a + "I"), (0.5, "I" + a)])


def _square(s: np.ndarray) -> np.ndarray:
    return s @ s


# Hermitian basis of 3x3 matrices built only from spin operators and squares
# of their real combinations, so every element maps to an encoded polynomial.
_POLY_BASIS = (
    ((), np.eye(3, dtype=complex)),
    (("x",), SX),
    (("y",), SY),
    (("z",), SZ),
    (("x", "x"), _square(SX)),
    (("z", "z"), _square(SZ)),
    (("x+y", "x+y"), _square(SX + SY)),
    (("y+z", "y+z"), _square(SY + SZ)),
    (("z+x", "z+x"), _square(SZ + SX)),
)


def _poly_coefficients(op: np.ndarray) -> np.ndarray:
    basis = np.array([m.reshape(-1) for _, m in _POLY_BASIS]).T
    coef, *_ = np.linalg.lstsq(basis, op.reshape(-1), rcond=None)
    if np.max(np.abs(basis @ coef - op.reshape(-1))) > 1e-12:
        raise PauliError("operator is not in the span of the spin-1 polynomial basis")
    if np.max(np.abs(coef.imag)) > 1e-12:
        raise PauliError("operator is not Hermitian")
    return coef.real


def _multiplet_encode(op: np.ndarray) -> PauliSum:
    gens = {a: _multiplet_generator(a) for a in "xyz"}
    for combo in ("x+y", "y+z", "z+x"):
        a, b = combo.split("+")
        gens[combo] = gens[a] + gens[b]
    out = PauliSum(2)
    for coef, (factors, _) in zip(_poly_coefficients(op), _POLY_BASIS):
        if abs(coef) < 1e-12:
            continue
        term = PauliSum.identity(2)
        for f in factors:
            term = sum_multiply(term, gens[f])
        out = out + coef * term
    return out


def _as_matrix(op) -> np.ndarray:
    if isinstance(op, str):
        key = op.lower().removeprefix("s")
        if key not in SPIN_OPS:
            raise ValueError(f"unknown spin operator {op!r}")
        return SPIN_OPS[key]
    m = np.asarray(op, dtype=complex)
    if m.shape != (3, 3):
        raise ValueError(f"site operator must be 3x3, got {m.shape}")
    return m


def encode_site_operator(op, enc: Encoding | str) -> PauliSum:
    """Encode a single-site spin-1 operator on the ``n`` qubits of one site.

    ``op`` is a 3x3 matrix or one of ``"Sx"``, ``"Sy"``, ``"Sz"``.
    """
    enc = Encoding.parse(enc)
    if isinstance(op, str):
        return _encode_named(op.lower().removeprefix("s"), enc)
    m = _as_matrix(op)
    if not np.allclose(m, m.conj().T, atol=1e-14):
        raise PauliError("site operator must be Hermitian")
    if enc.is_outer_product:
        return _outer_product_encode(m, enc)
    return _multiplet_encode(m)


@lru_cache(maxsize=None)
def _encode_named(alpha: str, enc: Encoding) -> PauliSum:
    if alpha not in SPIN_OPS:
        raise ValueError(f"unknown spin operator S{alpha}")
    if enc is Encoding.MULTIPLET:
        return _multiplet_generator(alpha)
    return _outer_product_encode(SPIN_OPS[alpha], enc)


def _check_site(site: int, L: int) -> None:
    if not 1 <= site <= L:
        raise ValueError(f"site {site} outside 1..{L}")


def encode_operator(op, site: int, enc: Encoding | str, L: int) -> PauliSum:
    """Encoded single-site operator acting on ``site`` (1-based) of an L-site chain."""
    enc = Encoding.parse(enc)
    _check_site(site, L)
    n = enc.qubits_per_site
    return encode_site_operator(op, enc).embed((site - 1) * n, n * L)


@lru_cache(maxsize=None)
def _local_projector(enc: Encoding) -> PauliSum:
    total = PauliSum(enc.qubits_per_site)
    for alpha in "xyz":
        s = _encode_named(alpha, enc)
        total = total + sum_multiply(s, s)
    return 0.5 * total


def site_projector(site: int, enc: Encoding | str, L: int) -> PauliSum:
    """Projector onto the encoded spin-1 subspace of one site."""
    enc = Encoding.parse(enc)
    _check_site(site, L)
    n = enc.qubits_per_site
    return _local_projector(enc).embed((site - 1) * n, n * L)


def global_projector_expectation(psi: np.ndarray, enc: Encoding | str, L: int) -> float:
    """``<psi| P_1 P_2 ... P_L |psi>`` for the site projectors."""
    enc = Encoding.parse(enc)
    n = enc.qubits_per_site
    if psi.shape[-1] != 1 << (n * L):
        raise ValueError(f"state of length {psi.shape[-1]} does not match L={L}")
    local = _local_projector_matrix(enc)
    work = psi.reshape((1 << n,) * L)
    for site in range(L):
        work = np.moveaxis(np.tensordot(local, work, axes=([1], [site])), 0, site)
    return float(np.vdot(psi, work.reshape(-1)).real)


@lru_cache(maxsize=None)
def _local_projector_matrix(enc: Encoding) -> np.ndarray:
    return _local_projector(enc).to_matrix()
