"""Spin-1 chain Hamiltonian with XXZ exchange, single-ion anisotropy and a
transverse field:

    H = sum_bonds J (Sx_i Sx_j + Sy_i Sy_j) + delta Sz_i Sz_j
        + sum_sites D (Sz_j)^2 + hx Sx_j
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace
from functools import lru_cache

import numpy as np

from .encoding import SX, SY, SZ, Encoding, encode_operator
from .pauli import PauliSum, sum_multiply

BOUNDARIES = ("open", "periodic", "twisted")

_SPLUS = (SX + 1j * SY).real
_SMINUS = (SX - 1j * SY).real
_SXR = SX.real
_SZR = SZ.real
_SZ2 = (SZ @ SZ).real


@dataclass(frozen=True)
class ModelSpec:
    L: int
    J: float = 0.0
    delta: float = 0.0
    D: float = 0.0
    hx: float = 0.0
    boundary: str = "open"

    def __post_init__(self):
        if self.L < 1:
            raise ValueError(f"chain length must be positive, got {self.L}")
        if self.boundary not in BOUNDARIES:
            raise ValueError(f"boundary must be one of {BOUNDARIES}, got {self.boundary!r}")

    def bonds(self) -> list[tuple[int, int, float]]:
        """``(i, j, planar_sign)`` for each bond, sites 1-based."""
        out = [(j, j + 1, 1.0) for j in range(1, self.L)]
        if self.boundary != "open" and self.L > 2:
            out.append((self.L, 1, -1.0 if self.boundary == "twisted" else 1.0))
        return out

    def with_(self, **changes) -> ModelSpec:
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)


def blume_capel(L: int, delta: float = -1.0, D: float = -0.1, hx: float = -1.405,
                boundary: str = "open") -> ModelSpec:
    return ModelSpec(L=L, J=0.0, delta=delta, D=D, hx=hx, boundary=boundary)


def xxz(L: int, J: float = 1.0, delta: float = 0.1, D: float = 0.385,
        boundary: str = "open") -> ModelSpec:
    return ModelSpec(L=L, J=J, delta=delta, D=D, hx=0.0, boundary=boundary)


PRESETS = {"bc": blume_capel, "xxz": xxz}


def spec_from_config(cfg: dict) -> ModelSpec:
    """Build a spec from config keys ``model, L, J, delta, Dz, hx, boundary``."""
    kind = cfg.get("model", "general")
    params = {
        "L": int(cfg["L"]),
        "boundary": cfg.get("boundary", "open"),
    }
    for key, field in (("J", "J"), ("delta", "delta"), ("Dz", "D"), ("hx", "hx")):
        if key in cfg:
            params[field] = float(cfg[key])
    if kind == "bc":
        if params.get("J", 0.0) != 0.0:
            raise ValueError("Blume-Capel preset requires J = 0")
        params.pop("J", None)
        return blume_capel(**params)
    if kind == "xxz":
        if params.get("hx", 0.0) != 0.0:
            raise ValueError("XXZ preset requires hx = 0")
        params.pop("hx", None)
        return xxz(**params)
    if kind == "general":
        return ModelSpec(**params)
    raise ValueError(f"unknown model {kind!r}")


def spec_to_config(spec: ModelSpec) -> dict:
    kind = "bc" if spec.J == 0 else "xxz" if spec.hx == 0 else "general"
    return {"model": kind, "L": spec.L, "J": spec.J, "delta": spec.delta,
            "Dz": spec.D, "hx": spec.hx, "boundary": spec.boundary}


# ---------------------------------------------------------------------------
# qubit Hamiltonian
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def _site_op(alpha: str, site: int, enc: Encoding, L: int) -> PauliSum:
    return encode_operator("S" + alpha, site, enc, L)


def build_qubit_hamiltonian(spec: ModelSpec, enc: Encoding | str) -> PauliSum:
    enc = Encoding.parse(enc)
    L = spec.L
    H = PauliSum(enc.n_qubits(L))
    for i, j, sign in spec.bonds():
        if spec.J != 0.0:
            for alpha in "xy":
                H = H + (sign * spec.J) * sum_multiply(_site_op(alpha, i, enc, L),
                                                       _site_op(alpha, j, enc, L))
        if spec.delta != 0.0:
            H = H + spec.delta * sum_multiply(_site_op("z", i, enc, L), _site_op("z", j, enc, L))
    for j in range(1, L + 1):
        if spec.D != 0.0:
            sz = _site_op("z", j, enc, L)
            H = H + spec.D * sum_multiply(sz, sz)
        if spec.hx != 0.0:
            H = H + spec.hx * _site_op("x", j, enc, L)
    return H


# ---------------------------------------------------------------------------
# native spin-1 basis
# ---------------------------------------------------------------------------


def _apply_site(op: np.ndarray, t: np.ndarray, site: int) -> np.ndarray:
    return np.moveaxis(np.tensordot(op, t, axes=([1], [site])), 0, site)


def spin1_matvec(spec: ModelSpec, v: np.ndarray) -> np.ndarray:
    """``H v`` in the 3**L spin basis, without forming the matrix."""
    L = spec.L
    v = np.asarray(v)
    if v.shape != (3**L,):
        raise ValueError(f"vector of shape {v.shape} does not match 3**{L}")
    t = v.reshape((3,) * L)
    out = np.zeros_like(t, dtype=np.result_type(v.dtype, float))
    for i, j, sign in spec.bonds():
        a, b = i - 1, j - 1
        if spec.J != 0.0:
            # Sx Sx + Sy Sy = (S+ S- + S- S+) / 2
            c = 0.5 * sign * spec.J
            out += c * _apply_site(_SPLUS, _apply_site(_SMINUS, t, b), a)
            out += c * _apply_site(_SMINUS, _apply_site(_SPLUS, t, b), a)
        if spec.delta != 0.0:
            out += spec.delta * _apply_site(_SZR, _apply_site(_SZR, t, b), a)
    for s in range(L):
        if spec.D != 0.0:
            out += spec.D * _apply_site(_SZ2, t, s)
        if spec.hx != 0.0:
            out += spec.hx * _apply_site(_SXR, t, s)
    return out.reshape(-1)


def _kron_site(op: np.ndarray, site: int, L: int) -> np.ndarray:
    out = np.ones((1, 1))
    for s in range(1, L + 1):
        out = np.kron(out, op if s == site else np.eye(3))
    return out


def spin1_dense(spec: ModelSpec) -> np.ndarray:
    """Dense 3**L Hamiltonian built from Kronecker products; small L only."""
    L = spec.L
    dim = 3**L
    H = np.zeros((dim, dim), dtype=complex)
    for i, j, sign in spec.bonds():
        for op, c in ((SX, sign * spec.J), (SY, sign * spec.J), (SZ, spec.delta)):
            if c != 0.0:
                H += c * _kron_site(op, i, L) @ _kron_site(op, j, L)
    for s in range(1, L + 1):
        if spec.D != 0.0:
            H += spec.D * _kron_site(SZ @ SZ, s, L)
        if spec.hx != 0.0:
            H += spec.hx * _kron_site(SX, s, L)
    return H


def magnetization_diagonal(L: int) -> np.ndarray:
    """Total ``sum_j Sz_j`` on every spin basis state."""
    m = np.zeros((3,) * L)
    for s in range(L):
        shape = [1] * L
        shape[s] = 3
        m = m + np.array([1.0, 0.0, -1.0]).reshape(shape)
    return m.reshape(-1)
