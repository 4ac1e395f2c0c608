"""Exact diagonalization in the native spin-1 basis.

Provides ground states for fidelity checks and the two finite-size locators
used to place the model parameters near criticality: Binder-cumulant
crossings for the Blume-Capel chain and symmetry-sector level crossings with
twisted boundaries for the anisotropic XXZ chain.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh

from .encoding import Encoding, project
from .model import ModelSpec, magnetization_diagonal, spin1_dense, spin1_matvec

log = logging.getLogger(__name__)

DENSE_MAX_DIM = 1000
RESIDUAL_TOL = 1e-8
DEGENERACY_TOL = 1e-10


class EDError(RuntimeError):
    pass


class CrossingError(ValueError):
    pass


@dataclass
class EDResult:
    energies: np.ndarray
    states: np.ndarray  # shape (k, 3**L), one eigenvector per row
    degeneracy_tol: float = DEGENERACY_TOL

    @property
    def ground_energy(self) -> float:
        return float(self.energies[0])

    @property
    def ground_space(self) -> np.ndarray:
        e0 = self.energies[0]
        tol = self.degeneracy_tol * max(1.0, abs(e0))
        return self.states[self.energies - e0 <= tol]

    @property
    def degeneracy(self) -> int:
        return len(self.ground_space)


def _check_residuals(spec: ModelSpec, energies: np.ndarray, states: np.ndarray) -> None:
    for e, v in zip(energies, states):
        r = np.linalg.norm(spin1_matvec(spec, v) - e * v)
        if r > RESIDUAL_TOL:
            raise EDError(f"eigen-residual {r:.2e} exceeds {RESIDUAL_TOL:.0e} (E={e:.6f})")


def ground_state(spec: ModelSpec, k: int = 4, method: str = "auto",
                 maxiter: int | None = None) -> EDResult:
    """Lowest ``k`` eigenpairs of the spin-1 Hamiltonian.

    ``method`` is ``"dense"``, ``"iterative"`` or ``"auto"`` (dense below
    dimension 1000).
    """
    dim = 3**spec.L
    k = min(k, dim)
    if method == "auto":
        method = "dense" if dim < DENSE_MAX_DIM else "iterative"
    if method == "dense":
        H = spin1_dense(spec)
        if np.allclose(H.imag, 0.0):
            H = H.real
        w, v = np.linalg.eigh(H)
        energies, states = w[:k], v[:, :k].T
    elif method == "iterative":
        if k >= dim - 1:
            raise EDError("iterative solver needs k < dim - 1; use method='dense'")
        op = LinearOperator((dim, dim), matvec=lambda x: spin1_matvec(spec, x), dtype=float)
        v0 = np.ones(dim) / np.sqrt(dim)
        try:
            w, v = eigsh(op, k=k, which="SA", tol=1e-13, v0=v0, maxiter=maxiter or 20 * dim)
        except ArpackNoConvergence as exc:
            raise EDError(f"iterative eigensolver did not converge: {exc}") from exc
        order = np.argsort(w)
        energies, states = w[order], v[:, order].T
    else:
        raise ValueError(f"unknown method {method!r}")
    _check_residuals(spec, energies, states)
    return EDResult(energies=np.asarray(energies), states=np.asarray(states))


def fidelity(psi: np.ndarray, ed: EDResult, enc: Encoding | str) -> float:
    """Weight of the qubit state ``psi`` on the embedded ED ground space."""
    L = int(round(np.log(ed.states.shape[1]) / np.log(3)))
    coeffs = project(psi, enc, L)
    overlaps = ed.ground_space.conj() @ coeffs
    return float(np.sum(np.abs(overlaps) ** 2))


# ---------------------------------------------------------------------------
# Binder cumulant
# ---------------------------------------------------------------------------


def binder_from_states(states: np.ndarray, L: int) -> float:
    """``1 - <m^4> / (3 <m^2>^2)`` averaged uniformly over the given rows."""
    states = np.atleast_2d(states)
    m = magnetization_diagonal(L) / L
    w = np.mean(np.abs(states) ** 2, axis=0) / np.mean(np.sum(np.abs(states) ** 2, axis=1))
    m2 = float(np.sum(w * m**2))
    m4 = float(np.sum(w * m**4))
    if m2 < 1e-14:
        raise ValueError("<m^2> vanishes; Binder cumulant undefined")
    return 1.0 - m4 / (3.0 * m2**2)


def binder_cumulant(spec: ModelSpec) -> float:
    ed = ground_state(spec, k=2)
    return binder_from_states(ed.ground_space, spec.L)


@dataclass
class CrossingScan:
    parameter: str
    grid: np.ndarray
    observables: dict[str, np.ndarray]
    crossing: float
    pair_crossings: dict[str, float] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "parameter": self.parameter,
            "grid": self.grid.tolist(),
            "observables": {k: np.asarray(v).tolist() for k, v in self.observables.items()},
            "crossing": self.crossing,
            "pair_crossings": self.pair_crossings,
            "meta": self.meta,
        }


def _brackets(grid: np.ndarray, diff: np.ndarray) -> list[int]:
    s = np.sign(diff)
    return [i for i in range(len(grid) - 1) if s[i] == 0 or s[i] * s[i + 1] < 0]


def _bisect(f: Callable[[float], float], a: float, b: float, fa: float, tol: float) -> float:
    while b - a > tol:
        mid = 0.5 * (a + b)
        fm = f(mid)
        if fm == 0.0:
            return mid
        if np.sign(fm) == np.sign(fa):
            a, fa = mid, fm
        else:
            b = mid
    return 0.5 * (a + b)


def _check_grid(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) < 2 or np.any(np.diff(grid) <= 0):
        raise CrossingError("grid must be strictly increasing with at least two points")
    return grid


def binder_crossing(template: ModelSpec, sizes: Sequence[int], h_grid,
                    tol: float = 1e-4) -> CrossingScan:
    """Locate where Binder curves of adjacent chain sizes cross as ``hx`` varies.

    The magnitude of ``hx`` is scanned; the sign of ``template.hx`` is kept.
    """
    grid = _check_grid(h_grid)
    sizes = list(sizes)
    if len(sizes) < 2:
        raise CrossingError("need at least two sizes")
    if len(set(sizes)) != len(sizes):
        raise CrossingError("sizes must be distinct; identical curves never cross")
    sign = -1.0 if template.hx < 0 else 1.0

    def U(L: int, h: float) -> float:
        return binder_cumulant(template.with_(L=L, hx=sign * h))

    curves = {L: np.array([U(L, h) for h in grid]) for L in sizes}
    pairs = {}
    for L1, L2 in zip(sizes, sizes[1:]):
        diff = curves[L1] - curves[L2]
        br = _brackets(grid, diff)
        if not br:
            raise CrossingError(f"no sign change of U_{L1} - U_{L2} on the grid")
        i = br[0]

        def f(h, L1=L1, L2=L2):
            return U(L1, h) - U(L2, h)

        pairs[f"{L1}-{L2}"] = float(_bisect(f, grid[i], grid[i + 1], diff[i], tol))
    return CrossingScan(
        parameter="hx",
        grid=grid,
        observables={f"U_L{L}": c for L, c in curves.items()},
        crossing=float(np.mean(list(pairs.values()))),
        pair_crossings=pairs,
        meta={"boundary": template.boundary, "sizes": sizes,
              "delta": template.delta, "D": template.D},
    )


# ---------------------------------------------------------------------------
# symmetry sectors with twisted boundaries
# ---------------------------------------------------------------------------


def _digits(L: int) -> np.ndarray:
    idx = np.arange(3**L)
    return np.array([(idx // 3 ** (L - 1 - s)) % 3 for s in range(L)])


def _from_digits(d: np.ndarray, L: int) -> np.ndarray:
    w = 3 ** np.arange(L - 1, -1, -1)
    return (w[:, None] * d).sum(axis=0)


def inversion_permutation(L: int) -> np.ndarray:
    """Basis index map for site inversion ``j -> L + 1 - j``."""
    return _from_digits(_digits(L)[::-1], L)


def spin_reversal_permutation(L: int) -> np.ndarray:
    """Basis index map for the relabeling ``m -> -m`` on every site."""
    return _from_digits(2 - _digits(L), L)


def sector_basis(L: int, parity: int, mz: int | None = 0) -> sparse.csr_matrix:
    """Orthonormal basis (columns) of states with inversion and spin-reversal
    eigenvalue ``parity`` each, optionally restricted to total ``Sz = mz``."""
    dim = 3**L
    P = inversion_permutation(L)
    T = spin_reversal_permutation(L)
    M = magnetization_diagonal(L)
    keep = np.ones(dim, bool) if mz is None else np.isclose(M, mz)
    seen = np.zeros(dim, bool)
    cols, rows, vals = [], [], []
    ncol = 0
    for b in np.flatnonzero(keep):
        if seen[b]:
            continue
        # group {1, P, T, PT}: characters parity, parity, 1
        members = ((b, 1.0), (P[b], parity), (T[b], parity), (T[P[b]], 1.0))
        orbit = {}
        for idx, ch in members:
            orbit[idx] = orbit.get(idx, 0.0) + ch
        for idx, _ in members:
            seen[idx] = True
        amp = {i: c for i, c in orbit.items() if abs(c) > 1e-12}
        if not amp:
            continue
        nrm = np.sqrt(sum(c * c for c in amp.values()))
        for i, c in amp.items():
            rows.append(i)
            cols.append(ncol)
            vals.append(c / nrm)
        ncol += 1
    return sparse.csr_matrix((vals, (rows, cols)), shape=(dim, ncol))


def _sector_matrix(spec: ModelSpec, B: np.ndarray) -> np.ndarray:
    HB = np.column_stack([spin1_matvec(spec, B[:, c]) for c in range(B.shape[1])])
    Hs = B.T @ HB
    return 0.5 * (Hs + Hs.T)


def sector_energies(spec: ModelSpec, parity: int, k: int = 1, mz: int | None = 0) -> np.ndarray:
    """Lowest ``k`` levels with inversion and spin-reversal eigenvalues ``parity``."""
    B = sector_basis(spec.L, parity, mz)
    if B.shape[1] == 0:
        raise EDError(f"sector with parity {parity} is empty")
    return np.linalg.eigvalsh(_sector_matrix(spec, B.toarray()))[:k]


def sector_crossing(template: ModelSpec, D_grid, L: int | None = None,
                    tol: float = 1e-6, mz: int | None = 0) -> CrossingScan:
    """Find the ``D`` where the lowest levels of the ``-1`` and ``+1`` sectors cross.

    A negative difference ``E(-1) - E(+1)`` marks the Haldane side.
    """
    if template.boundary != "twisted":
        raise CrossingError("sector crossing requires twisted boundaries")
    spec0 = template if L is None else template.with_(L=L)
    grid = _check_grid(D_grid)

    # H is affine in D, so each sector block is A + D * C
    blocks = {}
    for parity in (-1, 1):
        B = sector_basis(spec0.L, parity, mz).toarray()
        if B.shape[1] == 0:
            raise EDError(f"sector with parity {parity} is empty")
        A = _sector_matrix(spec0.with_(D=0.0), B)
        C = _sector_matrix(spec0.with_(D=1.0), B) - A
        if np.max(np.abs(C - np.diag(np.diag(C)))) > 1e-12:
            raise EDError("sector projection mixes the anisotropy term")
        blocks[parity] = (A, C)

    def levels(D: float) -> tuple[float, float]:
        return tuple(float(np.linalg.eigvalsh(A + D * C)[0])
                     for A, C in (blocks[-1], blocks[1]))

    lv = np.array([levels(D) for D in grid])
    diff = lv[:, 0] - lv[:, 1]
    br = _brackets(grid, diff)
    if not br:
        raise CrossingError("no level crossing between sectors on the grid")
    i = br[0]
    crossing = _bisect(lambda D: np.subtract(*levels(D)), grid[i], grid[i + 1], diff[i], tol)
    return CrossingScan(
        parameter="D",
        grid=grid,
        observables={"E_minus": lv[:, 0], "E_plus": lv[:, 1], "diff": diff},
        crossing=float(crossing),
        meta={"L": spec0.L, "J": spec0.J, "delta": spec0.delta, "boundary": "twisted",
              "mz": mz, "brackets": [[float(grid[j]), float(grid[j + 1])] for j in br]},
    )
