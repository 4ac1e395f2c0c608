"""Adaptive variational imaginary-time evolution on a dense statevector.

The ansatz is ``U(theta) = prod_k exp(-i theta_k A_k)`` applied to a fixed
reference, with ``A_k`` Pauli strings carrying an odd number of Y factors so
that real references stay real.  Each step assembles the metric ``g``, the
energy gradient ``V`` and the energy variance, solves the regularized
equations of motion, and grows the ansatz from an operator pool whenever the
McLachlan distance exceeds a threshold.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .encoding import Encoding, global_projector_expectation, reference_state
from .model import ModelSpec, build_qubit_hamiltonian
from .pauli import (
    PauliString,
    PauliSum,
    apply_string,
    exp_apply,
    exp_apply_real,
    rotation_generator_apply,
)

log = logging.getLogger(__name__)

SUCCESS_FIDELITY = 0.999


@dataclass
class AvqiteConfig:
    dtau: float = 0.01
    l2_threshold: float = 1e-2
    grad_cutoff: float = 1e-4
    tikhonov: float = 1e-6
    max_steps: int = 10000
    max_adds_per_step: int = 8
    min_score_improvement: float = 1e-8
    # candidates scored per block; bounds memory at chunk * 2**N amplitudes
    score_chunk: int = 256

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not value > 0:
                raise ValueError(f"config field {name} must be positive, got {value}")

    @classmethod
    def from_dict(cls, d: dict) -> AvqiteConfig:
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# pools
# ---------------------------------------------------------------------------


def y_parity_odd(p: PauliString) -> bool:
    return p.n_y % 2 == 1


def build_pool(kind: str, n_qubits: int) -> list[PauliString]:
    """Operator pool in canonical order.

    Forms are enumerated in the order Y_i, Y_i Z_j, Y_i X_j, Y_i X_j Z_k
    (the last two for the maximal pool only); within a form, qubit indices
    run lexicographically over ``(i, j, k)``, all pairwise distinct.
    """
    if kind not in ("minimal", "maximal"):
        raise ValueError(f"pool kind must be 'minimal' or 'maximal', got {kind!r}")
    N = n_qubits
    pairs = [(i, j) for i in range(N) for j in range(N) if i != j]
    pool = [PauliString.from_ops(N, {i: "Y"}) for i in range(N)]
    pool += [PauliString.from_ops(N, {i: "Y", j: "Z"}) for i, j in pairs]
    if kind == "maximal":
        pool += [PauliString.from_ops(N, {i: "Y", j: "X"}) for i, j in pairs]
        pool += [
            PauliString.from_ops(N, {i: "Y", j: "X", k: "Z"})
            for i in range(N) for j in range(N) for k in range(N)
            if len({i, j, k}) == 3
        ]
    return pool


def pool_size(kind: str, N: int) -> int:
    base = N + N * (N - 1)
    if kind == "minimal":
        return base
    return base + N * (N - 1) + N * (N - 1) * (N - 2)


# ---------------------------------------------------------------------------
# ansatz and assembly
# ---------------------------------------------------------------------------


@dataclass
class Ansatz:
    reference: np.ndarray
    generators: list[PauliString] = field(default_factory=list)
    thetas: list[float] = field(default_factory=list)
    label: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.generators)

    @property
    def n_qubits(self) -> int:
        return int(self.reference.shape[0]).bit_length() - 1

    def append(self, generator: PauliString, theta: float = 0.0) -> None:
        if not y_parity_odd(generator):
            raise ValueError(f"generator {generator.label} has even Y parity")
        self.generators.append(generator)
        self.thetas.append(float(theta))

    def copy(self) -> Ansatz:
        return Ansatz(self.reference, list(self.generators), list(self.thetas), dict(self.label))

    def state(self) -> np.ndarray:
        psi = self.reference
        for A, th in zip(self.generators, self.thetas):
            psi = exp_apply(A, th, psi)
        return psi


def cnot_count(generators: Sequence[PauliString] | Ansatz) -> int:
    """CNOTs for a product of Pauli exponentials, all-to-all connectivity."""
    if isinstance(generators, Ansatz):
        generators = generators.generators
    return sum(2 * (p.weight - 1) for p in generators if p.weight > 0)


def forward_pass(ansatz: Ansatz) -> tuple[np.ndarray, np.ndarray]:
    """Return the ansatz state and the stack of derivative states (one per row).

    Row ``i`` is ``U_N .. U_{i+1} (-i A_i) U_i .. U_1 |ref>``.  Rows are
    created as the sweep reaches their gate and then carried through every
    later gate together.
    """
    ref = ansatz.reference
    n = len(ansatz)
    if not np.any(np.imag(ref)) and all(y_parity_odd(A) for A in ansatz.generators):
        # odd-Y rotations are real orthogonal maps; stay in float64
        psi = np.real(ref).astype(float)
        rot, gen = exp_apply_real, rotation_generator_apply
    else:
        psi = ref.astype(complex)
        rot = exp_apply

        def gen(A, v):
            return -1j * apply_string(A, v)

    D = np.empty((n, psi.shape[0]), dtype=psi.dtype)
    for k, (A, th) in enumerate(zip(ansatz.generators, ansatz.thetas)):
        psi = rot(A, th, psi)
        if k:
            D[:k] = rot(A, th, D[:k])
        D[k] = gen(A, psi)
    return psi, D


def derivative_states(ansatz: Ansatz) -> list[np.ndarray]:
    return list(forward_pass(ansatz)[1])


@dataclass
class Assembly:
    psi: np.ndarray
    hpsi: np.ndarray
    D: np.ndarray
    berry: np.ndarray  # <psi|d_i psi>
    g: np.ndarray
    V: np.ndarray
    energy: float
    var_h: float


def _metric(D: np.ndarray, berry: np.ndarray) -> np.ndarray:
    G = D.conj() @ D.T + np.outer(berry, berry)
    g = G.real
    return 0.5 * (g + g.T)


def assemble(ansatz: Ansatz, H: PauliSum) -> Assembly:
    psi, D = forward_pass(ansatz)
    return _assemble_from(psi, D, H)


def _assemble_from(psi: np.ndarray, D: np.ndarray, H: PauliSum, hpsi=None) -> Assembly:
    if hpsi is None:
        hpsi = H.apply(psi)
    energy = np.vdot(psi, hpsi).real
    var_h = max(float(np.vdot(hpsi, hpsi).real - energy**2), 0.0)
    berry = D @ psi.conj()
    return Assembly(
        psi=psi, hpsi=hpsi, D=D, berry=berry,
        g=_metric(D, berry),
        V=-(D.conj() @ hpsi).real,
        energy=float(energy), var_h=var_h,
    )


def metric_and_gradient(ansatz: Ansatz, H: PauliSum) -> tuple[np.ndarray, np.ndarray, float]:
    a = assemble(ansatz, H)
    return a.g, a.V, a.var_h


def solve_eom(g: np.ndarray, V: np.ndarray, lam: float) -> np.ndarray:
    """Solve ``(g + lam I) x = V``; Cholesky first, least squares as fallback."""
    g = np.asarray(g, dtype=float)
    V = np.asarray(V, dtype=float)
    if not (np.all(np.isfinite(g)) and np.all(np.isfinite(V))):
        raise FloatingPointError("non-finite entries in metric or gradient")
    if V.size == 0:
        return np.zeros(0)
    M = g + lam * np.eye(len(V))
    try:
        return cho_solve(cho_factor(M), V)
    except LinAlgError:
        return np.linalg.lstsq(M, V, rcond=None)[0]


def mclachlan_distance(g: np.ndarray, V: np.ndarray, theta_dot: np.ndarray, var_h: float) -> float:
    """``2 x.g.x - 4 V.x + 2 var(H)``, tiny negative rounding clamped to zero."""
    g = np.asarray(g, dtype=float)
    V = np.asarray(V, dtype=float)
    x = np.asarray(theta_dot, dtype=float)
    if g.shape != (len(V), len(V)) or x.shape != V.shape:
        raise ValueError("dimension mismatch in McLachlan distance")
    l2 = 2.0 * x @ g @ x - 4.0 * V @ x + 2.0 * var_h
    if l2 < 0.0 and l2 > -1e-10:
        return 0.0
    return float(l2)


# ---------------------------------------------------------------------------
# candidate scoring
# ---------------------------------------------------------------------------


class _PoolTable:
    """Vectorized ``-i A |psi>`` for every pool element ``A``."""

    def __init__(self, pool: Sequence[PauliString]):
        self.pool = list(pool)
        self.x = np.array([p.x_mask for p in pool], dtype=np.int64)
        self.z = np.array([p.z_mask for p in pool], dtype=np.int64)
        k = -1j * np.array([(1, 1j, -1, -1j)[p.n_y % 4] for p in pool])
        self.kphase = k.real if not np.any(k.imag) else k

    def derivatives(self, psi: np.ndarray, sl: slice) -> np.ndarray:
        idx = np.arange(psi.shape[0])
        src = idx[None, :] ^ self.x[sl, None]
        signs = 1 - 2 * (np.bitwise_count(src & self.z[sl, None]) & 1).astype(np.int8)
        return (self.kphase[sl, None] * signs) * psi[src]


def score_candidates(a: Assembly, table: _PoolTable, lam: float, chunk: int = 256) -> np.ndarray:
    """McLachlan distance after appending each pool element at angle zero.

    Uses the bordered (Schur complement) solution of the regularized
    system, which equals re-assembling and re-solving from scratch.
    """
    n = len(a.V)
    M = a.g + lam * np.eye(n)
    if n:
        fac = cho_factor(M)
        x = cho_solve(fac, a.V)
    else:
        x = np.zeros(0)
    out = np.empty(len(table.pool))
    for start in range(0, len(table.pool), chunk):
        sl = slice(start, min(start + chunk, len(table.pool)))
        d = table.derivatives(a.psi, sl)  # new derivative states, one per row
        berry_new = d @ a.psi.conj()
        b = (d.conj() @ a.D.T + np.outer(berry_new, a.berry)).real  # (m, n)
        c = 1.0 + (berry_new**2).real
        v_new = -(d.conj() @ a.hpsi).real
        if n:
            U = cho_solve(fac, b.T)  # (n, m)
            s = c + lam - np.einsum("mn,nm->m", b, U)
            t = (v_new - b @ x) / s
            theta_old = x[:, None] - U * t[None, :]
            q_old = np.einsum("nm,nm->m", theta_old, a.g @ theta_old)
            cross = np.einsum("mn,nm->m", b, theta_old)
            v_old = a.V @ theta_old
        else:
            s = c + lam
            t = v_new / s
            q_old = cross = v_old = np.zeros_like(t)
        l2 = 2.0 * (q_old + 2.0 * t * cross + c * t**2) - 4.0 * (v_old + v_new * t) + 2.0 * a.var_h
        out[sl] = l2
    return out


def score_candidate(ansatz: Ansatz, H: PauliSum, A: PauliString, lam: float = 1e-6) -> float:
    """Would-be McLachlan distance if ``A`` were appended with angle zero."""
    return float(score_candidates(assemble(ansatz, H), _PoolTable([A]), lam)[0])


# ---------------------------------------------------------------------------
# time stepping
# ---------------------------------------------------------------------------


@dataclass
class StepRecord:
    step: int
    tau: float
    energy: float
    l2: float
    n_params: int
    n_cx: int
    projector: float
    max_grad: float
    added: list[str] = field(default_factory=list)


@dataclass
class EvolutionResult:
    ansatz: Ansatz
    records: list[StepRecord]
    halted_reason: str
    state: np.ndarray
    initial_variance: float
    initial_max_grad: float


class _Expander:
    def __init__(self, H: PauliSum, pool: Sequence[PauliString], config: AvqiteConfig):
        self.H = H
        self.table = _PoolTable(pool)
        self.config = config

    def expand(self, ansatz: Ansatz, a: Assembly, l2: float) -> tuple[Assembly, np.ndarray, float, list[str]]:
        cfg = self.config
        added: list[str] = []
        theta_dot = solve_eom(a.g, a.V, cfg.tikhonov)
        while l2 > cfg.l2_threshold and len(added) < cfg.max_adds_per_step:
            scores = score_candidates(a, self.table, cfg.tikhonov, cfg.score_chunk)
            if len(ansatz) and ansatz.thetas[-1] == 0.0:
                last = ansatz.generators[-1]
                for i, p in enumerate(self.table.pool):
                    if p == last:
                        scores[i] = np.inf
            best_val = np.min(scores)
            if not np.isfinite(best_val):
                break
            # lowest index among numerically tied minima
            best = int(np.flatnonzero(scores <= best_val + 1e-12 * max(1.0, abs(best_val)))[0])
            if l2 - scores[best] < cfg.min_score_improvement:
                break
            A = self.table.pool[best]
            ansatz.append(A, 0.0)
            added.append(A.label)
            if np.isrealobj(a.psi):
                d_new = rotation_generator_apply(A, a.psi)
            else:
                d_new = -1j * apply_string(A, a.psi)
            a = _assemble_from(a.psi, np.vstack([a.D, d_new[None, :]]), self.H, a.hpsi)
            theta_dot = solve_eom(a.g, a.V, cfg.tikhonov)
            l2 = mclachlan_distance(a.g, a.V, theta_dot, a.var_h)
        return a, theta_dot, l2, added


def expand_ansatz(ansatz: Ansatz, pool: Sequence[PauliString], H: PauliSum,
                  config: AvqiteConfig | None = None) -> tuple[Ansatz, list[str], float]:
    """Grow a copy of ``ansatz`` until the McLachlan distance drops below threshold.

    Returns the new ansatz, the labels appended, and the final distance.
    """
    config = config or AvqiteConfig()
    ansatz = ansatz.copy()
    a = assemble(ansatz, H)
    l2 = mclachlan_distance(a.g, a.V, solve_eom(a.g, a.V, config.tikhonov), a.var_h)
    _, _, l2, added = _Expander(H, pool, config).expand(ansatz, a, l2)
    return ansatz, added, l2


def evolve(ansatz: Ansatz, H: PauliSum, pool: Sequence[PauliString], config: AvqiteConfig,
           projector=None) -> EvolutionResult:
    """Run imaginary-time stepping from ``ansatz`` until the gradient cutoff.

    ``projector``, when given, maps a state to the spin-subspace weight
    recorded with every step.
    """
    ansatz = ansatz.copy()
    expander = _Expander(H, pool, config)
    records: list[StepRecord] = []
    tau = 0.0
    reason = "max_steps"
    init_var = init_grad = None
    for step in range(config.max_steps):
        a = assemble(ansatz, H)
        if not np.isfinite(a.energy):
            raise FloatingPointError(f"non-finite energy at step {step}")
        if init_var is None:
            init_var = a.var_h
        max_grad = float(np.max(np.abs(a.V))) if len(a.V) else 0.0
        if len(ansatz) and max_grad < config.grad_cutoff:
            reason = "converged"
            break
        theta_dot = solve_eom(a.g, a.V, config.tikhonov)
        l2 = mclachlan_distance(a.g, a.V, theta_dot, a.var_h)
        added: list[str] = []
        if l2 > config.l2_threshold:
            a, theta_dot, l2, added = expander.expand(ansatz, a, l2)
        max_grad = float(np.max(np.abs(a.V))) if len(a.V) else 0.0
        if init_grad is None:
            init_grad = max_grad
        if not len(ansatz):
            reason = "vanishing_gradient"
            records.append(_record(step, tau, a, l2, ansatz, max_grad, added, projector))
            break
        records.append(_record(step, tau, a, l2, ansatz, max_grad, added, projector))
        ansatz.thetas = list(np.asarray(ansatz.thetas) + config.dtau * theta_dot)
        tau += config.dtau
    psi = ansatz.state()
    return EvolutionResult(
        ansatz=ansatz, records=records, halted_reason=reason, state=psi,
        initial_variance=float(init_var if init_var is not None else 0.0),
        initial_max_grad=float(init_grad if init_grad is not None else 0.0),
    )


def _record(step, tau, a, l2, ansatz, max_grad, added, projector) -> StepRecord:
    return StepRecord(
        step=step, tau=tau, energy=a.energy, l2=l2, n_params=len(ansatz),
        n_cx=cnot_count(ansatz), projector=float(projector(a.psi)) if projector else float("nan"),
        max_grad=max_grad, added=added,
    )


# ---------------------------------------------------------------------------
# full run
# ---------------------------------------------------------------------------


@dataclass
class Reference:
    spins: str | None = None
    basis: str = "z"
    # explicit state, e.g. an embedded exact ground state
    state: np.ndarray | None = field(default=None, repr=False)

    def build(self, enc: Encoding) -> np.ndarray:
        if self.state is not None:
            return np.asarray(self.state, dtype=complex)
        return reference_state(self.spins, self.basis, enc)

    def describe(self) -> dict:
        return {"spins": self.spins if self.state is None else "custom", "basis": self.basis}


@dataclass
class RunResult:
    config: dict
    trajectory: list[StepRecord]
    final: dict
    generators: list[str] = field(default_factory=list)
    thetas: list[float] = field(default_factory=list)

    @property
    def success(self) -> bool:
        return self.final["fidelity"] >= SUCCESS_FIDELITY

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "final": {**self.final, "success": self.success},
            "generators": self.generators,
            "thetas": self.thetas,
            "trajectory": [asdict(r) for r in self.trajectory],
        }

    @classmethod
    def from_dict(cls, d: dict) -> RunResult:
        final = {k: v for k, v in d["final"].items() if k != "success"}
        return cls(
            config=d["config"],
            trajectory=[StepRecord(**r) for r in d.get("trajectory", [])],
            final=final,
            generators=list(d.get("generators", [])),
            thetas=list(d.get("thetas", [])),
        )


def run(spec: ModelSpec, enc: Encoding | str, pool_kind: str, reference: Reference,
        config: AvqiteConfig | None = None, ed=None, H: PauliSum | None = None) -> RunResult:
    """One AVQITE simulation plus its comparison with exact diagonalization."""
    from .exactdiag import fidelity, ground_state

    enc = Encoding.parse(enc)
    config = config or AvqiteConfig()
    H = H if H is not None else build_qubit_hamiltonian(spec, enc)
    ed = ed if ed is not None else ground_state(spec)
    pool = build_pool(pool_kind, enc.n_qubits(spec.L))
    psi0 = reference.build(enc)
    ansatz = Ansatz(psi0, label=reference.describe())

    def proj(psi):
        return global_projector_expectation(psi, enc, spec.L)

    echo = {
        "model": {**asdict(spec)},
        "encoding": enc.value,
        "pool": pool_kind,
        "reference": reference.describe(),
        "avqite": config.to_dict(),
        "integrator": "forward_euler",
    }
    try:
        res = evolve(ansatz, H, pool, config, projector=proj)
    except FloatingPointError as exc:
        log.warning("run diverged: %s", exc)
        final = {
            "energy": float("nan"), "fidelity": 0.0, "projector": float("nan"),
            "n_cx_final": 0, "n_cx_cumulative": 0, "steps": 0,
            "halted_reason": "diverged", "diagnostic": str(exc),
            "exact_energy": ed.ground_energy, "initial_variance": float("nan"),
            "initial_max_grad": float("nan"), "tau_final": 0.0, "n_params": 0,
        }
        return RunResult(config=echo, trajectory=[], final=final)

    psi = res.state
    hpsi = H.apply(psi)
    final = {
        "energy": float(np.vdot(psi, hpsi).real),
        "exact_energy": ed.ground_energy,
        "fidelity": fidelity(psi, ed, enc),
        "projector": proj(psi),
        "n_cx_final": cnot_count(res.ansatz),
        "n_cx_cumulative": int(sum(r.n_cx for r in res.records)),
        "steps": len(res.records),
        "tau_final": res.records[-1].tau if res.records else 0.0,
        "n_params": len(res.ansatz),
        "halted_reason": res.halted_reason,
        "initial_variance": res.initial_variance,
        "initial_max_grad": res.initial_max_grad,
    }
    return RunResult(
        config=echo,
        trajectory=res.records,
        final=final,
        generators=[p.label for p in res.ansatz.generators],
        thetas=[float(t) for t in res.ansatz.thetas],
    )
