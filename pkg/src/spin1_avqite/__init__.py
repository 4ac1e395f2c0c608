"""Adaptive variational imaginary time evolution for spin-1 chains on qubits."""

from .avqite import (
    Ansatz,
    AvqiteConfig,
    Reference,
    RunResult,
    StepRecord,
    build_pool,
    cnot_count,
    evolve,
    run,
)
from .encoding import Encoding, embed, encode_operator, project, reference_state, site_projector
from .exactdiag import binder_crossing, fidelity, ground_state, sector_crossing
from .model import ModelSpec, blume_capel, build_qubit_hamiltonian, xxz
from .pauli import PauliString, PauliSum

__version__ = "0.1.0"

__all__ = [
    "Ansatz", "AvqiteConfig", "Reference", "RunResult", "StepRecord", "build_pool",
    "cnot_count", "evolve", "run", "Encoding", "embed", "encode_operator", "project",
    "reference_state", "site_projector", "binder_crossing", "fidelity", "ground_state",
    "sector_crossing", "ModelSpec", "blume_capel", "build_qubit_hamiltonian", "xxz",
    "PauliString", "PauliSum",
]
