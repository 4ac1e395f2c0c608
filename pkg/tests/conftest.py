import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")

# single-qubit matrices used by the dense oracles
PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def dense_label(label: str) -> np.ndarray:
    """Kronecker product with qubit 0 as the most significant factor."""
    out = np.ones((1, 1), dtype=complex)
    for ch in label:
        out = np.kron(out, PAULI[ch])
    return out


def random_state(rng, n_qubits: int, real: bool = False) -> np.ndarray:
    v = rng.normal(size=1 << n_qubits)
    if not real:
        v = v + 1j * rng.normal(size=1 << n_qubits)
    return v / np.linalg.norm(v)


def random_label(rng, n: int) -> str:
    return "".join(rng.choice(list("IXYZ"), size=n))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance criteria report: one line per criterion, printed after the run
ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def criterion():
    def record(number: int, title: str, ok: bool | None, detail: str = "") -> bool:
        status = "SKIP" if ok is None else "PASS" if ok else "FAIL"
        ACCEPTANCE[number] = f"criterion {number:2d} {status}  {title}" + (
            f"  [{detail}]" if detail else "")
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
