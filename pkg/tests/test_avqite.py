import numpy as np
import pytest
import scipy.linalg

from conftest import random_state
from spin1_avqite.avqite import (
    Ansatz,
    AvqiteConfig,
    Reference,
    RunResult,
    assemble,
    build_pool,
    cnot_count,
    derivative_states,
    evolve,
    expand_ansatz,
    mclachlan_distance,
    metric_and_gradient,
    pool_size,
    run,
    score_candidate,
    score_candidates,
    solve_eom,
    y_parity_odd,
    _PoolTable,
)
from spin1_avqite.encoding import Encoding, embed, reference_state
from spin1_avqite.exactdiag import ground_state
from spin1_avqite.model import ModelSpec, blume_capel, build_qubit_hamiltonian, xxz
from spin1_avqite.pauli import PauliString, PauliSum, exp_apply

P = PauliString.from_label
ZERO = np.array([1, 0], dtype=complex)


def random_ansatz(rng, n_qubits=3, n_elems=3, real=False):
    pool = build_pool("maximal", n_qubits)
    ref = random_state(rng, n_qubits, real=real)
    a = Ansatz(ref)
    for _ in range(n_elems):
        a.append(pool[rng.integers(len(pool))], rng.uniform(-1.5, 1.5))
    return a


def random_hamiltonian(rng, n_qubits, n_terms=8):
    labels = ["".join(rng.choice(list("IXYZ"), size=n_qubits)) for _ in range(n_terms)]
    return PauliSum.from_terms(n_qubits, [(rng.normal(), s) for s in labels])


# ---------------------------------------------------------------------------
# pools
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("N", [1, 2, 3, 4, 6])
def test_pool_sizes(N):
    assert len(build_pool("minimal", N)) == N * N == pool_size("minimal", N)
    expected = N + 2 * N * (N - 1) + N * (N - 1) * (N - 2)
    assert len(build_pool("maximal", N)) == expected == pool_size("maximal", N)


def test_pool_contents_and_order():
    pool = build_pool("maximal", 3)
    labels = [p.label for p in pool]
    assert labels[:5] == ["YII", "IYI", "IIY", "YZI", "YIZ"]
    assert all(y_parity_odd(p) for p in pool)
    assert len(set(labels)) == len(labels)
    assert "YXZ" in labels and "ZYX" in labels
    assert labels.index("YXI") > labels.index("IZY")
    with pytest.raises(ValueError):
        build_pool("medium", 3)


def test_append_rejects_even_y():
    with pytest.raises(ValueError):
        Ansatz(ZERO).append(P("X"))


def test_cnot_count():
    assert cnot_count([P("YXZ")]) == 4
    assert cnot_count([P("IYI")]) == 0
    assert cnot_count([P("YII"), P("YZI"), P("IYX")]) == 4
    a = Ansatz(np.eye(8)[0].astype(complex), [P("YII"), P("YXZ")], [0.1, 0.2])
    b = Ansatz(a.reference, list(a.generators), [5.0, -3.0])
    assert cnot_count(a) == cnot_count(b) == 4
    assert cnot_count(a.generators + [P("YZZ")]) == cnot_count(a) + cnot_count([P("YZZ")])


# ---------------------------------------------------------------------------
# derivative states, metric, gradient
# ---------------------------------------------------------------------------


def test_derivative_at_identity():
    a = Ansatz(ZERO, [P("Y")], [0.0])
    (d,) = derivative_states(a)
    np.testing.assert_allclose(d, -1j * (P("Y").to_matrix() @ ZERO), atol=1e-15)
    assert derivative_states(Ansatz(ZERO)) == []


@pytest.mark.parametrize("real", [False, True])
def test_derivatives_match_finite_differences(rng, real):
    for _ in range(5):
        a = random_ansatz(rng, 3, 2, real=real)
        h = 1e-5
        for i, d in enumerate(derivative_states(a)):
            plus, minus = a.copy(), a.copy()
            plus.thetas[i] += h
            minus.thetas[i] -= h
            fd = (plus.state() - minus.state()) / (2 * h)
            np.testing.assert_allclose(d, fd, atol=1e-8)
            assert np.linalg.norm(d) == pytest.approx(1.0, abs=1e-12)


def test_metric_single_rotation():
    H = PauliSum.from_terms(1, [(1.0, "Z")])
    for theta in (0.0, 0.4, 1.3):
        g, V, var = metric_and_gradient(Ansatz(ZERO, [P("Y")], [theta]), H)
        np.testing.assert_allclose(g, [[1.0]], atol=1e-14)


def test_metric_forms_agree(rng):
    # the "+ <psi|d_i><psi|d_j>" form equals "- <d_i|psi><psi|d_j>" for normalized states
    for _ in range(5):
        a = random_ansatz(rng, 3, 4)
        psi = a.state()
        D = np.array(derivative_states(a))
        berry = D.conj() @ psi  # <d_i|psi>
        standard = (D.conj() @ D.T - np.outer(berry, berry.conj())).real
        g, _, _ = metric_and_gradient(a, random_hamiltonian(rng, 3))
        np.testing.assert_allclose(g, standard, atol=1e-12)


def test_metric_symmetric_psd(rng):
    for _ in range(10):
        g, _, _ = metric_and_gradient(random_ansatz(rng, 3, 4), random_hamiltonian(rng, 3))
        np.testing.assert_array_equal(g, g.T)
        assert np.min(np.linalg.eigvalsh(g)) >= -1e-10


def test_gradient_matches_finite_differences(rng):
    h = 1e-4
    for _ in range(10):
        a = random_ansatz(rng, 3, 3)
        H = random_hamiltonian(rng, 3)
        M = H.to_matrix()
        _, V, var = metric_and_gradient(a, H)
        for i in range(len(a)):
            plus, minus = a.copy(), a.copy()
            plus.thetas[i] += h
            minus.thetas[i] -= h
            ep = np.vdot(plus.state(), M @ plus.state()).real
            em = np.vdot(minus.state(), M @ minus.state()).real
            assert V[i] == pytest.approx(-0.5 * (ep - em) / (2 * h), abs=1e-6)
        psi = a.state()
        e = np.vdot(psi, M @ psi).real
        assert var == pytest.approx(np.vdot(psi, M @ M @ psi).real - e**2, abs=1e-10)


def test_eigenstate_has_no_gradient():
    H = PauliSum.from_terms(1, [(1.0, "Z")])
    g, V, var = metric_and_gradient(Ansatz(ZERO), H)
    assert V.size == 0 and g.shape == (0, 0)
    assert var == pytest.approx(0.0, abs=1e-15)


# ---------------------------------------------------------------------------
# equations of motion and McLachlan distance
# ---------------------------------------------------------------------------


def test_solve_eom_examples(rng):
    V = rng.normal(size=4)
    np.testing.assert_allclose(solve_eom(np.eye(4), V, 0.0), V, atol=1e-15)
    g = np.ones((2, 2))
    x = solve_eom(g, np.ones(2), 1e-6)
    assert np.all(np.isfinite(x))
    assert np.linalg.norm((g + 1e-6 * np.eye(2)) @ x - 1) < 1e-10
    A = rng.normal(size=(4, 4))
    g = A @ A.T + np.eye(4)
    np.testing.assert_allclose(solve_eom(3.0 * g, 3.0 * V, 0.0), solve_eom(g, V, 0.0), atol=1e-12)
    with pytest.raises(FloatingPointError):
        solve_eom(np.array([[np.nan]]), np.ones(1), 1e-6)


def test_solve_eom_lstsq_fallback():
    g = np.array([[1.0, 2.0], [2.0, 1.0]])  # indefinite: Cholesky fails
    x = solve_eom(g, np.array([1.0, 0.0]), 0.0)
    np.testing.assert_allclose(g @ x, [1.0, 0.0], atol=1e-12)


def test_mclachlan_examples(rng):
    A = rng.normal(size=(3, 3))
    g = A @ A.T + np.eye(3)
    V = rng.normal(size=3)
    assert mclachlan_distance(g, V, np.zeros(3), 0.7) == pytest.approx(1.4)
    x = np.linalg.solve(g, V)
    expected = 2 * 5.0 - 2 * V @ np.linalg.solve(g, V)
    assert mclachlan_distance(g, V, x, 5.0) == pytest.approx(expected)
    assert mclachlan_distance(np.zeros((0, 0)), np.zeros(0), np.zeros(0), 0.0) == 0.0
    assert mclachlan_distance(np.eye(1), np.zeros(1), np.zeros(1), -1e-12) == 0.0
    with pytest.raises(ValueError):
        mclachlan_distance(np.eye(2), np.ones(3), np.ones(3), 0.0)


# ---------------------------------------------------------------------------
# candidate scoring
# ---------------------------------------------------------------------------


def test_score_single_qubit_oracle():
    H = PauliSum.from_terms(1, [(1.0, "X")])
    a = assemble(Ansatz(ZERO), H)
    assert a.var_h == pytest.approx(1.0)
    # V for Y on |0> with H = X
    d = -1j * (P("Y").to_matrix() @ ZERO)
    V = -np.vdot(d, H.to_matrix() @ ZERO).real
    assert V == pytest.approx(-1.0)
    lam = 1e-6
    score = score_candidate(Ansatz(ZERO), H, P("Y"), lam)
    x = V / (1 + lam)
    assert score == pytest.approx(2 * x**2 - 4 * V * x + 2, abs=1e-15)
    assert abs(score) < 1e-10


def test_score_of_commuting_candidate_on_eigenstate():
    H = PauliSum.from_terms(2, [(1.0, "ZI"), (0.5, "IZ")])
    ref = np.eye(4)[0].astype(complex)
    assert score_candidate(Ansatz(ref), H, P("YZ")) == pytest.approx(0.0, abs=1e-14)


def _brute_force_score(ansatz, H, A, lam):
    b = ansatz.copy()
    b.append(A, 0.0)
    g, V, var = metric_and_gradient(b, H)
    return mclachlan_distance(g, V, solve_eom(g, V, lam), var)


@pytest.mark.parametrize("real", [False, True])
def test_scores_match_brute_force(rng, real):
    for _ in range(4):
        n_elems = int(rng.integers(0, 4))
        a = random_ansatz(rng, 3, n_elems, real=real)
        H = random_hamiltonian(rng, 3)
        pool = build_pool("maximal", 3)
        scores = score_candidates(assemble(a, H), _PoolTable(pool), 1e-6, chunk=7)
        for A, s in zip(pool, scores):
            assert s == pytest.approx(_brute_force_score(a, H, A, 1e-6), abs=1e-10)


def test_append_at_zero_keeps_energy(rng):
    a = random_ansatz(rng, 3, 3)
    H = random_hamiltonian(rng, 3)
    before = assemble(a, H).energy
    a.append(P("YXZ"), 0.0)
    assert abs(assemble(a, H).energy - before) < 1e-12


# ---------------------------------------------------------------------------
# expansion and evolution
# ---------------------------------------------------------------------------


def _bc2(enc="standard"):
    spec = blume_capel(2)
    return spec, build_qubit_hamiltonian(spec, enc), build_pool("maximal", Encoding.parse(enc).n_qubits(2))


def test_expand_noop_below_threshold():
    H = PauliSum.from_terms(1, [(1.0, "Z")])
    a, added, l2 = expand_ansatz(Ansatz(ZERO), build_pool("maximal", 1), H)
    assert added == [] and len(a) == 0 and l2 == 0.0


def test_expand_deterministic_and_reduces_distance():
    spec, H, pool = _bc2()
    ref = reference_state("00", "z", "standard")
    first = expand_ansatz(Ansatz(ref), pool, H)
    second = expand_ansatz(Ansatz(ref), pool, H)
    assert first[1] == second[1] and first[1]
    assert first[2] == second[2]
    a0 = assemble(Ansatz(ref), H)
    assert first[2] <= 2 * a0.var_h


def test_expand_exits_when_no_candidate_helps():
    # |00> with H = X1 X2: every single-flip candidate has zero overlap
    H = PauliSum.from_terms(2, [(1.0, "XX")])
    ref = np.eye(4)[0].astype(complex)
    pool = build_pool("minimal", 2)
    a, added, l2 = expand_ansatz(Ansatz(ref), pool, H)
    assert added == [] and l2 == pytest.approx(2.0)


def test_evolution_invariants():
    spec, H, pool = _bc2("gray")
    ref = reference_state("01", "z", "gray")
    res = evolve(Ansatz(ref), H, pool, AvqiteConfig())
    assert res.halted_reason == "converged"
    E = [r.energy for r in res.records]
    assert all(b <= a + 1e-6 for a, b in zip(E, E[1:]))
    taus = [r.tau for r in res.records]
    assert all(b >= a for a, b in zip(taus, taus[1:]))
    n = [r.n_params for r in res.records]
    assert all(b >= a for a, b in zip(n, n[1:]))
    assert all(y_parity_odd(p) for p in res.ansatz.generators)
    assert np.max(np.abs(res.state.imag)) < 1e-10
    assert all(r.l2 <= AvqiteConfig().l2_threshold or r.added for r in res.records)


def test_metric_psd_along_trajectory():
    spec, H, pool = _bc2("multiplet")
    ref = reference_state("10", "z", "multiplet")
    res = evolve(Ansatz(ref), H, pool, AvqiteConfig(max_steps=40))
    part = Ansatz(ref)
    for A, th in zip(res.ansatz.generators, res.ansatz.thetas):
        part.append(A, th)
        g, _, _ = metric_and_gradient(part, H)
        assert np.min(np.linalg.eigvalsh(g)) >= -1e-10


def test_real_states_stay_real():
    spec, H, pool = _bc2("unary")
    res = evolve(Ansatz(reference_state("02", "z", "unary")), H, pool, AvqiteConfig(max_steps=50))
    psi = Ansatz(res.ansatz.reference.astype(complex), res.ansatz.generators,
                 res.ansatz.thetas).state()
    assert np.max(np.abs(psi.imag)) < 1e-10


def test_determinism():
    spec = blume_capel(2)
    r1 = run(spec, "standard", "maximal", Reference("00", "z"))
    r2 = run(spec, "standard", "maximal", Reference("00", "z"))
    assert r1.to_dict() == r2.to_dict()
    assert r1.trajectory[0].added == r2.trajectory[0].added


def test_tracks_exact_imaginary_time_on_a_qubit():
    H = PauliSum.from_terms(1, [(0.7, "X"), (0.3, "Z")])
    res = evolve(Ansatz(ZERO), H, build_pool("minimal", 1), AvqiteConfig())
    M = H.to_matrix()
    for r in res.records:
        v = scipy.linalg.expm(-r.tau * M) @ ZERO
        v /= np.linalg.norm(v)
        assert abs(np.vdot(v, M @ v).real - r.energy) < 1e-3


@pytest.mark.parametrize("enc", list(Encoding))
def test_tracks_exact_imaginary_time_on_a_spin_site(enc):
    H = build_qubit_hamiltonian(ModelSpec(1, D=-0.3, hx=-0.8), enc)
    ref = reference_state("0", "z", enc)
    cfg = AvqiteConfig(l2_threshold=1e-4)
    res = evolve(Ansatz(ref), H, build_pool("maximal", enc.n_qubits(1)), cfg)
    assert res.halted_reason == "converged"
    M = H.to_matrix()
    for r in res.records[::20]:
        assert r.l2 <= cfg.l2_threshold
        v = scipy.linalg.expm(-r.tau * M) @ ref
        v /= np.linalg.norm(v)
        assert abs(np.vdot(v, M @ v).real - r.energy) < 1e-3


@pytest.mark.parametrize("enc", list(Encoding))
def test_ground_state_reference_is_stationary(enc):
    spec = xxz(2)
    ed = ground_state(spec)
    ref = Reference(state=embed(ed.ground_space[0], enc, 2))
    res = run(spec, enc, "maximal", ref, ed=ed)
    assert res.final["n_params"] == 0 and res.final["n_cx_final"] == 0
    assert res.final["steps"] <= 1 and res.trajectory[0].step == 0
    assert res.final["fidelity"] == pytest.approx(1.0, abs=1e-10)


def test_bc_l3_converges():
    res = run(blume_capel(3), "standard", "maximal", Reference("000", "z"))
    assert res.success and res.final["projector"] >= 0.999
    assert res.final["n_cx_cumulative"] == sum(r.n_cx for r in res.trajectory)


def test_xxz_minimal_z_reference_fails():
    res = run(xxz(4), "gray", "minimal", Reference("0120", "z"))
    assert not res.success
    assert res.final["halted_reason"] == "vanishing_gradient"


def test_run_result_round_trip():
    res = run(blume_capel(2), "gray", "maximal", Reference("12", "x"))
    back = RunResult.from_dict(res.to_dict())
    assert back.to_dict() == res.to_dict()
    back.final["fidelity"] = 0.5
    assert not back.success


def test_config_validation():
    with pytest.raises(ValueError):
        AvqiteConfig(dtau=0.0)
    with pytest.raises(ValueError):
        AvqiteConfig(max_steps=-1)
    cfg = AvqiteConfig.from_dict({"dtau": 0.02, "unknown": 1})
    assert cfg.dtau == 0.02 and AvqiteConfig.from_dict(cfg.to_dict()) == cfg


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_is_recorded():
    spec = blume_capel(2)
    H = build_qubit_hamiltonian(spec, "gray") + PauliSum.from_terms(4, [(np.inf, "XIII")])
    res = run(spec, "gray", "maximal", Reference("00", "z"), H=H)
    assert res.final["halted_reason"] == "diverged"
    assert not res.success and res.final["diagnostic"]
