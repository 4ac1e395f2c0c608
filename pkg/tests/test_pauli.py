import itertools

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given
from hypothesis import strategies as st

from conftest import dense_label, random_label, random_state
from spin1_avqite.encoding import Encoding, encode_site_operator
from spin1_avqite.pauli import (
    PauliError,
    PauliString,
    PauliSum,
    apply_string,
    exp_apply,
    exp_apply_real,
    expectation,
    multiply,
    rotation_generator_apply,
    sum_multiply,
    variance,
)

labels = st.integers(1, 3).flatmap(lambda n: st.text("IXYZ", min_size=n, max_size=n))


def test_label_round_trip():
    for label in ("XIZY", "I", "YYYY", "ZX"):
        assert PauliString.from_label(label).label == label


def test_qubit_zero_is_leftmost_and_msb():
    p = PauliString.from_ops(3, {0: "X"})
    assert p.label == "XII"
    psi = np.zeros(8, complex)
    psi[0] = 1
    assert apply_string(p, psi)[0b100] == 1


def test_weight_and_identity():
    assert PauliString.identity(4).weight == 0
    assert PauliString.identity(4).is_identity
    assert PauliString.from_label("XIZY").weight == 3


def test_bad_label():
    with pytest.raises(ValueError):
        PauliString.from_label("XA")


def test_x_times_y_is_iz():
    phase, r = multiply(PauliString.from_label("X"), PauliString.from_label("Y"))
    assert phase == 1j and r.label == "Z"


@given(labels)
def test_involution(label):
    p = PauliString.from_label(label)
    phase, r = multiply(p, p)
    assert phase == 1 and r.is_identity


def test_two_qubit_table_against_dense():
    all2 = ["".join(t) for t in itertools.product("IXYZ", repeat=2)]
    for a, b in itertools.product(all2, repeat=2):
        phase, r = multiply(PauliString.from_label(a), PauliString.from_label(b))
        np.testing.assert_allclose(phase * dense_label(r.label), dense_label(a) @ dense_label(b),
                                   atol=0)


@given(labels, labels, labels)
def test_multiplication_associative(a, b, c):
    n = min(len(a), len(b), len(c))
    p, q, s = (PauliString.from_label(x[:n]) for x in (a, b, c))
    ph1, pq = multiply(p, q)
    ph2, left = multiply(pq, s)
    ph3, qs = multiply(q, s)
    ph4, right = multiply(p, qs)
    assert left == right
    assert ph1 * ph2 == ph3 * ph4
    np.testing.assert_allclose(ph1 * ph2 * left.to_matrix(),
                               p.to_matrix() @ q.to_matrix() @ s.to_matrix(), atol=1e-14)


def test_size_mismatch():
    with pytest.raises(PauliError):
        multiply(PauliString.from_label("X"), PauliString.from_label("XX"))


def test_commutation_flag():
    assert not PauliString.from_label("X").commutes_with(PauliString.from_label("Z"))
    assert PauliString.from_label("XX").commutes_with(PauliString.from_label("ZZ"))


def test_apply_basic():
    zero = np.array([1, 0], complex)
    one = np.array([0, 1], complex)
    np.testing.assert_array_equal(apply_string(PauliString.from_label("X"), zero), one)
    np.testing.assert_array_equal(apply_string(PauliString.from_label("Z"), one), -one)


def test_apply_matches_dense(rng):
    for _ in range(20):
        label = random_label(rng, 3)
        psi = random_state(rng, 3)
        out = apply_string(PauliString.from_label(label), psi)
        np.testing.assert_allclose(out, dense_label(label) @ psi, atol=1e-14)
        assert abs(np.linalg.norm(out) - 1) < 1e-14


def test_apply_dimension_mismatch():
    with pytest.raises(ValueError):
        apply_string(PauliString.from_label("XX"), np.ones(8) / np.sqrt(8))


def test_exp_apply_examples():
    zero = np.array([1, 0], complex)
    out = exp_apply(PauliString.from_label("Y"), np.pi / 2, zero)
    assert abs(abs(out[1]) - 1) < 1e-12
    np.testing.assert_array_equal(exp_apply(PauliString.from_label("X"), 0.0, zero), zero)
    with pytest.raises(PauliError):
        exp_apply(PauliString.identity(1), 0.3, zero)


def test_exp_apply_matches_expm(rng):
    for _ in range(20):
        label = random_label(rng, 3)
        if set(label) == {"I"}:
            continue
        theta = rng.uniform(-3, 3)
        psi = random_state(rng, 3)
        out = exp_apply(PauliString.from_label(label), theta, psi)
        ref = scipy.linalg.expm(-1j * theta * dense_label(label)) @ psi
        np.testing.assert_allclose(out, ref, atol=1e-10)
        assert abs(np.linalg.norm(out) - 1) < 1e-12


def test_exp_apply_inverse(rng):
    p = PauliString.from_label("XYZ")
    psi = random_state(rng, 3)
    back = exp_apply(p, -0.7, exp_apply(p, 0.7, psi))
    np.testing.assert_allclose(back, psi, atol=1e-12)


def test_real_path_matches_complex(rng):
    for label in ("Y", "YZ", "XYZ", "YYY", "IYX"):
        p = PauliString.from_label(label.ljust(3, "I")[:3])
        psi = random_state(rng, 3, real=True)
        np.testing.assert_allclose(exp_apply_real(p, 0.4, psi), exp_apply(p, 0.4, psi), atol=1e-14)
        np.testing.assert_allclose(rotation_generator_apply(p, psi),
                                   -1j * apply_string(p, psi), atol=1e-14)
    with pytest.raises(PauliError):
        rotation_generator_apply(PauliString.from_label("XII"), np.ones(8) / np.sqrt(8))


def test_odd_y_rotations_keep_real_amplitudes(rng):
    psi = random_state(rng, 4, real=True).astype(complex)
    odd = [PauliString.from_label(s) for s in ("YIII", "ZYII", "YXZI", "YYYI", "IXYZ")]
    for _ in range(50):
        p = odd[rng.integers(len(odd))]
        psi = exp_apply(p, rng.uniform(-2, 2), psi)
        assert np.max(np.abs(psi.imag)) < 1e-10


# ---------------------------------------------------------------------------
# sums
# ---------------------------------------------------------------------------


def test_sum_canonical_and_order_independent():
    a = PauliSum.from_terms(2, [(1.0, "XZ"), (0.5, "IY"), (2.0, "XZ")])
    b = PauliSum.from_terms(2, [(0.5, "IY"), (3.0, "XZ")])
    assert a == b
    assert len(a) == 2


def test_sum_prunes_cancellation():
    s = PauliSum.from_terms(2, [(1.0, "XZ")]) - PauliSum.from_terms(2, [(1.0, "XZ")])
    assert s.is_zero() and len(s) == 0


def test_sum_rejects_imaginary():
    with pytest.raises(PauliError):
        PauliSum.from_complex(1, {(1, 0): 0.5j})


def test_z_squared_is_identity():
    z = PauliSum.from_terms(1, [(1.0, "Z")])
    assert sum_multiply(z, z) == PauliSum.identity(1)


def test_multiplet_sz_squared():
    sz = encode_site_operator("Sz", Encoding.MULTIPLET)
    expected = PauliSum.from_terms(2, [(0.5, "II"), (0.5, "ZZ")])
    assert sum_multiply(sz, sz).allclose(expected)
    np.testing.assert_allclose(sum_multiply(sz, sz).to_matrix(), sz.to_matrix() @ sz.to_matrix(),
                               atol=1e-14)


def test_sum_multiply_non_hermitian_product():
    x = PauliSum.from_terms(1, [(1.0, "X")])
    z = PauliSum.from_terms(1, [(1.0, "Z")])
    with pytest.raises(PauliError):
        sum_multiply(x, z)


def test_sum_size_mismatch():
    with pytest.raises(PauliError):
        PauliSum.identity(1) + PauliSum.identity(2)


def test_sum_apply_matches_dense(rng):
    h = PauliSum.from_terms(3, [(rng.normal(), random_label(rng, 3)) for _ in range(12)])
    psi = random_state(rng, 3)
    np.testing.assert_allclose(h.apply(psi), h.to_matrix() @ psi, atol=1e-13)
    np.testing.assert_allclose(h.to_sparse().toarray(), h.to_matrix(), atol=1e-14)


def test_expectation_examples():
    zero = np.array([1, 0], complex)
    plus = np.array([1, 1], complex) / np.sqrt(2)
    assert expectation(PauliSum.from_terms(1, [(1.0, "Z")]), zero) == pytest.approx(1.0)
    assert expectation(PauliSum.from_terms(1, [(1.0, "X")]), plus) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        expectation(PauliSum.from_terms(1, [(1.0, "Z")]), 2 * zero)


def test_expectation_and_variance_match_dense(rng):
    for _ in range(10):
        h = PauliSum.from_terms(3, [(rng.normal(), random_label(rng, 3)) for _ in range(8)])
        psi = random_state(rng, 3)
        M = h.to_matrix()
        e = np.vdot(psi, M @ psi).real
        assert abs(expectation(h, psi) - e) < 1e-12
        h2 = sum_multiply(h, h)
        assert abs(variance(h, psi) - (expectation(h2, psi) - e**2)) < 1e-10


def test_variance_examples():
    zero = np.array([1, 0], complex)
    assert variance(PauliSum.from_terms(1, [(1.0, "Z")]), zero) == pytest.approx(0.0, abs=1e-15)
    assert variance(PauliSum.from_terms(1, [(1.0, "X")]), zero) == pytest.approx(1.0)


def test_embed_shifts_support():
    s = PauliSum.from_terms(2, [(0.5, "XZ")]).embed(2, 5)
    assert s.as_dict() == {"IIXZI": 0.5}
