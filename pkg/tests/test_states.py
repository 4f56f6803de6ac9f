import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quantum_feedback.errors import DimensionError, MixedStateError, ValidationError
from quantum_feedback.operator_algebra import (
    HermitianOperator,
    TensorSpace,
    embed,
    expm_hermitian,
    pauli,
    random_hermitian,
    random_unitary,
)
from quantum_feedback.states import (
    QuantumState,
    apply_unitary,
    basis_state,
    derived_rng,
    entanglement_entropy,
    fidelity,
    make_mixed,
    make_pure,
    measurement_distribution,
    purity,
    reduced_state,
    sample_measurement,
)

from conftest import random_density, random_pair, random_state_vector

SZ, SX = pauli("z"), pauli("x")


def test_make_pure_density_entries():
    a, b = 0.6, 0.8j
    s = make_pure([2], [a, b])
    expected = np.array([[a * np.conj(a), a * np.conj(b)], [b * np.conj(a), b * np.conj(b)]])
    np.testing.assert_allclose(s.rho, expected, atol=1e-15)


def test_make_pure_basis_and_bell():
    np.testing.assert_array_equal(make_pure([2], [1, 0]).rho, np.diag([1, 0]))
    bell = make_pure([2, 2], np.array([1, 0, 0, 1]) / np.sqrt(2))
    v = np.array([1, 0, 0, 1]) / np.sqrt(2)
    np.testing.assert_allclose(bell.rho, np.outer(v, v), atol=1e-15)
    assert np.linalg.matrix_rank(bell.rho) == 1
    assert purity(bell) == pytest.approx(1, abs=1e-12)


def test_make_pure_normalizes_and_validates():
    s = make_pure([2], [3, 4])
    np.testing.assert_allclose(s.pure_amplitudes, [0.6, 0.8])
    with pytest.raises(ValidationError):
        make_pure([2], [0, 0])
    with pytest.raises(DimensionError):
        make_pure([2, 2], [1, 0])


def test_state_invariants_enforced():
    with pytest.raises(ValidationError):
        make_mixed([2], np.diag([0.5, 0.6]))
    with pytest.raises(ValidationError):
        make_mixed([2], np.diag([1.5, -0.5]))
    with pytest.raises(ValidationError):
        make_mixed([2], [[0.5, 0.5], [0, 0.5]])


def test_basis_state_and_read_amplitudes_roundtrip(rng):
    s = basis_state([2, 2], [0, 1])
    np.testing.assert_array_equal(s.pure_amplitudes, [0, 1, 0, 0])
    psi = random_state_vector(rng, 4)
    back = make_pure([2, 2], make_pure([2, 2], psi * np.exp(0.3j)).pure_amplitudes)
    assert fidelity(back, make_pure([2, 2], psi)) == pytest.approx(1, abs=1e-12)


def test_apply_identity():
    s = make_pure([2, 2], [0.6, 0, 0, 0.8])
    t = apply_unitary(s, np.eye(4), (0, 1))
    np.testing.assert_array_equal(t.rho, s.rho)


def test_apply_unitary_on_subsystem_matches_embedding(rng):
    space = TensorSpace((2, 3, 2))
    rho = random_density(rng, 12)
    s = make_mixed(space, rho)
    u = random_unitary(4, rng)
    full = embed(u, space, (2, 0))
    t = apply_unitary(s, u, (2, 0))
    np.testing.assert_allclose(t.rho, full @ rho @ full.conj().T, atol=1e-13)


def test_measure_sigma_z_born_rule():
    a, b = 0.6, 0.8j
    outs = measurement_distribution(make_pure([2], [a, b]), SZ, [0])
    assert [o.eigenvalue for o in outs] == [1.0, -1.0]
    assert outs[0].probability == pytest.approx(abs(a) ** 2, abs=1e-15)
    assert outs[1].probability == pytest.approx(abs(b) ** 2, abs=1e-15)
    np.testing.assert_allclose(outs[0].post_state.rho, np.diag([1, 0]), atol=1e-15)
    np.testing.assert_allclose(outs[1].post_state.rho, np.diag([0, 1]), atol=1e-15)
    assert outs[0].observable_label == "sigma_z"


def test_measure_eigenstate_is_nondemolition():
    s = make_pure([2], [0, 1])
    outs = measurement_distribution(s, SZ, [0])
    assert len(outs) == 1 and outs[0].probability == pytest.approx(1)
    assert outs[0].index == 1
    np.testing.assert_allclose(outs[0].post_state.rho, s.rho)


def test_maximally_mixed_sigma_x_projector_oracle():
    s = make_mixed([2], np.eye(2) / 2)
    outs = measurement_distribution(s, SX, [0])
    plus = np.array([1, 1]) / np.sqrt(2)
    p_plus = np.outer(plus, plus)
    assert outs[0].probability == pytest.approx(np.trace(p_plus @ s.rho @ p_plus).real, abs=1e-15)
    assert [o.probability for o in outs] == pytest.approx([0.5, 0.5], abs=1e-15)
    np.testing.assert_allclose(outs[0].post_state.rho, p_plus, atol=1e-15)


def test_degenerate_eigenspaces_are_grouped():
    space = TensorSpace((2, 2))
    zz = embed(SZ, space, 0) @ embed(SZ, space, 1)
    s = make_pure(space, np.ones(4) / 2)
    outs = measurement_distribution(s, zz, [0, 1])
    assert len(outs) == 2
    assert [o.probability for o in outs] == pytest.approx([0.5, 0.5])
    # post-measurement state stays coherent inside the eigenspace
    assert purity(outs[0].post_state) == pytest.approx(1)


def test_measure_on_subsystem_of_entangled_state():
    space = TensorSpace((2, 2))
    s = make_pure(space, np.array([1, 0, 0, 1]) / np.sqrt(2))
    outs = measurement_distribution(s, SZ, [1])
    assert [o.probability for o in outs] == pytest.approx([0.5, 0.5])
    np.testing.assert_allclose(outs[0].post_state.rho, np.diag([1, 0, 0, 0]), atol=1e-15)


def test_measurement_dimension_check():
    with pytest.raises(DimensionError):
        measurement_distribution(make_pure([2, 2], [1, 0, 0, 0]), np.eye(4), [0])


def test_sample_eigenstate_ignores_seed():
    s = make_pure([2], [1, 0])
    for seed in range(10):
        assert sample_measurement(s, SZ, [0], derived_rng(seed)).eigenvalue == 1.0


def test_sample_frequencies_within_3_sigma():
    s = make_pure([2], np.array([1, 1]) / np.sqrt(2))
    n = 10_000
    ups = sum(sample_measurement(s, SZ, [0], derived_rng(7, i)).index == 0 for i in range(n))
    assert abs(ups / n - 0.5) <= 3 * np.sqrt(0.25 / n)


def test_sampled_outcome_is_a_distribution_outcome(rng):
    s = make_pure([2, 2], random_state_vector(rng, 4))
    m = HermitianOperator(random_hermitian(2, rng))
    dist = measurement_distribution(s, m, [1])
    o = sample_measurement(s, m, [1], derived_rng(3))
    match = [d for d in dist if d.index == o.index]
    assert len(match) == 1
    np.testing.assert_array_equal(match[0].post_state.rho, o.post_state.rho)


def test_sampling_reproducible():
    s = make_pure([2], [0.6, 0.8])
    draw = lambda: [sample_measurement(s, SZ, [0], derived_rng(11, i)).index for i in range(200)]
    assert draw() == draw()


def test_fidelity_basic():
    up, down = make_pure([2], [1, 0]), make_pure([2], [0, 1])
    assert fidelity(up, up) == pytest.approx(1)
    assert fidelity(up, down) == 0


def test_fidelity_rotation_formula():
    up = make_pure([2], [1, 0])
    for theta in np.linspace(0, np.pi, 7):
        rotated = make_pure([2], [np.cos(theta / 2), np.sin(theta / 2)])
        assert fidelity(up, rotated) == pytest.approx(np.cos(theta / 2) ** 2, abs=1e-14)


def test_fidelity_mixed_paths_agree(rng):
    psi = random_state_vector(rng, 3)
    rho = random_density(rng, 3)
    pure = make_pure([3], psi)
    as_mixed = make_mixed([3], np.outer(psi, psi.conj()))
    other = make_mixed([3], rho)
    expected = np.vdot(psi, rho @ psi).real
    assert fidelity(pure, other) == pytest.approx(expected, abs=1e-12)
    assert fidelity(as_mixed, other) == pytest.approx(expected, abs=1e-8)
    assert fidelity(other, other) == pytest.approx(1, abs=1e-8)


def test_purity_of_reduced_mixture():
    a, b = random_pair(np.random.default_rng(5))
    rho = make_mixed([2], np.diag([abs(a) ** 2, abs(b) ** 2]))
    assert purity(rho) == pytest.approx(abs(a) ** 4 + abs(b) ** 4)
    assert purity(rho) < 1


def test_entanglement_entropy():
    prod = make_pure([2, 2, 2], np.kron(np.kron([0.6, 0.8], [1, 0]), [0, 1]))
    for cut in ([0], [1], [0, 2]):
        assert entanglement_entropy(prod, cut) == pytest.approx(0, abs=1e-12)
    bell_13 = np.zeros(8)
    bell_13[0b000] = bell_13[0b101] = 1 / np.sqrt(2)
    s = make_pure([2, 2, 2], bell_13)
    assert entanglement_entropy(s, [0]) == pytest.approx(1.0, abs=1e-12)
    assert entanglement_entropy(s, [1]) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(MixedStateError):
        entanglement_entropy(make_mixed([2, 2], np.eye(4) / 4), [0])


def test_state_json_roundtrip(rng):
    s = make_pure([2, 2], random_state_vector(rng, 4))
    back = QuantumState.from_json(s.to_json())
    np.testing.assert_allclose(back.rho, s.rho, atol=1e-15)
    m = make_mixed([3], random_density(rng, 3))
    np.testing.assert_allclose(QuantumState.from_json(m.to_json()).rho, m.rho, atol=1e-15)


seeds = st.integers(0, 2**32 - 1)


@settings(max_examples=100, deadline=None)
@given(seeds, st.sampled_from([(2,), (2, 2), (3, 2), (2, 2, 2)]), st.booleans())
def test_unitary_preserves_trace_purity_spectrum(seed, dims, pure):
    r = np.random.default_rng(seed)
    n = int(np.prod(dims))
    s = make_pure(dims, random_state_vector(r, n)) if pure else make_mixed(dims, random_density(r, n, rank=2))
    t = apply_unitary(s, random_unitary(n, r), tuple(range(len(dims))))
    assert abs(np.trace(t.rho) - 1) <= 1e-12
    assert abs(purity(t) - purity(s)) <= 1e-10
    np.testing.assert_allclose(np.linalg.eigvalsh(t.rho), np.linalg.eigvalsh(s.rho), atol=1e-10)


@settings(max_examples=100, deadline=None)
@given(seeds, st.sampled_from([(2,), (2, 2), (3, 2)]), st.booleans())
def test_measurement_probabilities_and_idempotence(seed, dims, pure):
    r = np.random.default_rng(seed)
    n = int(np.prod(dims))
    s = make_pure(dims, random_state_vector(r, n)) if pure else make_mixed(dims, random_density(r, n))
    d0 = dims[0]
    m = HermitianOperator(random_hermitian(d0, r))
    outs = measurement_distribution(s, m, [0])
    assert abs(sum(o.probability for o in outs) - 1) <= 1e-9
    for o in outs:
        again = measurement_distribution(o.post_state, m, [0])
        assert len(again) == 1 and again[0].index == o.index
        assert again[0].probability == pytest.approx(1, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(seeds)
def test_reduced_state_valid(seed):
    r = np.random.default_rng(seed)
    s = make_pure([2, 3], random_state_vector(r, 6))
    red = reduced_state(s, [1])
    assert red.space.factor_dims == (3,)
    # Schmidt: both marginals of a pure state share nonzero spectrum
    e0 = np.sort(np.linalg.eigvalsh(reduced_state(s, [0]).rho))
    e1 = np.sort(np.linalg.eigvalsh(red.rho))[-2:]
    np.testing.assert_allclose(e0, e1, atol=1e-10)
