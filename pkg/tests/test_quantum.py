import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qpalg import errors, quantum
from qpalg.quantum import (
    EPS_MAT,
    apply_superop,
    basis_state,
    collapse_mixture,
    get_observable,
    get_unitary,
    head_permutation,
    kron,
    measurement_branches,
    partial_trace,
    permute_register,
    validate_density,
)

BELL = np.array([[0.5, 0, 0, 0.5], [0, 0, 0, 0], [0, 0, 0, 0], [0.5, 0, 0, 0.5]], dtype=complex)
PLUS = np.full((2, 2), 0.5, dtype=complex)
NAMES = ["x", "y", "z"]


def close(a, b, tol=EPS_MAT):
    return np.allclose(a, b, atol=tol, rtol=0)


def random_density(rng, n):
    dim = 2**n
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def ket(bits):
    v = np.zeros(2 ** len(bits))
    v[int(bits, 2)] = 1
    return v


class TestKron:
    def test_identities(self):
        assert close(kron(np.eye(2), np.eye(2)), np.eye(4))

    def test_basis_projectors(self):
        assert close(kron(basis_state("0"), basis_state("1")), basis_state("01"))

    def test_hadamard_on_first_matches_hand_matrix(self):
        s = 1 / np.sqrt(2)
        hand = s * np.array([[1, 0, 1, 0], [0, 1, 0, 1], [1, 0, -1, 0], [0, 1, 0, -1]])
        rho = basis_state("00")
        assert close(apply_superop(get_unitary("H").matrix, rho, ["x", "y"], ["x"]), hand @ rho @ hand.T)


class TestPartialTrace:
    def test_product_state(self, rng):
        rest = random_density(rng, 1)
        assert close(partial_trace(kron(basis_state("0"), rest), ["x", "y"], {"x"}), rest)

    @pytest.mark.parametrize("drop", ["x", "y"])
    def test_bell_halves(self, drop):
        assert close(partial_trace(BELL, ["x", "y"], {drop}), np.eye(2) / 2)

    def test_drop_nothing(self, rng):
        rho = random_density(rng, 2)
        assert close(partial_trace(rho, ["x", "y"], set()), rho)

    def test_unknown_name(self):
        with pytest.raises(errors.UnknownQubit):
            partial_trace(BELL, ["x", "y"], {"w"})

    def test_keeps_register_order(self, rng):
        a, b, c = (random_density(rng, 1) for _ in range(3))
        out = partial_trace(kron(kron(a, b), c), NAMES, {"y"})
        assert close(out, kron(a, c))


class TestHeadPermutation:
    def test_single(self):
        assert np.array_equal(head_permutation(["x"], ["x"]), np.eye(2))

    def test_swap(self):
        pi = head_permutation(["x", "y"], ["y"])
        for a, b in itertools.product("01", repeat=2):
            assert np.array_equal(pi @ ket(a + b), ket(b + a))

    def test_three_qubits_exhaustive(self):
        pi = head_permutation(NAMES, ["z", "x"])
        for a, b, c in itertools.product("01", repeat=3):
            assert np.array_equal(pi @ ket(a + b + c), ket(c + a + b))

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_orthogonal_exactly(self, n):
        q = NAMES[:n]
        for k in range(1, n + 1):
            for targets in itertools.permutations(q, k):
                pi = head_permutation(q, list(targets))
                assert np.array_equal(pi.T @ pi, np.eye(2**n))
                assert set(np.unique(pi)) <= {0.0, 1.0}

    def test_errors(self):
        with pytest.raises(errors.DuplicateTarget):
            head_permutation(["x", "y"], ["x", "x"])
        with pytest.raises(errors.UnknownQubit):
            head_permutation(["x"], ["y"])


def superop_by_formula(a, rho, q, targets):
    """The displayed conjugation with explicit permutation and identity padding."""
    pi = head_permutation(q, targets)
    big = np.kron(a, np.eye(2 ** (len(q) - len(targets))))
    op = pi.T @ big @ pi
    return op @ rho @ op.conj().T


class TestApplySuperop:
    def test_identity(self, rng):
        rho = random_density(rng, 2)
        assert close(apply_superop(np.eye(2), rho, ["x", "y"], ["y"]), rho)

    def test_hadamard_on_zero(self):
        assert close(apply_superop(get_unitary("H").matrix, basis_state("0"), ["x"], ["x"]), PLUS)

    def test_cnot_makes_bell_pair(self):
        rho = kron(PLUS, basis_state("0"))
        assert close(apply_superop(get_unitary("CNot").matrix, rho, ["x", "y"], ["x", "y"]), BELL)

    @pytest.mark.parametrize("name", sorted(quantum.UNITARIES))
    def test_matches_formula_at_every_position(self, name, rng):
        entry = get_unitary(name)
        rho = random_density(rng, 3)
        for targets in itertools.permutations(NAMES, entry.arity):
            got = apply_superop(entry.matrix, rho, NAMES, list(targets))
            assert close(got, superop_by_formula(entry.matrix, rho, NAMES, list(targets)))
            assert validate_density(got) == []

    def test_head_targets_is_plain_kron(self, rng):
        rho = random_density(rng, 3)
        u = get_unitary("CNot").matrix
        op = np.kron(u, np.eye(2))
        assert close(apply_superop(u, rho, NAMES, ["x", "y"]), op @ rho @ op.conj().T)

    def test_arity_mismatch(self):
        with pytest.raises(ValueError):
            apply_superop(np.eye(4), basis_state("0"), ["x"], ["x"])


class TestMeasurement:
    def test_eigenstate(self):
        [(value, p, post)] = measurement_branches(basis_state("0"), ["x"], get_observable("MStd1"), ["x"])
        assert (value, p) == (0, 1.0)
        assert close(post, basis_state("0"))

    def test_plus_state(self):
        out = measurement_branches(PLUS, ["x"], get_observable("MStd1"), ["x"])
        assert [(v, round(p, 12)) for v, p, _ in out] == [(0, 0.5), (1, 0.5)]
        assert close(out[1][2], basis_state("1"))

    def test_bell_standard_basis(self):
        out = measurement_branches(BELL, ["x", "y"], get_observable("MStd2"), ["x", "y"])
        assert [(v, round(p, 12)) for v, p, _ in out] == [(0, 0.5), (3, 0.5)]

    def test_collapse(self):
        assert close(collapse_mixture(basis_state("0"), ["x"], get_observable("MStd1"), ["x"]), basis_state("0"))
        assert close(collapse_mixture(PLUS, ["x"], get_observable("MStd1"), ["x"]), np.eye(2) / 2)

    @pytest.mark.parametrize("name", sorted(quantum.OBSERVABLES))
    def test_branches_sum_to_collapse(self, name, rng):
        obs = get_observable(name)
        rho = random_density(rng, 3)
        for targets in itertools.permutations(NAMES, obs.arity):
            out = measurement_branches(rho, NAMES, obs, list(targets))
            assert abs(sum(p for _, p, _ in out) - 1) <= 1e-12
            mixture = sum(p * post for _, p, post in out)
            assert close(mixture, collapse_mixture(rho, NAMES, obs, list(targets)))
            assert all(validate_density(post) == [] for _, _, post in out)


class TestRegistries:
    def test_hadamard(self):
        assert close(get_unitary("H").matrix, np.array([[1, 1], [1, -1]]) / np.sqrt(2))

    @pytest.mark.parametrize("name", sorted(quantum.UNITARIES))
    def test_unitary(self, name):
        u = get_unitary(name).matrix
        assert close(u.conj().T @ u, np.eye(len(u)))

    @pytest.mark.parametrize("name", sorted(quantum.OBSERVABLES))
    def test_spectral_decomposition(self, name):
        obs = get_observable(name)
        dim = 2**obs.arity
        projectors = [p for _, p in obs.spectrum]
        assert close(sum(projectors), np.eye(dim))
        for i, a in enumerate(projectors):
            assert close(a @ a, a)
            for b in projectors[i + 1 :]:
                assert close(a @ b, np.zeros((dim, dim)))
        values = [v for v, _ in obs.spectrum]
        assert len(set(values)) == len(values)

    def test_outcome_three_is_one_one(self):
        (value, proj) = get_observable("MStd2").spectrum[3]
        assert value == 3 and close(proj, basis_state("11"))

    def test_plus_minus_labels(self):
        spectrum = dict(get_observable("MPlusMinus").spectrum)
        assert close(spectrum[0], PLUS)

    def test_unknown(self):
        with pytest.raises(errors.UnknownGateOrOperator):
            get_unitary("T")
        with pytest.raises(errors.UnknownGateOrOperator):
            get_observable("MBell")


class TestValidateDensity:
    def test_valid(self):
        assert validate_density(np.eye(2) / 2) == []

    def test_trace(self):
        assert validate_density(np.diag([1, 0.5])) == ["trace"]

    def test_hermitian_and_positive(self):
        assert "hermitian" in validate_density(np.array([[0.5, 1], [0, 0.5]]))
        assert "positive" in validate_density(np.diag([1.5, -0.5]))

    def test_shape(self):
        assert validate_density(np.eye(3) / 3) == ["shape"]


class TestProperties:
    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 3), data=st.data())
    def test_unitaries_preserve_validity(self, seed, n, data):
        rng = np.random.default_rng(seed)
        rho = random_density(rng, n)
        q = NAMES[:n]
        name = data.draw(st.sampled_from([u for u in quantum.UNITARIES if quantum.UNITARIES[u].arity <= n]))
        targets = data.draw(st.permutations(q))[: quantum.UNITARIES[name].arity]
        out = apply_superop(get_unitary(name).matrix, rho, q, targets)
        assert abs(np.trace(out) - 1) <= EPS_MAT
        assert validate_density(out) == []

    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), data=st.data())
    def test_partial_trace_commutes_with_reordering(self, seed, data):
        rng = np.random.default_rng(seed)
        rho = random_density(rng, 3)
        order = data.draw(st.permutations(NAMES))
        drop = data.draw(st.sampled_from(NAMES))
        moved = permute_register(rho, NAMES, order)
        kept = [x for x in NAMES if x != drop]
        a = partial_trace(rho, NAMES, {drop})
        b = partial_trace(moved, order, {drop})
        kept_moved = [x for x in order if x != drop]
        assert close(permute_register(a, kept, kept_moved), b)
