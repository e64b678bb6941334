import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qiopa.fock_core import (
    ALL_MODES,
    DensityMatrix,
    Mode,
    StateVector,
    Truncation,
    TruncationError,
    TruncationMismatch,
    apply_annihilation,
    apply_creation,
    density_from_pure,
    enumerate_basis,
    fock_space,
    inner_product,
    number_expectation,
    partial_trace,
    reduced_density,
    von_neumann_entropy,
)

from conftest import SMALL, brute_basis, dict_annihilate, dict_create

ENTROPY_23 = math.log2(3) - 2 / 3


def random_state(rng, trunc=SMALL):
    dim = fock_space(trunc).dim
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return StateVector(v / np.linalg.norm(v), trunc)


def amplified_h_state(trunc=SMALL):
    # post-selected first-order state in H/V labels
    return StateVector.from_dict(
        {(2, 0, 0, 1): math.sqrt(2 / 3), (1, 1, 1, 0): -math.sqrt(1 / 3)}, trunc
    )


class TestTruncation:
    def test_defaults(self):
        t = Truncation()
        assert (t.per_mode, t.total) == (9, 17)

    @pytest.mark.parametrize("args", [(-1, 3), (2, -1), (1.5, 3)])
    def test_rejects_bad_values(self, args):
        with pytest.raises(ValueError):
            Truncation(*args)

    def test_minimum(self):
        Truncation(2, 3).require_minimum()
        with pytest.raises(TruncationError):
            Truncation(1, 5).require_minimum()
        with pytest.raises(TruncationError):
            Truncation(4, 2).require_minimum()

    def test_admits(self):
        t = Truncation(2, 3)
        assert t.admits((2, 1, 0, 0))
        assert not t.admits((3, 0, 0, 0))
        assert not t.admits((1, 1, 1, 1))


class TestBasis:
    def test_smallest_nontrivial(self):
        assert enumerate_basis(Truncation(1, 1)) == [
            (0, 0, 0, 0), (0, 0, 0, 1), (0, 0, 1, 0), (0, 1, 0, 0), (1, 0, 0, 0)
        ]

    def test_vacuum_only(self):
        assert enumerate_basis(Truncation(0, 0)) == [(0, 0, 0, 0)]

    def test_count_against_brute_force(self):
        basis = enumerate_basis(Truncation(2, 3))
        assert len(basis) == 31
        assert basis == brute_basis(2, 3)

    @pytest.mark.parametrize("per_mode,total", [(3, 4), (4, 6), (8, 15), (5, 30)])
    def test_larger_cutoffs(self, per_mode, total):
        space = fock_space(Truncation(per_mode, total))
        assert space.tuples == brute_basis(per_mode, total)
        assert space.dim == len(space.tuples)

    def test_index_lookup(self):
        space = fock_space(SMALL)
        for i, occ in enumerate(space.tuples):
            assert space.index(occ) == i
        assert space.indices_of(np.array([[5, 0, 0, 0], [0, 0, 0, 0]])).tolist() == [-1, 0]
        with pytest.raises(TruncationError):
            space.index((5, 0, 0, 0))

    def test_basis_is_read_only(self):
        with pytest.raises(ValueError):
            fock_space(SMALL).basis[0, 0] = 1


class TestLadder:
    def test_creation_on_vacuum(self):
        out = apply_creation(StateVector.vacuum(SMALL), Mode.K1H)
        assert out.as_dict() == {(1, 0, 0, 0): 1}

    def test_sqrt_factor(self):
        out = apply_creation(StateVector.from_dict({(1, 0, 0, 0): 1}, SMALL), Mode.K1H)
        assert out.amplitude((2, 0, 0, 0)) == pytest.approx(math.sqrt(2))

    def test_cutoff_drops_weight(self):
        t = Truncation(2, 6)
        state = StateVector.from_dict({(2, 0, 0, 0): 1}, t)
        out = apply_creation(state, Mode.K1H)
        assert out.norm() == 0
        assert out.dropped_weight == pytest.approx(3.0)
        with pytest.raises(TruncationError):
            apply_creation(state, Mode.K1H, strict=True)

    def test_total_cutoff_drops_weight(self):
        t = Truncation(4, 2)
        out = apply_creation(StateVector.from_dict({(1, 0, 0, 1): 1}, t), Mode.K2H)
        assert out.dropped_weight == pytest.approx(1.0)

    def test_dropped_weight_accumulates(self):
        t = Truncation(2, 6)
        state = StateVector.from_dict({(2, 0, 0, 0): 0.6, (0, 0, 0, 2): 0.8}, t)
        out = apply_creation(apply_creation(state, Mode.K1H), Mode.K2V)
        # both components overflow: 0.36*3 on the first step, 0.64*3 on the second
        assert out.dropped_weight == pytest.approx(0.36 * 3 + 0.64 * 3)

    def test_annihilation(self):
        assert apply_annihilation(StateVector.vacuum(SMALL), Mode.K2V).norm() == 0
        out = apply_annihilation(StateVector.from_dict({(2, 0, 0, 0): 1}, SMALL), Mode.K1H)
        assert out.as_dict() == pytest.approx({(1, 0, 0, 0): math.sqrt(2)})

    @pytest.mark.parametrize("mode", ALL_MODES)
    def test_against_dict_oracle(self, rng, mode):
        t = Truncation(3, 5)
        psi = random_state(rng, t)
        space = fock_space(t)
        d = psi.as_dict()
        want_up = {k: v for k, v in dict_create(d, mode).items() if t.admits(k)}
        want_down = dict_annihilate(d, mode)
        got_up = apply_creation(psi, mode)
        got_down = apply_annihilation(psi, mode)
        for occ in space.tuples:
            assert got_up.amplitude(occ) == pytest.approx(want_up.get(occ, 0), abs=1e-14)
            assert got_down.amplitude(occ) == pytest.approx(want_down.get(occ, 0), abs=1e-14)

    @pytest.mark.parametrize("mode", ALL_MODES)
    def test_adjointness(self, rng, mode):
        psi, phi = random_state(rng), random_state(rng)
        lhs = inner_product(psi, apply_creation(phi, mode))
        rhs = inner_product(apply_annihilation(psi, mode), phi)
        assert abs(lhs - rhs) <= 1e-12

    def test_commutator_away_from_cutoff(self, rng):
        # [a, a^dag] = 1 on states whose components sit below the cutoff
        t = SMALL
        psi = StateVector.from_dict({(0, 1, 2, 0): 0.6, (1, 0, 0, 1): 0.8j}, t)
        for mode in ALL_MODES:
            aad = apply_annihilation(apply_creation(psi, mode), mode)
            ada = apply_creation(apply_annihilation(psi, mode), mode)
            diff = aad.amplitudes - ada.amplitudes
            np.testing.assert_allclose(diff, psi.amplitudes, atol=1e-14)


class TestInnerProduct:
    def test_kronecker_delta(self):
        t = Truncation(1, 2)
        states = [StateVector.from_dict({occ: 1}, t) for occ in enumerate_basis(t)]
        gram = np.array([[inner_product(a, b) for b in states] for a in states])
        np.testing.assert_array_equal(gram, np.eye(len(states)))

    def test_norm(self, rng):
        v = random_state(rng) * 1.7
        assert inner_product(v, v).real == pytest.approx(v.norm() ** 2)

    def test_against_summation(self, rng):
        a, b = random_state(rng), random_state(rng)
        da, db = a.as_dict(), b.as_dict()
        want = sum(np.conj(da.get(k, 0)) * v for k, v in db.items())
        assert abs(inner_product(a, b) - want) < 1e-13

    def test_conjugate_linear_in_first(self, rng):
        a, b = random_state(rng), random_state(rng)
        assert inner_product(2j * a, b) == pytest.approx(-2j * inner_product(a, b))

    def test_mismatch(self):
        with pytest.raises(TruncationMismatch):
            inner_product(StateVector.vacuum(SMALL), StateVector.vacuum(Truncation(2, 3)))


class TestStateVector:
    def test_shape_checked(self):
        with pytest.raises(ValueError):
            StateVector(np.zeros(3), SMALL)

    def test_from_dict_rejects_outside(self):
        with pytest.raises(TruncationError):
            StateVector.from_dict({(5, 0, 0, 0): 1}, SMALL)

    def test_arithmetic(self):
        a = StateVector.from_dict({(1, 0, 0, 0): 1}, SMALL)
        b = StateVector.from_dict({(0, 1, 0, 0): 1}, SMALL)
        s = (a + b) * (1 / math.sqrt(2))
        assert s.norm() == pytest.approx(1)
        assert s.normalized().norm() == pytest.approx(1)

    def test_normalize_zero(self):
        with pytest.raises(ValueError):
            (StateVector.vacuum(SMALL) * 0).normalized()


class TestDensity:
    def test_basis_state(self):
        rho = density_from_pure(StateVector.from_dict({(0, 1, 0, 0): 1}, SMALL))
        i = fock_space(SMALL).index((0, 1, 0, 0))
        assert rho.matrix[i, i] == 1
        assert np.count_nonzero(rho.matrix) == 1

    def test_equal_superposition(self):
        s = StateVector.from_dict({(1, 0, 0, 0): 2**-0.5, (0, 0, 0, 1): 2**-0.5}, SMALL)
        rho = density_from_pure(s)
        nz = rho.matrix[np.nonzero(rho.matrix)]
        np.testing.assert_allclose(nz, 0.5)
        assert len(nz) == 4

    def test_purity(self, rng):
        rho = density_from_pure(random_state(rng, Truncation(2, 4)))
        assert np.trace(rho.matrix @ rho.matrix).real == pytest.approx(1, abs=1e-12)
        np.testing.assert_allclose(rho.matrix @ rho.matrix, rho.matrix, atol=1e-12)

    def test_unnormalized(self):
        s = StateVector.from_dict({(1, 0, 0, 0): 2}, SMALL)
        with pytest.raises(ValueError):
            density_from_pure(s)
        assert density_from_pure(s, strict=False).trace() == pytest.approx(1)

    def test_non_hermitian_rejected(self):
        basis = fock_space(Truncation(0, 0)).basis
        DensityMatrix(np.eye(1), basis)
        with pytest.raises(ValueError):
            DensityMatrix(np.array([[1j]]), basis)


class TestPartialTrace:
    def test_product(self):
        rho = density_from_pure(StateVector.from_dict({(1, 0, 0, 0): 1}, SMALL))
        r1 = partial_trace(rho, 1)
        assert r1.modes == (Mode.K1H, Mode.K1V)
        i = [tuple(b) for b in r1.basis.tolist()].index((1, 0))
        assert r1.matrix[i, i] == pytest.approx(1)
        assert von_neumann_entropy(r1) == pytest.approx(0, abs=1e-12)

    def test_singlet(self):
        s = StateVector.from_dict({(1, 0, 0, 1): 2**-0.5, (0, 1, 1, 0): -(2**-0.5)}, SMALL)
        for keep in (1, 2):
            lam = np.sort(partial_trace(density_from_pure(s), keep).eigenvalues())[-2:]
            np.testing.assert_allclose(lam, [0.5, 0.5], atol=1e-14)

    def test_amplified_state(self):
        rho = density_from_pure(amplified_h_state())
        for keep in (1, 2):
            lam = np.sort(partial_trace(rho, keep).eigenvalues())[-2:]
            np.testing.assert_allclose(lam, [1 / 3, 2 / 3], atol=1e-14)

    def test_trace_and_spectra(self, rng):
        t = Truncation(2, 4)
        rho = density_from_pure(random_state(rng, t))
        r1, r2 = partial_trace(rho, 1), partial_trace(rho, 2)
        assert r1.trace() == pytest.approx(1, abs=1e-12)
        assert r2.trace() == pytest.approx(1, abs=1e-12)
        l1 = np.sort(r1.eigenvalues())[::-1]
        l2 = np.sort(r2.eigenvalues())[::-1]
        k = min(len(l1), len(l2))
        np.testing.assert_allclose(l1[:k], l2[:k], atol=1e-12)

    def test_dense_matches_reshape(self, rng):
        t = Truncation(2, 4)
        psi = random_state(rng, t)
        for keep in (1, 2):
            a = partial_trace(density_from_pure(psi), keep)
            b = reduced_density(psi, keep)
            np.testing.assert_array_equal(a.basis, b.basis)
            np.testing.assert_allclose(a.matrix, b.matrix, atol=1e-14)

    def test_rejects_reduced_input(self):
        r = reduced_density(amplified_h_state(), 1)
        with pytest.raises(ValueError):
            partial_trace(r, 1)


class TestEntropy:
    def test_pure(self, rng):
        assert von_neumann_entropy(density_from_pure(random_state(rng, Truncation(1, 2)))) == pytest.approx(0, abs=1e-9)

    def test_one_bit(self):
        s = StateVector.from_dict({(1, 0, 0, 1): 2**-0.5, (0, 1, 1, 0): -(2**-0.5)}, SMALL)
        assert von_neumann_entropy(reduced_density(s, 1)) == pytest.approx(1, abs=1e-12)

    def test_two_thirds(self):
        s = amplified_h_state()
        assert von_neumann_entropy(reduced_density(s, 1)) == pytest.approx(ENTROPY_23, abs=1e-12)
        assert ENTROPY_23 == pytest.approx(0.9183, abs=1e-4)

    def test_negative_eigenvalue(self):
        basis = fock_space(Truncation(1, 1)).basis
        with pytest.raises(ValueError):
            von_neumann_entropy(DensityMatrix(np.diag([1.2, -0.2, 0, 0, 0]), basis))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_unitary_invariance(self, seed):
        rng = np.random.default_rng(seed)
        rho = reduced_density(random_state(rng, Truncation(1, 2)), 1)
        q, _ = np.linalg.qr(rng.normal(size=rho.matrix.shape) + 1j * rng.normal(size=rho.matrix.shape))
        rotated = DensityMatrix(q @ rho.matrix @ q.conj().T, rho.basis, rho.modes)
        assert von_neumann_entropy(rotated) == pytest.approx(von_neumann_entropy(rho), abs=1e-10)


class TestNumberExpectation:
    def test_vacuum(self):
        rho = density_from_pure(StateVector.vacuum(SMALL))
        assert all(number_expectation(rho, m) == 0 for m in ALL_MODES)

    def test_fock(self):
        rho = density_from_pure(StateVector.from_dict({(2, 0, 0, 0): 1}, SMALL))
        assert number_expectation(rho, Mode.K1H) == 2
        assert number_expectation(rho, Mode.K1V) == 0

    def test_amplified_psi_count(self):
        s = amplified_h_state()
        for rho in (density_from_pure(s), reduced_density(s, 1)):
            assert number_expectation(rho, Mode.K1H, (1, 0)) == pytest.approx(5 / 3, abs=1e-14)

    def test_direction_against_rotation(self, rng):
        # photons along d = a|H> + b|V>: <psi| a_d^dag a_d |psi> with a_d = conj(a) a_H + conj(b) a_V
        t = Truncation(2, 4)
        psi = random_state(rng, t)
        a, b = 0.6, 0.8j
        ad = apply_annihilation(psi, Mode.K2H) * np.conj(a) + apply_annihilation(psi, Mode.K2V) * np.conj(b)
        want = ad.norm() ** 2
        rho = density_from_pure(psi)
        assert number_expectation(rho, Mode.K2V, (a, b)) == pytest.approx(want, abs=1e-12)
        assert number_expectation(reduced_density(psi, 2), Mode.K2H, (a, b)) == pytest.approx(want, abs=1e-12)

    def test_orthogonal_directions_sum(self, rng):
        psi = random_state(rng, Truncation(2, 4))
        rho = reduced_density(psi, 1)
        a, b = 0.6, 0.8j
        total = number_expectation(rho, Mode.K1H) + number_expectation(rho, Mode.K1V)
        split = number_expectation(rho, Mode.K1H, (a, b)) + number_expectation(rho, Mode.K1H, (-np.conj(b), np.conj(a)))
        assert split == pytest.approx(total, abs=1e-12)
