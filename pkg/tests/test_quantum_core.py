import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dqnn_lab import quantum_core as qc

PAULI_Z = qc.PAULI_Z


def ket(*bits):
    return qc.basis_state(int("".join(map(str, bits)), 2), len(bits))


def loop_partial_trace(rho, discard, n):
    """Index-by-index reference for partial_trace."""
    keep = [q for q in range(n) if q not in discard]
    dk = 2 ** len(keep)
    out = np.zeros((dk, dk), dtype=complex)
    for row in itertools.product((0, 1), repeat=n):
        for col in itertools.product((0, 1), repeat=n):
            if any(row[q] != col[q] for q in discard):
                continue
            r = int("".join(str(row[q]) for q in keep) or "0", 2)
            c = int("".join(str(col[q]) for q in keep) or "0", 2)
            out[r, c] += rho[int("".join(map(str, row)), 2), int("".join(map(str, col)), 2)]
    return out


seeds = st.integers(0, 2 ** 32 - 1)


class TestTensorAndTrace:
    def test_basis_case(self):
        p0 = qc.projector(ket(0))
        assert np.allclose(qc.tensor(p0, p0), qc.projector(ket(0, 0)))

    def test_mixed_times_one(self):
        out = qc.tensor(np.eye(2) / 2, qc.projector(ket(1)))
        assert np.allclose(out, np.diag([0, 0.5, 0, 0.5]))

    def test_bell_marginal(self):
        phi = (ket(0, 0) + ket(1, 1)) / np.sqrt(2)
        assert np.allclose(qc.partial_trace(qc.projector(phi), [1]), np.eye(2) / 2)

    @given(seeds)
    @settings(max_examples=30, deadline=None)
    def test_product_factorization(self, seed):
        rng = qc.make_rng(seed)
        a, b = qc.random_density_matrix(1, rng), qc.random_density_matrix(2, rng)
        ab = qc.tensor(a, b)
        assert np.isclose(np.trace(ab), 1)
        assert np.allclose(qc.partial_trace(ab, [1, 2]), a, atol=1e-12)
        assert np.allclose(qc.partial_trace(ab, [0]), b, atol=1e-12)

    @given(seeds, st.sets(st.integers(0, 2), max_size=3))
    @settings(max_examples=40, deadline=None)
    def test_matches_loop_oracle(self, seed, discard):
        rho = qc.random_density_matrix(3, qc.make_rng(seed))
        got = qc.partial_trace(rho, sorted(discard))
        ref = loop_partial_trace(rho, sorted(discard), 3)
        assert np.allclose(got, ref, atol=1e-12)
        assert np.isclose(np.trace(got), 1, atol=1e-10)

    def test_batched(self):
        rng = qc.make_rng(1)
        rhos = np.stack([qc.random_density_matrix(3, rng) for _ in range(4)])
        out = qc.partial_trace(rhos, [0, 2])
        for r, o in zip(rhos, out):
            assert np.allclose(o, loop_partial_trace(r, [0, 2], 3))

    def test_errors(self):
        rho = qc.maximally_mixed(2)
        with pytest.raises(IndexError):
            qc.partial_trace(rho, [2])
        with pytest.raises(ValueError):
            qc.partial_trace(rho, [0, 0])


class TestDistances:
    def test_fidelity_examples(self):
        plus = (ket(0) + ket(1)) / np.sqrt(2)
        assert qc.fidelity_pure_mixed(ket(0), qc.projector(ket(0))) == pytest.approx(1)
        assert qc.fidelity_pure_mixed(ket(0), qc.projector(ket(1))) == pytest.approx(0)
        assert qc.fidelity_pure_mixed(ket(0), qc.projector(plus)) == pytest.approx(0.5)
        with pytest.raises(ValueError):
            qc.fidelity_pure_mixed(ket(0), qc.maximally_mixed(2))

    def test_hilbert_schmidt_examples(self):
        p0, p1 = qc.projector(ket(0)), qc.projector(ket(1))
        assert qc.hilbert_schmidt_distance(p0, p0) == pytest.approx(0)
        assert qc.hilbert_schmidt_distance(p0, p1) == pytest.approx(2)
        assert qc.hilbert_schmidt_distance(p0, np.eye(2) / 2) == pytest.approx(0.5)

    @given(seeds)
    @settings(max_examples=30, deadline=None)
    def test_hilbert_schmidt_symmetric(self, seed):
        rng = qc.make_rng(seed)
        a, b = qc.random_density_matrix(2, rng), qc.random_density_matrix(2, rng)
        assert qc.hilbert_schmidt_distance(a, b) == pytest.approx(qc.hilbert_schmidt_distance(b, a))
        assert qc.hilbert_schmidt_distance(a, b) >= 0

    def test_trace_norm_examples(self):
        assert qc.trace_norm_half(np.zeros((2, 2))) == 0
        assert qc.trace_norm_half(PAULI_Z) == pytest.approx(1)
        with pytest.raises(ValueError):
            qc.trace_norm_half(np.array([[0, 1], [0, 0]], dtype=complex))

    def test_trace_norm_pure_identity(self):
        rng = qc.make_rng(2)
        for _ in range(100):
            p, q = qc.haar_state(4, rng), qc.haar_state(4, rng)
            lhs = qc.trace_norm_half(qc.projector(p) - qc.projector(q)) ** 2
            assert lhs == pytest.approx(1 - abs(np.vdot(p, q)) ** 2, abs=1e-10)


class TestHaar:
    def test_unitarity(self):
        us = qc.haar_unitaries(4, 1000, qc.make_rng(3))
        err = np.abs(np.einsum("nji,njk->nik", us.conj(), us) - np.eye(4)).max()
        assert err < 1e-10

    def test_trace_moments(self):
        n = 100_000
        tr = np.einsum("nii->n", qc.haar_unitaries(2, n, qc.make_rng(4)))
        # E tr U = 0 with E|tr U|^2 = 1
        assert abs(tr.mean()) < 3 * np.sqrt(1 / n)
        t2 = np.abs(tr) ** 2
        assert abs(t2.mean() - 1) < 3 * t2.std() / np.sqrt(n)

    def test_state_moments(self):
        n = 100_000
        psi = qc.haar_states(2, n, qc.make_rng(5))
        z = np.einsum("ni,ij,nj->n", psi.conj(), PAULI_Z, psi).real
        assert abs(z.mean()) < 3 * z.std() / np.sqrt(n)
        rho = np.einsum("ni,nj->nij", psi, psi.conj())
        sd = rho.std(axis=0) / np.sqrt(n)
        assert np.all(np.abs(rho.mean(axis=0) - np.eye(2) / 2) < 3 * sd + 1e-12)

    def test_state_is_first_column(self):
        a, b = qc.make_rng(6), qc.make_rng(6)
        assert np.allclose(qc.haar_state(8, a), qc.haar_unitary(8, b)[:, 0])

    def test_seed_reproducible(self):
        assert np.array_equal(qc.haar_unitary(4, qc.make_rng(9)), qc.haar_unitary(4, qc.make_rng(9)))


class TestHermitianExp:
    def test_zero_and_z(self):
        assert np.allclose(qc.hermitian_exp(PAULI_Z, 0), np.eye(2))
        assert np.allclose(qc.hermitian_exp(PAULI_Z, np.pi), -np.eye(2))

    def test_rejects_non_hermitian(self):
        with pytest.raises(ValueError):
            qc.hermitian_exp(np.array([[0, 1], [0, 0]], dtype=complex), 0.1)

    @given(seeds, st.floats(-3, 3))
    @settings(max_examples=50, deadline=None)
    def test_unitary_and_inverse(self, seed, eps):
        k = qc.random_hermitian(4, qc.make_rng(seed))
        u = qc.hermitian_exp(k, eps)
        assert qc.is_unitary(u, 1e-10)
        assert np.allclose(u @ qc.hermitian_exp(k, -eps), np.eye(4), atol=1e-10)

    def test_matches_taylor_series(self):
        k = qc.random_hermitian(4, qc.make_rng(7))
        term, series = np.eye(4, dtype=complex), np.eye(4, dtype=complex)
        for n in range(1, 40):
            term = term @ (0.3j * k) / n
            series = series + term
        assert np.allclose(qc.hermitian_exp(k, 0.3), series, atol=1e-10)


class TestEmbedding:
    def test_identity_and_full(self):
        assert np.allclose(qc.embed_operator(np.eye(2), [1], 3), np.eye(8))
        u = qc.haar_unitary(4, qc.make_rng(8))
        assert np.allclose(qc.embed_operator(u, [0, 1], 2), u)

    def test_x_on_qubit_one(self):
        assert np.allclose(qc.embed_operator(qc.PAULI_X, [1], 2) @ ket(0, 0), ket(0, 1))

    def test_reversed_targets_is_swap_conjugate(self):
        u = qc.haar_unitary(4, qc.make_rng(10))
        swap = qc.permutation_operator([1, 0], 2)
        assert np.allclose(qc.embed_operator(u, [1, 0], 2), swap @ u @ swap)

    @given(seeds, st.permutations([0, 1, 2]))
    @settings(max_examples=30, deadline=None)
    def test_basis_action(self, seed, order):
        # u on targets (order[0], order[1]); check on every basis state by hand
        targets = order[:2]
        u = qc.haar_unitary(4, qc.make_rng(seed))
        big = qc.embed_operator(u, targets, 3)
        for bits in itertools.product((0, 1), repeat=3):
            col = u[:, bits[targets[0]] * 2 + bits[targets[1]]]
            want = np.zeros(8, dtype=complex)
            for r in range(4):
                b = list(bits)
                b[targets[0]], b[targets[1]] = r >> 1, r & 1
                want[int("".join(map(str, b)), 2)] += col[r]
            assert np.allclose(big @ ket(*bits), want, atol=1e-12)
        batched = qc.apply_to_qubits(np.eye(8, dtype=complex), u, targets, 3)
        assert np.allclose(batched.T, big, atol=1e-12)

    def test_errors(self):
        with pytest.raises(ValueError):
            qc.embed_operator(np.eye(4), [0, 0], 2)
        with pytest.raises((ValueError, IndexError)):
            qc.embed_operator(np.eye(2), [3], 2)


class TestValidators:
    def test_density_validator(self):
        qc.validate_density_matrix(qc.maximally_mixed(2))
        with pytest.raises(qc.ValidationError):
            qc.validate_density_matrix(np.diag([1.5, -0.5]))
        with pytest.raises(qc.ValidationError):
            qc.validate_density_matrix(np.diag([0.5, 0.4]))
        with pytest.raises(qc.ValidationError):
            qc.validate_density_matrix(np.array([[0.5, 1], [0, 0.5]]))

    def test_pure_validator(self):
        qc.validate_pure_state(ket(1, 0))
        with pytest.raises(qc.ValidationError):
            qc.validate_pure_state(np.array([1, 1], dtype=complex))

    @given(seeds, st.integers(1, 3), st.integers(1, 8))
    @settings(max_examples=30, deadline=None)
    def test_random_density_valid(self, seed, n, rank):
        rho = qc.random_density_matrix(n, qc.make_rng(seed), rank=min(rank, 2 ** n))
        qc.validate_density_matrix(rho)
