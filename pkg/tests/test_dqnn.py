import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dqnn_lab import dqnn
from dqnn_lab import quantum_core as qc
from dqnn_lab.dqnn import DQNN, Hyperparams, NetworkTopology, TrainingPair

seeds = st.integers(0, 2 ** 32 - 1)
topologies = st.sampled_from([(1, 1), (1, 2), (2, 1), (2, 2), (2, 3, 2), (1, 2, 1)])

SWAP = qc.permutation_operator([1, 0], 2)


def net_for(widths, seed):
    return dqnn.init_random(NetworkTopology(widths), qc.make_rng(seed))


def global_output(net: DQNN, rho_in):
    """Apply every perceptron on the full register, then trace out all but the last layer."""
    w = net.widths
    offsets = np.concatenate([[0], np.cumsum(w)]).astype(int)
    total = int(offsets[-1])
    state = rho_in
    for width in w[1:]:
        state = qc.tensor(state, qc.zero_projector(width))
    for l in range(1, len(w)):
        inputs = list(range(offsets[l - 1], offsets[l]))
        for j, u in enumerate(net.unitaries[l - 1]):
            big = qc.embed_operator(u, inputs + [int(offsets[l]) + j], total)
            state = big @ state @ big.conj().T
    return qc.partial_trace(state, list(range(int(offsets[-2]))))


class TestTopology:
    def test_parse_and_str(self):
        t = NetworkTopology.parse("2-3-2")
        assert t.widths == (2, 3, 2) and str(t) == "2-3-2" and t.num_transitions == 2

    @pytest.mark.parametrize("widths", [(2,), (1, 0), ()])
    def test_invalid(self, widths):
        with pytest.raises(ValueError):
            NetworkTopology(widths)

    def test_dimension_cap(self):
        with pytest.raises(ValueError, match="cap"):
            NetworkTopology((7, 6))
        NetworkTopology((6, 6))

    def test_init_shapes(self):
        assert [u.shape for u in net_for((1, 1), 0).unitaries[0]] == [(4, 4)]
        net = net_for((2, 3, 2), 0)
        assert [[u.shape[0] for u in layer] for layer in net.unitaries] == [[8, 8, 8], [16, 16]]
        assert net.check_unitarity()


class TestChannels:
    def test_identity_zero_pass(self):
        net = dqnn.identity_network(NetworkTopology((2, 2)))
        out = dqnn.layer_forward(net, 1, qc.zero_projector(2))
        assert np.allclose(out, qc.zero_projector(2))

    def test_swap_moves_input(self):
        net = DQNN(NetworkTopology((1, 1)), [[SWAP.astype(complex)]])
        rho = qc.random_density_matrix(1, qc.make_rng(1))
        assert np.allclose(dqnn.layer_forward(net, 1, rho), rho)

    def test_swap_ladder_identity_network(self):
        # 2-3-2: output j swaps with input j, extra hidden qubit untouched
        t = NetworkTopology((2, 3, 2))
        first = [qc.embed_operator(SWAP, [j, 2], 3) for j in range(2)] + [np.eye(8, dtype=complex)]
        second = [qc.embed_operator(SWAP, [j, 3], 4) for j in range(2)]
        net = DQNN(t, [first, second])
        rho = qc.random_density_matrix(2, qc.make_rng(2))
        assert np.allclose(dqnn.output(net, rho), rho, atol=1e-12)

    @given(topologies, seeds)
    @settings(max_examples=25, deadline=None)
    def test_forward_matches_global_oracle(self, widths, seed):
        net = net_for(widths, seed)
        rho = qc.random_density_matrix(widths[0], qc.make_rng(seed + 1))
        states = dqnn.feed_forward(net, rho)
        assert np.allclose(states[0], rho)
        assert np.allclose(states[-1], global_output(net, rho), atol=1e-10)
        for s in states:
            qc.validate_density_matrix(s)

    @given(topologies, seeds)
    @settings(max_examples=40, deadline=None)
    def test_duality(self, widths, seed):
        rng = qc.make_rng(seed)
        net = dqnn.init_random(NetworkTopology(widths), rng)
        for l in range(1, len(widths)):
            rho = qc.random_density_matrix(widths[l - 1], rng)
            x = qc.random_hermitian(2 ** widths[l], rng)
            lhs = np.trace(dqnn.layer_adjoint(net, l, x) @ rho)
            rhs = np.trace(x @ dqnn.layer_forward(net, l, rho))
            assert abs(lhs - rhs) < 1e-10

    def test_adjoint_zero_and_identity(self):
        net = net_for((2, 2), 3)
        assert np.allclose(dqnn.layer_adjoint(net, 1, np.zeros((4, 4))), 0)
        # adjoint of a unital-free channel maps I to I
        assert np.allclose(dqnn.layer_adjoint(net, 1, np.eye(4)), np.eye(4))
        ident = dqnn.identity_network(NetworkTopology((1, 1)))
        # identity perceptron: F(X) = <0|X|0> I
        x = qc.random_hermitian(2, qc.make_rng(4))
        assert np.allclose(dqnn.layer_adjoint(ident, 1, x), x[0, 0] * np.eye(2))

    def test_wrong_width(self):
        net = net_for((2, 2), 0)
        with pytest.raises(ValueError):
            dqnn.layer_forward(net, 1, qc.zero_projector(1))

    @given(st.sampled_from([(1, 1), (2, 3, 2), (1, 2, 1)]), seeds)
    @settings(max_examples=20, deadline=None)
    def test_backward_chain(self, widths, seed):
        rng = qc.make_rng(seed)
        net = dqnn.init_random(NetworkTopology(widths), rng)
        phi = qc.haar_state(2 ** widths[-1], rng)
        sig = dqnn.back_propagate(net, phi)
        assert np.allclose(sig[-1], qc.projector(phi))
        for s in sig:
            assert qc.is_hermitian(s, 1e-10)
        rho = qc.random_density_matrix(widths[0], rng)
        # tr(sigma^0 rho) = <phi| E(rho) |phi>
        assert np.trace(sig[0] @ rho).real == pytest.approx(qc.fidelity_pure_mixed(phi, dqnn.output(net, rho)))


class TestLosses:
    def test_identity_like_net_scores_one(self):
        net = DQNN(NetworkTopology((1, 1)), [[SWAP.astype(complex)]])
        pairs = dqnn.make_unitary_dataset(np.eye(2), 5, qc.make_rng(0))
        assert dqnn.training_loss(net, pairs) == pytest.approx(1)
        orth = [TrainingPair(p.input, np.array([-p.input[1].conj(), p.input[0].conj()])) for p in pairs]
        assert dqnn.validation_loss(net, orth) == pytest.approx(0, abs=1e-12)

    def test_one_qubit_unrolled(self):
        rng = qc.make_rng(5)
        net = net_for((1, 1), 5)
        pairs = dqnn.make_unitary_dataset(qc.haar_unitary(2, rng), 3, rng)
        u = net.unitaries[0][0]
        vals = []
        for p in pairs:
            full = u @ np.kron(qc.projector(p.input), qc.zero_projector(1)) @ u.conj().T
            out = np.einsum("aiaj->ij", full.reshape(2, 2, 2, 2))
            vals.append(np.vdot(p.target, out @ p.target).real)
        assert dqnn.training_loss(net, pairs) == pytest.approx(np.mean(vals))

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            dqnn.training_loss(net_for((1, 1), 0), [])


class TestDatasets:
    def test_identity_targets(self):
        pairs = dqnn.make_unitary_dataset(np.eye(4), 10, qc.make_rng(0))
        assert all(np.allclose(p.input, p.target) for p in pairs)

    def test_targets_are_images(self):
        rng = qc.make_rng(1)
        y = qc.haar_unitary(4, rng)
        for p in dqnn.make_unitary_dataset(y, 10, rng):
            assert np.linalg.norm(p.target) == pytest.approx(1)
            assert abs(np.vdot(y @ p.input, p.target)) ** 2 == pytest.approx(1)

    def test_noise_limits(self):
        rng = qc.make_rng(2)
        pairs = dqnn.make_unitary_dataset(qc.haar_unitary(4, rng), 5, rng)
        same = dqnn.add_target_noise(pairs, 0.0, rng)
        assert all(np.allclose(a.target, b.target) for a, b in zip(pairs, same))
        r1, r2 = qc.make_rng(3), qc.make_rng(3)
        full = dqnn.add_target_noise(pairs, 1.0, r1)
        for p in full:
            assert np.allclose(p.target, qc.haar_states(4, 1, r2)[0])
        for p in dqnn.add_target_noise(pairs, 0.3, rng):
            assert np.linalg.norm(p.target) == pytest.approx(1)
        with pytest.raises(ValueError):
            dqnn.add_target_noise(pairs, 1.5, rng)

    def test_reject_non_unitary(self):
        with pytest.raises(ValueError):
            dqnn.make_unitary_dataset(np.ones((2, 2)), 2, qc.make_rng(0))

    def test_orthonormal_detection(self):
        basis = [TrainingPair(qc.basis_state(i, 2), qc.basis_state(i, 2)) for i in range(4)]
        assert dqnn.is_orthonormal_inputs(basis)
        assert not dqnn.is_orthonormal_inputs(dqnn.make_unitary_dataset(np.eye(4), 4, qc.make_rng(0)))


def _task(widths, seed, n=4):
    rng = qc.make_rng(seed)
    net = dqnn.init_random(NetworkTopology(widths), rng)
    if widths[0] != widths[-1]:
        ins, outs = qc.haar_states(2 ** widths[0], n, rng), qc.haar_states(2 ** widths[-1], n, rng)
        return net, [TrainingPair(a, b) for a, b in zip(ins, outs)]
    y = qc.haar_unitary(2 ** widths[0], rng)
    return net, dqnn.make_unitary_dataset(y, n, rng)


class TestUpdates:
    @given(topologies, seeds)
    @settings(max_examples=30, deadline=None)
    def test_hermitian(self, widths, seed):
        net, pairs = _task(widths, seed)
        for layer in dqnn.update_matrices(net, pairs, 1.0):
            for k in layer:
                assert qc.is_hermitian(k, 1e-8)

    def test_eta_zero(self):
        net, pairs = _task((2, 3, 2), 0)
        assert np.allclose(dqnn.update_matrix(net, 1, 2, pairs, 0.0), 0)
        assert dqnn.loss_derivative(net, pairs, 0.0) == 0

    def test_eta_linear(self):
        net, pairs = _task((2, 2), 1)
        assert dqnn.loss_derivative(net, pairs, 2.0) == pytest.approx(2 * dqnn.loss_derivative(net, pairs, 1.0))

    def test_update_matrix_matches_batch(self):
        net, pairs = _task((2, 3, 2), 2)
        ks = dqnn.update_matrices(net, pairs, 0.7)
        assert np.allclose(dqnn.update_matrix(net, 2, 1, pairs, 0.7), ks[1][0])

    @given(topologies, seeds)
    @settings(max_examples=20, deadline=None)
    def test_per_perceptron_directional_oracle(self, widths, seed):
        """Perturb one perceptron by exp(i t H) and compare with (i/S) tr(T H)."""
        net, pairs = _task(widths, seed)
        traces = dqnn.all_commutator_traces(net, pairs)
        rng = qc.make_rng(seed + 7)
        l = int(rng.integers(1, len(widths)))
        j = int(rng.integers(0, widths[l]))
        h = qc.random_hermitian(2 ** (widths[l - 1] + 1), rng)
        ks = [[np.zeros_like(t) for t in layer] for layer in traces]
        ks[l - 1][j] = h
        analytic = dqnn.directional_derivative(traces, ks, 1j / len(pairs))
        t = 1e-6

        def loss_at(step):
            moved = net.copy()
            moved.unitaries[l - 1][j] = qc.hermitian_exp(h, step) @ moved.unitaries[l - 1][j]
            return dqnn.training_loss(DQNN(net.topology, moved.unitaries), pairs)

        numeric = (loss_at(t) - loss_at(-t)) / (2 * t)
        assert analytic == pytest.approx(numeric, abs=1e-7)

    def test_stationary_at_optimum(self):
        # SWAP is optimal for the identity task: derivative vanishes
        net = DQNN(NetworkTopology((1, 1)), [[SWAP.astype(complex)]])
        pairs = dqnn.make_unitary_dataset(np.eye(2), 3, qc.make_rng(0))
        assert abs(dqnn.loss_derivative(net, pairs, 1.0)) < 1e-6
        for k in dqnn.update_matrices(net, pairs, 1.0)[0]:
            assert np.abs(k).max() < 1e-6

    def test_first_order_agreement(self):
        net, pairs = _task((2, 3, 2), 3)
        d = dqnn.loss_derivative(net, pairs, 1.0)
        base = dqnn.training_loss(net, pairs)
        errs = []
        for eps in (1e-3, 1e-4):
            moved = dqnn.train_step(net, pairs, Hyperparams(eps, 1.0, 1))
            errs.append(abs((dqnn.training_loss(moved, pairs) - base) / eps - d))
        assert 5 < errs[0] / errs[1] < 20


class TestTraining:
    def test_eps_zero_unchanged(self):
        net, pairs = _task((1, 1), 0)
        out = dqnn.train_step(net, pairs, Hyperparams(0.0, 1.0, 1))
        assert np.allclose(out.unitaries[0][0], net.unitaries[0][0])

    def test_synchronous_update(self):
        net, pairs = _task((2, 2), 4)
        ks = dqnn.update_matrices(net, pairs, 1.0)
        stepped = dqnn.train_step(net, pairs, Hyperparams(0.01, 1.0, 1))
        for k, u, v in zip(ks[0], net.unitaries[0], stepped.unitaries[0]):
            assert np.allclose(qc.hermitian_exp(k, 0.01) @ u, v)

    def test_unitarity_after_many_steps(self):
        net, pairs = _task((1, 1), 5, n=2)
        trained, _ = dqnn.train(net, pairs, Hyperparams(0.01, 1.0, 1000), record_every=1000)
        assert trained.check_unitarity(1e-8)

    @pytest.mark.parametrize("seed", range(10))
    def test_monotone_start(self, seed):
        net, pairs = _task((1, 1), seed, n=2)
        _, hist = dqnn.train(net, pairs, Hyperparams(0.01, 1.0, 50))
        assert np.all(np.diff(hist.column("training_loss")) >= -1e-12)

    @pytest.mark.parametrize("seed", range(10))
    def test_single_pair_converges(self, seed):
        net, pairs = _task((1, 1), seed, n=1)
        _, hist = dqnn.train(net, pairs, Hyperparams(0.01, 1.0, 2000), record_every=100)
        assert max(hist.column("training_loss")) >= 0.999

    def test_history_columns(self):
        net, pairs = _task((1, 1), 0, n=4)
        _, hist = dqnn.train(net, pairs[:2], Hyperparams(0.01, 1.0, 10), pairs[2:], record_every=5)
        assert hist.epochs == [0, 5, 10]
        assert hist.columns == ("training_loss", "validation_loss")
        assert all(0 <= v <= 1 for v in hist.column("validation_loss"))
