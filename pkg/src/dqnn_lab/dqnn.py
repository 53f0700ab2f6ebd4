"""Dissipative quantum neural networks trained with closed-form update matrices.

A network with widths ``m_0, ..., m_{L+1}`` has one transition per adjacent
pair of layers. Transition ``l`` (1-based) owns ``m_l`` perceptron unitaries,
each acting on all ``m_{l-1}`` input qubits plus one fresh output qubit.
The layer channel tensors in ``|0...0>`` on the output layer, applies the
perceptrons in stored order and traces out the input layer.

Inside a transition the register is ``m_{l-1} + m_l`` qubits with the input
layer first. Perceptron ``j`` (1-based) acts on the inputs and qubit
``m_{l-1} + j - 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .history import LossHistory
from .quantum_core import (
    UPDATE_HERMITIAN_TOL,
    embed_operator,
    fidelity_pure_mixed,
    haar_states,
    haar_unitary,
    hermitian_exp,
    is_hermitian,
    is_unitary,
    normalize,
    partial_trace,
    projector,
)

DEFAULT_DIM_CAP = 2 ** 12


@dataclass(frozen=True)
class NetworkTopology:
    widths: tuple[int, ...]
    dim_cap: int = DEFAULT_DIM_CAP

    def __post_init__(self):
        widths = tuple(int(w) for w in self.widths)
        object.__setattr__(self, "widths", widths)
        if len(widths) < 2:
            raise ValueError("a topology needs at least two layers")
        if any(w < 1 for w in widths):
            raise ValueError("every layer width must be >= 1")
        for a, b in zip(widths, widths[1:]):
            if 2 ** (a + b) > self.dim_cap:
                raise ValueError(
                    f"transition {a}->{b} needs dimension 2^{a + b}, above the cap {self.dim_cap}"
                )

    @classmethod
    def parse(cls, spec: str | Sequence[int], dim_cap: int = DEFAULT_DIM_CAP) -> NetworkTopology:
        if isinstance(spec, str):
            spec = [int(p) for p in spec.split("-")]
        return cls(tuple(spec), dim_cap)

    @property
    def num_transitions(self) -> int:
        return len(self.widths) - 1

    def __str__(self) -> str:
        return "-".join(map(str, self.widths))


@dataclass(frozen=True)
class TrainingPair:
    input: np.ndarray
    target: np.ndarray


@dataclass(frozen=True)
class Hyperparams:
    eps: float = 0.01
    eta: float = 1.0
    epochs: int = 1000

    def __post_init__(self):
        if self.eps < 0 or self.eta < 0 or self.epochs < 0:
            raise ValueError("hyperparameters must be non-negative")


@dataclass
class DQNN:
    """Topology plus ``unitaries[l-1][j-1]`` for transition ``l`` and perceptron ``j``."""

    topology: NetworkTopology
    unitaries: list[list[np.ndarray]]
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        w = self.topology.widths
        if len(self.unitaries) != len(w) - 1:
            raise ValueError("one perceptron list per transition is required")
        for l, layer in enumerate(self.unitaries, start=1):
            if len(layer) != w[l]:
                raise ValueError(f"transition {l} needs {w[l]} perceptrons")
            dim = 2 ** (w[l - 1] + 1)
            for u in layer:
                if u.shape != (dim, dim):
                    raise ValueError(f"perceptron in transition {l} must be {dim}x{dim}")

    @property
    def widths(self) -> tuple[int, ...]:
        return self.topology.widths

    def check_unitarity(self, tol: float = 1e-10) -> bool:
        return all(is_unitary(u, tol) for layer in self.unitaries for u in layer)

    def embedded_perceptrons(self, l: int) -> list[np.ndarray]:
        key = ("emb", l)
        if key not in self._cache:
            a, b = self.widths[l - 1], self.widths[l]
            total = a + b
            inputs = list(range(a))
            self._cache[key] = [
                embed_operator(u, inputs + [a + j], total)
                for j, u in enumerate(self.unitaries[l - 1])
            ]
        return self._cache[key]

    def layer_unitary(self, l: int) -> np.ndarray:
        """U^l = U^l_{m_l} ... U^l_1 on the transition register."""
        key = ("layer", l)
        if key not in self._cache:
            emb = self.embedded_perceptrons(l)
            u = emb[0]
            for p in emb[1:]:
                u = p @ u
            self._cache[key] = u
        return self._cache[key]

    def isometry(self, l: int) -> np.ndarray:
        """V = U^l (I (x) |0...0>), shape (2^(a+b), 2^a)."""
        key = ("iso", l)
        if key not in self._cache:
            b = self.widths[l]
            self._cache[key] = self.layer_unitary(l)[:, :: 2 ** b]
        return self._cache[key]

    def copy(self) -> DQNN:
        return DQNN(self.topology, [[u.copy() for u in layer] for layer in self.unitaries])


def init_random(topology: NetworkTopology, rng: np.random.Generator) -> DQNN:
    w = topology.widths
    unitaries = [
        [haar_unitary(2 ** (w[l - 1] + 1), rng) for _ in range(w[l])]
        for l in range(1, len(w))
    ]
    return DQNN(topology, unitaries)


def identity_network(topology: NetworkTopology) -> DQNN:
    """Every perceptron is the identity; outputs are always |0...0>."""
    w = topology.widths
    return DQNN(topology, [[np.eye(2 ** (w[l - 1] + 1), dtype=complex)] * w[l] for l in range(1, len(w))])


def _check_width(net: DQNN, x: np.ndarray, layer: int) -> None:
    if x.shape[-1] != 2 ** net.widths[layer]:
        raise ValueError(f"operator on layer {layer} must have dimension {2 ** net.widths[layer]}")


def layer_forward(net: DQNN, l: int, x: np.ndarray) -> np.ndarray:
    """Layer channel E^l on a (batched) operator of layer l-1."""
    _check_width(net, x, l - 1)
    v = net.isometry(l)
    y = v @ x @ v.conj().T
    a, b = 2 ** net.widths[l - 1], 2 ** net.widths[l]
    return np.einsum("...kikj->...ij", y.reshape(y.shape[:-2] + (a, b, a, b)))


def layer_adjoint(net: DQNN, l: int, x: np.ndarray) -> np.ndarray:
    """Adjoint channel F^l: V^dagger (I (x) X) V, on layer l-1."""
    _check_width(net, x, l)
    v = net.isometry(l)
    a = 2 ** net.widths[l - 1]
    big = np.kron(np.eye(a), x) if x.ndim == 2 else np.einsum("ij,...kl->...ikjl", np.eye(a), x).reshape(
        x.shape[:-2] + (a * x.shape[-1],) * 2
    )
    return v.conj().T @ big @ v


def feed_forward(net: DQNN, rho_in: np.ndarray) -> list[np.ndarray]:
    """[rho^0, ..., rho^{L+1}]; accepts a leading batch axis."""
    states = [np.asarray(rho_in, dtype=complex)]
    for l in range(1, len(net.widths)):
        states.append(layer_forward(net, l, states[-1]))
    return states


def back_propagate(net: DQNN, target: np.ndarray, operator: bool = False) -> list[np.ndarray]:
    """Backward operators indexed by layer, ``[sigma^0, ..., sigma^{L+1}]``.

    ``target`` is a pure state or a batch of them. With ``operator=True`` it
    is taken as an (optionally batched) operator on the output layer.
    """
    target = np.asarray(target, dtype=complex)
    sigmas = [target if operator else projector(target)]
    for l in range(len(net.widths) - 1, 0, -1):
        sigmas.append(layer_adjoint(net, l, sigmas[-1]))
    return sigmas[::-1]


def output(net: DQNN, rho_in: np.ndarray) -> np.ndarray:
    return feed_forward(net, rho_in)[-1]


# --- data plumbing --------------------------------------------------------------

def stack_pairs(pairs: Sequence[TrainingPair]) -> tuple[np.ndarray, np.ndarray]:
    if len(pairs) == 0:
        raise ValueError("at least one training pair is required")
    return np.stack([p.input for p in pairs]), np.stack([p.target for p in pairs])


def make_unitary_dataset(y: np.ndarray, n: int, rng: np.random.Generator) -> list[TrainingPair]:
    if not is_unitary(y, 1e-10):
        raise ValueError("Y must be unitary")
    inputs = haar_states(y.shape[0], n, rng)
    return [TrainingPair(psi, y @ psi) for psi in inputs]


def add_target_noise(pairs: Sequence[TrainingPair], delta: float, rng: np.random.Generator) -> list[TrainingPair]:
    if not 0.0 <= delta <= 1.0:
        raise ValueError("delta must lie in [0, 1]")
    noisy = []
    for p in pairs:
        rnd = haar_states(p.target.shape[0], 1, rng)[0]
        noisy.append(TrainingPair(p.input, normalize((1 - delta) * p.target + delta * rnd)))
    return noisy


def is_orthonormal_inputs(pairs: Sequence[TrainingPair], tol: float = 1e-8) -> bool:
    if len(pairs) < 2:
        return False
    inputs, _ = stack_pairs(pairs)
    gram = inputs.conj() @ inputs.T
    return bool(np.max(np.abs(gram - np.eye(len(pairs)))) < tol)


# --- losses -------------------------------------------------------------------

def mean_fidelity(net: DQNN, inputs: np.ndarray, targets: np.ndarray) -> float:
    out = output(net, projector(inputs))
    return float(np.mean(fidelity_pure_mixed(targets, out)))


def training_loss(net: DQNN, pairs: Sequence[TrainingPair]) -> float:
    """Mean fidelity between outputs and supervised targets."""
    return mean_fidelity(net, *stack_pairs(pairs))


def validation_loss(net: DQNN, pairs: Sequence[TrainingPair]) -> float:
    """Same average over held-out pairs."""
    return mean_fidelity(net, *stack_pairs(pairs))


# --- update matrices --------------------------------------------------------------

def commutator_traces(net: DQNN, l: int, fwd: np.ndarray, bwd: np.ndarray) -> list[np.ndarray]:
    """tr_rest of sum_x M_j^l(x) for every perceptron j of transition l.

    ``fwd`` holds operators on layer l-1 and ``bwd`` operators on layer l,
    both with a leading sample axis. Neither needs to be a density matrix,
    which lets the graph and adversarial losses reuse this with state
    differences. The result is anti-Hermitian and carries no prefactor.
    """
    a, b = net.widths[l - 1], net.widths[l]
    emb = net.embedded_perceptrons(l)
    zero_out = np.zeros((2 ** b, 2 ** b), dtype=complex)
    zero_out[0, 0] = 1.0
    forward = [np.einsum("xij,kl->xikjl", fwd, zero_out).reshape(len(fwd), 2 ** (a + b), 2 ** (a + b))]
    for p in emb:
        forward.append(p @ forward[-1] @ p.conj().T)
    back = np.einsum("ij,xkl->xikjl", np.eye(2 ** a), bwd).reshape(len(bwd), 2 ** (a + b), 2 ** (a + b))
    traces = [None] * b
    for j in range(b, 0, -1):
        c = np.einsum("xij,xjk->ik", forward[j], back)
        m = c - c.conj().T
        discard = [a + k for k in range(b) if k != j - 1]
        traces[j - 1] = partial_trace(m, discard, a + b) if discard else m
        p = emb[j - 1]
        back = p.conj().T @ back @ p
    return traces


def _forward_backward(net: DQNN, pairs: Sequence[TrainingPair]):
    inputs, targets = stack_pairs(pairs)
    fwd = feed_forward(net, projector(inputs))
    bwd = back_propagate(net, targets)
    return fwd, bwd


def all_commutator_traces(net: DQNN, pairs: Sequence[TrainingPair]) -> list[list[np.ndarray]]:
    fwd, bwd = _forward_backward(net, pairs)
    return [commutator_traces(net, l, fwd[l - 1], bwd[l]) for l in range(1, len(net.widths))]


def update_prefactor(net: DQNN, l: int, eta: float, n_samples: int) -> complex:
    return eta * 2 ** net.widths[l - 1] * 1j / n_samples


def update_matrices(net: DQNN, pairs: Sequence[TrainingPair], eta: float) -> list[list[np.ndarray]]:
    """K_j^l for every perceptron, all from the same network state."""
    s = len(pairs)
    traces = all_commutator_traces(net, pairs)
    ks = [[update_prefactor(net, l, eta, s) * t for t in layer] for l, layer in enumerate(traces, start=1)]
    for layer in ks:
        for k in layer:
            if not is_hermitian(k, UPDATE_HERMITIAN_TOL * max(1.0, np.abs(k).max())):
                raise ArithmeticError("update matrix lost Hermiticity")
    return ks


def update_matrix(net: DQNN, l: int, j: int, pairs: Sequence[TrainingPair], eta: float) -> np.ndarray:
    """K_j^l with 1-based ``l`` and ``j``."""
    fwd, bwd = _forward_backward(net, pairs)
    t = commutator_traces(net, l, fwd[l - 1], bwd[l])[j - 1]
    return update_prefactor(net, l, eta, len(pairs)) * t


def apply_updates(net: DQNN, ks: list[list[np.ndarray]], eps: float) -> DQNN:
    """U <- exp(i eps K) U for every perceptron."""
    new = [
        [hermitian_exp(k, eps) @ u for k, u in zip(k_layer, u_layer)]
        for k_layer, u_layer in zip(ks, net.unitaries)
    ]
    return DQNN(net.topology, new)


def train_step(net: DQNN, pairs: Sequence[TrainingPair], hyper: Hyperparams) -> DQNN:
    return apply_updates(net, update_matrices(net, pairs, hyper.eta), hyper.eps)


def directional_derivative(traces: list[list[np.ndarray]], ks: list[list[np.ndarray]], scale: complex) -> float:
    """scale * sum_{l,j} tr(T_j^l K_j^l), real part."""
    total = 0.0 + 0.0j
    for t_layer, k_layer in zip(traces, ks):
        for t, k in zip(t_layer, k_layer):
            total += np.trace(t @ k)
    return float((scale * total).real)


def loss_derivative(net: DQNN, pairs: Sequence[TrainingPair], eta: float) -> float:
    """Rate of change of the training loss along the update direction."""
    s = len(pairs)
    traces = all_commutator_traces(net, pairs)
    ks = [[update_prefactor(net, l, eta, s) * t for t in layer] for l, layer in enumerate(traces, start=1)]
    return directional_derivative(traces, ks, 1j / s)


def train(
    net: DQNN,
    train_pairs: Sequence[TrainingPair],
    hyper: Hyperparams,
    validation_pairs: Sequence[TrainingPair] | None = None,
    record_every: int = 1,
) -> tuple[DQNN, LossHistory]:
    """Full-batch training loop. Epoch 0 records the initial network."""
    if len(train_pairs) == 0:
        raise ValueError("at least one training pair is required")
    columns = ("training_loss",) + (("validation_loss",) if validation_pairs else ())
    hist = LossHistory(columns)
    tr_in, tr_out = stack_pairs(train_pairs)
    va = stack_pairs(validation_pairs) if validation_pairs else None

    def record(epoch, current):
        values = {"training_loss": mean_fidelity(current, tr_in, tr_out)}
        if va is not None:
            values["validation_loss"] = mean_fidelity(current, *va)
        hist.append(epoch, **values)

    record(0, net)
    for epoch in range(1, hyper.epochs + 1):
        net = train_step(net, train_pairs, hyper)
        if epoch % record_every == 0 or epoch == hyper.epochs:
            record(epoch, net)
    return net, hist
