"""Parametrised-circuit backend: u/CAN networks, QAOA, SWAP test, gate noise.

Simulation is batched over parameter vectors (leading axis ``P``) and input
states (axis ``B``) so a whole finite-difference stencil runs in one pass.
Qubits join the live register when a gate first touches them (initialised
to |0>) and leave it at their discard marker.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .dqnn import NetworkTopology, TrainingPair, stack_pairs
from .history import LossHistory
from .quantum_core import fidelity_pure_mixed, projector, random_hermitian

U3, CAN, CNOT, HADAMARD, FIXED, EVOLUTION = "u3", "can", "cnot", "hadamard", "fixed", "evolution"
_ARITY = {U3: 1, CAN: 2, CNOT: 2, HADAMARD: 1}
_NPARAMS = {U3: 3, CAN: 3, CNOT: 0, HADAMARD: 0, FIXED: 0, EVOLUTION: 1}

_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_Z = np.array([[1, 0], [0, -1]], dtype=complex)
_XX, _YY, _ZZ = np.kron(_X, _X), np.kron(_Y, _Y), np.kron(_Z, _Z)
_CNOT_M = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
_H_M = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)


@dataclass
class GateSpec:
    kind: str
    targets: tuple[int, ...]
    param_slots: tuple[int, ...] = ()
    matrix: np.ndarray | None = None  # fixed unitary, or generator H of exp(-i p H)

    def __post_init__(self):
        self.targets = tuple(int(t) for t in self.targets)
        self.param_slots = tuple(int(p) for p in self.param_slots)
        if self.kind not in _NPARAMS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        if len(set(self.targets)) != len(self.targets):
            raise ValueError("gate targets must be distinct")
        if self.kind in _ARITY and len(self.targets) != _ARITY[self.kind]:
            raise ValueError(f"{self.kind} acts on {_ARITY[self.kind]} qubit(s)")
        if len(self.param_slots) != _NPARAMS[self.kind]:
            raise ValueError(f"{self.kind} takes {_NPARAMS[self.kind]} parameter(s)")
        if self.kind in (FIXED, EVOLUTION):
            if self.matrix is None or self.matrix.shape != (2 ** len(self.targets),) * 2:
                raise ValueError(f"{self.kind} gate needs a matrix matching its targets")
            if self.kind == EVOLUTION:
                w, v = np.linalg.eigh(self.matrix)
                object.__setattr__(self, "_eig", (w, v))

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "targets": list(self.targets), "param_slots": list(self.param_slots)}
        if self.matrix is not None:
            d["matrix_real"] = self.matrix.real.tolist()
            d["matrix_imag"] = self.matrix.imag.tolist()
        return d


def u3_matrix(p1, p2, p3) -> np.ndarray:
    """u(p1,p2,p3); broadcasts over array parameters into (..., 2, 2)."""
    p1, p2, p3 = np.broadcast_arrays(*(np.asarray(p, dtype=float) for p in (p1, p2, p3)))
    c, s = np.cos(p1 / 2), np.sin(p1 / 2)
    out = np.empty(p1.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = c
    out[..., 0, 1] = -np.exp(1j * p3) * s
    out[..., 1, 0] = np.exp(1j * p2) * s
    out[..., 1, 1] = np.exp(1j * (p2 + p3)) * c
    return out


def _rpp(pauli2: np.ndarray, p) -> np.ndarray:
    # exp(-i pi/2 p P) with P^2 = I
    p = np.asarray(p, dtype=float)[..., None, None]
    return np.cos(np.pi * p / 2) * np.eye(4) - 1j * np.sin(np.pi * p / 2) * pauli2


def can_matrix(px, py, pz) -> np.ndarray:
    """RXX(px pi) RYY(py pi) RZZ(pz pi); broadcasts like ``u3_matrix``."""
    return _rpp(_XX, px) @ _rpp(_YY, py) @ _rpp(_ZZ, pz)


def gate_matrix(g: GateSpec, params=()) -> np.ndarray:
    """Matrix of ``g``; ``params`` holds the gate's own parameters (last axis)."""
    params = np.asarray(params, dtype=float)
    if g.kind == U3:
        return u3_matrix(params[..., 0], params[..., 1], params[..., 2])
    if g.kind == CAN:
        return can_matrix(params[..., 0], params[..., 1], params[..., 2])
    if g.kind == CNOT:
        return _CNOT_M
    if g.kind == HADAMARD:
        return _H_M
    if g.kind == FIXED:
        return g.matrix
    w, v = g._eig
    phase = np.exp(-1j * params[..., 0, None] * w)
    return (v * phase[..., None, :]) @ v.conj().T


@dataclass
class ParamCircuit:
    num_qubits: int
    gates: list[GateSpec]
    input_qubits: tuple[int, ...]
    discards: list[tuple[int, tuple[int, ...]]] = field(default_factory=list)  # (gate position, qubits)
    num_params: int = 0
    init_range: tuple[float, float] = (0.0, 2 * np.pi)
    name: str = "circuit"

    def __post_init__(self):
        dropped: set[int] = set()
        marks = {}
        for pos, qs in self.discards:
            marks.setdefault(pos, []).extend(qs)
        for i, g in enumerate(self.gates + [None]):
            dropped.update(marks.get(i, []))
            if g is None:
                break
            if any(t in dropped for t in g.targets):
                raise ValueError(f"gate {i} touches a discarded qubit")
            if any(t >= self.num_qubits for t in g.targets):
                raise ValueError(f"gate {i} targets a qubit outside the register")
            if any(p >= self.num_params for p in g.param_slots):
                raise ValueError(f"gate {i} uses a parameter slot beyond num_params")

    @property
    def output_qubits(self) -> tuple[int, ...]:
        gone = {q for _, qs in self.discards for q in qs}
        touched = set(self.input_qubits) | {t for g in self.gates for t in g.targets}
        return tuple(sorted(touched - gone))

    def discarded_count(self) -> int:
        return sum(len(qs) for _, qs in self.discards)

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        lo, hi = self.init_range
        return rng.uniform(lo, hi, self.num_params)

    def to_json(self) -> str:
        return json.dumps(
            {
                "name": self.name,
                "num_qubits": self.num_qubits,
                "num_params": self.num_params,
                "input_qubits": list(self.input_qubits),
                "output_qubits": list(self.output_qubits),
                "gates": [g.to_dict() for g in self.gates],
                "discards": [{"position": p, "qubits": list(q)} for p, q in self.discards],
            },
            indent=2,
        )


# --- constructions ------------------------------------------------------------------

class _Builder:
    def __init__(self):
        self.gates: list[GateSpec] = []
        self.discards: list[tuple[int, tuple[int, ...]]] = []
        self.n = 0

    def add(self, kind, targets, matrix=None):
        k = _NPARAMS[kind]
        self.gates.append(GateSpec(kind, tuple(targets), tuple(range(self.n, self.n + k)), matrix))
        self.n += k

    def u_layer(self, qubits):
        for q in qubits:
            self.add(U3, (q,))

    def can_block(self, inputs, outputs):
        for j in outputs:
            for i in inputs:
                self.add(CAN, (i, j))

    def discard(self, qubits):
        self.discards.append((len(self.gates), tuple(qubits)))


def dqnn_param_count(widths: Sequence[int], plus_variant: bool = False) -> int:
    total = 3 * widths[-1]
    for a, b in zip(widths, widths[1:]):
        total += 3 * a * (1 + b)
        if plus_variant:
            total += 3 * (a + b) + 3 * a * b
    return total


def build_dqnn_circuit(topology: NetworkTopology | Sequence[int], plus_variant: bool = False) -> ParamCircuit:
    """u gates on each input-layer qubit, one CAN per (input, output) pair, discard.

    The plus variant inserts u gates on both layers and a second CAN block
    before the discard. A final u layer acts on the output qubits.
    """
    widths = topology.widths if isinstance(topology, NetworkTopology) else tuple(topology)
    offsets = np.concatenate([[0], np.cumsum(widths)]).astype(int)
    layer = [list(range(offsets[i], offsets[i + 1])) for i in range(len(widths))]
    b = _Builder()
    for l in range(1, len(widths)):
        ins, outs = layer[l - 1], layer[l]
        b.u_layer(ins)
        b.can_block(ins, outs)
        if plus_variant:
            b.u_layer(ins + outs)
            b.can_block(ins, outs)
        b.discard(ins)
    b.u_layer(layer[-1])
    name = "dqnn_nisq" + ("_plus" if plus_variant else "") + "_" + "-".join(map(str, widths))
    circ = ParamCircuit(int(offsets[-1]), b.gates, tuple(layer[0]), b.discards, b.n, (0.0, 2 * np.pi), name)
    assert circ.num_params == dqnn_param_count(widths, plus_variant)
    return circ


def dqnn_identity_params(widths: Sequence[int], plus_variant: bool = False) -> np.ndarray:
    """Parameters making the noiseless network copy inputs to outputs.

    Needs non-decreasing-then-matching widths: output qubit j takes input
    qubit j through a CAN(1/2,1/2,1/2) = SWAP up to phase.
    """
    circ = build_dqnn_circuit(widths, plus_variant)
    offsets = np.concatenate([[0], np.cumsum(widths)]).astype(int)
    omega = np.zeros(circ.num_params)
    seen_blocks: dict[tuple[int, int], int] = {}
    for g in circ.gates:
        if g.kind != CAN:
            continue
        i, j = g.targets
        key = (i, j)
        seen_blocks[key] = seen_blocks.get(key, 0) + 1
        li = int(np.searchsorted(offsets, i, side="right") - 1)
        if i - offsets[li] == j - offsets[li + 1] and seen_blocks[key] == 1:
            omega[list(g.param_slots)] = 0.5
    return omega


def build_qaoa_circuit(m: int, tau: int | None, rng: np.random.Generator) -> ParamCircuit:
    """prod_l exp(-i B k_l) exp(-i A p_l) with GUE generators A, B.

    Parameters are ordered p_1, k_1, p_2, k_2, ...; the default depth
    tau = 4^m / 2 gives 4^m parameters.
    """
    d = 2 ** m
    tau = d * d // 2 if tau is None else tau
    a, bm = random_hermitian(d, rng), random_hermitian(d, rng)
    b = _Builder()
    qubits = tuple(range(m))
    for _ in range(tau):
        b.add(EVOLUTION, qubits, a)
        b.add(EVOLUTION, qubits, bm)
    circ = ParamCircuit(m, b.gates, qubits, [], b.n, (-1.0, 1.0), f"qaoa_m{m}_tau{tau}")
    circ.generators = (a, bm)
    return circ


# --- noise ------------------------------------------------------------------------

LAMBDA_CNOT = 3.14e-2
LAMBDA_SX = 1.18e-3
LAMBDA_RZ = 0.0


@dataclass(frozen=True)
class NoiseModel:
    """Depolarising probability per logical gate kind, scaled by ``k``."""

    lambdas: dict = field(default_factory=dict)
    k: float = 1.0

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("noise scale must be >= 0")
        for kind, lam in self.lambdas.items():
            if not 0 <= lam <= 1 or self.k * lam > 1:
                raise ValueError(f"effective depolarising probability for {kind} outside [0, 1]")

    def probability(self, g: GateSpec) -> float:
        if g.kind in self.lambdas:
            lam = self.lambdas[g.kind]
        else:
            lam = self.lambdas.get("two_qubit" if len(g.targets) > 1 else "one_qubit", 0.0)
        return self.k * lam

    def scaled(self, k: float) -> NoiseModel:
        return NoiseModel(dict(self.lambdas), k)


def noise_defaults(k: float = 1.0) -> NoiseModel:
    """Two-qubit gates take the CNOT rate, single-qubit gates the SX rate."""
    return NoiseModel(
        {
            CAN: LAMBDA_CNOT,
            CNOT: LAMBDA_CNOT,
            U3: LAMBDA_SX,
            HADAMARD: LAMBDA_SX,
            "two_qubit": LAMBDA_CNOT,
            "one_qubit": LAMBDA_SX,
            "rz": LAMBDA_RZ,
        },
        k,
    )


# --- simulation -------------------------------------------------------------------

def _apply_left(t: np.ndarray, u: np.ndarray, pos: Sequence[int], n: int) -> np.ndarray:
    """Apply (P,K,K) or (K,K) gate ``u`` to qubits ``pos`` of the row index of ``t``.

    ``t`` has shape (P, B, 2**n, C) with C the column dimension (1 for kets).
    """
    p_, b_, _, c_ = t.shape
    k = len(pos)
    x = t.reshape((p_, b_) + (2,) * n + (c_,))
    x = np.moveaxis(x, [2 + q for q in pos], range(2, 2 + k))
    shp = x.shape
    x = x.reshape(p_, b_, 2 ** k, -1)
    x = np.einsum("pij,pbjr->pbir", u, x) if u.ndim == 3 else np.einsum("ij,pbjr->pbir", u, x)
    x = np.moveaxis(x.reshape(shp), range(2, 2 + k), [2 + q for q in pos])
    return x.reshape(p_, b_, 2 ** n, c_)


def _dagger(t: np.ndarray) -> np.ndarray:
    return np.swapaxes(t.conj(), -1, -2)


def _apply_unitary_density(rho, u, pos, n):
    x = _apply_left(rho, u, pos, n)
    return _dagger(_apply_left(_dagger(x), u, pos, n))


def _depolarize(rho: np.ndarray, pos: Sequence[int], n: int, lam: float) -> np.ndarray:
    p_, b_ = rho.shape[:2]
    k = len(pos)
    x = rho.reshape((p_, b_) + (2,) * (2 * n))
    rows = [2 + q for q in pos]
    cols = [2 + n + q for q in pos]
    x = np.moveaxis(x, rows + cols, list(range(2, 2 + 2 * k)))
    shp = x.shape
    r = 2 ** (n - k)
    x = x.reshape(p_, b_, 2 ** k, 2 ** k, r, r)
    red = np.einsum("pbkkrs->pbrs", x)
    mixed = np.einsum("kl,pbrs->pbklrs", np.eye(2 ** k) / 2 ** k, red)
    x = (1 - lam) * x + lam * mixed
    x = np.moveaxis(x.reshape(shp), list(range(2, 2 + 2 * k)), rows + cols)
    return x.reshape(p_, b_, 2 ** n, 2 ** n)


def _trace_out(rho: np.ndarray, pos: Sequence[int], n: int) -> np.ndarray:
    p_, b_ = rho.shape[:2]
    keep = [q for q in range(n) if q not in pos]
    x = rho.reshape((p_, b_) + (2,) * (2 * n))
    letters = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"
    rows = list(letters[:n])
    cols = [rows[q] if q in pos else letters[n + q] for q in range(n)]
    out = "".join(rows[q] for q in keep) + "".join(cols[q] for q in keep)
    x = np.einsum("..." + "".join(rows) + "".join(cols) + "->..." + out, x)
    d = 2 ** len(keep)
    return x.reshape(p_, b_, d, d)


def _tensor_zero(state: np.ndarray, density: bool) -> np.ndarray:
    """Append one |0> qubit as the new last qubit."""
    p_, b_, d, c = state.shape
    if density:
        out = np.zeros((p_, b_, d, 2, d, 2), dtype=complex)
        out[:, :, :, 0, :, 0] = state
        return out.reshape(p_, b_, 2 * d, 2 * d)
    out = np.zeros((p_, b_, d, 2, c), dtype=complex)
    out[:, :, :, 0, :] = state
    return out.reshape(p_, b_, 2 * d, c)


def simulate(
    circuit: ParamCircuit,
    omega: np.ndarray,
    inputs: np.ndarray,
    noise: NoiseModel | None = None,
) -> np.ndarray:
    """Run the circuit; returns output density matrices.

    ``omega`` is (num_params,) or (P, num_params); ``inputs`` is one pure
    state, a batch of pure states (B, d), or density matrices (B, d, d).
    The result is (B, d_out, d_out) for a single parameter vector and
    (P, B, d_out, d_out) for a batch. Output qubits are ordered by label.
    """
    omega = np.asarray(omega, dtype=float)
    single = omega.ndim == 1
    omega = omega[None, :] if single else omega
    if omega.shape[1] != circuit.num_params:
        raise ValueError(f"expected {circuit.num_params} parameters, got {omega.shape[1]}")
    inputs = np.asarray(inputs, dtype=complex)
    if inputs.ndim == 1:
        inputs = inputs[None, :]
    density = inputs.ndim == 3
    d_in = 2 ** len(circuit.input_qubits)
    if inputs.shape[1] != d_in:
        raise ValueError(f"input dimension must be {d_in}")
    p_ = omega.shape[0]
    if density:
        state = np.broadcast_to(inputs, (p_,) + inputs.shape).copy()
    else:
        state = np.broadcast_to(inputs[..., None], (p_,) + inputs.shape + (1,)).copy()
    live = list(circuit.input_qubits)
    marks: dict[int, list[int]] = {}
    for pos, qs in circuit.discards:
        marks.setdefault(pos, []).extend(qs)
    noisy = noise is not None and noise.k > 0

    def to_density(s):
        return s @ _dagger(s)

    for i, g in enumerate(circuit.gates + [None]):
        if i in marks:
            if not density:
                state = to_density(state)
                density = True
            pos = [live.index(q) for q in marks[i] if q in live]
            if pos:
                state = _trace_out(state, pos, len(live))
            live = [q for q in live if q not in marks[i]]
        if g is None:
            break
        for t in g.targets:
            if t not in live:
                state = _tensor_zero(state, density)
                live.append(t)
        lam = noise.probability(g) if noisy else 0.0
        if lam > 0 and not density:
            state = to_density(state)
            density = True
        u = gate_matrix(g, omega[:, list(g.param_slots)]) if g.param_slots else gate_matrix(g)
        pos = [live.index(t) for t in g.targets]
        n = len(live)
        if density:
            state = _apply_unitary_density(state, u, pos, n)
            if lam > 0:
                state = _depolarize(state, pos, n, lam)
        else:
            state = _apply_left(state, u, pos, n)
    if not density:
        state = to_density(state)
    # reorder remaining qubits by label
    order = sorted(range(len(live)), key=lambda k: live[k])
    if order != list(range(len(live))):
        n = len(live)
        x = state.reshape(state.shape[:2] + (2,) * (2 * n))
        x = np.transpose(x, [0, 1] + [2 + k for k in order] + [2 + n + k for k in order])
        state = x.reshape(state.shape)
    return state[0] if single else state


# --- SWAP test --------------------------------------------------------------------

def swap_test_signs(m: int) -> np.ndarray:
    """c = (1, 1, 1, -1)^{(x) m} over interleaved outcome bits."""
    c = np.array([1.0, 1.0, 1.0, -1.0])
    out = np.array([1.0])
    for _ in range(m):
        out = np.kron(out, c)
    return out


def swap_test_distribution(rho_joint: np.ndarray) -> np.ndarray:
    """Outcome probabilities of the destructive SWAP test.

    Reference qubits 0..m-1, test qubits m..2m-1. CNOT with control test
    qubit i and target reference qubit, then H on the test qubit. Outcomes
    are indexed by the interleaved bits (q_1, q_{m+1}, q_2, q_{m+2}, ...)
    where each pair lists (test bit, reference bit).
    """
    n = int(np.log2(rho_joint.shape[-1]))
    if n % 2 or 2 ** n != rho_joint.shape[-1]:
        raise ValueError("joint state must hold two equal registers")
    m = n // 2
    state = np.asarray(rho_joint, dtype=complex)[None, None]
    for i in range(m):
        state = _apply_unitary_density(state, _CNOT_M, [m + i, i], n)
        state = _apply_unitary_density(state, _H_M, [m + i], n)
    probs = np.clip(np.diagonal(state[0, 0]).real, 0.0, None)
    order = [q for i in range(m) for q in (m + i, i)]
    probs = np.transpose(probs.reshape((2,) * n), order).reshape(-1)
    return probs / probs.sum()


def destructive_swap_test(rho_joint: np.ndarray, shots: int, rng: np.random.Generator | None = None) -> float:
    """Estimate tr(rho_ref rho_test); ``shots=0`` returns the exact expectation."""
    probs = swap_test_distribution(rho_joint)
    signs = swap_test_signs(int(np.log2(len(probs))) // 2)
    if shots == 0:
        return float(probs @ signs)
    if rng is None:
        raise ValueError("sampling shots needs an rng")
    counts = rng.multinomial(shots, probs)
    return float(counts @ signs / shots)


# --- losses and training -------------------------------------------------------------

def _outputs_fidelity(out: np.ndarray, targets: np.ndarray) -> np.ndarray:
    return np.einsum("bi,...bij,bj->...b", targets.conj(), out, targets).real


def swap_test_loss(out: np.ndarray, targets: np.ndarray, shots: int, rng) -> float:
    vals = [destructive_swap_test(np.kron(projector(t), o), shots, rng) for t, o in zip(targets, out)]
    return float(np.mean(vals))


def circuit_loss(
    circuit: ParamCircuit,
    omega: np.ndarray,
    pairs: Sequence[TrainingPair],
    shots: int = 0,
    noise: NoiseModel | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Mean SWAP-test fidelity between outputs and targets.

    With ``shots=0`` the exact expectation equals ``<phi|rho|phi>``, which
    is evaluated directly.
    """
    inputs, targets = stack_pairs(pairs)
    out = simulate(circuit, omega, inputs, noise)
    if shots == 0:
        return float(np.mean(_outputs_fidelity(out, targets)))
    return swap_test_loss(out, targets, shots, rng)


def finite_diff_gradient(loss_fn: Callable[[np.ndarray], float], omega: np.ndarray, eps: float) -> np.ndarray:
    """Central differences, 2 * len(omega) loss evaluations."""
    omega = np.asarray(omega, dtype=float)
    grad = np.empty_like(omega)
    for k in range(len(omega)):
        e = np.zeros_like(omega)
        e[k] = eps
        grad[k] = (loss_fn(omega + e) - loss_fn(omega - e)) / (2 * eps)
    return grad


def stencil(omega: np.ndarray, eps: float) -> np.ndarray:
    """Rows omega + eps e_k for k = 0..n-1, then omega - eps e_k."""
    n = len(omega)
    shifts = np.eye(n) * eps
    return np.concatenate([omega + shifts, omega - shifts])


class BatchedLoss:
    """Loss over many parameter vectors in one simulation pass."""

    def __init__(self, circuit, pairs, shots=0, noise=None):
        self.circuit = circuit
        self.inputs, self.targets = stack_pairs(pairs)
        self.shots = shots
        self.noise = noise

    def __call__(self, omegas: np.ndarray, rngs: Sequence[np.random.Generator] | None = None) -> np.ndarray:
        out = simulate(self.circuit, np.atleast_2d(omegas), self.inputs, self.noise)
        if self.shots == 0:
            return _outputs_fidelity(out, self.targets).mean(axis=1)
        return np.array([swap_test_loss(o, self.targets, self.shots, r) for o, r in zip(out, rngs)])


def _sub_rng(base: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(base, spawn_key=key)))


def batched_gradient(loss: BatchedLoss, omega: np.ndarray, eps: float, base_seed: int = 0, epoch: int = 0) -> np.ndarray:
    """Same stencil as ``finite_diff_gradient``, evaluated in one batch.

    Shot sampling for parameter k and sign s uses the sub-stream keyed
    (epoch, k, s).
    """
    n = len(omega)
    rngs = None
    if loss.shots:
        rngs = [_sub_rng(base_seed, epoch, k, 0) for k in range(n)] + [_sub_rng(base_seed, epoch, k, 1) for k in range(n)]
    vals = loss(stencil(omega, eps), rngs)
    return (vals[:n] - vals[n:]) / (2 * eps)


@dataclass(frozen=True)
class CircuitHyper:
    eps: float = 0.05
    eta: float = 0.2
    epochs: int = 1000

    def __post_init__(self):
        if self.eps <= 0 or self.eta < 0 or self.epochs < 0:
            raise ValueError("need eps > 0, eta >= 0 and epochs >= 0")


def train_circuit(
    circuit: ParamCircuit,
    pairs: Sequence[TrainingPair],
    hyper: CircuitHyper,
    shots: int = 0,
    noise: NoiseModel | None = None,
    rng: np.random.Generator | None = None,
    validation_pairs: Sequence[TrainingPair] | None = None,
    identity: tuple[Sequence[TrainingPair], np.ndarray] | None = None,
    omega0: np.ndarray | None = None,
    record_every: int = 1,
) -> tuple[np.ndarray, LossHistory]:
    """Gradient ascent omega <- omega + eta * grad L with central differences.

    ``identity`` is (pairs with Y = I, identity-realising parameters); its
    loss is recorded as ``identity_loss`` and does not change in training.
    """
    if rng is None:
        raise ValueError("train_circuit needs an rng")
    omega = circuit.init_params(rng) if omega0 is None else np.array(omega0, dtype=float)
    base_seed = int(rng.integers(2 ** 63))
    loss = BatchedLoss(circuit, pairs, shots, noise)
    val = BatchedLoss(circuit, validation_pairs, shots, noise) if validation_pairs else None
    columns = ["training_loss"]
    if val is not None:
        columns.append("validation_loss")
    id_value = None
    if identity is not None:
        columns.append("identity_loss")
        id_loss = BatchedLoss(circuit, identity[0], shots, noise)
        id_value = float(id_loss(np.atleast_2d(identity[1]), [_sub_rng(base_seed, 2 ** 31, 0, 2)])[0])
    hist = LossHistory(tuple(columns))

    def record(epoch):
        key = [_sub_rng(base_seed, epoch, 2 ** 31, 0)]
        values = {"training_loss": float(loss(omega[None], key)[0])}
        if val is not None:
            values["validation_loss"] = float(val(omega[None], [_sub_rng(base_seed, epoch, 2 ** 31, 1)])[0])
        if id_value is not None:
            values["identity_loss"] = id_value
        hist.append(epoch, **values)

    record(0)
    for epoch in range(1, hyper.epochs + 1):
        omega = omega + hyper.eta * batched_gradient(loss, omega, hyper.eps, base_seed, epoch)
        if epoch % record_every == 0 or epoch == hyper.epochs:
            record(epoch)
    return omega, hist
