"""Semi-supervised training with a graph-based loss.

The graph loss sums the Hilbert-Schmidt distance between the network
outputs of adjacent vertices over all ordered vertex pairs, so each
undirected edge counts twice. Training maximises
``L_SV + gamma * L_G`` with ``gamma <= 0``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import dqnn
from .dqnn import DQNN, Hyperparams, TrainingPair
from .history import LossHistory
from .quantum_core import (
    UPDATE_HERMITIAN_TOL,
    fidelity_pure_mixed,
    haar_states,
    hilbert_schmidt_distance,
    is_hermitian,
    normalize,
    projector,
)


def validate_adjacency(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("adjacency must be square")
    if not np.isin(a, (0, 1)).all():
        raise ValueError("adjacency entries must be 0 or 1")
    if not (a == a.T).all():
        raise ValueError("adjacency must be symmetric")
    if np.any(np.diag(a)):
        raise ValueError("adjacency must have a zero diagonal")
    return a.astype(int)


def adjacency_from_edges(n: int, edges) -> np.ndarray:
    a = np.zeros((n, n), dtype=int)
    for w, x in edges:
        a[w, x] = a[x, w] = 1
    return validate_adjacency(a)


def path_adjacency(n: int) -> np.ndarray:
    return adjacency_from_edges(n, [(i, i + 1) for i in range(n - 1)])


@dataclass
class GraphTrainingSet:
    """Vertices ordered so the first ``num_supervised`` carry training targets.

    ``inputs`` are pure states (rows) or density matrices (stacked);
    ``targets`` holds one pure state per vertex, the tail being the
    held-out validation targets.
    """

    inputs: np.ndarray
    targets: np.ndarray
    adjacency: np.ndarray
    num_supervised: int
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        self.adjacency = validate_adjacency(self.adjacency)
        n = len(self.inputs)
        if self.adjacency.shape[0] != n or len(self.targets) != n:
            raise ValueError("inputs, targets and adjacency must cover the same vertices")
        if not 1 <= self.num_supervised <= n:
            raise ValueError("need 1 <= S <= N supervised vertices")

    @property
    def n(self) -> int:
        return len(self.inputs)

    @property
    def input_states(self) -> np.ndarray:
        x = np.asarray(self.inputs)
        return x if x.ndim == 3 else projector(x)

    @property
    def supervised_targets(self) -> np.ndarray:
        return self.targets[: self.num_supervised]

    @property
    def validation_targets(self) -> np.ndarray:
        return self.targets[self.num_supervised:]

    def supervised_pairs(self) -> list[TrainingPair]:
        return [TrainingPair(self.inputs[i], self.targets[i]) for i in range(self.num_supervised)]

    def reordered(self, supervised: Sequence[int]) -> GraphTrainingSet:
        """Move ``supervised`` vertices to the front, keeping the rest in order."""
        supervised = list(supervised)
        if len(set(supervised)) != len(supervised):
            raise ValueError("supervised vertices must be distinct")
        order = supervised + [i for i in range(self.n) if i not in supervised]
        labels = tuple(self.labels[i] for i in order) if self.labels else None
        return GraphTrainingSet(
            self.inputs[order], self.targets[order], self.adjacency[np.ix_(order, order)], len(supervised), labels
        )


def _select(base: GraphTrainingSet, supervised, default, rng) -> GraphTrainingSet:
    if supervised is None:
        supervised = default
    elif isinstance(supervised, (int, np.integer)):
        if rng is None:
            raise ValueError("a random supervised subset needs an rng")
        supervised = list(rng.choice(base.n, size=int(supervised), replace=False))
    return base.reordered([int(i) for i in supervised])


def _mixed_inputs(inputs: np.ndarray) -> bool:
    return np.asarray(inputs).ndim == 3


# --- losses -------------------------------------------------------------------

def outputs(net: DQNN, gset: GraphTrainingSet) -> np.ndarray:
    return dqnn.output(net, gset.input_states)


def graph_loss_from_outputs(out: np.ndarray, adjacency: np.ndarray) -> float:
    w, x = np.nonzero(adjacency)
    if len(w) == 0:
        return 0.0
    return float(np.sum(adjacency[w, x] * hilbert_schmidt_distance(out[w], out[x])))


def graph_loss(net: DQNN, gset: GraphTrainingSet) -> float:
    return graph_loss_from_outputs(outputs(net, gset), gset.adjacency)


def supervised_loss(net: DQNN, gset: GraphTrainingSet) -> float:
    out = outputs(net, gset)[: gset.num_supervised]
    return float(np.mean(fidelity_pure_mixed(gset.supervised_targets, out)))


def unsupervised_loss(net: DQNN, gset: GraphTrainingSet) -> float:
    """Validation loss over the held-out vertices; nan if there are none."""
    if gset.num_supervised == gset.n:
        return float("nan")
    out = outputs(net, gset)[gset.num_supervised:]
    return float(np.mean(fidelity_pure_mixed(gset.validation_targets, out)))


def combined_loss(net: DQNN, gset: GraphTrainingSet, gamma: float) -> float:
    return supervised_loss(net, gset) + gamma * graph_loss(net, gset)


# --- update matrices --------------------------------------------------------------

def graph_commutator_traces(net: DQNN, gset: GraphTrainingSet) -> list[list[np.ndarray]]:
    """tr_rest of sum over ordered edges of the difference-state commutators."""
    w, x = np.nonzero(gset.adjacency)
    wts = gset.adjacency[w, x].astype(float)
    fwd = dqnn.feed_forward(net, gset.input_states)
    if len(w) == 0:
        zero = [np.zeros((2 ** (net.widths[l - 1] + 1),) * 2, dtype=complex) for l in range(1, len(net.widths))]
        return [[z] * net.widths[l] for l, z in enumerate(zero, start=1)]
    diff_fwd = [(f[w] - f[x]) * wts[:, None, None] for f in fwd]
    diff_bwd = dqnn.back_propagate(net, fwd[-1][w] - fwd[-1][x], operator=True)
    return [dqnn.commutator_traces(net, l, diff_fwd[l - 1], diff_bwd[l]) for l in range(1, len(net.widths))]


def graph_prefactor(net: DQNN, l: int, eta: float) -> complex:
    return 2 ** (net.widths[l - 1] + 1) * 1j * eta


def graph_update_matrices(net: DQNN, gset: GraphTrainingSet, eta: float) -> list[list[np.ndarray]]:
    traces = graph_commutator_traces(net, gset)
    return [[graph_prefactor(net, l, eta) * t for t in layer] for l, layer in enumerate(traces, start=1)]


def graph_update_matrix(net: DQNN, l: int, j: int, gset: GraphTrainingSet, eta: float) -> np.ndarray:
    return graph_update_matrices(net, gset, eta)[l - 1][j - 1]


def combined_update_matrices(net: DQNN, gset: GraphTrainingSet, eta: float, gamma: float) -> list[list[np.ndarray]]:
    """K_SV + gamma * K_G; the graph term is skipped when gamma is zero."""
    k_sv = dqnn.update_matrices(net, gset.supervised_pairs(), eta)
    if gamma == 0:
        return k_sv
    k_g = graph_update_matrices(net, gset, eta)
    ks = [[a + gamma * b for a, b in zip(la, lb)] for la, lb in zip(k_sv, k_g)]
    for layer in ks:
        for k in layer:
            if not is_hermitian(k, UPDATE_HERMITIAN_TOL * max(1.0, np.abs(k).max())):
                raise ArithmeticError("combined update matrix lost Hermiticity")
    return ks


def combined_loss_derivative(net: DQNN, gset: GraphTrainingSet, eta: float, gamma: float) -> float:
    """d/ds of L_SV + gamma L_G along the combined update direction."""
    s = gset.num_supervised
    ks = combined_update_matrices(net, gset, eta, gamma)
    sv = dqnn.directional_derivative(dqnn.all_commutator_traces(net, gset.supervised_pairs()), ks, 1j / s)
    g = dqnn.directional_derivative(graph_commutator_traces(net, gset), ks, 2j)
    return sv + gamma * g


def train_graph(
    net: DQNN, gset: GraphTrainingSet, hyper: Hyperparams, gamma: float, record_every: int = 1
) -> tuple[DQNN, LossHistory]:
    if gamma > 0:
        raise ValueError("gamma must be <= 0")
    hist = LossHistory(("training_loss", "graph_loss", "validation_loss"))

    def record(epoch, current):
        out = outputs(current, gset)
        s = gset.num_supervised
        val = float(np.mean(fidelity_pure_mixed(gset.validation_targets, out[s:]))) if s < gset.n else float("nan")
        hist.append(
            epoch,
            training_loss=float(np.mean(fidelity_pure_mixed(gset.supervised_targets, out[:s]))),
            graph_loss=graph_loss_from_outputs(out, gset.adjacency),
            validation_loss=val,
        )

    record(0, net)
    for epoch in range(1, hyper.epochs + 1):
        net = dqnn.apply_updates(net, combined_update_matrices(net, gset, hyper.eta, gamma), hyper.eps)
        if epoch % record_every == 0 or epoch == hyper.epochs:
            record(epoch, net)
    return net, hist


# --- datasets -------------------------------------------------------------------

CLUSTER_EDGES = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3), (3, 7), (7, 4), (4, 5), (4, 6), (5, 6)]
CLUSTER_AMPLITUDES = [
    (1.0, 0.0),
    (0.997, 0.071),
    (0.988, 0.152),
    (0.97, 0.243),
    (0.152, 0.988),
    (0.071, 0.997),
    (0.0, 1.0),
    (0.659, 0.753),
]
# default labelled vertices v2, v4, v5
CLUSTER_SUPERVISED = (1, 3, 4)

LINE_AMPLITUDES = [
    (1.0, 0.0),
    (0.99, 0.21),
    (0.96, 0.28),
    (0.89, 0.45),
    (0.78, 0.62),
    (0.62, 0.78),
    (0.45, 0.89),
    (0.27, 0.96),
    (0.12, 0.99),
    (0.0, 1.0),
]
LINE_SUPERVISED = (1, 2, 7)


def _targets(amplitudes) -> np.ndarray:
    return np.array([normalize(np.array(a, dtype=complex)) for a in amplitudes])


def connected_clusters_dataset(rng: np.random.Generator, supervised=None, input_qubits: int = 3) -> GraphTrainingSet:
    """Eight vertices: a 4-clique and a 3-clique bridged through v8.

    ``supervised`` is a list of vertex indices, an int for a random subset
    of that size, or None for the default labelled vertices.
    """
    base = GraphTrainingSet(
        haar_states(2 ** input_qubits, 8, rng),
        _targets(CLUSTER_AMPLITUDES),
        adjacency_from_edges(8, CLUSTER_EDGES),
        8,
    )
    return _select(base, supervised, CLUSTER_SUPERVISED, rng)


def line_targets(n: int) -> np.ndarray:
    if n == 10:
        return _targets(LINE_AMPLITUDES)
    theta = np.linspace(0.0, np.pi / 2, n)
    return np.stack([np.cos(theta), np.sin(theta)], axis=1).astype(complex)


def line_dataset(n: int, rng: np.random.Generator, supervised=None, input_qubits: int = 3) -> GraphTrainingSet:
    """Path graph whose targets walk from |0> to |1>."""
    if n < 2:
        raise ValueError("a line needs at least two vertices")
    base = GraphTrainingSet(haar_states(2 ** input_qubits, n, rng), line_targets(n), path_adjacency(n), n)
    default = LINE_SUPERVISED if n == 10 else (0, n - 1)
    return _select(base, supervised, default, rng)


def hamming(u: Sequence[int], v: Sequence[int]) -> int:
    return int(np.sum(np.asarray(u) != np.asarray(v)))


def homophily_probability(d: float, h: float, b: float) -> float:
    return 1.0 / (1.0 + (d / b) ** h)


def homophily_graph(labels, h: float, b: float, rng: np.random.Generator) -> np.ndarray:
    """Bernoulli edges with probability 1/(1 + (d/b)^h), d the Hamming distance."""
    labels = [np.asarray(v, dtype=int) for v in labels]
    if not labels:
        raise ValueError("labels must be non-empty")
    if len({len(v) for v in labels}) != 1:
        raise ValueError("label vectors must have equal length")
    n = len(labels)
    a = np.zeros((n, n), dtype=int)
    for w in range(n):
        for x in range(w + 1, n):
            if rng.random() < homophily_probability(hamming(labels[w], labels[x]), h, b):
                a[w, x] = a[x, w] = 1
    return a


def label_state(bits: str) -> np.ndarray:
    """Equal superposition of |k-1> over the set labels k (1-based bit positions)."""
    ks = [i for i, c in enumerate(bits.strip()) if c == "1"]
    if not ks:
        raise ValueError("label bitstring selects no label")
    n = max(1, (len(bits.strip()) - 1).bit_length())
    psi = np.zeros(2 ** n, dtype=complex)
    psi[ks] = 1.0
    return normalize(psi)


def read_embeddings(path: str | Path) -> tuple[list[str], np.ndarray, list[str | None]]:
    """CSV rows of ``vertex id, e1, e2, e3, e4[, label bitstring]``; header optional."""
    ids, vecs, labels = [], [], []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or not row[0].strip():
                continue
            try:
                vec = [float(v) for v in row[1:5]]
            except ValueError:
                if not ids:
                    continue  # header
                raise ValueError(f"malformed embedding row: {row!r}")
            if len(vec) != 4:
                raise ValueError(f"embedding row needs four reals: {row!r}")
            ids.append(row[0].strip())
            vecs.append(vec)
            labels.append(row[5].strip() if len(row) > 5 and row[5].strip() else None)
    if not ids:
        raise ValueError("embedding file is empty")
    return ids, np.array(vecs), labels


def read_labels(path: str | Path) -> dict[str, str]:
    """CSV rows of ``vertex id, label bitstring``; header optional."""
    out = {}
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if len(row) < 2 or not set(row[1].strip()) <= {"0", "1"} or not row[1].strip():
                continue
            out[row[0].strip()] = row[1].strip()
    return out


def read_edges(path: str | Path, ids: Sequence[str]) -> np.ndarray:
    index = {v: i for i, v in enumerate(ids)}
    edges = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if len(row) < 2 or row[0].strip() not in index:
                continue
            edges.append((index[row[0].strip()], index[row[1].strip()]))
    return adjacency_from_edges(len(ids), edges)


def deepwalk_dataset(
    embedding_file: str | Path,
    labels_file: str | Path | None = None,
    edges_file: str | Path | None = None,
    supervised=None,
    rng: np.random.Generator | None = None,
    h: float = 2.0,
    b: float = 1.0,
) -> GraphTrainingSet:
    """Inputs from normalised embeddings, targets from label superpositions.

    Without ``edges_file`` the adjacency is drawn from the homophily model
    over the label bitstrings, which then needs ``rng``.
    """
    ids, vecs, labels = read_embeddings(embedding_file)
    if labels_file is not None:
        table = read_labels(labels_file)
        labels = [table.get(v, lab) for v, lab in zip(ids, labels)]
    if any(lab is None for lab in labels):
        raise ValueError("every vertex needs a label bitstring")
    norms = np.linalg.norm(vecs, axis=1)
    if np.any(norms == 0):
        raise ValueError("zero embedding vector")
    inputs = (vecs / norms[:, None]).astype(complex)
    targets = np.stack([label_state(lab) for lab in labels])
    if edges_file is not None:
        adj = read_edges(edges_file, ids)
    else:
        if rng is None:
            raise ValueError("a homophily graph needs an rng")
        adj = homophily_graph([[int(c) for c in lab] for lab in labels], h, b, rng)
    base = GraphTrainingSet(inputs, targets, adj, len(ids), tuple(ids))
    return _select(base, supervised, list(range(len(ids))), rng)
