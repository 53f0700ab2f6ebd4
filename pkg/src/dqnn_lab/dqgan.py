"""Adversarial training of a generator DQNN against a discriminator DQNN.

Both networks live in one combined DQNN: the first ``g`` transitions form
the generator and the rest the discriminator, whose single output qubit
is read as a verdict (|1> for "training data", |0> for "generated").
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dqnn
from .dqnn import DQNN, NetworkTopology
from .history import LossHistory, rows_to_csv
from .quantum_core import haar_states, hermitian_exp, normalize, projector

GENERATED = "generated"
TRAINING = "training"
DISCRIMINATOR = "discriminator"
GENERATOR = "generator"

_P0 = np.array([[1, 0], [0, 0]], dtype=complex)
_P1 = np.array([[0, 0], [0, 1]], dtype=complex)


@dataclass
class DQGAN:
    net: DQNN
    g: int

    def __post_init__(self):
        if not 1 <= self.g < self.net.topology.num_transitions:
            raise ValueError("need at least one generator and one discriminator transition")
        if self.net.widths[-1] != 1:
            raise ValueError("the discriminator must end in a single verdict qubit")

    @property
    def generator(self) -> DQNN:
        w = self.net.widths[: self.g + 1]
        return DQNN(NetworkTopology(w, self.net.topology.dim_cap), self.net.unitaries[: self.g])

    @property
    def discriminator(self) -> DQNN:
        w = self.net.widths[self.g:]
        return DQNN(NetworkTopology(w, self.net.topology.dim_cap), self.net.unitaries[self.g:])

    @property
    def latent_dim(self) -> int:
        return 2 ** self.net.widths[0]

    @property
    def data_dim(self) -> int:
        return 2 ** self.net.widths[self.g]


def from_networks(generator: DQNN, discriminator: DQNN) -> DQGAN:
    if generator.widths[-1] != discriminator.widths[0]:
        raise ValueError("generator output width must match discriminator input width")
    widths = generator.widths + discriminator.widths[1:]
    topo = NetworkTopology(widths, max(generator.topology.dim_cap, discriminator.topology.dim_cap))
    return DQGAN(DQNN(topo, generator.unitaries + discriminator.unitaries), generator.topology.num_transitions)


def init_random(generator_widths, discriminator_widths, rng: np.random.Generator) -> DQGAN:
    if generator_widths[-1] != discriminator_widths[0]:
        raise ValueError("generator output width must match discriminator input width")
    widths = tuple(generator_widths) + tuple(discriminator_widths[1:])
    return DQGAN(dqnn.init_random(NetworkTopology(widths), rng), len(generator_widths) - 1)


# --- channels -------------------------------------------------------------------

def generate(gan: DQGAN, latent: np.ndarray) -> np.ndarray:
    """Generator output for pure latent states (batched rows)."""
    rho = projector(np.asarray(latent, dtype=complex))
    for l in range(1, gan.g + 1):
        rho = dqnn.layer_forward(gan.net, l, rho)
    return rho


def discriminate(gan: DQGAN, rho: np.ndarray) -> np.ndarray:
    for l in range(gan.g + 1, len(gan.net.widths)):
        rho = dqnn.layer_forward(gan.net, l, rho)
    return rho


def gan_forward(gan: DQGAN, source: np.ndarray, branch: str) -> np.ndarray:
    """Verdict state for a latent state (generated) or a data state (training)."""
    source = np.asarray(source, dtype=complex)
    expected = gan.latent_dim if branch == GENERATED else gan.data_dim
    if branch not in (GENERATED, TRAINING):
        raise ValueError(f"unknown branch {branch!r}")
    if source.shape[-1] != expected:
        raise ValueError(f"{branch} branch expects dimension {expected}")
    if branch == GENERATED:
        return discriminate(gan, generate(gan, source))
    return discriminate(gan, projector(source))


def _verdict(rho: np.ndarray, proj: np.ndarray) -> np.ndarray:
    return np.einsum("ij,...ji->...", proj, rho).real


def discriminator_loss(gan: DQGAN, inputs: np.ndarray, training_batch: np.ndarray) -> float:
    fake = gan_forward(gan, inputs, GENERATED)
    real = gan_forward(gan, training_batch, TRAINING)
    return float(np.mean(_verdict(fake, _P0)) + np.mean(_verdict(real, _P1)))


def generator_loss(gan: DQGAN, inputs: np.ndarray) -> float:
    return float(np.mean(_verdict(gan_forward(gan, inputs, GENERATED), _P1)))


# --- updates --------------------------------------------------------------------

def _zero_ks(net: DQNN) -> list[list[np.ndarray]]:
    w = net.widths
    return [[np.zeros((2 ** (w[l - 1] + 1),) * 2, dtype=complex) for _ in range(w[l])] for l in range(1, len(w))]


def gan_update_matrices(
    gan: DQGAN, phase: str, inputs: np.ndarray, training_batch: np.ndarray | None, eta: float
) -> list[list[np.ndarray]]:
    """K for every perceptron; only the active phase's layers are nonzero."""
    net = gan.net
    inputs = np.asarray(inputs, dtype=complex)
    s = len(inputs)
    ks = _zero_ks(net)
    verdict_back = np.broadcast_to(_P1, (s, 2, 2))
    if phase == GENERATOR:
        fwd = dqnn.feed_forward(net, projector(inputs))
        bwd = dqnn.back_propagate(net, verdict_back, operator=True)
        layers = range(1, gan.g + 1)
    elif phase == DISCRIMINATOR:
        if training_batch is None or len(training_batch) != s:
            raise ValueError("discriminator phase needs a training batch of the same size")
        fake = generate(gan, inputs)
        diff = projector(np.asarray(training_batch, dtype=complex)) - fake
        fwd = [None] * (gan.g + 1)
        fwd[gan.g] = diff
        for l in range(gan.g + 1, len(net.widths)):
            fwd.append(dqnn.layer_forward(net, l, fwd[-1]))
        bwd = dqnn.back_propagate(net, verdict_back, operator=True)
        layers = range(gan.g + 1, len(net.widths))
    else:
        raise ValueError(f"unknown phase {phase!r}")
    for l in layers:
        traces = dqnn.commutator_traces(net, l, fwd[l - 1], bwd[l])
        ks[l - 1] = [dqnn.update_prefactor(net, l, eta, s) * t for t in traces]
    return ks


def phase_layers(gan: DQGAN, phase: str) -> range:
    return range(1, gan.g + 1) if phase == GENERATOR else range(gan.g + 1, len(gan.net.widths))


def apply_phase(gan: DQGAN, ks, eps: float, phase: str) -> DQGAN:
    """Update the active layers; frozen unitaries are carried over untouched."""
    active = set(phase_layers(gan, phase))
    new = []
    for l, (k_layer, u_layer) in enumerate(zip(ks, gan.net.unitaries), start=1):
        if l in active:
            new.append([hermitian_exp(k, eps) @ u for k, u in zip(k_layer, u_layer)])
        else:
            new.append(u_layer)
    return DQGAN(DQNN(gan.net.topology, new), gan.g)


def phase_loss_derivative(gan: DQGAN, phase: str, inputs, training_batch, eta: float) -> float:
    """Analytic first-order change of the phase's own loss along its update."""
    ks = gan_update_matrices(gan, phase, inputs, training_batch, eta)
    s = len(inputs)
    total = 0.0
    for l in phase_layers(gan, phase):
        pref = dqnn.update_prefactor(gan.net, l, eta, s)
        for k in ks[l - 1]:
            total += float((1j / s * np.trace((k / pref) @ k)).real)
    return total


# --- data and validation ------------------------------------------------------------

@dataclass
class StatePool:
    states: np.ndarray
    supervised_count: int
    name: str = "pool"

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=complex)
        norms = np.linalg.norm(self.states, axis=1)
        if np.max(np.abs(norms - 1)) > 1e-12:
            raise ValueError("pool states must have unit norm")
        if not 1 <= self.supervised_count <= len(self.states):
            raise ValueError("supervised count out of range")

    @property
    def n(self) -> int:
        return len(self.states)

    @property
    def supervised(self) -> np.ndarray:
        return self.states[: self.supervised_count]


def _line_state(a: float, b: float) -> np.ndarray:
    return normalize(np.array([a, b], dtype=complex))


def data_line(n: int) -> StatePool:
    """((N-x)|0> + (x-1)|1>) / norm for x = 1..N, in index order."""
    return StatePool(np.stack([_line_state(n - x, x - 1) for x in range(1, n + 1)]), n, f"line{n}")


def data_clusters(n: int, connected: bool = False, verbatim_formula: bool = False) -> StatePool:
    """Two polar clusters of n/2 states sampled from a 2n-point line.

    The pool takes ``x = 1..n/2`` and ``x = 3n/2+1..2n`` of
    ``((2n - x)|0> + (x - 1)|1>) / norm``. With ``verbatim_formula`` the
    first coefficient is the constant ``2n - 1`` instead. ``connected``
    replaces the last state of the first cluster by |+>.
    """
    if n < 2 or n % 2:
        raise ValueError("cluster pools need an even size >= 2")
    xs = list(range(1, n // 2 + 1)) + list(range(3 * n // 2 + 1, 2 * n + 1))
    states = [
        _line_state((2 * n - 1) if verbatim_formula else (2 * n - x), x - 1)
        for x in xs
    ]
    if connected:
        states[n // 2 - 1] = _line_state(1.0, 1.0)
    name = ("cluster+" if connected else "cluster") + str(n)
    return StatePool(np.stack(states), n, name)


def shuffled(pool: StatePool, supervised_count: int, rng: np.random.Generator) -> StatePool:
    """Random permutation; the first ``supervised_count`` become training states."""
    order = rng.permutation(pool.n)
    return StatePool(pool.states[order], supervised_count, pool.name)


def fidelity_table(gan: DQGAN, pool: StatePool, latent: np.ndarray) -> np.ndarray:
    """F[i, x] = <phi_x| G(psi_i) |phi_x>."""
    out = generate(gan, latent)
    return np.einsum("xa,iab,xb->ix", pool.states.conj(), out, pool.states).real


def validation_loss_gan(gan: DQGAN, pool: StatePool, v: int | None = None, rng=None, latent=None) -> float:
    """Mean over V latent samples of the best fidelity to any pool state."""
    if latent is None:
        latent = haar_states(gan.latent_dim, v, rng)
    return float(np.mean(fidelity_table(gan, pool, latent).max(axis=1)))


@dataclass
class DiversityHistogram:
    supervised: np.ndarray  # counts for pool indices that were training states
    validation: np.ndarray  # counts for the remaining indices

    @property
    def counts(self) -> np.ndarray:
        return self.supervised + self.validation

    @property
    def distinct(self) -> int:
        return int(np.count_nonzero(self.counts))

    def rows(self):
        return [(i + 1, int(s), int(v)) for i, (s, v) in enumerate(zip(self.supervised, self.validation))]

    def to_csv(self) -> str:
        return rows_to_csv(("index", "supervised_count", "validation_count"), self.rows())


def diversity_histogram(gan: DQGAN, pool: StatePool, samples: int, rng: np.random.Generator) -> DiversityHistogram:
    """Assign each generated sample to its most faithful pool state.

    ``argmax`` returns the first maximum, so ties go to the lowest index.
    """
    table = fidelity_table(gan, pool, haar_states(gan.latent_dim, samples, rng))
    counts = np.bincount(table.argmax(axis=1), minlength=pool.n)
    mask = np.arange(pool.n) < pool.supervised_count
    return DiversityHistogram(np.where(mask, counts, 0), np.where(mask, 0, counts))


# --- training loop ------------------------------------------------------------------

@dataclass(frozen=True)
class GanHyper:
    epochs: int = 1000
    r_d: int = 1
    r_g: int = 1
    eps: float = 0.01
    eta_d: float = 1.0
    eta_g: float = 1.0
    batch: int = 10
    validation_samples: int = 100
    stop_at_validation: float | None = None  # stop once L_V reaches this
    diversity_floor: int | None = None  # stop once fewer pool states are hit
    diversity_every: int = 50
    diversity_samples: int = 100

    def __post_init__(self):
        counts = (self.epochs, self.r_d, self.r_g, self.batch, self.validation_samples,
                  self.diversity_every, self.diversity_samples)
        if min(counts) < 1:
            raise ValueError("counts must be positive")
        if self.eps <= 0 or self.eta_d <= 0 or self.eta_g <= 0:
            raise ValueError("step size and learning rates must be positive")


@dataclass
class GanRun:
    gan: DQGAN
    history: LossHistory
    snapshots: dict[int, DQGAN] = field(default_factory=dict)


def train_gan(gan: DQGAN, pool: StatePool, hyper: GanHyper, rng: np.random.Generator, keep_snapshots: bool = False) -> GanRun:
    """Alternating updates per epoch: r_D discriminator steps, then r_G generator steps.

    Draw order per epoch: the training batch, then fresh latent states for
    each update call, then one latent batch for the recorded losses. The
    validation latent states are drawn once before the first epoch.

    The diversity floor check draws from a child stream, so enabling it
    leaves the training draws unchanged.
    """
    if hyper.batch > pool.supervised_count:
        raise ValueError("batch larger than the supervised pool")
    hist = LossHistory(("loss_d", "loss_g", "loss_v"))
    val_latent = haar_states(gan.latent_dim, hyper.validation_samples, rng)
    run = GanRun(gan, hist)
    div_rng = np.random.default_rng(rng.bit_generator.seed_seq.spawn(1)[0])

    def record(epoch, current, batch):
        latent = haar_states(current.latent_dim, hyper.batch, rng)
        hist.append(
            epoch,
            loss_d=discriminator_loss(current, latent, batch),
            loss_g=generator_loss(current, latent),
            loss_v=validation_loss_gan(current, pool, latent=val_latent),
        )
        if keep_snapshots:
            run.snapshots[epoch] = current

    record(0, gan, pool.supervised[: hyper.batch])
    for epoch in range(1, hyper.epochs + 1):
        idx = rng.choice(pool.supervised_count, size=hyper.batch, replace=False)
        batch = pool.supervised[np.sort(idx)]
        for _ in range(hyper.r_d):
            latent = haar_states(gan.latent_dim, hyper.batch, rng)
            ks = gan_update_matrices(gan, DISCRIMINATOR, latent, batch, hyper.eta_d)
            gan = apply_phase(gan, ks, hyper.eps, DISCRIMINATOR)
        for _ in range(hyper.r_g):
            latent = haar_states(gan.latent_dim, hyper.batch, rng)
            ks = gan_update_matrices(gan, GENERATOR, latent, None, hyper.eta_g)
            gan = apply_phase(gan, ks, hyper.eps, GENERATOR)
        record(epoch, gan, batch)
        if hyper.stop_at_validation is not None and hist.last("loss_v") >= hyper.stop_at_validation:
            break
        if (
            hyper.diversity_floor is not None
            and epoch % hyper.diversity_every == 0
            and diversity_histogram(gan, pool, hyper.diversity_samples, div_rng).distinct < hyper.diversity_floor
        ):
            break
    run.gan = gan
    return run
