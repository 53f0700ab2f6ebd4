"""No-free-lunch bounds, quantum risk and Haar-integral Monte Carlo checks."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import dqnn
from .dqnn import DQNN, Hyperparams, NetworkTopology
from .quantum_core import (
    haar_states,
    haar_unitaries,
    haar_unitary,
    is_unitary,
    num_qubits_of,
    projector,
    trace_norm_half,
)

_MC_CHUNK = 5000


def classical_nfl_bound(x_size: int, y_size: int, s: int) -> float:
    if x_size < 1 or y_size < 1 or not 0 <= s <= x_size:
        raise ValueError("need sizes >= 1 and 0 <= S <= |X|")
    return (1 - s / x_size) * (1 - 1 / y_size)


def classical_invertible_bound(x_size: int, s: int) -> float:
    if x_size < 1 or not 0 <= s <= x_size:
        raise ValueError("need |X| >= 1 and 0 <= S <= |X|")
    return 1 - (s + 1) / x_size


def qnfl_bound(d: int, s: int) -> float:
    """Raw value; negative once S^2 exceeds d^2 - 1."""
    if d < 1 or s < 0:
        raise ValueError("need d >= 1 and S >= 0")
    den = d * (d + 1)
    return (den - s * s - d - 1) / den


def quantum_risk_exact(y: np.ndarray, u: np.ndarray) -> float:
    d = y.shape[0]
    overlap = abs(np.trace(y.conj().T @ u)) ** 2
    return float(d / (d + 1) - overlap / (d * (d + 1)))


def _hypothesis_outputs(hypothesis, inputs: np.ndarray) -> np.ndarray:
    if isinstance(hypothesis, DQNN):
        return dqnn.output(hypothesis, projector(inputs))
    u = np.asarray(hypothesis)
    if not is_unitary(u, 1e-8):
        raise ValueError("hypothesis must be a DQNN or a unitary")
    return projector(inputs @ u.T)


def risk_samples(y: np.ndarray, hypothesis, c: int, rng: np.random.Generator) -> np.ndarray:
    """Squared half trace norm distances for ``c`` Haar-random inputs."""
    if c < 1:
        raise ValueError("C must be >= 1")
    inputs = haar_states(y.shape[0], c, rng)
    want = projector(inputs @ y.T)
    got = _hypothesis_outputs(hypothesis, inputs)
    return np.array([trace_norm_half(a - b) ** 2 for a, b in zip(want, got)])


def quantum_risk_empirical(y: np.ndarray, hypothesis, c: int, rng: np.random.Generator) -> float:
    return float(np.mean(risk_samples(y, hypothesis, c, rng)))


def infidelity_samples(y: np.ndarray, hypothesis, c: int, rng: np.random.Generator) -> np.ndarray:
    """1 - <Y psi| rho_out |Y psi>; for unitary hypotheses this equals the trace-norm risk."""
    inputs = haar_states(y.shape[0], c, rng)
    want = inputs @ y.T
    got = _hypothesis_outputs(hypothesis, inputs)
    return 1 - np.einsum("ni,nij,nj->n", want.conj(), got, want).real


# --- Haar identities --------------------------------------------------------------

def s2_exact(d: int) -> np.ndarray:
    """SWAP / d on C^d (x) C^d."""
    swap = np.zeros((d * d, d * d))
    for i in range(d):
        for j in range(d):
            swap[i * d + j, j * d + i] = 1.0
    return swap / d


def weingarten_coefficients(d: int) -> tuple[float, float]:
    """(identity, transposition) weights for two-fold Haar moments."""
    return 1 / (d * d - 1), -1 / (d * (d * d - 1))


def s4_exact(d: int) -> np.ndarray:
    """Exact Haar average of Y^dag (x) Y^dag (x) Y (x) Y.

    Entry [(a1 a2 a3 a4), (b1 b2 b3 b4)] averages
    conj(Y[b1,a1]) conj(Y[b2,a2]) Y[a3,b3] Y[a4,b4]; the second-moment
    Weingarten expansion pairs the row indices (a3,a4) with a permutation
    of (b1,b2) and (b3,b4) with a permutation of (a1,a2).
    """
    if d < 2:
        raise ValueError("d must be >= 2")
    w_id, w_sw = weingarten_coefficients(d)
    e = np.eye(d)
    perms = [(0, 1), (1, 0)]
    out = np.zeros((d,) * 8)
    for sigma in perms:
        for tau in perms:
            weight = w_id if sigma == tau else w_sw
            # deltas a3=b_{sigma0}, a4=b_{sigma1}, b3=a_{tau0}, b4=a_{tau1}
            bs = "pq"
            as_ = "rs"
            expr = (
                f"{'t'}{bs[sigma[0]]},{'u'}{bs[sigma[1]]},{'v'}{as_[tau[0]]},{'w'}{as_[tau[1]]}"
                f"->rstupqvw"
            )
            out += weight * np.einsum(expr, e, e, e, e)
    return out.reshape(d ** 4, d ** 4)


def _chunks(n: int):
    done = 0
    while done < n:
        k = min(_MC_CHUNK, n - done)
        yield k
        done += k


def monte_carlo_s2_estimate(d: int, n: int, rng: np.random.Generator) -> np.ndarray:
    acc = np.zeros((d * d, d * d), dtype=complex)
    for k in _chunks(n):
        ys = haar_unitaries(d, k, rng)
        acc += np.einsum("nba,ncd->acbd", ys.conj(), ys).reshape(d * d, d * d)
    return acc / n


def monte_carlo_s2(d: int, n: int, rng: np.random.Generator) -> float:
    """Max entrywise error of the sampled average of Y^dag (x) Y against SWAP/d."""
    return float(np.max(np.abs(monte_carlo_s2_estimate(d, n, rng) - s2_exact(d))))


def monte_carlo_s4_estimate(d: int, n: int, rng: np.random.Generator) -> np.ndarray:
    dim = d ** 4
    acc = np.zeros((dim, dim), dtype=complex)
    for k in _chunks(n):
        ys = haar_unitaries(d, k, rng)
        yd = np.swapaxes(ys.conj(), 1, 2)
        left = np.einsum("nab,ncd->nacbd", yd, yd).reshape(k, d * d, d * d)
        right = np.einsum("nab,ncd->nacbd", ys, ys).reshape(k, d * d, d * d)
        acc += np.einsum("nab,ncd->acbd", left, right).reshape(dim, dim)
    return acc / n


def monte_carlo_s4(d: int, n: int, rng: np.random.Generator) -> float:
    return float(np.max(np.abs(monte_carlo_s4_estimate(d, n, rng) - s4_exact(d))))


def state_moment_exact(x: np.ndarray) -> float:
    """(tr(X X^dag) + |tr X|^2) / (d(d+1)); the first term is d for unitary X."""
    d = x.shape[0]
    return float((np.vdot(x, x).real + abs(np.trace(x)) ** 2) / (d * (d + 1)))


def monte_carlo_state_moment(x: np.ndarray, n: int, rng: np.random.Generator) -> tuple[float, float]:
    """Sample mean of |<psi|X|psi>|^2 and its standard error."""
    vals = []
    for k in _chunks(n):
        psi = haar_states(x.shape[0], k, rng)
        vals.append(np.abs(np.einsum("ni,ij,nj->n", psi.conj(), x, psi)) ** 2)
    v = np.concatenate(vals)
    return float(v.mean()), float(v.std(ddof=1) / np.sqrt(n))


# --- bound experiment ----------------------------------------------------------------

@dataclass(frozen=True)
class RiskReport:
    s: int
    bound_classical: float
    bound_invertible: float
    bound_quantum: float
    empirical_risk_mean: float
    empirical_risk_stddev: float
    trials: int
    infidelity_mean: float = float("nan")

    def row(self) -> tuple:
        return (
            self.s,
            self.bound_quantum,
            self.bound_classical,
            self.bound_invertible,
            self.empirical_risk_mean,
            self.empirical_risk_stddev,
            self.infidelity_mean,
            self.trials,
        )


REPORT_COLUMNS = ("S", "bound_q", "bound_c", "bound_inv", "risk", "risk_std", "infidelity", "trials")


def nfl_experiment(
    topology: NetworkTopology,
    d: int,
    s_values: Sequence[int],
    trials: int,
    hyper: Hyperparams,
    rng: np.random.Generator,
    c: int = 10,
) -> list[RiskReport]:
    """Train on S of max(S) pairs per unitary and measure the empirical risk.

    Per trial: one Haar Y, one pool of max(S) pairs, and for each S a fresh
    random network trained on the first S pairs.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    m = num_qubits_of(d)
    if topology.widths[0] != m or topology.widths[-1] != m:
        raise ValueError("topology input and output widths must equal log2(d)")
    n_pairs = max(s_values)
    risks = {s: [] for s in s_values}
    infid = {s: [] for s in s_values}
    for _ in range(trials):
        y = haar_unitary(d, rng)
        pairs = dqnn.make_unitary_dataset(y, n_pairs, rng)
        for s in s_values:
            net = dqnn.init_random(topology, rng)
            if s > 0:
                net, _ = dqnn.train(net, pairs[:s], hyper, record_every=max(1, hyper.epochs))
            risks[s].append(quantum_risk_empirical(y, net, c, rng))
            infid[s].append(float(np.mean(infidelity_samples(y, net, c, rng))))
    return [
        RiskReport(
            s,
            classical_nfl_bound(d, d, s),
            classical_invertible_bound(d, min(s, d)),
            qnfl_bound(d, s),
            float(np.mean(risks[s])),
            float(np.std(risks[s])),
            trials,
            float(np.mean(infid[s])),
        )
        for s in s_values
    ]
