"""scikit-learn style wrapper around DQNN unitary learning."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from . import dqnn
from .dqnn import Hyperparams, NetworkTopology, TrainingPair
from .quantum_core import make_rng, validate_pure_state


def _as_kets(x, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=complex)
    if x.ndim != 2:
        raise ValueError(f"{name} must be a 2-D array of state vectors")
    for row in x:
        validate_pure_state(row)
    return x


class DQNNRegressor(BaseEstimator):
    """Fit a DQNN to map input kets ``X`` onto target kets ``y``.

    ``predict`` returns output density matrices; ``score`` is the mean
    fidelity with the given targets, so higher is better.
    """

    def __init__(self, topology="2-3-2", eps=0.01, eta=1.0, epochs=1000, random_state=None):
        self.topology = topology
        self.eps = eps
        self.eta = eta
        self.epochs = epochs
        self.random_state = random_state

    def _topology(self) -> NetworkTopology:
        if isinstance(self.topology, NetworkTopology):
            return self.topology
        if isinstance(self.topology, str):
            return NetworkTopology.parse(self.topology)
        return NetworkTopology(tuple(self.topology))

    def fit(self, X, y):
        X, y = _as_kets(X, "X"), _as_kets(y, "y")
        if len(X) != len(y):
            raise ValueError("X and y need the same number of states")
        topo = self._topology()
        if X.shape[1] != 2 ** topo.widths[0] or y.shape[1] != 2 ** topo.widths[-1]:
            raise ValueError("state dimensions do not match the topology")
        rng = make_rng(self.random_state)
        pairs = [TrainingPair(a, b) for a, b in zip(X, y)]
        net = dqnn.init_random(topo, rng)
        self.net_, self.history_ = dqnn.train(net, pairs, Hyperparams(self.eps, self.eta, self.epochs))
        self.n_features_in_ = X.shape[1]
        return self

    def _check_fitted(self):
        if not hasattr(self, "net_"):
            raise NotFittedError("call fit before predict")

    def predict(self, X) -> np.ndarray:
        self._check_fitted()
        X = _as_kets(X, "X")
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected states of dimension {self.n_features_in_}")
        return dqnn.output(self.net_, np.einsum("ni,nj->nij", X, X.conj()))

    def score(self, X, y) -> float:
        rho = self.predict(X)
        y = _as_kets(y, "y")
        return float(np.mean(np.einsum("ni,nij,nj->n", y.conj(), rho, y).real))
