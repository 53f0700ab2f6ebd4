import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from dqnn_lab import dqnn
from dqnn_lab import quantum_core as qc
from dqnn_lab.estimators import DQNNRegressor


def task(seed, n=4, m=1):
    rng = qc.make_rng(seed)
    y = qc.haar_unitary(2 ** m, rng)
    x = qc.haar_states(2 ** m, n, rng)
    return x, x @ y.T


def test_fit_matches_direct_training():
    x, y = task(0)
    est = DQNNRegressor("1-1", eps=0.1, epochs=20, random_state=5).fit(x, y)
    net = dqnn.init_random(dqnn.NetworkTopology((1, 1)), qc.make_rng(5))
    pairs = [dqnn.TrainingPair(a, b) for a, b in zip(x, y)]
    want, _ = dqnn.train(net, pairs, dqnn.Hyperparams(0.1, 1.0, 20))
    assert np.array_equal(est.net_.unitaries[0][0], want.unitaries[0][0])
    assert est.n_features_in_ == 2
    assert est.score(x, y) == pytest.approx(est.history_.last("training_loss"))


def test_learns_and_predicts_states():
    x, y = task(1)
    est = DQNNRegressor("1-1", eps=0.1, epochs=200, random_state=0).fit(x, y)
    assert est.score(x, y) > 0.99
    for rho in est.predict(x):
        qc.validate_density_matrix(rho, 1e-8)


def test_params_and_clone():
    est = DQNNRegressor(topology=(1, 2, 1), epochs=3)
    assert est.get_params()["topology"] == (1, 2, 1)
    copy = clone(est).set_params(eps=0.5)
    assert copy.eps == 0.5 and est.eps == 0.01


def test_errors():
    x, y = task(2)
    with pytest.raises(NotFittedError):
        DQNNRegressor("1-1").predict(x)
    with pytest.raises(ValueError):
        DQNNRegressor("1-1", epochs=1).fit(x, y[:2])
    with pytest.raises(ValueError):
        DQNNRegressor("2-2", epochs=1).fit(x, y)
    with pytest.raises(ValueError):
        DQNNRegressor("1-1", epochs=1).fit(x * 2, y)
    est = DQNNRegressor("1-1", epochs=1).fit(x, y)
    with pytest.raises(ValueError):
        est.predict(task(3, m=2)[0])
