import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from symtc.datasets import ssm_dataset
from symtc.estimator import SymTCSegmenter


@pytest.fixture(scope="module")
def data():
    images, masks, _ = ssm_dataset(n=2)
    return images, masks


def test_fit_predict_score(data):
    X, y = data
    est = SymTCSegmenter(epochs=2, random_state=1).fit(X, y)
    assert est.n_iter_ == 2 and list(est.classes_) == [0, 1, 2]
    p = est.predict_proba(X)
    assert p.shape == (2, 3, 64, 64) and np.allclose(p.sum(1), 1)
    assert est.predict(X).shape == (2, 64, 64)
    assert 0 <= est.score(X, y) <= 100


def test_deterministic_given_random_state(data):
    X, y = data
    a = SymTCSegmenter(epochs=1, random_state=3).fit(X, y).predict_proba(X)
    b = SymTCSegmenter(epochs=1, random_state=3).fit(X, y).predict_proba(X)
    assert np.array_equal(a, b)


def test_clone_and_params():
    est = SymTCSegmenter(lr=3e-4, augment=True)
    c = clone(est)
    assert c.get_params() == est.get_params()
    with pytest.raises(NotFittedError):
        c.predict(np.zeros((1, 64, 64)))


def test_input_validation(data):
    X, y = data
    with pytest.raises(ValueError):
        SymTCSegmenter(epochs=1).fit(X[:, :32], y[:, :32])
    with pytest.raises(ValueError):
        SymTCSegmenter(epochs=1).fit(X, y + 3)
    with pytest.raises(ValueError):
        SymTCSegmenter(preset="huge", epochs=1).fit(X, y)


def test_target_dsc_stops_early(data):
    X, y = data
    est = SymTCSegmenter(epochs=5, target_dsc=0.0).fit(X, y)
    assert est.n_iter_ == 1


def test_augmented_fit_runs(data):
    X, y = data
    est = SymTCSegmenter(epochs=1, augment=True).fit(X, y)
    assert np.isfinite(est.history_[0])
