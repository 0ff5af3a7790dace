import numpy as np
import pytest

from symtc.robustness import RobustnessReport, evaluate, robustness_sweep, shift


def _dataset(n=3, size=64, seed=0):
    rng = np.random.default_rng(seed)
    images, labels = [], []
    for _ in range(n):
        lab = np.zeros((size, size), dtype=np.int64)
        r, c = rng.integers(10, 40, size=2)
        lab[r:r + 12, c:c + 14] = 1
        lab[r + 14:r + 20, c:c + 14] = 2
        images.append(lab / 2.0 + 0.01 * rng.standard_normal((size, size)))
        labels.append(lab)
    return images, labels


def _oracle(img):
    """Per-pixel thresholding: trivially equivariant to any translation."""
    return np.digitize(img, [0.25, 0.75])


def test_shift_directions_and_fill():
    a = np.arange(12).reshape(3, 4)
    assert np.array_equal(shift(a, 1, "horizontal"), [[0, 0, 1, 2], [0, 4, 5, 6], [0, 8, 9, 10]])
    assert np.array_equal(shift(a, -1, "vertical", fill=-1), [[4, 5, 6, 7], [8, 9, 10, 11], [-1] * 4])
    assert np.array_equal(shift(a, 0, "vertical"), a)
    assert np.all(shift(a, 9, "horizontal") == 0)
    with pytest.raises(ValueError):
        shift(a, 1, "diagonal")


@pytest.mark.parametrize("axis", ["horizontal", "vertical"])
def test_equivariant_oracle_scores_100_everywhere(axis):
    images, labels = _dataset()
    rep = robustness_sweep(_oracle, images, labels, 3, axis=axis, with_hd95=True)
    assert rep.shifts == [0, 10, 20, 30, 40]
    assert rep.dsc == [100.0] * 5
    assert rep.hd95 == [0.0] * 5


def test_zero_shift_equals_plain_evaluation():
    images, labels = _dataset(seed=1)
    noisy = lambda img: _oracle(img + 0.3 * (np.indices(img.shape).sum(0) % 7 == 0))
    rep = robustness_sweep(noisy, images, labels, 3, shifts=[0])
    dsc, _ = evaluate(noisy, images, labels, 3)
    assert rep.dsc[0] == dsc < 100.0


def test_constant_predictor_degrades_with_shift():
    images, labels = _dataset(seed=2)
    fixed = labels[0]
    rep = robustness_sweep(lambda img: fixed, images[:1], labels[:1], 3, shifts=[0, 20])
    assert rep.dsc[0] == 100.0 and rep.dsc[1] < 100.0


def test_shift_range_validated():
    images, labels = _dataset(n=1)
    with pytest.raises(ValueError):
        robustness_sweep(_oracle, images, labels, 3, shifts=[50])
    with pytest.raises(ValueError):
        robustness_sweep(_oracle, images, labels, 3, shifts=[-10])


def test_report_formats():
    rep = RobustnessReport("vertical", [0, 10], [99.5, 90.25], [1.0, 2.5])
    tsv = rep.to_tsv().splitlines()
    assert tsv[0] == "axis\tshift_px\tdsc\thd95"
    assert tsv[2] == "vertical\t10\t90.250\t2.500"
    assert "vertical translation" in rep.to_text()
    assert RobustnessReport("horizontal", [0], [1.0]).to_tsv().splitlines()[0] == "axis\tshift_px\tdsc"
