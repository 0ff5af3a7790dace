import numpy as np
import pytest

from oracles import boundary_loops, dsc_loops, hd95_all_pairs
from symtc.metrics import MissingClassError, boundary, dsc_metric, dsc_table, hd95, hd95_table, mean_dsc


def _random_masks(rng, classes=3):
    h, w = rng.integers(3, 12, size=2)
    blobs = rng.random((h, w))
    a = np.digitize(blobs, np.linspace(0, 1, classes + 1)[1:-1])
    b = a.copy()
    flip = rng.random((h, w)) < rng.uniform(0.05, 0.5)
    b[flip] = rng.integers(0, classes, size=flip.sum())
    return a, b


def test_random_masks_match_oracles():
    rng = np.random.default_rng(0)
    for _ in range(200):
        a, b = _random_masks(rng)
        for cls in range(3):
            assert dsc_metric(a, b, cls) == dsc_loops(a, b, cls)
            assert sorted(map(tuple, boundary(a == cls))) == boundary_loops(a == cls)
            if (a == cls).any() and (b == cls).any():
                assert abs(hd95(a, b, cls) - hd95_all_pairs(a, b, cls)) <= 1e-9


def test_single_pixel_hd95_is_five():
    a = np.zeros((6, 6), dtype=int)
    b = np.zeros((6, 6), dtype=int)
    a[0, 0] = 1
    b[3, 4] = 1
    assert hd95(a, b, 1) == 5.0
    assert hd95(a, b, 1, spacing=0.5) == 2.5


def test_dsc_edge_cases():
    z = np.zeros((4, 4), dtype=int)
    assert dsc_metric(z, z, 1) == 100.0
    o = np.ones((4, 4), dtype=int)
    assert dsc_metric(o, z, 1) == 0.0
    assert dsc_metric(o, o, 1) == 100.0


def test_identical_masks_have_zero_hd95():
    rng = np.random.default_rng(1)
    a, _ = _random_masks(rng)
    cls = int(a.flat[0])
    assert hd95(a, a, cls) == 0.0


def test_missing_class_raises_and_tables_use_nan():
    a = np.zeros((5, 5), dtype=int)
    b = a.copy()
    b[1, 1] = 2
    with pytest.raises(MissingClassError):
        hd95(a, b, 2)
    with pytest.raises(MissingClassError):
        hd95(b, a, 2)
    table = hd95_table([b], [b], 3)
    assert np.isnan(table[0, 0]) and table[0, 1] == 0.0


def test_validation():
    with pytest.raises(ValueError):
        dsc_metric(np.zeros((2, 2)), np.zeros((3, 3)), 0)
    with pytest.raises(ValueError):
        dsc_metric(np.zeros((2, 2)), np.zeros((2, 2)), 5, class_count=3)
    with pytest.raises(ValueError):
        dsc_metric(np.zeros((2, 2)), np.zeros((2, 2)), -1)


def test_tables_exclude_background_by_default():
    a = np.array([[0, 1], [2, 2]])
    b = np.array([[1, 1], [2, 0]])
    t = dsc_table([a], [b], 3)
    assert t.shape == (1, 2)
    assert np.allclose(t[0], [100 * 2 / 3, 100 * 2 / 3])
    assert mean_dsc([a], [b], 3) == pytest.approx(200 / 3)
    assert dsc_table([a], [b], 3, classes=[0]).shape == (1, 1)
