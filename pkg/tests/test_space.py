import math

import numpy as np
import pytest

from bosparse import MeasureSpace, avg, distribution, lp_norm, weak_lp_norm


@pytest.fixture
def half():
    return MeasureSpace([0.5, 0.5])


def test_rejects_bad_masses():
    for bad in ([], [1, 0], [1, -1], [1, math.inf], [math.nan]):
        with pytest.raises(ValueError):
            MeasureSpace(bad)


def test_total_mass_cached():
    s = MeasureSpace([0.1] * 10)
    assert s.total_mass == pytest.approx(1.0, rel=1e-15)
    assert s.atom_count == 10


def test_function_validation(half):
    with pytest.raises(ValueError):
        half.function([1, 2, 3])
    with pytest.raises(ValueError):
        half.function([1, math.nan])


def test_distribution(half):
    assert distribution(half, [2, 0], 1) == 0.5
    assert distribution(half, [0, 0], 0.3) == 0
    assert distribution(half, [2, 0], 2) == 0
    with pytest.raises(ValueError):
        distribution(half, [2, 0], -1)


def test_lp_norm(half):
    assert lp_norm(half, [2, 0], 1) == 1
    assert lp_norm(half, [2, 0], 2) == pytest.approx(math.sqrt(2), rel=1e-15)
    assert lp_norm(half, [2, 0], math.inf) == 2
    for p in (1, 1.5, 2, 7):
        assert lp_norm(half, [1, 1], p) == pytest.approx(1.0)
    assert lp_norm(half, [1, 1], 2, w=[4, 0.25]) == pytest.approx(math.sqrt(2.125))
    with pytest.raises(ValueError):
        lp_norm(half, [1, 1], 0.5)


def test_weak_norm(half):
    assert weak_lp_norm(half, [2, 0], 1) == 1
    assert weak_lp_norm(half, [0, 0], 1) == 0
    assert weak_lp_norm(MeasureSpace([1.0]), [3.5], 1) == 3.5
    # repeated values: level set of the smaller value includes both atoms
    s = MeasureSpace([0.25] * 4)
    assert weak_lp_norm(s, [4, 1, 1, 0], 1) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        weak_lp_norm(half, [1, 1], 0.9)


def test_avg(half):
    assert avg(half, [2, 0], [0, 1]) == 1
    assert avg(half, [2, 0], [0, 1], 2) == pytest.approx(math.sqrt(2))
    assert avg(half, [1, 1], [1], 3) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        avg(half, [1, 1], [])


def test_mask_input(half):
    assert avg(half, [2, 4], np.array([False, True])) == 4
    assert half.measure(np.array([True, True])) == 1
