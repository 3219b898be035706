import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bosparse import (
    MeasureSpace,
    ap_characteristic,
    avg,
    distribution,
    dual_weight,
    dyadic_basis,
    lp_norm,
    martingale_transform,
    random_signs,
    sparse_apply,
    weak_lp_norm,
)
from bosparse.basis import avg_star

BASIS = dyadic_basis(3)
SPACE = BASIS.space
# keep away from the subnormal range where powers underflow
floats = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False).filter(lambda x: x == 0 or abs(x) > 1e-30)
fvec = arrays(np.float64, 8, elements=floats)
pos = arrays(np.float64, 8, elements=st.floats(1e-3, 1e3))
ps = st.floats(1, 8)


@settings(max_examples=300, deadline=None)
@given(fvec, fvec, ps)
def test_triangle(f, g, p):
    lhs = lp_norm(SPACE, f + g, p)
    assert lhs <= (lp_norm(SPACE, f, p) + lp_norm(SPACE, g, p)) * (1 + 1e-12) + 1e-12


@settings(max_examples=200, deadline=None)
@given(fvec, ps)
def test_weak_below_strong(f, p):
    assert weak_lp_norm(SPACE, f, p) <= lp_norm(SPACE, f, p) * (1 + 1e-12) + 1e-300


@given(fvec, st.floats(0, 1e3), st.floats(0, 1e3))
def test_distribution_monotone(f, s, t):
    lo, hi = sorted((s, t))
    assert distribution(SPACE, f, hi) <= distribution(SPACE, f, lo)
    assert distribution(SPACE, f, float(np.abs(f).max())) == 0


@given(fvec, st.integers(0, 14), st.floats(1, 6), st.floats(1, 6), floats)
def test_avg_holder_and_homogeneity(f, b, r, s, c):
    B = BASIS.ind[b]
    lo, hi = sorted((r, s))
    assert avg(SPACE, f, B, lo) <= avg(SPACE, f, B, hi) * (1 + 1e-12) + 1e-300
    assert np.isclose(avg(SPACE, c * f, B, lo), abs(c) * avg(SPACE, f, B, lo), rtol=1e-9, atol=1e-300)
    assert avg_star(BASIS, f, b, lo) >= avg(SPACE, f, B, lo) * (1 - 1e-12)


@settings(max_examples=100, deadline=None)
@given(fvec, st.integers(0, 2**32))
def test_martingale_contracts_l2(f, seed):
    T = martingale_transform(BASIS, random_signs(BASIS, seed))
    Tf = T(f)
    assert lp_norm(SPACE, Tf, 2) <= lp_norm(SPACE, f, 2) * (1 + 1e-12) + 1e-9


@settings(max_examples=100, deadline=None)
@given(fvec, fvec, floats, st.integers(0, 2**32))
def test_sublinearity(f, g, c, seed):
    T = martingale_transform(BASIS, random_signs(BASIS, seed))
    assert np.all(np.abs(T(f + g)) <= np.abs(T(f)) + np.abs(T(g)) + 1e-9)
    assert np.allclose(np.abs(T(c * f)), abs(c) * np.abs(T(f)), rtol=1e-9, atol=1e-6)


@settings(max_examples=100, deadline=None)
@given(fvec, st.integers(0, 2**32))
def test_martingale_locally_constant_outside_hull(f, seed):
    T = martingale_transform(BASIS, random_signs(BASIS, seed))
    for b in range(1, len(BASIS)):
        out = T(f * ~BASIS.ind[BASIS.hull[b]])[BASIS.ind[b]]
        assert np.all(out == out[0])


@settings(max_examples=200, deadline=None)
@given(pos, st.floats(1.05, 6))
def test_characteristic_and_duality(w, p):
    char = ap_characteristic(BASIS, w, p)
    assert char >= 1 - 1e-12
    sigma = dual_weight(w, p, BASIS)  # raises on a mismatch
    q = p / (p - 1)
    assert np.isclose(ap_characteristic(BASIS, sigma, q), char ** (1 / (p - 1)), rtol=1e-9)


@settings(max_examples=100, deadline=None)
@given(fvec, fvec, st.lists(st.integers(0, 14), max_size=6), st.floats(0, 100))
def test_sparse_apply_monotone(f, g, S, c):
    small = np.abs(f)
    big = small + np.abs(g)
    assert np.all(sparse_apply(BASIS, S, small) <= sparse_apply(BASIS, S, big) + 1e-9)
    assert np.allclose(sparse_apply(BASIS, S, c * f), c * sparse_apply(BASIS, S, f), rtol=1e-9, atol=1e-6)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, 4, elements=st.floats(1e-3, 10)))
def test_space_total_mass(m):
    s = MeasureSpace(m)
    assert np.isclose(s.total_mass, m.sum(), rtol=1e-12)
