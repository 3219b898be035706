from fractions import Fraction

import numpy as np
import pytest

from bosparse import (
    Weight,
    ap_characteristic,
    buckley_sweep,
    check_weight_lemmas,
    dual_weight,
    dyadic_basis,
    martingale_transform,
    maximal_operator,
    sparse_operator,
    sparse_weighted_bound_check,
    weighted_maximal,
    weighted_operator_norm,
)
from bosparse.operators import KernelOperator


def frac_characteristic(basis, w, p=2):
    """Exact p = 2 characteristic in rationals."""
    mu = [Fraction(m).limit_denominator(1 << 20) for m in basis.space.mass]
    w = [Fraction(x) for x in w]
    best = Fraction(0)
    for b in basis.balls:
        m = sum(mu[x] for x in b.atoms)
        aw = sum(w[x] * mu[x] for x in b.atoms) / m
        asig = sum(mu[x] / w[x] for x in b.atoms) / m
        best = max(best, aw * asig)
    return best


def test_weight_validation():
    with pytest.raises(ValueError):
        Weight([1, 0])
    with pytest.raises(ValueError):
        Weight([1, np.inf])


def test_characteristic_examples(two_atoms, dyadic3, rng):
    assert ap_characteristic(two_atoms, [1, 1], 2) == 1
    assert ap_characteristic(two_atoms, [4, 1], 2) == 25 / 16
    w = rng.exponential(size=8) + 0.1
    assert ap_characteristic(dyadic3, 7.5 * w, 3) == pytest.approx(ap_characteristic(dyadic3, w, 3), rel=1e-12)
    with pytest.raises(ValueError):
        ap_characteristic(two_atoms, [4, 1], 1)


def test_characteristic_matches_rationals(dyadic3, rng):
    for _ in range(20):
        w = rng.integers(1, 20, size=8)
        assert ap_characteristic(dyadic3, w, 2) == pytest.approx(float(frac_characteristic(dyadic3, w)), rel=1e-13)


def test_dual_weight(two_atoms):
    s = dual_weight([4, 1], 2, two_atoms)
    assert s.values.tolist() == [0.25, 1]
    assert ap_characteristic(two_atoms, s, 2) == 25 / 16
    assert dual_weight([1, 1], 2).values.tolist() == [1, 1]
    s3 = dual_weight([8, 1], 3, two_atoms)
    assert s3.values[0] == pytest.approx(8**-0.5)
    with pytest.raises(ValueError):
        dual_weight([4, 1], 1)


def test_weight_caches(two_atoms):
    w = Weight([4, 1])
    assert w.characteristic(two_atoms, 2) == 25 / 16
    assert w.dual(2) is w.dual(2)


def test_norm_examples(two_atoms, dyadic3):
    A = sparse_operator(two_atoms, [0])
    est = weighted_operator_norm(A, two_atoms, [4, 1], 2)
    assert est.method == "exact"
    assert est.value == pytest.approx(1.25, rel=1e-10)
    ident = KernelOperator(dyadic3.space, np.diag(1 / dyadic3.space.mass))
    assert weighted_operator_norm(ident, dyadic3, np.arange(1, 9), 2).value == pytest.approx(1)
    assert weighted_operator_norm(ident, dyadic3, np.arange(1, 9), 3).value == pytest.approx(1)
    T = martingale_transform(dyadic3)
    assert weighted_operator_norm(T, dyadic3, np.ones(8), 2).value == pytest.approx(1, rel=1e-10)


def test_rank_one_closed_form(two_atoms, dyadic3, rng):
    # ||A_{X}|| on L^p(w) = w(X)^(1/p) sigma(X)^(1/q) / mu(X)
    for p in (1.5, 2.0, 3.0):
        w = rng.exponential(size=8) + 0.05
        sig = w ** (-1 / (p - 1))
        mu = dyadic3.space.mass
        closed = (w @ mu) ** (1 / p) * (sig @ mu) ** (1 - 1 / p)
        est = weighted_operator_norm(sparse_operator(dyadic3, [0]), dyadic3, w, p)
        tol = 1e-10 if p == 2 else 1e-6
        assert est.value == pytest.approx(closed, rel=tol)


def test_power_iteration_matches_dense_svd(dyadic3, rng):
    A = sparse_operator(dyadic3, [0, 1, 5, 9])
    for _ in range(5):
        w = rng.exponential(size=8) + 0.1
        s = np.sqrt(w * dyadic3.space.mass)
        dense = np.linalg.norm(s[:, None] * A.matrix / s[None, :], 2)
        assert weighted_operator_norm(A, dyadic3, w, 2).value == pytest.approx(dense, rel=1e-9)


def test_search_is_lower_bound(dyadic3, rng):
    A = sparse_operator(dyadic3, [0, 3, 12])
    w = rng.exponential(size=8) + 0.1
    exact = weighted_operator_norm(A, dyadic3, w, 2).value
    found = weighted_operator_norm(A, dyadic3, w, 2, method="search")
    assert found.method == "search lower bound"
    assert found.value <= exact * (1 + 1e-9)
    assert found.value >= 0.999 * exact


def test_weight_lemmas(two_atoms, dyadic3, rng):
    rep = check_weight_lemmas(two_atoms, [4, 1], 2)
    assert rep.ok and rep.nested_pairs == 5
    assert check_weight_lemmas(dyadic3, np.ones(8), 2).ok
    for _ in range(5):
        w = np.exp(rng.normal(size=8))
        rep = check_weight_lemmas(dyadic3, w, 2, samples=200, seed=1)
        assert rep.ok
        assert rep.weak_constant <= 1 + 1e-12  # tree bases are martingale systems


def test_weighted_maximal(dyadic3):
    Mw = weighted_maximal(dyadic3, np.ones(8))
    f = np.zeros(8)
    f[0] = 8
    assert np.allclose(Mw(f), maximal_operator(dyadic3)(f))


def test_sparse_bound_examples(two_atoms, dyadic3):
    rep = sparse_weighted_bound_check(two_atoms, [0], [4, 1], 2, 1.0, c=1.0)
    assert rep.ok and rep.norm.value == pytest.approx(1.25) and rep.route == "besicovitch"
    assert rep.dual_norm.value == pytest.approx(rep.norm.value, rel=1e-8)
    rep = sparse_weighted_bound_check(dyadic3, [0, 1], np.ones(8), 2, 0.5)
    assert rep.c_min <= 1


def test_sparse_bound_general_route():
    from bosparse import build_arc_basis, cyclic_metric

    basis = build_arc_basis(cyclic_metric(16))
    rep = sparse_weighted_bound_check(basis, [basis.whole], np.linspace(1, 3, 16), 2, 1.0)
    assert rep.route == "general" and rep.duality_ok


def test_buckley_small():
    sweep = buckley_sweep(depth=3, p=2, grid=[-0.5, 0.0, 0.5])
    assert len(sweep.rows) == 3 and sweep.monotone
    assert sweep.rows[1].characteristic == pytest.approx(1)
    lines = sweep.to_csv().splitlines()
    assert lines[0] == "a,characteristic,norm_lower_bound,ratio"
    assert lines[2].startswith("0,1,")
