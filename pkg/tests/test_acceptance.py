"""Acceptance suite: one PASS/FAIL line per criterion in the terminal summary.

Regression constants live in tests/baseline.json. Regenerate them with
``python3 tests/test_acceptance.py --write-baseline`` after a deliberate change.
"""

from __future__ import annotations

import json
import math
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

from bosparse import (
    build_arc_basis,
    buckley_sweep,
    check_weight_lemmas,
    cyclic_metric,
    discrete_hilbert,
    dual_weight,
    dyadic_basis,
    economical_cover,
    greedy_disjoint_subcover,
    martingale_transform,
    maximal_modulation,
    maximal_operator,
    lp_norm,
    oracle_dyadic_sparse,
    random_signs,
    sparse_apply,
    sparse_weighted_bound_check,
    theorem1_sparse,
    verify_axioms,
    verify_bo,
    walsh_modulators,
    weak_lp_norm,
)
from bosparse.operators import parent_step_ratio
from bosparse.weights import ap_characteristic, conjugate, power_weight

from conftest import ACCEPTANCE

BASELINE = Path(__file__).with_name("baseline.json")
GROWTH = 1.10  # regression gate: no constant may grow by more than 10%
PAIRS = 50


def record(name: str, ok: bool, detail: str) -> None:
    ACCEPTANCE.append((name, bool(ok), detail))
    assert ok, f"{name}: {detail}"


def baseline() -> dict:
    return json.loads(BASELINE.read_text())


def random_f(rng: np.random.Generator, n: int) -> np.ndarray:
    f = rng.exponential(size=n) * (rng.random(n) < 0.5)
    f[rng.integers(n)] += rng.exponential() + 0.1
    return f * rng.choice([-1.0, 1.0], size=n)


# -- 1 ---------------------------------------------------------------------------


def test_axioms():
    t0 = time.perf_counter()
    bad = []
    for depth in range(2, 6):
        rep = verify_axioms(dyadic_basis(depth))
        if not (rep.ok and rep.K == 2 and rep.eta == 2 and rep.D == 1):
            bad.append(f"dyadic{depth}: K={rep.K} eta={rep.eta} D={rep.D}")
    Ks = {}
    for n in (8, 16, 32):
        rep = verify_axioms(build_arc_basis(cyclic_metric(n)))
        Ks[n] = rep.K
        if not (rep.ok and math.isfinite(rep.K)):
            bad.append(f"arc{n}: {rep.failures[:2]}")
    took = time.perf_counter() - t0
    record("1 ball-basis axioms", not bad and took < 5, f"arc K={Ks} time={took:.2f}s {bad}")


# -- 2 ---------------------------------------------------------------------------


def test_covering():
    basis = dyadic_basis(3)
    n, K = 8, basis.K
    t0 = time.perf_counter()
    bad = []
    worst = 0.0
    for t in range(1, 1 << n):
        E = [x for x in range(n) if t >> x & 1]
        emask = np.zeros(n, dtype=bool)
        emask[E] = True
        family = [b for b in range(len(basis)) if basis.ind[b][E].any()]
        sel = greedy_disjoint_subcover(basis, family, E)
        used = np.zeros(n, dtype=int)
        for b in sel.chosen:
            used += basis.ind[b]
        hulls = np.any(basis.ind[sel.hull_cover], axis=0)
        if used.max() > 1 or not hulls[emask].all():
            bad.append(("greedy", E))
        cover = economical_cover(basis, E)
        total = math.fsum(basis.measures[c] for c in cover)
        worst = max(worst, total / basis.space.measure(E))
        if not np.any(basis.ind[cover], axis=0)[emask].all() or total > 2 * K * basis.space.measure(E) * (1 + 1e-12):
            bad.append(("economical", E))
    took = time.perf_counter() - t0
    record("2 covering", not bad and took < 1, f"targets=255 worst cover/mu(E)={worst:.3f} bound={2 * K} time={took:.2f}s {bad[:3]}")


# -- 3 ---------------------------------------------------------------------------


def exact_weak_ratio(basis, f: list[int]) -> Fraction:
    """Weak (1,1) ratio of the maximal function in rationals (uniform dyadic masses)."""
    n = len(f)
    mass = Fraction(1, n)
    M = [Fraction(0)] * n
    for b in range(len(basis)):
        atoms = np.flatnonzero(basis.ind[b])
        a = Fraction(sum(abs(f[x]) for x in atoms), len(atoms))
        for x in atoms:
            M[x] = max(M[x], a)
    weak = max((v * mass * sum(1 for m in M if m >= v) for v in set(M) if v > 0), default=Fraction(0))
    return weak / (mass * sum(abs(v) for v in f))


def test_maximal_weak_constant():
    rng = np.random.default_rng(3)
    worst_tree = Fraction(0)
    for depth in (2, 3, 4):
        basis = dyadic_basis(depth)
        n = basis.space.atom_count
        for _ in range(200):
            f = [int(v) for v in rng.integers(-9, 10, size=n)]
            if not any(f):
                f[0] = 1
            worst_tree = max(worst_tree, exact_weak_ratio(basis, f))
    spike = exact_weak_ratio(dyadic_basis(3), [8, 0, 0, 0, 0, 0, 0, 0])
    worst_arc = 0.0
    arc_bad = []
    for n in (8, 16):
        basis = build_arc_basis(cyclic_metric(n))
        M = maximal_operator(basis)
        for _ in range(200):
            f = random_f(rng, n)
            ratio = weak_lp_norm(basis.space, M(f), 1) / lp_norm(basis.space, f, 1)
            worst_arc = max(worst_arc, ratio)
            if ratio > basis.K + 1e-9:
                arc_bad.append(n)
    ok = worst_tree <= 1 and spike == 1 and not arc_bad
    record("3 maximal weak (1,1)", ok, f"tree worst={worst_tree} (<=D=1) spike={spike} arc worst={worst_arc:.4f} (<=K)")


# -- 4 ---------------------------------------------------------------------------


def test_martingale_constants():
    basis = dyadic_basis(5)
    n = basis.space.atom_count
    rng = np.random.default_rng(4)
    t0 = time.perf_counter()
    T = martingale_transform(basis, random_signs(basis, 4))
    rep = verify_bo(T, basis, 1.0, trials=20, seed=4)
    spread = 0.0
    for b in range(len(basis)):
        outside = ~basis.ind[basis.hull[b]]
        if not outside.any():
            continue
        for _ in range(20):
            vals = T(rng.standard_normal(n) * outside)[basis.ind[b]]
            spread = max(spread, float(vals.max() - vals.min()))
    step = parent_step_ratio(T, basis)
    took = time.perf_counter() - t0
    ok = rep.L1_estimate == 0 and spread == 0 and step <= 2 + 1e-12 and took < 5
    record("4 martingale constants", ok, f"L1={rep.L1_estimate} ({rep.L1_method}) probe spread={spread} parent_step={step} time={took:.2f}s")


# -- 5 ---------------------------------------------------------------------------


def pipeline_run(depth: int) -> tuple[float, list[str]]:
    """Sign pattern i is paired with random f_i; returns the largest C and any problems."""
    basis = dyadic_basis(depth)
    n = basis.space.atom_count
    rng = np.random.default_rng([5, depth])
    worst, problems = 0.0, []
    for i in range(PAIRS):
        T = martingale_transform(basis, random_signs(basis, 1000 * depth + i))
        rep = verify_bo(T, basis, 1.0, trials=10, seed=i)
        f = random_f(rng, n)
        res = theorem1_sparse(T, basis, f, constants=rep)
        if not res.ok:
            problems.append(f"pair {i}: {[k for k, v in res.checks.items() if not v]}")
        for part in res.sparse.parity_split or ():
            if part.verify(basis):
                problems.append(f"pair {i}: parity family not certified")
        for a in res.pruned.retained:
            if basis.space.measure(res.pruned.E[a]) < basis.measures[res.tree.nodes[a].ball] / 2 * (1 - 1e-12):
                problems.append(f"pair {i}: E({a}) below half mass")
        tf, C = np.abs(T(f)), res.C
        if np.any(tf > C * sparse_apply(basis, res.sparse.balls, f) * (1 + 1e-12)):
            problems.append(f"pair {i}: domination fails at some atom")
        worst = max(worst, C)
    return worst, problems


def test_pipeline():
    base = baseline()["C_domination"]
    t0 = time.perf_counter()
    results = {d: pipeline_run(d) for d in (4, 5)}
    took = time.perf_counter() - t0
    problems = [p for d in results for p in results[d][1]]
    regress = {d: results[d][0] for d in results if results[d][0] > GROWTH * base[str(d)]}
    ok = not problems and not regress and took < 60
    Cs = {d: round(results[d][0], 6) for d in results}
    record("5 sparse domination pipeline", ok, f"C_max={Cs} baseline={base} time={took:.1f}s {problems[:3]} {regress}")


# -- 6 ---------------------------------------------------------------------------


def test_cz_demo():
    t0 = time.perf_counter()
    parts, ok = [], True
    for n in (16, 32):
        rep = verify_bo(discrete_hilbert(n), build_arc_basis(cyclic_metric(n)), 1.0, trials=10, seed=6)
        good = (
            math.isfinite(rep.L1_estimate)
            and math.isfinite(rep.L2_estimate)
            and rep.nested_pair_bound.get("passed")
            and rep.monotonicity.get("passed")
        )
        ok &= bool(good)
        parts.append(f"Z{n}: L1={rep.L1_estimate:.4g} L2={rep.L2_estimate:.4g} weak={rep.weak_norm:.4g}")
    took = time.perf_counter() - t0
    record("6 discrete Hilbert constants", ok and took < 30, f"{'; '.join(parts)} time={took:.1f}s")


# -- 7 ---------------------------------------------------------------------------


def weight_constants() -> dict:
    """Largest sparse-bound constant over the power-weight grid, plus the Buckley sweep."""
    depth, p = 6, 2.0
    basis = dyadic_basis(depth)
    rng = np.random.default_rng(7)
    S = oracle_dyadic_sparse(basis, np.abs(random_f(rng, basis.space.atom_count)))
    sweep = buckley_sweep(depth, p)
    c_max, duality = 0.0, True
    for row in sweep.rows:
        rep = sparse_weighted_bound_check(basis, S, power_weight(depth, row.a).values, p, seed=7)
        c_max = max(c_max, rep.c_min)
        duality &= bool(rep.duality_ok)
    return {"sweep": sweep, "c_sparse": c_max, "duality": duality, "sparse_size": len(S.balls)}


def test_weights():
    base = baseline()
    t0 = time.perf_counter()
    rng = np.random.default_rng(77)
    bad = []
    for depth in (3, 4):
        basis = dyadic_basis(depth)
        for p in (1.5, 2.0, 3.0):
            for _ in range(5):
                w = np.exp(rng.normal(size=basis.space.atom_count))
                char = ap_characteristic(basis, w, p)
                dual = ap_characteristic(basis, dual_weight(w, p), conjugate(p))
                err = abs(dual - char ** (1 / (p - 1))) / char ** (1 / (p - 1))
                lem = check_weight_lemmas(basis, w, p, samples=50, seed=1)
                if char < 1 - 1e-12 or err > 1e-9 or not lem.nested_ok:
                    bad.append(f"depth {depth} p {p}: char={char} err={err} nested={lem.nested_ok}")
    got = weight_constants()
    sweep = got["sweep"]
    took = time.perf_counter() - t0
    ok = (
        not bad
        and len(sweep.rows) == 19
        and got["duality"]
        and got["c_sparse"] <= GROWTH * base["c_sparse"]
        and sweep.max_ratio <= GROWTH * base["buckley_ratio"]
        and took < 30
    )
    detail = (
        f"c_sparse={got['c_sparse']:.6f} (baseline {base['c_sparse']:.6f}) "
        f"buckley max ratio={sweep.max_ratio:.6f} (baseline {base['buckley_ratio']:.6f}) "
        f"duality={got['duality']} time={took:.1f}s {bad[:2]}"
    )
    record("7 weights", ok, detail)


# -- 8 ---------------------------------------------------------------------------


def test_modulation():
    t0 = time.perf_counter()
    basis = dyadic_basis(3)
    n = basis.space.atom_count
    T = martingale_transform(basis, random_signs(basis, 8))
    TG = maximal_modulation(T, walsh_modulators(n))
    rng = np.random.default_rng(8)
    spread = 0.0
    for b in range(len(basis)):
        outside = ~basis.ind[basis.hull[b]]
        if not outside.any():
            continue
        for _ in range(50):
            vals = TG(rng.standard_normal(n) * outside)[basis.ind[b]]
            spread = max(spread, float(vals.max() - vals.min()))
    rep = verify_bo(TG, basis, 1.0, trials=10, seed=8)
    runs = [theorem1_sparse(TG, basis, random_f(rng, n), constants=rep) for _ in range(10)]
    took = time.perf_counter() - t0
    ok = spread == 0 and all(r.ok for r in runs) and took < 10
    record("8 maximal modulation", ok, f"modulators={len(walsh_modulators(n))} spread={spread} C_max={max(r.C for r in runs):.4f} time={took:.2f}s")


def write_baseline() -> None:
    C = {str(d): pipeline_run(d)[0] for d in (4, 5)}
    got = weight_constants()
    data = {"C_domination": C, "c_sparse": got["c_sparse"], "buckley_ratio": got["sweep"].max_ratio}
    BASELINE.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    print(json.dumps(data, indent=2, sort_keys=True))


if __name__ == "__main__" and "--write-baseline" in sys.argv:
    write_baseline()
