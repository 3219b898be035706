"""A_p weights, weighted operator norms and the weighted inequality checks."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .basis import BallBasis, all_nested_pairs, dyadic_basis
from .operators import Estimate, KernelOperator, MaximalOperator, SublinearOperator, maximal_operator
from .space import MeasureSpace, weak_lp_norm
from .sparse import SparseCollection, sparse_operator

H90_TOL = 1e-9
POWER_TOL = 1e-10


class Weight:
    """Strictly positive function on the atoms with per-p caches."""

    def __init__(self, values):
        arr = np.array(values, dtype=float).reshape(-1)
        if arr.size == 0 or not np.all(np.isfinite(arr)) or np.any(arr <= 0):
            raise ValueError("weight values must be finite and strictly positive")
        arr.setflags(write=False)
        self.values = arr
        self._char: dict[tuple[int, float], float] = {}
        self._dual: dict[float, Weight] = {}

    def __len__(self) -> int:
        return self.values.size

    def __repr__(self) -> str:
        return f"Weight({self.values.tolist()!r})"

    def characteristic(self, basis: BallBasis, p: float) -> float:
        key = (id(basis), float(p))
        if key not in self._char:
            self._char[key] = ap_characteristic(basis, self, p)
        return self._char[key]

    def dual(self, p: float) -> "Weight":
        if p not in self._dual:
            self._dual[p] = dual_weight(self, p)
        return self._dual[p]


def _values(w) -> np.ndarray:
    return w.values if isinstance(w, Weight) else Weight(w).values


def _check_p(p: float) -> None:
    if not p > 1:
        raise ValueError("p must exceed 1")


def _ball_products(basis: BallBasis, w: np.ndarray, p: float) -> np.ndarray:
    mu = basis.space.mass
    if w.size != mu.size:
        raise ValueError("weight length does not match the space")
    aw = basis.ind @ (w * mu) / basis.measures
    asig = basis.ind @ (w ** (-1.0 / (p - 1)) * mu) / basis.measures
    return aw * asig ** (p - 1)


def ap_characteristic(basis: BallBasis, w, p: float) -> float:
    """max over balls of <w>_B <w^(-1/(p-1))>_B^(p-1)."""
    _check_p(p)
    return float(_ball_products(basis, _values(w), p).max())


def conjugate(p: float) -> float:
    return p / (p - 1)


def dual_weight(w, p: float, basis: BallBasis | None = None) -> Weight:
    """sigma = w^(-1/(p-1)).

    With a basis, [sigma]_{A_q} = [w]_{A_p}^(1/(p-1)) is checked on the spot.
    """
    _check_p(p)
    sigma = Weight(_values(w) ** (-1.0 / (p - 1)))
    if basis is not None:
        lhs = ap_characteristic(basis, sigma, conjugate(p))
        rhs = ap_characteristic(basis, w, p) ** (1.0 / (p - 1))
        if abs(lhs - rhs) > H90_TOL * rhs:
            raise ArithmeticError(f"dual characteristic {lhs!r} differs from {rhs!r}")
    return sigma


# -- norms ---------------------------------------------------------------------


def weighted_lp(mu: np.ndarray, w: np.ndarray, f: np.ndarray, p: float) -> float:
    return float(np.sum(np.abs(f) ** p * w * mu) ** (1.0 / p))


def _power_norm(A: np.ndarray, max_iter: int = 200000) -> tuple[float, bool]:
    """Largest singular value of A by power iteration on A^T A."""
    G = A.T @ A
    n = G.shape[0]
    v = np.ones(n) + np.linspace(0.0, 0.5, n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        u = G @ v
        lam = float(v @ u)
        if lam == 0.0:
            return 0.0, True
        if np.linalg.norm(u - lam * v) <= POWER_TOL * lam:
            return math.sqrt(lam), True
        v = u / np.linalg.norm(u)
    return math.sqrt(lam), False


def _selection_matrix(T: MaximalOperator, f: np.ndarray) -> np.ndarray:
    """Averaging matrix of the balls attaining Mf at each atom."""
    b = T.basis
    a = b.ind @ (np.abs(f) * b.space.mass) / b.measures
    pick = np.where(b.ind, a[:, None], -np.inf).argmax(axis=0)
    return b.ind[pick] * b.space.mass[None, :] / b.measures[pick][:, None]


def _boyd_step(A: np.ndarray, f: np.ndarray, dens: np.ndarray, p: float) -> np.ndarray:
    u = A @ f
    v = A.T @ (dens * np.abs(u) ** (p - 1) * np.sign(u)) / dens
    g = np.sign(v) * np.abs(v) ** (1.0 / (p - 1))
    nrm = np.sum(np.abs(g) ** p * dens) ** (1.0 / p)
    return g / nrm if nrm > 0 else f


def weighted_operator_norm(
    T: SublinearOperator,
    basis: BallBasis,
    w,
    p: float,
    method: str = "auto",
    *,
    trials: int = 20,
    seed: int = 0,
    iters: int = 60,
) -> Estimate:
    """Norm of T on L^p(w mu).

    Linear T at p = 2 is exact: the spectral norm of D^(1/2) M D^(-1/2) with
    D = diag(w mu). Anything else is a lower bound from probes followed by a
    nonlinear power method and coordinate ascent.
    """
    if p < 1:
        raise ValueError("p must be at least 1")
    w = _values(w)
    mu = basis.space.mass
    dens = w * mu
    if method not in ("auto", "exact", "search"):
        raise ValueError(f"unknown method {method!r}")
    if isinstance(T, KernelOperator) and p == 2 and method != "search":
        s = np.sqrt(dens)
        A = s[:, None] * T.matrix / s[None, :]
        val, ok = _power_norm(A)
        if not ok:
            return Estimate(float(np.linalg.norm(A, 2)), "exact")
        return Estimate(val, "exact")
    if method == "exact":
        raise ValueError("exact norms need a linear operator and p = 2")

    def ratio(f):
        d = weighted_lp(mu, w, f, p)
        return weighted_lp(mu, w, T(f), p) / d if d > 0 else 0.0

    n = mu.size
    rng = np.random.default_rng(seed)
    probes = []
    if p > 1:
        sig = w ** (-1.0 / (p - 1))
        probes += [sig * basis.ind[b] for b in range(len(basis))]
    probes += [np.eye(n)[x] for x in range(n)]
    probes += [rng.exponential(size=n) for _ in range(trials)]
    probes += [rng.standard_normal(n) for _ in range(trials)]
    scored = sorted(((ratio(f), k) for k, f in enumerate(probes)), reverse=True)
    best, best_f = scored[0][0], probes[scored[0][1]]
    starts = [probes[k] for _, k in scored[:3]]

    linear = T.matrix if isinstance(T, KernelOperator) else None
    for f in starts:
        f = f / weighted_lp(mu, w, f, p)
        if p > 1 and (linear is not None or isinstance(T, MaximalOperator)):
            # monotone for positive operators: Mf dominates A_sel f pointwise
            for _ in range(iters):
                A = linear if linear is not None else _selection_matrix(T, f)
                g = _boyd_step(A, f, dens, p)
                rg = ratio(g)
                if rg <= best * (1 + 1e-13) and np.allclose(g, f, rtol=1e-10, atol=1e-14):
                    break
                f = g
                if rg > best:
                    best, best_f = rg, g
        f, val = _coordinate_ascent(ratio, f)
        if val > best:
            best, best_f = val, f
    return Estimate(float(best), "search lower bound")


def _coordinate_ascent(ratio, f: np.ndarray, sweeps: int = 2) -> tuple[np.ndarray, float]:
    f = f.copy()
    cur = ratio(f)
    for _ in range(sweeps):
        improved = False
        for x in range(f.size):
            scale = max(abs(f[x]), np.abs(f).max() * 1e-3, 1e-12)
            for step in (2.0, 0.5, -0.5, 0.1, -0.1):
                g = f.copy()
                g[x] += step * scale
                r = ratio(g)
                if r > cur * (1 + 1e-12):
                    f, cur, improved = g, r, True
        if not improved:
            break
    return f, cur


# -- weighted maximal function -------------------------------------------------


class WeightedMaximal(SublinearOperator):
    """sup over balls containing x of w(B)^(-1) sum_B |f| w mu."""

    def __init__(self, basis: BallBasis, w):
        super().__init__(basis.space, "weighted_maximal")
        self.basis = basis
        self.w = _values(w)
        self._wb = basis.ind @ (self.w * basis.space.mass)

    def _apply(self, g):
        a = self.basis.ind @ (np.abs(g) * self.w * self.basis.space.mass) / self._wb
        return np.where(self.basis.ind, a[:, None], 0.0).max(axis=0)


def weighted_maximal(basis: BallBasis, w) -> WeightedMaximal:
    return WeightedMaximal(basis, w)


@dataclass
class WeightLemmaReport:
    characteristic: float
    nested_pairs: int
    nested_ok: bool
    weak_constant: float
    weak_bound: float
    weak_ok: bool
    besicovitch_D: int | None
    besicovitch_ok: bool | None
    failures: list[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.nested_ok and self.weak_ok and self.besicovitch_ok is not False


def check_weight_lemmas(basis: BallBasis, w, p: float, *, samples: int = 200, seed: int = 0) -> WeightLemmaReport:
    _check_p(p)
    w = _values(w)
    mu = basis.space.mass
    char = ap_characteristic(basis, w, p)
    wb = basis.ind @ (w * mu)
    failures = []
    pairs = 0
    for a, b in all_nested_pairs(basis):
        pairs += 1
        lhs = wb[b] / wb[a]
        rhs = 2**p * char * (basis.measures[b] / basis.measures[a]) ** p
        if lhs > rhs * (1 + 1e-12):
            failures.append({"check": "nested", "A": a, "B": b, "lhs": float(lhs), "rhs": float(rhs)})
    nested_ok = not failures

    Mw = weighted_maximal(basis, w)
    wspace = MeasureSpace(w * mu)
    rng = np.random.default_rng(seed)
    n = mu.size
    probes = [np.eye(n)[x] for x in range(n)]
    probes += [rng.exponential(size=n) * (rng.random(n) < 0.3) for _ in range(samples)]
    weak = 0.0
    for f in probes:
        norm1 = float(np.sum(np.abs(f) * w * mu))
        if norm1 > 0:
            weak = max(weak, weak_lp_norm(wspace, Mw(f), 1) / norm1)
    bound = (2 * basis.K) ** p * char
    weak_ok = weak <= bound * (1 + 1e-12)
    if not weak_ok:
        failures.append({"check": "weak", "value": weak, "bound": bound})
    D = basis.besicovitch_D
    bes_ok = None
    if D is not None:
        bes_ok = weak <= D * (1 + 1e-12)
        if not bes_ok:
            failures.append({"check": "besicovitch", "value": weak, "bound": D})
    return WeightLemmaReport(char, pairs, nested_ok, float(weak), float(bound), bool(weak_ok), D, bes_ok, failures)


# -- sparse bounds -------------------------------------------------------------


def besicovitch_exponent(p: float) -> float:
    return max(1.0, 1.0 / (p - 1))


def general_exponent(p: float) -> float:
    return max((p + 2) / (p * (p - 1)), (3 * p - 2) / p)


@dataclass
class SparseWeightReport:
    norm: Estimate
    characteristic: float
    exponent: float
    D_factor: float
    route: str  # "besicovitch" | "general"
    c_min: float
    passed: bool
    dual_norm: Estimate | None
    duality_ok: bool | None
    failures: list[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.passed and self.duality_ok is not False


def sparse_weighted_bound_check(
    basis: BallBasis,
    S,
    w,
    p: float,
    gamma: float | None = None,
    *,
    c: float | None = None,
    r: float = 1.0,
    seed: int = 0,
) -> SparseWeightReport:
    """||A_S||_{L^p(w)} <= c gamma^-1 D-factor [w]^exponent, with the smallest working c.

    The Besicovitch route applies when the basis has a certified overlap
    constant D; otherwise the general exponent is used. At r = 1 the norm on
    L^q(sigma) is computed as the duality cross-check.
    """
    _check_p(p)
    if gamma is None:
        if not isinstance(S, SparseCollection):
            raise ValueError("gamma is required unless S is a certified collection")
        gamma = float(S.gamma)
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    w = Weight(_values(w))
    T = sparse_operator(basis, S, r)
    norm = weighted_operator_norm(T, basis, w, p, seed=seed)
    char = ap_characteristic(basis, w, p)
    D = basis.besicovitch_D
    if D is not None:
        exponent, dfac, route = besicovitch_exponent(p), float(D) ** max(1 / (p - 1), p - 1), "besicovitch"
    else:
        exponent, dfac, route = general_exponent(p), 1.0, "general"
    scale = dfac * char**exponent / gamma
    c_min = norm.value / scale
    failures = []
    passed = True
    if c is not None and c_min > c * (1 + 1e-9):
        passed = False
        failures.append({"check": "bound", "c_min": c_min, "c": c})
    dual = None
    duality_ok = None
    if r == 1:
        q = conjugate(p)
        dual = weighted_operator_norm(T, basis, dual_weight(w, p), q, seed=seed)
        tol = 1e-8 if p == 2 else 0.05
        duality_ok = abs(dual.value - norm.value) <= tol * max(norm.value, dual.value)
        if not duality_ok:
            failures.append({"check": "duality", "primal": norm.value, "dual": dual.value})
    return SparseWeightReport(norm, char, exponent, dfac, route, float(c_min), passed, dual, duality_ok, failures)


# -- power-weight sweeps -------------------------------------------------------


def power_weight(depth: int, a: float) -> Weight:
    n = 2**depth
    return Weight(((np.arange(n) + 0.5) / n) ** a)


def default_grid() -> list[float]:
    return [round(-0.9 + 0.1 * k, 10) for k in range(19)]


@dataclass
class BuckleyRow:
    a: float
    characteristic: float
    norm: float
    ratio: float


@dataclass
class BuckleySweep:
    p: float
    depth: int
    rows: list[BuckleyRow]
    monotone: bool
    max_ratio: float

    def to_csv(self) -> str:
        return rows_to_csv(
            ["a", "characteristic", "norm_lower_bound", "ratio"],
            [[r.a, r.characteristic, r.norm, r.ratio] for r in self.rows],
        )


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.12g}"
    return str(x)


def rows_to_csv(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(header)
    for row in rows:
        out.writerow([fmt(v) for v in row])
    return buf.getvalue()


def _characteristic_monotone(rows: list[BuckleyRow]) -> bool:
    """Characteristic grows moving away from a = 0 on either side."""
    left = [r.characteristic for r in rows if r.a <= 0]
    right = [r.characteristic for r in rows if r.a >= 0]
    tol = 1e-12
    return all(x >= y - tol for x, y in zip(left, left[1:])) and all(y >= x - tol for x, y in zip(right, right[1:]))


def buckley_sweep(depth: int = 6, p: float = 2.0, grid: Sequence[float] | None = None, *, seed: int = 0) -> BuckleySweep:
    _check_p(p)
    basis = dyadic_basis(depth)
    M = maximal_operator(basis)
    grid = default_grid() if grid is None else [float(a) for a in grid]
    rows = []
    for k, a in enumerate(sorted(grid)):
        w = power_weight(depth, a)
        char = ap_characteristic(basis, w, p)
        est = weighted_operator_norm(M, basis, w, p, seed=seed + k, trials=4)
        rows.append(BuckleyRow(a, char, est.value, est.value / char ** (1 / (p - 1))))
    return BuckleySweep(p, depth, rows, _characteristic_monotone(rows), max(r.ratio for r in rows))
