"""Operators on ball bases and estimation of their oscillation constants.

Every operator is evaluated pointwise on the whole atom set.  Linear operators
carry a kernel matrix ``kernel[x, y]`` with ``Tf(x) = sum_y kernel[x, y] f(y) mu_y``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .basis import BallBasis, avg_star, ball_averages
from .space import MeasureSpace, as_mask, lp_norm, weak_lp_norm


class SublinearOperator:
    is_linear = False
    kernel: np.ndarray | None = None

    def __init__(self, space: MeasureSpace, name: str):
        self.space = space
        self.name = name

    def __call__(self, f, mask=None) -> np.ndarray:
        g = self.space.function(f)
        if mask is not None:
            g = g * as_mask(self.space, mask)
        return self._apply(g)

    eval = __call__

    def _apply(self, g: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.name}>"


class KernelOperator(SublinearOperator):
    is_linear = True

    def __init__(self, space: MeasureSpace, kernel: np.ndarray, name: str = "kernel"):
        super().__init__(space, name)
        kernel = np.array(kernel, dtype=float)
        n = space.atom_count
        if kernel.shape != (n, n):
            raise ValueError(f"kernel must be {n}x{n}")
        if not np.all(np.isfinite(kernel)):
            raise ValueError("kernel entries must be finite")
        kernel.setflags(write=False)
        self.kernel = kernel

    def _apply(self, g: np.ndarray) -> np.ndarray:
        return self.rows(slice(None), g)

    def rows(self, rows, g: np.ndarray) -> np.ndarray:
        # row-wise sums: equal kernel rows give bitwise equal results, which the
        # exact localization checks rely on
        return (self.kernel[rows] * (g * self.space.mass)[None, :]).sum(axis=1)

    @property
    def matrix(self) -> np.ndarray:
        """Matrix acting on plain value vectors: (Tf)(x) = sum_y matrix[x, y] f(y)."""
        return self.kernel * self.space.mass[None, :]


def kernel_operator(space: MeasureSpace, kernel, name: str = "kernel") -> KernelOperator:
    """Linear operator with the given off-diagonal kernel; the diagonal is set to 0."""
    n = space.atom_count
    if callable(kernel):
        mat = np.zeros((n, n))
        for x in range(n):
            for y in range(n):
                if x != y:
                    mat[x, y] = kernel(x, y)
    else:
        mat = np.array(kernel, dtype=float)
        if mat.shape != (n, n):
            raise ValueError(f"kernel must be {n}x{n}")
        mat = mat.copy()
    if not np.all(np.isfinite(mat)):
        raise ValueError("kernel entries must be finite")
    np.fill_diagonal(mat, 0.0)
    return KernelOperator(space, mat, name)


def signed_displacement(n: int) -> np.ndarray:
    """s[i, j] = j - i reduced to (-n/2, n/2]."""
    i = np.arange(n)
    s = (i[None, :] - i[:, None]) % n
    return np.where(s > n / 2, s - n, s)


def discrete_hilbert(n: int) -> KernelOperator:
    """Kernel 1/s(i, j) on Z_n with masses 1/n; zero on the diagonal and at the antipode."""
    space = MeasureSpace.uniform(n)
    s = signed_displacement(n).astype(float)
    with np.errstate(divide="ignore"):
        k = np.where(s == 0, 0.0, 1.0 / np.where(s == 0, 1.0, s))
    if n % 2 == 0:
        k[s == n / 2] = 0.0
    return kernel_operator(space, k, name=f"hilbert{n}")


class MaximalOperator(SublinearOperator):
    def __init__(self, basis: BallBasis, r: float = 1.0):
        if r < 1:
            raise ValueError("r must be at least 1")
        super().__init__(basis.space, f"maximal_r{r:g}")
        self.basis = basis
        self.r = r

    def _apply(self, g):
        a = ball_averages(self.basis, g, self.r)
        return np.where(self.basis.ind, a[:, None], 0.0).max(axis=0)


def maximal_operator(basis: BallBasis, r: float = 1.0) -> MaximalOperator:
    return MaximalOperator(basis, r)


def internal_nodes(basis: BallBasis) -> list[int]:
    if not basis.is_tree:
        raise ValueError("martingale transforms need a tree basis")
    return sorted({p for p in basis.parent if p is not None})


def martingale_transform(basis: BallBasis, signs: Mapping[int, int] | Sequence[int] | None = None) -> KernelOperator:
    """sum_A eps_A Delta_A over the internal nodes A (all signs +1 when omitted)."""
    nodes = internal_nodes(basis)
    if signs is None:
        signs = {a: 1 for a in nodes}
    elif not isinstance(signs, Mapping):
        signs = dict(enumerate(signs))
    missing = [a for a in nodes if a not in signs]
    if missing:
        raise ValueError(f"no sign for internal nodes {missing}")
    n = basis.space.atom_count
    kern = np.zeros((n, n))
    for a in nodes:
        eps = float(signs[a])
        ia = basis.ind[a] / basis.measures[a]
        for c in basis.children(a):
            rows = basis.ind[c]
            kern[rows] += eps * (basis.ind[c] / basis.measures[c] - ia)[None, :]
    return KernelOperator(basis.space, kern, name="martingale")


def random_signs(basis: BallBasis, seed: int) -> dict[int, int]:
    rng = np.random.default_rng(seed)
    nodes = internal_nodes(basis)
    return {a: int(s) for a, s in zip(nodes, rng.choice([-1, 1], size=len(nodes)))}


class TStar(SublinearOperator):
    """sup over balls B containing x of |T(f 1_{X minus B*})(x)|."""

    def __init__(self, T: SublinearOperator, basis: BallBasis, inside: bool = False):
        super().__init__(basis.space, ("t_star_star(" if inside else "t_star(") + T.name + ")")
        self.T = T
        self.basis = basis
        self.inside = inside

    def _apply(self, g):
        b = self.basis
        region = b.ind[b.hull]
        keep = region if self.inside else ~region
        if isinstance(self.T, KernelOperator):
            # row B holds T(g 1_keep(B)) at every atom; mask to x in B
            vals = np.abs((keep * (g * b.space.mass)[None, :]) @ self.T.kernel.T)
            return np.where(b.ind, vals, 0.0).max(axis=0)
        out = np.zeros(b.space.atom_count)
        for B in range(len(b)):
            region = b.ind[b.hull[B]]
            keep = region if self.inside else ~region
            if not (keep & (g != 0)).any():
                continue
            rows = b.ind[B]
            if isinstance(self.T, KernelOperator):
                vals = self.T.rows(rows, g * keep)
            else:
                vals = self.T._apply(g * keep)[rows]
            out[rows] = np.maximum(out[rows], np.abs(vals))
        return out


def t_star(T: SublinearOperator, basis: BallBasis) -> TStar:
    return TStar(T, basis)


def t_star_star(T: SublinearOperator, basis: BallBasis) -> TStar:
    """sup over balls B containing x of |T(f 1_{B*})(x)|."""
    return TStar(T, basis, inside=True)


class MaximalModulation(SublinearOperator):
    def __init__(self, T: SublinearOperator, modulators: Sequence):
        mods = [T.space.function(g) for g in modulators]
        if not mods:
            raise ValueError("at least one modulator is required")
        super().__init__(T.space, f"modulated({T.name},{len(mods)})")
        self.T = T
        self.modulators = mods

    def _apply(self, g):
        return np.max([np.abs(self.T._apply(m * g)) for m in self.modulators], axis=0)


def maximal_modulation(T: SublinearOperator, modulators: Sequence) -> MaximalModulation:
    return MaximalModulation(T, modulators)


def walsh_modulators(n: int) -> list[np.ndarray]:
    """The n sign patterns (-1)^popcount(k & j), n a power of two."""
    j = np.arange(n)
    return [np.array([(-1.0) ** bin(k & int(x)).count("1") for x in j]) for k in range(n)]


# -- annulus action ------------------------------------------------------------


@dataclass(frozen=True)
class Estimate:
    value: float
    method: str  # "exact" | "closed-form" | "search lower bound"

    def __float__(self) -> float:
        return self.value


def _search_sup(
    ratio: Callable[[np.ndarray], float],
    support: np.ndarray,
    n: int,
    rng: np.random.Generator,
    trials: int,
    extra: Sequence[np.ndarray] = (),
    sweeps: int = 2,
) -> float:
    """Lower bound for sup_f ratio(f) over f supported on ``support``.

    Probes single atoms, the given extra inputs and random signed inputs, then
    runs coordinate ascent from the best three.
    """
    idx = np.flatnonzero(support)
    if idx.size == 0:
        return 0.0
    probes = []
    for y in idx:
        e = np.zeros(n)
        e[y] = 1.0
        probes.append(e)
    probes += [np.asarray(p, dtype=float) * support for p in extra]
    for _ in range(trials):
        f = np.zeros(n)
        f[idx] = rng.choice([-1.0, 1.0], size=idx.size) * rng.exponential(size=idx.size)
        probes.append(f)
    scored = sorted(((ratio(p), k) for k, p in enumerate(probes) if np.any(p)), reverse=True)
    best = scored[0][0] if scored else 0.0
    for _, k in scored[:3]:
        f = probes[k].copy()
        cur = ratio(f)
        for _ in range(sweeps):
            improved = False
            scale = np.abs(f).max()
            for y in idx:
                for new in (0.0, 2 * f[y], 0.5 * f[y], -f[y], f[y] + scale, f[y] - scale):
                    if new == f[y]:
                        continue
                    old = f[y]
                    f[y] = new
                    if np.any(f):
                        val = ratio(f)
                        if val > cur * (1 + 1e-12):
                            cur = val
                            improved = True
                            continue
                    f[y] = old
            if not improved:
                break
        best = max(best, cur)
    return float(best)


def delta(
    T: SublinearOperator,
    basis: BallBasis,
    A: int,
    B: int,
    r: float = 1.0,
    *,
    trials: int = 8,
    seed: int = 0,
) -> Estimate:
    """sup over x in A and f of |T(f 1_{B* minus A*})(x)| / <f>_{B*, r}."""
    if not basis.contains(B, A):
        raise ValueError(f"ball {A} is not contained in ball {B}")
    outer = basis.ind[basis.hull[B]]
    mask = outer & ~basis.ind[basis.hull[A]]
    rows = basis.ind[A]
    if not mask.any():
        return Estimate(0.0, "exact")
    mu_outer = basis.measures[basis.hull[B]]
    if isinstance(T, KernelOperator):
        block = np.abs(T.kernel[np.ix_(rows, mask)])
        if r == 1:
            # numerator linear in f, denominator a single average: the sup is
            # attained on a single atom, where the ratio is mu(B*)|kernel(x, y)|
            return Estimate(float(mu_outer * block.max()), "closed-form")
        # Hoelder duality between L^r and L^r' on the annulus
        rp = r / (r - 1)
        dual = (block**rp * basis.space.mass[mask][None, :]).sum(axis=1) ** (1 / rp)
        return Estimate(float(mu_outer ** (1 / r) * dual.max()), "closed-form")
    rng = np.random.default_rng(seed)
    mass = basis.space.mass

    def ratio(f):
        den = (np.sum(np.abs(f[outer]) ** r * mass[outer]) / mu_outer) ** (1 / r)
        if den == 0:
            return 0.0
        return float(np.abs(T(f, mask)[rows]).max() / den)

    return Estimate(_search_sup(ratio, mask, basis.space.atom_count, rng, trials), "search lower bound")


def parent_step_ratio(T: KernelOperator, basis: BallBasis) -> float:
    """max over non-root A of mu(pr A) max_{x in A, y in pr A minus A} |kernel(x, y)|."""
    best = 0.0
    for a, p in enumerate(basis.parent):
        if p is None:
            continue
        cols = basis.ind[p] & ~basis.ind[a]
        if cols.any():
            best = max(best, basis.measures[p] * np.abs(T.kernel[np.ix_(basis.ind[a], cols)]).max())
    return float(best)


# -- oscillation constants -----------------------------------------------------


@dataclass
class BOReport:
    L1_estimate: float
    L1_method: str
    L2_estimate: float
    L2_method: str
    weak_norm: float
    weak_method: str = "search lower bound"
    parent_step: float | None = None
    nested_pair_bound: dict = field(default_factory=dict)
    delta_equality: dict = field(default_factory=dict)
    monotonicity: dict = field(default_factory=dict)
    L1_witnesses: dict[int, float] = field(default_factory=dict)
    L2_witnesses: dict[int, tuple[int, float]] = field(default_factory=dict)

    @property
    def total(self) -> float:
        """L1 + L2 + weak norm, the constant driving the stopping sets."""
        return self.L1_estimate + self.L2_estimate + self.weak_norm


def _localization(T, basis, r, trials, rng) -> tuple[float, bool, dict[int, float]]:
    n = basis.space.atom_count
    mass = basis.space.mass
    best = 0.0
    exact_zero = isinstance(T, KernelOperator)
    per_ball = {}
    for B in range(len(basis)):
        out = ~basis.ind[basis.hull[B]]
        rows = basis.ind[B]
        if not out.any() or rows.sum() < 2:
            per_ball[B] = 0.0
            continue
        if isinstance(T, KernelOperator):
            sub = T.kernel[np.ix_(rows, out)]
            if np.any(sub.max(axis=0) != sub.min(axis=0)):
                exact_zero = False
        sup = basis.supersets(B)
        probes = []
        for y in np.flatnonzero(out):
            e = np.zeros(n)
            e[y] = 1.0
            probes.append(e)
        for A in sup:
            probes.append((basis.ind[A] & out).astype(float))
        for _ in range(trials):
            f = np.zeros(n)
            f[out] = rng.choice([-1.0, 1.0], size=out.sum()) * rng.exponential(size=out.sum())
            probes.append(f)
        val = 0.0
        for f in probes:
            if not f.any():
                continue
            tf = T(f, out)[rows]
            spread = tf.max() - tf.min()
            if spread:
                den = (ball_averages(basis, f, r)[sup]).max()
                val = max(val, spread / den)
        per_ball[B] = float(val)
        best = max(best, val)
    return float(best), exact_zero, per_ball


def _weak_norm(T, basis, r, trials, rng) -> float:
    n = basis.space.atom_count
    probes = [np.eye(n)[y] for y in range(n)]
    probes += [basis.ind[b].astype(float) for b in range(len(basis))]
    for _ in range(trials):
        f = rng.standard_normal(n) * (rng.random(n) < rng.uniform(0.1, 1.0))
        probes.append(f)
    best = 0.0
    for f in probes:
        if not f.any():
            continue
        best = max(best, weak_lp_norm(basis.space, T(f), r) / lp_norm(basis.space, f, r))
    return float(best)


def verify_bo(
    T: SublinearOperator,
    basis: BallBasis,
    r: float = 1.0,
    trials: int = 20,
    seed: int = 0,
    *,
    sample_pairs: int = 40,
    sample_triples: int = 200,
) -> BOReport:
    """Estimate the localization and connectivity constants of T and run the consistency checks."""
    rng = np.random.default_rng(seed)
    L1, exact_zero, l1_w = _localization(T, basis, r, trials, rng)
    L1_method = "exact" if exact_zero else "search lower bound"
    if exact_zero:
        L1 = 0.0

    deltas: dict[tuple[int, int], Estimate] = {}

    def dl(a, b):
        if (a, b) not in deltas:
            deltas[(a, b)] = delta(T, basis, a, b, r, trials=max(2, trials // 4), seed=int(rng.integers(2**32)))
        return deltas[(a, b)]

    L2 = 0.0
    methods = set()
    l2_w = {}
    for a in range(len(basis)):
        if basis.hull[a] == basis.whole:
            continue
        cands = basis.supersets(a, strict=True)
        if not cands:
            continue
        vals = [(dl(a, b).value, b) for b in cands]
        methods |= {dl(a, b).method for b in cands}
        v, b = min(vals)
        l2_w[a] = (b, v)
        L2 = max(L2, v)
    L2_method = "search lower bound" if "search lower bound" in methods else "closed-form"

    weak = _weak_norm(T, basis, r, trials, rng)

    parent = None
    if basis.is_tree and isinstance(T, KernelOperator) and r == 1:
        parent = parent_step_ratio(T, basis)

    # explicit form of the nested-pair bound: (2K)^(1/r) (L1 + weak) (mu(B)/mu(A))^(1/r)
    nested = [(a, b) for a in range(len(basis)) for b in basis.supersets(a)]
    if not isinstance(T, KernelOperator) and len(nested) > sample_pairs:
        pick = rng.choice(len(nested), size=sample_pairs, replace=False)
        nested = [nested[k] for k in sorted(pick)]
    worst = 0.0
    scale = (2 * basis.K) ** (1 / r) * (L1 + weak)
    for a, b in nested:
        bound = scale * (basis.measures[b] / basis.measures[a]) ** (1 / r)
        d = dl(a, b).value
        if d > 0:
            worst = max(worst, d / bound if bound > 0 else math.inf)
    nested_check = {"pairs": len(nested), "worst_ratio": float(worst), "passed": bool(worst <= 1 + 1e-9)}

    # Delta of T* against Delta of T on sampled pairs
    eq = {}
    if isinstance(T, KernelOperator) and r == 1:
        ts = t_star(T, basis)
        pairs = [(a, b) for a, b in deltas if a != b]
        if len(pairs) > 8:
            pick = rng.choice(len(pairs), size=8, replace=False)
            pairs = [pairs[k] for k in sorted(pick)]
        gap = 0.0
        for a, b in pairs:
            lhs = delta(ts, basis, a, b, r, trials=2).value
            rhs = deltas[(a, b)].value
            gap = max(gap, abs(lhs - rhs) / max(rhs, 1e-300) if rhs else abs(lhs))
        eq = {"pairs": len(pairs), "max_rel_gap": float(gap), "passed": bool(gap <= 1e-9)}

    mono = {}
    if L2_method == "closed-form":
        triples = []
        for a in range(len(basis)):
            sup = basis.supersets(a)
            for b in sup:
                for c in sup:
                    if basis.contains(c, b):
                        triples.append((a, b, c))
        if len(triples) > sample_triples:
            pick = rng.choice(len(triples), size=sample_triples, replace=False)
            triples = [triples[k] for k in sorted(pick)]
        bad = [t for t in triples if dl(t[0], t[1]).value > dl(t[0], t[2]).value * (1 + 1e-12) + 1e-15]
        mono = {"triples": len(triples), "violations": bad[:5], "passed": not bad}

    return BOReport(
        L1_estimate=L1,
        L1_method=L1_method,
        L2_estimate=float(L2),
        L2_method=L2_method,
        weak_norm=weak,
        parent_step=parent,
        nested_pair_bound=nested_check,
        delta_equality=eq,
        monotonicity=mono,
        L1_witnesses=l1_w,
        L2_witnesses=l2_w,
    )
