"""Ball bases on finite measure spaces: construction, hulls and axiom checks.

Balls are stored as atom sets with integer ids.  The whole space is always a
member.  Subset and intersection tests use Python int bitmasks, averages use a
boolean ball-by-atom incidence matrix.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .space import MeasureSpace, as_mask

# relative slack for the "mu(A) <= 2 mu(B)" comparisons on float masses
REL_TOL = 1e-12


def _le(a: float, b: float) -> bool:
    return a <= b * (1.0 + REL_TOL)


def _bits(atoms: Iterable[int]) -> int:
    out = 0
    for a in atoms:
        out |= 1 << int(a)
    return out


def _atoms_of(bits: int) -> tuple[int, ...]:
    out = []
    i = 0
    while bits:
        if bits & 1:
            out.append(i)
        bits >>= 1
        i += 1
    return tuple(out)


@dataclass(frozen=True)
class Ball:
    id: int
    atoms: tuple[int, ...]
    measure: float
    center: int | None = None
    radius: float | None = None

    def __contains__(self, atom: int) -> bool:
        return atom in self.atoms


class BallBasis:
    """A finite ball basis with its hull map.

    ``hull`` maps a ball id to the id of its hull. ``K`` is the measured
    constant max mu(B*)/mu(B). Tree bases also carry ``parent``.
    """

    def __init__(
        self,
        space: MeasureSpace,
        sets: Sequence[Iterable[int]],
        hull: Sequence[int] | dict[int, int] | None = None,
        *,
        parent: Sequence[int | None] | None = None,
        centers: Sequence[int | None] | None = None,
        radii: Sequence[float | None] | None = None,
        kind: str = "generic",
    ):
        self.space = space
        n_atoms = space.atom_count
        bits = []
        for s in sets:
            atoms = sorted({int(a) for a in s})
            if not atoms:
                raise ValueError("balls must be nonempty")
            if atoms[0] < 0 or atoms[-1] >= n_atoms:
                raise ValueError(f"ball refers to an atom outside 0..{n_atoms - 1}")
            bits.append(_bits(atoms))
        if len(set(bits)) != len(bits):
            raise ValueError("duplicate balls in basis")
        full = (1 << n_atoms) - 1
        if full not in bits:
            raise ValueError("the whole space must be a ball of the basis")
        self.bits: list[int] = bits
        self.whole: int = bits.index(full)
        self.kind = kind
        self.ind = np.zeros((len(bits), n_atoms), dtype=bool)
        for i, b in enumerate(bits):
            self.ind[i, list(_atoms_of(b))] = True
        self.ind.setflags(write=False)
        self.measures = np.array([math.fsum(space.mass[row].tolist()) for row in self.ind])
        self.measures.setflags(write=False)
        centers = centers or [None] * len(bits)
        radii = radii or [None] * len(bits)
        self.balls = [
            Ball(i, _atoms_of(b), float(self.measures[i]), centers[i], radii[i])
            for i, b in enumerate(bits)
        ]
        # ids sorted by (measure, id): the first superset found is the minimal container
        self._by_measure = sorted(range(len(bits)), key=lambda i: (self.measures[i], i))
        self.parent = list(parent) if parent is not None else None
        if hull is None:
            self.hull = [compute_hull(self, i).id for i in range(len(bits))]
        elif isinstance(hull, dict):
            base = [compute_hull(self, i).id for i in range(len(bits))]
            for k, v in hull.items():
                base[int(k)] = int(v)
            self.hull = base
        else:
            self.hull = [int(h) for h in hull]
        if len(self.hull) != len(bits):
            raise ValueError("hull map must cover every ball")
        self.K = max(self.measures[self.hull[i]] / self.measures[i] for i in range(len(bits)))
        self._eta: float | None | bool = False
        self._besicovitch: tuple[int | None, str] | None = None

    # -- basic queries -------------------------------------------------
    def __len__(self) -> int:
        return len(self.bits)

    @property
    def is_tree(self) -> bool:
        return self.parent is not None

    def mask(self, i: int) -> np.ndarray:
        return self.ind[i]

    def contains(self, outer: int, inner: int) -> bool:
        return self.bits[inner] & ~self.bits[outer] == 0

    def intersects(self, i: int, j: int) -> bool:
        return self.bits[i] & self.bits[j] != 0

    def hull_level(self, i: int, n: int = 1) -> int:
        for _ in range(n):
            i = self.hull[i]
        return i

    def minimal_container(self, atoms) -> int:
        """Smallest-measure ball containing ``atoms`` (smallest id on ties)."""
        target = atoms if isinstance(atoms, int) else _bits(np.flatnonzero(as_mask(self.space, atoms)))
        for i in self._by_measure:
            if target & ~self.bits[i] == 0:
                return i
        return self.whole  # pragma: no cover - the whole space contains everything

    def supersets(self, i: int, strict: bool = False) -> list[int]:
        return [j for j in range(len(self)) if self.contains(j, i) and not (strict and j == i)]

    def containing_atom(self, atom: int) -> list[int]:
        return [int(j) for j in np.flatnonzero(self.ind[:, atom])]

    def children(self, i: int) -> list[int]:
        if self.parent is None:
            raise ValueError("children are defined for tree bases only")
        return [j for j, p in enumerate(self.parent) if p == i]

    def by_atoms(self, atoms) -> int:
        """Id of the ball with exactly this atom set."""
        b = _bits(np.flatnonzero(as_mask(self.space, atoms)))
        try:
            return self.bits.index(b)
        except ValueError:
            raise KeyError(f"no ball with atoms {_atoms_of(b)}") from None

    def with_hull(self, overrides: dict[int, int]) -> "BallBasis":
        """Copy of this basis with some hull entries replaced (used to build counterexamples)."""
        hull = list(self.hull)
        for k, v in overrides.items():
            hull[k] = v
        return BallBasis(
            self.space,
            [b.atoms for b in self.balls],
            hull,
            parent=self.parent,
            centers=[b.center for b in self.balls],
            radii=[b.radius for b in self.balls],
            kind=self.kind,
        )

    # -- derived constants ---------------------------------------------
    @property
    def doubling_eta(self) -> float | None:
        if self._eta is False:
            self._eta = _doubling(self)[0]
        return self._eta  # type: ignore[return-value]

    @property
    def besicovitch_D(self) -> int | None:
        """Certified Besicovitch constant, or None when only an estimate is available."""
        D, method = self.besicovitch()
        return D if method != "upper estimate" else None

    def besicovitch(self) -> tuple[int | None, str]:
        if self._besicovitch is None:
            self._besicovitch = _besicovitch(self)
        return self._besicovitch


def compute_hull(basis: BallBasis, B: int) -> Ball:
    """Minimal ball containing every ball A with mu(A) <= 2 mu(B) meeting B."""
    mb = basis.measures[B]
    union = basis.bits[B]
    for j, bj in enumerate(basis.bits):
        if bj & basis.bits[B] and _le(basis.measures[j], 2 * mb):
            union |= bj
    return basis.balls[basis.minimal_container(union)]


# -- constructors ------------------------------------------------------------


def build_tree_basis(space: MeasureSpace, nodes: Sequence[Iterable[int]]) -> BallBasis:
    """Tree (martingale) basis from a nested family of atom sets.

    Every node must be partitioned by its children, leaves must be single
    atoms and the root must be the whole space.  The hull of A is the largest
    ancestor of measure at most 2 mu(A), or A itself.
    """
    n = space.atom_count
    sets = [frozenset(int(a) for a in s) for s in nodes]
    if len(set(sets)) != len(sets):
        raise ValueError("duplicate tree nodes")
    if frozenset(range(n)) not in sets:
        raise ValueError("the root must be the whole space")
    for s in sets:
        if not s or min(s) < 0 or max(s) >= n:
            raise ValueError("tree node refers to atoms outside the space")
    # parent = smallest strict superset; laminarity makes it unique
    parent: list[int | None] = []
    for i, s in enumerate(sets):
        sup = [j for j, t in enumerate(sets) if j != i and s < t]
        for j, t in enumerate(sets):
            if j != i and s & t and not (s <= t or t <= s):
                raise ValueError(f"tree nodes {sorted(s)} and {sorted(t)} overlap without nesting")
        parent.append(min(sup, key=lambda j: len(sets[j])) if sup else None)
    kids: dict[int, list[int]] = {i: [] for i in range(len(sets))}
    for i, p in enumerate(parent):
        if p is not None:
            kids[p].append(i)
    for i, s in enumerate(sets):
        if kids[i]:
            if frozenset().union(*(sets[c] for c in kids[i])) != s:
                raise ValueError(f"children of node {sorted(s)} do not partition it")
        elif len(s) != 1:
            raise ValueError(f"leaf {sorted(s)} is not a single atom")
    covered = frozenset().union(*(s for s in sets if len(s) == 1))
    if covered != frozenset(range(n)):
        raise ValueError(f"orphan atoms {sorted(set(range(n)) - covered)}")

    def depth(i):
        d = 0
        while parent[i] is not None:
            i = parent[i]
            d += 1
        return d

    order = sorted(range(len(sets)), key=lambda i: (depth(i), min(sets[i])))
    pos = {old: new for new, old in enumerate(order)}
    sets = [sets[i] for i in order]
    parent = [None if parent[i] is None else pos[parent[i]] for i in order]
    mass = [space.measure(s) for s in sets]
    hull = []
    for i in range(len(sets)):
        h = i
        while parent[h] is not None and _le(mass[parent[h]], 2 * mass[i]):
            h = parent[h]
        hull.append(h)
    return BallBasis(space, [sorted(s) for s in sets], hull, parent=parent, kind="tree")


def dyadic_basis(depth: int, mass: Sequence[float] | None = None) -> BallBasis:
    """Balanced binary tree over 2**depth atoms (uniform probability masses by default)."""
    n = 2**depth
    space = MeasureSpace(mass if mass is not None else np.full(n, 1.0 / n))
    if space.atom_count != n:
        raise ValueError("mass profile length must be 2**depth")
    nodes = []
    for level in range(depth + 1):
        size = n >> level
        nodes += [range(k * size, (k + 1) * size) for k in range(2**level)]
    return build_tree_basis(space, nodes)


@dataclass(frozen=True)
class QuasiMetricSpec:
    distance: np.ndarray
    triangle_constant: float = 1.0

    @property
    def point_count(self) -> int:
        return int(self.distance.shape[0])


class QuasiMetricError(ValueError):
    def __init__(self, message: str, witness: tuple[int, ...]):
        super().__init__(f"{message}: {witness}")
        self.witness = witness


def cyclic_metric(n: int, triangle_constant: float = 1.0) -> QuasiMetricSpec:
    i = np.arange(n)
    d = np.abs(i[:, None] - i[None, :])
    return QuasiMetricSpec(np.minimum(d, n - d).astype(float), triangle_constant)


def check_quasi_metric(spec: QuasiMetricSpec) -> None:
    d = np.asarray(spec.distance, dtype=float)
    n = d.shape[0]
    if d.shape != (n, n):
        raise QuasiMetricError("distance matrix must be square", (n,))
    if spec.triangle_constant < 1:
        raise QuasiMetricError("triangle constant must be at least 1", ())
    bad = np.argwhere(~np.isfinite(d) | (d < 0))
    if bad.size:
        raise QuasiMetricError("distances must be finite and nonnegative", tuple(int(v) for v in bad[0]))
    bad = np.argwhere(d != d.T)
    if bad.size:
        raise QuasiMetricError("distance not symmetric", tuple(int(v) for v in bad[0]))
    off = ~np.eye(n, dtype=bool)
    bad = np.argwhere(np.diag(d) != 0)
    if bad.size:
        raise QuasiMetricError("nonzero self-distance", (int(bad[0][0]),) * 2)
    bad = np.argwhere(off & (d == 0))
    if bad.size:
        raise QuasiMetricError("zero distance between distinct points", tuple(int(v) for v in bad[0]))
    D = spec.triangle_constant
    for z in range(n):
        viol = d > D * (d[:, [z]] + d[[z], :]) * (1 + REL_TOL)
        if viol.any():
            x, y = np.argwhere(viol)[0]
            raise QuasiMetricError("quasi-triangle inequality fails for (x, y, z)", (int(x), int(y), z))


def build_arc_basis(spec: QuasiMetricSpec, masses: Sequence[float] | None = None) -> BallBasis:
    """All distinct balls {y : rho(x, y) < r} over realized radii, plus the whole space.

    Hull of B: gamma = largest radius among balls A meeting B with
    mu(A) <= 2 mu(B); take the smallest ball containing B(c(B), 4 D^2 gamma)
    together with all such A.
    """
    check_quasi_metric(spec)
    d = np.asarray(spec.distance, dtype=float)
    n = spec.point_count
    space = MeasureSpace(masses if masses is not None else np.ones(n))
    if space.atom_count != n:
        raise ValueError("one mass per point is required")
    radii = sorted({float(v) for v in d.ravel() if v > 0})
    radii.append((radii[-1] if radii else 0.0) + 1.0)
    seen: dict[int, int] = {}
    sets, centers, rads = [], [], []
    full = (1 << n) - 1
    sets.append(tuple(range(n)))
    centers.append(0)
    rads.append(radii[-1])
    seen[full] = 0
    for x in range(n):
        for r in radii:
            atoms = tuple(int(y) for y in np.flatnonzero(d[x] < r))
            b = _bits(atoms)
            if b not in seen:
                seen[b] = len(sets)
                sets.append(atoms)
                centers.append(x)
                rads.append(r)
    proto = BallBasis(space, sets, list(range(len(sets))), centers=centers, radii=rads, kind="arc")
    D2 = spec.triangle_constant**2
    hull = []
    for i in range(len(sets)):
        mb = proto.measures[i]
        gamma = 0.0
        union = proto.bits[i]
        for j, bj in enumerate(proto.bits):
            if bj & proto.bits[i] and _le(proto.measures[j], 2 * mb):
                gamma = max(gamma, rads[j])
                union |= bj
        big = _bits(np.flatnonzero(d[centers[i]] < 4 * D2 * gamma))
        hull.append(proto.minimal_container(big | union))
    basis = BallBasis(space, sets, hull, centers=centers, radii=rads, kind="arc")
    basis.metric = spec  # type: ignore[attr-defined]
    return basis


def homogeneity_constant(basis: BallBasis) -> float | None:
    """max mu(B(c, 2r)) / mu(B(c, r)) over the arc balls; None for non-metric bases."""
    spec = getattr(basis, "metric", None)
    if spec is None:
        return None
    best = 1.0
    for b in basis.balls:
        if b.id == basis.whole:
            continue
        dbl = spec.distance[b.center] < 2 * b.radius
        best = max(best, basis.space.measure(dbl) / b.measure)
    return best


# -- axiom verification ------------------------------------------------------


@dataclass
class AxiomReport:
    passed: dict[str, bool]
    K: float
    eta: float | None
    D: int | None
    D_method: str
    singletons: bool
    failures: list[dict] = field(default_factory=list)
    homogeneity: float | None = None

    @property
    def ok(self) -> bool:
        return all(self.passed.values())


def _doubling(basis: BallBasis) -> tuple[float | None, list[dict]]:
    eta = None
    failures = []
    for a in range(len(basis)):
        if basis.hull[a] == basis.whole:
            continue
        sup = basis.supersets(a, strict=True)
        if not sup:
            failures.append({"check": "doubling", "ball": a})
            continue
        ratio = min(basis.measures[b] for b in sup) / basis.measures[a]
        eta = ratio if eta is None else max(eta, ratio)
    return eta, failures


def verify_axioms(basis: BallBasis, besicovitch_limit: int = 12) -> AxiomReport:
    n = len(basis)
    failures: list[dict] = []
    passed: dict[str, bool] = {}

    passed["positive_measure"] = bool(np.all(basis.measures > 0) and np.all(np.isfinite(basis.measures)))
    pair = np.zeros((basis.space.atom_count,) * 2, dtype=bool)
    for row in basis.ind:
        pair |= np.outer(row, row)
    passed["pairs_covered"] = bool(pair.all())
    if not passed["pairs_covered"]:
        x, y = np.argwhere(~pair)[0]
        failures.append({"check": "pairs_covered", "atoms": [int(x), int(y)]})
    singles = {b.atoms[0] for b in basis.balls if len(b.atoms) == 1}
    passed["approximation"] = True

    hull_absorbs = True
    hull_measure_ok = True
    K = basis.K
    for b in range(n):
        hb = basis.hull[b]
        if basis.measures[hb] > K * basis.measures[b] * (1 + REL_TOL):
            hull_measure_ok = False
            failures.append({"check": "hull_measure", "ball": b, "hull": hb})
        for a in range(n):
            if basis.intersects(a, b) and _le(basis.measures[a], 2 * basis.measures[b]):
                if not basis.contains(hb, a):
                    hull_absorbs = False
                    failures.append({"check": "hull", "ball": b, "hull": hb, "witness": a})
    passed["hull"] = hull_absorbs and hull_measure_ok
    passed["two_balls"] = hull_absorbs

    growth = True
    for b in range(n):
        h = b
        for level in range(1, 5):
            h = basis.hull[h]
            if basis.measures[h] > K**level * basis.measures[b] * (1 + REL_TOL):
                growth = False
                failures.append({"check": "hull_growth", "ball": b, "level": level})
    passed["hull_growth"] = growth

    eta, dfail = _doubling(basis)
    failures += dfail
    passed["doubling"] = not dfail
    D, method = _besicovitch(basis, besicovitch_limit)
    return AxiomReport(
        passed=passed,
        K=float(K),
        eta=None if eta is None else float(eta),
        D=D,
        D_method=method,
        singletons=len(singles) == basis.space.atom_count,
        failures=failures,
        homogeneity=homogeneity_constant(basis),
    )


def _besicovitch(basis: BallBasis, limit: int = 12) -> tuple[int | None, str]:
    if basis.is_tree:
        # nested families: the maximal members are disjoint and cover the union
        return 1, "structural"
    if len(basis) <= limit:
        return _besicovitch_exhaustive(basis), "exhaustive"
    return _besicovitch_estimate(basis)


def _besicovitch_exhaustive(basis: BallBasis) -> int:
    """max over subfamilies F of min over union-preserving subfamilies C of the overlap of C."""
    n = len(basis)
    size = 1 << n
    ind = basis.ind.astype(np.int64)
    counts = np.zeros((size, ind.shape[1]), dtype=np.int64)
    union = [0] * size
    for c in range(1, size):
        low = (c & -c).bit_length() - 1
        counts[c] = counts[c & (c - 1)] + ind[low]
        union[c] = union[c & (c - 1)] | basis.bits[low]
    overlap = counts.max(axis=1)
    label: dict[int, int] = {}
    uid = np.array([label.setdefault(u, len(label)) for u in union])
    allc = np.arange(size)
    best = 0
    for F in range(1, size):
        sub = allc[((allc & ~F) == 0) & (uid == uid[F])]
        best = max(best, int(overlap[sub].min()))
    return best


def _besicovitch_estimate(basis: BallBasis, samples: int = 200, seed: int = 0) -> tuple[int, str]:
    """Greedy bounded-overlap subcovers of sampled subfamilies."""
    rng = np.random.default_rng(seed)
    n = len(basis)
    families = [list(range(n))]
    families += [basis.containing_atom(x) for x in range(basis.space.atom_count)]
    for _ in range(samples):
        families.append([i for i in range(n) if rng.random() < 0.3] or [0])
    worst = 1
    for fam in families:
        fam = sorted(fam, key=lambda i: (-basis.measures[i], i))
        target = 0
        for i in fam:
            target |= basis.bits[i]
        chosen, got = [], 0
        for i in fam:
            if basis.bits[i] & ~got:
                chosen.append(i)
                got |= basis.bits[i]
        # drop members made redundant by later picks
        for i in list(chosen):
            rest = 0
            for j in chosen:
                if j != i:
                    rest |= basis.bits[j]
            if rest == target:
                chosen.remove(i)
        worst = max(worst, int(basis.ind[chosen].sum(axis=0).max()))
    return worst, "upper estimate"


def avg_star(basis: BallBasis, f, B: int, r: float = 1.0) -> float:
    """max of avg(f, A, r) over balls A containing B."""
    f = np.abs(basis.space.function(f))
    sup = basis.supersets(B)
    vals = _ball_sums(basis, f**r, sup) / basis.measures[sup]
    return float(vals.max() ** (1.0 / r))


def _ball_sums(basis: BallBasis, g: np.ndarray, ids=None) -> np.ndarray:
    ind = basis.ind if ids is None else basis.ind[ids]
    return ind @ (g * basis.space.mass)


def ball_averages(basis: BallBasis, f, r: float = 1.0) -> np.ndarray:
    """<f>_{B,r} for every ball, indexed by id."""
    g = np.abs(np.asarray(f, dtype=float))
    return (_ball_sums(basis, g**r) / basis.measures) ** (1.0 / r)


# -- fixture files -----------------------------------------------------------


def _parse_mass(tok: str) -> float:
    return float(Fraction(tok))


def load_basis(path: str | Path) -> BallBasis:
    return parse_basis(Path(path).read_text())


def parse_basis(text: str) -> BallBasis:
    """Parse the ``basis v1`` text format (see README)."""
    lines = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            lines.append(line)
    if not lines or lines[0] != "basis v1":
        raise ValueError("fixture must start with 'basis v1'")
    kind = "generic"
    masses = None
    balls: dict[int, list[int]] = {}
    hulls: dict[int, int] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        head, *rest = line.split()
        if head == "kind":
            if rest not in (["tree"], ["generic"]):
                raise ValueError(f"line {lineno}: kind must be tree or generic")
            kind = rest[0]
        elif head == "atoms":
            if masses is not None:
                raise ValueError(f"line {lineno}: atoms declared twice")
            count = int(rest[0])
            masses = [_parse_mass(t) for t in rest[1:]]
            if len(masses) != count:
                raise ValueError(f"line {lineno}: expected {count} masses, got {len(masses)}")
        elif head == "ball":
            if masses is None:
                raise ValueError(f"line {lineno}: ball before atoms")
            bid = int(rest[0])
            if bid in balls:
                raise ValueError(f"line {lineno}: duplicate ball id {bid}")
            balls[bid] = [int(t) for t in rest[1:]]
        elif head == "hull":
            if len(rest) != 2:
                raise ValueError(f"line {lineno}: hull takes two ids")
            hulls[int(rest[0])] = int(rest[1])
        else:
            raise ValueError(f"line {lineno}: unknown directive {head!r}")
    if masses is None:
        raise ValueError("missing atoms line")
    if sorted(balls) != list(range(len(balls))):
        raise ValueError("ball ids must be 0..n-1")
    for k, v in hulls.items():
        if k not in balls or v not in balls:
            raise ValueError(f"hull refers to unknown ball ({k}, {v})")
    space = MeasureSpace(masses)
    sets = [balls[i] for i in range(len(balls))]
    if kind == "tree":
        if hulls:
            raise ValueError("tree fixtures take their hulls from the tree")
        return build_tree_basis(space, sets)
    return BallBasis(space, sets, hulls or None)


def dump_basis(basis: BallBasis) -> str:
    out = ["basis v1"]
    if basis.is_tree:
        out.append("kind tree")
    masses = " ".join(repr(float(m)) for m in basis.space.mass)
    out.append(f"atoms {basis.space.atom_count} {masses}")
    for b in basis.balls:
        out.append(f"ball {b.id} " + " ".join(map(str, b.atoms)))
    if not basis.is_tree:
        for i, h in enumerate(basis.hull):
            out.append(f"hull {i} {h}")
    return "\n".join(out) + "\n"


def all_nested_pairs(basis: BallBasis) -> Iterable[tuple[int, int]]:
    """Pairs (A, B) of ball ids with A a subset of B."""
    for a, b in itertools.product(range(len(basis)), repeat=2):
        if basis.contains(b, a):
            yield a, b
