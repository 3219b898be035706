"""Sparse collections, sparseness certificates and the stopping-time construction
of a sparse family dominating a bounded-oscillation operator.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import networkx as nx
import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from .basis import REL_TOL, BallBasis, _le, ball_averages
from .covering import economical_cover, greedy_order
from .operators import (
    BOReport,
    KernelOperator,
    SublinearOperator,
    delta,
    maximal_operator,
    t_star,
    verify_bo,
)
from .space import as_mask

log = logging.getLogger(__name__)


@dataclass
class SparseCollection:
    balls: list[int]
    witnesses: dict[int, tuple[int, ...]]
    gamma: float
    parity_split: tuple["SparseCollection", "SparseCollection"] | None = None

    def verify(self, basis: BallBasis) -> list[str]:
        """Problems with the witness sets; empty when the collection is gamma-sparse."""
        problems = []
        used: set[int] = set()
        for b in self.balls:
            w = self.witnesses.get(b)
            if w is None:
                problems.append(f"ball {b} has no witness")
                continue
            if not set(w) <= set(basis.balls[b].atoms):
                problems.append(f"witness of {b} leaves the ball")
            if used & set(w):
                problems.append(f"witness of {b} overlaps another witness")
            used |= set(w)
            if basis.space.measure(list(w)) < self.gamma * basis.measures[b] * (1 - 1e-12):
                problems.append(f"witness of {b} is too small")
        return problems


@dataclass
class SparsenessFailure:
    gamma: float
    deficient: list[int]
    supply: float
    demand: float
    reason: str

    def __bool__(self) -> bool:
        return False


def _ball_list(basis: BallBasis, S) -> list[int]:
    ids = list(S.balls) if isinstance(S, SparseCollection) else [int(b) for b in S]
    for b in ids:
        if not 0 <= b < len(basis):
            raise KeyError(f"unknown ball id {b}")
    return ids


def sparse_apply(basis: BallBasis, S, f, r: float = 1.0) -> np.ndarray:
    """sum over S of <f>_{B,r} 1_B."""
    ids = _ball_list(basis, S)
    f = basis.space.function(f)
    if not ids:
        return np.zeros(basis.space.atom_count)
    a = ball_averages(basis, f, r)
    return (a[ids][:, None] * basis.ind[ids]).sum(axis=0)


def sparse_operator(basis: BallBasis, S, r: float = 1.0) -> SublinearOperator:
    ids = _ball_list(basis, S)
    if r == 1:
        n = basis.space.atom_count
        kern = np.zeros((n, n))
        for b in ids:
            row = basis.ind[b].astype(float)
            kern += np.outer(row, row) / basis.measures[b]
        return KernelOperator(basis.space, kern, name=f"sparse({len(ids)})")
    return _SparseR(basis, ids, r)


class _SparseR(SublinearOperator):
    def __init__(self, basis, ids, r):
        super().__init__(basis.space, f"sparse_r{r:g}({len(ids)})")
        self.basis, self.ids, self.r = basis, ids, r

    def _apply(self, g):
        return sparse_apply(self.basis, self.ids, g, self.r)


# -- certification -------------------------------------------------------------


def _uniform(basis: BallBasis) -> bool:
    m = basis.space.mass
    return bool(np.all(m == m[0]))


def _flow_graph(basis: BallBasis, ids: list[int], demand: dict[int, int], atom_cap: list[int]) -> nx.DiGraph:
    G = nx.DiGraph()
    big = sum(atom_cap) + 1
    for b in ids:
        G.add_edge("s", ("b", b), capacity=demand[b])
        for x in basis.balls[b].atoms:
            G.add_edge(("b", b), ("a", x), capacity=big)
    for x in range(basis.space.atom_count):
        G.add_edge(("a", x), "t", capacity=atom_cap[x])
    return G


def _hall_certificate(G: nx.DiGraph, gamma, basis, ids) -> SparsenessFailure:
    _, (src_side, _) = nx.minimum_cut(G, "s", "t")
    deficient = sorted(n[1] for n in src_side if isinstance(n, tuple) and n[0] == "b")
    union = np.zeros(basis.space.atom_count, dtype=bool)
    for b in deficient:
        union |= basis.ind[b]
    supply = basis.space.measure(union)
    demand = float(gamma) * math.fsum(basis.measures[b] for b in deficient)
    return SparsenessFailure(float(gamma), deficient, supply, demand, "Hall deficiency")


def certify_sparse(basis: BallBasis, balls: Iterable[int], gamma: float) -> SparseCollection | SparsenessFailure:
    """Disjoint witnesses E_B within B with mu(E_B) >= gamma mu(B), or a certificate that none exist.

    Runs a max-flow on integer-scaled masses.  Equal atom masses make the flow
    integral in atoms; otherwise a feasible fractional flow is rounded to whole
    atoms by a small 0-1 program.
    """
    ids = list(dict.fromkeys(_ball_list(basis, balls)))
    if not 0 < gamma <= 1:
        raise ValueError("gamma must lie in (0, 1]")
    if not ids:
        return SparseCollection([], {}, float(gamma))
    g = Fraction(gamma)
    if _uniform(basis):
        demand = {b: math.ceil(g * len(basis.balls[b].atoms)) for b in ids}
        cap = [1] * basis.space.atom_count
    else:
        fr = [Fraction(float(m)) for m in basis.space.mass]
        scale = math.lcm(*(q.denominator for q in fr), g.denominator)
        units = [int(q * scale) for q in fr]
        demand = {b: math.ceil(g * sum(units[x] for x in basis.balls[b].atoms)) for b in ids}
        cap = units
    G = _flow_graph(basis, ids, demand, cap)
    value, flow = nx.maximum_flow(G, "s", "t")
    if value < sum(demand.values()):
        return _hall_certificate(G, g, basis, ids)
    if _uniform(basis):
        wit = {b: tuple(sorted(x for (_, x), v in flow[("b", b)].items() if v > 0)) for b in ids}
        return SparseCollection(ids, wit, float(gamma))
    # the 0-1 solver works to a feasibility tolerance, so ask for a little
    # slack first and always re-check the rounded witnesses exactly
    short: list[int] = []
    for slack in (1e-5, 0.0):
        wit = _round_witnesses(basis, ids, float(gamma), slack)
        if wit is None:
            continue
        short = [b for b in ids if basis.space.measure(list(wit[b])) < float(gamma) * basis.measures[b] * (1 - 1e-12)]
        if not short:
            return SparseCollection(ids, wit, float(gamma))
    return SparsenessFailure(float(gamma), short, 0.0, 0.0, "fractional flow feasible, whole-atom rounding infeasible")


def _round_witnesses(basis: BallBasis, ids: list[int], gamma: float, slack: float = 0.0) -> dict[int, tuple[int, ...]] | None:
    pairs = [(b, x) for b in ids for x in basis.balls[b].atoms]
    n = len(pairs)
    mass = basis.space.mass
    rows, lo, hi = [], [], []
    for b in ids:
        # normalized so the solver's absolute tolerance acts relative to the demand
        need = gamma * basis.measures[b] * (1 - 1e-12)
        rows.append([mass[x] / need if pb == b else 0.0 for pb, x in pairs])
        lo.append(1.0 + slack)
        hi.append(np.inf)
    for x in range(basis.space.atom_count):
        rows.append([1.0 if px == x else 0.0 for _, px in pairs])
        lo.append(0.0)
        hi.append(1.0)
    res = milp(
        c=np.zeros(n),
        constraints=LinearConstraint(np.array(rows), lo, hi),
        integrality=np.ones(n),
        bounds=Bounds(0, 1),
    )
    if res.status != 0:
        return None
    chosen = np.round(res.x).astype(bool)
    wit: dict[int, list[int]] = {b: [] for b in ids}
    for (b, x), on in zip(pairs, chosen):
        if on:
            wit[b].append(x)
    return {b: tuple(sorted(v)) for b, v in wit.items()}


def best_sparse_gamma(basis: BallBasis, balls: Iterable[int], floor: float = 0.0) -> SparseCollection | SparsenessFailure:
    """Largest gamma at which the collection certifies (searched over atom-count fractions when masses are equal).

    More balls than atoms to share can make every gamma infeasible; the
    failure at the smallest candidate is returned then.
    """
    ids = list(dict.fromkeys(_ball_list(basis, balls)))
    if not ids:
        return SparseCollection([], {}, 1.0)
    if _uniform(basis):
        cands = sorted({Fraction(k, len(basis.balls[b].atoms)) for b in ids for k in range(1, len(basis.balls[b].atoms) + 1)})
        lo, hi, best = 0, len(cands) - 1, None
        first = certify_sparse(basis, ids, cands[0])
        if not first:
            return first
        while lo <= hi:
            mid = (lo + hi) // 2
            res = certify_sparse(basis, ids, cands[mid])
            if res:
                best, lo = res, mid + 1
            else:
                hi = mid - 1
        return best
    lo_g, hi_g = max(floor, 1e-9), 1.0
    best = certify_sparse(basis, ids, lo_g)
    if not best:
        return best
    top = certify_sparse(basis, ids, hi_g)
    if top:
        return top
    for _ in range(30):
        mid = 0.5 * (lo_g + hi_g)
        res = certify_sparse(basis, ids, mid)
        if res:
            best, lo_g = res, mid
        else:
            hi_g = mid
    # report what the witnesses actually achieve, never less than the bisection bound
    achieved = min(basis.space.measure(list(best.witnesses[b])) / basis.measures[b] for b in ids)
    return SparseCollection(ids, best.witnesses, float(max(best.gamma, min(achieved, 1.0))))


# -- ball chains ---------------------------------------------------------------


def chain_extend(basis: BallBasis, B: int, T: SublinearOperator | None = None, r: float = 1.0) -> int:
    """A larger ball B' with B** inside B', built by repeated hull growth.

    When B is its own hull, B' is the strict superset with the smallest
    annulus action Delta(B, B') if T is given, else the smallest one.
    """
    if B == basis.whole:
        raise ValueError("the whole space has no extension")
    mu = basis.measures
    mb = mu[B]
    if basis.hull[B] == B:
        cands = basis.supersets(B, strict=True)
        if T is None:
            return min(cands, key=lambda c: (mu[c], c))
        return min(cands, key=lambda c: (delta(T, basis, B, c, r).value, mu[c], c))
    meet = [j for j in range(len(basis)) if basis.intersects(j, B)]
    a = max(mu[j] for j in meet if mb <= mu[j] * (1 + REL_TOL) and _le(mu[j], 2 * mb))
    bigger = [j for j in meet if not _le(mu[j], 2 * mb)]
    if not bigger:
        return basis.whole
    b = min(mu[j] for j in bigger)
    K = basis.K
    if _le(b, K * K * a):
        g2 = min((j for j in bigger if mu[j] < 2 * b), key=lambda j: (mu[j], j))
        return basis.hull_level(g2, 3)
    g1 = min((j for j in meet if a / 2 < mu[j] and _le(mu[j], a)), key=lambda j: (-mu[j], j))
    return basis.hull_level(g1, 1)


def ball_chain(basis: BallBasis, B: int, T: SublinearOperator | None = None, r: float = 1.0, cap: int = 256) -> list[int]:
    chain = [B]
    while chain[-1] != basis.whole:
        if len(chain) > cap:
            raise RuntimeError(f"ball chain from {B} did not reach the whole space")
        chain.append(chain_extend(basis, chain[-1], T, r))
    return chain


def check_chain(basis: BallBasis, chain: Sequence[int]) -> dict[str, bool]:
    mu = basis.measures
    growth = all(mu[chain[k]] > 2 * mu[chain[k - 2]] for k in range(2, len(chain)))
    nested = all(basis.contains(chain[k], basis.hull_level(chain[k - 1], 2)) for k in range(1, len(chain)))
    return {"chain_growth": growth, "chain_nesting": nested}


# -- family tree -----------------------------------------------------------------


def ball_rank(measure: float, R: float) -> int:
    """floor(log_R measure), robust to rounding at exact powers of R."""
    k = math.floor(math.log(measure) / math.log(R))
    while R**k > measure * (1 + 1e-12):
        k -= 1
    while R ** (k + 1) <= measure * (1 + 1e-12):
        k += 1
    return k


def rank_base(K: float) -> float:
    return K * K if K > 1 else 4.0


@dataclass
class TreeNode:
    index: int
    ball: int
    parent: int | None
    rank: int
    depth: int
    beta: float = 0.0
    stop_set: np.ndarray | None = None
    children: list[int] = field(default_factory=list)
    companion: int | None = None
    witness_point: int | None = None
    cover_ball: int | None = None
    chain: list[int] = field(default_factory=list)
    annulus_ratio: float = 0.0


@dataclass
class FamilyTree:
    nodes: list[TreeNode]
    lam: float
    K: float
    R: float
    L: float
    beta_final: float
    invariants: dict[str, bool]
    violations: list[str]

    @property
    def root(self) -> TreeNode:
        return self.nodes[0]

    def generation(self, i: int) -> list[int]:
        """Node i together with all its descendants."""
        out, stack = [], [i]
        while stack:
            j = stack.pop()
            out.append(j)
            stack.extend(self.nodes[j].children)
        return out


def _constants(T, basis, r, constants) -> float:
    if constants is None:
        constants = verify_bo(T, basis, r)
    if isinstance(constants, BOReport):
        return constants.total
    return float(constants["L1"]) + float(constants["L2"]) + float(constants["weak_norm"])


def _root_ball(basis: BallBasis, f: np.ndarray, B: int) -> int:
    total = np.abs(f) @ basis.space.mass
    hb = basis.hull[B]
    ok = [
        A
        for A in range(len(basis))
        if basis.contains(A, hb) and (np.abs(f) * basis.space.mass)[basis.ind[A]].sum() > total / 2
    ]
    return min(ok, key=lambda A: (basis.measures[A], A))


def build_family_tree(
    T: SublinearOperator,
    basis: BallBasis,
    f,
    B: int | None = None,
    r: float = 1.0,
    lam: float | None = None,
    constants: BOReport | dict | None = None,
    *,
    max_depth: int = 64,
    max_nodes: int = 20000,
    check_lambda: bool = True,
) -> FamilyTree:
    """Stopping-time family tree rooted at a ball carrying more than half of ||f||_1."""
    f = basis.space.function(f)
    K = basis.K
    if lam is None:
        lam = 3 * K**4
    if check_lambda and lam < 3 * K**4 * (1 - 1e-12):
        raise ValueError(f"lambda = {lam} is below 3K^4 = {3 * K**4}")
    B = basis.whole if B is None else B
    A0 = _root_ball(basis, f, B) if np.any(f) else basis.whole
    if not np.any(f[basis.ind[A0]]):
        raise ValueError("f vanishes on the root ball")
    L = _constants(T, basis, r, constants)
    R = rank_base(K)
    Ts = t_star(T, basis)
    M = maximal_operator(basis, r)
    mu = basis.measures
    bits = basis.bits
    connect = T if isinstance(T, KernelOperator) else None

    nodes = [TreeNode(0, A0, None, ball_rank(mu[A0], R), 0)]
    violations: list[str] = []
    inv = {"ancestry": True, "children_hull_mass": True, "companion_sandwich": True, "witness_point": True, "child_meets_hull": True, "coverage": True, "chain_growth": True, "chain_nesting": True, "terminated": True}
    beta_final = 0.0
    queue = [0]
    chains: dict[int, list[int]] = {}
    while queue:
        i = queue.pop(0)
        node = nodes[i]
        A = node.ball
        A3 = basis.hull_level(A, 3)
        fA = f if node.parent is None else f * basis.ind[A3]
        base = ball_averages(basis, f, r)[A3]
        gamma_f = np.maximum(np.maximum(np.abs(T(fA)), Ts(fA)), L * M(fA))
        beta = 2 * L * lam if L > 0 else 2 * lam
        F = gamma_f > beta * base
        while basis.space.measure(F) > mu[A] / lam:
            beta *= 2
            F = gamma_f > beta * base
        node.beta = beta
        node.stop_set = F
        beta_final = max(beta_final, beta)
        E = F & basis.ind[basis.hull[A]]
        if not E.any():
            continue
        if node.depth >= max_depth or len(nodes) >= max_nodes:
            inv["terminated"] = False
            violations.append(f"node {i}: depth or size cap reached")
            continue
        Fbits = sum(1 << int(x) for x in np.flatnonzero(F))
        hullA = basis.hull[A]
        kids: list[int] = []
        covered = np.zeros_like(F)
        for p in economical_cover(basis, E):
            if p not in chains:
                chains[p] = ball_chain(basis, p, connect, r)
                checks = check_chain(basis, chains[p])
                for key, ok in checks.items():
                    if not ok:
                        inv[key] = False
                        violations.append(f"chain from ball {p} fails {key}")
            seq = chains[p] + [basis.whole]
            m = 0
            while bits[basis.hull[seq[m + 1]]] & ~Fbits == 0:
                m += 1
            G = seq[m]
            nxt = basis.hull[seq[m + 1]]
            companion = hullA if mu[nxt] > mu[A] else nxt
            free = basis.ind[companion] & ~F
            covered |= basis.ind[G]
            if G in kids:
                continue
            kids.append(G)
            child = TreeNode(len(nodes), G, i, ball_rank(mu[G], R), node.depth + 1)
            child.companion = companion
            child.cover_ball = p
            child.chain = seq[: m + 2]
            child.witness_point = int(np.flatnonzero(free)[0]) if free.any() else None
            if child.witness_point is None:
                inv["witness_point"] = False
                violations.append(f"node {child.index}: companion lies inside the stopping set")
            if not (basis.contains(companion, basis.hull_level(G, 2)) and basis.contains(hullA, companion)):
                inv["companion_sandwich"] = False
                violations.append(f"node {child.index}: companion sandwich fails")
            if not basis.intersects(G, hullA):
                inv["child_meets_hull"] = False
                violations.append(f"node {child.index}: child misses the parent hull")
            ring = basis.ind[basis.hull[companion]] & ~basis.ind[basis.hull_level(G, 3)]
            if base > 0 and ring.any():
                vals = np.abs(T(f, ring))[basis.ind[basis.hull_level(G, 2)]]
                child.annulus_ratio = float(vals.max() / base)
            nodes.append(child)
            node.children.append(child.index)
            queue.append(child.index)
        if np.any(E & ~covered):
            inv["coverage"] = False
            violations.append(f"node {i}: stopping set not covered by the children")
        kid_hulls = np.zeros_like(F)
        for c in node.children:
            kid_hulls |= basis.ind[basis.hull[nodes[c].ball]]
        if basis.space.measure(kid_hulls) > 3 * K * K * mu[A] / lam * (1 + 1e-12):
            inv["children_hull_mass"] = False
            violations.append(f"node {i}: children hull mass too large")
    for node in nodes:
        j, steps = node.index, 0
        while nodes[j].parent is not None and steps <= len(nodes):
            j = nodes[j].parent
            steps += 1
        if j != 0:
            inv["ancestry"] = False
    return FamilyTree(nodes, float(lam), float(K), float(R), float(L), float(beta_final), inv, violations)


# -- pruning -------------------------------------------------------------------


@dataclass
class PrunedFamily:
    retained: list[int]  # node indices
    ranks: dict[int, int]
    E: dict[int, np.ndarray]
    checks: dict[str, bool]
    violations: list[str]


def _much_less(n: int, m: int) -> bool:
    return n < m - 1


def prune_tree(tree: FamilyTree, basis: BallBasis) -> PrunedFamily:
    nodes = tree.nodes
    rank = {n.index: n.rank for n in nodes}
    alive = set(rank)
    hull2 = {n.index: basis.bits[basis.hull_level(n.ball, 2)] for n in nodes}
    ball_bits = {n.index: basis.bits[n.ball] for n in nodes}

    def ancestors(i):
        out = [i]
        while nodes[out[-1]].parent is not None:
            out.append(nodes[out[-1]].parent)
        return out

    def drop(i):
        for j in tree.generation(i):
            alive.discard(j)

    top = rank[0]
    low = min(rank.values())
    for k in range(top - 1, low - 1, -1):
        stage = sorted(i for i in alive if rank[i] == k)
        # drop balls sitting in a rank gap of some retained ball
        for g in stage:
            if g not in alive:
                continue
            chain = ancestors(g)
            hit = False
            for b in sorted(alive):
                if b == g or not hull2[g] & ball_bits[b]:
                    continue
                rb = rank[b]
                if any(
                    _much_less(rank[chain[j]], rb) and _much_less(rb, rank[chain[j + 1]])
                    for j in range(len(chain) - 1)
                ):
                    hit = True
                    break
            if hit:
                drop(g)
        # greedy thinning within the rank
        stage = [i for i in stage if i in alive]
        keep = {stage[t] for t in greedy_order(basis, [nodes[i].ball for i in stage], keys=stage)}
        for g in stage:
            if g not in keep:
                drop(g)
    retained = sorted(alive)
    E = {}
    for a in retained:
        e = basis.ind[nodes[a].ball].copy()
        for g in retained:
            if _much_less(rank[g], rank[a]):
                e &= ~basis.ind[nodes[g].ball]
        E[a] = e
    violations = []
    checks = {"rank_disjoint": True, "witness_disjoint": True, "witness_half_mass": True}
    for x in retained:
        for y in retained:
            if x >= y:
                continue
            if rank[x] == rank[y] and ball_bits[x] & ball_bits[y]:
                checks["rank_disjoint"] = False
                violations.append(f"nodes {x}, {y} of rank {rank[x]} overlap")
            if abs(rank[x] - rank[y]) != 1 and np.any(E[x] & E[y]):
                checks["witness_disjoint"] = False
                violations.append(f"E sets of nodes {x}, {y} overlap")
        if basis.space.measure(E[x]) < basis.measures[nodes[x].ball] / 2 * (1 - 1e-12):
            checks["witness_half_mass"] = False
            violations.append(f"E set of node {x} has less than half the mass")
    return PrunedFamily(retained, {i: rank[i] for i in retained}, E, checks, violations)


# -- domination ------------------------------------------------------------------


@dataclass
class DominationResult:
    C: float
    failure_atom: int | None = None

    @property
    def ok(self) -> bool:
        return self.failure_atom is None


class DominationError(RuntimeError):
    def __init__(self, atom: int):
        super().__init__(f"sparse operator vanishes at atom {atom} while Tf does not")
        self.atom = atom


def verify_domination(T: SublinearOperator, basis: BallBasis, S, f, r: float = 1.0, region=None) -> DominationResult:
    """Smallest C with |Tf| <= C A_S f on ``region`` (every atom by default)."""
    tf = np.abs(T(f))
    af = sparse_apply(basis, S, f, r)
    where = np.ones(basis.space.atom_count, dtype=bool) if region is None else as_mask(basis.space, region)
    C = 0.0
    for x in np.flatnonzero(where):
        if tf[x] == 0:
            continue
        if af[x] == 0:
            return DominationResult(math.inf, int(x))
        C = max(C, tf[x] / af[x])
    return DominationResult(float(C))


@dataclass
class Theorem1Result:
    sparse: SparseCollection
    C: float
    gamma: float
    tree: FamilyTree
    pruned: PrunedFamily
    lifted_gamma: float
    checks: dict[str, bool]

    @property
    def ok(self) -> bool:
        return all(self.checks.values())


def _lift(basis: BallBasis, tree: FamilyTree, pruned: PrunedFamily, members: list[int]):
    balls: list[int] = []
    wit: dict[int, np.ndarray] = {}
    for a in members:
        s = basis.hull_level(tree.nodes[a].ball, 3)
        if s not in wit:
            balls.append(s)
            wit[s] = np.zeros(basis.space.atom_count, dtype=bool)
        wit[s] |= pruned.E[a]
    ratio = min((basis.space.measure(wit[s]) / basis.measures[s] for s in balls), default=1.0)
    return balls, ratio


def theorem1_sparse(
    T: SublinearOperator,
    basis: BallBasis,
    f,
    B: int | None = None,
    r: float = 1.0,
    lam: float | None = None,
    constants: BOReport | dict | None = None,
    **tree_options,
) -> Theorem1Result:
    """Sparse family S with |Tf| <= C A_S f on B, split into two sparse parity classes."""
    f = basis.space.function(f)
    B = basis.whole if B is None else B
    tree = build_family_tree(T, basis, f, B, r, lam, constants, **tree_options)
    pruned = prune_tree(tree, basis)
    odd = [a for a in pruned.retained if pruned.ranks[a] % 2]
    even = [a for a in pruned.retained if not pruned.ranks[a] % 2]
    parts = []
    lifted = 1.0
    for members in (odd, even):
        balls, ratio = _lift(basis, tree, pruned, members)
        lifted = min(lifted, ratio)
        parts.append(best_sparse_gamma(basis, balls) if balls else SparseCollection([], {}, 1.0))
    gamma = min(p.gamma for p in parts)
    union = list(dict.fromkeys(parts[0].balls + parts[1].balls))
    whole = best_sparse_gamma(basis, union)
    sparse = SparseCollection(union, whole.witnesses, whole.gamma, (parts[0], parts[1]))
    dom = verify_domination(T, basis, union, f, r, basis.ind[B])
    if not dom.ok:
        raise DominationError(dom.failure_atom)
    checks = dict(tree.invariants)
    checks.update(pruned.checks)
    checks["parity_certified"] = all(not p.verify(basis) for p in parts)
    checks["gamma_at_least_lifted"] = gamma >= lifted * (1 - 1e-12)
    return Theorem1Result(sparse, dom.C, float(gamma), tree, pruned, float(lifted), checks)


# -- independent stopping-time oracle ----------------------------------------------


def oracle_dyadic_sparse(basis: BallBasis, f, r: float = 1.0) -> SparseCollection:
    """Classical stopping cubes: maximal nodes whose average exceeds twice the current stopping average."""
    if not basis.is_tree:
        raise ValueError("the stopping-time oracle needs a tree basis")
    f = basis.space.function(f)
    a = ball_averages(basis, f, r)
    kids = {i: basis.children(i) for i in range(len(basis))}
    root = basis.whole
    chosen, wit = [], {}
    stack = [root]
    while stack:
        q = stack.pop(0)
        chosen.append(q)
        stops, todo = [], list(kids[q])
        while todo:
            c = todo.pop(0)
            if a[c] > 2 * a[q]:
                stops.append(c)
            else:
                todo.extend(kids[c])
        e = basis.ind[q].copy()
        for c in stops:
            e &= ~basis.ind[c]
        wit[q] = tuple(int(x) for x in np.flatnonzero(e))
        stack.extend(sorted(stops))
    return SparseCollection(chosen, wit, 0.5)
