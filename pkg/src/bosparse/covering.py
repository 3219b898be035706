"""Greedy disjoint subcovers and economical covers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .basis import BallBasis, _bits
from .space import as_mask


@dataclass
class CoverSelection:
    chosen: list[int]
    hull_cover: list[int]


def greedy_order(basis: BallBasis, family: Sequence[int], keys: Sequence | None = None) -> list[int]:
    """Indices into ``family`` picked by the greedy rule.

    Repeatedly take the largest-measure member disjoint from everything taken
    so far. Ties go to the smaller key (the ball id by default), then to the
    earlier position. Duplicated ids are allowed and never both chosen.
    """
    keys = list(family) if keys is None else list(keys)
    order = sorted(range(len(family)), key=lambda k: (-basis.measures[family[k]], keys[k], k))
    taken, used = [], 0
    for k in order:
        b = basis.bits[family[k]]
        if b & used == 0:
            taken.append(k)
            used |= b
    return taken


def greedy_disjoint_subcover(basis: BallBasis, family: Iterable[int], E) -> CoverSelection:
    family = list(dict.fromkeys(int(b) for b in family))
    target = _bits(np.flatnonzero(as_mask(basis.space, E)))
    covered = 0
    for b in family:
        covered |= basis.bits[b]
    if target & ~covered:
        raise ValueError("target set is not covered by the family")
    # balls missing E can never be needed
    relevant = [b for b in family if basis.bits[b] & target]
    chosen = [relevant[k] for k in greedy_order(basis, relevant)]
    return CoverSelection(chosen, [basis.hull[b] for b in chosen])


def economical_cover(basis: BallBasis, E) -> list[int]:
    """Balls covering E with total measure at most 2K mu(E)."""
    mask = as_mask(basis.space, E)
    atoms = np.flatnonzero(mask)
    if atoms.size == 0:
        raise ValueError("economical cover of an empty set")
    minimal = [basis.minimal_container(1 << int(x)) for x in atoms]
    sel = greedy_disjoint_subcover(basis, minimal, mask)
    return list(dict.fromkeys(sel.hull_cover))


@dataclass
class CardinalityReport:
    count: int
    bound: float
    passed: bool
    violations: list[dict] = field(default_factory=list)


def cardinality_bound_check(basis: BallBasis, A: int, family: Sequence[int], c1: float, c2: float) -> CardinalityReport:
    """#G <= min(K^3 c2, K mu(A)) / c1 for disjoint G with G* meeting A and c1 <= mu(G) <= c2."""
    K = basis.K
    violations = []
    family = list(family)
    for i, g in enumerate(family):
        if not basis.intersects(basis.hull[g], A):
            violations.append({"ball": g, "reason": "hull misses A"})
        m = basis.measures[g]
        if not (c1 * (1 - 1e-12) <= m <= c2 * (1 + 1e-12)):
            violations.append({"ball": g, "reason": "measure outside [c1, c2]"})
        for h in family[i + 1 :]:
            if basis.intersects(g, h):
                violations.append({"ball": g, "reason": f"meets {h}"})
    bound = min(K**3 * c2, K * basis.measures[A]) / c1
    passed = bool(not violations and len(family) <= bound * (1 + 1e-12))
    return CardinalityReport(len(family), float(bound), passed, violations)
