"""Finite atomic measure spaces and the basic norms on them."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True, eq=False)
class MeasureSpace:
    """Atoms ``0..atom_count-1`` carrying strictly positive masses."""

    mass: np.ndarray
    total_mass: float = field(init=False)

    def __init__(self, mass: Sequence[float] | np.ndarray):
        arr = np.array(mass, dtype=float).reshape(-1)
        if arr.size == 0:
            raise ValueError("a measure space needs at least one atom")
        if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
            raise ValueError("atom masses must be finite and strictly positive")
        arr.setflags(write=False)
        object.__setattr__(self, "mass", arr)
        object.__setattr__(self, "total_mass", math.fsum(arr.tolist()))

    @property
    def atom_count(self) -> int:
        return int(self.mass.size)

    @classmethod
    def uniform(cls, n: int, total: float = 1.0) -> "MeasureSpace":
        return cls(np.full(n, total / n))

    def measure(self, atoms: Iterable[int] | np.ndarray) -> float:
        return math.fsum(self.mass[as_mask(self, atoms)].tolist())

    def function(self, values) -> np.ndarray:
        """Validate ``values`` as a function on this space and return a float array."""
        arr = np.array(values, dtype=float).reshape(-1)
        if arr.size != self.atom_count:
            raise ValueError(f"function has {arr.size} values, space has {self.atom_count} atoms")
        if not np.all(np.isfinite(arr)):
            raise ValueError("function values must be finite")
        return arr


def as_mask(space: MeasureSpace, atoms) -> np.ndarray:
    """Boolean indicator of an atom set given as indices or as a mask."""
    if isinstance(atoms, np.ndarray) and atoms.dtype == bool:
        if atoms.size != space.atom_count:
            raise ValueError("mask length does not match the space")
        return atoms
    mask = np.zeros(space.atom_count, dtype=bool)
    idx = list(atoms)
    if idx:
        mask[idx] = True
    return mask


def distribution(space: MeasureSpace, f, t: float) -> float:
    """mu{|f| > t}."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    f = space.function(f)
    return math.fsum(space.mass[np.abs(f) > t].tolist())


def lp_norm(space: MeasureSpace, f, p: float, w=None) -> float:
    if p < 1:
        raise ValueError("p must be at least 1")
    f = np.abs(space.function(f))
    dens = space.mass if w is None else space.mass * np.asarray(w, dtype=float)
    if math.isinf(p):
        return float(f.max())
    if p == 1:
        return math.fsum((f * dens).tolist())
    return math.fsum((f**p * dens).tolist()) ** (1.0 / p)


def weak_lp_norm(space: MeasureSpace, f, p: float) -> float:
    """sup_t t * mu{|f| > t}^(1/p).

    The sup is attained as t approaches a value of |f| from below, where the
    level set is {|f| >= v}; so a max over the distinct values is exact.
    """
    if p < 1:
        raise ValueError("p must be at least 1")
    f = np.abs(space.function(f))
    order = np.argsort(-f, kind="stable")
    vals = f[order]
    # masses of {|f| >= v}: cumulative sum over values sorted descending, taken
    # at the last position of each run of equal values
    cum = np.cumsum(space.mass[order])
    best = 0.0
    n = vals.size
    for i in range(n):
        if vals[i] == 0:
            break
        if i + 1 < n and vals[i + 1] == vals[i]:
            continue
        best = max(best, vals[i] * cum[i] ** (1.0 / p))
    return float(best)


def avg(space: MeasureSpace, f, B, r: float = 1.0) -> float:
    """((1/mu(B)) sum_B |f|^r mu)^(1/r)."""
    if r < 1:
        raise ValueError("r must be at least 1")
    mask = as_mask(space, B)
    if not mask.any():
        raise ValueError("average over an empty set")
    f = np.abs(space.function(f))
    m = space.mass[mask]
    if r == 1:
        return math.fsum((f[mask] * m).tolist()) / math.fsum(m.tolist())
    return (math.fsum((f[mask] ** r * m).tolist()) / math.fsum(m.tolist())) ** (1.0 / r)
