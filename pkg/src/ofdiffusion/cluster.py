"""Index sets of cluster basis functions.

A basis function is a product of one-dimensional eigenfunctions over a small
set of coordinates.  Entries are grouped by their coordinate tuple ("group");
each group holds the full product grid ``{1..n}^|group|`` and occupies a
contiguous block of flat indices.  Coordinates are 0-based.

Flat ordering: the constant (if included), then single-coordinate groups by
``(i, n_i)``, then pairs by ``(i, i', n_i, n_i')``, then larger clusters
lexicographically.
"""
from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

__all__ = [
    "Single",
    "Pair",
    "BasisIndexSet",
    "ClusterError",
    "build_local_2cluster",
    "build_jcluster",
    "expansion_set",
]

DEFAULT_SIZE_CAP = 200_000


class ClusterError(ValueError):
    pass


class Single(NamedTuple):
    i: int
    n_i: int


class Pair(NamedTuple):
    i: int
    n_i: int
    j: int
    n_j: int


@dataclass(frozen=True)
class BasisIndexSet:
    """Cluster basis ``S`` as an ordered list of coordinate groups.

    Parameters
    ----------
    d : int
        Number of coordinates.
    n : int
        Non-constant eigenfunctions per coordinate (indices ``1..n``).
    groups : tuple of tuple of int
        Coordinate tuples, strictly increasing inside each tuple; ``()`` is the
        constant function.
    d_b : int or None
        Pair bandwidth the set was built with (informational).
    """

    d: int
    n: int
    groups: tuple
    d_b: int | None = None

    def __post_init__(self):
        seen = set()
        for g in self.groups:
            if tuple(sorted(set(g))) != tuple(g):
                raise ClusterError(f"group {g} must list distinct coordinates in increasing order")
            if g and (g[0] < 0 or g[-1] >= self.d):
                raise ClusterError(f"group {g} references a coordinate outside 0..{self.d - 1}")
            if g in seen:
                raise ClusterError(f"duplicate group {g}")
            seen.add(g)
        sizes = [self.n ** len(g) for g in self.groups]
        object.__setattr__(self, "_offsets", np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64))
        object.__setattr__(self, "_group_pos", {g: p for p, g in enumerate(self.groups)})

    # -- sizes and blocks ---------------------------------------------------
    def __len__(self) -> int:
        return int(self._offsets[-1])

    @property
    def size(self) -> int:
        return len(self)

    def block(self, g) -> slice:
        """Flat index range of group ``g`` (a position or a coordinate tuple)."""
        p = self._group_pos[tuple(g)] if not isinstance(g, (int, np.integer)) else int(g)
        return slice(int(self._offsets[p]), int(self._offsets[p + 1]))

    @property
    def has_constant(self) -> bool:
        return () in self._group_pos

    # -- flat <-> structured ---------------------------------------------------
    def index(self, entry) -> int:
        """Flat index of a structured entry (``Single``, ``Pair`` or factor tuple)."""
        factors = _factors(entry)
        dims = tuple(f[0] for f in factors)
        if dims not in self._group_pos:
            raise KeyError(f"no basis function over coordinates {dims}")
        ks = [f[1] for f in factors]
        if any(not 1 <= k <= self.n for k in ks):
            raise KeyError(f"eigen index outside 1..{self.n} in {entry}")
        local = int(np.ravel_multi_index([k - 1 for k in ks], (self.n,) * len(ks))) if ks else 0
        return int(self._offsets[self._group_pos[dims]]) + local

    def entry(self, flat: int):
        """Structured entry at ``flat``: ``()``, ``Single`` or ``Pair`` (or a factor tuple)."""
        if not 0 <= flat < len(self):
            raise IndexError(flat)
        p = int(np.searchsorted(self._offsets, flat, side="right")) - 1
        g = self.groups[p]
        if not g:
            return ()
        ks = np.unravel_index(flat - int(self._offsets[p]), (self.n,) * len(g))
        ks = [int(k) + 1 for k in ks]
        if len(g) == 1:
            return Single(g[0], ks[0])
        if len(g) == 2:
            return Pair(g[0], ks[0], g[1], ks[1])
        return tuple(zip(g, ks))

    def entries(self):
        return [self.entry(f) for f in range(len(self))]

    def factor_table(self) -> np.ndarray:
        """``(|S|, d)`` integer array of per-coordinate eigen indices (0 = constant)."""
        out = np.zeros((len(self), self.d), dtype=np.int64)
        for p, g in enumerate(self.groups):
            if not g:
                continue
            grid = np.array(list(itertools.product(range(1, self.n + 1), repeat=len(g))))
            sl = self.block(p)
            out[sl, list(g)] = grid
        return out

    # -- serialization -----------------------------------------------------------
    def descriptor(self) -> dict:
        return {"d": self.d, "n": self.n, "d_b": self.d_b, "groups": [list(g) for g in self.groups]}

    @classmethod
    def from_descriptor(cls, desc: dict) -> "BasisIndexSet":
        return cls(desc["d"], desc["n"], tuple(tuple(g) for g in desc["groups"]), desc.get("d_b"))

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.descriptor(), sort_keys=True).encode()).hexdigest()[:16]

    def with_constant(self) -> "BasisIndexSet":
        if self.has_constant:
            return self
        return BasisIndexSet(self.d, self.n, ((),) + tuple(self.groups), self.d_b)


def _factors(entry):
    if isinstance(entry, Single):
        return ((entry.i, entry.n_i),)
    if isinstance(entry, Pair):
        if not entry.i < entry.j:
            raise KeyError(f"pair coordinates must satisfy i < j: {entry}")
        return ((entry.i, entry.n_i), (entry.j, entry.n_j))
    factors = tuple(tuple(f) for f in entry)
    return tuple(sorted(factors))


def build_local_2cluster(d: int, n: int, d_b: int, include_singles: bool = True,
                         include_constant: bool = False) -> BasisIndexSet:
    """Pairs ``(i, i')`` with ``i < i' <= i + d_b`` plus optional singles.

    Examples
    --------
    >>> len(build_local_2cluster(2, 1, 1))
    3
    >>> len(build_local_2cluster(32, 10, 2, include_singles=False))
    6100
    """
    if d < 1 or n < 1:
        raise ClusterError("d and n must be >= 1")
    if not 0 <= d_b <= d - 1:
        raise ClusterError(f"bandwidth d_b must lie in [0, {d - 1}], got {d_b}")
    groups = [()] if include_constant else []
    if include_singles:
        groups += [(i,) for i in range(d)]
    groups += [(i, j) for i in range(d) for j in range(i + 1, min(i + d_b, d - 1) + 1)]
    return BasisIndexSet(d, n, tuple(groups), d_b)


def build_jcluster(d: int, n: int, j: int, cap: int = DEFAULT_SIZE_CAP,
                   include_constant: bool = False) -> BasisIndexSet:
    """All ``C(d, j) n^j`` products of ``j`` eigenfunctions on distinct coordinates."""
    if d < 1 or n < 1:
        raise ClusterError("d and n must be >= 1")
    if not 1 <= j <= d:
        raise ClusterError(f"cluster order j must lie in [1, {d}], got {j}")
    size = math.comb(d, j) * n**j
    if size > cap:
        raise ClusterError(f"j-cluster basis would have {size} functions (cap {cap})")
    groups = [()] if include_constant else []
    groups += list(itertools.combinations(range(d), j))
    return BasisIndexSet(d, n, tuple(groups), None)


def expansion_set(S: BasisIndexSet, system=None) -> np.ndarray:
    """Per-coordinate eigen indices used by the product/derivative expansions.

    ``0..2n`` by default; with an eigensystem, its own expansion size (the
    trigonometric family needs a little more for odd ``n`` to stay exact).
    """
    m = 2 * S.n + 1 if system is None else system.expansion_size(S.n)
    return np.arange(m)
