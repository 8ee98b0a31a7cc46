"""Discrete groups, Følner sets and summable subsequences.

Two kinds of groups are supported: the integer lattices Z^d (elements are
integer d-tuples) and finite groups given by an explicit multiplication table
(elements are indices, identity at 0).  Følner sets are *ordered*: the order
fixes the matrix-unit indexing of the stage algebras M_F.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DomainError, ParameterError

DEFAULT_HORIZON = 512


@dataclass(frozen=True)
class IntegerLattice:
    """The free abelian group Z^d, written additively."""

    d: int

    def __post_init__(self):
        if int(self.d) < 1:
            raise ParameterError(f"lattice dimension must be >= 1, got {self.d}")

    @property
    def identity(self) -> tuple:
        return (0,) * self.d

    def normalize(self, g) -> tuple:
        if isinstance(g, (int, np.integer)) and not isinstance(g, bool):
            if self.d != 1:
                raise DomainError(f"scalar {g} is not an element of Z^{self.d}")
            return (int(g),)
        try:
            t = tuple(int(c) for c in g)
        except TypeError:
            raise DomainError(f"{g!r} is not an element of Z^{self.d}") from None
        if len(t) != self.d or any(int(c) != c for c in g):
            raise DomainError(f"{g!r} is not an element of Z^{self.d}")
        return t

    def mul(self, g, h) -> tuple:
        return tuple(a + b for a, b in zip(g, h))

    def inv(self, g) -> tuple:
        return tuple(-a for a in g)

    def describe(self) -> dict:
        return {"lattice": self.d}

    def label(self, g) -> str:
        return str(g[0]) if self.d == 1 else str(tuple(g))


@dataclass(frozen=True)
class FiniteGroup:
    """A finite group from its multiplication table (index 0 is the identity).

    ``table[a][b]`` is the index of the product ``a*b``.  The group axioms are
    checked exhaustively on construction.
    """

    table: tuple
    inverses: tuple = field(default=None)

    def __post_init__(self):
        t = np.asarray(self.table, dtype=np.int64)
        n = t.shape[0] if t.ndim == 2 else 0
        if n == 0 or t.shape != (n, n):
            raise ConfigError("multiplication table must be a nonempty square array")
        if t.min() < 0 or t.max() >= n:
            raise ConfigError("multiplication table entries out of range")
        idx = np.arange(n)
        if not (np.array_equal(t[0], idx) and np.array_equal(t[:, 0], idx)):
            raise ConfigError("index 0 is not a two-sided identity")
        if not np.array_equal(t[t], t[idx[:, None, None], t[None, :, :]]):
            raise ConfigError("multiplication table is not associative")
        if self.inverses is None:
            rows, cols = np.nonzero(t == 0)
            if len(rows) != n or not np.array_equal(rows, idx):
                raise ConfigError("table has elements without inverses")
            inv = cols
        else:
            inv = np.asarray(self.inverses, dtype=np.int64)
            if inv.shape != (n,):
                raise ConfigError("inverse table has the wrong length")
        if not (np.all(t[idx, inv] == 0) and np.all(t[inv, idx] == 0)):
            raise ConfigError("inverse table is incorrect")
        object.__setattr__(self, "table", tuple(tuple(int(v) for v in row) for row in t))
        object.__setattr__(self, "inverses", tuple(int(v) for v in inv))

    @classmethod
    def cyclic(cls, n: int) -> "FiniteGroup":
        if n < 1:
            raise ParameterError("cyclic group order must be >= 1")
        idx = np.arange(n)
        return cls(tuple(map(tuple, (idx[:, None] + idx[None, :]) % n)))

    @property
    def order(self) -> int:
        return len(self.table)

    @cached_property
    def array(self) -> np.ndarray:
        return np.asarray(self.table, dtype=np.int64)

    @property
    def identity(self) -> int:
        return 0

    def normalize(self, g) -> int:
        if isinstance(g, (int, np.integer)) and not isinstance(g, bool) and 0 <= g < self.order:
            return int(g)
        raise DomainError(f"{g!r} is not an element of a group of order {self.order}")

    def mul(self, g, h) -> int:
        return self.table[g][h]

    def inv(self, g) -> int:
        return self.inverses[g]

    def describe(self) -> dict:
        return {"finite": {"table": [list(r) for r in self.table]}}

    def label(self, g) -> str:
        return str(g)


Group = IntegerLattice | FiniteGroup


def parse_group(spec: dict):
    """Build a group from ``{"lattice": d}`` or ``{"finite": {"table": [...]}}``.

    ``{"cyclic": n}`` is accepted as shorthand for the table of Z/n.
    """
    if not isinstance(spec, dict) or len(spec) != 1:
        raise ConfigError(f"group spec must have exactly one key, got {spec!r}")
    (kind, value), = spec.items()
    if kind == "lattice":
        if not isinstance(value, int) or value < 1:
            raise ConfigError("lattice dimension must be a positive integer")
        return IntegerLattice(value)
    if kind == "cyclic":
        if not isinstance(value, int) or value < 1:
            raise ConfigError("cyclic order must be a positive integer")
        return FiniteGroup.cyclic(value)
    if kind == "finite":
        if not isinstance(value, dict) or set(value) - {"table", "inverses"} or "table" not in value:
            raise ConfigError("finite group spec needs a 'table' (and optional 'inverses')")
        return FiniteGroup(value["table"], value.get("inverses"))
    raise ConfigError(f"unknown group kind {kind!r}")


@dataclass(frozen=True, eq=False)
class FolnerSet:
    """An ordered finite subset of a group; position i labels the i-th matrix unit row."""

    group: object
    elements: tuple

    def __post_init__(self):
        elems = tuple(self.group.normalize(g) for g in self.elements)
        if not elems:
            raise ParameterError("Følner sets must be nonempty")
        index = {g: i for i, g in enumerate(elems)}
        if len(index) != len(elems):
            raise ParameterError("Følner set has duplicate elements")
        object.__setattr__(self, "elements", elems)
        object.__setattr__(self, "index", index)

    def __len__(self):
        return len(self.elements)

    def __iter__(self):
        return iter(self.elements)

    def __contains__(self, g):
        return g in self.index

    def __eq__(self, other):
        return isinstance(other, FolnerSet) and self.group == other.group and self.elements == other.elements

    def __hash__(self):
        return hash((self.group, self.elements))

    @cached_property
    def as_set(self) -> frozenset:
        return frozenset(self.elements)

    def translate(self, s) -> frozenset:
        """The left translate sF as an unordered set."""
        G = self.group
        return frozenset(G.mul(s, g) for g in self.elements)

    def overlap(self, s) -> int:
        """|F ∩ sF|."""
        G = self.group
        return sum(1 for g in self.elements if G.mul(s, g) in self.index)


def box_folner(d: int, n: int) -> FolnerSet:
    """The box [-n, n]^d in Z^d, lexicographically ordered."""
    if d < 1 or n < 0:
        raise ParameterError(f"box_folner needs d >= 1 and n >= 0, got d={d}, n={n}")
    return FolnerSet(IntegerLattice(d), tuple(itertools.product(range(-n, n + 1), repeat=d)))


def whole_group(G: FiniteGroup) -> FolnerSet:
    return FolnerSet(G, tuple(range(G.order)))


def folner_defect(F: FolnerSet, s) -> float:
    """|F Δ sF| / |F|, computed from the symmetric difference."""
    s = F.group.normalize(s)
    return len(F.as_set ^ F.translate(s)) / len(F)


def folner_overlap_defect(F: FolnerSet, s) -> float:
    """Same quantity as :func:`folner_defect`, via 2 - 2|F ∩ sF|/|F|."""
    s = F.group.normalize(s)
    return 2.0 - 2.0 * F.overlap(s) / len(F)


def quotients(F: FolnerSet) -> set:
    """The set {g h^-1 : g, h in F}."""
    G = F.group
    inv = [G.inv(h) for h in F.elements]
    return {G.mul(g, hi) for g in F.elements for hi in inv}


def summability_lhs(F_n: FolnerSet, F_m: FolnerSet) -> float:
    """max over g, h in F_n of (1 - |F_m ∩ gh^-1 F_m| / |F_m|) * |F_n|."""
    if F_n.group != F_m.group:
        raise DomainError("Følner sets live in different groups")
    worst = min(F_m.overlap(s) for s in quotients(F_n))
    return (1.0 - worst / len(F_m)) * len(F_n)


class BoxSequence(Sequence):
    """Lazily materialized boxes [-n, n]^d for n = 0 .. max_n."""

    def __init__(self, d: int, max_n: int):
        if max_n < 0:
            raise ParameterError("max_n must be >= 0")
        self.d = d
        self.max_n = max_n
        self._cache = {}

    def __len__(self):
        return self.max_n + 1

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        if i < 0:
            i += len(self)
        if not 0 <= i < len(self):
            raise IndexError(i)
        if i not in self._cache:
            self._cache[i] = box_folner(self.d, i)
        return self._cache[i]


@dataclass(frozen=True)
class FolnerSequence:
    group: object
    sets: Sequence

    def __len__(self):
        return len(self.sets)

    def __getitem__(self, i) -> FolnerSet:
        return self.sets[i]

    @classmethod
    def boxes(cls, d: int, max_n: int) -> "FolnerSequence":
        return cls(IntegerLattice(d), BoxSequence(d, max_n))

    @classmethod
    def explicit(cls, group, sets: Iterable) -> "FolnerSequence":
        return cls(group, tuple(s if isinstance(s, FolnerSet) else FolnerSet(group, tuple(s)) for s in sets))


def parse_folner(group, spec: dict) -> FolnerSequence:
    """Parse ``{"boxes": {"max_n": N}}`` or ``{"explicit": [[...], ...]}``."""
    if not isinstance(spec, dict) or len(spec) != 1:
        raise ConfigError(f"folner spec must have exactly one key, got {spec!r}")
    (kind, value), = spec.items()
    if kind == "boxes":
        if not isinstance(group, IntegerLattice):
            raise ConfigError("box Følner sets need a lattice group")
        if not isinstance(value, dict) or set(value) != {"max_n"}:
            raise ConfigError("boxes spec must be {'max_n': N}")
        return FolnerSequence.boxes(group.d, int(value["max_n"]))
    if kind == "explicit":
        if not isinstance(value, list) or not value:
            raise ConfigError("explicit Følner spec must be a nonempty list of element lists")
        try:
            return FolnerSequence.explicit(group, value)
        except (DomainError, ParameterError) as exc:
            raise ConfigError(str(exc)) from exc
    raise ConfigError(f"unknown folner kind {kind!r}")


@dataclass(frozen=True)
class SummabilityCertificate:
    indices: tuple
    eps: tuple

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.indices, self.indices[1:])):
            raise ParameterError("certificate indices must be strictly increasing")
        if any(e <= 0 for e in self.eps) or any(b > a for a, b in zip(self.eps, self.eps[1:])):
            raise ParameterError("eps must be positive and non-increasing")

    @property
    def eps_sum(self) -> float:
        return float(sum(self.eps))

    def to_dict(self) -> dict:
        return {"indices": list(self.indices), "eps": list(self.eps), "eps_sum": self.eps_sum}


class HorizonExhausted(RuntimeError):
    """No admissible next index within the search horizon."""

    def __init__(self, message, partial: SummabilityCertificate):
        super().__init__(message)
        self.partial = partial


def pow2_eps(count: int) -> list:
    return [2.0 ** -k for k in range(count)]


def extract_summable(seq: FolnerSequence, eps: Sequence[float], horizon: int = DEFAULT_HORIZON) -> SummabilityCertificate:
    """Greedily select a subsequence satisfying the summable Følner condition.

    The first index is 0.  The k-th chosen index is the least candidate beyond
    the previous one whose summability lhs against every earlier choice is
    below ``eps[k]``.  One index is chosen per entry of ``eps``.  Candidates
    are restricted to ``range(min(horizon, len(seq)))``.
    """
    eps = [float(e) for e in eps]
    if not eps:
        return SummabilityCertificate((), ())
    if any(e <= 0 for e in eps) or any(b > a for a, b in zip(eps, eps[1:])):
        raise ParameterError("eps must be positive and non-increasing")
    limit = min(horizon, len(seq))
    if limit < 1:
        raise HorizonExhausted("empty search range", SummabilityCertificate((), ()))
    chosen = [0]
    candidate = 1
    for k in range(1, len(eps)):
        while True:
            if candidate >= limit:
                raise HorizonExhausted(
                    f"not certifiable within horizon {limit}: no index for eps[{k}]={eps[k]:g}",
                    SummabilityCertificate(tuple(chosen), tuple(eps[: len(chosen)])),
                )
            F_m = seq[candidate]
            if all(summability_lhs(seq[i], F_m) < eps[k] for i in chosen):
                chosen.append(candidate)
                candidate += 1
                break
            candidate += 1
    return SummabilityCertificate(tuple(chosen), tuple(eps))
