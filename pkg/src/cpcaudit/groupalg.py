"""Finitely supported elements of the group algebra C[G] and their reduced C*-norm.

For Z^d the reduced norm of a = Σ c_g λ_g is the sup-norm of the
trigonometric polynomial p(θ) = Σ c_g exp(i g·θ) on the torus.  It is
enclosed by sampling p on a uniform grid (lower bound) and inflating by the
Bernstein factor 1/(1 − dπN/M) (upper bound), where N is the largest
coordinate degree and M the number of grid points per axis.  For finite
groups the norm is the exact spectral norm of the left-regular matrix.
"""
from __future__ import annotations

from dataclasses import dataclass
from numbers import Number

import numpy as np
from scipy.signal import convolve as _nd_convolve

from .errors import DomainError, ParameterError
from .groups import FiniteGroup, IntegerLattice

PRUNE = 1e-15
DEFAULT_GRID_FACTOR = 64
MIN_GRID = 16
MAX_GRID_POINTS = 1 << 26


class GroupAlgebraElement:
    """Σ_g c_g λ_g with finitely many nonzero c_g (entries below 1e-15 are dropped)."""

    __slots__ = ("group", "coeffs")

    def __init__(self, group, coeffs=None):
        self.group = group
        clean = {}
        for g, c in (coeffs or {}).items():
            c = complex(c)
            if abs(c) > PRUNE:
                key = group.normalize(g)
                clean[key] = clean.get(key, 0j) + c
        self.coeffs = {g: c for g, c in clean.items() if abs(c) > PRUNE}

    def __repr__(self):
        terms = " + ".join(f"({c:.6g})δ[{self.group.label(g)}]" for g, c in sorted(self.coeffs.items()))
        return f"GroupAlgebraElement({terms or '0'})"

    @property
    def support(self) -> list:
        return sorted(self.coeffs)

    def coeff(self, g) -> complex:
        return self.coeffs.get(self.group.normalize(g), 0j)

    def _same_group(self, other):
        if other.group != self.group:
            raise DomainError("group algebra elements over different groups")

    def __add__(self, other):
        if not isinstance(other, GroupAlgebraElement):
            return NotImplemented
        self._same_group(other)
        out = dict(self.coeffs)
        for g, c in other.coeffs.items():
            out[g] = out.get(g, 0j) + c
        return GroupAlgebraElement(self.group, out)

    def __neg__(self):
        return GroupAlgebraElement(self.group, {g: -c for g, c in self.coeffs.items()})

    def __sub__(self, other):
        if not isinstance(other, GroupAlgebraElement):
            return NotImplemented
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, Number):
            return GroupAlgebraElement(self.group, {g: other * c for g, c in self.coeffs.items()})
        if isinstance(other, GroupAlgebraElement):
            return convolve(self, other)
        return NotImplemented

    def __rmul__(self, other):
        if isinstance(other, Number):
            return self * other
        return NotImplemented

    def __eq__(self, other):
        return isinstance(other, GroupAlgebraElement) and self.group == other.group and self.coeffs == other.coeffs

    __hash__ = None

    def star(self) -> "GroupAlgebraElement":
        return involute(self)

    def max_abs_diff(self, other: "GroupAlgebraElement") -> float:
        d = (self - other).coeffs
        return max((abs(c) for c in d.values()), default=0.0)

    def to_json(self) -> list:
        out = []
        for g in self.support:
            c = self.coeffs[g]
            out.append({"element": list(g) if isinstance(g, tuple) else g, "re": c.real, "im": c.imag})
        return out

    @classmethod
    def from_json(cls, group, data: list) -> "GroupAlgebraElement":
        return cls(group, {(tuple(t["element"]) if isinstance(t["element"], list) else t["element"]):
                           complex(t["re"], t.get("im", 0.0)) for t in data})


def delta(group, s) -> GroupAlgebraElement:
    return GroupAlgebraElement(group, {s: 1.0})


def zero(group) -> GroupAlgebraElement:
    return GroupAlgebraElement(group, {})


def involute(a: GroupAlgebraElement) -> GroupAlgebraElement:
    """a*(g) = conj(a(g^-1))."""
    G = a.group
    return GroupAlgebraElement(G, {G.inv(g): c.conjugate() for g, c in a.coeffs.items()})


def _lattice_dense(a: GroupAlgebraElement):
    pts = np.array(a.support, dtype=np.int64)
    lo = pts.min(axis=0)
    shape = tuple(pts.max(axis=0) - lo + 1)
    arr = np.zeros(shape, dtype=complex)
    arr[tuple((pts - lo).T)] = [a.coeffs[g] for g in a.support]
    return arr, lo


def convolve(a: GroupAlgebraElement, b: GroupAlgebraElement) -> GroupAlgebraElement:
    """(a·b)(g) = Σ_h a(h) b(h^-1 g)."""
    a._same_group(b)
    G = a.group
    if not a.coeffs or not b.coeffs:
        return zero(G)
    if isinstance(G, IntegerLattice) and len(a.coeffs) * len(b.coeffs) > 64:
        A, lo_a = _lattice_dense(a)
        B, lo_b = _lattice_dense(b)
        C = _nd_convolve(A, B, method="direct")
        lo = lo_a + lo_b
        idx = np.argwhere(np.abs(C) > PRUNE)
        return GroupAlgebraElement(G, {tuple(int(v) for v in (i + lo)): C[tuple(i)] for i in idx})
    out = {}
    for h, ca in a.coeffs.items():
        for k, cb in b.coeffs.items():
            g = G.mul(h, k)
            out[g] = out.get(g, 0j) + ca * cb
    return GroupAlgebraElement(G, out)


@dataclass(frozen=True)
class NormEnclosure:
    lower: float
    upper: float

    def contains(self, value: float, widen: float = 0.0) -> bool:
        return self.lower - widen <= value <= self.upper + widen

    def overlaps(self, other: "NormEnclosure", widen: float = 0.0) -> bool:
        return self.lower - widen <= other.upper and other.lower - widen <= self.upper

    @property
    def width(self) -> float:
        return self.upper - self.lower


def _grid_size(grid_factor: int, degree: int) -> int:
    target = max(MIN_GRID, grid_factor * degree)
    return 1 << int(np.ceil(np.log2(target)))


def torus_values(a: GroupAlgebraElement, M: int) -> np.ndarray:
    """p(2πk/M) for all k in {0..M-1}^d, where p(θ) = Σ c_g exp(i g·θ)."""
    d = a.group.d
    P = np.zeros((M,) * d, dtype=complex)
    for g, c in a.coeffs.items():
        P[tuple(v % M for v in g)] += c
    return np.fft.ifftn(P) * (M ** d)


def regular_matrix(a: GroupAlgebraElement) -> np.ndarray:
    """Σ c_g λ(g) on ℓ²(G) for a finite group, λ(g)δ_h = δ_{gh}."""
    G = a.group
    n = G.order
    T = G.array
    L = np.zeros((n, n), dtype=complex)
    cols = np.arange(n)
    for g, c in a.coeffs.items():
        L[T[g], cols] += c
    return L


def reduced_norm(a: GroupAlgebraElement, grid_factor: int = DEFAULT_GRID_FACTOR) -> NormEnclosure:
    G = a.group
    if isinstance(G, FiniteGroup):
        v = float(np.linalg.norm(regular_matrix(a), 2)) if a.coeffs else 0.0
        return NormEnclosure(v, v)
    if not isinstance(G, IntegerLattice):
        raise DomainError(f"no certified norm oracle for {G!r}")
    if not a.coeffs:
        return NormEnclosure(0.0, 0.0)
    if len(a.coeffs) == 1:
        # c·λ_s is a scaled unitary
        v = abs(next(iter(a.coeffs.values())))
        return NormEnclosure(v, v)
    d = G.d
    N = max(abs(v) for g in a.coeffs for v in g)
    M = _grid_size(grid_factor, N)
    if d * np.pi * N / M >= 1.0:
        raise ParameterError(f"grid_factor {grid_factor} too small: d*pi*N/M = {d * np.pi * N / M:.3f} >= 1")
    if M ** d > MAX_GRID_POINTS:
        raise ParameterError(f"torus grid of {M}^{d} points exceeds the budget")
    mags = np.abs(torus_values(a, M))
    lower = float(mags.max())
    # every dyadic subgrid gives its own certified bound; keep the best
    upper = np.inf
    stride = 1
    while M // stride >= MIN_GRID:
        slack = d * np.pi * N * stride / M
        if slack >= 1.0:
            break
        sub = mags[(slice(None, None, stride),) * d].max()
        upper = min(upper, float(sub) / (1.0 - slack))
        stride *= 2
    return NormEnclosure(lower, max(upper, lower))


def distance(a: GroupAlgebraElement, b: GroupAlgebraElement, grid_factor: int = DEFAULT_GRID_FACTOR) -> NormEnclosure:
    return reduced_norm(a - b, grid_factor)
