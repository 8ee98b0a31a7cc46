"""Følner approximations of reduced group C*-algebras and c.p.c. systems.

Stage n of an :class:`ApproximationSystem` is the matrix algebra M_{F_n}
with matrix units e_{g,h} indexed by the (ordered) Følner set F_n.  The maps

    ψ_n(a)_{g,h} = a(g h^-1),        φ_n(e_{g,h}) = λ_{g h^-1} / |F_n|

are unital and completely positive; ρ_{n+1,n} = ψ_{n+1} ∘ φ_n are the
connecting maps of the associated c.p.c. system.

Internally every group element that can occur as g h^-1 inside some stage
gets an integer code, and each stage keeps the |F_n|×|F_n| table of codes of
g h^-1.  φ_n is then a bincount over that table and ψ_n a gather, so one
ρ-step costs O(|F_n|^2 + |F_{n+1}|^2).
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .cpmaps import (CpMap, amplify, compose, identity_map, verify_contractive,
                     verify_cp)
from .errors import ParameterError, ShapeError, StepRejected
from .fdcstar import AlgElement, FiniteDimCstar, norm
from .groupalg import (DEFAULT_GRID_FACTOR, GroupAlgebraElement, distance)
from .groups import (FiniteGroup, FolnerSet, IntegerLattice,
                     SummabilityCertificate, summability_lhs)

STEP_TOL = 1e-9


class CpcSystem:
    """A sequence of finite-dimensional C*-algebras with c.p.c. connecting maps.

    ``steps[n]`` maps ``algebras[n]`` into ``algebras[n+1]``.  Every step is
    checked with :func:`verify_cp` and :func:`verify_contractive` on
    construction unless ``verify=False``.
    """

    def __init__(self, algebras: Sequence[FiniteDimCstar], steps: Sequence[CpMap], *,
                 verify: bool = True, tol: float = STEP_TOL, name: str = "system"):
        algebras, steps = list(algebras), list(steps)
        if len(steps) != len(algebras) - 1:
            raise ShapeError(f"{len(algebras)} algebras need {len(algebras) - 1} steps, got {len(steps)}")
        for n, f in enumerate(steps):
            if f.domain != algebras[n] or f.codomain != algebras[n + 1]:
                raise ShapeError(f"step {n} does not map stage {n} to stage {n + 1}")
        self.algebras = algebras
        self.steps = steps
        self.name = name
        self._memo = {}
        self._lock = threading.Lock()
        self.verified_tol = None
        if verify:
            self.verify_steps(tol)

    def verify_steps(self, tol: float = STEP_TOL):
        """Check every step is c.p.c.; large intermediate matrices are released afterwards."""
        for n, f in enumerate(self.steps):
            try:
                check_step(f, n, tol)
            finally:
                f.release_caches()
        self.verified_tol = tol

    def __len__(self):
        return len(self.algebras)

    @property
    def top(self) -> int:
        return len(self.algebras) - 1

    def _stage(self, n):
        if not 0 <= n < len(self.algebras):
            raise ParameterError(f"stage {n} outside 0..{self.top}")

    def rho(self, m: int, n: int) -> CpMap:
        """ρ_{m,n} = ρ_{m,m-1} ∘ ... ∘ ρ_{n+1,n}, with ρ_{n,n} the identity."""
        if n > m:
            raise ParameterError(f"rho(m={m}, n={n}) needs n <= m")
        self._stage(m)
        self._stage(n)
        key = (m, n)
        f = self._memo.get(key)
        if f is not None:
            return f
        if m == n:
            f = identity_map(self.algebras[n])
        else:
            steps = self.steps[n:m]
            prev = (m - 1, n)

            def fn(x, steps=steps):
                for s in steps:
                    x = s.apply(x)
                return x

            def builder(m=m, prev=prev):
                return (self.steps[m - 1].action_matrix(sparse=True)
                        @ self.rho(*prev).action_matrix(sparse=True)).tocsr()
            f = CpMap(self.algebras[n], self.algebras[m], fn=fn, action_builder=builder, name=f"rho[{m},{n}]")
        with self._lock:
            return self._memo.setdefault(key, f)

    def rho_r(self, m: int, n: int, r: int) -> CpMap:
        return amplify(self.rho(m, n), r)

    def push(self, x: AlgElement, k: int, m: int) -> AlgElement:
        """ρ_{m,k}(x)."""
        return self.rho(m, k).apply(x)

    def describe(self) -> str:
        return self.name


def check_step(f: CpMap, n: int, tol: float = STEP_TOL):
    v = verify_cp(f, tol)
    if not v.is_cp:
        raise StepRejected(f"step {n} is not completely positive: min Choi eigenvalue {v.min_choi_eigenvalue:.3e}",
                           step=n, min_choi_eigenvalue=v.min_choi_eigenvalue)
    if not verify_contractive(f, tol):
        u = norm(f.apply(f.domain.unit()))
        raise StepRejected(f"step {n} is not contractive: ‖ρ(1)‖ = {u:.6g}", step=n,
                           min_choi_eigenvalue=v.min_choi_eigenvalue, unit_norm=u)


def build_cpc_from_maps(algebras, steps, **kw) -> CpcSystem:
    return CpcSystem(algebras, steps, **kw)


class _Coder:
    """Integer codes for group elements occurring as quotients g h^-1 within some stage."""

    def __init__(self, group, stages):
        self.group = group
        if isinstance(group, IntegerLattice):
            R = 2 * max(max(abs(c) for g in F for c in g) for F in stages)
            self.R = R
            self.shape = (2 * R + 1,) * group.d
            self.size = int(np.prod(self.shape))
        else:
            self.size = group.order

    def encode_array(self, E: np.ndarray) -> np.ndarray:
        """Codes of an integer array of elements (shape (..., d) for lattices)."""
        if isinstance(self.group, IntegerLattice):
            return np.ravel_multi_index(tuple(np.moveaxis(E + self.R, -1, 0)), self.shape)
        return E

    def encode(self, g):
        """Code of g, or None when g cannot occur inside any stage."""
        if isinstance(self.group, IntegerLattice):
            if max(abs(c) for c in g) > self.R:
                return None
            return int(np.ravel_multi_index(tuple(c + self.R for c in g), self.shape))
        return g

    def decode(self, code: int):
        if isinstance(self.group, IntegerLattice):
            return tuple(int(v) - self.R for v in np.unravel_index(int(code), self.shape))
        return int(code)

    def quotient_table(self, F: FolnerSet) -> np.ndarray:
        if isinstance(self.group, IntegerLattice):
            E = np.array(F.elements, dtype=np.int64)
            return self.encode_array(E[:, None, :] - E[None, :, :])
        T = self.group.array
        E = np.array(F.elements, dtype=np.int64)
        inv = np.array(self.group.inverses, dtype=np.int64)
        return T[E[:, None], inv[E][None, :]]


@dataclass
class ALimit:
    value: GroupAlgebraElement
    increments: list
    stages: list = field(default_factory=list)


class ApproximationSystem:
    """ψ_n: C*_r(G) → M_{F_n} and φ_n: M_{F_n} → C*_r(G) for an ordered list of Følner sets.

    Stage labels are relative to ``stages`` (0, 1, 2, ...), whatever indices
    the sets had in the Følner sequence they were taken from.
    """

    def __init__(self, group, stages: Sequence[FolnerSet], certificate: SummabilityCertificate | None = None,
                 name: str | None = None):
        stages = list(stages)
        if not stages:
            raise ParameterError("an approximation system needs at least one stage")
        for F in stages:
            if F.group != group:
                raise ShapeError("stage Følner set lives in another group")
        if not isinstance(group, (IntegerLattice, FiniteGroup)):
            raise ParameterError(f"unsupported group {group!r}")
        self.group = group
        self.stages = stages
        self.certificate = certificate
        self.name = name or "folner"
        self.algebras = [FiniteDimCstar((len(F),)) for F in stages]
        self._coder = _Coder(group, stages)
        self._tables = [self._coder.quotient_table(F) for F in stages]
        self._cpc = None

    def __len__(self):
        return len(self.stages)

    def _stage(self, n):
        if not 0 <= n < len(self.stages):
            raise ParameterError(f"stage {n} outside 0..{len(self.stages) - 1}")

    def matrix_unit(self, n: int, g, h) -> AlgElement:
        self._stage(n)
        F = self.stages[n]
        G = self.group
        return self.algebras[n].matrix_unit(F.index[G.normalize(g)], F.index[G.normalize(h)])

    # -- ψ and φ on coefficient vectors -------------------------------------------

    def _vector(self, a: GroupAlgebraElement) -> np.ndarray:
        if a.group != self.group:
            raise ShapeError("group algebra element over the wrong group")
        v = np.zeros(self._coder.size, dtype=complex)
        for g, c in a.coeffs.items():
            code = self._coder.encode(g)
            if code is not None:
                v[code] += c
        return v

    def _element(self, v: np.ndarray) -> GroupAlgebraElement:
        nz = np.flatnonzero(np.abs(v) > 0)
        return GroupAlgebraElement(self.group, {self._coder.decode(c): v[c] for c in nz})

    def _phi_vec(self, n: int, X: np.ndarray) -> np.ndarray:
        D = self._tables[n].ravel()
        X = X.ravel()
        size = self._coder.size
        v = np.bincount(D, weights=X.real, minlength=size) + 1j * np.bincount(D, weights=X.imag, minlength=size)
        return v / len(self.stages[n])

    def _psi_vec(self, n: int, v: np.ndarray) -> AlgElement:
        return AlgElement(self.algebras[n], (v[self._tables[n]],))

    def psi(self, n: int, a: GroupAlgebraElement) -> AlgElement:
        """ψ_n(a), the compression P_n λ(a) P_n; entries (ψ_n(a))_{g,h} = a(g h^-1)."""
        self._stage(n)
        return self._psi_vec(n, self._vector(a))

    def psi_embedding(self, a: GroupAlgebraElement, n: int) -> AlgElement:
        """Stage-n representative of the image of ``a``; same as ``psi(n, a)``."""
        return self.psi(n, a)

    def phi(self, n: int, x: AlgElement) -> GroupAlgebraElement:
        """φ_n(x) = (1/|F_n|) Σ_{g,h} x_{g,h} λ_{g h^-1}."""
        self._stage(n)
        if x.algebra != self.algebras[n]:
            raise ShapeError(f"element of {x.algebra.describe()} is not in stage {n}")
        return self._element(self._phi_vec(n, x.blocks[0]))

    def phi_psi_scalar(self, m: int, s) -> float:
        """|F_m ∩ sF_m| / |F_m|, the scalar with φ_m(ψ_m(λ_s)) = scalar · λ_s."""
        self._stage(m)
        F = self.stages[m]
        return F.overlap(self.group.normalize(s)) / len(F)

    # -- the associated c.p.c. system ----------------------------------------------

    def _step_action(self, n: int) -> sp.csr_matrix:
        """Sparse matrix of ρ_{n+1,n}: e_{g,h} ↦ (1/|F_n|) Σ_{r ∈ F_{n+1} ∩ sF_{n+1}} e_{r, s^-1 r}, s = g h^-1."""
        src = self._tables[n].ravel()
        dst = self._tables[n + 1].ravel()
        order = np.argsort(dst, kind="stable")
        sorted_codes = dst[order]
        start = np.searchsorted(sorted_codes, src, side="left")
        counts = np.searchsorted(sorted_codes, src, side="right") - start
        total = int(counts.sum())
        cols = np.repeat(np.arange(src.size), counts)
        offsets = np.repeat(np.cumsum(counts) - counts, counts)
        rows = order[np.repeat(start, counts) + np.arange(total) - offsets]
        vals = np.full(total, 1.0 / len(self.stages[n]), dtype=complex)
        return sp.csr_matrix((vals, (rows, cols)), shape=(dst.size, src.size))

    def rho_step(self, n: int) -> CpMap:
        """ρ_{n+1,n} = ψ_{n+1} ∘ φ_n."""
        self._stage(n)
        self._stage(n + 1)

        def fn(x):
            return self._psi_vec(n + 1, self._phi_vec(n, x.blocks[0]))
        return CpMap(self.algebras[n], self.algebras[n + 1], fn=fn,
                     action_builder=lambda: self._step_action(n), name=f"rho_step[{n}]")

    def build_cpc(self, verify: bool = True, tol: float = STEP_TOL) -> CpcSystem:
        if self._cpc is None:
            steps = [self.rho_step(n) for n in range(len(self.stages) - 1)]
            self._cpc = CpcSystem(self.algebras, steps, verify=verify, tol=tol, name=self.name)
        elif verify and self._cpc.verified_tol is None:
            self._cpc.verify_steps(tol)
        return self._cpc

    @property
    def cpc(self) -> CpcSystem:
        """The associated c.p.c. system, built (and verified) on first use."""
        return self._cpc if self._cpc is not None else self.build_cpc()

    def rho(self, m: int, n: int) -> CpMap:
        return self.cpc.rho(m, n)

    # -- summability and limits ---------------------------------------------------

    def check_summable(self, indices: Sequence[int], eps: Sequence[float],
                       grid_factor: int = DEFAULT_GRID_FACTOR, direct: bool = False) -> dict:
        """Bound ‖φ_n − φ_m∘ψ_m∘φ_n‖ for every pair m > n of ``indices`` and compare with eps.

        The combinatorial bound is summability_lhs(F_n, F_m).  With
        ``direct=True`` a second, basis-sweep bound Σ_{g,h} ‖φ_n(e_gh) −
        φ_mψ_mφ_n(e_gh)‖ is computed with certified reduced norms.
        """
        indices = list(indices)
        if len(eps) < len(indices):
            raise ParameterError("need one eps per index")
        for i in indices:
            self._stage(i)
        pairs = []
        for b in range(1, len(indices)):
            m = indices[b]
            for a in range(b):
                n = indices[a]
                bound = summability_lhs(self.stages[n], self.stages[m])
                row = {"n": n, "m": m, "eps": float(eps[b]), "bound": bound}
                if direct:
                    row["direct_bound"] = self._direct_summability_bound(n, m, grid_factor)
                row["pass"] = bound < eps[b]
                pairs.append(row)
        return {"pairs": pairs, "pass": all(p["pass"] for p in pairs)}

    def _direct_summability_bound(self, n: int, m: int, grid_factor: int) -> float:
        D = self._tables[n]
        codes, mult = np.unique(D, return_counts=True)
        total = 0.0
        for code, k in zip(codes, mult):
            i, j = map(int, np.argwhere(D == code)[0])
            e = self.algebras[n].matrix_unit(i, j)
            a = self.phi(n, e)
            b = self.phi(m, self.psi(m, a))
            total += k * distance(a, b, grid_factor).upper
        return total

    def a_limit(self, k: int, x: AlgElement, n_max: int, grid_factor: int = DEFAULT_GRID_FACTOR) -> ALimit:
        """φ_{n_max}(ρ_{n_max,k}(x)) with the Cauchy increments along the way."""
        self._stage(k)
        self._stage(n_max)
        if n_max < k:
            raise ParameterError("n_max must be >= k")
        if x.algebra != self.algebras[k]:
            raise ShapeError(f"element is not in stage {k}")
        cpc = self.cpc
        y = x
        prev = self.phi(k, y)
        increments = []
        for n in range(k, n_max):
            y = cpc.steps[n].apply(y)
            cur = self.phi(n + 1, y)
            increments.append(distance(cur, prev, grid_factor).upper)
            prev = cur
        return ALimit(prev, increments, list(range(k, n_max + 1)))
