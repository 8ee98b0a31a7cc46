"""Linear maps between finite-dimensional C*-algebras.

A :class:`CpMap` is defined either by its action matrix in the matrix-unit
bases (see :mod:`cpcaudit.fdcstar` for the vectorization) or by a function
together with an optional builder for that matrix.  Function-backed maps let
large Følner stages be applied in O(|F|^2) without ever forming the
(|F_{n+1}|^2 × |F_n|^2) action matrix; the matrix is built only when a Choi
check or a composition asks for it.

Choi convention (unnormalized), per domain block p and codomain block q::

    C_pq = sum_{i,j} E_ij ⊗ f(E_ij)_q ,

indexed by (i*d_q + a, j*d_q + b).  f is completely positive iff every C_pq
is positive semidefinite.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import ContractViolation, ParameterError, ShapeError
from .fdcstar import (AlgElement, FiniteDimCstar, amplify_algebra, entries,
                      from_entries, norm)

CP_TOL = 1e-10


@dataclass(frozen=True)
class CpVerdict:
    min_choi_eigenvalue: float
    is_cp: bool
    hermitian_defect: float = 0.0


class CpMap:
    """A linear map ``domain -> codomain``.

    Instances are immutable apart from write-once memo slots (the action
    matrix, Choi blocks and the Choi spectrum); racing writers compute identical
    values, and the lock only keeps the work from being duplicated.
    """

    def __init__(self, domain: FiniteDimCstar, codomain: FiniteDimCstar, *,
                 action=None, fn: Callable | None = None, action_builder: Callable | None = None,
                 name: str = "map"):
        if action is None and fn is None:
            raise ParameterError("a CpMap needs an action matrix or a function")
        self.domain = domain
        self.codomain = codomain
        self.name = name
        self._fn = fn
        self._builder = action_builder
        self._action = None
        if action is not None:
            m = sp.csr_matrix(action, dtype=complex) if not sp.issparse(action) else action.tocsr().astype(complex)
            if m.shape != (codomain.dim, domain.dim):
                raise ShapeError(f"action shape {m.shape} != {(codomain.dim, domain.dim)}")
            self._action = m
        self._choi = {}
        self._spectrum = None
        self._lock = threading.Lock()

    def __repr__(self):
        return f"CpMap({self.name}: {self.domain.describe()} -> {self.codomain.describe()})"

    # -- evaluation -------------------------------------------------------

    def apply(self, x: AlgElement) -> AlgElement:
        if x.algebra != self.domain:
            raise ShapeError(f"{self.name} expects an element of {self.domain.describe()}, got {x.algebra.describe()}")
        if self._fn is not None:
            y = self._fn(x)
            if y.algebra != self.codomain:
                raise ShapeError(f"{self.name} produced an element of the wrong algebra")
            return y
        return self.codomain.from_vec(self._action @ x.vec())

    __call__ = apply

    def _build_action(self) -> sp.csr_matrix:
        if self._builder is not None:
            m = self._builder()
            return (m if sp.issparse(m) else sp.csr_matrix(m)).tocsr().astype(complex)
        A = self.domain
        rows, cols, vals = [], [], []
        for b, d in enumerate(A.block_dims):
            for i in range(d):
                for j in range(d):
                    c = A.basis_index(b, i, j)
                    v = self.apply(A.matrix_unit(i, j, b)).vec()
                    nz = np.flatnonzero(v)
                    rows.append(nz)
                    cols.append(np.full(nz.shape, c))
                    vals.append(v[nz])
        return sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.codomain.dim, A.dim),
        )

    def action_matrix(self, sparse: bool = False):
        """The matrix of the map in matrix-unit bases, shape (codomain.dim, domain.dim)."""
        if self._action is None:
            with self._lock:
                if self._action is None:
                    self._action = self._build_action()
        return self._action if sparse else self._action.toarray()

    @property
    def action(self) -> np.ndarray:
        return self.action_matrix(sparse=False)

    # -- Choi matrices ------------------------------------------------------

    def choi_block(self, p: int, q: int) -> sp.csr_matrix:
        key = (p, q)
        if key not in self._choi:
            M = self.action_matrix(sparse=True)
            dp, dq = self.domain.block_dims[p], self.codomain.block_dims[q]
            op, oq = self.domain.offsets[p], self.codomain.offsets[q]
            sub = M[oq:oq + dq * dq, op:op + dp * dp].tocoo()
            a, b = np.divmod(sub.row, dq)
            i, j = np.divmod(sub.col, dp)
            C = sp.csr_matrix((sub.data, (i * dq + a, j * dq + b)), shape=(dp * dq, dp * dq))
            self._choi.setdefault(key, C)
        return self._choi[key]

    def release_caches(self):
        """Drop the memoized action and Choi matrices (verdicts are kept).

        Only maps that can rebuild their action (function-backed) give it up.
        """
        with self._lock:
            self._choi = {}
            if self._fn is not None:
                self._action = None

    def choi(self, p: int = 0, q: int = 0) -> np.ndarray:
        return self.choi_block(p, q).toarray()

    def to_json(self) -> dict:
        M = self.action
        return {"domain": list(self.domain.block_dims), "codomain": list(self.codomain.block_dims),
                "re": M.real.tolist(), "im": M.imag.tolist()}

    @classmethod
    def from_json(cls, data: dict, name: str = "map") -> "CpMap":
        dom = FiniteDimCstar(tuple(data["domain"]))
        cod = FiniteDimCstar(tuple(data["codomain"]))
        M = np.array(data["re"], dtype=float) + 1j * np.array(data.get("im", np.zeros_like(data["re"])), dtype=float)
        return cls(dom, cod, action=M, name=name)


def _min_eigenvalue_hermitian(C: sp.csr_matrix) -> float:
    """Smallest eigenvalue of a sparse Hermitian matrix, block by block.

    Connected components of the sparsity graph give an exact block-diagonal
    decomposition after permutation.
    """
    n = C.shape[0]
    if C.nnz == 0:
        return 0.0
    pattern = (abs(C) + abs(C.T)).tocsr()
    ncomp, labels = connected_components(pattern, directed=False)
    sizes = np.bincount(labels, minlength=ncomp)
    diag = C.diagonal().real
    lo = float(diag[sizes[labels] == 1].min()) if np.any(sizes == 1) else np.inf
    order = np.argsort(labels, kind="stable")
    bounds = np.concatenate([[0], np.cumsum(sizes)])
    P = C[order][:, order].tocsr()
    for c in np.flatnonzero(sizes > 1):
        b0, b1 = bounds[c], bounds[c + 1]
        block = P[b0:b1, b0:b1].toarray()
        block = (block + block.conj().T) / 2
        lo = min(lo, float(np.linalg.eigvalsh(block)[0]))
    if n > 0 and lo == np.inf:
        lo = 0.0
    return lo


def choi_spectrum(f: CpMap) -> tuple:
    """(min Choi eigenvalue, Hermitian defect) over all block pairs; memoized on ``f``."""
    if f._spectrum is None:
        lo, herm = np.inf, 0.0
        for p in range(len(f.domain.block_dims)):
            for q in range(len(f.codomain.block_dims)):
                C = f.choi_block(p, q)
                diff = C - C.conj().T
                herm = max(herm, float(abs(diff).max()) if diff.nnz else 0.0)
                lo = min(lo, _min_eigenvalue_hermitian(C))
        f._spectrum = (float(lo), herm)
    return f._spectrum


def verify_cp(f: CpMap, tol: float = CP_TOL) -> CpVerdict:
    """Choi test on every (domain block, codomain block) pair."""
    if tol < 0:
        raise ParameterError("tolerance must be non-negative")
    lo, herm = choi_spectrum(f)
    return CpVerdict(lo, bool(lo >= -tol and herm <= tol), herm)


def _require_cp(f: CpMap, what: str, tol: float = CP_TOL):
    v = verify_cp(f, tol)
    if not v.is_cp:
        raise ContractViolation(
            f"{what} requires a completely positive map; {f.name} has min Choi eigenvalue "
            f"{v.min_choi_eigenvalue:.3e} (hermitian defect {v.hermitian_defect:.3e})"
        )


def verify_contractive(f: CpMap, tol: float = CP_TOL) -> bool:
    """For cp maps, ‖f‖_cb = ‖f(1)‖."""
    _require_cp(f, "verify_contractive", max(tol, CP_TOL))
    return norm(f.apply(f.domain.unit())) <= 1.0 + tol


def cauchy_schwarz_defect(f: CpMap, x: AlgElement, y: AlgElement) -> float:
    """‖f(xy)‖² − ‖f(xx*)‖·‖f(y*y)‖, non-positive (up to rounding) for cp maps."""
    _require_cp(f, "cauchy_schwarz_defect")
    lhs = norm(f.apply(x * y)) ** 2
    return lhs - norm(f.apply(x * x.adjoint())) * norm(f.apply(y.adjoint() * y))


# -- constructors -------------------------------------------------------------

def identity_map(A: FiniteDimCstar) -> CpMap:
    return CpMap(A, A, fn=lambda x: x, action_builder=lambda: sp.identity(A.dim, dtype=complex, format="csr"),
                 name="id")


def zero_map(A: FiniteDimCstar, B: FiniteDimCstar) -> CpMap:
    return CpMap(A, B, action=sp.csr_matrix((B.dim, A.dim), dtype=complex), name="0")


def compression(A: FiniteDimCstar, size: int, block: int = 0) -> CpMap:
    """x ↦ upper-left size×size corner of block ``block``, into M_size."""
    B = FiniteDimCstar((size,))
    if size > A.block_dims[block]:
        raise ParameterError("corner larger than the block")
    return CpMap(A, B, fn=lambda x: B.element(x.blocks[block][:size, :size]), name=f"corner{size}")


def transpose_map(A: FiniteDimCstar) -> CpMap:
    return CpMap(A, A, fn=lambda x: AlgElement(A, tuple(b.T for b in x.blocks)), name="transpose")


def scaled(f: CpMap, c: complex) -> CpMap:
    def builder():
        return f.action_matrix(sparse=True) * c
    return CpMap(f.domain, f.codomain, fn=lambda x: f.apply(x) * c, action_builder=builder, name=f"{c}*{f.name}")


def homomorphism(A: FiniteDimCstar, B: FiniteDimCstar, multiplicities, name: str = "hom") -> CpMap:
    """The *-homomorphism ⊕_i M_{d_i} → ⊕_j M_{e_j} with multiplicity matrix ``multiplicities[j][i]``.

    Target block j is diag(x_i repeated multiplicities[j][i] times, in order of i).
    """
    mult = np.asarray(multiplicities, dtype=int)
    if mult.shape != (len(B.block_dims), len(A.block_dims)):
        raise ShapeError("multiplicity matrix has the wrong shape")
    if not np.array_equal(mult @ np.asarray(A.block_dims), np.asarray(B.block_dims)):
        raise ShapeError("multiplicities do not fill the target blocks (map would not be unital)")

    def fn(x):
        out = []
        for j in range(len(B.block_dims)):
            parts = [x.blocks[i] for i in range(len(A.block_dims)) for _ in range(mult[j, i])]
            out.append(_block_diag(parts))
        return AlgElement(B, tuple(out))
    return CpMap(A, B, fn=fn, name=name)


def _block_diag(parts):
    n = sum(p.shape[0] for p in parts)
    out = np.zeros((n, n), dtype=complex)
    o = 0
    for p in parts:
        k = p.shape[0]
        out[o:o + k, o:o + k] = p
        o += k
    return out


# -- combinators ----------------------------------------------------------------

def compose(g: CpMap, f: CpMap) -> CpMap:
    """g ∘ f."""
    if f.codomain != g.domain:
        raise ShapeError(f"cannot compose {g!r} after {f!r}")

    def builder():
        return (g.action_matrix(sparse=True) @ f.action_matrix(sparse=True)).tocsr()
    return CpMap(f.domain, g.codomain, fn=lambda x: g.apply(f.apply(x)), action_builder=builder,
                 name=f"{g.name}∘{f.name}")


def amplify(f: CpMap, r: int) -> CpMap:
    """f^(r) = id_r ⊗ f, acting entrywise on r×r arrays."""
    if r < 1:
        raise ParameterError(f"amplification r must be >= 1, got {r}")
    if r == 1:
        return f
    dom, cod = amplify_algebra(f.domain, r), amplify_algebra(f.codomain, r)

    def fn(X):
        E = entries(X, r, f.domain)
        return from_entries([[f.apply(e) for e in row] for row in E])
    return CpMap(dom, cod, fn=fn, name=f"{f.name}^({r})")
