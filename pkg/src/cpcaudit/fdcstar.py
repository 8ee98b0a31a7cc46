"""Finite-dimensional C*-algebras M_{d_1} ⊕ ... ⊕ M_{d_k} and their elements.

Elements are stored densely, one complex square matrix per block.  The
vectorization used by linear maps is the concatenation over blocks of the
row-major ravel of each block, so the basis vector at offset
``offset[b] + i*d_b + j`` is the matrix unit e_ij of block b.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from numbers import Number
from typing import Sequence

import numpy as np

from .errors import ParameterError, ShapeError

POSITIVITY_TOL = 1e-10


@dataclass(frozen=True)
class FiniteDimCstar:
    block_dims: tuple

    def __post_init__(self):
        dims = tuple(int(d) for d in self.block_dims)
        if not dims or any(d < 1 for d in dims):
            raise ParameterError(f"block dimensions must be a nonempty list of positive integers, got {self.block_dims}")
        object.__setattr__(self, "block_dims", dims)

    @property
    def dim(self) -> int:
        """Vector-space dimension, sum of d_i^2."""
        return sum(d * d for d in self.block_dims)

    @cached_property
    def offsets(self) -> tuple:
        out, acc = [], 0
        for d in self.block_dims:
            out.append(acc)
            acc += d * d
        return tuple(out)

    def zero(self) -> "AlgElement":
        return AlgElement(self, tuple(np.zeros((d, d), dtype=complex) for d in self.block_dims))

    def unit(self) -> "AlgElement":
        return AlgElement(self, tuple(np.eye(d, dtype=complex) for d in self.block_dims))

    def matrix_unit(self, i: int, j: int, block: int = 0) -> "AlgElement":
        blocks = [np.zeros((d, d), dtype=complex) for d in self.block_dims]
        blocks[block][i, j] = 1.0
        return AlgElement(self, tuple(blocks))

    def element(self, *blocks) -> "AlgElement":
        return AlgElement(self, tuple(np.array(b, dtype=complex) for b in blocks))

    def from_vec(self, v: np.ndarray) -> "AlgElement":
        v = np.asarray(v, dtype=complex).ravel()
        if v.shape[0] != self.dim:
            raise ShapeError(f"vector of length {v.shape[0]} does not match algebra dimension {self.dim}")
        return AlgElement(self, tuple(
            v[o:o + d * d].reshape(d, d).copy() for o, d in zip(self.offsets, self.block_dims)
        ))

    def basis_index(self, block: int, i: int, j: int) -> int:
        return self.offsets[block] + i * self.block_dims[block] + j

    def random(self, rng: np.random.Generator, normalize: bool = True) -> "AlgElement":
        """Gaussian element with independent complex entries, scaled to norm 1 by default."""
        blocks = tuple(
            rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d)) for d in self.block_dims
        )
        x = AlgElement(self, blocks)
        return x * (1.0 / x.norm()) if normalize else x

    def describe(self) -> str:
        return " ⊕ ".join(f"M_{d}" for d in self.block_dims)


@dataclass(frozen=True, eq=False)
class AlgElement:
    algebra: FiniteDimCstar
    blocks: tuple

    def __post_init__(self):
        blocks = tuple(np.asarray(b, dtype=complex) for b in self.blocks)
        if len(blocks) != len(self.algebra.block_dims):
            raise ShapeError(f"expected {len(self.algebra.block_dims)} blocks, got {len(blocks)}")
        for b, d in zip(blocks, self.algebra.block_dims):
            if b.shape != (d, d):
                raise ShapeError(f"block of shape {b.shape} where {(d, d)} was expected")
        object.__setattr__(self, "blocks", blocks)

    def _check(self, other):
        if not isinstance(other, AlgElement):
            return NotImplemented
        if other.algebra != self.algebra:
            raise ShapeError(f"algebra mismatch: {self.algebra.describe()} vs {other.algebra.describe()}")
        return other

    def __add__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return AlgElement(self.algebra, tuple(a + b for a, b in zip(self.blocks, other.blocks)))

    def __sub__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return AlgElement(self.algebra, tuple(a - b for a, b in zip(self.blocks, other.blocks)))

    def __neg__(self):
        return AlgElement(self.algebra, tuple(-a for a in self.blocks))

    def __mul__(self, other):
        if isinstance(other, Number):
            return AlgElement(self.algebra, tuple(other * a for a in self.blocks))
        if self._check(other) is NotImplemented:
            return NotImplemented
        return AlgElement(self.algebra, tuple(a @ b for a, b in zip(self.blocks, other.blocks)))

    def __rmul__(self, other):
        if isinstance(other, Number):
            return self * other
        return NotImplemented

    __matmul__ = __mul__

    def adjoint(self) -> "AlgElement":
        return AlgElement(self.algebra, tuple(a.conj().T for a in self.blocks))

    @property
    def H(self) -> "AlgElement":
        return self.adjoint()

    def vec(self) -> np.ndarray:
        return np.concatenate([b.ravel() for b in self.blocks])

    def norm(self) -> float:
        return norm(self)

    def allclose(self, other: "AlgElement", atol: float = 1e-12) -> bool:
        self._check(other)
        return all(np.allclose(a, b, rtol=0.0, atol=atol) for a, b in zip(self.blocks, other.blocks))

    def max_abs_diff(self, other: "AlgElement") -> float:
        self._check(other)
        return max(float(np.max(np.abs(a - b))) for a, b in zip(self.blocks, other.blocks))

    def to_json(self) -> dict:
        return {
            "block_dims": list(self.algebra.block_dims),
            "blocks": [{"re": b.real.tolist(), "im": b.imag.tolist()} for b in self.blocks],
        }

    @classmethod
    def from_json(cls, data: dict) -> "AlgElement":
        A = FiniteDimCstar(tuple(data["block_dims"]))
        return cls(A, tuple(np.array(b["re"], dtype=float) + 1j * np.array(b["im"], dtype=float) for b in data["blocks"]))


def multiply(x: AlgElement, y: AlgElement) -> AlgElement:
    return x * y


def adjoint(x: AlgElement) -> AlgElement:
    return x.adjoint()


def _block_norm(b: np.ndarray) -> float:
    if b.size == 0:
        return 0.0
    if b.shape[0] == 1:
        return float(abs(b[0, 0]))
    return float(np.linalg.norm(b, 2))


def norm(x: AlgElement) -> float:
    """C*-norm: the largest singular value over all blocks."""
    return max(_block_norm(b) for b in x.blocks)


def is_positive(x: AlgElement, tol: float = POSITIVITY_TOL) -> bool:
    if tol < 0:
        raise ParameterError("tolerance must be non-negative")
    if norm(x - x.adjoint()) > tol:
        return False
    for b in x.blocks:
        h = (b + b.conj().T) / 2
        if np.linalg.eigvalsh(h).min() < -tol:
            return False
    return True


def amplify_algebra(A: FiniteDimCstar, r: int) -> FiniteDimCstar:
    """M_r(A), again a direct sum of full matrix blocks of sizes r*d_i."""
    if r < 1:
        raise ParameterError(f"amplification r must be >= 1, got {r}")
    return FiniteDimCstar(tuple(r * d for d in A.block_dims))


def amplify_elem(x: AlgElement, r: int, pattern=None) -> AlgElement:
    """The element ``pattern ⊗ x`` of M_r(A); the default pattern is the identity (diag(x, ..., x))."""
    if r < 1:
        raise ParameterError(f"amplification r must be >= 1, got {r}")
    p = np.eye(r, dtype=complex) if pattern is None else np.asarray(pattern, dtype=complex)
    if p.shape != (r, r):
        raise ShapeError(f"pattern must be {r}x{r}")
    return AlgElement(amplify_algebra(x.algebra, r), tuple(np.kron(p, b) for b in x.blocks))


def from_entries(entries: Sequence[Sequence[AlgElement]]) -> AlgElement:
    """Assemble an element of M_r(A) from an r×r array of elements of A."""
    r = len(entries)
    if r < 1 or any(len(row) != r for row in entries):
        raise ShapeError("entries must form a nonempty square array")
    A = entries[0][0].algebra
    for row in entries:
        for e in row:
            if e.algebra != A:
                raise ShapeError("entries live in different algebras")
    blocks = tuple(np.block([[entries[a][c].blocks[b] for c in range(r)] for a in range(r)])
                   for b in range(len(A.block_dims)))
    return AlgElement(amplify_algebra(A, r), blocks)


def entries(X: AlgElement, r: int, base: FiniteDimCstar) -> list:
    """Inverse of :func:`from_entries`: split an element of M_r(base) into an r×r array."""
    if X.algebra != amplify_algebra(base, r):
        raise ShapeError(f"{X.algebra.describe()} is not M_{r}({base.describe()})")
    out = []
    for a in range(r):
        row = []
        for c in range(r):
            row.append(AlgElement(base, tuple(
                blk[a * d:(a + 1) * d, c * d:(c + 1) * d] for blk, d in zip(X.blocks, base.block_dims)
            )))
        out.append(row)
    return out
