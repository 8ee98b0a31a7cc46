"""Finite-stage defects of the C*-encoding conditions and related estimates.

Every function here evaluates one displayed inequality at concrete stages
and returns the left-hand side (or, for the one-sided C*-identity condition,
the signed difference lhs − rhs).  Nothing is asserted about limits; the
quantifier "for all m > n > j > M" is replaced by a :class:`StageSchedule`
and callers look at the resulting defect curves.
"""
from __future__ import annotations

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ParameterError, PreconditionError, ShapeError
from .fdcstar import AlgElement, amplify_algebra, norm
from .folner_system import ApproximationSystem, CpcSystem
from .groupalg import (DEFAULT_GRID_FACTOR, GroupAlgebraElement, distance,
                       involute, reduced_norm)

THREADS_ENV = "CPCAUDIT_THREADS"


def _stages(sysc: CpcSystem, *stages):
    for s in stages:
        if not 0 <= s <= sysc.top:
            raise ParameterError(f"stage {s} outside 0..{sysc.top}")


def _check_jnm(sysc, k, j, n, m):
    _stages(sysc, k, j, n, m)
    if not (k <= j < n < m):
        raise ParameterError(f"need k <= j < n < m, got k={k}, j={j}, n={n}, m={m}")


def _check_nm(sysc, k, n, m):
    _stages(sysc, k, n, m)
    if not (k <= n < m):
        raise ParameterError(f"need k <= n < m, got k={k}, n={n}, m={m}")


def _at(sysc: CpcSystem, x: AlgElement, k: int):
    if x.algebra != sysc.algebras[k]:
        raise ShapeError(f"element of {x.algebra.describe()} is not in stage {k}")


def defect_stinespring(sysc: CpcSystem, k, x, y, j, n, m) -> float:
    """‖ρ_{m,n}(ρ_{n,k}(x)ρ_{n,k}(y)) − ρ_{m,j}(ρ_{j,k}(x)ρ_{j,k}(y))‖."""
    _check_jnm(sysc, k, j, n, m)
    _at(sysc, x, k)
    _at(sysc, y, k)
    R = sysc.rho
    late = R(m, n).apply(R(n, k).apply(x) * R(n, k).apply(y))
    early = R(m, j).apply(R(j, k).apply(x) * R(j, k).apply(y))
    return norm(late - early)


def defect_associativity(sysc: CpcSystem, k, x, y, z, j, n, m) -> float:
    """‖ρ_{m,n}(ρ_{n,j}(x_j y_j) z_n) − ρ_{m,n}(x_n ρ_{n,j}(y_j z_j))‖ with w_i = ρ_{i,k}(w)."""
    _check_jnm(sysc, k, j, n, m)
    for w in (x, y, z):
        _at(sysc, w, k)
    R = sysc.rho
    xj, yj, zj = (R(j, k).apply(w) for w in (x, y, z))
    xn, zn = R(n, k).apply(x), R(n, k).apply(z)
    left = R(m, n).apply(R(n, j).apply(xj * yj) * zn)
    right = R(m, n).apply(xn * R(n, j).apply(yj * zj))
    return norm(left - right)


def _amplified(sysc: CpcSystem, x: AlgElement, k: int, r: int):
    if r < 1:
        raise ParameterError(f"amplification r must be >= 1, got {r}")
    if x.algebra != amplify_algebra(sysc.algebras[k], r):
        raise ShapeError(f"element of {x.algebra.describe()} is not in M_{r}(stage {k})")


def defect_cstar_identity(sysc: CpcSystem, k, x, r, n, m) -> float:
    """Signed ‖ρ^(r)_{m,n}(u*u)‖ − ‖ρ^(r)_{m,k}(x)‖², u = ρ^(r)_{n,k}(x); x ∈ M_r(A_k)."""
    _check_nm(sysc, k, n, m)
    _amplified(sysc, x, k, r)
    u = sysc.rho_r(n, k, r).apply(x)
    lhs = norm(sysc.rho_r(m, n, r).apply(u.adjoint() * u))
    return lhs - norm(sysc.rho_r(m, k, r).apply(x)) ** 2


def norm_limit_check(sysc: CpcSystem, k, x, r, n, m) -> float:
    """Two-sided version of :func:`defect_cstar_identity`."""
    return abs(defect_cstar_identity(sysc, k, x, r, n, m))


def defect_multiplicative(sysc: CpcSystem, k, x, y, n, m) -> float:
    """‖ρ_{m,n}(ρ_{n,k}(x)ρ_{n,k}(y)) − ρ_{m,k}(x)ρ_{m,k}(y)‖."""
    _check_nm(sysc, k, n, m)
    _at(sysc, x, k)
    _at(sysc, y, k)
    R = sysc.rho
    lhs = R(m, n).apply(R(n, k).apply(x) * R(n, k).apply(y))
    return norm(lhs - R(m, k).apply(x) * R(m, k).apply(y))


def psi_mult_defect(sys: ApproximationSystem, n, a: GroupAlgebraElement, b: GroupAlgebraElement,
                    grid_factor: int = DEFAULT_GRID_FACTOR) -> float:
    """‖ψ_n(ab) − ψ_n(a)ψ_n(b)‖ in M_{F_n}."""
    return norm(sys.psi(n, a * b) - sys.psi(n, a) * sys.psi(n, b))


@dataclass
class BulletProduct:
    representative: AlgElement
    n: int
    m: int
    diagnostics: list


def bullet_product(sysc: CpcSystem, k, x, y, schedule) -> BulletProduct:
    """Stage-m representative ρ_{m,n}(ρ_{n,k}(x)ρ_{n,k}(y)) of the limit product, largest (n, m) in ``schedule``.

    The diagnostics are the Stinespring-type defects over the whole schedule.
    """
    triples = list(schedule.triples if isinstance(schedule, StageSchedule) else schedule)
    if not triples:
        raise ParameterError("schedule is empty")
    _, n, m = max(triples, key=lambda t: (t[2], t[1]))
    R = sysc.rho
    rep = R(m, n).apply(R(n, k).apply(x) * R(n, k).apply(y))
    diag = [{"j": j, "n": nn, "m": mm, "value": defect_stinespring(sysc, k, x, y, j, nn, mm)}
            for j, nn, mm in triples]
    return BulletProduct(rep, n, m, diag)


def product_vs_oracle(sys: ApproximationSystem, k, x, y, n, m, grid_factor: int = DEFAULT_GRID_FACTOR) -> float:
    """‖ρ_{m,n}(ρ_{n,k}(x)ρ_{n,k}(y)) − ψ_m(a_x a_y)‖ with a_w taken at stage n."""
    sysc = sys.cpc
    _check_nm(sysc, k, n, m)
    ax = sys.a_limit(k, x, n, grid_factor).value
    ay = sys.a_limit(k, y, n, grid_factor).value
    R = sysc.rho
    rep = R(m, n).apply(R(n, k).apply(x) * R(n, k).apply(y))
    return norm(rep - sys.psi(m, ax * ay))


@dataclass
class LemmaCheck:
    eta: float
    lhs: float
    passed: bool

    def __getitem__(self, key):
        return {"eta": self.eta, "lhs": self.lhs, "pass": self.passed}[key]


def stinespring_lemma_check(sys: ApproximationSystem, n, a: GroupAlgebraElement, b: AlgElement,
                            grid_factor: int = DEFAULT_GRID_FACTOR) -> LemmaCheck:
    """Check ‖φ(ψ(a)b) − φ(ψ(a))φ(b)‖ < η‖b‖ at stage n for self-adjoint a.

    η is the smallest value compatible with ‖φψ(a^i) − a^i‖ < η²/3 (i = 1, 2)
    as certified by the reduced-norm upper bounds.  Equality counts as a pass
    so that exact cases (η = lhs = 0) are not rejected.
    """
    if reduced_norm(a - involute(a), grid_factor).upper > 1e-12:
        raise PreconditionError("stinespring_lemma_check needs a self-adjoint a")
    psi, phi = sys.psi, sys.phi
    worst = 0.0
    for p in (a, a * a):
        worst = max(worst, distance(phi(n, psi(n, p)), p, grid_factor).upper)
    eta = float(np.sqrt(3.0 * worst))
    pa = psi(n, a)
    lhs = distance(phi(n, pa * b), phi(n, pa) * phi(n, b), grid_factor).upper
    return LemmaCheck(eta, lhs, lhs <= eta * norm(b))


# -- schedules and reports --------------------------------------------------------

@dataclass(frozen=True)
class StageSchedule:
    """Stage triples (j, n, m) with j < n < m."""

    triples: tuple

    def __post_init__(self):
        t = tuple(tuple(int(v) for v in tr) for tr in self.triples)
        for tr in t:
            if len(tr) != 3 or not (tr[0] < tr[1] < tr[2]):
                raise ParameterError(f"schedule entries must be strictly increasing triples, got {tr}")
        object.__setattr__(self, "triples", t)

    @classmethod
    def doubling(cls, js: Sequence[int]) -> "StageSchedule":
        return cls(tuple((j, 2 * j, 4 * j) for j in js))

    @classmethod
    def all_triples(cls, lo: int, hi: int) -> "StageSchedule":
        return cls(tuple((j, n, m) for j in range(lo, hi + 1) for n in range(j + 1, hi + 1)
                         for m in range(n + 1, hi + 1)))

    @property
    def pairs(self) -> tuple:
        """(n, m) for conditions that need only two stages."""
        return tuple((n, m) for _, n, m in self.triples)

    def validate(self, sysc: CpcSystem, k: int):
        for j, n, m in self.triples:
            _check_jnm(sysc, k, j, n, m)

    def to_list(self) -> list:
        return [list(t) for t in self.triples]


@dataclass
class DefectReport:
    condition: str
    system: str
    k: int | None
    r: int | None
    elements: list
    schedule: list
    defects: list
    signed: bool
    tolerance: float | None
    verdict: str
    seed: int
    wall_ms: float = 0.0

    def to_dict(self) -> dict:
        return {
            "condition": self.condition, "system": self.system, "k": self.k, "r": self.r,
            "elements": list(self.elements), "schedule": self.schedule,
            "defects": [dict(d) for d in self.defects], "signed": self.signed,
            "tolerance": self.tolerance, "verdict": self.verdict, "seed": self.seed,
            "wall_ms": self.wall_ms,
        }

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    @property
    def values(self) -> list:
        return [d["value"] for d in self.defects]


def reports_to_json(reports: Sequence[DefectReport], indent: int = 2) -> str:
    return json.dumps([r.to_dict() for r in reports], indent=indent)


CSV_FIELDS = ["condition", "system", "k", "r", "elements", "j", "n", "m", "value", "signed",
              "tolerance", "verdict", "seed", "wall_ms"]


def reports_to_rows(reports: Sequence[DefectReport]) -> list:
    rows = []
    for rep in reports:
        for d in rep.defects:
            rows.append({"condition": rep.condition, "system": rep.system, "k": rep.k, "r": rep.r,
                         "elements": ";".join(rep.elements), "j": d.get("j"), "n": d.get("n"),
                         "m": d.get("m"), "value": repr(d["value"]), "signed": rep.signed,
                         "tolerance": rep.tolerance, "verdict": rep.verdict, "seed": rep.seed,
                         "wall_ms": rep.wall_ms})
    return rows


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def evaluate_tuples(fn, tuples, threads: int | None = None) -> list:
    """Evaluate ``fn`` on each tuple, optionally in a thread pool; results keep tuple order."""
    threads = thread_count() if threads is None else threads
    if threads <= 1 or len(tuples) <= 1:
        return [fn(t) for t in tuples]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, tuples))


def verdict_for(condition: str, values: Sequence[float], tolerance: float | None) -> str:
    if tolerance is None:
        return "pass"
    if all(v < tolerance for v in values):
        return "pass"
    if condition == "multiplicative":
        return f"not asymptotically multiplicative at tested scales (floor={min(values):.6g})"
    return f"fail (max={max(values):.6g} >= tol={tolerance:.3g})"


def timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, round((time.perf_counter() - t0) * 1000.0, 3)


__all__ = [
    "defect_stinespring", "defect_associativity", "defect_cstar_identity", "norm_limit_check",
    "defect_multiplicative", "psi_mult_defect", "bullet_product", "product_vs_oracle",
    "stinespring_lemma_check", "StageSchedule", "DefectReport", "BulletProduct", "LemmaCheck",
]
