"""Acceptance gate: one PASS/FAIL line per criterion.

Run standalone with ``python3 tests/test_acceptance.py`` or through pytest,
where the lines are collected into a terminal summary section.
"""
import json
import pathlib
import sys
import time

import numpy as np
import pytest

from cpcaudit import audit
from cpcaudit.config import af_toy, z5_full, z_folner
from cpcaudit.cpmaps import cauchy_schwarz_defect, verify_contractive, verify_cp
from cpcaudit.fdcstar import FiniteDimCstar, amplify_elem, norm
from cpcaudit.folner_system import ApproximationSystem
from cpcaudit.groupalg import GroupAlgebraElement, delta, distance, involute, reduced_norm
from cpcaudit.groups import (FolnerSequence, IntegerLattice, box_folner, extract_summable,
                             folner_defect, pow2_eps, summability_lhs)

FIXTURES = pathlib.Path(__file__).with_name("fixtures")
JS = [2, 4, 8, 16, 32]
TOP = 128
SLACK = 0.05
Z = IntegerLattice(1)

RESULTS = {}


def pilot():
    return json.loads((FIXTURES / "pilot.json").read_text())


def record(num, ok, detail, seconds, budget):
    within = seconds < budget
    ok = bool(ok and within)
    RESULTS[num] = f"criterion {num}: {'PASS' if ok else 'FAIL'} ({detail}; {seconds:.2f}s of {budget:g}s)"
    return ok


def non_increasing(vals, slack=SLACK):
    return all(b <= a * (1 + slack) + 1e-15 for a, b in zip(vals, vals[1:]))


_Z128 = {}


def z128():
    if "sys" not in _Z128:
        _Z128["sys"] = z_folner(TOP, verify=True)
    return _Z128["sys"]


# -- criteria ------------------------------------------------------------------------

def criterion_1():
    t = time.perf_counter()
    sys = ApproximationSystem(Z, [box_folner(1, n) for n in range(21)])
    vals = [audit.psi_mult_defect(sys, n, delta(Z, -1), delta(Z, 1)) for n in range(1, 21)]
    err = max(abs(v - 1) for v in vals)
    return record(1, err <= 1e-9, f"max |defect - 1| = {err:.2e}, tol 1e-9", time.perf_counter() - t, 5)


def criterion_2():
    t = time.perf_counter()
    sys = ApproximationSystem(Z, [box_folner(1, n) for n in range(51)])
    err = 0.0
    for n in range(1, 51):
        err = max(err, abs(folner_defect(box_folner(1, n), 1) - 2 / (2 * n + 1)))
        err = max(err, abs(sys.phi_psi_scalar(n, 1) - 2 * n / (2 * n + 1)))
    return record(2, err <= 1e-12, f"max closed-form error {err:.2e}, tol 1e-12", time.perf_counter() - t, 1)


def criterion_3():
    t = time.perf_counter()
    worst_eig, worst_unit, contractive = np.inf, 0.0, True
    for built in (af_toy(), z5_full(32, verify=False), z_folner(32, verify=False)):
        s = built.cpc
        for f in s.steps:
            v = verify_cp(f, 1e-10)
            worst_eig = min(worst_eig, v.min_choi_eigenvalue)
            contractive &= v.is_cp and verify_contractive(f, 1e-10)
            f.release_caches()
        for n in range(s.top + 1):
            u = s.algebras[n].unit()
            for m in range(n, min(s.top, 32) + 1):
                worst_unit = max(worst_unit, u.max_abs_diff(s.algebras[m].unit()))
                if m < s.top:
                    u = s.steps[m](u)
    ok = worst_eig >= -1e-10 and contractive and worst_unit <= 1e-12
    return record(3, ok, f"min Choi eigenvalue {worst_eig:.2e}, contractive {contractive}, "
                         f"max |rho(1) - 1| {worst_unit:.2e}", time.perf_counter() - t, 30)


def _exact_defects(s, k, elements, triples):
    x, y, z = elements
    worst = 0.0
    for j, n, m in triples:
        worst = max(worst, audit.defect_stinespring(s, k, x, y, j, n, m),
                    audit.defect_associativity(s, k, x, y, z, j, n, m),
                    audit.defect_multiplicative(s, k, x, y, n, m),
                    audit.defect_cstar_identity(s, k, x, 1, n, m),
                    audit.defect_cstar_identity(s, k, amplify_elem(x, 2, [[1, 1], [0, 1]]), 2, n, m))
    return worst


def criterion_4():
    t = time.perf_counter()
    rng = np.random.default_rng(4)
    af = af_toy()
    z5 = z5_full(8)
    M = z5.cpc.steps[0].action
    idem = float(np.abs(M @ M - M).max())
    worst = 0.0
    triples = lambda lo, hi: [(j, n, m) for j in range(lo, hi + 1) for n in range(j + 1, hi + 1)
                              for m in range(n + 1, hi + 1)]
    for k in (0, 1):
        els = [af.cpc.algebras[k].random(rng) for _ in range(3)]
        worst = max(worst, _exact_defects(af.cpc, k, els, triples(max(k, 1), af.cpc.top)))
    C5 = z5.approx.group
    for els in ([z5.cpc.algebras[0].random(rng) for _ in range(3)],
                [z5.approx.psi(0, delta(C5, s)) for s in (1, 2, 3)]):
        worst = max(worst, _exact_defects(z5.cpc, 0, els, triples(1, 8)))
    ok = idem <= 1e-10 and worst <= 1e-9
    return record(4, ok, f"|rho^2 - rho| {idem:.2e}, max defect {worst:.2e}, tol 1e-9",
                  time.perf_counter() - t, 30)


def _z_curves(built, k):
    s, sys = built.cpc, built.approx
    x = sys.psi(k, delta(Z, 1))
    diag, swap = amplify_elem(x, 2), amplify_elem(x, 2, [[0, 1], [1, 0]])
    return {
        "stinespring": [audit.defect_stinespring(s, k, x, x, j, 2 * j, 4 * j) for j in JS],
        "associativity": [audit.defect_associativity(s, k, x, x, x, j, 2 * j, 4 * j) for j in JS],
        "cstar_r1": [audit.defect_cstar_identity(s, k, x, 1, 2 * j, 4 * j) for j in JS],
        "cstar_r2_diag": [audit.defect_cstar_identity(s, k, diag, 2, 2 * j, 4 * j) for j in JS],
        "cstar_r2_swap": [audit.defect_cstar_identity(s, k, swap, 2, 2 * j, 4 * j) for j in JS],
        "norm_limit_r1": [audit.norm_limit_check(s, k, x, 1, 2 * j, 4 * j) for j in JS],
        "norm_limit_r2": [audit.norm_limit_check(s, k, diag, 2, 2 * j, 4 * j) for j in JS],
    }


def criterion_5():
    t = time.perf_counter()
    built = z128()
    fix = pilot()["curves"]
    bad = []
    for k in (0, 1):
        for name, vals in _z_curves(built, k).items():
            if not non_increasing(vals):
                bad.append(f"k={k} {name} not non-increasing")
            if vals[-1] >= fix[str(k)][name][-1] + 1e-9:
                bad.append(f"k={k} {name} final {vals[-1]:.3e} above fixture")
    stn = fix["1"]["stinespring"]
    detail = "; ".join(bad) if bad else f"all curves non-increasing (k=1 stinespring {stn[0]:.2e} -> {stn[-1]:.2e})"
    return record(5, not bad, detail, time.perf_counter() - t, 600)


def criterion_6():
    t = time.perf_counter()
    built = z128()
    s, sys = built.cpc, built.approx
    parts, ok = [], True
    for k in (0, 1):
        x = sys.psi(k, delta(Z, 1))
        idx = [i for i, j in enumerate(JS) if j >= 8]
        st = [audit.defect_stinespring(s, k, x, x, JS[i], 2 * JS[i], 4 * JS[i]) for i in idx]
        mu = [audit.defect_multiplicative(s, k, x, x, 2 * JS[i], 4 * JS[i]) for i in idx]
        good = min(mu) >= 10 * max(st)
        ok &= good
        parts.append(f"k={k}: min mult {min(mu):.3e} vs 10*max stinespring {10 * max(st):.3e}")
    return record(6, ok, "; ".join(parts), time.perf_counter() - t, 600)


def criterion_7():
    t = time.perf_counter()
    z5 = z5_full(8)
    C5 = z5.approx.group
    worst5 = 0.0
    rng = np.random.default_rng(7)
    pairs = [(n, m) for n in range(0, 8) for m in range(n + 1, 9)]
    # ψ-images agree from stage 0; generic elements once they have passed one step
    cases = [(z5.approx.psi(0, delta(C5, 3)), z5.approx.psi(0, delta(C5, 4)), 0),
             (z5.cpc.algebras[0].random(rng), z5.cpc.algebras[0].random(rng), 1)]
    for x, y, lo in cases:
        for n, m in pairs:
            if n >= lo:
                worst5 = max(worst5, audit.product_vs_oracle(z5.approx, 0, x, y, n, m))
    built = z128()
    x2 = built.approx.psi(2, delta(Z, 1))
    curve = [audit.product_vs_oracle(built.approx, 2, x2, x2, 2 * j, 4 * j) for j in JS]
    decreasing = all(b < a for a, b in zip(curve, curve[1:]))
    bp = audit.bullet_product(built.cpc, 2, x2, x2, audit.StageSchedule.doubling(JS))
    push = built.approx.phi(bp.m, bp.representative)
    coef = pilot()["bullet_k2"]["pushforward"]["2"]
    target = complex(*coef) * delta(Z, 2)
    gap = distance(push, target).upper
    ok = worst5 <= 1e-10 and decreasing and gap <= 1e-9
    return record(7, ok, f"Z/5 max {worst5:.2e}; Z curve {curve[0]:.3e} -> {curve[-1]:.3e} "
                         f"(decreasing {decreasing}); pushforward vs {coef[0]:.6g}*delta_2: {gap:.2e}",
                  time.perf_counter() - t, 600)


def criterion_8():
    t = time.perf_counter()
    rng = np.random.default_rng(8)
    sys = ApproximationSystem(Z, [box_folner(1, n) for n in range(9)])
    cpc = sys.build_cpc()
    cs = -np.inf
    for _ in range(200):
        n = int(rng.integers(0, 8))
        x, y = sys.algebras[n].random(rng), sys.algebras[n].random(rng)
        cs = max(cs, cauchy_schwarz_defect(cpc.steps[n], x, y))
    fd_bad = 0
    algebras = [FiniteDimCstar((3,)), FiniteDimCstar((2, 2)), FiniteDimCstar((4, 1))]
    for i in range(500):
        A = algebras[i % 3]
        x, y = A.random(rng, normalize=False), A.random(rng, normalize=False)
        nx = norm(x)
        fd_bad += abs(norm(x.adjoint() * x) - nx ** 2) > 1e-9 * (1 + nx ** 2)
        fd_bad += norm(x * y) > nx * norm(y) + 1e-9
    ga_bad = 0
    for _ in range(500):
        a, b = (GroupAlgebraElement(Z, {int(g): complex(*rng.standard_normal(2))
                                        for g in rng.integers(-5, 6, 5)}) for _ in range(2))
        na, nb = reduced_norm(a), reduced_norm(b)
        sq = reduced_norm(involute(a) * a)
        ga_bad += not (sq.lower - 1e-6 <= na.upper ** 2 and na.lower ** 2 <= sq.upper + 1e-6)
        ga_bad += reduced_norm(a * b).upper > na.upper * nb.upper * (1 + 1e-9)
    seq = FolnerSequence.boxes(1, 400)
    cert = extract_summable(seq, pow2_eps(3))
    cert_ok = all(summability_lhs(seq[cert.indices[a]], seq[cert.indices[b]]) < cert.eps[b]
                  for b in range(1, len(cert.indices)) for a in range(b))
    csys = ApproximationSystem(Z, [seq[i] for i in cert.indices], cert)
    cert_ok &= csys.check_summable(range(len(cert.indices)), cert.eps)["pass"]
    ok = cs <= 1e-9 and fd_bad == 0 and ga_bad == 0 and cert_ok
    return record(8, ok, f"max Cauchy-Schwarz defect {cs:.2e}; fdcstar violations {fd_bad}; "
                         f"group algebra violations {ga_bad}; certificate {list(cert.indices)} ok {cert_ok}",
                  time.perf_counter() - t, 120)


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7,
            criterion_8]


@pytest.mark.parametrize("num", range(1, 9))
def test_criterion(num):
    ok = CRITERIA[num - 1]()
    assert ok, RESULTS[num]


def main():
    failed = 0
    for num, fn in enumerate(CRITERIA, 1):
        fn()
        print(RESULTS[num], flush=True)
        failed += "FAIL" in RESULTS[num]
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
