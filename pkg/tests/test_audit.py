import json

import numpy as np
import pytest

from cpcaudit import audit
from cpcaudit.audit import (DefectReport, StageSchedule, bullet_product, defect_associativity,
                            defect_cstar_identity, defect_multiplicative, defect_stinespring,
                            evaluate_tuples, norm_limit_check, product_vs_oracle, psi_mult_defect,
                            stinespring_lemma_check)
from cpcaudit.errors import ParameterError, PreconditionError, ShapeError
from cpcaudit.fdcstar import amplify_elem, norm
from cpcaudit.groupalg import GroupAlgebraElement, delta

JS4 = [2, 4, 8, 16]


def psi1(built, k):
    return built.approx.psi(k, delta(built.approx.group, 1))


def rand(built, k, seed):
    return built.cpc.algebras[k].random(np.random.default_rng(seed))


def exact_tuples(top):
    return [(j, n, m) for j in range(1, top) for n in range(j + 1, top) for m in range(n + 1, top + 1)]


def test_af_all_defects_zero(af):
    s = af.cpc
    x, y, z = (rand(af, 1, i) for i in range(3))
    for j, n, m in exact_tuples(s.top):
        assert defect_stinespring(s, 1, x, y, j, n, m) <= 1e-12
        assert defect_associativity(s, 1, x, y, z, j, n, m) <= 1e-12
        assert defect_multiplicative(s, 1, x, y, n, m) <= 1e-12
        for r in (1, 2, 3):
            X = amplify_elem(x, r, np.triu(np.ones((r, r))))
            assert defect_cstar_identity(s, 1, X, r, n, m) <= 1e-10
            assert norm_limit_check(s, 1, X, r, n, m) <= 1e-10


def test_z5_all_defects_zero(z5):
    # stages j > k: ρ is then a conditional expectation onto the translation algebra
    s = z5.cpc
    rng = np.random.default_rng(1)
    for _ in range(5):
        x, y, z = (s.algebras[0].random(rng) for _ in range(3))
        for j, n, m in exact_tuples(6):
            assert defect_stinespring(s, 0, x, y, j, n, m) <= 1e-10
            assert defect_associativity(s, 0, x, y, z, j, n, m) <= 1e-10
            assert defect_multiplicative(s, 0, x, y, n, m) <= 1e-10
            assert abs(defect_cstar_identity(s, 0, x, 1, n, m)) <= 1e-10
            assert norm_limit_check(s, 0, amplify_elem(x, 2), 2, n, m) <= 1e-10


def test_unit_elements_give_zero(z32):
    s = z32.cpc
    u = s.algebras[2].unit()
    x = psi1(z32, 2)
    for j, n, m in [(2, 4, 8), (4, 8, 16)]:
        assert defect_associativity(s, 2, u, u, u, j, n, m) <= 1e-12
        assert defect_multiplicative(s, 2, u, x, n, m) <= 1e-10
        assert defect_multiplicative(s, 2, x, u, n, m) <= 1e-10
        assert abs(defect_cstar_identity(s, 2, u, 1, n, m)) <= 1e-10
        assert norm_limit_check(s, 2, u, 1, n, m) <= 1e-10


def test_z_curves_match_pilot(pilot, z64):
    s = z64.cpc
    c = pilot["curves"]["1"]
    x = psi1(z64, 1)
    st = [defect_stinespring(s, 1, x, x, j, 2 * j, 4 * j) for j in JS4]
    assert np.allclose(st, c["stinespring"][:4], rtol=1e-9, atol=1e-15)
    assert all(b < a for a, b in zip(st, st[1:]))
    assoc = [defect_associativity(s, 1, x, x, x, j, 2 * j, 4 * j) for j in JS4]
    assert np.allclose(assoc, c["associativity"][:4], atol=1e-12)
    assert all(b <= a + 1e-15 for a, b in zip(assoc, assoc[1:]))
    nl = [norm_limit_check(s, 1, x, 1, 2 * j, 4 * j) for j in JS4]
    assert np.allclose(nl, c["norm_limit_r1"][:4], rtol=1e-9)
    assert all(b < a for a, b in zip(nl, nl[1:]))
    mult = [defect_multiplicative(s, 1, x, x, 2 * j, 4 * j) for j in JS4]
    assert np.allclose(mult, c["multiplicative"][:4], rtol=1e-9)


def test_cstar_r2_patterns_below_r1(pilot, z64):
    s = z64.cpc
    x = psi1(z64, 1)
    r1 = pilot["curves"]["1"]["cstar_r1"]
    for X in (amplify_elem(x, 2), amplify_elem(x, 2, [[0, 1], [1, 0]])):
        vals = [defect_cstar_identity(s, 1, X, 2, 2 * j, 4 * j) for j in JS4]
        assert all(v <= e + 1e-12 for v, e in zip(vals, r1))


def test_stage_errors(z32):
    s = z32.cpc
    x = psi1(z32, 1)
    with pytest.raises(ParameterError):
        defect_stinespring(s, 1, x, x, 4, 4, 8)
    with pytest.raises(ParameterError):
        defect_stinespring(s, 1, x, x, 2, 4, 40)
    with pytest.raises(ParameterError):
        defect_stinespring(s, 3, x, x, 2, 4, 8)
    with pytest.raises(ShapeError):
        defect_multiplicative(s, 2, x, x, 4, 8)
    with pytest.raises(ParameterError):
        defect_cstar_identity(s, 1, x, 0, 2, 4)
    with pytest.raises(ShapeError):
        defect_cstar_identity(s, 1, x, 2, 2, 4)


def test_psi_mult_defect(z64, z5):
    sys = z64.approx
    Z = sys.group
    assert psi_mult_defect(sys, 5, delta(Z, 0), delta(Z, 0)) == 0.0
    for n in range(1, 65):
        v = psi_mult_defect(sys, n, delta(Z, -1), delta(Z, 1))
        assert abs(v - 1) <= 1e-9
    C5 = z5.approx.group
    for a in range(5):
        for b in range(5):
            assert psi_mult_defect(z5.approx, 3, delta(C5, a), delta(C5, b)) <= 1e-12


def test_bullet_product(af, z5, pilot, z64):
    s = af.cpc
    u = s.algebras[1].unit()
    bp = bullet_product(s, 1, u, u, StageSchedule.doubling([1]))
    assert bp.representative.allclose(s.algebras[4].unit())
    assert all(d["value"] == 0 for d in bp.diagnostics)
    x, y = rand(af, 1, 3), rand(af, 1, 4)
    bp = bullet_product(s, 1, x, y, [(1, 2, 4), (2, 3, 6)])
    assert (bp.n, bp.m) == (3, 6)
    want = s.push(x, 1, 6) * s.push(y, 1, 6)
    assert bp.representative.max_abs_diff(want) < 1e-12
    with pytest.raises(ParameterError):
        bullet_product(s, 1, x, y, [])
    # Z: the pushforward of the representative sits on δ_2 only
    sys = z64.approx
    x2 = psi1(z64, 2)
    bp = bullet_product(z64.cpc, 2, x2, x2, StageSchedule.doubling(JS4))
    push = sys.phi(bp.m, bp.representative)
    assert push.support == [(2,)]
    assert [d["value"] for d in bp.diagnostics] == [defect_stinespring(z64.cpc, 2, x2, x2, j, 2 * j, 4 * j)
                                                   for j in JS4]


def test_product_vs_oracle(z5, z64, pilot):
    C5 = z5.approx.group
    x = z5.approx.psi(1, delta(C5, 3))
    y = z5.approx.psi(1, delta(C5, 4))
    for n, m in [(1, 2), (2, 4), (4, 8), (3, 7)]:
        assert product_vs_oracle(z5.approx, 1, x, y, n, m) <= 1e-10
    u = z64.cpc.algebras[2].unit()
    assert product_vs_oracle(z64.approx, 2, u, u, 4, 8) <= 1e-10
    x2 = psi1(z64, 2)
    vals = [product_vs_oracle(z64.approx, 2, x2, x2, 2 * j, 4 * j) for j in JS4]
    assert np.allclose(vals, pilot["product_oracle_k2"][:4], rtol=1e-9)
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_stinespring_lemma(z32, z5):
    sys = z32.approx
    Z = sys.group
    b = sys.algebras[4].random(np.random.default_rng(0))
    res = stinespring_lemma_check(sys, 4, delta(Z, 0), b)
    assert res.lhs == 0 and res["pass"]
    C5 = z5.approx.group
    rng = np.random.default_rng(1)
    for _ in range(10):
        c = rng.standard_normal(5)
        a = GroupAlgebraElement(C5, {g: c[g] + c[(-g) % 5] for g in range(5)})
        res = stinespring_lemma_check(z5.approx, 2, a, z5.cpc.algebras[2].random(rng))
        assert res.lhs <= 1e-12 and res.passed
    a = delta(Z, 1) + delta(Z, -1)
    for n in (4, 8, 16):
        for seed in range(3):
            b = sys.algebras[n].random(np.random.default_rng(seed))
            assert stinespring_lemma_check(sys, n, a, b).passed
    with pytest.raises(PreconditionError):
        stinespring_lemma_check(sys, 4, delta(Z, 1), b)


def test_unsigned_defects_nonnegative(z32):
    s = z32.cpc
    rng = np.random.default_rng(2)
    for _ in range(10):
        x, y, z = (s.algebras[1].random(rng) for _ in range(3))
        j, n, m = sorted(rng.choice(np.arange(1, 17), 3, replace=False))
        assert defect_stinespring(s, 1, x, y, j, n, m) >= -1e-9
        assert defect_associativity(s, 1, x, y, z, j, n, m) >= -1e-9
        assert defect_multiplicative(s, 1, x, y, n, m) >= -1e-9
        assert norm_limit_check(s, 1, x, 1, n, m) >= -1e-9


def test_schedule():
    s = StageSchedule.doubling([1, 2])
    assert s.triples == ((1, 2, 4), (2, 4, 8))
    assert s.pairs == ((2, 4), (4, 8))
    assert s.to_list() == [[1, 2, 4], [2, 4, 8]]
    assert len(StageSchedule.all_triples(1, 5).triples) == 10
    with pytest.raises(ParameterError):
        StageSchedule([(1, 1, 2)])


def test_report_field_order():
    r = DefectReport("stinespring", "sys", 1, 1, ["unit"], [[1, 2, 4]],
                     [{"j": 1, "n": 2, "m": 4, "value": 0.0}], False, 1e-9, "pass", 0, 1.5)
    assert list(r.to_dict()) == ["condition", "system", "k", "r", "elements", "schedule", "defects",
                                 "signed", "tolerance", "verdict", "seed", "wall_ms"]
    assert json.loads(audit.reports_to_json([r]))[0]["defects"][0]["value"] == 0.0
    assert r.passed and r.values == [0.0]


def test_verdicts():
    assert audit.verdict_for("stinespring", [0.1, 0.2], None) == "pass"
    assert audit.verdict_for("stinespring", [0.1], 0.5) == "pass"
    assert audit.verdict_for("stinespring", [0.1, 0.6], 0.5).startswith("fail")
    v = audit.verdict_for("multiplicative", [0.3, 0.2], 1e-3)
    assert v == "not asymptotically multiplicative at tested scales (floor=0.2)"


def test_threaded_evaluation_matches_serial(z32, monkeypatch):
    s = z32.cpc
    x = psi1(z32, 1)
    tuples = [(j, 2 * j, 4 * j) for j in (1, 2, 4, 8)]
    fn = lambda t: defect_stinespring(s, 1, x, x, *t)
    serial = evaluate_tuples(fn, tuples, threads=1)
    monkeypatch.setenv(audit.THREADS_ENV, "3")
    assert audit.thread_count() == 3
    assert evaluate_tuples(fn, tuples) == serial
