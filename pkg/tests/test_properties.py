import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cpcaudit.cpmaps import amplify, cauchy_schwarz_defect, compose, verify_cp
from cpcaudit.fdcstar import FiniteDimCstar, amplify_elem, is_positive, norm
from cpcaudit.folner_system import ApproximationSystem
from cpcaudit.groupalg import GroupAlgebraElement, convolve, involute, reduced_norm
from cpcaudit.groups import IntegerLattice, box_folner

Z = IntegerLattice(1)
Z2 = IntegerLattice(2)

coeff = st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False)
z_elems = st.dictionaries(st.integers(-6, 6), coeff, min_size=1, max_size=6).map(
    lambda d: GroupAlgebraElement(Z, d))


@pytest.fixture(scope="module")
def small():
    sys = ApproximationSystem(Z, [box_folner(1, n) for n in range(7)])
    sys.build_cpc()
    return sys


@settings(max_examples=60, deadline=None)
@given(a=z_elems, b=z_elems, c=z_elems)
def test_convolution_associative_and_involutive(a, b, c):
    l1 = lambda e: sum(abs(v) for v in e.coeffs.values())
    tol = 1e-12 * (1 + l1(a) * l1(b) * l1(c))
    assert ((a * b) * c).max_abs_diff(a * (b * c)) <= tol
    assert involute(a * b).max_abs_diff(involute(b) * involute(a)) <= tol * (1 + l1(c))


@settings(max_examples=40, deadline=None)
@given(a=z_elems, n=st.integers(0, 6))
def test_psi_contractive_and_phi_inverse_on_support(small, a, n):
    x = small.psi(n, a)
    assert norm(x) <= reduced_norm(a).upper + 1e-9
    back = small.phi(n, x)
    for g, c in a.coeffs.items():
        want = c * small.phi_psi_scalar(n, g)
        assert abs(back.coeff(g) - want) <= 1e-12 * (1 + abs(c))


@settings(max_examples=40, deadline=None)
@given(a=z_elems, n=st.integers(0, 5))
def test_rho_step_equals_psi_phi(small, a, n):
    x = small.psi(n, a)
    assert small.rho_step(n)(x).max_abs_diff(small.psi(n + 1, small.phi(n, x))) < 1e-12


def test_cauchy_schwarz_seeded(small):
    rng = np.random.default_rng(200)
    worst = -np.inf
    for _ in range(200):
        n = int(rng.integers(0, 6))
        f = small.rho_step(n)
        x, y = small.algebras[n].random(rng), small.algebras[n].random(rng)
        worst = max(worst, cauchy_schwarz_defect(f, x, y))
    assert worst <= 1e-9


def test_compose_of_cp_is_cp(small):
    rng = np.random.default_rng(100)
    for _ in range(100):
        n, m, p = sorted(rng.choice(7, 3, replace=False))
        g = small.cpc.rho(int(p), int(m))
        f = small.cpc.rho(int(m), int(n))
        h = compose(g, f)
        v = verify_cp(h, 1e-9)
        assert v.is_cp
        h.release_caches()


def test_cb_norm_at_unit(small):
    for m, n in [(1, 0), (3, 1), (6, 2)]:
        f = small.cpc.rho(m, n)
        u = norm(f(f.domain.unit()))
        for r in (1, 2, 3):
            fr = amplify(f, r)
            assert abs(norm(fr(fr.domain.unit())) - u) <= 1e-9


def test_cp_maps_preserve_amplified_positivity(small):
    rng = np.random.default_rng(7)
    f = small.cpc.rho(4, 1)
    for _ in range(20):
        r = int(rng.integers(1, 4))
        A = FiniteDimCstar((3 * r,))
        X = A.random(rng)
        P = X.adjoint() * X
        assert is_positive(amplify(f, r)(P), 1e-10)


@settings(max_examples=30, deadline=None)
@given(pts=st.lists(st.tuples(st.integers(-3, 3), st.integers(-3, 3)), min_size=1, max_size=5),
       vals=st.lists(coeff, min_size=5, max_size=5))
def test_lattice2_cstar_identity(pts, vals):
    a = GroupAlgebraElement(Z2, {p: v for p, v in zip(pts, vals)})
    if not a.coeffs:
        return
    na = reduced_norm(a)
    sq = reduced_norm(involute(a) * a)
    assert sq.lower <= na.upper ** 2 * (1 + 1e-9) + 1e-9
    assert na.lower ** 2 <= sq.upper * (1 + 1e-9) + 1e-9


@settings(max_examples=30, deadline=None)
@given(r=st.integers(1, 3), seed=st.integers(0, 10_000))
def test_amplified_norm_of_diag(r, seed):
    A = FiniteDimCstar((2, 3))
    x = A.random(np.random.default_rng(seed))
    assert abs(norm(amplify_elem(x, r)) - norm(x)) < 1e-12
