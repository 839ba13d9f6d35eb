import math
from fractions import Fraction

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from zkstrip import functionals as fn
from zkstrip.domain import WeightSpec, build_grid
from zkstrip.experiments import random_smooth_field
from zkstrip.spectral import GridField, eigenpair

xs, ys = sp.symbols("x y", real=True)


def gauss_legendre_2d(expr, L, B, n=(400, 120)):
    """Independent oracle: tensor Gauss-Legendre quadrature of a sympy integrand."""
    f = sp.lambdify((xs, ys), expr, "numpy")
    x, wx = np.polynomial.legendre.leggauss(n[0])
    y, wy = np.polynomial.legendre.leggauss(n[1])
    x, wx = 0.5 * L * (x + 1), 0.5 * L * wx
    y, wy = 0.5 * B * (y + 1), 0.5 * B * wy
    X, Y = np.meshgrid(x, y, indexing="ij")
    return float(np.sum(np.broadcast_to(f(X, Y), X.shape) * wx[:, None] * wy[None, :]))


def sample(grid, expr):
    f = sp.lambdify((xs, ys), expr, "numpy")
    X, Y = grid.mesh()
    return GridField(grid, np.broadcast_to(f(X, Y), X.shape).copy())


# -- weighted L2 ------------------------------------------------------------


def test_weighted_l2_zero(strip):
    assert fn.weighted_l2(GridField.zeros(strip)) == 0.0


def test_weighted_l2_constant_profile(strip):
    _, w1 = eigenpair(1, strip.B)
    f = GridField(strip, np.tile(w1(strip.y), (strip.Nx, 1)))
    # the unit profile jumps to 0 at x = 0, L, so the interior sum misses O(dx)
    assert fn.weighted_l2(f) == pytest.approx(10.0, abs=2 * strip.dx)
    assert fn.weighted_l2(f, WeightSpec.poly1()) == pytest.approx(60.0, abs=7 * strip.dx)


def test_exp_weight_monotone_in_k(rng):
    g = build_grid(math.pi, 10.0, 128, 16)
    f = random_smooth_field(g, rng)
    vals = [fn.weighted_l2(f, WeightSpec.exp(k)) for k in (0.01, 0.1, 0.5, 1.0, 5.0)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


# -- derivative norms -------------------------------------------------------


CLOSED_FORM = (
    xs * (10 - xs) * sp.exp(-xs / 3) * sp.sin(ys) * (1 + sp.Rational(3, 10) * sp.cos(ys))
    + sp.Rational(1, 2) * sp.sin(sp.pi * xs / 5) * sp.sin(2 * ys) * sp.exp(-((xs - 4) ** 2) / 4)
)


def test_gradient_norms_zero(strip):
    assert fn.gradient_norms(GridField.zeros(strip)).as_tuple() == (0.0,) * 5


def test_gradient_norms_match_analytic_derivatives():
    L, B = 10.0, math.pi
    g = build_grid(B, L, 399, 63)
    f = sample(g, CLOSED_FORM)
    got = fn.gradient_norms(f)
    oracle = {
        "ux": sp.diff(CLOSED_FORM, xs) ** 2,
        "uy": sp.diff(CLOSED_FORM, ys) ** 2,
        "uxy": sp.diff(CLOSED_FORM, xs, ys) ** 2,
        "uxx": sp.diff(CLOSED_FORM, xs, 2) ** 2,
        "uyy": sp.diff(CLOSED_FORM, ys, 2) ** 2,
    }
    for name, integrand in oracle.items():
        assert getattr(got, name) == pytest.approx(gauss_legendre_2d(integrand, L, B), rel=0.01), name


def test_uy_ratio_is_first_eigenvalue():
    g = build_grid(2.0, 10.0, 99, 15)
    _, w1 = eigenpair(1, g.B)
    f = GridField(g, np.outer(np.sin(np.pi * g.x / g.L), w1(g.y)))
    assert fn.gradient_norms(f).uy / fn.l2_squared(f) == pytest.approx(math.pi**2 / 4, rel=1e-12)


# -- boundary flux ------------------------------------------------------------


def test_flux_zero_when_first_columns_vanish(strip, rng):
    v = rng.normal(size=(strip.Nx, strip.Ny))
    v[:3] = 0.0
    assert fn.boundary_flux(GridField(strip, v)) == 0.0


def test_flux_of_unit_slope_trace():
    errs = []
    for nx in (99, 199):
        g = build_grid(math.pi, 10.0, nx, 15)
        _, w1 = eigenpair(1, g.B)
        f = GridField(g, np.outer(g.x * np.exp(-(g.x**2)), w1(g.y)))
        errs.append(abs(fn.boundary_flux(f) - 1.0))
    assert errs[0] < 1e-2
    assert errs[1] < errs[0] / 3.5


def test_flux_sign_invariant(strip, rng):
    f = random_smooth_field(strip, rng)
    assert fn.boundary_flux(-f) == fn.boundary_flux(f)


# -- J functional ------------------------------------------------------------------


def test_j_zero(strip):
    assert fn.j_functional(GridField.zeros(strip)) == 0.0


def test_j_homogeneity(strip, rng):
    f = random_smooth_field(strip, rng)
    q, s = fn.j_functional_terms(f)
    for a in (0.3, 2.0):
        assert fn.j_functional(a * f) == pytest.approx(a**2 * q + a**6 * s, rel=1e-10)


def test_j_matches_quadrature_oracle():
    L, B = 10.0, math.pi
    u = xs * sp.exp(-((xs - 3) ** 2)) * sp.sin(sp.pi * ys / B)
    ux = sp.diff(u, xs)
    integrand = (1 + xs) ** 2 * (
        u**2 + ux**2 + sp.diff(u, ys) ** 2 + (sp.diff(u, xs, 3) + sp.diff(u, xs, ys, ys)) ** 2 + u**4 * ux**2
    )
    oracle = gauss_legendre_2d(integrand, L, B)
    g = build_grid(B, L, 511, 31)
    assert fn.j_functional(sample(g, u)) == pytest.approx(oracle, rel=0.01)


# -- K functional -----------------------------------------------------------------


def test_k_zero():
    assert fn.k_functional(0, 0, 0) == 0.0


def test_k_worked_value():
    a, b, c = Fraction(1, 10), Fraction(1, 10), Fraction(1, 100)
    m = 5 * a**3 + 4 * b**3
    exact = 2**8 * a**2 * (9 * a**2 + 2 * c) + 2**9 * a * m * (1 + 2**8 * a * m)
    assert float(exact) == pytest.approx(0.8486, abs=1e-4)
    assert fn.k_functional(0.1, 0.1, 0.01) == pytest.approx(float(exact), rel=1e-14)


@settings(max_examples=200)
@given(
    st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.integers(0, 2), st.floats(0, 0.5)
)
def test_k_monotone(a, b, c, which, bump):
    args = [a, b, c]
    bumped = list(args)
    bumped[which] += bump
    assert fn.k_functional(*bumped) >= fn.k_functional(*args)


def test_k_rejects_negative():
    with pytest.raises(ValueError):
        fn.k_functional(-1, 0, 0)


# -- initial u_t --------------------------------------------------------------------


def test_initial_ut_zero(strip):
    assert not np.any(fn.initial_ut(GridField.zeros(strip)).values)


def test_initial_ut_linear_mode_second_order():
    B = math.pi
    phi = xs**2 * sp.exp(-((xs - 4) ** 2))
    target = -(sp.diff(phi, xs, 3) - sp.diff(phi, xs))  # lambda_1 = 1 for B = pi
    phi_f, target_f = (sp.lambdify(xs, e, "numpy") for e in (phi, target))
    eps = 1e-6
    errs = []
    for nx in (199, 399):
        g = build_grid(B, 12.0, nx, 15)
        _, w1 = eigenpair(1, B)
        f = GridField(g, eps * np.outer(phi_f(g.x), w1(g.y)))
        ut = fn.initial_ut(f).values / eps
        errs.append(np.max(np.abs(ut - np.outer(target_f(g.x), w1(g.y)))[:-2]))
    assert 3.5 < errs[0] / errs[1] < 4.5


def test_initial_ut_odd(strip, rng):
    f = random_smooth_field(strip, rng)
    np.testing.assert_allclose(fn.initial_ut(-f).values, -fn.initial_ut(f).values, atol=1e-12)


# -- gates ---------------------------------------------------------------------------


def test_smallness_zero_passes(strip):
    r = fn.check_smallness(GridField.zeros(strip))
    assert r.passed
    assert r.K0 == 0.0 and r.J == 0.0


def test_smallness_threshold_for_pi():
    assert fn.smallness_threshold(math.pi) == 1 / 8
    assert fn.smallness_threshold(10.0) == pytest.approx(math.pi**2 / 400)


def test_norm_gate_fails_at_0_2(strip):
    _, w1 = eigenpair(1, strip.B)
    v = np.outer(np.exp(-((strip.x - 4) ** 2)), w1(strip.y))
    f = GridField(strip, v * 0.2 / math.sqrt(fn.l2_squared(GridField(strip, v))))
    r = fn.check_smallness(f)
    assert r.u0_l2 == pytest.approx(0.2)
    assert r.gates[fn.GATE_U0] is False
    assert not r.passed


def test_decay_gates_for_pi():
    assert fn.decay_k_cap(math.pi) == pytest.approx(1 / math.sqrt(20))
    assert fn.decay_k_cap(math.pi) == pytest.approx(0.22360, abs=1e-5)
    assert fn.cs2_threshold(0.2, math.pi) == pytest.approx(0.05)


def test_decay_conditions_zero_cs2(strip):
    u0 = GridField.zeros(strip)
    for k in (0.05, 0.2, 0.2236):
        r = fn.check_decay_conditions(u0, k, 0.0)
        assert r.gates[fn.GATE_CS2]
        assert r.passed
    assert not fn.check_decay_conditions(u0, 0.23, 0.0).passed


def test_report_pass_iff_all_gates(strip):
    r = fn.check_decay_conditions(GridField.zeros(strip), 0.2, 1.0)
    assert r.failed_gates() == [fn.GATE_CS2]
    assert r.to_dict()["pass"] is False


# -- inequality checkers -----------------------------------------------------------------


def test_steklov_equality_cases(strip):
    phi = np.exp(-((strip.x - 5) ** 2))
    for j in (1, 2):
        _, w = eigenpair(j, strip.B)
        f = GridField(strip, np.outer(phi, w(strip.y)))
        assert fn.steklov_check(f) == pytest.approx(j**2 * math.pi**2 / strip.B**2, rel=1e-12)


def test_steklov_zero_field(strip):
    with pytest.raises(fn.ZeroFieldError):
        fn.steklov_check(GridField.zeros(strip))


def test_interpolation_zero(strip):
    r = fn.interpolation_check(GridField.zeros(strip))
    assert r.l4_margin == 0.0 and r.l8_margin == 0.0


def test_interpolation_sine_against_closed_form():
    L, B = 10.0, math.pi
    g = build_grid(B, L, 255, 63)
    X, Y = g.mesh()
    f = GridField(g, np.sin(np.pi * X / L) * np.sin(np.pi * Y / B))
    r = fn.interpolation_check(f)
    # closed forms: int sin^4 = 3L/8, int sin^8 = 35L/128 per direction
    l2 = math.sqrt(L * B / 4)
    grad = math.sqrt((math.pi**2 / L**2 + math.pi**2 / B**2) * L * B / 4)
    l4 = (9 * L * B / 64) ** 0.25
    l8 = ((35 / 128) ** 2 * L * B) ** 0.125
    assert r.l4_lhs == pytest.approx(l4**2, rel=0.01)
    assert r.l4_rhs == pytest.approx(2 * grad * l2, rel=0.01)
    assert r.l8_lhs == pytest.approx(l8**2, rel=0.01)
    assert r.l8_rhs == pytest.approx(4**1.5 * grad**1.5 * l2**0.5, rel=0.01)
    assert r.l4_margin >= 0 and r.l8_margin >= 0


def test_interpolation_l4_margin_scales_quadratically(strip, rng):
    f = random_smooth_field(strip, rng)
    m = fn.interpolation_check(f).l4_margin
    assert fn.interpolation_check(3.0 * f).l4_margin == pytest.approx(9.0 * m, rel=1e-10)


def test_sup_bound_zero(strip):
    assert fn.sup_bound_check(GridField.zeros(strip)) == (0.0, 0.0)


def test_sup_bound_sine(strip):
    X, Y = strip.mesh()
    f = GridField(strip, np.sin(np.pi * X / strip.L) * np.sin(np.pi * Y / strip.B))
    sup2, bound = fn.sup_bound_check(f)
    L, B = strip.L, strip.B
    exact = 2 * (L * B / 4) * (1 + math.pi**2 / L**2 + math.pi**2 / B**2 + math.pi**4 / (L * B) ** 2)
    assert sup2 == pytest.approx(1.0, abs=1e-15)
    assert bound == pytest.approx(exact, rel=0.01)
    assert fn.sup_bound_check(-f) == (sup2, bound)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_inequalities_on_random_fields(seed):
    g = build_grid(math.pi, 10.0, 128, 16)
    f = random_smooth_field(g, np.random.default_rng(seed))
    assert fn.steklov_check(f) >= math.pi**2 / g.B**2 - 1e-10
    r = fn.interpolation_check(f)
    assert r.l4_margin >= -1e-10 * r.l4_rhs
    assert r.l8_margin >= -1e-10 * r.l8_rhs
    sup2, bound = fn.sup_bound_check(f)
    assert fn.within(sup2, bound)


# -- energy report -------------------------------------------------------------------


def test_energy_report_zero(strip):
    r = fn.energy_report(GridField.zeros(strip), 0.0, 0.2)
    assert all(v == 0.0 for v in r.row())
    assert r.sup2 <= r.sup2_bound


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_energy_report_ordering(seed):
    g = build_grid(math.pi, 10.0, 64, 8)
    r = fn.energy_report(random_smooth_field(g, np.random.default_rng(seed)), 1.0, 0.3)
    assert 0 <= r.l2 <= r.w1 <= r.w2
    assert r.l2 <= r.expk
    assert r.l2 <= r.h1 <= r.h2
    assert r.sup2 <= r.sup2_bound


def test_energy_report_tail(strip):
    X, Y = strip.mesh()
    f = GridField(strip, np.where(X > 9.3, np.sin(np.pi * Y / strip.B) * (X - 9.3) * (10 - X), 0.0))
    r = fn.energy_report(f)
    assert r.tail == pytest.approx(r.l2, rel=1e-12)
    assert np.isnan(r.expk)


def test_csv_row_order(strip):
    r = fn.energy_report(GridField.zeros(strip), 2.5, 0.1)
    assert fn.CSV_COLUMNS == ("t", "l2", "h1", "h2", "w1", "w2", "expk", "flux", "sup2", "sup2_bound", "tail")
    assert r.row()[0] == 2.5
