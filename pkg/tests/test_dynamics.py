import math

import numpy as np
import pytest
import scipy.linalg

from zkstrip.domain import build_grid
from zkstrip.dynamics import (
    BlowUpError,
    ImexStepper,
    SolverState,
    cfl_suggest,
    evolve,
    first_derivative_matrix,
    imex_step,
    linear_operator,
    nonlinear_rhs,
)
from zkstrip.experiments import ExperimentConfig, setup
from zkstrip.functionals import check_smallness
from zkstrip.spectral import GridField, ModeField


def test_third_derivative_exact_on_cubics():
    g = build_grid(1.0, 3.0, 40, 2)
    op = linear_operator(1, g, lam=0.0)
    out = op @ g.x**3
    # every row whose stencil stays inside [0, L): the x=0 closure row is exact on cubics too
    np.testing.assert_allclose(out[:-2], 6.0, rtol=1e-9)
    assert out[0] == pytest.approx(6.0, rel=1e-9)


def test_third_derivative_second_order_on_sine():
    errors = []
    for nx in (63, 127, 255):
        L = 4.0
        g = build_grid(1.0, L, nx, 2)
        x = g.x
        out = linear_operator(1, g, lam=0.0) @ np.sin(np.pi * x / L)
        exact = -((math.pi / L) ** 3) * np.cos(np.pi * x / L)
        # the last row assumes u_x(L) = 0, which sin(pi x / L) violates
        errors.append(np.max(np.abs(out - exact)[:-1]))
    assert 3.6 < errors[0] / errors[1] < 4.4
    assert 3.6 < errors[1] / errors[2] < 4.4


def test_lambda_term_is_linear(rng):
    g = build_grid(1.0, 5.0, 30, 3)
    f = rng.normal(size=g.Nx)
    a2 = linear_operator(2, g, lam=2.0) @ f
    a0 = linear_operator(2, g, lam=0.0) @ f
    np.testing.assert_allclose(a2, a0 - 2.0 * (first_derivative_matrix(g) @ f), atol=1e-10)


def test_default_lambda_is_mode_eigenvalue():
    g = build_grid(math.pi, 5.0, 30, 4)
    assert linear_operator(3, g).lam == pytest.approx(9.0)
    with pytest.raises(ValueError):
        linear_operator(5, g)


def test_operator_spectrum_dissipative_at_production_resolution():
    # eigenvalues of A must have nonnegative real part for Crank-Nicolson stability
    g = build_grid(math.pi, 10 * math.pi, 256, 32)
    for j in (1, 8, 32):
        ev = np.linalg.eigvals(linear_operator(j, g).dense())
        assert ev.real.min() > 0


def test_nonlinear_rhs_zero(strip):
    assert not np.any(nonlinear_rhs(GridField.zeros(strip)).values)


def _sine_field(g):
    X, Y = g.mesh()
    return GridField(g, np.sin(np.pi * X / g.L) * np.sin(np.pi * Y / g.B))


def test_nonlinear_rhs_second_order():
    errors = []
    for nx in (49, 99, 199):
        g = build_grid(math.pi, 10.0, nx, 15)
        X, Y = g.mesh()
        exact = (
            (math.pi / g.L)
            * np.sin(np.pi * X / g.L) ** 2
            * np.cos(np.pi * X / g.L)
            * np.sin(np.pi * Y / g.B) ** 3
        )
        errors.append(np.max(np.abs(nonlinear_rhs(_sine_field(g)).values - exact)))
    assert 3.6 < errors[0] / errors[1] < 4.4
    assert 3.6 < errors[1] / errors[2] < 4.4


def test_nonlinear_rhs_orthogonal_in_the_limit():
    inner = []
    for nx in (49, 99, 199, 399):
        g = build_grid(math.pi, 10.0, nx, 15)
        X, Y = g.mesh()
        f = GridField(g, np.exp(-((X - 3) ** 2)) * np.sin(np.pi * X / g.L) * np.sin(np.pi * Y / g.B))
        inner.append(abs(np.sum(f.values * nonlinear_rhs(f).values) * g.dx * g.dy))
    # second order: each halving of dx cuts the residual inner product about 4x
    assert all(3.0 < a / b < 5.0 for a, b in zip(inner, inner[1:]))


def test_zero_state_step(strip):
    s = SolverState.initial(ModeField.zeros(strip), 0.01)
    s1 = imex_step(s)
    assert s1.t == pytest.approx(0.01)
    assert not np.any(s1.modes.coeffs)


def test_linear_only_matches_matrix_exponential_second_order():
    g = build_grid(math.pi, 10.0, 32, 2)
    phi = np.exp(-((g.x - 5) ** 2) / 2)
    A = linear_operator(1, g).dense()
    exact = scipy.linalg.expm(-0.1 * A) @ phi
    errors = []
    for dt in (0.01, 0.005, 0.0025):
        coeffs = np.zeros((2, g.Nx))
        coeffs[0] = phi
        out = ImexStepper(g, dt, nonlinear=False).evolve(SolverState(0.0, ModeField(g, coeffs), dt), 0.1)
        errors.append(np.linalg.norm(out.modes.coeffs[0] - exact) / np.linalg.norm(exact))
        assert not np.any(out.modes.coeffs[1])
    for a, b in zip(errors, errors[1:]):
        assert 1.8 <= math.log2(a / b) <= 2.2


def test_self_convergence_order():
    cfg = ExperimentConfig(Nx=128, Ny=8, L=20.0, amplitude=0.05, center=5.0, width=1.5)
    g, u0, _ = setup(cfg)
    sols = [
        ImexStepper(g, dt).evolve(SolverState.initial(u0, dt), 1.0).modes.coeffs
        for dt in (0.02, 0.01, 0.005)
    ]
    order = math.log2(np.linalg.norm(sols[0] - sols[1]) / np.linalg.norm(sols[1] - sols[2]))
    assert 1.8 <= order <= 2.2


def test_linear_decoupling(rng):
    g = build_grid(math.pi, 10.0, 64, 6)
    coeffs = np.zeros((6, g.Nx))
    coeffs[2] = np.exp(-((g.x - 4) ** 2))
    out = evolve(SolverState(0.0, ModeField(g, coeffs), 0.01), 0.5, nonlinear=False)
    assert not np.any(np.delete(out.modes.coeffs, 2, axis=0))


def test_evolve_single_step_when_T_equals_dt(strip):
    s = SolverState.initial(GridField.zeros(strip), 0.05)
    assert evolve(s, 0.05).steps == 1


def test_evolve_composes():
    cfg = ExperimentConfig(Nx=64, Ny=4, L=12.0, amplitude=0.1)
    g, u0, _ = setup(cfg)
    s0 = SolverState.initial(u0, 0.01)
    once = evolve(evolve(s0, 0.3), 0.3)
    twice = evolve(s0, 0.6)
    assert once.steps == twice.steps == 60
    np.testing.assert_array_equal(once.modes.coeffs, twice.modes.coeffs)
    assert once.t == pytest.approx(twice.t)


def test_observer_stride(strip):
    seen = []
    evolve(SolverState.initial(GridField.zeros(strip), 0.01), 0.1, lambda t, m: seen.append(t), stride=3)
    assert len(seen) == 1 + 10 // 3
    assert seen[0] == 0.0


def test_small_gaussian_l2_decreases():
    cfg = ExperimentConfig(Nx=256, Ny=8, amplitude=0.05)
    g, u0, dt = setup(cfg)
    out = evolve(SolverState.initial(u0, dt), 5.0)
    assert out.modes.l2_squared() < SolverState.initial(u0, dt).modes.l2_squared()


def test_small_data_survive_fifty_decay_times():
    cfg = ExperimentConfig(Nx=256, Ny=8, dt=0.05, stride=1000)
    g, u0, dt = setup(cfg)
    assert check_smallness(u0).passed
    T = 50 / cfg.theoretical_rate
    out = ImexStepper(g, dt).evolve(SolverState.initial(u0, dt), T)
    assert out.t == pytest.approx(T)
    assert out.modes.l2_squared() < SolverState.initial(u0, dt).modes.l2_squared()


def test_blowup_detected():
    cfg = ExperimentConfig(Nx=128, Ny=8, amplitude=20.0)
    g, u0, _ = setup(cfg)
    with pytest.raises(BlowUpError) as info:
        evolve(SolverState.initial(u0, 0.05), 2.0)
    assert 0 < info.value.t <= 2.0


def test_state_validation(strip):
    with pytest.raises(ValueError):
        SolverState.initial(ModeField.zeros(strip), -0.1)
    with pytest.raises(ValueError):
        SolverState(-1.0, ModeField.zeros(strip), 0.1)


def test_cfl_suggest():
    g = build_grid(1.0, 10.0, 99, 4)
    g2 = build_grid(1.0, 10.0, 199, 4)
    assert cfl_suggest(g2, 1.0) == pytest.approx(cfl_suggest(g, 1.0) / 2)
    assert cfl_suggest(g, 0.0) == pytest.approx(0.25 * 0.1 / 1e-6)
    assert cfl_suggest(g, 2.0) == pytest.approx(0.00625)
    with pytest.raises(ValueError):
        cfl_suggest(g, -1.0)
