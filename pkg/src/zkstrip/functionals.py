"""Norms, weighted energies, boundary flux and the hypothesis gates.

Quadrature conventions:

* x: trapezoid rule.  Quantities that vanish on the Dirichlet boundary (``u`` itself,
  ``u_y``, ``u_yy``) are summed over interior nodes only.  x-derivatives are
  extended to ``x = 0`` and ``x = L`` by one-sided second-order differences and
  integrated with half weights at the end points.
* y: by Parseval in the orthonormal sine basis, so y-derivatives carry the exact
  factors ``j pi / B``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .domain import StripGrid, WeightSpec, weight_table, weight_table_full
from .dynamics import apply_linear, conservative_cubic_flux
from .spectral import GridField, ModeField, eigenvalues, modes_from_values, values_from_modes

ABS_SLACK = 1e-10
REL_SLACK = 1e-8

CSV_COLUMNS = ("t", "l2", "h1", "h2", "w1", "w2", "expk", "flux", "sup2", "sup2_bound", "tail")


class ZeroFieldError(ValueError):
    pass


def _modes(f) -> np.ndarray:
    if isinstance(f, ModeField):
        return f.coeffs
    return modes_from_values(f.values, f.grid)


def _values(f) -> np.ndarray:
    if isinstance(f, GridField):
        return f.values
    return values_from_modes(f.coeffs, f.grid)


def _padded(g: np.ndarray) -> np.ndarray:
    # append the zero Dirichlet values at x=0 and x=L along the last axis
    pad = [(0, 0)] * (g.ndim - 1) + [(1, 1)]
    return np.pad(g, pad)


def dx_full(g: np.ndarray, dx: float) -> np.ndarray:
    """d/dx on all ``Nx + 2`` nodes (last axis), one-sided second order at the ends."""
    u = _padded(g)
    d = np.empty_like(u)
    d[..., 1:-1] = (u[..., 2:] - u[..., :-2]) / (2 * dx)
    d[..., 0] = (-3 * u[..., 0] + 4 * u[..., 1] - u[..., 2]) / (2 * dx)
    d[..., -1] = (3 * u[..., -1] - 4 * u[..., -2] + u[..., -3]) / (2 * dx)
    return d


def dxx_full(g: np.ndarray, dx: float) -> np.ndarray:
    u = _padded(g)
    d = np.empty_like(u)
    d[..., 1:-1] = (u[..., 2:] - 2 * u[..., 1:-1] + u[..., :-2]) / dx**2
    d[..., 0] = (2 * u[..., 0] - 5 * u[..., 1] + 4 * u[..., 2] - u[..., 3]) / dx**2
    d[..., -1] = (2 * u[..., -1] - 5 * u[..., -2] + 4 * u[..., -3] - u[..., -4]) / dx**2
    return d


def _trapezoid_weights(grid: StripGrid) -> np.ndarray:
    w = np.full(grid.Nx + 2, grid.dx)
    w[0] = w[-1] = grid.dx / 2
    return w


def _interior_sum(g2: np.ndarray, grid: StripGrid, weights: np.ndarray | None = None) -> float:
    # g2: (Ny, Nx) nonnegative integrand in modal form
    col = g2.sum(axis=0)
    if weights is not None:
        col = col * weights
    return float(col.sum() * grid.dx)


def _full_sum(d2: np.ndarray, grid: StripGrid, weights: np.ndarray | None = None) -> float:
    col = d2.sum(axis=0) * _trapezoid_weights(grid)
    if weights is not None:
        col = col * weights
    return float(col.sum())


def weighted_l2(f, w: WeightSpec = WeightSpec()) -> float:
    """``(w(x), u^2)``."""
    g = _modes(f)
    return _interior_sum(g**2, f.grid, weight_table(f.grid, w))


def l2_squared(f) -> float:
    return _interior_sum(_modes(f) ** 2, f.grid)


@dataclass(frozen=True)
class GradientNorms:
    ux: float
    uy: float
    uxy: float
    uxx: float
    uyy: float

    def as_tuple(self):
        return (self.ux, self.uy, self.uxy, self.uxx, self.uyy)


def gradient_norms(f, w: WeightSpec | None = None) -> GradientNorms:
    """Squared L2 norms of ``u_x, u_y, u_xy, u_xx, u_yy``, optionally x-weighted."""
    grid = f.grid
    g = _modes(f)
    lam = eigenvalues(grid)[:, None]
    wi = None if w is None else weight_table(grid, w)
    wf = None if w is None else weight_table_full(grid, w)
    gx = dx_full(g, grid.dx)
    gxx = dxx_full(g, grid.dx)
    return GradientNorms(
        ux=_full_sum(gx**2, grid, wf),
        uy=_interior_sum(lam * g**2, grid, wi),
        uxy=_full_sum(lam * gx**2, grid, wf),
        uxx=_full_sum(gxx**2, grid, wf),
        uyy=_interior_sum(lam**2 * g**2, grid, wi),
    )


def h1_squared(f) -> float:
    n = gradient_norms(f)
    return l2_squared(f) + n.ux + n.uy


def h2_squared(f) -> float:
    n = gradient_norms(f)
    return l2_squared(f) + n.ux + n.uy + n.uxx + n.uxy + n.uyy


def trace_slopes(g: np.ndarray, dx: float) -> np.ndarray:
    """``u_x(0)`` per mode, one-sided from ``u(0) = 0`` and the first three interior nodes.

    ``(18 u_0 - 9 u_1 + 2 u_2) / (6 dx)`` is exact on cubics.  The cheaper
    ``(4 u_0 - u_1) / (2 dx)`` leaves an L2-balance residual above 1e-3 at the
    default resolution.
    """
    return (18.0 * g[..., 0] - 9.0 * g[..., 1] + 2.0 * g[..., 2]) / (6.0 * dx)


def boundary_flux(f) -> float:
    """``int_0^B u_x(0, y)^2 dy``."""
    return float(np.sum(trace_slopes(_modes(f), f.grid.dx) ** 2))


def delta_ux_modes(g: np.ndarray, grid: StripGrid) -> np.ndarray:
    """Modal ``u_xxx + u_xyy`` using the dynamics operator."""
    return apply_linear(g, grid)


def j_functional_terms(u0, w: WeightSpec = WeightSpec.poly2()) -> tuple[float, float]:
    """``(Q, S)``: the quadratic part ``int w (u^2 + |grad u|^2 + |Delta u_x|^2)`` and the
    sextic part ``int w u^4 u_x^2``, so that ``J(a u0) = a^2 Q + a^6 S``."""
    grid = u0.grid
    g = _modes(u0)
    lam = eigenvalues(grid)[:, None]
    wi = weight_table(grid, w)
    wf = weight_table_full(grid, w)
    quad = (
        _interior_sum(g**2, grid, wi)
        + _full_sum(dx_full(g, grid.dx) ** 2, grid, wf)
        + _interior_sum(lam * g**2, grid, wi)
        + _interior_sum(delta_ux_modes(g, grid) ** 2, grid, wi)
    )
    u = _values(u0)
    up = np.pad(u, ((1, 1), (0, 0)))
    ux = (up[2:] - up[:-2]) / (2 * grid.dx)
    sextic = float(np.sum(wi[:, None] * u**4 * ux**2) * grid.dx * grid.dy)
    return float(quad), sextic


def j_functional(u0, w: WeightSpec = WeightSpec.poly2()) -> float:
    q, s = j_functional_terms(u0, w)
    return q + s


def k_functional(a: float, b: float, c: float) -> float:
    """K from the global-existence hypothesis.

    ``a = ||(1+x) u0||``, ``b = ||(1+x) u_t||``, ``c = ((1+x)^2, u_t^2)``::

        K = 2^8 a^2 (9 a^2 + 2 c) + 2^9 a (5 a^3 + 4 b^3) [1 + 2^8 a (5 a^3 + 4 b^3)]
    """
    if min(a, b, c) < 0:
        raise ValueError("K arguments must be non-negative")
    m = 5 * a**3 + 4 * b**3
    return 2**8 * a**2 * (9 * a**2 + 2 * c) + 2**9 * a * m * (1 + 2**8 * a * m)


def initial_ut(u0) -> GridField:
    """``u_t(0) = -(u_xxx + u_xyy + u^2 u_x)`` with the solver's discretizations."""
    grid = u0.grid
    g = _modes(u0)
    lin = values_from_modes(apply_linear(g, grid), grid)
    nl = conservative_cubic_flux(_values(u0), grid.dx)
    return GridField(grid, -(lin + nl))


def smallness_threshold(B: float) -> float:
    return min(1.0 / 8.0, np.pi**2 / (4 * B**2))


def k_threshold(B: float) -> float:
    return np.pi**2 / (2 * B**2)


def decay_k_cap(B: float) -> float:
    return np.pi / (np.sqrt(20.0) * B)


def cs2_threshold(k: float, B: float) -> float:
    return min(k * np.pi**2 / (4 * B**2), 2 * k)


def decay_rate(k: float, B: float) -> float:
    """Exponent ``k pi^2 / (2 B^2)`` of the exponential decay bound."""
    return k * np.pi**2 / (2 * B**2)


GATE_U0 = "u0_l2 < min(1/8, pi^2/(4B^2))"
GATE_K0 = "K(0) < pi^2/(2B^2)"
GATE_J = "J(u0) finite"
GATE_CS2 = "Cs2 <= min(k pi^2/(4B^2), 2k)"
GATE_KCAP = "k <= pi/(sqrt(20) B)"
GATE_JEXP = "exp-weighted J(u0) finite"


@dataclass
class ConditionReport:
    B: float
    u0_l2: float
    threshold_32: float
    J: float
    K0: float
    K_threshold: float
    gates: dict = field(default_factory=dict)
    Cs2: float | None = None
    k: float | None = None
    k_cap: float | None = None
    Cs2_threshold: float | None = None
    J_exp: float | None = None

    @property
    def decay_gates(self) -> dict:
        return {name: ok for name, ok in self.gates.items() if name in (GATE_CS2, GATE_KCAP, GATE_JEXP)}

    @property
    def passed(self) -> bool:
        return all(self.gates.values())

    def failed_gates(self) -> list[str]:
        return [name for name, ok in self.gates.items() if not ok]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pass"] = self.passed
        return d


def check_smallness(u0) -> ConditionReport:
    """Evaluate the global-existence hypotheses on the initial datum."""
    grid = u0.grid
    norm = float(np.sqrt(l2_squared(u0)))
    ut = initial_ut(u0)
    a = float(np.sqrt(weighted_l2(u0, WeightSpec.poly2())))
    c = weighted_l2(ut, WeightSpec.poly2())
    K0 = k_functional(a, float(np.sqrt(c)), c)
    J = j_functional(u0)
    report = ConditionReport(
        B=grid.B,
        u0_l2=norm,
        threshold_32=smallness_threshold(grid.B),
        J=J,
        K0=K0,
        K_threshold=k_threshold(grid.B),
    )
    report.gates[GATE_U0] = norm < report.threshold_32
    report.gates[GATE_K0] = K0 < report.K_threshold
    report.gates[GATE_J] = bool(np.isfinite(J))
    return report


def check_decay_conditions(u0, k: float, Cs2: float) -> ConditionReport:
    """Smallness gates plus the decay hypotheses for parameter ``k``."""
    if not k > 0:
        raise ValueError("decay parameter k must be positive")
    report = check_smallness(u0)
    B = u0.grid.B
    report.k = float(k)
    report.Cs2 = float(Cs2)
    report.k_cap = decay_k_cap(B)
    report.Cs2_threshold = cs2_threshold(k, B)
    report.J_exp = j_functional(u0, WeightSpec.exp(k))
    report.gates[GATE_CS2] = Cs2 <= report.Cs2_threshold
    report.gates[GATE_KCAP] = k <= report.k_cap
    report.gates[GATE_JEXP] = bool(np.isfinite(report.J_exp))
    return report


def steklov_check(f) -> float:
    """``||u_y||^2 / ||u||^2``; never below ``pi^2 / B^2``."""
    g = _modes(f)
    den = float(np.sum(g**2))
    if den == 0.0:
        raise ZeroFieldError("Steklov ratio undefined for the zero field")
    lam = eigenvalues(f.grid)[:, None]
    return float(np.sum(lam * g**2)) / den


@dataclass(frozen=True)
class InterpolationReport:
    """Both interpolation inequalities in squared form.

    ``||u||_{L4}^2 <= 2 ||grad u|| ||u||`` and
    ``||u||_{L8}^2 <= 4^{3/2} ||grad u||^{3/2} ||u||^{1/2}``; both sides scale as ``a^2``.
    """

    l4_lhs: float
    l4_rhs: float
    l8_lhs: float
    l8_rhs: float

    @property
    def l4_margin(self) -> float:
        return self.l4_rhs - self.l4_lhs

    @property
    def l8_margin(self) -> float:
        return self.l8_rhs - self.l8_lhs


def lp_norm(f, p: int) -> float:
    u = _values(f)
    return float((np.sum(np.abs(u) ** p) * f.grid.dx * f.grid.dy) ** (1.0 / p))


def interpolation_check(f) -> InterpolationReport:
    n = gradient_norms(f)
    grad = np.sqrt(n.ux + n.uy)
    l2 = np.sqrt(l2_squared(f))
    return InterpolationReport(
        l4_lhs=lp_norm(f, 4) ** 2,
        l4_rhs=float(2.0 * grad * l2),
        l8_lhs=lp_norm(f, 8) ** 2,
        l8_rhs=float(4.0**1.5 * grad**1.5 * l2**0.5),
    )


def sup_bound_check(f) -> tuple[float, float]:
    """``(max u^2, 2 (||u||_{H1}^2 + ||u_xy||^2))``."""
    u = _values(f)
    n = gradient_norms(f)
    sup2 = float(np.max(u**2)) if u.size else 0.0
    return sup2, 2.0 * (l2_squared(f) + n.ux + n.uy + n.uxy)


def within(lhs: float, rhs: float) -> bool:
    """``lhs <= rhs`` up to the roundoff slack used by every inequality check."""
    return lhs <= rhs + ABS_SLACK + REL_SLACK * abs(rhs)


@dataclass(frozen=True)
class EnergyReport:
    t: float
    l2: float
    h1: float
    h2: float
    w1: float
    w2: float
    expk: float
    flux: float
    sup2: float
    sup2_bound: float
    tail: float
    k: float | None = None

    def row(self) -> list[float]:
        return [getattr(self, c) for c in CSV_COLUMNS]


def energy_report(f, t: float = 0.0, k: float | None = None) -> EnergyReport:
    """Every monitored functional at one instant; ``expk`` is NaN when ``k`` is None."""
    grid = f.grid
    g = _modes(f)
    n = gradient_norms(f)
    l2 = _interior_sum(g**2, grid)
    h1 = l2 + n.ux + n.uy
    h2 = h1 + n.uxx + n.uxy + n.uyy
    u = _values(f)
    tail_mask = grid.x > 0.9 * grid.L
    return EnergyReport(
        t=float(t),
        l2=l2,
        h1=h1,
        h2=h2,
        w1=weighted_l2(f, WeightSpec.poly1()),
        w2=weighted_l2(f, WeightSpec.poly2()),
        expk=float("nan") if k is None else weighted_l2(f, WeightSpec.exp(k)),
        flux=boundary_flux(f),
        sup2=float(np.max(u**2)),
        sup2_bound=2.0 * h2,
        tail=float(np.sum(g[:, tail_mask] ** 2) * grid.dx),
        k=k,
    )
