"""Time integration of the modal system.

Each sine mode ``g_j(x, t)`` obeys

    g_jt + g_jxxx - lambda_j g_jx + N_j = 0,

where ``N_j`` is the sine coefficient of ``u^2 u_x`` written as ``(u^3)_x / 3``.
The linear part is advanced by Crank-Nicolson, the coupling term by second-order
Adams-Bashforth (explicit Euler on the first step).

x-boundary closures for the interior five-point stencils:

* ``x = 0``: ``u(0) = 0``; the ghost beyond 0 is the quintic extrapolation
  ``u_{-2} = -10 u_0 + 10 u_1 - 5 u_2 + u_3`` (uses ``u_{-1} = u(0) = 0``), which makes
  the first row a one-sided second-order approximation of ``u_xxx``.
* ``x = L``: ``u(L) = 0`` and ``u_x(L) = 0``; the ghost beyond L mirrors the last
  interior node.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .domain import StripGrid
from .spectral import GridField, ModeField, eigenvalues, modes_from_values, values_from_modes

BLOWUP_THRESHOLD = 1e6
CFL_SAFETY = 0.25
CFL_FLOOR = 1e-6

# coefficients of u_0..u_3 in the extrapolated ghost u_{-2}
_LEFT_GHOST = np.array([-10.0, 10.0, -5.0, 1.0])


class SingularMatrixError(RuntimeError):
    pass


class BlowUpError(RuntimeError):
    """Modal coefficients left the admissible range; carries the failure time."""

    def __init__(self, t: float, max_abs: float):
        super().__init__(f"blow-up at t={t:.6g}: max |g| = {max_abs:.3g}")
        self.t = t
        self.max_abs = max_abs


@lru_cache(maxsize=32)
def first_derivative_matrix(grid: StripGrid) -> sp.csr_matrix:
    """Centered ``d/dx`` on interior nodes with ``u(0) = u(L) = 0``."""
    n, h = grid.Nx, grid.dx
    D = sp.diags([-np.ones(n - 1), np.ones(n - 1)], [-1, 1], shape=(n, n), format="lil")
    return (D / (2.0 * h)).tocsr()


@lru_cache(maxsize=32)
def third_derivative_matrix(grid: StripGrid) -> sp.csr_matrix:
    """Five-point ``d^3/dx^3`` with the boundary closures described in the module docstring."""
    n, h = grid.Nx, grid.dx
    D = sp.diags(
        [-np.ones(n - 2), 2.0 * np.ones(n - 1), -2.0 * np.ones(n - 1), np.ones(n - 2)],
        [-2, -1, 1, 2],
        shape=(n, n),
        format="lil",
    )
    # row 0 stencil weight on u_{-2} is -1
    for col, c in enumerate(_LEFT_GHOST):
        D[0, col] -= c
    # row n-1 stencil weight on the mirrored ghost u_{n+1} = u_{n-1} is +1
    D[n - 1, n - 1] += 1.0
    return (D / (2.0 * h**3)).tocsr()


@dataclass(frozen=True, eq=False)
class LinearModeOperator:
    """Discrete ``d^3/dx^3 - lambda_j d/dx`` for one sine mode."""

    j: int
    lam: float
    matrix: sp.csr_matrix

    bandwidth = (2, 3)  # sub/super diagonals; the extra superdiagonal is the x=0 closure row

    def __matmul__(self, g):
        return self.matrix @ g

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()


def linear_operator(j: int, grid: StripGrid, lam: float | None = None) -> LinearModeOperator:
    """Operator for mode ``j``; ``lam`` overrides ``lambda_j`` (e.g. 0 to drop the y-dispersion)."""
    if not 1 <= j <= grid.Ny:
        raise ValueError(f"mode index must lie in 1..{grid.Ny}, got {j}")
    if lam is None:
        lam = float(eigenvalues(grid)[j - 1])
    A = third_derivative_matrix(grid) - lam * first_derivative_matrix(grid)
    return LinearModeOperator(j, float(lam), A.tocsr())


def apply_linear(coeffs: np.ndarray, grid: StripGrid, lambdas: np.ndarray | None = None) -> np.ndarray:
    """``A_j g_j`` for every row of a ``(Ny, Nx)`` coefficient array."""
    if lambdas is None:
        lambdas = eigenvalues(grid)
    D3 = third_derivative_matrix(grid)
    D1 = first_derivative_matrix(grid)
    return (D3 @ coeffs.T).T - lambdas[:, None] * (D1 @ coeffs.T).T


def conservative_cubic_flux(values: np.ndarray, dx: float) -> np.ndarray:
    """``(1/3) d/dx (u^3)`` along axis 0 with zero Dirichlet values at both ends."""
    c = values**3
    out = np.empty_like(c)
    out[1:-1] = c[2:] - c[:-2]
    out[0] = c[1]
    out[-1] = -c[-2]
    return out / (6.0 * dx)


def nonlinear_rhs(f: GridField) -> GridField:
    return GridField(f.grid, conservative_cubic_flux(f.values, f.grid.dx))


def nonlinear_modes(coeffs: np.ndarray, grid: StripGrid) -> np.ndarray:
    """Sine coefficients of ``(u^3)_x / 3`` evaluated on the physical grid."""
    u = values_from_modes(coeffs, grid)
    return modes_from_values(conservative_cubic_flux(u, grid.dx), grid)


def cfl_suggest(grid: StripGrid, umax: float) -> float:
    """Advisory transport-type step bound for the explicit cubic term."""
    if umax < 0:
        raise ValueError("umax must be non-negative")
    return CFL_SAFETY * grid.dx / max(umax**2, CFL_FLOOR)


@dataclass(frozen=True, eq=False)
class SolverState:
    t: float
    modes: ModeField
    dt: float
    prev_nonlinear: ModeField | None = None
    steps: int = 0

    def __post_init__(self):
        if self.t < 0:
            raise ValueError("t must be non-negative")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not np.all(np.isfinite(self.modes.coeffs)):
            raise ValueError("non-finite modal coefficients")

    @property
    def grid(self) -> StripGrid:
        return self.modes.grid

    @classmethod
    def initial(cls, data, dt: float, t: float = 0.0) -> "SolverState":
        """Start from a ``GridField`` or ``ModeField``."""
        if isinstance(data, GridField):
            data = ModeField(data.grid, modes_from_values(data.values, data.grid))
        return cls(t=t, modes=data, dt=dt)


Observer = Callable[[float, ModeField], None]


class ImexStepper:
    """Crank-Nicolson / AB2 stepper with the per-mode factorizations cached.

    All modes are solved together as one block-diagonal sparse system, which is
    equivalent to ``Ny`` independent banded solves.
    """

    def __init__(
        self,
        grid: StripGrid,
        dt: float,
        nonlinear: bool = True,
        lambdas: np.ndarray | None = None,
    ):
        if not dt > 0:
            raise ValueError(f"dt must be positive, got {dt}")
        self.grid = grid
        self.dt = float(dt)
        self.nonlinear = nonlinear
        self.lambdas = eigenvalues(grid) if lambdas is None else np.asarray(lambdas, dtype=float)
        n = grid.Nx
        D3 = third_derivative_matrix(grid)
        D1 = first_derivative_matrix(grid)
        A = sp.kron(sp.identity(grid.Ny), D3) - sp.kron(sp.diags(self.lambdas), D1)
        eye = sp.identity(grid.Ny * n)
        self._explicit = (eye - 0.5 * self.dt * A).tocsr()
        try:
            self._implicit = spla.splu((eye + 0.5 * self.dt * A).tocsc())
        except RuntimeError as exc:
            raise SingularMatrixError(str(exc)) from exc

    def _nonlinear(self, coeffs: np.ndarray) -> np.ndarray:
        return nonlinear_modes(coeffs, self.grid)

    def step(self, state: SolverState) -> SolverState:
        if state.grid != self.grid or state.dt != self.dt:
            raise ValueError("state does not match this stepper's grid and dt")
        g = state.modes.coeffs
        rhs = self._explicit @ g.ravel()
        prev = None
        if self.nonlinear:
            nl = self._nonlinear(g)
            if state.prev_nonlinear is None:
                forcing = nl
            else:
                forcing = 1.5 * nl - 0.5 * state.prev_nonlinear.coeffs
            rhs -= self.dt * forcing.ravel()
            prev = ModeField(self.grid, nl)
        g_new = self._implicit.solve(rhs).reshape(g.shape)
        t_new = state.t + self.dt
        peak = float(np.max(np.abs(g_new))) if g_new.size else 0.0
        if not np.isfinite(peak) or peak > BLOWUP_THRESHOLD:
            raise BlowUpError(t_new, peak)
        return replace(
            state,
            t=t_new,
            modes=ModeField(self.grid, g_new),
            prev_nonlinear=prev,
            steps=state.steps + 1,
        )

    def evolve(
        self,
        state: SolverState,
        T: float,
        observer: Observer | None = None,
        stride: int = 1,
    ) -> SolverState:
        """Advance by duration ``T`` (``ceil(T/dt)`` steps).

        ``observer(t, modes)`` is called on the starting state and after every
        ``stride``-th step.
        """
        if not T > 0:
            raise ValueError(f"T must be positive, got {T}")
        if stride < 1:
            raise ValueError("stride must be >= 1")
        nsteps = int(np.ceil(T / self.dt - 1e-9))
        if observer is not None:
            observer(state.t, state.modes)
        for n in range(1, nsteps + 1):
            state = self.step(state)
            if observer is not None and n % stride == 0:
                observer(state.t, state.modes)
        return state


@lru_cache(maxsize=8)
def _cached_stepper(grid: StripGrid, dt: float, nonlinear: bool) -> ImexStepper:
    return ImexStepper(grid, dt, nonlinear)


def imex_step(state: SolverState, nonlinear: bool = True) -> SolverState:
    return _cached_stepper(state.grid, state.dt, nonlinear).step(state)


def evolve(
    state: SolverState,
    T: float,
    observer: Observer | None = None,
    stride: int = 1,
    nonlinear: bool = True,
) -> SolverState:
    return _cached_stepper(state.grid, state.dt, nonlinear).evolve(state, T, observer, stride)
