"""Dirichlet sine eigenbasis in y and the physical <-> modal transforms.

Basis: ``w_j(y) = sqrt(2/B) sin(j pi y / B)`` with eigenvalue ``lambda_j = (j pi / B)^2``.

Transform convention (type-I DST on the ``Ny`` interior y-nodes):

* forward  ``g_j(x_i) = dy * sum_m u(x_i, y_m) w_j(y_m)``
* inverse  ``u(x_i, y_m) = sum_j g_j(x_i) w_j(y_m)``

``scipy.fft.dst(type=1)`` computes ``2 * sum_m u_m sin(pi (j)(m+1) / (Ny+1))``, so the
forward transform is ``dy * sqrt(2/B) / 2 * dst(u)`` and the inverse is
``sqrt(2/B) / 2 * dst(g)``.  With this scaling the pair is mutually inverse and
Parseval holds exactly: ``sum_j g_j^2 = dy * sum_m u_m^2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft

from .domain import StripGrid


@dataclass(frozen=True, eq=False)
class GridField:
    """Samples ``u(x_i, y_m)`` on the interior grid, shape ``(Nx, Ny)``."""

    grid: StripGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.Nx, self.grid.Ny):
            raise ValueError(
                f"field shape {values.shape} does not match grid ({self.grid.Nx}, {self.grid.Ny})"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("field contains NaN or Inf")
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, grid: StripGrid) -> "GridField":
        return cls(grid, np.zeros((grid.Nx, grid.Ny)))

    @classmethod
    def from_function(cls, grid: StripGrid, fn) -> "GridField":
        X, Y = grid.mesh()
        return cls(grid, np.broadcast_to(fn(X, Y), X.shape).copy())

    def __neg__(self):
        return GridField(self.grid, -self.values)

    def __mul__(self, alpha):
        return GridField(self.grid, alpha * self.values)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class ModeField:
    """Galerkin profiles; row ``j - 1`` holds ``g_j(x_i)``, shape ``(Ny, Nx)``."""

    grid: StripGrid
    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=float)
        if coeffs.shape != (self.grid.Ny, self.grid.Nx):
            raise ValueError(
                f"mode array shape {coeffs.shape} does not match ({self.grid.Ny}, {self.grid.Nx})"
            )
        object.__setattr__(self, "coeffs", coeffs)

    @classmethod
    def zeros(cls, grid: StripGrid) -> "ModeField":
        return cls(grid, np.zeros((grid.Ny, grid.Nx)))

    def l2_squared(self) -> float:
        return float(np.sum(self.coeffs**2) * self.grid.dx)


def eigenvalue(j: int, B: float) -> float:
    if j < 1 or B <= 0:
        raise ValueError(f"need j >= 1 and B > 0, got j={j}, B={B}")
    return (j * np.pi / B) ** 2


def eigenpair(j: int, B: float):
    """``(lambda_j, w_j)`` where ``w_j`` is a vectorized callable of y."""
    lam = eigenvalue(j, B)
    scale = np.sqrt(2.0 / B)
    freq = j * np.pi / B

    def w(y):
        return scale * np.sin(freq * np.asarray(y, dtype=float))

    return lam, w


def mode_numbers(grid: StripGrid) -> np.ndarray:
    return np.arange(1, grid.Ny + 1)


def eigenvalues(grid: StripGrid) -> np.ndarray:
    return (mode_numbers(grid) * np.pi / grid.B) ** 2


def basis_matrix(grid: StripGrid) -> np.ndarray:
    """``W[j-1, m] = w_j(y_m)``."""
    j = mode_numbers(grid)[:, None]
    return np.sqrt(2.0 / grid.B) * np.sin(j * np.pi * grid.y[None, :] / grid.B)


def _forward(values: np.ndarray, grid: StripGrid) -> np.ndarray:
    # values (..., Ny) -> coefficients (..., Ny)
    return scipy.fft.dst(values, type=1, axis=-1) * (grid.dy * np.sqrt(2.0 / grid.B) / 2.0)


def _inverse(coeffs: np.ndarray, grid: StripGrid) -> np.ndarray:
    return scipy.fft.dst(coeffs, type=1, axis=-1) * (np.sqrt(2.0 / grid.B) / 2.0)


def modes_from_values(values: np.ndarray, grid: StripGrid) -> np.ndarray:
    """Raw-array forward transform: ``(Nx, Ny)`` samples -> ``(Ny, Nx)`` coefficients."""
    return _forward(values, grid).T


def values_from_modes(coeffs: np.ndarray, grid: StripGrid) -> np.ndarray:
    """Raw-array inverse transform: ``(Ny, Nx)`` coefficients -> ``(Nx, Ny)`` samples."""
    return _inverse(coeffs.T, grid)


def to_modes(f: GridField) -> ModeField:
    return ModeField(f.grid, modes_from_values(f.values, f.grid))


def to_physical(m: ModeField) -> GridField:
    return GridField(m.grid, values_from_modes(m.coeffs, m.grid))
