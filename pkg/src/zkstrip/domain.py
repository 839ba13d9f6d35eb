"""Truncated half-strip geometry and the spatial weights used by the energy functionals.

The half-strip ``{x > 0, 0 < y < B}`` is cut at ``x = L``.  Both directions use
uniform grids of interior nodes only; the homogeneous Dirichlet data on the
boundary is implicit and never stored.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

# exp(700) is still finite in double precision, exp(710) is not
MAX_EXP_ARGUMENT = 700.0


class InvalidDimensionError(ValueError):
    """Raised when grid dimensions are out of range."""


class WeightOverflowError(OverflowError):
    """Raised when an exponential weight cannot be tabulated in double precision."""


@dataclass(frozen=True)
class StripGrid:
    """Uniform interior grid on ``(0, L) x (0, B)``.

    ``Nx`` interior x-nodes at ``(i + 1) * dx`` and ``Ny`` interior y-nodes at
    ``(m + 1) * dy``.  ``Ny`` is also the number of Galerkin sine modes.
    """

    B: float
    L: float
    Nx: int
    Ny: int

    def __post_init__(self):
        if not (np.isfinite(self.B) and self.B > 0):
            raise InvalidDimensionError(f"strip width B must be positive, got {self.B}")
        if not (np.isfinite(self.L) and self.L > 0):
            raise InvalidDimensionError(f"truncation length L must be positive, got {self.L}")
        if int(self.Nx) != self.Nx or self.Nx < 8:
            raise InvalidDimensionError(f"Nx must be an integer >= 8, got {self.Nx}")
        if int(self.Ny) != self.Ny or self.Ny < 2:
            raise InvalidDimensionError(f"Ny must be an integer >= 2, got {self.Ny}")
        object.__setattr__(self, "Nx", int(self.Nx))
        object.__setattr__(self, "Ny", int(self.Ny))

    @property
    def dx(self) -> float:
        return self.L / (self.Nx + 1)

    @property
    def dy(self) -> float:
        return self.B / (self.Ny + 1)

    @property
    def n_modes(self) -> int:
        return self.Ny

    @cached_property
    def x(self) -> np.ndarray:
        return self.dx * np.arange(1, self.Nx + 1)

    @cached_property
    def y(self) -> np.ndarray:
        return self.dy * np.arange(1, self.Ny + 1)

    @cached_property
    def x_full(self) -> np.ndarray:
        """x-nodes including both boundary points 0 and L."""
        return self.dx * np.arange(self.Nx + 2)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """``(X, Y)`` arrays of shape ``(Nx, Ny)``."""
        return np.meshgrid(self.x, self.y, indexing="ij")


def build_grid(B: float, L: float, Nx: int, Ny: int) -> StripGrid:
    return StripGrid(float(B), float(L), Nx, Ny)


@dataclass(frozen=True)
class WeightSpec:
    """Spatial weight in x: ``unit``, ``poly1`` = 1+x, ``poly2`` = (1+x)^2 or ``exp`` = e^(kx)."""

    kind: str = "unit"
    k: float | None = None

    KINDS = ("unit", "poly1", "poly2", "exp")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown weight kind {self.kind!r}; expected one of {self.KINDS}")
        if self.kind == "exp":
            if self.k is None or not np.isfinite(self.k) or self.k <= 0:
                raise ValueError(f"exponential weight needs k > 0, got {self.k}")

    @classmethod
    def unit(cls) -> "WeightSpec":
        return cls("unit")

    @classmethod
    def poly1(cls) -> "WeightSpec":
        return cls("poly1")

    @classmethod
    def poly2(cls) -> "WeightSpec":
        return cls("poly2")

    @classmethod
    def exp(cls, k: float) -> "WeightSpec":
        return cls("exp", float(k))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "unit":
            return np.ones_like(x)
        if self.kind == "poly1":
            return 1.0 + x
        if self.kind == "poly2":
            return (1.0 + x) ** 2
        return np.exp(self.k * x)


def _check_exp_range(w: WeightSpec, xmax: float) -> None:
    if w.kind == "exp" and w.k * xmax > MAX_EXP_ARGUMENT:
        raise WeightOverflowError(
            f"e^(kx) with k={w.k} overflows on x <= {xmax} (k*L must be <= {MAX_EXP_ARGUMENT})"
        )


def weight_table(grid: StripGrid, w: WeightSpec) -> np.ndarray:
    """Weight sampled at the ``Nx`` interior x-nodes."""
    _check_exp_range(w, grid.L)
    return w(grid.x)


def weight_table_full(grid: StripGrid, w: WeightSpec) -> np.ndarray:
    """Weight sampled at all ``Nx + 2`` x-nodes, boundaries included."""
    _check_exp_range(w, grid.L)
    return w(grid.x_full)
