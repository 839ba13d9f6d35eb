"""Verification runs: decay-rate fits, L2 balance, Galerkin convergence,
continuous dependence and the dense-exponential check of the linear stepper."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg

from . import functionals as fn
from .domain import StripGrid, build_grid
from .dynamics import ImexStepper, SolverState, cfl_suggest, linear_operator
from .spectral import GridField, ModeField, values_from_modes

FIT_FLOOR = 1e-12
DECAY_FACTOR = 0.9
# dt <= DISPERSIVE_DT_FACTOR * dx keeps Crank-Nicolson accurate for the resolved Airy waves
DISPERSIVE_DT_FACTOR = 0.1
FAMILIES = ("gauss-sine", "gauss2d", "zero")


class ConfigError(ValueError):
    pass


class PreconditionError(RuntimeError):
    def __init__(self, message: str, gates: Sequence[str] = ()):
        super().__init__(message)
        self.gates = list(gates)


class DegenerateSeriesError(ValueError):
    pass


class DecayRateError(AssertionError):
    pass


@dataclass
class ExperimentConfig:
    B: float = math.pi
    L: float | None = None
    Nx: int = 512
    Ny: int = 32
    family: str = "gauss-sine"
    amplitude: float = 0.005
    center: float = 4.0
    width: float = 1.5
    mode: int = 1
    width_y: float | None = None
    l2_norm: float | None = None
    dt: float | None = None
    T: float | None = None
    k: float = 0.2
    stride: int = 10
    nonlinear: bool = True
    Cs2: float | None = None

    def __post_init__(self):
        if self.L is None:
            self.L = 10.0 * self.B
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown initial-data family {self.family!r}; expected one of {FAMILIES}")
        for name in ("B", "L", "width", "k"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and value > 0):
                raise ConfigError(f"{name} must be positive, got {value!r}")
        for name in ("dt", "T", "width_y"):
            value = getattr(self, name)
            if value is not None and not (isinstance(value, (int, float)) and value > 0):
                raise ConfigError(f"{name} must be positive, got {value!r}")
        if self.l2_norm is not None and self.l2_norm < 0:
            raise ConfigError("l2_norm must be non-negative")
        if self.stride < 1:
            raise ConfigError("stride must be >= 1")
        if not 1 <= self.mode <= self.Ny:
            raise ConfigError(f"mode must lie in 1..Ny, got {self.mode}")
        try:
            self.grid()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)

    def grid(self, Ny: int | None = None) -> StripGrid:
        return build_grid(self.B, self.L, self.Nx, self.Ny if Ny is None else Ny)

    @property
    def theoretical_rate(self) -> float:
        return fn.decay_rate(self.k, self.B)

    def duration(self) -> float:
        return self.T if self.T is not None else 10.0 / self.theoretical_rate


def x_profile(x: np.ndarray, center: float, width: float) -> np.ndarray:
    """Gaussian bump with its trace at x = 0 removed by a Gaussian taper."""
    return np.exp(-((x - center) ** 2) / width**2) - np.exp(-(center**2) / width**2) * np.exp(
        -(x**2) / width**2
    )


def initial_data(cfg: ExperimentConfig, grid: StripGrid | None = None) -> GridField:
    grid = cfg.grid() if grid is None else grid
    X, Y = grid.mesh()
    if cfg.family == "zero":
        return GridField.zeros(grid)
    phi = x_profile(X, cfg.center, cfg.width)
    if cfg.family == "gauss-sine":
        u = phi * np.sin(cfg.mode * np.pi * Y / grid.B)
    else:
        sy = cfg.width_y if cfg.width_y is not None else grid.B / 6
        u = phi * np.exp(-((Y - grid.B / 2) ** 2) / sy**2) * np.sin(np.pi * Y / grid.B)
    if cfg.l2_norm is not None:
        norm = math.sqrt(fn.l2_squared(GridField(grid, u)))
        return GridField(grid, u * (cfg.l2_norm / norm))
    return GridField(grid, cfg.amplitude * u)


def default_dt(grid: StripGrid, u0: GridField) -> float:
    umax = float(np.max(np.abs(u0.values))) if u0.values.size else 0.0
    return min(cfl_suggest(grid, umax), DISPERSIVE_DT_FACTOR * grid.dx)


def setup(cfg: ExperimentConfig, Ny: int | None = None):
    """``(grid, u0, dt)`` for a configuration."""
    grid = cfg.grid(Ny)
    u0 = initial_data(cfg, grid)
    dt = cfg.dt if cfg.dt is not None else default_dt(grid, u0)
    return grid, u0, dt


# -- decay fitting -----------------------------------------------------------


@dataclass
class DecayFit:
    series: list
    fitted_rate: float
    r_squared: float
    theoretical_rate: float = float("nan")
    n_points: int = 0

    @property
    def passes(self) -> bool:
        return self.fitted_rate >= DECAY_FACTOR * self.theoretical_rate

    def summary(self) -> dict:
        return {
            "fitted_rate": self.fitted_rate,
            "r_squared": self.r_squared,
            "theoretical_rate": self.theoretical_rate,
            "n_points": self.n_points,
        }


def fit_decay_rate(series: Iterable, theoretical_rate: float = float("nan")) -> DecayFit:
    """Least-squares slope of ``log(value)`` against ``t``; the rate is minus the slope.

    Only points with ``value > 1e-12 * value(0)`` enter the fit.
    """
    data = [(float(t), float(v)) for t, v in series]
    if len(data) < 5:
        raise DegenerateSeriesError(f"need at least 5 points, got {len(data)}")
    t = np.array([p[0] for p in data])
    v = np.array([p[1] for p in data])
    if not v[0] > 0:
        raise DegenerateSeriesError("series must start with a positive value")
    keep = v > FIT_FLOOR * v[0]
    if keep.sum() < 5:
        raise DegenerateSeriesError("fewer than 5 points above the fit floor")
    t, logv = t[keep], np.log(v[keep])
    slope, intercept = np.polyfit(t, logv, 1)
    resid = logv - (slope * t + intercept)
    ss_tot = float(np.sum((logv - logv.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    rate = -float(slope)
    if ss_tot == 0.0:
        rate = 0.0
    return DecayFit(data, rate, r2, theoretical_rate, int(keep.sum()))


# -- trajectory monitors ----------------------------------------------------------


class BalanceMonitor:
    """Observer recording ``||u||^2`` and the x = 0 flux directly from the modes."""

    def __init__(self):
        self.t: list[float] = []
        self.l2: list[float] = []
        self.flux: list[float] = []

    def __call__(self, t: float, modes: ModeField):
        g = modes.coeffs
        self.t.append(t)
        self.l2.append(float(np.sum(g**2) * modes.grid.dx))
        self.flux.append(float(np.sum(fn.trace_slopes(g, modes.grid.dx) ** 2)))


class ReportMonitor:
    """Observer computing a full ``EnergyReport`` and the sup-bound per snapshot."""

    def __init__(self, k: float | None = None):
        self.k = k
        self.reports: list[fn.EnergyReport] = []
        self.sup_bounds: list[float] = []

    def __call__(self, t: float, modes: ModeField):
        self.reports.append(fn.energy_report(modes, t, self.k))
        self.sup_bounds.append(fn.sup_bound_check(modes)[1])


def l2_balance_residual(records) -> float:
    """``max_t |l2(t) + int_0^t flux - l2(0)| / l2(0)``, flux integrated by the trapezoid rule.

    ``records`` is a ``BalanceMonitor`` or a sequence of objects with ``t``, ``l2`` and
    ``flux`` attributes (e.g. ``EnergyReport``).
    """
    if isinstance(records, BalanceMonitor):
        t, l2, flux = (np.asarray(a) for a in (records.t, records.l2, records.flux))
    else:
        records = list(records)
        t = np.array([r.t for r in records])
        l2 = np.array([r.l2 for r in records])
        flux = np.array([r.flux for r in records])
    if len(l2) == 0 or l2[0] == 0.0:
        raise ValueError("L2 balance residual needs nonzero initial data")
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (flux[1:] + flux[:-1]) * np.diff(t))])
    return float(np.max(np.abs(l2 + cum - l2[0])) / l2[0])


def run_l2_balance(cfg: ExperimentConfig, T: float | None = None) -> float:
    grid, u0, dt = setup(cfg)
    if fn.l2_squared(u0) == 0.0:
        raise ValueError("L2 balance residual needs nonzero initial data")
    monitor = BalanceMonitor()
    ImexStepper(grid, dt, cfg.nonlinear).evolve(
        SolverState.initial(u0, dt), cfg.duration() if T is None else T, monitor, 1
    )
    return l2_balance_residual(monitor)


# -- decay experiment ---------------------------------------------------------


@dataclass
class DecayExperiment:
    config: ExperimentConfig
    conditions: fn.ConditionReport
    reports: list
    exp_fit: DecayFit
    h2_fit: DecayFit
    Cs2: float
    w1_max_increase: float
    balance_residual: float

    @property
    def rate_ok(self) -> bool:
        return self.exp_fit.passes

    def summary(self) -> dict:
        return {
            "theoretical_rate": self.config.theoretical_rate,
            "exp_fit": self.exp_fit.summary(),
            "h2_fit": self.h2_fit.summary(),
            "Cs2": self.Cs2,
            "w1_max_relative_increase": self.w1_max_increase,
            "l2_balance_residual": self.balance_residual,
            "conditions": self.conditions.to_dict(),
            "rate_ok": self.rate_ok,
        }


def _require(report: fn.ConditionReport) -> None:
    failed = report.failed_gates()
    if failed:
        raise PreconditionError("initial data fails: " + "; ".join(failed), failed)


def run_decay_experiment(cfg: ExperimentConfig, strict: bool = True) -> DecayExperiment:
    """Evolve passing data and fit the decay of ``(e^{kx}, u^2)`` and ``||u||_{H^2}^2``.

    The smallness and k gates are checked before the run.  Unless ``cfg.Cs2`` is given,
    ``C_s^2`` is the maximum of ``2 (||u||_{H^1}^2 + ||u_xy||^2)`` over the run itself and
    its gate is checked afterwards.
    """
    grid, u0, dt = setup(cfg)
    if fn.l2_squared(u0) == 0.0:
        raise DegenerateSeriesError("zero initial data has no decay to fit")
    # with Cs2 unknown the sup-bound gate is deferred until after the run
    _require(fn.check_decay_conditions(u0, cfg.k, cfg.Cs2 if cfg.Cs2 is not None else 0.0))

    monitor = ReportMonitor(cfg.k)
    balance = BalanceMonitor()

    def observe(t, modes):
        balance(t, modes)
        if (len(balance.t) - 1) % cfg.stride == 0:
            monitor(t, modes)

    ImexStepper(grid, dt, cfg.nonlinear).evolve(SolverState.initial(u0, dt), cfg.duration(), observe, 1)

    Cs2 = cfg.Cs2 if cfg.Cs2 is not None else max(monitor.sup_bounds)
    conditions = fn.check_decay_conditions(u0, cfg.k, Cs2)
    _require(conditions)

    rate = cfg.theoretical_rate
    reports = monitor.reports
    exp_fit = fit_decay_rate([(r.t, r.expk) for r in reports], rate)
    h2_fit = fit_decay_rate([(r.t, r.h2) for r in reports], rate)
    w1 = np.array([r.w1 for r in reports])
    increase = float(np.max(np.diff(w1), initial=0.0) / w1[0])
    result = DecayExperiment(
        cfg, conditions, reports, exp_fit, h2_fit, Cs2, increase, l2_balance_residual(balance)
    )
    if strict and not result.rate_ok:
        raise DecayRateError(
            f"fitted decay rate {exp_fit.fitted_rate:.4g} < {DECAY_FACTOR} x theoretical {rate:.4g}"
        )
    return result


# -- Galerkin convergence ------------------------------------------------------


def galerkin_convergence(
    cfg: ExperimentConfig, mode_counts: Sequence[int], T: float | None = None
) -> list[float]:
    """``||u^{N_{i+1}} - u^{N_i}||`` at time T for increasing mode counts on one x-grid.

    The larger run is split into its first ``N_i`` modes, compared coefficient-wise,
    plus the complement, which counts in full.
    """
    counts = list(mode_counts)
    if len(counts) < 2:
        raise ValueError("need at least two mode counts")
    if any(b <= a for a, b in zip(counts, counts[1:])):
        raise ValueError("mode counts must be strictly increasing")
    T = cfg.duration() if T is None else T
    dt = cfg.dt
    if dt is None:
        grid, u0, _ = setup(cfg, counts[-1])
        dt = default_dt(grid, u0)
    finals = []
    for N in counts:
        grid = cfg.grid(N)
        u0 = initial_data(cfg, grid)
        state = ImexStepper(grid, dt, cfg.nonlinear).evolve(SolverState.initial(u0, dt), T)
        finals.append(state.modes.coeffs)
    dx = cfg.grid().dx
    diffs = []
    for small, large in zip(finals, finals[1:]):
        n = small.shape[0]
        d2 = np.sum((large[:n] - small) ** 2) + np.sum(large[n:] ** 2)
        diffs.append(float(np.sqrt(d2 * dx)))
    return diffs


# -- continuous dependence -----------------------------------------------------------


@dataclass
class DependenceResult:
    delta: float
    factor: float
    identical: bool
    M: float
    gronwall_rate: float
    gronwall_bound: float


def perturbation_direction(cfg: ExperimentConfig, grid: StripGrid) -> GridField:
    """Unit-norm perturbation: the base bump shifted by one width, in mode 2."""
    X, Y = grid.mesh()
    u = x_profile(X, cfg.center + cfg.width, cfg.width) * np.sin(2 * np.pi * Y / grid.B)
    return GridField(grid, u / math.sqrt(fn.l2_squared(GridField(grid, u))))


def continuous_dependence(cfg: ExperimentConfig, delta: float, T: float | None = None) -> DependenceResult:
    """``sup_t ||u_1 - u_2|| / delta`` for data ``u0`` and ``u0 + delta * psi``.

    Also reports the Gronwall bound ``sqrt(1+L) exp(C T / 2)`` with
    ``C = 2M + M^2 (1+L) / 3`` and ``M = sup |u1^2 + u1 u2 + u2^2|`` along the run.
    """
    if delta < 0:
        raise ValueError("delta must be non-negative")
    grid, u0, dt = setup(cfg)
    u1 = GridField(grid, u0.values + delta * perturbation_direction(cfg, grid).values)
    for data in (u0, u1):
        _require(fn.check_smallness(data))
    T = cfg.duration() if T is None else T
    stepper = ImexStepper(grid, dt, cfg.nonlinear)
    traj = ([], [])

    for data, store in zip((u0, u1), traj):
        stepper.evolve(SolverState.initial(data, dt), T, lambda t, m, s=store: s.append(m.coeffs), cfg.stride)

    identical = all(np.array_equal(a, b) for a, b in zip(*traj))
    sup_diff = max(float(np.sqrt(np.sum((a - b) ** 2) * grid.dx)) for a, b in zip(*traj))
    M = 0.0
    for a, b in zip(*traj):
        v1, v2 = values_from_modes(a, grid), values_from_modes(b, grid)
        M = max(M, float(np.max(np.abs(v1**2 + v1 * v2 + v2**2))))
    C = 2 * M + M**2 * (1 + grid.L) / 3
    factor = 0.0 if delta == 0 else sup_diff / delta
    return DependenceResult(delta, factor, identical, M, C, math.sqrt(1 + grid.L) * math.exp(C * T / 2))


# -- linear oracle ------------------------------------------------------------


def linear_oracle_compare(
    j: int,
    grid: StripGrid,
    T: float,
    dt: float,
    profile: np.ndarray | None = None,
    lam: float | None = None,
) -> float:
    """Relative L2 error of the linear Crank-Nicolson evolution of mode ``j`` against
    ``expm(-T A_j) g0`` on the same discrete operator."""
    if grid.Nx > 64:
        raise ValueError("dense oracle limited to Nx <= 64")
    if T < 0:
        raise ValueError("T must be non-negative")
    op = linear_operator(j, grid, lam)
    if profile is None:
        profile = np.exp(-((grid.x - grid.L / 2) ** 2) / (grid.L / 8) ** 2)
    profile = np.asarray(profile, dtype=float)
    if T == 0:
        return 0.0
    exact = scipy.linalg.expm(-T * op.dense()) @ profile
    coeffs = np.zeros((grid.Ny, grid.Nx))
    coeffs[j - 1] = profile
    lambdas = np.zeros(grid.Ny)
    lambdas[j - 1] = op.lam
    stepper = ImexStepper(grid, dt, nonlinear=False, lambdas=lambdas)
    state = stepper.evolve(SolverState(0.0, ModeField(grid, coeffs), dt), T)
    approx = state.modes.coeffs[j - 1]
    return float(np.linalg.norm(approx - exact) / np.linalg.norm(exact))


# -- output -------------------------------------------------------------------------


def write_timeseries_csv(path, reports: Sequence[fn.EnergyReport]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(fn.CSV_COLUMNS)
        for r in reports:
            writer.writerow([repr(float(v)) for v in r.row()])


def write_json(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


# -- randomized inequality sweep -------------------------------------------------


def random_smooth_field(grid: StripGrid, rng: np.random.Generator) -> GridField:
    """A smooth field vanishing on the boundary: Gaussian bumps under a sine envelope,
    or a random sine series with decaying coefficients, at a random overall scale."""
    X, Y = grid.mesh()
    if rng.random() < 0.5:
        u = np.zeros_like(X)
        for _ in range(rng.integers(1, 5)):
            cx = rng.uniform(0.05, 0.95) * grid.L
            cy = rng.uniform(0.1, 0.9) * grid.B
            wx = rng.uniform(0.3, 2.0)
            wy = rng.uniform(0.3, 1.0)
            u += rng.normal() * np.exp(-((X - cx) ** 2) / wx**2 - ((Y - cy) ** 2) / wy**2)
        u *= np.sin(np.pi * X / grid.L) * np.sin(np.pi * Y / grid.B)
    else:
        P, Q = rng.integers(1, 13), rng.integers(1, 7)
        p = np.arange(1, P + 1)[:, None]
        q = np.arange(1, Q + 1)[None, :]
        c = rng.normal(size=(P, Q)) / (1.0 + p**2 + q**2)
        sx = np.sin(np.pi * grid.x[:, None] * p.ravel()[None, :] / grid.L)
        sy = np.sin(np.pi * grid.y[:, None] * q.ravel()[None, :] / grid.B)
        u = sx @ c @ sy.T
    return GridField(grid, u * 10.0 ** rng.uniform(-3, 1))


@dataclass
class InequalitySweep:
    trials: int
    seed: int
    worst_steklov: float
    worst_l4: float
    worst_l8: float
    worst_sup: float
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def summary(self) -> dict:
        d = asdict(self)
        d["pass"] = self.passed
        return d


def verify_inequalities(
    seed: int, trials: int, grid: StripGrid | None = None
) -> InequalitySweep:
    """Steklov, both interpolation inequalities and the sup bound on random fields.

    Worst margins are reported relative to the right-hand sides (the Steklov margin
    relative to ``pi^2 / B^2``).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    grid = build_grid(math.pi, 10.0, 256, 32) if grid is None else grid
    rng = np.random.default_rng(seed)
    floor = math.pi**2 / grid.B**2
    worst = dict(steklov=math.inf, l4=math.inf, l8=math.inf, sup=math.inf)
    failures = []
    for n in range(trials):
        f = random_smooth_field(grid, rng)
        ratio = fn.steklov_check(f)
        inter = fn.interpolation_check(f)
        sup2, bound = fn.sup_bound_check(f)
        worst["steklov"] = min(worst["steklov"], (ratio - floor) / floor)
        worst["l4"] = min(worst["l4"], inter.l4_margin / inter.l4_rhs)
        worst["l8"] = min(worst["l8"], inter.l8_margin / inter.l8_rhs)
        worst["sup"] = min(worst["sup"], (bound - sup2) / bound)
        if ratio < floor - fn.ABS_SLACK:
            failures.append((n, "steklov"))
        if inter.l4_margin < -fn.REL_SLACK * inter.l4_rhs:
            failures.append((n, "l4"))
        if inter.l8_margin < -fn.REL_SLACK * inter.l8_rhs:
            failures.append((n, "l8"))
        if sup2 > bound + fn.ABS_SLACK:
            failures.append((n, "sup"))
    return InequalitySweep(trials, seed, worst["steklov"], worst["l4"], worst["l8"], worst["sup"], failures)
