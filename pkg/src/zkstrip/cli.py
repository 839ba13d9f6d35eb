"""Command-line front end.

Exit codes: 0 success, 1 configuration or gate failure, 2 numerical blow-up.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import scipy.fft

from . import __version__
from . import experiments as ex
from . import functionals as fn
from .dynamics import BlowUpError, ImexStepper, SolverState

EXIT_OK, EXIT_FAIL, EXIT_BLOWUP = 0, 1, 2


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


class Run:
    """Collects outputs and writes the manifest when the command finishes."""

    def __init__(self, command: str, args, config_text: str | None = None, cfg=None):
        self.command = command
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.started = _now()
        self.outputs: dict[str, str] = {}
        self.manifest = {
            "command": command,
            "version": __version__,
            "argv": sys.argv[1:],
            "config_path": getattr(args, "config", None),
            "config_echo": config_text,
            "resolved_config": None if cfg is None else cfg.to_dict(),
            "seed": args.seed,
            "threads": args.threads,
        }

    def path(self, key: str, name: str) -> Path:
        p = self.out / name
        self.outputs[key] = str(p)
        return p

    def finish(self, status: int, **extra) -> int:
        self.manifest.update(extra)
        self.manifest.update(
            started=self.started, finished=_now(), outputs=self.outputs, exit_status=status
        )
        _atomic_write(self.out / "manifest.json", json.dumps(self.manifest, indent=2, default=ex._jsonable) + "\n")
        return status


def _load(args):
    text = Path(args.config).read_text() if Path(args.config).is_file() else None
    cfg = ex.ExperimentConfig.from_json(args.config)
    if args.stride is not None:
        if args.stride < 1:
            raise ex.ConfigError("--stride must be >= 1")
        cfg.stride = args.stride
    return cfg, text


def _fail(message: str, status: int = EXIT_FAIL) -> int:
    print(f"error: {message}", file=sys.stderr)
    return status


def cmd_run(args) -> int:
    try:
        cfg, text = _load(args)
    except ex.ConfigError as exc:
        return _fail(str(exc))
    run = Run("run", args, text, cfg)
    grid, u0, dt = ex.setup(cfg)
    T = cfg.duration()
    monitor = ex.ReportMonitor(cfg.k)
    balance = ex.BalanceMonitor()

    def observe(t, modes):
        balance(t, modes)
        if (len(balance.t) - 1) % cfg.stride == 0:
            monitor(t, modes)

    status, summary = EXIT_OK, {"dt": dt, "T": T, "steps": int(np.ceil(T / dt - 1e-9))}
    try:
        ImexStepper(grid, dt, cfg.nonlinear).evolve(SolverState.initial(u0, dt), T, observe, 1)
    except BlowUpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        status = EXIT_BLOWUP
        summary["blowup_time"] = exc.t
    ex.write_timeseries_csv(run.path("timeseries", "timeseries.csv"), monitor.reports)
    if status == EXIT_OK and balance.l2[0] > 0:
        summary["l2_balance_residual"] = ex.l2_balance_residual(balance)
    summary["Cs2_run"] = max(monitor.sup_bounds)
    summary["final"] = dict(zip(fn.CSV_COLUMNS, monitor.reports[-1].row()))
    ex.write_json(run.path("summary", "summary.json"), summary)
    return run.finish(status)


def _conditions(cfg: ex.ExperimentConfig) -> fn.ConditionReport:
    _, u0, _ = ex.setup(cfg)
    # without a supplied Cs2 the sup bound of the initial datum stands in for the run maximum
    Cs2 = cfg.Cs2 if cfg.Cs2 is not None else fn.sup_bound_check(u0)[1]
    return fn.check_decay_conditions(u0, cfg.k, Cs2)


def cmd_check_data(args) -> int:
    try:
        cfg, _ = _load(args)
    except ex.ConfigError as exc:
        return _fail(str(exc))
    report = _conditions(cfg)
    print(json.dumps(report.to_dict(), indent=2, default=ex._jsonable))
    for gate in report.failed_gates():
        print(f"gate failed: {gate}", file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_verify_inequalities(args) -> int:
    if args.trials < 1:
        return _fail("--trials must be >= 1")
    seed = 0 if args.seed is None else args.seed
    sweep = ex.verify_inequalities(seed, args.trials)
    print(
        f"trials={sweep.trials} seed={seed} worst relative margins: "
        f"steklov={sweep.worst_steklov:.6e} l4={sweep.worst_l4:.6e} "
        f"l8={sweep.worst_l8:.6e} sup={sweep.worst_sup:.6e}"
    )
    for n, name in sweep.failures:
        print(f"trial {n}: {name} inequality violated", file=sys.stderr)
    return EXIT_OK if sweep.passed else EXIT_FAIL


def cmd_fit_decay(args) -> int:
    try:
        cfg, text = _load(args)
    except ex.ConfigError as exc:
        return _fail(str(exc))
    run = Run("fit-decay", args, text, cfg)
    try:
        result = ex.run_decay_experiment(cfg, strict=False)
    except ex.PreconditionError as exc:
        ex.write_json(
            run.path("summary", "summary.json"),
            {"theoretical_rate": cfg.theoretical_rate, "failed_gates": exc.gates},
        )
        return run.finish(_fail(str(exc)))
    except ex.DegenerateSeriesError as exc:
        return run.finish(_fail(str(exc)))
    except BlowUpError as exc:
        return run.finish(_fail(str(exc), EXIT_BLOWUP), blowup_time=exc.t)
    ex.write_timeseries_csv(run.path("timeseries", "timeseries.csv"), result.reports)
    ex.write_json(run.path("summary", "summary.json"), result.summary())
    print(
        f"fitted rate {result.exp_fit.fitted_rate:.6g} (e^kx), {result.h2_fit.fitted_rate:.6g} (H2); "
        f"theoretical {cfg.theoretical_rate:.6g}"
    )
    if not result.rate_ok:
        return run.finish(_fail("fitted decay rate below 0.9 x theoretical"))
    return run.finish(EXIT_OK)


def cmd_converge(args) -> int:
    try:
        modes = [int(m) for m in args.modes.split(",") if m.strip()]
    except ValueError:
        return _fail(f"cannot parse mode list {args.modes!r}")
    if len(modes) < 2:
        return _fail("converge needs at least two mode counts")
    try:
        cfg, text = _load(args)
    except ex.ConfigError as exc:
        return _fail(str(exc))
    run = Run("converge", args, text, cfg)
    try:
        diffs = ex.galerkin_convergence(cfg, modes)
    except ValueError as exc:
        return run.finish(_fail(str(exc)))
    except BlowUpError as exc:
        return run.finish(_fail(str(exc), EXIT_BLOWUP), blowup_time=exc.t)
    ex.write_json(run.path("summary", "summary.json"), {"modes": modes, "differences": diffs})
    print(" ".join(f"{d:.6e}" for d in diffs))
    return run.finish(EXIT_OK)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--threads", type=int, default=1, help="FFT worker threads")
    common.add_argument("--stride", type=int, default=None, help="observer stride (overrides config)")

    parser = argparse.ArgumentParser(prog="zkstrip", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    for name, func, help_ in [
        ("run", cmd_run, "evolve a configuration and write the time series"),
        ("check-data", cmd_check_data, "evaluate the hypothesis gates on the initial datum"),
        ("fit-decay", cmd_fit_decay, "run the decay experiment and fit the rates"),
    ]:
        p = sub.add_parser(name, parents=[common], help=help_)
        p.add_argument("--config", required=True)
        p.set_defaults(func=func)

    p = sub.add_parser("converge", parents=[common], help="Galerkin convergence in the mode count")
    p.add_argument("--config", required=True)
    p.add_argument("--modes", default="8,16,32", help="comma-separated increasing mode counts")
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("verify-inequalities", parents=[common], help="randomized inequality sweep")
    p.add_argument("--trials", type=int, default=1000)
    p.set_defaults(func=cmd_verify_inequalities)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None and args.threads < 1:
        return _fail("--threads must be >= 1")
    with scipy.fft.set_workers(args.threads):
        return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
