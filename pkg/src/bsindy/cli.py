"""Command-line front end: ``bsindy <subcommand> ...``.

Every run is described by a JSON config (or flags for the simple subcommands); flags given
explicitly override config scalars. Usage errors exit with 2, runtime failures with 1.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import bench
from .active import run_assimilation, write_history
from .derivatives import build_operators, make_stencil
from .dynamics import (BUILTINS, DEFAULT_X0, add_noise, builtin, load_csv, save_csv, simulate,
                       true_coefficients)
from .regression import FitConfig, Problem, fit

log = logging.getLogger("bsindy")


class ConfigError(ValueError):
    pass


@dataclass
class DataFitConfig:
    """Fit of one CSV dataset; ``sigma`` may be replaced by an evidence sweep over ``sigma_grid``."""

    data: str
    sigma: float | None = None
    sigma_grid: dict | list | None = None  # list, or {"start", "stop", "step"}
    derivative: dict = field(default_factory=lambda: {"scheme": "fd", "order": 8})
    prior_variance: float = 1e2
    strategy: str = "bsindy"
    stls_lambda: float = 0.1
    max_degree: int = 3
    digits: int = 2

    def grid(self) -> list[float]:
        g = self.sigma_grid
        if isinstance(g, dict):
            n = int(round((g["stop"] - g["start"]) / g["step"])) + 1
            return [round(g["start"] + k * g["step"], 12) for k in range(n)]
        return [float(s) for s in g]


@dataclass
class ActiveConfig:
    system: str = "van_der_pol"
    t_end: float = 12.0
    n_samples: int = 240
    sigma: float = 0.1
    derivative: dict = field(default_factory=lambda: {"scheme": "fd", "order": 8})
    prior_variance: float = 1e2
    max_degree: int = 3
    seed: int = 0
    k0: int | None = None
    max_points: int | None = None
    order: str = "entropy"


def _load_dataclass(cls, path, overrides: dict | None = None):
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    names = {f.name for f in fields(cls)}
    extra = set(data) - names
    if extra:
        raise ConfigError(f"{path}: unknown keys {sorted(extra)}")
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return cls(**data), path.parent


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --- subcommands ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    params = dict(_parse_param(p) for p in args.param)
    system = builtin(args.system, **params)
    x0 = args.x0 if args.x0 else DEFAULT_X0[args.system]
    ts = simulate(system, x0, args.t1, args.dt, substeps=args.substeps, t0=args.t0)
    if args.sigma > 0:
        ts = add_noise(ts, args.sigma, args.seed)
    if args.output == "-":
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(["t"] + [f"x{i + 1}" for i in range(ts.dim)])
        for ti, row in zip(ts.t, ts.X):
            w.writerow([repr(float(ti))] + [repr(float(v)) for v in row])
    else:
        save_csv(ts, args.output)
        print(f"wrote {ts.n_samples} rows to {args.output}")
    return 0


def _parse_param(text: str):
    key, sep, value = text.partition("=")
    if not sep:
        raise ConfigError(f"--param expects key=value, got {text!r}")
    return key, float(value)


def _data_problem(cfg: DataFitConfig, base: Path, sigma: float) -> Problem:
    ts = load_csv(base / cfg.data).with_sigma(sigma)
    ops = build_operators(make_stencil(dt=ts.dt, **cfg.derivative), ts.n_samples)
    return Problem.from_timeseries(ts, ops, cfg.max_degree)


def _resolve_sigma(cfg: DataFitConfig, base: Path):
    if cfg.sigma is not None:
        return cfg.sigma, None
    if cfg.sigma_grid is None:
        raise ConfigError("config needs either 'sigma' or 'sigma_grid'")
    ts = load_csv(base / cfg.data)
    fcfg = FitConfig.from_prior_variance(cfg.prior_variance)
    return bench.evidence_sweep_sigma(ts, cfg.grid(), fcfg, cfg.derivative, cfg.max_degree)


def cmd_fit(args) -> int:
    cfg, base = _load_dataclass(DataFitConfig, args.config,
                                {"sigma": args.sigma, "strategy": args.strategy})
    sigma, curve = _resolve_sigma(cfg, base)
    if curve is not None:
        print(f"sigma_x = {sigma:g} (evidence maximum over {len(curve)} grid points)")
    problem = _data_problem(cfg, base, sigma)
    fcfg = FitConfig.from_prior_variance(cfg.prior_variance, stls_lambda=cfg.stls_lambda)
    model = fit(problem, fcfg, cfg.strategy)
    for line in model.equations(cfg.digits):
        print(line)
    if args.out:
        out = _out_dir(args)
        doc = dict(model.to_dict(), sigma_x=sigma, config=asdict(cfg))
        (out / "model.json").write_text(json.dumps(doc, indent=2))
    return 0


def cmd_sigma_sweep(args) -> int:
    cfg, base = _load_dataclass(DataFitConfig, args.config)
    if cfg.sigma_grid is None:
        raise ConfigError("sigma-sweep needs 'sigma_grid' in the config")
    ts = load_csv(base / cfg.data)
    fcfg = FitConfig.from_prior_variance(cfg.prior_variance)
    best, curve = bench.evidence_sweep_sigma(ts, cfg.grid(), fcfg, cfg.derivative, cfg.max_degree)
    print(f"sigma_best = {best:g}")
    if args.out:
        with (_out_dir(args) / "sigma_sweep.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["sigma", "log_evidence"])
            for s, j in curve:
                w.writerow([repr(s), repr(j)])
    return 0


def cmd_sweep(args) -> int:
    try:
        cfg = bench.SweepConfig.from_json(args.config)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {args.config}") from None
    if args.trials is not None:
        cfg.trials = args.trials
    if args.seed is not None:
        cfg.seed_base = args.seed
    report = bench.run_sweep(cfg)
    paths = report.write(args.out, args.stem)
    for c in report.cells:
        print(f"{c.strategy:12s} sigma={c.sigma:<8g} N={c.n_samples:<5d} "
              f"success={c.success_rate:.3f} [{c.ci_low:.3f}, {c.ci_high:.3f}]")
    print(f"report: {paths['csv']}")
    return 0


def cmd_active(args) -> int:
    cfg, _ = _load_dataclass(ActiveConfig, args.config, {"seed": args.seed, "order": args.order})
    system = builtin(cfg.system)
    dt = cfg.t_end / cfg.n_samples
    clean = simulate(system, DEFAULT_X0[cfg.system], cfg.t_end, dt, n_samples=cfg.n_samples)
    ts = add_noise(clean, cfg.sigma, (cfg.seed,))
    ops = build_operators(make_stencil(dt=dt, **cfg.derivative), cfg.n_samples)
    pool = Problem.from_timeseries(ts, ops, cfg.max_degree)
    W = true_coefficients(system, pool.terms)
    target = [tuple(np.flatnonzero(W[:, d])) for d in range(W.shape[1])]
    state = run_assimilation(pool, FitConfig.from_prior_variance(cfg.prior_variance), k0=cfg.k0,
                             max_points=cfg.max_points, target_supports=target, order=cfg.order,
                             seed=(cfg.seed, 1))
    out = _out_dir(args)
    write_history(state, out / "history.csv")
    got = state.recovered_at
    print(f"pool {pool.n_rows} rows; full support recovered at "
          f"{'never' if got is None else got} points")
    return 0


def cmd_deriv_compare(args) -> int:
    schemes = {"fd": {"scheme": "fd", "order": args.order},
               "weak": {"scheme": "weak", "points": args.points, "p": args.p}}
    out = _out_dir(args)
    rows = bench.fd_vs_weak_report(args.system, args.sigma, args.dt, schemes, t_end=args.t1,
                                   seed=args.seed, path=out / "deriv_compare.csv")
    for r in rows:
        print(f"{r.scheme:5s} dt={r.dt:<7g} rms={r.rms_error:.4g} spike_bias={r.spike_bias:.4g}")
    return 0


# --- parser --------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bsindy", description="Sparse Bayesian identification of ODEs.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="integrate a built-in system and write CSV")
    s.add_argument("--system", required=True, choices=sorted(BUILTINS))
    s.add_argument("--t0", type=float, default=0.0)
    s.add_argument("--t1", type=float, required=True)
    s.add_argument("--dt", type=float, required=True)
    s.add_argument("--x0", type=float, nargs="+")
    s.add_argument("--param", action="append", default=[], metavar="KEY=VALUE")
    s.add_argument("--sigma", type=float, default=0.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--substeps", type=int, default=10)
    s.add_argument("-o", "--output", default="-", help="CSV path, '-' for stdout")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("fit", help="fit a CSV dataset described by a JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--sigma", type=float)
    s.add_argument("--strategy", choices=["bsindy", "stls", "sparsebayes", "exhaustive"])
    s.add_argument("--out")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("sigma-sweep", help="choose the noise level by evidence maximisation")
    s.add_argument("--config", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_sigma_sweep)

    s = sub.add_parser("sweep", help="run a success-rate sweep")
    s.add_argument("--config", required=True)
    s.add_argument("--out", default="results")
    s.add_argument("--stem", default="report")
    s.add_argument("--trials", type=int)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("active", help="entropy-driven sequential assimilation")
    s.add_argument("--config", required=True)
    s.add_argument("--out", default="results")
    s.add_argument("--seed", type=int)
    s.add_argument("--order", choices=["entropy", "random"])
    s.set_defaults(func=cmd_active)

    s = sub.add_parser("deriv-compare", help="finite-difference vs weak-form derivative errors")
    s.add_argument("--system", default="van_der_pol")
    s.add_argument("--sigma", type=float, default=0.1)
    s.add_argument("--dt", type=float, nargs="+", default=[0.1, 0.05, 0.025])
    s.add_argument("--t1", type=float, default=12.0)
    s.add_argument("--order", type=int, default=8)
    s.add_argument("--points", type=int, default=9)
    s.add_argument("--p", type=int, default=2)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default="results")
    s.set_defaults(func=cmd_deriv_compare)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with 2 on usage errors
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        parser.print_usage(sys.stderr)
        print(json.dumps({"error": "usage", "message": str(exc)}), file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - reported as a structured runtime failure
        log.debug("traceback", exc_info=True)
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
