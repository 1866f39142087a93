"""Seeded benchmark sweeps, noise-level evidence sweeps and derivative diagnostics.

Reports are deterministic functions of their config: trial seeds derive from the cell
coordinates, cells are aggregated in a canonical order and wall-clock timings are written
to a separate file.
"""

from __future__ import annotations

import csv
import io
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import binomtest

from .derivatives import apply, build_operators, make_stencil
from .dynamics import DEFAULT_X0, TimeSeries, add_noise, builtin, load_csv, simulate, true_coefficients
from .regression import FitConfig, Problem, fit, fit_bsindy, is_success, mce

__all__ = [
    "SweepConfig", "CellResult", "TrialRecord", "ExperimentReport", "SweepError",
    "run_sweep", "run_trial", "trial_seed", "wilson_interval", "evidence_sweep_sigma",
    "fd_vs_weak_report", "load_csv", "worker_count",
]

SCHEMA_VERSION = 1
MAX_ERROR_RATE = 0.05


class SweepError(RuntimeError):
    """Raised when too many trials of a sweep fail."""


@dataclass
class SweepConfig:
    system: str
    t_end: float
    n_samples: list[int]
    sigmas: list[float]
    strategies: list[str] = field(default_factory=lambda: ["bsindy", "stls"])
    trials: int = 200
    parameters: dict = field(default_factory=dict)
    x0: list[float] | None = None
    derivative: dict = field(default_factory=lambda: {"scheme": "fd", "order": 8})
    prior_variance: float = 1e2
    stls_lambda: dict | float = 0.1  # scalar, or {str(sigma): lambda}
    max_degree: int = 3
    seed_base: int = 0
    substeps: int = 10

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.strategies:
            raise ValueError("at least one strategy is required")
        if self.t_end <= 0 or any(n < 2 for n in self.n_samples) or not self.n_samples:
            raise ValueError("t_end must be positive and every n_samples >= 2")
        if any(s < 0 for s in self.sigmas) or not self.sigmas:
            raise ValueError("sigmas must be a nonempty list of non-negative values")
        if self.prior_variance <= 0:
            raise ValueError("prior_variance must be positive")
        builtin(self.system, **self.parameters)

    def dt(self, n: int) -> float:
        return self.t_end / n

    def lam(self, sigma: float) -> float:
        if isinstance(self.stls_lambda, dict):
            for key, value in self.stls_lambda.items():
                if np.isclose(float(key), sigma):
                    return float(value)
            raise KeyError(f"no STLS threshold configured for sigma={sigma}")
        return float(self.stls_lambda)

    def fit_config(self, sigma: float) -> FitConfig:
        lam = self.lam(sigma) if "stls" in self.strategies else 0.1
        return FitConfig.from_prior_variance(self.prior_variance, stls_lambda=lam)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SweepConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known
        if extra:
            raise ValueError(f"unknown sweep config keys: {sorted(extra)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "SweepConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class TrialRecord:
    strategy: str
    sigma: float
    n_samples: int
    trial: int
    success: bool
    mce: float
    supports: tuple
    error: str | None = None


@dataclass
class CellResult:
    strategy: str
    sigma: float
    n_samples: int
    trials: int
    successes: int
    errors: int
    ci_low: float
    ci_high: float
    mean_mce: float | None  # among successes
    modal_support: str
    modal_fraction: float

    @property
    def success_rate(self) -> float:
        return self.successes / self.trials


@dataclass
class ExperimentReport:
    config: SweepConfig
    cells: list[CellResult]
    records: list[TrialRecord]
    wall_time: float = 0.0  # kept out of the serialized report
    schema_version: int = SCHEMA_VERSION

    def cell(self, strategy: str, sigma: float, n_samples: int) -> CellResult:
        for c in self.cells:
            if c.strategy == strategy and np.isclose(c.sigma, sigma) and c.n_samples == n_samples:
                return c
        raise KeyError((strategy, sigma, n_samples))

    def to_dict(self) -> dict:
        cells = []
        for c in self.cells:
            d = asdict(c)
            d["success_rate"] = c.success_rate
            cells.append(d)
        return {"schema_version": self.schema_version, "config": self.config.to_dict(),
                "cells": cells}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["strategy", "sigma", "n_samples", "trials", "successes", "success_rate",
                    "ci_low", "ci_high", "mean_mce", "errors", "modal_support", "modal_fraction"])
        for c in self.cells:
            w.writerow([c.strategy, repr(c.sigma), c.n_samples, c.trials, c.successes,
                        repr(c.success_rate), repr(c.ci_low), repr(c.ci_high),
                        "" if c.mean_mce is None else repr(c.mean_mce), c.errors,
                        c.modal_support, repr(c.modal_fraction)])
        return buf.getvalue()

    def write(self, out_dir, stem: str = "report") -> dict:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"csv": out / f"{stem}.csv", "json": out / f"{stem}.json",
                 "timing": out / f"{stem}.timing.json"}
        paths["csv"].write_text(self.to_csv())
        paths["json"].write_text(self.to_json())
        paths["timing"].write_text(json.dumps({"wall_time_s": self.wall_time}))
        return paths


# --- trials --------------------------------------------------------------------------------


def trial_seed(seed_base: int, sigma: float, n_samples: int, trial: int) -> tuple[int, ...]:
    """Key for the noise generator of one trial; sigma enters through its exact bit pattern."""
    sigma_bits = int(np.float64(sigma).view(np.uint64))
    return (int(seed_base), sigma_bits, int(n_samples), int(trial))


def support_label(supports, labels) -> str:
    return " | ".join(",".join(labels[i] for i in s) or "0" for s in supports)


_CLEAN_CACHE: dict = {}


def _clean_trajectory(cfg: SweepConfig, n: int) -> TimeSeries:
    key = (cfg.system, tuple(sorted(cfg.parameters.items())), tuple(cfg.x0 or ()), cfg.t_end, n,
           cfg.substeps)
    if key not in _CLEAN_CACHE:
        system = builtin(cfg.system, **cfg.parameters)
        x0 = cfg.x0 if cfg.x0 is not None else DEFAULT_X0[cfg.system]
        _CLEAN_CACHE[key] = simulate(system, x0, cfg.t_end, cfg.dt(n), n_samples=n,
                                     substeps=cfg.substeps)
    return _CLEAN_CACHE[key]


def run_trial(cfg: SweepConfig, sigma: float, n: int, trial: int) -> list[TrialRecord]:
    """One noisy dataset, fitted with every configured strategy."""
    try:
        clean = _clean_trajectory(cfg, n)
        ts = add_noise(clean, sigma, trial_seed(cfg.seed_base, sigma, n, trial))
        ops = build_operators(make_stencil(dt=cfg.dt(n), **cfg.derivative), n)
        problem = Problem.from_timeseries(ts, ops, cfg.max_degree)
        W = true_coefficients(builtin(cfg.system, **cfg.parameters), problem.terms)
        fcfg = cfg.fit_config(sigma)
    except Exception as exc:  # noqa: BLE001 - recorded, judged in aggregate
        msg = f"{type(exc).__name__}: {exc}"
        return [TrialRecord(s, sigma, n, trial, False, float("nan"), (), msg) for s in cfg.strategies]
    out = []
    for strategy in cfg.strategies:
        try:
            model = fit(problem, fcfg, strategy)
        except Exception as exc:  # noqa: BLE001
            out.append(TrialRecord(strategy, sigma, n, trial, False, float("nan"), (),
                                   f"{type(exc).__name__}: {exc}"))
            continue
        out.append(TrialRecord(strategy, sigma, n, trial, is_success(model.coef, W),
                               mce(model.coef, W), tuple(model.supports)))
    return out


def _run_chunk(args) -> list[TrialRecord]:
    cfg, items = args
    out = []
    for sigma, n, trial in items:
        out.extend(run_trial(cfg, sigma, n, trial))
    return out


def worker_count() -> int:
    env = os.environ.get("BSINDY_THREADS")
    if env:
        n = int(env)
        if n < 1:
            raise ValueError("BSINDY_THREADS must be >= 1")
        return n
    return os.cpu_count() or 1


def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    ci = binomtest(successes, trials).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


def _aggregate(cfg: SweepConfig, records: list[TrialRecord], labels) -> list[CellResult]:
    cells = []
    for strategy in sorted(cfg.strategies):
        for sigma in sorted(cfg.sigmas):
            for n in sorted(cfg.n_samples):
                rs = [r for r in records if r.strategy == strategy and r.sigma == sigma
                      and r.n_samples == n]
                wins = [r for r in rs if r.success]
                counts: dict = {}
                for r in rs:
                    if r.error is None:
                        key = support_label(r.supports, labels)
                        counts[key] = counts.get(key, 0) + 1
                modal, modal_n = ("", 0)
                if counts:
                    modal, modal_n = min(counts.items(), key=lambda kv: (-kv[1], kv[0]))
                lo, hi = wilson_interval(len(wins), len(rs))
                cells.append(CellResult(
                    strategy, float(sigma), int(n), len(rs), len(wins),
                    sum(r.error is not None for r in rs), lo, hi,
                    float(np.mean([r.mce for r in wins])) if wins else None,
                    modal, modal_n / len(rs)))
    return cells


def run_sweep(cfg: SweepConfig, workers: int | None = None) -> ExperimentReport:
    """Every (sigma, n_samples, trial) cell, fitted with every strategy."""
    start = time.perf_counter()
    items = [(float(s), int(n), k) for s in cfg.sigmas for n in cfg.n_samples
             for k in range(cfg.trials)]
    workers = min(worker_count() if workers is None else workers, len(items))
    if workers <= 1:
        records = _run_chunk((cfg, items))
    else:
        chunks = [items[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = [r for part in pool.map(_run_chunk, [(cfg, c) for c in chunks]) for r in part]
    records.sort(key=lambda r: (r.strategy, r.sigma, r.n_samples, r.trial))
    n_err = sum(r.error is not None for r in records)
    if n_err > MAX_ERROR_RATE * len(records):
        first = next(r.error for r in records if r.error is not None)
        raise SweepError(f"{n_err} of {len(records)} trial fits failed; first error: {first}")
    dim = builtin(cfg.system, **cfg.parameters).dimension
    from .library import polynomial_terms
    labels = [t.label for t in polynomial_terms(dim, cfg.max_degree)]
    cells = _aggregate(cfg, records, labels)
    return ExperimentReport(cfg, cells, records, time.perf_counter() - start)


# --- noise-level evidence sweep ------------------------------------------------------------


def evidence_sweep_sigma(ts: TimeSeries, sigma_grid, cfg: FitConfig, derivative: dict,
                         max_degree: int = 3):
    """Fit at every assumed noise level and return ``(sigma_best, [(sigma, log_evidence)])``."""
    grid = [float(s) for s in sigma_grid]
    if not grid:
        raise ValueError("sigma grid is empty")
    ops = build_operators(make_stencil(dt=ts.dt, **derivative), ts.n_samples)
    curve = []
    for sigma in grid:
        problem = Problem.from_timeseries(ts.with_sigma(sigma), ops, max_degree)
        curve.append((sigma, fit_bsindy(problem, cfg).log_evidence))
    best = max(range(len(curve)), key=lambda i: (curve[i][1], -i))
    return curve[best][0], curve


# --- derivative diagnostics ----------------------------------------------------------------


@dataclass(frozen=True)
class DerivativeDiagnostic:
    scheme: str
    dt: float
    rms_error: float
    spike_bias: float


def fd_vs_weak_report(system_name: str, sigma: float, dts, schemes: dict, t_end: float = 12.0,
                      seed: int = 0, spike_fraction: float = 0.1, path=None,
                      parameters: dict | None = None) -> list[DerivativeDiagnostic]:
    """RMS derivative error and signed bias at the largest-|x''| points, per scheme and step.

    ``schemes`` maps a name to keyword arguments of :func:`make_stencil`.
    """
    system = builtin(system_name, **(parameters or {}))
    x0 = DEFAULT_X0[system_name]
    out = []
    for dt in dts:
        clean = simulate(system, x0, t_end, dt)
        noisy = add_noise(clean, sigma, (seed, int(round(1 / dt))))
        xdot = np.array([system(x) for x in clean.X])
        # second derivative via the chain rule: J(x) f(x), finite-differenced in state
        h = 1e-6
        xddot = np.array([(system(x + h * f) - system(x - h * f)) / (2 * h)
                          for x, f in zip(clean.X, xdot)])
        for name, kw in schemes.items():
            stencil = make_stencil(dt=dt, **kw)
            ops = build_operators(stencil, clean.n_samples)
            n = ops.trim
            err = apply(ops, noisy.X) - xdot[n:-n]
            mag = np.linalg.norm(xddot[n:-n], axis=1)
            spikes = mag >= np.quantile(mag, 1.0 - spike_fraction)
            # bias measured against the direction of curvature so smoothing shows as negative
            sign = np.sign(xddot[n:-n][spikes])
            out.append(DerivativeDiagnostic(name, float(dt), float(np.sqrt(np.mean(err**2))),
                                            float(np.mean(err[spikes] * sign))))
    if path is not None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["scheme", "dt", "rms_error", "spike_bias"])
            for d in out:
                w.writerow([d.scheme, repr(d.dt), repr(d.rms_error), repr(d.spike_bias)])
    return out
