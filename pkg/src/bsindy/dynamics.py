"""Benchmark ODE systems, fixed-step RK4 integration and seeded measurement noise."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping

import numpy as np


class DivergenceError(RuntimeError):
    """Raised when the integrated state stops being finite."""


@dataclass(frozen=True)
class OdeSystem:
    name: str
    dimension: int
    rhs: Callable[[np.ndarray], np.ndarray]
    parameters: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not all(math.isfinite(v) for v in self.parameters.values()):
            raise ValueError(f"non-finite parameter in {self.name}: {dict(self.parameters)}")

    def __call__(self, x):
        return self.rhs(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class TimeSeries:
    """Sampled trajectory ``X`` (rows = time) with per-entry noise variance."""

    t: np.ndarray
    X: np.ndarray
    sigma_x2: np.ndarray
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        s2 = np.broadcast_to(np.asarray(self.sigma_x2, dtype=float), X.shape).copy()
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "sigma_x2", s2)
        if t.ndim != 1 or X.shape[0] != t.shape[0]:
            raise ValueError(f"row count of X ({X.shape[0]}) must equal len(t) ({t.shape[0]})")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("time grid must be strictly increasing")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(X)) and np.all(np.isfinite(s2))):
            raise ValueError("time series contains non-finite entries")
        if np.any(s2 < 0):
            raise ValueError("sigma_x2 must be non-negative")

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def dt(self) -> float:
        steps = np.diff(self.t)
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
            raise ValueError("time grid is not uniform")
        return float(steps.mean())

    def with_sigma(self, sigma_x: float) -> "TimeSeries":
        """Same samples, homoscedastic noise variance ``sigma_x**2`` assumed."""
        return replace(self, sigma_x2=np.full_like(self.X, float(sigma_x) ** 2))

    def subsample(self, stride: int, count: int | None = None) -> "TimeSeries":
        idx = np.arange(0, self.n_samples, stride)
        if count is not None:
            if count > idx.size:
                raise ValueError(f"only {idx.size} samples available, {count} requested")
            idx = idx[:count]
        return replace(self, t=self.t[idx], X=self.X[idx], sigma_x2=self.sigma_x2[idx])


# --- integration ---------------------------------------------------------------------------


def integrate(system: OdeSystem, x0, t0: float, t1: float, dt: float) -> TimeSeries:
    """Classical RK4 on the grid ``t0 + k*dt``, ``k = 0 .. floor((t1 - t0)/dt)``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if t1 <= t0:
        raise ValueError("t1 must exceed t0")
    x = np.asarray(x0, dtype=float).copy()
    if x.shape != (system.dimension,):
        raise ValueError(f"x0 must have length {system.dimension}")
    n_steps = int(math.floor((t1 - t0) / dt + 1e-9))
    t = t0 + dt * np.arange(n_steps + 1)
    X = np.empty((n_steps + 1, system.dimension))
    X[0] = x
    f = system.rhs
    for k in range(n_steps):
        k1 = f(x)
        k2 = f(x + 0.5 * dt * k1)
        k3 = f(x + 0.5 * dt * k2)
        k4 = f(x + dt * k3)
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise DivergenceError(f"{system.name}: non-finite state at t={t[k + 1]:.6g}")
        X[k + 1] = x
    return TimeSeries(t=t, X=X, sigma_x2=np.zeros_like(X), meta={"system": system.name})


def simulate(system: OdeSystem, x0, t_end: float, sample_dt: float, n_samples: int | None = None,
             substeps: int = 10, t0: float = 0.0) -> TimeSeries:
    """Integrate at ``sample_dt / substeps`` and keep every ``substeps``-th state.

    With ``n_samples`` the first ``n_samples`` points of the sampling grid are returned,
    otherwise every grid point in ``[t0, t_end]``.
    """
    fine_dt = sample_dt / substeps
    if n_samples is not None:
        t_end = t0 + (n_samples - 1) * sample_dt
    ts = integrate(system, x0, t0, t_end + 0.5 * fine_dt, fine_dt)
    out = ts.subsample(substeps, n_samples)
    # the fine grid accumulates rounding; report the exact sampling grid
    return replace(out, t=t0 + sample_dt * np.arange(out.n_samples))


# --- noise ---------------------------------------------------------------------------------


def make_rng(*key: int) -> np.random.Generator:
    """Counter-based generator (Philox) keyed by an arbitrary tuple of integers."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(k) for k in key])))


def add_noise(ts: TimeSeries, sigma_x: float, seed: int | tuple[int, ...]) -> TimeSeries:
    if sigma_x < 0:
        raise ValueError("sigma_x must be non-negative")
    key = seed if isinstance(seed, tuple) else (seed,)
    noise = make_rng(*key).standard_normal(ts.X.shape)
    X = ts.X + sigma_x * noise if sigma_x > 0 else ts.X.copy()
    meta = dict(ts.meta, sigma_x=float(sigma_x), seed=list(key))
    return replace(ts, X=X, sigma_x2=np.full_like(ts.X, float(sigma_x) ** 2),
                   seed=int(key[0]), meta=meta)


# --- benchmark systems ---------------------------------------------------------------------


def van_der_pol(b: float = 4.0) -> OdeSystem:
    def rhs(x):
        return np.array([x[1], b * x[1] * (1.0 - x[0] ** 2) - x[0]])
    return OdeSystem("van_der_pol", 2, rhs, {"b": b})


def cubic_osc(a: float = -0.1, b: float = -2.0, c: float = 2.0, d: float = -0.1) -> OdeSystem:
    def rhs(x):
        x1c, x2c = x[0] ** 3, x[1] ** 3
        return np.array([a * x1c + b * x2c, c * x1c + d * x2c])
    return OdeSystem("cubic_osc", 2, rhs, {"a": a, "b": b, "c": c, "d": d})


def lorenz(s: float = 10.0, r: float = 28.0, b: float = 8.0 / 3.0) -> OdeSystem:
    def rhs(x):
        return np.array([s * (x[1] - x[0]), r * x[0] - x[1] - x[0] * x[2], x[0] * x[1] - b * x[2]])
    return OdeSystem("lorenz", 3, rhs, {"s": s, "r": r, "b": b})


def lotka_volterra(p1: float = 0.53, p2: float = -0.026, p3: float = -0.98,
                   p4: float = 0.028) -> OdeSystem:
    def rhs(x):
        return np.array([p1 * x[0] + p2 * x[0] * x[1], p3 * x[1] + p4 * x[0] * x[1]])
    return OdeSystem("lotka_volterra", 2, rhs, {"p1": p1, "p2": p2, "p3": p3, "p4": p4})


BUILTINS: dict[str, Callable[..., OdeSystem]] = {
    "van_der_pol": van_der_pol,
    "cubic_osc": cubic_osc,
    "lorenz": lorenz,
    "lotka_volterra": lotka_volterra,
}

# initial conditions used in the benchmark experiments
DEFAULT_X0 = {
    "van_der_pol": [2.0, 0.0],
    "cubic_osc": [1.0, 0.0],
    "lorenz": [-1.0, 6.0, 15.0],
    "lotka_volterra": [30.0, 4.0],
}


def builtin(name: str, **params) -> OdeSystem:
    try:
        factory = BUILTINS[name]
    except KeyError:
        raise LookupError(f"unknown system {name!r}; known: {sorted(BUILTINS)}") from None
    return factory(**params)


def true_coefficients(system: OdeSystem, terms) -> np.ndarray:
    """Coefficient matrix (M x D) of ``system`` in a polynomial library with ``terms``."""
    p = system.parameters
    p = dict(p)
    tables = {
        "van_der_pol": lambda: [{(0, 1): 1.0},
                                {(1, 0): -1.0, (0, 1): p["b"], (2, 1): -p["b"]}],
        "cubic_osc": lambda: [{(3, 0): p["a"], (0, 3): p["b"]},
                              {(3, 0): p["c"], (0, 3): p["d"]}],
        "lorenz": lambda: [{(1, 0, 0): -p["s"], (0, 1, 0): p["s"]},
                           {(1, 0, 0): p["r"], (0, 1, 0): -1.0, (1, 0, 1): -1.0},
                           {(1, 1, 0): 1.0, (0, 0, 1): -p["b"]}],
        "lotka_volterra": lambda: [{(1, 0): p["p1"], (1, 1): p["p2"]},
                                   {(0, 1): p["p3"], (1, 1): p["p4"]}],
    }
    table = tables[system.name]()
    index = {tuple(term.exponents): i for i, term in enumerate(terms)}
    W = np.zeros((len(terms), system.dimension))
    for d, eq in enumerate(table):
        for exps, value in eq.items():
            if exps not in index:
                raise ValueError(f"term {exps} missing from library")
            W[index[exps], d] = value
    return W


# --- serialization -------------------------------------------------------------------------


def save_csv(ts: TimeSeries, path, metadata: bool = True) -> None:
    path = Path(path)
    header = ["t"] + [f"x{i + 1}" for i in range(ts.dim)]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for ti, row in zip(ts.t, ts.X):
            w.writerow([repr(float(ti))] + [repr(float(v)) for v in row])
    if metadata:
        meta = dict(ts.meta)
        if ts.seed is not None:
            meta.setdefault("seed", ts.seed)
        path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True))


class CsvFormatError(ValueError):
    pass


def load_csv(path) -> TimeSeries:
    """Read ``t,x1,...,xD``; noise variance is left at zero (unknown)."""
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise CsvFormatError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if header[0] != "t" or header[1:] != [f"x{i + 1}" for i in range(len(header) - 1)] \
            or len(header) < 2:
        raise CsvFormatError(f"{path}:1: header must be t,x1,...,xD, got {','.join(header)}")
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise CsvFormatError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            vals = [float(c) for c in row]
        except ValueError:
            raise CsvFormatError(f"{path}:{lineno}: non-numeric field in {row}") from None
        if not all(math.isfinite(v) for v in vals):
            raise CsvFormatError(f"{path}:{lineno}: non-finite value")
        data.append(vals)
    if not data:
        raise CsvFormatError(f"{path}: no data rows")
    arr = np.array(data)
    meta = {}
    side = path.with_suffix(".json")
    if side.exists():
        meta = json.loads(side.read_text())
    return TimeSeries(t=arr[:, 0], X=arr[:, 1:], sigma_x2=np.zeros_like(arr[:, 1:]), meta=meta)
