"""Sparse model-selection strategies.

* ``bsindy``      greedy backward elimination on the Gaussian evidence with the per-point
                  noise precision re-estimated from the propagated variance at every step
* ``stls``        sequentially thresholded least squares
* ``sparsebayes`` sequential add / delete / re-estimate on the (s, q) statistics with a
                  single homoscedastic noise level
* ``exhaustive``  every support of a small library, ranked by evidence
"""

from __future__ import annotations

import itertools
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .derivatives import DerivativeOperators, apply, apply_variance, interior_times
from .dynamics import TimeSeries
from .evidence import (
    GaussianPosterior,
    NoiseModel,
    evidence_decomposition,
    log_likelihood,
    posterior,
    posterior_from_factor,
    ridge_evidence,
    sparsity_quality,
    term_contribution,
)
from .library import FeatureLibrary, build_library

STRATEGIES = ("bsindy", "stls", "sparsebayes", "exhaustive")


class DegenerateNoiseError(ValueError):
    pass


@dataclass
class FitConfig:
    alpha_scalar: float = 1e-2  # prior precision, i.e. 1 / prior variance
    w_change_tol: float = 1e-4
    max_noise_iters: int = 20
    stls_lambda: float = 0.1
    strategy: str = "bsindy"
    var_floor_rel: float = 1e-12
    sparsebayes_noise: str = "optimize"  # or "fixed"
    sparsebayes_sigma2: float | None = None

    def __post_init__(self):
        if self.alpha_scalar <= 0:
            raise ValueError("alpha_scalar must be positive")
        if self.w_change_tol <= 0 or self.max_noise_iters < 1:
            raise ValueError("noise-iteration tolerances must be positive")
        if self.stls_lambda < 0:
            raise ValueError("stls_lambda must be non-negative")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.sparsebayes_noise not in ("optimize", "fixed"):
            raise ValueError("sparsebayes_noise must be 'optimize' or 'fixed'")

    @classmethod
    def from_prior_variance(cls, prior_variance: float, **kw) -> "FitConfig":
        return cls(alpha_scalar=1.0 / prior_variance, **kw)


@dataclass(frozen=True)
class Problem:
    """Regression targets and dictionary after differentiation/projection."""

    y: np.ndarray          # N x D, L_dt X
    base_var: np.ndarray   # N x D, L_dt^2 sigma_x^2
    D_mat: np.ndarray      # N x M, L_I Theta
    var_D: np.ndarray      # N x M, L_I^2 var(Theta)
    terms: list
    t: np.ndarray          # N, window centres

    @classmethod
    def from_timeseries(cls, ts: TimeSeries, ops: DerivativeOperators, max_degree: int = 3,
                        terms=None) -> "Problem":
        lib = build_library(ts, ops, max_degree, terms)
        return cls.from_library(ts, ops, lib)

    @classmethod
    def from_library(cls, ts: TimeSeries, ops: DerivativeOperators, lib: FeatureLibrary):
        return cls(y=apply(ops, ts.X), base_var=apply_variance(ops, ts.sigma_x2), D_mat=lib.D_mat,
                   var_D=lib.var_D, terms=lib.terms, t=interior_times(ops, ts.t))

    @property
    def labels(self) -> list[str]:
        return [t.label for t in self.terms]

    @property
    def n_rows(self) -> int:
        return self.y.shape[0]

    @property
    def dim(self) -> int:
        return self.y.shape[1]

    def rows(self, idx) -> "Problem":
        idx = np.asarray(idx, dtype=int)
        return Problem(self.y[idx], self.base_var[idx], self.D_mat[idx], self.var_D[idx],
                       self.terms, self.t[idx])


# --- noise model ---------------------------------------------------------------------------


def noise_update(w_active, var_D_active, base_var, floor: float = 0.0) -> NoiseModel:
    """Precision from the propagated variance ``var_D w^2 + base_var`` (floored at ``floor``)."""
    w = np.asarray(w_active, dtype=float)
    total = np.asarray(base_var, dtype=float).ravel().copy()
    if w.size:
        total += np.asarray(var_D_active, dtype=float).reshape(total.size, -1) @ (w * w)
    if floor > 0:
        total = np.maximum(total, floor)
    if np.any(total <= 0) or not np.all(np.isfinite(total)):
        raise DegenerateNoiseError("total noise variance is zero at some points; set a variance floor")
    return NoiseModel(1.0 / total, "iterated" if w.size else "fixed")


def variance_floor(y, rel: float) -> float:
    med = float(np.median(np.square(y)))
    return rel * med if med > 0 else rel


# --- fitted models -------------------------------------------------------------------------


@dataclass
class DimensionFit:
    support: tuple[int, ...]
    coef: np.ndarray            # length M, zeros off-support
    std: np.ndarray             # length M, posterior std (zeros when not Bayesian)
    log_evidence: float = float("nan")
    beta: np.ndarray | None = None
    iterations: int = 0
    posterior: GaussianPosterior | None = None
    trace: list = field(default_factory=list)


@dataclass
class FittedModel:
    terms: list
    dims: list[DimensionFit]
    strategy: str
    mce: float | None = None

    @property
    def labels(self) -> list[str]:
        return [t.label for t in self.terms]

    @property
    def coef(self) -> np.ndarray:
        return np.column_stack([d.coef for d in self.dims])

    @property
    def std(self) -> np.ndarray:
        return np.column_stack([d.std for d in self.dims])

    @property
    def supports(self) -> list[tuple[int, ...]]:
        return [d.support for d in self.dims]

    @property
    def log_evidence(self) -> float:
        return float(sum(d.log_evidence for d in self.dims))

    def equations(self, digits: int = 2) -> list[str]:
        return [format_equation(d.coef, self.labels, i, digits) for i, d in enumerate(self.dims)]

    def to_dict(self) -> dict:
        out = {"strategy": self.strategy, "mce": self.mce, "dimensions": []}
        for i, d in enumerate(self.dims):
            entry = {
                "equation": format_equation(d.coef, self.labels, i, 4),
                "terms": [{"term": self.labels[j], "mean": float(d.coef[j]), "std": float(d.std[j])}
                          for j in d.support],
                "log_evidence": None if np.isnan(d.log_evidence) else float(d.log_evidence),
                "iterations": int(d.iterations),
            }
            if d.beta is not None:
                entry["beta"] = {"min": float(np.min(d.beta)), "median": float(np.median(d.beta)),
                                 "max": float(np.max(d.beta))}
            out["dimensions"].append(entry)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def format_equation(coef, labels, dim_index: int, digits: int = 2) -> str:
    parts = []
    for c, label in zip(coef, labels):
        if c == 0:
            continue
        mag = f"{abs(c):.{digits}g}"
        body = mag if label == "1" else f"{mag}·{label}"
        if not parts:
            parts.append(("-" if c < 0 else "") + body)
        else:
            parts.append(("- " if c < 0 else "+ ") + body)
    rhs = " ".join(parts) if parts else "0"
    return f"dx{dim_index + 1}/dt = {rhs}"


def mce(w_hat, w_true) -> float:
    """Relative coefficient error ``||w_hat - w_true|| / ||w_true||``."""
    w_hat = np.asarray(w_hat, dtype=float)
    w_true = np.asarray(w_true, dtype=float)
    return float(np.linalg.norm(w_hat - w_true) / np.linalg.norm(w_true))


def is_success(coef, true_coef, threshold: float = 0.25) -> bool:
    """Exact support on every equation and system-wide MCE below ``threshold``."""
    coef = np.asarray(coef)
    true_coef = np.asarray(true_coef)
    return bool(np.array_equal(coef != 0, true_coef != 0) and mce(coef, true_coef) < threshold)


# --- Bayesian-SINDy ------------------------------------------------------------------------


def _fit_support(y, D, var_D, base_var, alpha, support, cfg: FitConfig, floor: float,
                 full: bool = True):
    """Ridge fit on ``support`` with noise-precision iteration.

    Returns ``(posterior, beta, iterations)``; with ``full=False`` the posterior is replaced by
    ``(mu, log_evidence, cholesky)`` to skip forming the covariance.
    """
    cols = list(support)
    total = np.maximum(base_var, floor) if floor > 0 else base_var
    beta = 1.0 / total
    Ds = D[:, cols]
    alpha_v = np.full(len(cols), float(alpha))
    mu, J, L = ridge_evidence(y, Ds, beta, alpha_v)
    iters = 0
    if cols:
        Vs = var_D[:, cols]
        for iters in range(1, cfg.max_noise_iters + 1):
            total = Vs @ (mu * mu) + base_var
            if floor > 0:
                np.maximum(total, floor, out=total)
            elif not np.all(total > 0):
                raise DegenerateNoiseError("total noise variance is zero; set a variance floor")
            beta = 1.0 / total
            new_mu, J, L = ridge_evidence(y, Ds, beta, alpha_v)
            change = np.linalg.norm(new_mu - mu) / max(np.linalg.norm(new_mu), 1e-300)
            mu = new_mu
            if change < cfg.w_change_tol:
                break
    if not full:
        return (mu, J, L), beta, iters
    return posterior_from_factor(support, mu, J, L), beta, iters


def fit_bsindy_1d(y, D, var_D, base_var, cfg: FitConfig, floor: float | None = None) -> DimensionFit:
    y = np.asarray(y, dtype=float).ravel()
    M = D.shape[1]
    if floor is None:
        floor = variance_floor(y, cfg.var_floor_rel)
    alpha = cfg.alpha_scalar
    current = tuple(range(M))
    post, beta, iters = _fit_support(y, D, var_D, base_var, alpha, current, cfg, floor)
    trace = [(current, post.log_evidence, iters)]
    while current:
        best = None
        for i in current:
            cand = tuple(c for c in current if c != i)
            fitted, cbeta, citers = _fit_support(y, D, var_D, base_var, alpha, cand, cfg, floor,
                                                 full=False)
            if best is None or fitted[1] > best[1][1]:
                best = (cand, fitted, cbeta, citers)
        if best[1][1] <= post.log_evidence:
            break
        current, fitted, beta, iters = best
        post = posterior_from_factor(current, *fitted)
        trace.append((current, post.log_evidence, iters))
    coef = np.zeros(M)
    std = np.zeros(M)
    coef[list(current)] = post.mu
    std[list(current)] = post.std
    return DimensionFit(current, coef, std, post.log_evidence, beta, iters, post, trace)


def fit_bsindy(problem: Problem, cfg: FitConfig) -> FittedModel:
    dims = [fit_bsindy_1d(problem.y[:, d], problem.D_mat, problem.var_D, problem.base_var[:, d], cfg)
            for d in range(problem.dim)]
    return FittedModel(problem.terms, dims, "bsindy")


# --- STLS ----------------------------------------------------------------------------------


def stls_1d(y, D, lam: float, ridge_eps: float = 0.0, max_iter: int | None = None) -> np.ndarray:
    y = np.asarray(y, dtype=float).ravel()
    M = D.shape[1]

    def solve(cols):
        A = D[:, cols]
        if ridge_eps > 0:
            return np.linalg.solve(A.T @ A + ridge_eps * np.eye(len(cols)), A.T @ y)
        return np.linalg.lstsq(A, y, rcond=None)[0]

    w = np.zeros(M)
    big = np.ones(M, dtype=bool)
    w[big] = solve(np.flatnonzero(big))
    for _ in range(max_iter or 10 * M):
        new_big = np.abs(w) >= lam
        if np.array_equal(new_big, big):
            break
        big = new_big
        w = np.zeros(M)
        if not big.any():
            break
        w[big] = solve(np.flatnonzero(big))
    w[~big] = 0.0
    return w


def fit_stls(problem: Problem, lam: float, ridge_eps: float = 0.0) -> FittedModel:
    dims = []
    for d in range(problem.dim):
        w = stls_1d(problem.y[:, d], problem.D_mat, lam, ridge_eps)
        dims.append(DimensionFit(tuple(np.flatnonzero(w)), w, np.zeros_like(w)))
    return FittedModel(problem.terms, dims, "stls")


# --- SparseBayes-style baseline ------------------------------------------------------------


def sparsebayes_1d(y, D, noise_mode: str = "optimize", sigma2: float | None = None,
                   tol: float = 1e-6, max_iter: int = 2000,
                   var_floor_rel: float = 1e-12) -> DimensionFit:
    """Sequential evidence maximisation with a single noise precision shared by all points."""
    y = np.asarray(y, dtype=float).ravel()
    beta_max = 1.0 / variance_floor(y, var_floor_rel)  # noiseless data would send beta to inf
    N, M = D.shape
    norms = np.linalg.norm(D, axis=0)
    usable = norms > 0
    Phi = np.where(usable, D / np.where(usable, norms, 1.0), 0.0)
    if noise_mode == "fixed":
        if sigma2 is None or sigma2 <= 0:
            raise ValueError("fixed noise mode needs a positive sigma2")
        beta = 1.0 / sigma2
    else:
        vy = float(np.var(y))
        beta = min(1.0 / (0.1 * vy), beta_max) if vy > 0 else 1e6

    # start from the single column best aligned with y
    proj = np.where(usable, (Phi.T @ y) ** 2, -np.inf)
    j0 = int(np.argmax(proj))
    S0, Q0 = beta, beta * float(Phi[:, j0] @ y)
    active: list[int] = []
    alpha: dict[int, float] = {}
    if Q0 * Q0 > S0:
        active = [j0]
        alpha[j0] = S0 * S0 / (Q0 * Q0 - S0)

    flips: dict[int, int] = {}
    last_added: set[int] = set()
    it = 0
    for it in range(1, max_iter + 1):
        beta_changed = False
        if noise_mode == "optimize" and active:
            a = np.array([alpha[j] for j in active])
            post = posterior(y, Phi[:, active], beta, a)
            resid = y - Phi[:, active] @ post.mu
            gamma = 1.0 - a * np.diag(post.Sigma)
            rss = float(resid @ resid)
            if rss > 0:
                new_beta = min(max(N - float(gamma.sum()), 1e-12) / rss, beta_max)
                beta_changed = abs(new_beta - beta) > 1e-6 * beta
                beta = new_beta
        a = np.array([alpha[j] for j in active])
        S, Q, s, q = sparsity_quality(y, Phi, beta, active, a)
        theta = q * q - s
        gain = np.full(M, -np.inf)
        for j in range(M):
            if not usable[j]:
                continue
            if j in alpha:
                if not (np.isfinite(s[j]) and s[j] > 0):
                    # downdate lost precision; score the deletion by an explicit refit
                    keep = [k for k in active if k != j]
                    J_keep = posterior(y, Phi[:, keep], beta,
                                       np.array([alpha[k] for k in keep])).log_evidence
                    gain[j] = J_keep - posterior(y, Phi[:, active], beta, a).log_evidence
                    theta[j] = -1.0
                    continue
                ell_old = term_contribution(s[j], q[j], alpha[j])
                if theta[j] > 0:
                    gain[j] = term_contribution(s[j], q[j], s[j] ** 2 / theta[j]) - ell_old
                else:
                    gain[j] = -ell_old
            elif theta[j] > 0:
                gain[j] = term_contribution(s[j], q[j], s[j] ** 2 / theta[j])
        j = int(np.argmax(gain))
        if gain[j] <= tol:
            if not beta_changed:
                break
            continue
        if j in alpha and theta[j] <= 0:
            del alpha[j]
            active.remove(j)
            if j in last_added:
                flips[j] = flips.get(j, 0) + 1
                if flips[j] >= 3:
                    break  # collinear terms cycling in and out
        else:
            if j not in alpha:
                active.append(j)
                last_added.add(j)
            alpha[j] = s[j] ** 2 / theta[j]

    active = sorted(active)
    coef = np.zeros(M)
    std = np.zeros(M)
    post = None
    le = float("nan")
    if active:
        a = np.array([alpha[j] for j in active])
        post = posterior(y, Phi[:, active], beta, a, tuple(active))
        coef[active] = post.mu / norms[active]
        std[active] = post.std / norms[active]
        le = post.log_evidence
    else:
        le = posterior(y, Phi[:, []], beta, np.zeros(0)).log_evidence
    return DimensionFit(tuple(active), coef, std, le, np.full(N, beta), it, post)


def fit_sparsebayes(problem: Problem, noise_mode: str = "optimize",
                    sigma2: float | None = None) -> FittedModel:
    dims = [sparsebayes_1d(problem.y[:, d], problem.D_mat, noise_mode, sigma2)
            for d in range(problem.dim)]
    return FittedModel(problem.terms, dims, "sparsebayes")


# --- exhaustive enumeration ----------------------------------------------------------------


@dataclass(frozen=True)
class RankedModel:
    support: tuple[int, ...]
    log_evidence: float
    log_likelihood: float      # at the posterior mean, with the support's own noise model
    occam: float               # log_evidence - log_likelihood
    log_likelihood_mle: float  # weighted least squares with the w=0 noise model


def fit_exhaustive_1d(y, D, var_D, base_var, cfg: FitConfig, max_terms: int = 14) -> list[RankedModel]:
    y = np.asarray(y, dtype=float).ravel()
    M = D.shape[1]
    if M > max_terms:
        raise ValueError(f"exhaustive enumeration limited to {max_terms} terms, got {M}")
    floor = variance_floor(y, cfg.var_floor_rel)
    beta0 = noise_update(np.zeros(0), None, base_var, floor).beta
    sw = np.sqrt(beta0)
    out = []
    for k in range(M + 1):
        for support in itertools.combinations(range(M), k):
            post, beta, _ = _fit_support(y, D, var_D, base_var, cfg.alpha_scalar, support, cfg, floor)
            Ds = D[:, list(support)]
            ll, lp, half = evidence_decomposition(post, y, Ds, beta, cfg.alpha_scalar)
            if k:
                w_mle = np.linalg.lstsq(Ds * sw[:, None], y * sw, rcond=None)[0]
            else:
                w_mle = np.zeros(0)
            ll_mle = log_likelihood(y, Ds, w_mle, beta0)
            out.append(RankedModel(support, post.log_evidence, ll, lp + half, ll_mle))
    out.sort(key=lambda r: (-r.log_evidence, r.support))
    return out


def fit_exhaustive(problem: Problem, cfg: FitConfig, dim: int | None = None):
    dims = range(problem.dim) if dim is None else [dim]
    return [fit_exhaustive_1d(problem.y[:, d], problem.D_mat, problem.var_D,
                              problem.base_var[:, d], cfg) for d in dims]


def exhaustive_model(problem: Problem, cfg: FitConfig) -> FittedModel:
    """Evidence argmax over all supports, refit to get coefficients."""
    floor_dims = []
    for d, ranked in enumerate(fit_exhaustive(problem, cfg)):
        y = problem.y[:, d]
        floor = variance_floor(y, cfg.var_floor_rel)
        support = ranked[0].support
        post, beta, iters = _fit_support(y, problem.D_mat, problem.var_D, problem.base_var[:, d],
                                         cfg.alpha_scalar, support, cfg, floor)
        M = problem.D_mat.shape[1]
        coef, std = np.zeros(M), np.zeros(M)
        coef[list(support)] = post.mu
        std[list(support)] = post.std
        floor_dims.append(DimensionFit(support, coef, std, post.log_evidence, beta, iters, post))
    return FittedModel(problem.terms, floor_dims, "exhaustive")


def fit(problem: Problem, cfg: FitConfig, strategy: str | None = None) -> FittedModel:
    strategy = strategy or cfg.strategy
    if strategy == "bsindy":
        return fit_bsindy(problem, cfg)
    if strategy == "stls":
        return fit_stls(problem, cfg.stls_lambda)
    if strategy == "sparsebayes":
        return fit_sparsebayes(problem, cfg.sparsebayes_noise, cfg.sparsebayes_sigma2)
    if strategy == "exhaustive":
        return exhaustive_model(problem, cfg)
    raise ValueError(f"unknown strategy {strategy!r}")


def config_dict(cfg: FitConfig) -> dict:
    return asdict(cfg)
