"""Polynomial candidate library and its companion variance library.

Feature variances use exact Gaussian raw moments of each factor, with the factors of a
monomial treated as independent and the observed sample used as the mean.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .derivatives import DerivativeOperators, project, project_variance
from .dynamics import TimeSeries


def gaussian_power_moment(mu, sigma, n: int):
    """``E[X**n]`` for ``X ~ N(mu, sigma**2)``; broadcasts over ``mu`` and ``sigma``."""
    if n < 0:
        raise ValueError("moment order must be non-negative")
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma < 0):
        raise ValueError("sigma must be non-negative")
    total = np.zeros(np.broadcast(mu, sigma).shape)
    for i in range(0, n + 1, 2):  # odd central moments vanish
        double_fact = math.prod(range(1, i, 2))  # (i-1)!!
        coef = math.comb(n, i) * double_fact
        total = total + coef * sigma**i * mu ** (n - i)
    return total if total.ndim else float(total)


def power_variance(mu, sigma, n: int):
    """``Var[X**n] = E[X**(2n)] - E[X**n]**2``."""
    v = gaussian_power_moment(mu, sigma, 2 * n) - np.square(gaussian_power_moment(mu, sigma, n))
    v = np.maximum(v, 0.0)  # cancellation can leave -eps
    return v if np.ndim(v) else float(v)


def product_variance(m1: tuple, m2: tuple):
    """Variance of a product of independent factors given ``(E[F], E[F**2])`` for each."""
    e1, e1sq = m1
    e2, e2sq = m2
    return np.maximum(np.asarray(e1sq) * e2sq - np.square(np.asarray(e1) * e2), 0.0)


@dataclass(frozen=True)
class TermDescriptor:
    exponents: tuple[int, ...]

    @property
    def degree(self) -> int:
        return sum(self.exponents)

    @property
    def label(self) -> str:
        parts = []
        for i, k in enumerate(self.exponents):
            if k == 1:
                parts.append(f"x{i + 1}")
            elif k > 1:
                parts.append(f"x{i + 1}^{k}")
        return "·".join(parts) if parts else "1"

    def __str__(self):
        return self.label


def polynomial_terms(dim: int, max_degree: int) -> list[TermDescriptor]:
    """Graded lexicographic monomials, constant first (``x1^2`` before ``x1·x2``)."""
    if max_degree < 1:
        raise ValueError("max_degree must be >= 1")
    terms = []
    for deg in range(max_degree + 1):
        level = [e for e in itertools.product(range(deg, -1, -1), repeat=dim) if sum(e) == deg]
        terms.extend(TermDescriptor(tuple(e)) for e in sorted(level, reverse=True))
    return terms


def parse_label(label: str, dim: int) -> TermDescriptor:
    exps = [0] * dim
    if label != "1":
        for part in label.split("·"):
            var, _, k = part.partition("^")
            exps[int(var[1:]) - 1] += int(k) if k else 1
    return TermDescriptor(tuple(exps))


def evaluate_terms(X: np.ndarray, terms) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    out = np.ones((X.shape[0], len(terms)))
    for j, term in enumerate(terms):
        for i, k in enumerate(term.exponents):
            if k:
                out[:, j] *= X[:, i] ** k
    return out


def variance_terms(X: np.ndarray, sigma_x2: np.ndarray, terms) -> np.ndarray:
    """Per-entry variance of every monomial, factors independent across dimensions."""
    X = np.asarray(X, dtype=float)
    sd = np.sqrt(np.asarray(sigma_x2, dtype=float))
    out = np.zeros((X.shape[0], len(terms)))
    for j, term in enumerate(terms):
        first = np.ones(X.shape[0])
        second = np.ones(X.shape[0])
        noisy = np.zeros(X.shape[0], dtype=bool)
        for i, k in enumerate(term.exponents):
            if k:
                m1 = gaussian_power_moment(X[:, i], sd[:, i], k)
                m2 = gaussian_power_moment(X[:, i], sd[:, i], 2 * k)
                first, second = first * m1, second * m2
                noisy |= sd[:, i] > 0
        if term.degree:
            # x^(2k) and (x^k)^2 differ by rounding, so noiseless entries are set exactly
            out[:, j] = np.where(noisy, product_variance((first, second), (1.0, 1.0)), 0.0)
    return out


@dataclass(frozen=True)
class FeatureLibrary:
    terms: list[TermDescriptor]
    Theta: np.ndarray
    var_Theta: np.ndarray
    D_mat: np.ndarray
    var_D: np.ndarray

    @property
    def labels(self) -> list[str]:
        return [t.label for t in self.terms]

    @property
    def n_terms(self) -> int:
        return len(self.terms)


def build_library(ts: TimeSeries, ops: DerivativeOperators, max_degree: int = 3,
                  terms=None) -> FeatureLibrary:
    if terms is None:
        terms = polynomial_terms(ts.dim, max_degree)
    elif any(len(t.exponents) != ts.dim for t in terms):
        raise ValueError("term exponents do not match the data dimension")
    Theta = evaluate_terms(ts.X, terms)
    var_Theta = variance_terms(ts.X, ts.sigma_x2, terms)
    return FeatureLibrary(terms=list(terms), Theta=Theta, var_Theta=var_Theta,
                          D_mat=project(ops, Theta), var_D=project_variance(ops, var_Theta))


def skewness_check(mu, sigma, term: TermDescriptor, n_samples: int = 10_000, seed: int = 0):
    """Sample a monomial under Gaussian perturbation of its arguments.

    Returns ``(sample_variance, predicted_variance, sample_skewness)``; a large skewness or a
    variance mismatch flags the regime where the moment approximation breaks down.
    """
    from scipy.stats import skew

    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), mu.shape)
    rng = np.random.default_rng(seed)
    draws = mu + sigma * rng.standard_normal((n_samples, mu.size))
    values = evaluate_terms(draws, [term])[:, 0]
    predicted = variance_terms(mu[None, :], sigma[None, :] ** 2, [term])[0, 0]
    return float(values.var(ddof=1)), float(predicted), float(skew(values))
