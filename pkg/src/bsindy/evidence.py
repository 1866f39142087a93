"""Gaussian evidence kernels shared by all regression strategies.

Everything is computed in the active-set (m x m) space via the Woodbury identity and the
matrix determinant lemma; the N x N evidence covariance ``C = B^-1 + D A^-1 D^T`` is never
formed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.linalg import lapack

_potrf = lapack.dpotrf
_trtrs = lapack.dtrtrs

LOG_2PI = float(np.log(2.0 * np.pi))
JITTER_LADDER = (0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8)


class ConditioningError(np.linalg.LinAlgError):
    """Raised when the posterior precision cannot be factorised within the jitter ladder."""


@dataclass(frozen=True)
class NoiseModel:
    beta: np.ndarray
    provenance: str = "fixed"

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float)
        object.__setattr__(self, "beta", beta)
        if not (np.all(np.isfinite(beta)) and np.all(beta > 0)):
            raise ValueError("noise precision beta must be positive and finite")


@dataclass(frozen=True)
class GaussianPosterior:
    active: tuple[int, ...]
    mu: np.ndarray
    Sigma: np.ndarray
    log_evidence: float
    # cached pieces of the evidence, reused by the decomposition
    logdet_precision: float = field(default=0.0, repr=False)

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(np.diag(self.Sigma))


def cholesky_spd(G: np.ndarray, what: str = "posterior precision") -> np.ndarray:
    """Lower Cholesky factor of a symmetric positive-definite matrix with a relative jitter ladder."""
    scale = float(np.mean(np.diag(G))) if G.size else 1.0
    for jitter in JITTER_LADDER:
        try:
            Gj = G + (jitter * scale) * np.eye(G.shape[0]) if jitter else G
            L = np.linalg.cholesky(Gj)
        except np.linalg.LinAlgError:
            continue
        if np.all(np.isfinite(L)):
            return L
    raise ConditioningError(f"{what} is numerically singular beyond jitter {JITTER_LADDER[-1]:g}")


def _as_alpha(alpha, m: int) -> np.ndarray:
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), (m,)).astype(float)
    if np.any(alpha <= 0) or not np.all(np.isfinite(alpha)):
        raise ValueError("prior precision alpha must be positive and finite")
    return alpha


def _prepare(y, D, beta, alpha):
    y = np.asarray(y, dtype=float).ravel()
    D = np.asarray(D, dtype=float).reshape(y.size, -1)
    beta = np.broadcast_to(np.asarray(beta, dtype=float), y.shape)
    if not (np.all(np.isfinite(beta)) and np.all(beta > 0)):
        raise ValueError("noise precision beta must be positive and finite")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(D))):
        raise ValueError("non-finite regression inputs")
    return y, D, beta, _as_alpha(alpha, D.shape[1])


def ridge_evidence(y, D, beta, alpha):
    """Unchecked fast path: posterior mean, log-evidence and Cholesky factor of the precision.

    ``alpha`` must already be a length-m array; callers own input validation.
    """
    N, m = D.shape
    By = beta * y
    base = -0.5 * (N * LOG_2PI - float(np.sum(np.log(beta))))
    if m == 0:
        return np.zeros(0), base - 0.5 * float(np.dot(By, y)), np.zeros((0, 0))
    G = (D.T * beta) @ D
    G[np.diag_indices(m)] += alpha
    L, info = _potrf(G, lower=1, clean=1)
    if info != 0:
        L = cholesky_spd(G)
    z, _ = _trtrs(L, D.T @ By, lower=1)
    mu, _ = _trtrs(L, z, lower=1, trans=1)
    logdet_G = 2.0 * float(np.sum(np.log(np.diag(L))))
    # ln|C| = -sum ln beta + ln|A + D^T B D| - ln|A|
    # y^T C^-1 y = r^T B r + mu^T A mu with r = y - D mu; avoids cancelling y^T B y - b^T Sigma b
    r = y - D @ mu
    quad = float(np.dot(beta * r, r)) + float(np.dot(alpha * mu, mu))
    J = base - 0.5 * (logdet_G - float(np.sum(np.log(alpha))) + quad)
    return mu, J, L


def posterior_from_factor(active, mu, J, L) -> GaussianPosterior:
    m = mu.size
    if m == 0:
        return GaussianPosterior(tuple(active), mu, np.zeros((0, 0)), J, 0.0)
    Linv = linalg.solve_triangular(L, np.eye(m), lower=True, check_finite=False)
    return GaussianPosterior(tuple(active), mu, Linv.T @ Linv, J,
                             2.0 * float(np.sum(np.log(np.diag(L)))))


def posterior(y, D, beta, alpha, active=None) -> GaussianPosterior:
    """Posterior ``N(mu, Sigma)`` with ``Sigma = (A + D^T B D)^-1`` and its log-evidence."""
    y, D, beta, alpha = _prepare(y, D, beta, alpha)
    active = tuple(range(D.shape[1])) if active is None else tuple(active)
    return posterior_from_factor(active, *ridge_evidence(y, D, beta, alpha))


def log_evidence(y, D, beta, alpha) -> float:
    """``-1/2 (ln|2 pi C| + y^T C^-1 y)`` for the columns of ``D``."""
    return posterior(y, D, beta, alpha).log_evidence


def logdet_C(D, beta, alpha) -> float:
    """``ln|C|`` via the determinant lemma."""
    beta = np.asarray(beta, dtype=float).ravel()
    D = np.asarray(D, dtype=float).reshape(beta.size, -1)
    m = D.shape[1]
    out = -float(np.sum(np.log(beta)))
    if m:
        alpha = _as_alpha(alpha, m)
        G = D.T @ (D * beta[:, None])
        G[np.diag_indices(m)] += alpha
        L = cholesky_spd(G)
        out += 2.0 * float(np.sum(np.log(np.diag(L)))) - float(np.sum(np.log(alpha)))
    return out


def term_contribution(s_m, q_m, alpha_m):
    """Evidence change from including a term with prior precision ``alpha_m``."""
    s_m, q_m, alpha_m = (np.asarray(v, dtype=float) for v in (s_m, q_m, alpha_m))
    out = 0.5 * (np.log(alpha_m) - np.log(alpha_m + s_m) + q_m**2 / (alpha_m + s_m))
    return float(out) if out.ndim == 0 else out


def optimal_alpha(s_m: float, q_m: float) -> float | None:
    """Maximiser of :func:`term_contribution` over ``alpha_m``, or ``None`` if the term never helps."""
    if s_m <= 0:
        raise ValueError("s_m must be positive")
    theta = q_m * q_m - s_m
    if theta <= 0:
        return None
    return s_m * s_m / theta


def sparsity_quality(y, D_all, beta, active, alpha_active):
    """Per-column ``(S, Q, s, q)`` for the model made of the ``active`` columns.

    ``S, Q`` use the full ``C`` of the current model; ``s, q`` use ``C_{-m}`` (the model with
    column ``m`` left out), recovered for active columns by a Sherman-Morrison downdate.
    """
    y = np.asarray(y, dtype=float).ravel()
    D_all = np.asarray(D_all, dtype=float)
    beta = np.broadcast_to(np.asarray(beta, dtype=float), y.shape)
    active = list(active)
    BDall = D_all * beta[:, None]
    S = np.einsum("ij,ij->j", D_all, BDall)
    Q = BDall.T @ y
    if active:
        alpha_active = _as_alpha(alpha_active, len(active))
        post = posterior(y, D_all[:, active], beta, alpha_active, active)
        P = BDall.T @ D_all[:, active]  # M x m : d_j^T B d_k
        S = S - np.einsum("ij,jk,ik->i", P, post.Sigma, P)
        Q = Q - P @ (post.Sigma @ (D_all[:, active].T @ (beta * y)))
    s, q = S.copy(), Q.copy()
    if active:
        a = alpha_active
        denom = a - S[active]
        s[active] = a * S[active] / denom
        q[active] = a * Q[active] / denom
    return S, Q, s, q


def log_likelihood(y, D, w, beta) -> float:
    """Gaussian log-likelihood of residuals ``y - D w`` with per-point precision ``beta``."""
    y = np.asarray(y, dtype=float).ravel()
    beta = np.broadcast_to(np.asarray(beta, dtype=float), y.shape)
    r = y - (np.asarray(D, dtype=float).reshape(y.size, -1) @ np.asarray(w, dtype=float))
    return -0.5 * (y.size * LOG_2PI - float(np.sum(np.log(beta))) + float(np.dot(beta * r, r)))


def log_prior(w, alpha) -> float:
    w = np.asarray(w, dtype=float)
    alpha = _as_alpha(alpha, w.size) if w.size else np.zeros(0)
    return -0.5 * (w.size * LOG_2PI - float(np.sum(np.log(alpha))) + float(np.dot(alpha * w, w)))


def evidence_decomposition(post: GaussianPosterior, y, D, beta, alpha):
    """Split the log-evidence into (log-likelihood at mu, log-prior at mu, 1/2 ln|2 pi Sigma|).

    The three parts sum to ``post.log_evidence``; the last two form the Occam factor.
    """
    m = post.mu.size
    ll = log_likelihood(y, D, post.mu, beta)
    lp = log_prior(post.mu, alpha) if m else 0.0
    half_logdet = 0.5 * (m * LOG_2PI - post.logdet_precision)
    return ll, lp, half_logdet
