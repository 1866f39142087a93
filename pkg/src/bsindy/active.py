"""Entropy-driven sequential data assimilation.

Rows of a processed pool are added one at a time, each time picking the row that most
increases the differential entropy of the Gaussian evidence under the current model, and
the model is refitted after every addition.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import make_rng
from .evidence import LOG_2PI, logdet_C, posterior
from .regression import FitConfig, FittedModel, Problem, fit_bsindy, variance_floor

HALF_1_LOG_2PI = 0.5 * (1.0 + LOG_2PI)


def entropy(D_active, beta, alpha) -> float:
    """Differential entropy ``N/2 (1 + ln 2 pi) + 1/2 ln|C|`` of the evidence."""
    beta = np.asarray(beta, dtype=float).ravel()
    if beta.size == 0:
        raise ValueError("entropy needs at least one data row")
    return beta.size * HALF_1_LOG_2PI + 0.5 * logdet_C(D_active, beta, alpha)


def entropy_gain(D_rows, beta_rows, Sigma) -> np.ndarray:
    """Entropy increase from appending each candidate row on its own.

    By the determinant lemma the new ``ln|C|`` grows by the log predictive variance
    ``1/beta + d^T Sigma d`` of the row, with ``Sigma`` the current posterior covariance.
    """
    D_rows = np.asarray(D_rows, dtype=float)
    leverage = np.einsum("ij,jk,ik->i", D_rows, Sigma, D_rows) if Sigma.size else 0.0
    return HALF_1_LOG_2PI + 0.5 * np.log(1.0 / np.asarray(beta_rows, dtype=float) + leverage)


@dataclass
class AssimilationStep:
    n_selected: int
    chosen_index: int
    t_chosen: float
    H: float
    log_evidence: float
    supports: tuple


@dataclass
class AssimilationState:
    pool: Problem
    cfg: FitConfig
    selected: list[int] = field(default_factory=list)
    model: FittedModel | None = None
    history: list[AssimilationStep] = field(default_factory=list)
    recovered_at: int | None = None

    @property
    def unselected(self) -> np.ndarray:
        mask = np.ones(self.pool.n_rows, dtype=bool)
        mask[self.selected] = False
        return np.flatnonzero(mask)

    def refit(self) -> FittedModel:
        self.model = fit_bsindy(self.pool.rows(self.selected), self.cfg)
        return self.model

    def current_entropy(self) -> float:
        sub = self.pool.rows(self.selected)
        return float(sum(entropy(sub.D_mat[:, list(d.support)], d.beta, self.cfg.alpha_scalar)
                         for d in self.model.dims))

    def record(self, chosen: int) -> None:
        self.history.append(AssimilationStep(
            n_selected=len(self.selected), chosen_index=int(chosen),
            t_chosen=float(self.pool.t[chosen]) if chosen >= 0 else float("nan"),
            H=self.current_entropy(), log_evidence=self.model.log_evidence,
            supports=tuple(self.model.supports)))


def candidate_gains(state: AssimilationState, candidates=None) -> np.ndarray:
    """Summed (over output dimensions) entropy gain of every candidate row."""
    pool, model = state.pool, state.model
    cand = state.unselected if candidates is None else np.asarray(candidates)
    sub_y = pool.y[state.selected]
    gains = np.zeros(cand.size)
    for d, dim in enumerate(model.dims):
        cols = list(dim.support)
        floor = variance_floor(sub_y[:, d], state.cfg.var_floor_rel)
        var = pool.base_var[cand, d].copy()
        if cols:
            w = dim.coef[cols]
            var += pool.var_D[np.ix_(cand, cols)] @ (w * w)
        var = np.maximum(var, floor)
        if cols:
            Sigma = dim.posterior.Sigma
        else:
            # an empty model ties every candidate; score against the full-library prior fit
            cols = list(range(pool.D_mat.shape[1]))
            sub_beta = 1.0 / np.maximum(pool.base_var[state.selected, d], floor)
            Sigma = posterior(sub_y[:, d], pool.D_mat[np.ix_(state.selected, cols)], sub_beta,
                              state.cfg.alpha_scalar).Sigma
        gains += entropy_gain(pool.D_mat[np.ix_(cand, cols)], 1.0 / var, Sigma)
    return gains


def select_next(state: AssimilationState) -> int:
    cand = state.unselected
    if cand.size == 0:
        raise ValueError("pool exhausted")
    gains = candidate_gains(state, cand)
    return int(cand[int(np.argmax(gains))])  # argmax keeps the first of tied rows


def run_assimilation(pool: Problem, cfg: FitConfig, *, k0: int | None = None,
                     max_points: int | None = None, target_supports=None,
                     stop_at_recovery: bool = True, order: str = "entropy",
                     seed: int | tuple = 0) -> AssimilationState:
    """Grow the training set from the ``k0`` earliest rows until recovery or ``max_points``.

    ``order="random"`` assimilates the remaining rows in a seeded random order instead.
    """
    M = pool.D_mat.shape[1]
    k0 = min(2 * M if k0 is None else k0, pool.n_rows)
    max_points = pool.n_rows if max_points is None else min(max_points, pool.n_rows)
    target = None if target_supports is None else [tuple(sorted(s)) for s in target_supports]
    state = AssimilationState(pool, cfg, selected=list(range(k0)))
    if order == "random":
        key = seed if isinstance(seed, tuple) else (seed,)
        queue = list(make_rng(*key).permutation(np.arange(k0, pool.n_rows)))
    elif order != "entropy":
        raise ValueError(f"unknown order {order!r}")
    state.refit()
    state.record(-1)

    def recovered() -> bool:
        return target is not None and [tuple(s) for s in state.model.supports] == target

    if recovered():
        state.recovered_at = len(state.selected)
    while len(state.selected) < max_points:
        if state.recovered_at is not None and stop_at_recovery:
            break
        nxt = select_next(state) if order == "entropy" else int(queue.pop(0))
        state.selected.append(nxt)
        state.refit()
        state.record(nxt)
        if state.recovered_at is None and recovered():
            state.recovered_at = len(state.selected)
    return state


def write_history(state: AssimilationState, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "chosen_index", "t_chosen", "H", "log_evidence", "support_bitmask"])
        for k, step in enumerate(state.history):
            masks = ";".join(str(sum(1 << j for j in s)) for s in step.supports)
            w.writerow([k, step.chosen_index, repr(step.t_chosen), repr(step.H),
                        repr(step.log_evidence), masks])
