"""Banded derivative / projection operators for central differences and the weak form.

Both schemes produce a pair of ``N x Ñ`` matrices with ``N = Ñ - 2n``: ``L_dt`` estimates
the (projected) time derivative and ``L_I`` the matching projection of the signal, so
that ``L_dt @ X ≈ L_I @ dX/dt``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import sparse


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class Stencil:
    a: np.ndarray  # derivative row, units 1/time
    b: np.ndarray  # projection row, dimensionless
    half_width: int
    scheme: str
    dt: float

    @property
    def width(self) -> int:
        return 2 * self.half_width + 1


@dataclass(frozen=True)
class DerivativeOperators:
    L_dt: sparse.csr_matrix
    L_I: sparse.csr_matrix
    L_dt_sq: sparse.csr_matrix
    L_I_sq: sparse.csr_matrix
    trim: int
    stencil: Stencil

    @property
    def shape(self) -> tuple[int, int]:
        return self.L_dt.shape


def central_weights(n: int) -> list[Fraction]:
    """Exact first-derivative weights of the order-``2n`` central difference (unit spacing)."""
    if n < 1:
        raise ValueError("half width must be >= 1")
    offsets = list(range(-n, n + 1))
    size = len(offsets)
    # Vandermonde system sum_j c_j k_j^p = delta_{p,1}, solved in exact arithmetic
    A = [[Fraction(k) ** p for k in offsets] + [Fraction(int(p == 1))] for p in range(size)]
    for col in range(size):
        piv = next(r for r in range(col, size) if A[r][col] != 0)
        A[col], A[piv] = A[piv], A[col]
        inv = 1 / A[col][col]
        A[col] = [v * inv for v in A[col]]
        for r in range(size):
            if r != col and A[r][col] != 0:
                f = A[r][col]
                A[r] = [vr - f * vc for vr, vc in zip(A[r], A[col])]
    return [A[r][size] for r in range(size)]


def central_difference_stencil(n: int, dt: float) -> Stencil:
    if dt <= 0:
        raise ValueError("dt must be positive")
    a_hat = np.array([float(c) for c in central_weights(n)])
    b = np.zeros(2 * n + 1)
    b[n] = 1.0
    return Stencil(a=a_hat / dt, b=b, half_width=n, scheme="central_fd", dt=dt)


def weak_form_stencil(n: int, dt: float, p: int = 2) -> Stencil:
    """Galerkin stencil with test function ``(s^2 - 1)^p`` on ``2n + 1`` equispaced nodes.

    Composite-trapezoid quadrature. Rows are normalised so that the projection sums to one
    and the derivative row differentiates a linear signal exactly; the bare trapezoid rule
    is only O(h^2) consistent for the derivative row.
    """
    if n < 2:
        raise ValueError("weak form needs at least 5 points (n >= 2)")
    if p < 1:
        raise ValueError("test-function power p must be >= 1 so that phi vanishes at the window ends")
    if dt <= 0:
        raise ValueError("dt must be positive")
    s = np.arange(-n, n + 1) / n
    h = 1.0 / n
    w = np.full(2 * n + 1, h)
    w[0] = w[-1] = 0.5 * h
    phi = (s**2 - 1.0) ** p
    # d/dt = (ds/dt) d/ds with s = (t - t_c) / (n dt)
    dphi = 2.0 * p * s * (s**2 - 1.0) ** (p - 1) / (n * dt)
    b = w * phi
    a = -w * dphi  # integration by parts moves the derivative onto phi
    b = b / b.sum()
    offsets = np.arange(-n, n + 1) * dt
    a = a / np.dot(a, offsets)
    return Stencil(a=a, b=b, half_width=n, scheme="weak_form", dt=dt)


def _banded(row: np.ndarray, n_rows: int) -> sparse.csr_matrix:
    width = row.size
    diags = [np.full(n_rows, v) for v in row]
    return sparse.diags(diags, offsets=list(range(width)), shape=(n_rows, n_rows + width - 1),
                        format="csr")


def build_operators(stencil: Stencil, n_samples: int) -> DerivativeOperators:
    n = stencil.half_width
    if n_samples <= 2 * n:
        raise InsufficientDataError(
            f"{stencil.scheme} stencil of width {stencil.width} needs more than {2 * n} samples, "
            f"got {n_samples}")
    rows = n_samples - 2 * n
    return DerivativeOperators(
        L_dt=_banded(stencil.a, rows),
        L_I=_banded(stencil.b, rows),
        L_dt_sq=_banded(stencil.a**2, rows),
        L_I_sq=_banded(stencil.b**2, rows),
        trim=n,
        stencil=stencil,
    )


def make_stencil(scheme: str, dt: float, *, order: int | None = None, points: int | None = None,
                 p: int = 2) -> Stencil:
    """Config-level constructor: FD by accuracy ``order`` (even), weak form by ``points`` (odd)."""
    if scheme in ("fd", "central_fd"):
        if order is None or order < 2 or order % 2:
            raise ValueError(f"finite-difference order must be an even integer >= 2, got {order}")
        return central_difference_stencil(order // 2, dt)
    if scheme in ("weak", "weak_form"):
        if points is None or points < 5 or points % 2 == 0:
            raise ValueError(f"weak-form point count must be odd and >= 5, got {points}")
        return weak_form_stencil((points - 1) // 2, dt, p)
    raise ValueError(f"unknown derivative scheme {scheme!r}")


def _check(ops: DerivativeOperators, M: np.ndarray) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.shape[0] != ops.L_dt.shape[1]:
        raise ValueError(f"operator expects {ops.L_dt.shape[1]} rows, got {M.shape[0]}")
    return M


def apply(ops: DerivativeOperators, X) -> np.ndarray:
    """Derivative estimate ``L_dt @ X`` (N x D)."""
    return ops.L_dt @ _check(ops, X)


def project(ops: DerivativeOperators, Theta) -> np.ndarray:
    """Projection ``L_I @ Theta``."""
    return ops.L_I @ _check(ops, Theta)


def apply_variance(ops: DerivativeOperators, sigma_x2) -> np.ndarray:
    """Variance of ``L_dt @ X`` for independent entries with variance ``sigma_x2``."""
    return ops.L_dt_sq @ _check(ops, sigma_x2)


def project_variance(ops: DerivativeOperators, var_Theta) -> np.ndarray:
    return ops.L_I_sq @ _check(ops, var_Theta)


def interior_times(ops: DerivativeOperators, t) -> np.ndarray:
    """Time stamps of the rows kept after trimming (window centres)."""
    return np.asarray(t)[ops.trim: len(t) - ops.trim]
