"""Elastic-net baselines and the penalty/optimization-time correspondence.

The penalized objective is

    (1/2n)||y - X beta||_2^2 + lambda*(alpha*||beta||_1 + (1-alpha)/2*||beta||_2^2)

with the l2 term carrying the conventional 1/2 so that the isotropic solution
has the closed form sgn(b_ols)*max(0, |b_ols| - alpha*lambda)/(1 + (1-alpha)*lambda).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .data import Dataset
from .errors import DomainError


@dataclass(frozen=True)
class ENConfig:
    alpha: float
    lam: float
    cd_tol: float = 1e-9
    cd_max_iter: int = 10**5

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")


@dataclass(frozen=True)
class ENResult:
    beta: np.ndarray
    converged: bool
    sweeps: int


# ---------------------------------------------------------------------------
# Closed form and coordinate descent
# ---------------------------------------------------------------------------
def en_closed_form_isotropic(beta_ols: np.ndarray, alpha: float, lam: float) -> np.ndarray:
    """Per-coordinate soft-threshold-and-shrink solution, valid for cov = I."""
    b = np.asarray(beta_ols, dtype=float)
    return np.sign(b) * np.maximum(0.0, np.abs(b) - alpha * lam) / (1.0 + (1.0 - alpha) * lam)


@njit(cache=True)
def _cd_sweeps(cov, covy, beta, lam, alpha, tol, max_iter):
    p = covy.shape[0]
    r = covy - cov @ beta
    thr = lam * alpha
    for it in range(max_iter):
        delta_max = 0.0
        for j in range(p):
            z = r[j] + cov[j, j] * beta[j]
            if z > thr:
                bn = (z - thr) / (cov[j, j] + lam * (1.0 - alpha))
            elif z < -thr:
                bn = (z + thr) / (cov[j, j] + lam * (1.0 - alpha))
            else:
                bn = 0.0
            d = bn - beta[j]
            if d != 0.0:
                beta[j] = bn
                for i in range(p):
                    r[i] -= cov[i, j] * d
                ad = abs(d)
                if ad > delta_max:
                    delta_max = ad
        if delta_max < tol:
            return it + 1, True
    return max_iter, False


def en_solve_cd(data: Dataset, cfg: ENConfig,
                beta0: np.ndarray | None = None) -> ENResult:
    """Cyclic coordinate descent on the penalized objective.

    Converged when no coordinate moves by more than cd_tol in one sweep; a
    non-converged solution is returned with the flag set to False.
    """
    beta = np.zeros(data.p) if beta0 is None else np.asarray(beta0, dtype=float).copy()
    sweeps, ok = _cd_sweeps(data.cov, data.cov_y, beta, float(cfg.lam),
                            float(cfg.alpha), float(cfg.cd_tol), int(cfg.cd_max_iter))
    return ENResult(beta=beta, converged=ok, sweeps=sweeps)


def default_lambda_grid(data: Dataset, n_points: int = 100) -> np.ndarray:
    """100 log-spaced penalties from lambda_max down to 1e-4*lambda_max."""
    lmax = data.lambda_max
    return np.geomspace(lmax, 1e-4 * lmax, n_points)


def en_path(data: Dataset, alpha: float,
            lambdas: np.ndarray | None = None,
            cd_tol: float = 1e-9, cd_max_iter: int = 10**5) -> list[tuple[float, np.ndarray]]:
    """Warm-started coordinate-descent solutions along a descending lambda grid."""
    if lambdas is None:
        lambdas = default_lambda_grid(data)
    lambdas = np.asarray(lambdas, dtype=float)
    if np.any(np.diff(lambdas) > 0):
        raise ValueError("lambdas must be sorted descending")
    out = []
    beta = np.zeros(data.p)
    for lam in lambdas:
        res = en_solve_cd(data, ENConfig(alpha=alpha, lam=float(lam),
                                         cd_tol=cd_tol, cd_max_iter=cd_max_iter),
                          beta0=beta)
        beta = res.beta
        out.append((float(lam), beta.copy()))
    return out


# ---------------------------------------------------------------------------
# Ridge identity
# ---------------------------------------------------------------------------
def ridge_two_forms(data: Dataset, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Ridge estimate via the normal equations and via the OLS-shrinkage form.

    beta_a = (X'X + n*lam*I)^{-1} X'y
    beta_b = (I - (I + cov/lam)^{-1}) beta_ols

    The two agree to high precision; callers use the pair as a self-check.
    """
    if lam <= 0:
        raise DomainError("ridge identity requires lambda > 0")
    X, y, n, p = data.X, data.y, data.n, data.p
    beta_a = np.linalg.solve(X.T @ X + n * lam * np.eye(p), X.T @ y)
    beta_b = (np.eye(p) - np.linalg.inv(np.eye(p) + data.cov / lam)) @ data.beta_ols
    return beta_a, beta_b


# ---------------------------------------------------------------------------
# lambda(t) maps (isotropic features)
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class LambdaContext:
    """Per-segment quantities needed by the per-coordinate lambda(t) maps.

    beta_ols_abs and beta_start_abs are |beta_ols| and |beta(t_i)|; i_diag is
    the constant per-coordinate rate of a coordinate-flow segment; int_i is
    the accumulated integral of I_d over [t_i, t] for the elastic map.
    """

    t_start: float
    beta_ols_abs: np.ndarray
    beta_start_abs: np.ndarray
    i_diag: np.ndarray | None = None
    int_i: np.ndarray | None = None


def lambda_from_t(t: float, alpha: float, context: LambdaContext | None = None):
    """Penalty corresponding to optimization time t on isotropic data.

    alpha = 0: the scalar map lambda = 1/(e^t - 1).
    alpha = 1: per coordinate, max(|b_ols| - |b(t_i)| - (t - t_i)*I_d, 0).
    alpha in (0, 1): the per-coordinate elastic map driven by
        exp(-(1-alpha) * int_{t_i}^{t} I_d).
    """
    if alpha == 0.0:
        if t <= 0:
            raise DomainError("the ridge/flow map needs t > 0")
        return 1.0 / math.expm1(t)
    if context is None:
        raise ValueError("alpha > 0 requires a LambdaContext")
    if alpha == 1.0:
        if context.i_diag is None:
            raise ValueError("alpha = 1 requires i_diag")
        return np.maximum(context.beta_ols_abs - context.beta_start_abs
                          - (t - context.t_start) * context.i_diag, 0.0)
    if context.int_i is None:
        raise ValueError("alpha in (0, 1) requires int_i")
    a = alpha / (1.0 - alpha)
    e = np.exp(-(1.0 - alpha) * np.asarray(context.int_i, dtype=float))
    shifted = e * (a + context.beta_ols_abs - context.beta_start_abs)
    num = shifted - a
    den = 2.0 * a + context.beta_ols_abs - shifted
    return np.maximum(num / den, 0.0) / (1.0 - alpha)


def lambda_approx_from_t(t: float) -> float:
    """First-order approximation lambda ~ 1/t for correlated data at alpha = 0."""
    if t <= 0:
        raise DomainError("needs t > 0")
    return 1.0 / t
