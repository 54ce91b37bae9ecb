"""Model-selection criteria and support-recovery measures.

Selection works on explicit candidate lists of (alpha, penalty, beta) so that
both path-based solvers (penalty axis = optimization time, where a smaller t
means a larger penalty) and grid-based solvers (penalty axis = lambda) share
one implementation; `penalty_dir` encodes the orientation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .data import Dataset

ZERO_TOL = 1e-8

CRITERION_VAL_MSE = "ValMSE"
CRITERION_ONE_SE_CV = "OneSE_CV"


@dataclass(frozen=True)
class PathMetrics:
    sensitivity: float | None
    specificity: float | None
    test_mse: float
    true_path_rate: float


@dataclass(frozen=True)
class SelectionResult:
    alpha_star: float
    t_or_lambda_star: float
    beta_star: np.ndarray
    criterion: str


def _support(beta: np.ndarray, zero_tol: float) -> np.ndarray:
    return np.abs(np.asarray(beta)) > zero_tol


def confusion_rates(beta_hat: np.ndarray, beta_true_support: np.ndarray,
                    zero_tol: float = ZERO_TOL) -> tuple[float | None, float | None]:
    """(sensitivity, specificity) of the selected support.

    A rate whose reference class is empty is undefined and returned as None;
    callers exclude such values from averages.
    """
    sel = _support(beta_hat, zero_tol)
    true = np.asarray(beta_true_support, bool)
    if sel.shape != true.shape:
        raise ValueError("support vectors must have the same length")
    n_pos = int(true.sum())
    n_neg = int((~true).sum())
    sens = float((sel & true).sum() / n_pos) if n_pos else None
    spec = float((~sel & ~true).sum() / n_neg) if n_neg else None
    return sens, spec


def _path_samples(path, n_samples: int = 2048) -> tuple[np.ndarray, np.ndarray]:
    """(l1, beta) sample arrays for either a discrete or an analytical path."""
    if hasattr(path, "beta") and getattr(path, "beta", None) is not None:
        beta = np.asarray(path.beta)
        return np.sum(np.abs(beta), axis=1), beta
    ts = np.linspace(0.0, path.t_end, n_samples)
    beta = path.beta_at(ts)
    return np.sum(np.abs(beta), axis=1), beta


def true_path_rate(path, beta_true_support: np.ndarray,
                   zero_tol: float = ZERO_TOL) -> float:
    """Fraction of the l1-norm axis, from 0 to its maximum along the path,
    where the selected support equals the true support.

    The support indicator is constant on each inter-sample interval (taken
    from the left sample), so the value is stable under re-sampling.
    """
    l1, beta = _path_samples(path)
    true = np.asarray(beta_true_support, bool)
    correct = np.all(_support(beta, zero_tol) == true[None, :], axis=1)
    if len(l1) == 1:
        return float(correct[0])
    l1_max = float(l1.max())
    if l1_max == 0.0:
        return float(correct[0])
    covered = float(np.sum(np.diff(l1) * correct[:-1]))
    return min(max(covered / l1_max, 0.0), 1.0)


def count_models(path, zero_tol: float = ZERO_TOL) -> int:
    """Number of distinct nonzero support sets along the path; the empty
    model does not count and repeats count once."""
    _, beta = _path_samples(path)
    seen = {frozenset(np.flatnonzero(row)) for row in _support(beta, zero_tol)}
    seen.discard(frozenset())
    return len(seen)


def select_val_mse(candidates: Sequence[tuple[float, float, np.ndarray]],
                   X_val: np.ndarray, y_val: np.ndarray,
                   penalty_dir: int = 1) -> SelectionResult:
    """Candidate with the lowest validation MSE.

    candidates: (alpha, penalty_value, beta) triples. penalty_dir = +1 when a
    larger value means a larger penalty (lambda axes), -1 when a smaller value
    does (time axes). Ties prefer the larger penalty, then the smaller alpha.
    """
    if len(candidates) == 0:
        raise ValueError("empty candidate grid")
    X_val = np.asarray(X_val)
    y_val = np.asarray(y_val)

    def key(c):
        alpha, val, beta = c
        r = y_val - X_val @ beta
        return (float(r @ r / len(y_val)), -penalty_dir * val, alpha)

    alpha, val, beta = min(candidates, key=key)
    return SelectionResult(alpha_star=alpha, t_or_lambda_star=val,
                           beta_star=np.asarray(beta).copy(),
                           criterion=CRITERION_VAL_MSE)


def select_one_se_cv(data: Dataset, alpha_star: float,
                     solver: Callable[[Dataset, float], list[tuple[float, np.ndarray]]],
                     folds: int = 10, penalty_dir: int = 1,
                     seed: int = 0) -> SelectionResult:
    """Cross-validated selection at fixed alpha with the one-standard-error rule.

    solver(train_data, alpha) must return (penalty_value, beta) pairs on the
    same penalty grid for every training subset. Chooses the largest penalty
    whose mean CV MSE is within one standard error (of the fold MSEs at the
    minimizer) of the minimum mean, never below the minimizing penalty.
    """
    if folds < 2:
        raise ValueError("need folds >= 2")
    rng = np.random.default_rng(seed)
    idx = rng.permutation(data.n)
    chunks = np.array_split(idx, folds)

    fold_mse = []
    grid = None
    for f in range(folds):
        test_idx = chunks[f]
        train_idx = np.concatenate([chunks[g] for g in range(folds) if g != f])
        train = Dataset.from_standardized(data.X[train_idx], data.y[train_idx])
        fits = solver(train, alpha_star)
        vals = np.array([v for v, _ in fits])
        if grid is None:
            grid = vals
        elif not np.allclose(vals, grid):
            raise ValueError("solver must use a common penalty grid across folds")
        Xt, yt = data.X[test_idx], data.y[test_idx]
        fold_mse.append([float(np.mean((yt - Xt @ b) ** 2)) for _, b in fits])
    fold_mse = np.asarray(fold_mse)  # (folds, n_grid)
    mean = fold_mse.mean(axis=0)
    k_min = int(np.argmin(mean))
    sem = float(np.std(fold_mse[:, k_min], ddof=1) / np.sqrt(folds))
    ok = mean <= mean[k_min] + sem
    # among admissible penalties at or above the minimizer, take the largest
    order = penalty_dir * grid
    admissible = [k for k in range(len(grid)) if ok[k] and order[k] >= order[k_min]]
    k_star = max(admissible, key=lambda k: order[k])

    full = solver(data, alpha_star)
    val, beta = full[k_star]
    return SelectionResult(alpha_star=alpha_star, t_or_lambda_star=float(grid[k_star]),
                           beta_star=np.asarray(beta).copy(),
                           criterion=CRITERION_ONE_SE_CV)


def path_metrics(beta_star: np.ndarray, path, beta_true_support: np.ndarray,
                 X_test: np.ndarray, y_test: np.ndarray,
                 zero_tol: float = ZERO_TOL) -> PathMetrics:
    """Bundle the evaluation measures for one fitted model."""
    sens, spec = confusion_rates(beta_star, beta_true_support, zero_tol)
    r = np.asarray(y_test) - np.asarray(X_test) @ beta_star
    return PathMetrics(sensitivity=sens, specificity=spec,
                       test_mse=float(r @ r / len(r)),
                       true_path_rate=true_path_rate(path, beta_true_support, zero_tol))
