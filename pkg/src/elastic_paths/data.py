"""Datasets: standardized design matrices, synthetic generators, diabetes loader.

All solvers in this package work on a `Dataset`: a standardized design matrix
(column means 0, population variances 1), a centered response, the empirical
covariance matrix and the minimum-norm OLS solution. Synthetic generators are
deterministic given a seed; replicate r of a study uses seed = base + r.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NotPSD, ParseError, ShapeError

DIABETES_COLUMNS = ("age", "sex", "bmi", "bp", "tc", "ld", "hdl", "tch", "ltg", "glu")


# ---------------------------------------------------------------------------
# Core container
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class Dataset:
    """Standardized regression problem.

    Attributes:
      X: n×p design matrix, columns standardized to mean 0 and variance 1.
      y: centered response of length n.
      cov: empirical covariance (1/n) XᵀX.
      beta_ols: minimum-norm least squares solution (pseudoinverse).
      x_mean, x_scale, y_mean: the standardization applied to the raw data,
        kept so that held-out data can be pushed through the same transform.
    """

    X: np.ndarray
    y: np.ndarray
    x_mean: np.ndarray
    x_scale: np.ndarray
    y_mean: float
    cov: np.ndarray = field(init=False, repr=False)
    beta_ols: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        X = np.ascontiguousarray(self.X, dtype=np.float64)
        y = np.ascontiguousarray(self.y, dtype=np.float64)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise ShapeError(f"incompatible shapes X{X.shape}, y{y.shape}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        cov = X.T @ X / X.shape[0]
        cov = 0.5 * (cov + cov.T)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "beta_ols", np.linalg.pinv(X, rcond=1e-10) @ y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def cov_y(self) -> np.ndarray:
        """(1/n) Xᵀy; equals cov @ beta_ols."""
        return self.X.T @ self.y / self.n

    @property
    def lambda_max(self) -> float:
        """Smallest lasso penalty with an all-zero solution."""
        return float(np.max(np.abs(self.cov_y)))

    @classmethod
    def from_raw(cls, X_raw: np.ndarray, y_raw: np.ndarray) -> "Dataset":
        """Standardize columns (population variance) and center the response."""
        X_raw = np.asarray(X_raw, dtype=np.float64)
        y_raw = np.asarray(y_raw, dtype=np.float64)
        x_mean = X_raw.mean(axis=0)
        x_scale = X_raw.std(axis=0)
        if np.any(x_scale == 0):
            raise ShapeError("constant column cannot be standardized")
        y_mean = float(y_raw.mean())
        X = (X_raw - x_mean) / x_scale
        y = y_raw - y_mean
        return cls(X=X, y=y, x_mean=x_mean, x_scale=x_scale, y_mean=y_mean)

    @classmethod
    def from_standardized(cls, X: np.ndarray, y: np.ndarray) -> "Dataset":
        """Wrap data that is already standardized/centered."""
        p = np.asarray(X).shape[1]
        return cls(X=X, y=y, x_mean=np.zeros(p), x_scale=np.ones(p), y_mean=0.0)

    def transform(self, X_raw: np.ndarray, y_raw: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Apply this dataset's standardization to held-out raw data."""
        return (np.asarray(X_raw) - self.x_mean) / self.x_scale, np.asarray(y_raw) - self.y_mean

    def mse(self, beta: np.ndarray, X: np.ndarray | None = None, y: np.ndarray | None = None) -> float:
        """Mean squared error of predictions Xβ against y (training data by default)."""
        X = self.X if X is None else X
        y = self.y if y is None else y
        r = y - X @ beta
        return float(r @ r / len(y))


def gradient_at(data: Dataset, beta: np.ndarray) -> np.ndarray:
    """(1/n) Xᵀ(Xβ − y), the least squares gradient at β."""
    return data.cov @ beta - data.cov_y


# ---------------------------------------------------------------------------
# Synthetic generators
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class BlockSpec:
    """Two equal blocks of variables; the first carries the true signal.

    Within-block correlation rho1, between-block correlation rho2, noise
    standard deviation sigma_noise. The resulting 2*p_half covariance must be
    positive semidefinite.
    """

    p_half: int = 10
    rho1: float = 0.7
    rho2: float = 0.2
    sigma_noise: float = 10.0
    n: int = 100
    seed: int = 0

    def sigma(self) -> np.ndarray:
        p = self.p_half
        s11 = self.rho1 * np.ones((p, p)) + (1 - self.rho1) * np.eye(p)
        s12 = self.rho2 * np.ones((p, p))
        return np.block([[s11, s12], [s12.T, s11]])


def _mvn(rng: np.random.Generator, sigma: np.ndarray, n: int) -> np.ndarray:
    """Multivariate normal draws via the symmetric square root of sigma.

    The spectral route tolerates (numerically) rank-deficient covariances.
    """
    w, v = np.linalg.eigh(sigma)
    if w.min() < -1e-10:
        raise NotPSD(f"covariance has eigenvalue {w.min():.3e}")
    root = v @ np.diag(np.sqrt(np.clip(w, 0.0, None))) @ v.T
    z = rng.standard_normal((n, sigma.shape[0]))
    return z @ root


def gen_simple(n: int, seed: int = 0) -> tuple[Dataset, np.ndarray]:
    """Three correlated variables (off-diagonals 0.7), noiseless response.

    The true coefficients are [1, 0.1, 0]; returns (dataset, beta_true).
    """
    if n < 3:
        raise ValueError("need n >= 3")
    sigma = np.array([[1.0, 0.7, 0.7], [0.7, 1.0, 0.7], [0.7, 0.7, 1.0]])
    beta_true = np.array([1.0, 0.1, 0.0])
    rng = np.random.default_rng(seed)
    X = _mvn(rng, sigma, n)
    y = X @ beta_true
    return Dataset.from_raw(X, y), beta_true


@dataclass(frozen=True)
class BlockSplit:
    """A 60/20/20 train/validation/test split of a block-design replicate.

    Validation and test data are standardized with the training transform.
    """

    train: Dataset
    X_val: np.ndarray
    y_val: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    beta_true: np.ndarray
    support: np.ndarray


def gen_blocks(spec: BlockSpec) -> BlockSplit:
    """Generate one replicate of the two-block design and split it 60/20/20."""
    sigma = spec.sigma()
    rng = np.random.default_rng(spec.seed)
    X = _mvn(rng, sigma, spec.n)
    beta_true = np.concatenate([rng.normal(2.0, 1.0, spec.p_half), np.zeros(spec.p_half)])
    y = X @ beta_true + rng.normal(0.0, spec.sigma_noise, spec.n)
    support = np.concatenate([np.ones(spec.p_half, bool), np.zeros(spec.p_half, bool)])

    n_train = int(round(0.6 * spec.n))
    n_val = int(round(0.2 * spec.n))
    train = Dataset.from_raw(X[:n_train], y[:n_train])
    X_val, y_val = train.transform(X[n_train:n_train + n_val], y[n_train:n_train + n_val])
    X_test, y_test = train.transform(X[n_train + n_val:], y[n_train + n_val:])
    return BlockSplit(train, X_val, y_val, X_test, y_test, beta_true, support)


# ---------------------------------------------------------------------------
# Diabetes loader
# ---------------------------------------------------------------------------
def load_diabetes(path, standardize_y: bool = False) -> Dataset:
    """Load the 442×10 diabetes file (tab-separated, header + 442 rows).

    Column order follows age, sex, bmi, bp, tc, ld, hdl, tch, ltg, glu with
    the target in the last column. With standardize_y, the response is scaled
    to unit variance after centering (useful when absolute tolerances assume
    unit-scale data).
    """
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines:
        raise ShapeError(f"{path}: empty file")
    header = lines[0].split("\t")
    if len(header) != 11:
        raise ShapeError(f"{path}: expected 11 columns, found {len(header)} in header")
    rows = []
    for i, ln in enumerate(lines[1:], start=2):
        parts = ln.split("\t")
        if len(parts) != 11:
            raise ParseError(f"{path}: expected 11 fields", row=i)
        try:
            rows.append([float(v) for v in parts])
        except ValueError as exc:
            bad = next(j for j, v in enumerate(parts) if not _is_float(v))
            raise ParseError(f"{path}: {exc}", row=i, col=bad + 1) from exc
    arr = np.asarray(rows)
    if arr.shape != (442, 11):
        raise ShapeError(f"{path}: expected 442 data rows, found {arr.shape[0]}")
    data = Dataset.from_raw(arr[:, :10], arr[:, 10])
    if standardize_y:
        scale = arr[:, 10].std()
        data = Dataset(X=data.X, y=data.y / scale, x_mean=data.x_mean,
                       x_scale=data.x_scale, y_mean=data.y_mean)
    return data


def _is_float(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False
