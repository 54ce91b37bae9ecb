import os

import numpy as np
import pytest

from elastic_paths import Dataset, gen_simple, load_diabetes

DIABETES_PATH = os.path.join(os.path.dirname(__file__), "..", "data", "diabetes.tsv")


def make_isotropic(n: int, beta: np.ndarray, seed: int = 0) -> Dataset:
    """Dataset with empirical covariance exactly the identity.

    Columns are an orthonormal basis (times sqrt(n)) of a centered random
    subspace, so cov = I to machine precision and beta_ols equals beta.
    """
    beta = np.asarray(beta, dtype=float)
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, len(beta)))
    A -= A.mean(axis=0)
    Q, _ = np.linalg.qr(A)
    X = Q * np.sqrt(n)
    return Dataset.from_standardized(X, X @ beta)


@pytest.fixture(scope="session")
def diabetes_raw() -> Dataset:
    return load_diabetes(DIABETES_PATH)


@pytest.fixture(scope="session")
def diabetes_std() -> Dataset:
    return load_diabetes(DIABETES_PATH, standardize_y=True)


@pytest.fixture(scope="session")
def simple300():
    return gen_simple(300, seed=0)


@pytest.fixture(scope="session")
def iso2() -> Dataset:
    return make_isotropic(50, np.array([2.0, 1.0]), seed=0)
