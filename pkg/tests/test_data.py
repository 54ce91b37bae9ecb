import numpy as np
import pytest

from elastic_paths import (
    BlockSpec,
    Dataset,
    NotPSD,
    ParseError,
    ShapeError,
    gen_blocks,
    gen_simple,
    gradient_at,
    load_diabetes,
)

from conftest import DIABETES_PATH


class TestDataset:
    def test_standardization(self):
        rng = np.random.default_rng(3)
        X_raw = rng.normal(5.0, 3.0, (200, 4))
        y_raw = rng.normal(-2.0, 1.0, 200)
        ds = Dataset.from_raw(X_raw, y_raw)
        assert np.allclose(ds.X.mean(axis=0), 0.0, atol=1e-12)
        assert np.allclose(ds.X.std(axis=0), 1.0, atol=1e-12)
        assert abs(ds.y.mean()) < 1e-10
        assert np.allclose(ds.cov, ds.X.T @ ds.X / ds.n)
        assert np.allclose(ds.cov, ds.cov.T)

    def test_beta_ols_solves_normal_equations(self):
        rng = np.random.default_rng(4)
        ds = Dataset.from_raw(rng.standard_normal((100, 5)), rng.standard_normal(100))
        assert np.allclose(gradient_at(ds, ds.beta_ols), 0.0, atol=1e-12)

    def test_cov_y_identity(self):
        rng = np.random.default_rng(5)
        ds = Dataset.from_raw(rng.standard_normal((60, 3)), rng.standard_normal(60))
        assert np.allclose(ds.cov_y, ds.cov @ ds.beta_ols, atol=1e-12)
        assert ds.lambda_max == pytest.approx(np.max(np.abs(ds.cov_y)))

    def test_transform_matches_training_standardization(self):
        rng = np.random.default_rng(6)
        X_raw = rng.normal(2.0, 4.0, (80, 3))
        y_raw = rng.standard_normal(80)
        ds = Dataset.from_raw(X_raw, y_raw)
        Xt, yt = ds.transform(X_raw, y_raw)
        assert np.allclose(Xt, ds.X)
        assert np.allclose(yt, ds.y)

    def test_constant_column_rejected(self):
        X = np.ones((10, 2))
        X[:, 0] = np.arange(10)
        with pytest.raises(ShapeError):
            Dataset.from_raw(X, np.arange(10.0))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            Dataset.from_standardized(np.zeros((5, 2)), np.zeros(4))


class TestGenSimple:
    def test_covariance_and_noiseless_response(self):
        ds, beta_true = gen_simple(100_000, seed=1)
        off = ds.cov[~np.eye(3, dtype=bool)]
        assert np.all(np.abs(off - 0.7) < 0.02)
        assert np.allclose(np.diag(ds.cov), 1.0, atol=1e-12)
        # noiseless: the OLS fit reproduces y exactly
        assert np.max(np.abs(ds.y - ds.X @ ds.beta_ols)) < 1e-8
        assert np.array_equal(beta_true, [1.0, 0.1, 0.0])

    def test_deterministic(self):
        a, _ = gen_simple(50, seed=7)
        b, _ = gen_simple(50, seed=7)
        assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)

    def test_too_small_n(self):
        with pytest.raises(ValueError):
            gen_simple(2)


class TestGenBlocks:
    def test_split_sizes_and_support(self):
        split = gen_blocks(BlockSpec(n=100, seed=0))
        assert split.train.n == 60
        assert len(split.y_val) == 20 and len(split.y_test) == 20
        assert split.support.sum() == 10
        assert np.all(split.beta_true[10:] == 0.0)
        assert np.all(split.beta_true[:10] != 0.0)

    def test_sigma_structure(self):
        spec = BlockSpec(p_half=3, rho1=0.8, rho2=0.1)
        s = spec.sigma()
        assert np.allclose(np.diag(s), 1.0)
        assert s[0, 1] == 0.8 and s[0, 3] == 0.1 and s[4, 5] == 0.8

    def test_sample_covariance_close_to_sigma(self):
        spec = BlockSpec(p_half=5, rho1=0.7, rho2=0.2, n=200_000, seed=2)
        sigma = spec.sigma()
        rng_draws = gen_blocks(spec)
        # reconstruct from the standardized training block: correlations only
        corr = rng_draws.train.cov
        assert np.linalg.norm(corr - sigma) / np.linalg.norm(sigma) < 0.05

    def test_not_psd_rejected(self):
        with pytest.raises(NotPSD):
            gen_blocks(BlockSpec(p_half=10, rho1=0.1, rho2=0.9))

    def test_deterministic(self):
        a = gen_blocks(BlockSpec(seed=11))
        b = gen_blocks(BlockSpec(seed=11))
        assert np.array_equal(a.train.X, b.train.X)
        assert np.array_equal(a.y_test, b.y_test)


class TestLoadDiabetes:
    def test_shapes_and_standardization(self, diabetes_raw):
        assert diabetes_raw.X.shape == (442, 10)
        assert np.allclose(diabetes_raw.X.mean(axis=0), 0.0, atol=1e-10)
        assert np.allclose(diabetes_raw.X.std(axis=0), 1.0, atol=1e-10)

    def test_lambda_max_pinned(self, diabetes_raw, diabetes_std):
        assert diabetes_raw.lambda_max == pytest.approx(45.16003002046289, abs=1e-9)
        assert diabetes_std.lambda_max == pytest.approx(0.5864501344746883, abs=1e-12)

    def test_standardize_y_unit_variance(self, diabetes_std):
        assert diabetes_std.y.std() == pytest.approx(1.0, abs=1e-12)

    def test_parse_error_reports_row_and_col(self, tmp_path):
        src = open(DIABETES_PATH).read().split("\n")
        parts = src[3].split("\t")
        parts[4] = "oops"
        src[3] = "\t".join(parts)
        bad = tmp_path / "bad.tsv"
        bad.write_text("\n".join(src))
        with pytest.raises(ParseError) as exc:
            load_diabetes(bad)
        assert exc.value.row == 4 and exc.value.col == 5

    def test_wrong_row_count(self, tmp_path):
        src = open(DIABETES_PATH).read().split("\n")
        short = tmp_path / "short.tsv"
        short.write_text("\n".join(src[:100]))
        with pytest.raises(ShapeError):
            load_diabetes(short)

    def test_wrong_field_count(self, tmp_path):
        src = open(DIABETES_PATH).read().split("\n")
        src[5] = src[5] + "\t1.0"
        bad = tmp_path / "wide.tsv"
        bad.write_text("\n".join(src))
        with pytest.raises(ParseError) as exc:
            load_diabetes(bad)
        assert exc.value.row == 6
