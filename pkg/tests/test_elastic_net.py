import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from elastic_paths import (
    Dataset,
    DomainError,
    ENConfig,
    FlowConfig,
    LambdaContext,
    coordinate_flow,
    default_lambda_grid,
    en_closed_form_isotropic,
    en_path,
    en_solve_cd,
    elastic_flow,
    gradient_flow_beta,
    lambda_approx_from_t,
    lambda_from_t,
    ridge_two_forms,
)

from conftest import make_isotropic


def kkt_violation(data, beta, alpha, lam):
    """Largest violation of the stationarity conditions of the penalized
    objective; zero at the exact minimizer."""
    g = data.cov @ beta - data.cov_y
    viol = 0.0
    for j in range(data.p):
        if beta[j] != 0.0:
            viol = max(viol, abs(g[j] + lam * (1.0 - alpha) * beta[j]
                                 + lam * alpha * np.sign(beta[j])))
        else:
            viol = max(viol, max(abs(g[j]) - lam * alpha, 0.0))
    return viol


class TestCoordinateDescent:
    def test_matches_isotropic_closed_form(self):
        ds = make_isotropic(80, np.array([2.0, -1.0, 0.4, 0.0]), seed=1)
        for alpha in (0.0, 0.3, 0.7, 1.0):
            for lam in (0.05, 0.3, 1.0):
                res = en_solve_cd(ds, ENConfig(alpha=alpha, lam=lam))
                assert res.converged
                expected = en_closed_form_isotropic(ds.beta_ols, alpha, lam)
                assert np.max(np.abs(res.beta - expected)) < 1e-8

    @given(seed=st.integers(min_value=0, max_value=500),
           alpha=st.floats(min_value=0.0, max_value=1.0),
           lam=st.floats(min_value=1e-3, max_value=2.0))
    @settings(max_examples=60, deadline=None)
    def test_kkt_conditions_hold(self, seed, alpha, lam):
        rng = np.random.default_rng(seed)
        ds = Dataset.from_raw(rng.standard_normal((40, 6)),
                              rng.standard_normal(40))
        res = en_solve_cd(ds, ENConfig(alpha=alpha, lam=lam))
        assert res.converged
        assert kkt_violation(ds, res.beta, alpha, lam) < 1e-6

    def test_lasso_zero_above_lambda_max(self, simple300):
        ds, _ = simple300
        res = en_solve_cd(ds, ENConfig(alpha=1.0, lam=ds.lambda_max * 1.0001))
        assert np.all(res.beta == 0.0)
        res = en_solve_cd(ds, ENConfig(alpha=1.0, lam=ds.lambda_max * 0.9))
        assert np.any(res.beta != 0.0)

    def test_negative_lambda_rejected(self):
        with pytest.raises(ValueError):
            ENConfig(alpha=0.5, lam=-1.0)


class TestENPath:
    def test_grid_contract(self, simple300):
        ds, _ = simple300
        grid = default_lambda_grid(ds)
        assert len(grid) == 100
        assert grid[0] == pytest.approx(ds.lambda_max)
        assert grid[-1] == pytest.approx(1e-4 * ds.lambda_max)
        assert np.all(np.diff(grid) < 0.0)

    def test_path_runs_and_densifies(self, simple300):
        ds, _ = simple300
        fits = en_path(ds, 0.5)
        assert len(fits) == 100
        l1 = [np.abs(b).sum() for _, b in fits]
        assert l1[-1] > l1[0]
        assert np.max(np.abs(fits[-1][1] - ds.beta_ols)) < 0.05

    def test_ascending_grid_rejected(self, simple300):
        ds, _ = simple300
        with pytest.raises(ValueError):
            en_path(ds, 0.5, np.array([0.1, 0.2]))


class TestRidge:
    def test_two_forms_agree(self, diabetes_std):
        for lam in np.geomspace(1e-3, 10.0, 9):
            a, b = ridge_two_forms(diabetes_std, lam)
            assert np.max(np.abs(a - b)) < 1e-9

    def test_limits(self, diabetes_std):
        a, _ = ridge_two_forms(diabetes_std, 1e-10)
        assert np.max(np.abs(a - diabetes_std.beta_ols)) < 1e-4
        a, _ = ridge_two_forms(diabetes_std, 1e8)
        assert np.max(np.abs(a)) < 1e-4

    def test_domain_error(self, diabetes_std):
        with pytest.raises(DomainError):
            ridge_two_forms(diabetes_std, 0.0)


class TestLambdaMaps:
    def test_pure_ridge_map_matches_gradient_flow(self, iso2):
        for t in np.linspace(0.1, 6.0, 25):
            lam = lambda_from_t(t, 0.0)
            ridge, _ = ridge_two_forms(iso2, lam)
            flow = gradient_flow_beta(iso2, t)
            assert np.max(np.abs(ridge - flow)) < 1e-9

    def test_pure_lasso_map_on_first_segment(self, iso2):
        # on isotropic data the first coordinate-flow segment moves only the
        # leading coordinate at unit rate; the per-coordinate penalties are
        # |b_ols| minus the distance travelled
        path = coordinate_flow(iso2, FlowConfig(alpha=1.0))
        seg = path.segments[0]
        ctx = LambdaContext(t_start=0.0, beta_ols_abs=np.abs(iso2.beta_ols),
                            beta_start_abs=np.zeros(2), i_diag=seg.i_taylor[0])
        for t in (0.2, 0.6, 0.9):
            lams = lambda_from_t(t, 1.0, ctx)
            beta = path.beta_at(t)
            for j in range(2):
                expected = en_closed_form_isotropic(
                    iso2.beta_ols[j:j + 1], 1.0, float(lams[j]))[0]
                assert beta[j] == pytest.approx(expected, abs=1e-10)

    def test_elastic_map_matches_closed_form(self, iso2):
        alpha = 0.5
        path = elastic_flow(iso2, FlowConfig(alpha=alpha))
        ctx0 = dict(t_start=0.0, beta_ols_abs=np.abs(iso2.beta_ols),
                    beta_start_abs=np.zeros(2))
        for t in (0.3, 0.8, 1.2):
            ctx = LambdaContext(int_i=path.int_i_at(t), **ctx0)
            lams = lambda_from_t(t, alpha, ctx)
            beta = path.beta_at(t)
            for j in range(2):
                expected = en_closed_form_isotropic(
                    iso2.beta_ols[j:j + 1], alpha, float(lams[j]))[0]
                assert beta[j] == pytest.approx(expected, abs=1e-10)

    def test_map_domain_and_context_errors(self):
        with pytest.raises(DomainError):
            lambda_from_t(0.0, 0.0)
        with pytest.raises(ValueError):
            lambda_from_t(1.0, 0.5)
        ctx = LambdaContext(t_start=0.0, beta_ols_abs=np.ones(2),
                            beta_start_abs=np.zeros(2))
        with pytest.raises(ValueError):
            lambda_from_t(1.0, 1.0, ctx)
        with pytest.raises(ValueError):
            lambda_from_t(1.0, 0.5, ctx)
        with pytest.raises(DomainError):
            lambda_approx_from_t(0.0)

    def test_approximate_map(self):
        assert lambda_approx_from_t(4.0) == pytest.approx(0.25)
