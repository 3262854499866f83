import numpy as np
import pytest

from oracles import brute_force_constrained_ls
from uniform_lr.cone import ConeSpec, FixedZero, Free, LowerBound
from uniform_lr.errors import ConfigurationError, SingularDesign
from uniform_lr.regression import (
    RegressionData,
    constrained_ls,
    eicker_white,
    fit_regression,
    lr_stat_regression,
    ols,
    regression_cones,
    regression_test,
)


def _design(gen, n, d, rho=0.5):
    cov = rho ** np.abs(np.subtract.outer(np.arange(d), np.arange(d)))
    return gen.normal(size=(n, d)) @ np.linalg.cholesky(cov).T


class TestOls:
    def test_sample_mean(self):
        theta, s = ols(RegressionData([1.0, 2.0], [[1.0], [1.0]], ["gamma"]))
        assert theta[0] == pytest.approx(1.5)
        assert s[0, 0] == 1.0

    def test_orthogonal_design(self):
        x = np.array([[2.0, 0.0], [0.0, 3.0], [0.0, 0.0]])
        y = np.array([4.0, 6.0, 1.0])
        theta, s = ols(RegressionData(y, x, ["gamma", "beta"]))
        np.testing.assert_allclose(theta, (x.T @ y / 3) / np.diag(s))

    def test_grid_oracle(self):
        gen = np.random.default_rng(0)
        x = _design(gen, 40, 2)
        y = x @ [0.3, -0.2] + gen.normal(size=40)
        theta, _ = ols(RegressionData(y, x, ["gamma", "delta"]))
        grid = np.linspace(-1.0, 1.0, 401)
        g1, g2 = np.meshgrid(grid, grid, indexing="ij")
        rss = ((y[None, None, :] - g1[..., None] * x[:, 0] - g2[..., None] * x[:, 1]) ** 2).sum(-1)
        i, j = np.unravel_index(np.argmin(rss), rss.shape)
        assert abs(theta[0] - grid[i]) <= 0.005 and abs(theta[1] - grid[j]) <= 0.005

    def test_too_few_rows(self):
        with pytest.raises(SingularDesign):
            ols(RegressionData([1.0, 2.0], [[1.0, 2.0], [3.0, 4.0]], ["gamma", "beta"]))

    def test_collinear(self):
        x = np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]])
        with pytest.raises(SingularDesign):
            ols(RegressionData([1.0, 2.0, 3.0], x, ["gamma", "beta"]))


class TestConstrainedLs:
    def test_interior_unchanged(self):
        data = RegressionData([1.0, 2.0, 2.5], [[1.0], [1.0], [1.2]], ["gamma"])
        theta, _ = ols(data)
        np.testing.assert_allclose(constrained_ls(data, ConeSpec([LowerBound(0.0)])), theta)

    def test_clipping(self):
        data = RegressionData([-0.3, -0.3], [[1.0], [1.0]], ["gamma"])
        assert constrained_ls(data, ConeSpec([LowerBound(0.0)]))[0] == 0.0

    @pytest.mark.parametrize("seed", range(5))
    def test_correlated_design_against_enumeration(self, seed):
        gen = np.random.default_rng(seed)
        x = _design(gen, 60, 3, rho=-0.6)
        y = x @ [-0.4, 0.2, -0.3] + gen.normal(size=60)
        kinds = ["lower", "lower", "free"]
        ref, _ = brute_force_constrained_ls(y, x, kinds)
        got = constrained_ls(RegressionData(y, x, ["gamma", "beta", "delta"]), ConeSpec([LowerBound(0), LowerBound(0), Free()]))
        np.testing.assert_allclose(got, ref, atol=1e-8)


class TestLrStat:
    def test_closed_form(self):
        assert lr_stat_regression(RegressionData([1.0, 2.0], [[1.0], [1.0]], ["gamma"])) == pytest.approx(4.5)

    def test_negative_estimate(self):
        assert lr_stat_regression(RegressionData([-1.0, -2.0], [[1.0], [1.0]], ["gamma"])) == 0.0

    @pytest.mark.parametrize("seed", range(5))
    def test_residual_sum_difference(self, seed):
        gen = np.random.default_rng(10 + seed)
        x = _design(gen, 80, 2, rho=-0.7)
        y = x @ [0.1, -0.05] + gen.normal(size=80)
        _, rss_alt = brute_force_constrained_ls(y, x, ["lower", "lower"])
        _, rss_null = brute_force_constrained_ls(y, x, ["fixed", "lower"])
        lr = lr_stat_regression(RegressionData(y, x, ["gamma", "beta"]))
        assert lr == pytest.approx(rss_null - rss_alt, rel=1e-8, abs=1e-10)

    def test_cones(self):
        data = RegressionData(np.zeros(4), np.eye(4)[:, :3], ["gamma", "beta", "delta"])
        alt, null = regression_cones(data)
        assert alt.constraints == (LowerBound(0.0), LowerBound(0.0), Free())
        assert null.constraints == (FixedZero(), LowerBound(0.0), Free())


class TestEickerWhite:
    def test_unit_residuals(self):
        data = RegressionData([1.0, -1.0, 1.0, -1.0], np.ones((4, 1)), ["gamma"])
        assert eicker_white(data, [0.0])[0, 0] == pytest.approx(1.0)

    def test_zero_residuals(self):
        x = np.array([[1.0, 0.5], [0.2, 1.0], [1.0, 1.0]])
        data = RegressionData(x @ [1.0, 2.0], x, ["gamma", "beta"])
        np.testing.assert_allclose(eicker_white(data, [1.0, 2.0]), 0.0, atol=1e-28)

    def test_summation_oracle(self):
        gen = np.random.default_rng(4)
        x = gen.normal(size=(30, 3))
        y = gen.normal(size=30)
        data = RegressionData(y, x, ["gamma", "beta", "beta"])
        theta, _ = ols(data)
        e = [np.longdouble(a) - sum(np.longdouble(b) * np.longdouble(t) for b, t in zip(row, theta)) for a, row in zip(y, x)]
        ref = np.zeros((3, 3), dtype=np.longdouble)
        for et, row in zip(e, x):
            r = row.astype(np.longdouble)
            ref += et * et * np.outer(r, r)
        np.testing.assert_allclose(eicker_white(data, theta), (ref / 30).astype(float), rtol=1e-12)


class TestRegressionTest:
    def test_missing_gamma(self):
        with pytest.raises(ConfigurationError):
            RegressionData([1.0, 2.0, 3.0], np.ones((3, 1)), ["beta"])

    def test_report_fields(self):
        gen = np.random.default_rng(5)
        x = _design(gen, 200, 2, rho=-0.5)
        y = x @ [0.3, 0.0] + gen.normal(size=200)
        rep = regression_test(RegressionData(y, x, ["gamma", "beta"]), draws=2000, seed=1)
        assert rep.decision == ("Reject" if rep.lr_stat >= rep.critical_value else "FailToReject")
        assert rep.naive_cv == pytest.approx(2.7055, abs=1e-4)
        assert len(rep.b_lower) == 1 and rep.b_lower[0] <= rep.b_upper[0]
        assert rep.schema_version == 1
        assert rep.to_dict(timings=False) == regression_test(RegressionData(y, x, ["gamma", "beta"]),
                                                             draws=2000, seed=1).to_dict(timings=False)

    def test_joint_scaling_keeps_decision(self):
        gen = np.random.default_rng(6)
        x = _design(gen, 150, 2, rho=0.3)
        y = x @ [0.15, 0.1] + gen.normal(size=150)
        a = regression_test(RegressionData(y, x, ["gamma", "beta"]), draws=2000, seed=2)
        b = regression_test(RegressionData(7.0 * y, 7.0 * x, ["gamma", "beta"]), draws=2000, seed=2)
        assert a.decision == b.decision
        assert b.lr_stat == pytest.approx(49.0 * a.lr_stat, rel=1e-8)
        assert b.critical_value == pytest.approx(49.0 * a.critical_value, rel=1e-6)

    def test_constrained_residual_flag(self):
        gen = np.random.default_rng(7)
        x = _design(gen, 100, 2)
        y = x @ [0.0, -0.3] + gen.normal(size=100)
        data = RegressionData(y, x, ["gamma", "beta"])
        fit = fit_regression(data)
        rep = regression_test(data, draws=1000, constrained_residuals=True)
        np.testing.assert_allclose(rep.covariances["sigma_hat"], eicker_white(data, fit.theta_hat))
