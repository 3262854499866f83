import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from oracles import limit_stat_oracle, random_spd
from uniform_lr.errors import InvalidLevel, NotACorrelationMatrix, NotPositiveDefinite
from uniform_lr.limit_law import (
    GaussianLimit,
    HypothesisCones,
    default_surface_grid,
    draw_limit_stat,
    limit_stat_batch,
    max_abs_gaussian_quantile,
    quantile_surface,
    simulate_limit_quantile,
    upper_quantile,
    write_surface_csv,
)

# 0.95 quantile of max(0, N)^2 equals the 0.95 quantile of N squared.
HALF_CHI2_95 = stats.norm.ppf(0.95) ** 2


def _corr(rho):
    return np.array([[1.0, rho], [rho, 1.0]])


class TestGaussianLimit:
    def test_derived_quantities(self):
        omega = np.array([[2.0, 0.3, 0.1], [0.3, 1.0, 0.2], [0.1, 0.2, 1.5]])
        sigma = np.array([[1.0, 0.1, 0.0], [0.1, 2.0, 0.3], [0.0, 0.3, 1.0]])
        lim = GaussianLimit(omega, sigma, [2, 0])
        oi = np.linalg.inv(omega)
        np.testing.assert_allclose(lim.z_cov, oi @ sigma @ oi, rtol=1e-12)
        np.testing.assert_allclose(lim.weight, np.linalg.inv(oi[np.ix_([2, 0], [2, 0])]), rtol=1e-12)
        assert not lim.weight.flags.writeable

    def test_not_pd(self):
        with pytest.raises(NotPositiveDefinite):
            GaussianLimit([[1.0, 2.0], [2.0, 1.0]], np.eye(2), [0, 1])


class TestDrawLimitStat:
    def test_identical_cones_give_zero(self):
        lim = GaussianLimit(_corr(0.3), _corr(0.3), [0, 1])
        cones = HypothesisCones.build([], [0.5, 0.0], [0.5, 0.0])
        assert draw_limit_stat(lim, cones, [1.3, -0.4]) == 0.0

    @pytest.mark.parametrize("z, expected", [(-0.7, 0.0), (1.3, 1.69)])
    def test_scalar_closed_form(self, z, expected):
        lim = GaussianLimit([[1.0]], [[1.0]], [0])
        cones = HypothesisCones.build([False], [], [])
        assert draw_limit_stat(lim, cones, [z]) == pytest.approx(expected, abs=1e-14)

    @pytest.mark.parametrize(
        "z, expected",
        # Oracle: 2-d quadrant projections under the weight R, rho = -0.5.
        [((0.3, -0.8), 0.49), ((1.2, 0.4), 1.12), ((-0.5, -1.0), 0.0), ((2.0, -1.5), 7.5625)],
    )
    def test_two_dimensional_quadrant_case(self, z, expected):
        r = _corr(-0.5)
        lim = GaussianLimit(r, r, [0, 1])
        cones = HypothesisCones.build([False], [0.0], [0.0])
        np.testing.assert_allclose(lim.weight, r, rtol=1e-12)
        assert draw_limit_stat(lim, cones, z) == pytest.approx(expected, rel=1e-10, abs=1e-13)

    @pytest.mark.parametrize("seed", range(10))
    def test_batch_against_oracle(self, seed):
        gen = np.random.default_rng(seed)
        dg, db = int(gen.integers(1, 3)), int(gen.integers(0, 4))
        d = dg + db
        lim = GaussianLimit(random_spd(gen, d + 1), random_spd(gen, d + 1), list(range(d)))
        b = gen.exponential(size=db)
        interior = list(gen.random(dg) < 0.3)
        cones = HypothesisCones.build(interior, b, b + gen.exponential(size=db))
        Z = lim.draw(gen, 20)
        got = limit_stat_batch(lim, cones, Z)
        kinds = ["free" if g else "lower" for g in interior]
        ref = [limit_stat_oracle(lim.weight, z, kinds, list(b), list(cones.alt_cone.lower[dg:] * -1)) for z in Z]
        np.testing.assert_allclose(got, np.maximum(ref, 0.0), rtol=1e-8, atol=1e-10)


class TestCones:
    def test_cap_and_inf_become_free(self):
        cones = HypothesisCones.build([False], [math.inf], [2e6], cap=1e6)
        assert cones.null_cone.constraints[1] == cones.alt_cone.constraints[1]
        assert cones.nested

    def test_negative_bound_rejected(self):
        with pytest.raises(ValueError):
            HypothesisCones.build([False], [-1.0], [0.0])


class TestQuantiles:
    def test_upper_quantile_convention(self):
        x = np.arange(1, 101, dtype=float)
        assert upper_quantile(x, 0.95) == 95.0
        assert upper_quantile(x, 0.951) == 96.0
        assert upper_quantile(x, 0.001) == 1.0

    def test_invalid_level(self):
        lim = GaussianLimit([[1.0]], [[1.0]], [0])
        with pytest.raises(InvalidLevel):
            simulate_limit_quantile(lim, HypothesisCones.build([False], [], []), 1.0, 1000)

    def test_no_nuisance_quantile(self):
        lim = GaussianLimit([[1.0]], [[1.0]], [0])
        q = simulate_limit_quantile(lim, HypothesisCones.build([False], [], []), 0.95, 200_000, seed=4)
        assert q.value == pytest.approx(HALF_CHI2_95, abs=0.05)

    @pytest.mark.parametrize("rho", [-0.9, 0.0, 0.6])
    def test_free_nuisance_quantile(self, rho):
        lim = GaussianLimit(_corr(rho), _corr(rho), [0, 1])
        cones = HypothesisCones.build([False], [math.inf], [math.inf])
        q = simulate_limit_quantile(lim, cones, 0.95, 200_000, seed=5)
        assert q.value == pytest.approx(HALF_CHI2_95, abs=0.05)

    def test_deterministic(self):
        lim = GaussianLimit(_corr(-0.4), np.eye(2), [0, 1])
        cones = HypothesisCones.build([False], [0.3], [1.2])
        a = simulate_limit_quantile(lim, cones, 0.9, 5000, seed=11)
        b = simulate_limit_quantile(lim, cones, 0.9, 5000, seed=11)
        assert a == b

    def test_monotone_in_level(self):
        lim = GaussianLimit(_corr(-0.4), np.eye(2), [0, 1])
        cones = HypothesisCones.build([False], [0.3], [1.2])
        qs = [simulate_limit_quantile(lim, cones, p, 4000, seed=2).value for p in (0.5, 0.8, 0.9, 0.99)]
        assert qs == sorted(qs)


class TestMaxAbs:
    def test_scalar_995(self):
        q = max_abs_gaussian_quantile([[1.0]], 0.995, 200_000, seed=1)
        assert q.value == pytest.approx(stats.norm.ppf(0.9975), abs=0.02)

    def test_scalar_median(self):
        q = max_abs_gaussian_quantile([[1.0]], 0.5, 100_000, seed=2)
        assert q.value == pytest.approx(stats.norm.ppf(0.75), abs=0.02)

    @pytest.mark.parametrize("p", [0.9, 0.99])
    def test_independent_pair(self, p):
        # (2 Phi(q) - 1)^2 = p
        expected = stats.norm.ppf((1.0 + math.sqrt(p)) / 2.0)
        q = max_abs_gaussian_quantile(np.eye(2), p, 200_000, seed=3)
        assert q.value == pytest.approx(expected, abs=0.02)

    def test_rejects_non_unit_diagonal(self):
        with pytest.raises(NotACorrelationMatrix):
            max_abs_gaussian_quantile([[2.0]], 0.9)


class TestSurface:
    def test_large_b_column(self):
        rows = quantile_surface([-0.9, 0.0, 0.9], [1e3], draws=200_000, seed=7)
        for _, _, q in rows:
            assert q == pytest.approx(HALF_CHI2_95, abs=0.05)

    def test_zero_b_independent_case(self):
        # With rho = 0 the nuisance coordinate decouples: the law is max(0, N)^2.
        (row,) = quantile_surface([0.0], [0.0], draws=200_000, seed=8)
        assert row[2] == pytest.approx(HALF_CHI2_95, abs=0.05)

    def test_empty_grid(self):
        buf = io.StringIO()
        write_surface_csv(quantile_surface([], [0.0]), buf)
        assert buf.getvalue() == "rho,b,quantile\n"

    def test_default_grid(self):
        rhos, bs = default_surface_grid()
        assert len(rhos) == 39 and rhos[0] == -0.95 and rhos[-1] == 0.95
        assert len(bs) == 51 and bs[-1] == 5.0


@st.composite
def monotone_instance(draw):
    seed = draw(st.integers(0, 2**32 - 1))
    gen = np.random.default_rng(seed)
    dg, db = int(gen.integers(1, 3)), int(gen.integers(1, 5))
    d = dg + db + int(gen.integers(0, 2))
    lim = GaussianLimit(random_spd(gen, d), random_spd(gen, d), list(range(dg + db)))
    b = gen.exponential(size=db) * (gen.random(db) < 0.8)
    lo = b * gen.uniform(0.0, 1.0, db)
    hi = b + gen.exponential(size=db)
    hi[gen.random(db) < 0.2] = math.inf
    return lim, dg, lo, b, hi, gen


class TestMonotonicity:
    @settings(max_examples=100, deadline=None)
    @given(monotone_instance())
    def test_bracketed_law_dominates(self, inst):
        lim, dg, lo, b, hi, gen = inst
        Z = lim.draw(gen, 50)
        wide = limit_stat_batch(lim, HypothesisCones.build([False] * dg, lo, hi), Z)
        point = limit_stat_batch(lim, HypothesisCones.build([False] * dg, b, b), Z)
        assert np.all(wide >= point - 1e-10)
        assert np.all(point >= 0.0)
