import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from mixgrid.exceptions import DatasetParseError, DimensionError
from mixgrid.kernels import (
    ChoiceDataset,
    GaussianMixtureDGP,
    PointMass,
    bvn_cdf,
    choice_probabilities,
    duration_kernel,
    logit_choice_prob,
    simulate_dataset,
    spell_density,
)


class TestLogitChoiceProb:
    def test_zero_utilities_are_uniform(self):
        x = np.random.default_rng(0).normal(size=(3, 2))
        np.testing.assert_allclose(logit_choice_prob(x, [0.0, 0.0]), [0.25] * 4, rtol=0, atol=1e-15)

    def test_single_good(self):
        np.testing.assert_allclose(logit_choice_prob([[math.log(3.0)]], [1.0]), [0.25, 0.75], atol=1e-15)

    def test_against_high_precision(self):
        x = [[1, 0], [0, 1], [1, 1]]
        got = logit_choice_prob(x, [1, -1])
        mpmath.mp.dps = 30
        den = 1 + mpmath.e + 1 / mpmath.e + 1
        expected = [float(v / den) for v in (1, mpmath.e, 1 / mpmath.e, 1)]
        np.testing.assert_allclose(got, expected, rtol=0, atol=1e-15)
        np.testing.assert_allclose(got, [0.19661, 0.53445, 0.07233, 0.19661], atol=1e-5)

    def test_intercepts_shift_inside_goods(self):
        got = logit_choice_prob([[0.0]], [1.0], intercepts=[math.log(3.0)])
        np.testing.assert_allclose(got, [0.25, 0.75], atol=1e-15)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            logit_choice_prob(np.ones((3, 2)), [1.0, 2.0, 3.0])
        with pytest.raises(DimensionError):
            choice_probabilities(np.ones((4, 3, 2)), np.ones((5, 3)))

    def test_extreme_utilities_stay_finite(self):
        p = logit_choice_prob([[700.0], [-700.0]], [1.0])
        assert np.all(np.isfinite(p))
        assert p.sum() == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(p, [0.0, 1.0, 0.0], atol=1e-300)

    def test_probabilities_sum_to_one_for_many_draws(self):
        rng = np.random.default_rng(1)
        x = rng.uniform(-1, 1, size=(10_000, 3, 2))
        alphas = np.array([[350.0, -300.0]])
        p = choice_probabilities(x, alphas)
        u = np.abs(x @ alphas[0])
        assert u.max() > 400
        assert np.max(np.abs(p.sum(axis=1) - 1.0)) <= 1e-12
        assert np.all(p >= 0)

    @settings(max_examples=200, deadline=None)
    @given(
        st.lists(st.floats(-5, 5), min_size=6, max_size=6),
        st.lists(st.floats(-100, 100), min_size=2, max_size=2),
    )
    def test_property_sum_to_one(self, xs, alpha):
        p = logit_choice_prob(np.reshape(xs, (3, 2)), alpha)
        assert abs(p.sum() - 1.0) <= 1e-12
        assert np.all((p >= 0) & (p <= 1))


class TestBvnCdf:
    def test_independence(self):
        assert bvn_cdf(0, 0, 0) == pytest.approx(0.25, abs=1e-15)

    @pytest.mark.parametrize("k", [-1.3, 0.0, 0.7])
    def test_marginalization(self, k):
        assert bvn_cdf(math.inf, k, 0.4) == pytest.approx(stats.norm.cdf(k), abs=1e-15)
        assert bvn_cdf(-math.inf, k, 0.4) == 0.0

    @pytest.mark.parametrize("rho", [-0.9, -0.5, 0.0, 0.1875, 0.5, 0.9])
    def test_origin_closed_form(self, rho):
        assert abs(bvn_cdf(0, 0, rho) - (0.25 + math.asin(rho) / (2 * math.pi))) <= 1e-7

    def test_origin_value_cross_checked_by_quadrature(self):
        rho = 0.1875
        # independent route: integrate the bivariate density over the negative quadrant
        dens = lambda y, x: stats.multivariate_normal.pdf([x, y], cov=[[1, rho], [rho, 1]])
        quad, _ = integrate.dblquad(dens, -12, 0, -12, 0, epsabs=1e-11)
        assert bvn_cdf(0, 0, rho) == pytest.approx(quad, abs=1e-8)
        assert bvn_cdf(0, 0, rho) == pytest.approx(0.28001923, abs=1e-7)

    @pytest.mark.parametrize("h,k,rho", [(0.3, -1.2, 0.7), (-2.0, -2.5, -0.6), (1.5, 2.5, 0.95), (-3.9, -3.9, 0.1875)])
    def test_against_genz(self, h, k, rho):
        ref = stats.multivariate_normal(mean=[0, 0], cov=[[1, rho], [rho, 1]]).cdf([h, k])
        assert bvn_cdf(h, k, rho) == pytest.approx(ref, abs=2e-7)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(-6, 6), st.floats(-6, 6), st.floats(-0.99, 0.99))
    def test_symmetric_and_bounded(self, h, k, rho):
        v = bvn_cdf(h, k, rho)
        assert v == bvn_cdf(k, h, rho)
        assert 0.0 <= v <= 1.0

    @pytest.mark.parametrize("rho", [1.0, -1.0, 1.5])
    def test_rejects_degenerate_correlation(self, rho):
        with pytest.raises(ValueError):
            bvn_cdf(0, 0, rho)


class TestMixtureDgp:
    dgp = GaussianMixtureDGP()

    def test_cdf_limits(self):
        assert self.dgp.cdf([math.inf, math.inf]) == pytest.approx(1.0, abs=1e-15)
        assert self.dgp.cdf([-math.inf, 0.3]) == 0.0

    def test_cdf_at_first_mean(self):
        v = self.dgp.cdf([-2.2, -2.2])
        first = 0.5 * (0.25 + math.asin(0.1875) / (2 * math.pi))
        assert v == pytest.approx(0.14001, abs=1e-4)
        assert v == pytest.approx(first, abs=1e-7)

    def test_cdf_by_quadrature(self):
        a = np.array([-1.0, 0.5])
        mix = lambda y, x: sum(
            0.5 * stats.multivariate_normal.pdf([x, y], mean=m, cov=self.dgp.cov) for m in self.dgp.means
        )
        quad, _ = integrate.dblquad(mix, -12, a[0], -12, a[1], epsabs=1e-10)
        assert self.dgp.cdf(a) == pytest.approx(quad, abs=1e-7)

    def test_cdf_monotone_on_lattice(self):
        axis = np.linspace(-5, 5, 11)
        values = np.array([[self.dgp.cdf([a, b]) for b in axis] for a in axis])
        assert np.all(np.diff(values, axis=0) >= -1e-12)
        assert np.all(np.diff(values, axis=1) >= -1e-12)

    def test_sample_moments(self):
        draws = self.dgp.sample(np.random.default_rng(2024), 10**6)
        np.testing.assert_allclose(draws.mean(axis=0), [-0.45, -0.45], atol=0.01)
        # law of total variance: 0.8 + 0.25 * 3.5^2
        np.testing.assert_allclose(draws.var(axis=0), [3.8625, 3.8625], atol=0.05)

    def test_sample_is_deterministic(self):
        a = self.dgp.sample(np.random.default_rng(5), 1000)
        b = self.dgp.sample(np.random.default_rng(5), 1000)
        assert np.array_equal(a, b)

    def test_median_by_symmetry(self):
        for coord in (1, 2):
            assert abs(self.dgp.marginal_quantile(coord, 0.5) + 0.45) <= 1e-12

    def test_lower_quartile_frozen(self):
        # frozen from an independent erfc-based bisection to 1e-15
        assert self.dgp.marginal_quantile(1, 0.25) == pytest.approx(-2.2001020876827555, abs=1e-10)
        assert self.dgp.marginal_quantile(2, 0.75) == pytest.approx(1.3001020876827543, abs=1e-10)

    @pytest.mark.parametrize("tau", [1e-6, 0.01, 0.25, 0.4, 0.5, 0.77, 0.999, 1 - 1e-6])
    def test_generalized_inverse(self, tau):
        q = self.dgp.marginal_quantile(1, tau)
        assert abs(self.dgp.marginal_cdf(q, 1) - tau) <= 1e-9

    @pytest.mark.parametrize("tau", [0.0, 1e-7, 1.0, 1 - 1e-7])
    def test_quantile_boundary_guard(self, tau):
        with pytest.raises(ValueError):
            self.dgp.marginal_quantile(1, tau)

    def test_invalid_parameters(self):
        with pytest.raises(ValueError):
            GaussianMixtureDGP(weights=(0.7, 0.7))
        with pytest.raises(ValueError):
            GaussianMixtureDGP(cov=((1.0, 2.0), (2.0, 1.0)))


class TestSimulateDataset:
    def test_onehot_rows_sum_to_one(self):
        data = simulate_dataset(GaussianMixtureDGP(), 500, 3, 2, np.random.default_rng(3))
        assert np.all(data.onehot.sum(axis=1) == 1)
        assert data.x.min() >= 0 and data.x.max() <= 1
        assert data.x.shape == (500, 3, 2)

    def test_degenerate_coefficients_give_uniform_shares(self):
        data = simulate_dataset(PointMass((0.0, 0.0)), 10**6, 3, 2, np.random.default_rng(4))
        shares = np.bincount(data.y, minlength=4) / data.n
        np.testing.assert_allclose(shares, 0.25, atol=0.002)

    def test_outside_share_frozen(self):
        data = simulate_dataset(GaussianMixtureDGP(), 10**6, 3, 2, np.random.default_rng(12345))
        share = np.mean(data.y == 0)
        # frozen regression value; an independent Rao-Blackwellized average of P(0) gave 0.38296 +- 0.00022
        assert share == pytest.approx(0.383204, abs=1e-12)
        assert share == pytest.approx(0.38296, abs=3 * math.sqrt(0.383 * 0.617 / 1e6) + 0.00066)

    def test_deterministic(self):
        a = simulate_dataset(GaussianMixtureDGP(), 50, 3, 2, np.random.default_rng(9))
        b = simulate_dataset(GaussianMixtureDGP(), 50, 3, 2, np.random.default_rng(9))
        assert np.array_equal(a.x, b.x) and np.array_equal(a.y, b.y)

    def test_rejects_empty_sample(self):
        with pytest.raises(ValueError):
            simulate_dataset(GaussianMixtureDGP(), 0, 3, 2, np.random.default_rng(0))


class TestDatasetCsv:
    def test_round_trip(self, tmp_path):
        data = simulate_dataset(GaussianMixtureDGP(), 20, 3, 2, np.random.default_rng(11))
        path = tmp_path / "d.csv"
        data.to_csv(path)
        header = path.read_text().splitlines()[0]
        assert header == "id,y,x_1_1,x_1_2,x_2_1,x_2_2,x_3_1,x_3_2"
        back = ChoiceDataset.read_csv(path)
        assert np.array_equal(back.x, data.x)
        assert np.array_equal(back.y, data.y)

    def test_malformed_row_names_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("id,y,x_1_1\n1,0,0.5\n2,1,abc\n")
        with pytest.raises(DatasetParseError, match="line 3") as info:
            ChoiceDataset.read_csv(path)
        assert info.value.line == 3

    def test_choice_out_of_range(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("id,y,x_1_1\n1,2,0.5\n")
        with pytest.raises(DatasetParseError, match="line 2"):
            ChoiceDataset.read_csv(path)

    def test_missing_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("1,0,0.5\n")
        with pytest.raises(DatasetParseError, match="line 1"):
            ChoiceDataset.read_csv(path)


class TestDurationKernel:
    def test_unit_spell_value(self):
        assert spell_density(1.0, 1.0, 1.0) == pytest.approx(1 / math.sqrt(2 * math.pi), abs=1e-15)
        assert spell_density(1.0, 1.0, 1.0) == pytest.approx(0.398942, abs=1e-6)

    def test_spell_integrates_to_one(self):
        val, _ = integrate.quad(lambda t: spell_density(t, 1.0, 1.0), 0, np.inf, epsabs=1e-12, limit=200)
        assert val == pytest.approx(1.0, abs=1e-6)

    @pytest.mark.parametrize("a1", [0.5, 1.0, 1.5, 2.0])
    @pytest.mark.parametrize("a2", [0.5, 1.0, 1.5, 2.0])
    def test_spell_normalized_over_grid(self, a1, a2):
        val, _ = integrate.quad(lambda t: spell_density(t, a1, a2), 0, np.inf, epsabs=1e-12, limit=400)
        assert val == pytest.approx(1.0, abs=1e-5)

    def test_vanishes_near_zero(self):
        assert duration_kernel(1e-8, 1.0, 1.0, 1.0) < 1e-100
        assert duration_kernel(1e-300, 1e-300, 1.0, 1.0) == 0.0

    def test_product_of_spells(self):
        v = duration_kernel(0.7, 2.3, 1.2, 0.8)
        assert v == pytest.approx(spell_density(0.7, 1.2, 0.8) * spell_density(2.3, 1.2, 0.8), rel=1e-14)
        assert v > 0 and math.isfinite(v)

    @pytest.mark.parametrize("t1,t2,a2", [(0.0, 1.0, 1.0), (1.0, -1.0, 1.0), (1.0, 1.0, 0.0)])
    def test_invalid_inputs(self, t1, t2, a2):
        with pytest.raises(ValueError):
            duration_kernel(t1, t2, 1.0, a2)
