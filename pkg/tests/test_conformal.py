import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cqrsgd import synthdata
from cqrsgd.conformal import (
    CalibrationInfeasibleError,
    CqrModelPair,
    PredictionInterval,
    calibrate,
    cmr_interval,
    cmr_interval_bounds,
    cmr_score,
    conformal_quantile_index,
    coverage,
    coverage_from_bounds,
    cqr_interval,
    cqr_interval_bounds,
    cqr_score,
    cqr_scores,
    crossing_fraction,
    length_deviation,
    length_deviation_from_bounds,
)
from cqrsgd.core import LinearQuantileModel


def make_pair(theta_lo, theta_hi, alpha=0.2):
    return CqrModelPair(
        LinearQuantileModel(theta_lo, alpha / 2),
        LinearQuantileModel(theta_hi, 1 - alpha / 2),
        alpha,
    )


# With x = (1,), these models give t_lo(x) = 1 and t_hi(x) = 3.
UNIT_PAIR = make_pair([1.0], [3.0])
UNIT_X = np.array([1.0])


class TestScores:
    def test_inside_band_negative(self):
        assert cqr_score(UNIT_PAIR, UNIT_X, 2.0) == pytest.approx(-1.0)

    def test_above_band(self):
        assert cqr_score(UNIT_PAIR, UNIT_X, 4.0) == pytest.approx(1.0)

    def test_on_boundary_zero(self):
        assert cqr_score(UNIT_PAIR, UNIT_X, 1.0) == pytest.approx(0.0)

    def test_pair_level_validation(self):
        with pytest.raises(ValueError):
            CqrModelPair(
                LinearQuantileModel([1.0], 0.2), LinearQuantileModel([3.0], 0.9), 0.2
            )

    def test_cmr_values(self):
        model = LinearQuantileModel([2.0], 0.5)
        assert cmr_score(model, UNIT_X, 5.0) == pytest.approx(3.0)
        assert cmr_score(model, UNIT_X, 2.0) == 0.0

    def test_cmr_requires_median_model(self):
        with pytest.raises(ValueError):
            cmr_score(LinearQuantileModel([2.0], 0.4), UNIT_X, 1.0)

    @given(st.floats(-50, 50))
    @settings(max_examples=100, deadline=None)
    def test_cmr_symmetric(self, delta):
        model = LinearQuantileModel([2.0], 0.5)
        t = 2.0
        assert cmr_score(model, UNIT_X, t + delta) == pytest.approx(
            cmr_score(model, UNIT_X, t - delta)
        )


class TestQuantileIndex:
    def test_paper_example(self):
        # ceil(0.9 * 100) computed exactly, not via a float ceil artifact
        assert conformal_quantile_index(99, 0.1) == 90

    def test_half(self):
        assert conformal_quantile_index(10, 0.5) == 6

    def test_infeasible(self):
        with pytest.raises(CalibrationInfeasibleError):
            conformal_quantile_index(9, 0.05)

    @pytest.mark.parametrize("m,alpha,expected", [(99, 0.1, 90), (999, 0.1, 900), (19, 0.05, 19)])
    def test_exact_values(self, m, alpha, expected):
        assert conformal_quantile_index(m, alpha) == expected

    @given(st.integers(1, 2000), st.floats(0.01, 0.5))
    @settings(max_examples=300, deadline=None)
    def test_matches_rational_ceiling(self, m, alpha):
        from fractions import Fraction
        import math

        exact = math.ceil((1 - Fraction(alpha)) * (m + 1))
        if exact > m:
            with pytest.raises(CalibrationInfeasibleError):
                conformal_quantile_index(m, alpha)
        else:
            assert conformal_quantile_index(m, alpha) == exact


class TestCalibrate:
    def test_integer_scores(self):
        scores = np.arange(1, 100)
        assert calibrate(scores, 0.1).q_hat == 90.0

    def test_single_score_infeasible(self):
        with pytest.raises(CalibrationInfeasibleError):
            calibrate([7.0], 0.4)

    def test_constant_scores(self):
        res = calibrate(np.full(50, 3.25), 0.2)
        assert res.q_hat == 3.25

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            calibrate([1.0, np.nan, 2.0], 0.1)

    @given(st.lists(st.floats(-100, 100), min_size=20, max_size=200), st.sampled_from([0.1, 0.2, 0.3]))
    @settings(max_examples=100, deadline=None)
    def test_permutation_invariant(self, scores, alpha):
        rng = np.random.default_rng(0)
        shuffled = rng.permutation(scores)
        assert calibrate(scores, alpha).q_hat == calibrate(shuffled, alpha).q_hat

    def test_oracle_equivalence_small_m(self):
        # q_hat equals the k-th smallest found by an independent selection.
        import heapq

        rng = np.random.default_rng(3)
        for m in [1, 2, 3, 10, 37, 250]:
            scores = rng.normal(size=m)
            for alpha in (0.1, 0.25, 0.5):
                try:
                    k = conformal_quantile_index(m, alpha)
                except CalibrationInfeasibleError:
                    continue
                expected = heapq.nsmallest(k, scores.tolist())[-1]
                assert calibrate(scores, alpha).q_hat == expected


class TestIntervals:
    def test_cqr_direct(self):
        iv = cqr_interval(UNIT_PAIR, 0.5, UNIT_X)
        assert (iv.lo, iv.hi) == (0.5, 3.5)
        assert iv.length == pytest.approx(3.0)

    def test_cqr_crossed_empty(self):
        crossed = make_pair([3.0], [1.0])  # t_lo = 3 > t_hi = 1
        iv = cqr_interval(crossed, 0.5, UNIT_X)
        assert iv.empty and iv.length == 0.0

    def test_cmr_direct(self):
        model = LinearQuantileModel([2.0], 0.5)
        iv = cmr_interval(model, 1.0, UNIT_X)
        assert (iv.lo, iv.hi) == (1.0, 3.0)

    def test_cmr_zero_q_degenerate(self):
        model = LinearQuantileModel([2.0], 0.5)
        iv = cmr_interval(model, 0.0, UNIT_X)
        assert iv.length == 0.0 and not iv.empty

    def test_cmr_negative_q_rejected(self):
        with pytest.raises(ValueError):
            cmr_interval(LinearQuantileModel([2.0], 0.5), -0.1, UNIT_X)

    def test_cmr_length_constant_in_x(self):
        rng = np.random.default_rng(1)
        model = LinearQuantileModel(rng.normal(size=3), 0.5)
        xs = rng.normal(size=(100, 3))
        lo, hi, empty = cmr_interval_bounds(model, 2.5, xs)
        assert not empty.any()
        assert hi - lo == pytest.approx(np.full(100, 5.0))

    def test_score_interval_duality(self):
        # y in C(x)  <=>  score(x, y) <= q_hat, for nonempty intervals.
        rng = np.random.default_rng(7)
        pair = make_pair(rng.normal(size=3), rng.normal(size=3), alpha=0.1)
        q = 0.8
        for _ in range(500):
            x = rng.normal(size=3)
            y = rng.normal() * 5
            iv = cqr_interval(pair, q, x)
            inside = iv.contains(y)
            assert inside == (cqr_score(pair, x, y) <= q) or iv.empty

    def test_monotone_nesting(self):
        rng = np.random.default_rng(8)
        pair = make_pair(rng.normal(size=2), rng.normal(size=2), alpha=0.2)
        for _ in range(100):
            x = rng.normal(size=2)
            q1, q2 = sorted(rng.normal(size=2))
            a = cqr_interval(pair, q1, x)
            b = cqr_interval(pair, q2, x)
            if a.empty:
                continue
            assert b.lo <= a.lo and a.hi <= b.hi

    def test_bounds_match_scalar_path(self):
        rng = np.random.default_rng(9)
        pair = make_pair(rng.normal(size=2), rng.normal(size=2), alpha=0.1)
        xs = rng.normal(size=(50, 2))
        lo, hi, empty = cqr_interval_bounds(pair, 0.3, xs)
        for i in range(50):
            iv = cqr_interval(pair, 0.3, xs[i])
            assert iv.empty == empty[i]
            if not iv.empty:
                assert (iv.lo, iv.hi) == pytest.approx((lo[i], hi[i]))

    def test_interval_validation(self):
        with pytest.raises(ValueError):
            PredictionInterval(2.0, 1.0)


class TestMetrics:
    def test_full_cover(self):
        ivs = [PredictionInterval(-100.0, 100.0)] * 4
        assert coverage(ivs, [0.0, 5.0, -50.0, 99.0]) == 1.0

    def test_empty_never_covers(self):
        ivs = [PredictionInterval.empty_set()] * 3
        assert coverage(ivs, [0.0, 1.0, 2.0]) == 0.0

    def test_boundary_counts_as_covered(self):
        assert coverage([PredictionInterval(0.0, 1.0)], [1.0]) == 1.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            coverage([PredictionInterval(0, 1)], [0.5, 0.6])

    def test_length_deviation_exact(self):
        ivs = [PredictionInterval(0, 2), PredictionInterval(0, 4)]
        assert length_deviation(ivs, [3.0, 3.0]) == pytest.approx(1.0)

    def test_length_deviation_zero(self):
        ivs = [PredictionInterval(0, 3)]
        assert length_deviation(ivs, [3.0]) == 0.0

    def test_crossing_fraction(self):
        # theta_hi < theta_lo for positive x, so every point crosses
        pair = make_pair([2.0], [1.0])
        assert crossing_fraction(pair, np.ones((10, 1))) == 1.0
        assert crossing_fraction(make_pair([1.0], [2.0]), np.ones((10, 1))) == 0.0


class TestMarginalCoverage:
    def test_synthetic_coverage_guarantee(self):
        # Split-conformal marginal coverage on fresh draws, oracle models:
        # mean coverage within the finite-sample band around 1 - alpha.
        spec = synthdata.draw_spec(12)
        alpha, m = 0.1, 2000
        pair = CqrModelPair(
            LinearQuantileModel(synthdata.oracle_theta(spec, alpha / 2), alpha / 2),
            LinearQuantileModel(synthdata.oracle_theta(spec, 1 - alpha / 2), 1 - alpha / 2),
            alpha,
        )
        from cqrsgd.conformal import calibrate as _calibrate, cqr_scores as _scores

        covs = []
        for t in range(20):
            cal = synthdata.sample(spec, m, seed=100 + t)
            test = synthdata.sample(spec, 2000, seed=5000 + t)
            res = _calibrate(_scores(pair, cal.x, cal.y), alpha)
            lo, hi, empty = cqr_interval_bounds(pair, res.q_hat, test.x)
            covs.append(coverage_from_bounds(lo, hi, empty, test.y))
        covs = np.array(covs)
        stderr = covs.std(ddof=1) / np.sqrt(len(covs))
        assert covs.mean() >= 1 - alpha - 3 * stderr
        assert covs.mean() <= 1 - alpha + 1 / (m + 1) + 3 * stderr

    def test_vectorized_deviation_matches_list_path(self):
        rng = np.random.default_rng(2)
        pair = make_pair(rng.normal(size=2), rng.normal(size=2) + 3, alpha=0.2)
        xs = rng.uniform(1, 5, size=(40, 2))
        lo, hi, empty = cqr_interval_bounds(pair, 0.7, xs)
        ivs = [cqr_interval(pair, 0.7, x) for x in xs]
        oracle = rng.uniform(0, 10, size=40)
        assert length_deviation(ivs, oracle) == pytest.approx(
            length_deviation_from_bounds(lo, hi, empty, oracle)
        )
