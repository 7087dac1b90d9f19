import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cqrsgd.core import (
    Dataset,
    DistributionSpec,
    LinearQuantileModel,
    Sample,
    pinball_loss,
    pinball_subgradient,
    predict,
)

finite_floats = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)
levels = st.floats(0.01, 0.99)


class TestPinballLoss:
    def test_zero_at_match(self):
        assert pinball_loss(1.0, 1.0, 0.3) == 0.0

    def test_symmetric_at_half(self):
        assert pinball_loss(0.0, 1.0, 0.5) == pytest.approx(0.5)

    def test_below_branch(self):
        assert pinball_loss(2.0, 1.0, 0.9) == pytest.approx(0.1)

    def test_rejects_bad_gamma(self):
        for gamma in (0.0, 1.0, -0.2, 1.7):
            with pytest.raises(ValueError):
                pinball_loss(0.0, 1.0, gamma)

    def test_vectorized(self):
        out = pinball_loss(np.array([0.0, 2.0]), np.array([1.0, 1.0]), 0.9)
        assert out == pytest.approx([0.9, 0.1])

    @given(t1=finite_floats, t2=finite_floats, y=finite_floats, lam=st.floats(0, 1), gamma=levels)
    @settings(max_examples=200, deadline=None)
    def test_convex_in_t(self, t1, t2, y, lam, gamma):
        mix = lam * t1 + (1 - lam) * t2
        lhs = pinball_loss(mix, y, gamma)
        rhs = lam * pinball_loss(t1, y, gamma) + (1 - lam) * pinball_loss(t2, y, gamma)
        assert lhs <= rhs + 1e-12 + 1e-12 * abs(rhs)

    @given(t=finite_floats, y=finite_floats, gamma=levels)
    @settings(max_examples=200, deadline=None)
    def test_nonnegative_and_zero_iff_match(self, t, y, gamma):
        loss = pinball_loss(t, y, gamma)
        assert loss >= 0.0
        if t != y:
            assert loss > 0.0


class TestPinballSubgradient:
    def test_above_branch(self):
        g = pinball_subgradient([0.0, 0.0], [1.0, 2.0], 1.0, 0.5)
        assert g == pytest.approx([-0.5, -1.0])

    def test_below_branch(self):
        g = pinball_subgradient([2.0, 0.0], [1.0, 0.0], 1.0, 0.5)
        assert g == pytest.approx([0.5, 0.0])

    def test_kink_uses_upper_branch(self):
        # y exactly equals theta @ x: indicator 0, so the slope is -gamma * x
        g = pinball_subgradient([1.0], [1.0], 1.0, 0.3)
        assert g == pytest.approx([-0.3])

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            pinball_subgradient([1.0, 2.0], [1.0], 0.0, 0.5)

    def test_matches_finite_differences_on_batch(self):
        # Central differences of the batch-mean loss at a kink-free theta.
        rng = np.random.default_rng(42)
        x = rng.normal(size=(64, 3))
        y = rng.normal(size=64)
        theta = rng.normal(size=3)
        gamma = 0.73
        assert not np.any(np.isclose(x @ theta, y))  # no sample on the kink

        analytic = np.mean(
            [pinball_subgradient(theta, x[i], y[i], gamma) for i in range(64)], axis=0
        )
        h = 1e-7
        numeric = np.empty(3)
        for j in range(3):
            e = np.zeros(3)
            e[j] = h
            up = np.mean(pinball_loss(x @ (theta + e), y, gamma))
            dn = np.mean(pinball_loss(x @ (theta - e), y, gamma))
            numeric[j] = (up - dn) / (2 * h)
        assert analytic == pytest.approx(numeric, abs=1e-6)

    @given(
        t=st.floats(-100, 100),
        tp=st.floats(-100, 100),
        y=st.floats(-100, 100),
        gamma=levels,
    )
    @settings(max_examples=200, deadline=None)
    def test_valid_scalar_subgradient(self, t, tp, y, gamma):
        # L(t') >= L(t) + g (t' - t) for the scalar slope g at t.
        g = pinball_subgradient([t], [1.0], y, gamma)[0]
        lhs = pinball_loss(tp, y, gamma)
        rhs = pinball_loss(t, y, gamma) + g * (tp - t)
        assert lhs >= rhs - 1e-9


class TestPredict:
    def test_dot_product(self):
        model = LinearQuantileModel([1.0, 1.0], 0.5)
        assert predict(model, [2.0, 3.0]) == pytest.approx(5.0)

    def test_zero_parameters(self):
        model = LinearQuantileModel([0.0, 0.0], 0.5)
        assert predict(model, [17.0, -3.0]) == 0.0

    def test_label_support_corner(self):
        # theta = (1.5, 1.5) at x = (20, 20) is the largest prediction on the box
        model = LinearQuantileModel([1.5, 1.5], 0.9)
        assert predict(model, [20.0, 20.0]) == pytest.approx(60.0)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            predict(LinearQuantileModel([1.0], 0.5), [1.0, 2.0])

    @given(
        a=st.floats(-10, 10),
        b=st.floats(-10, 10),
        data=st.lists(st.floats(-100, 100), min_size=4, max_size=4),
    )
    @settings(max_examples=100, deadline=None)
    def test_linear_in_x(self, a, b, data):
        model = LinearQuantileModel([1.25, -0.5], 0.5)
        x1, x2 = np.array(data[:2]), np.array(data[2:])
        combo = predict(model, a * x1 + b * x2)
        parts = a * predict(model, x1) + b * predict(model, x2)
        assert combo == pytest.approx(parts, abs=1e-7 * (1 + abs(parts)))

    def test_predict_many_matches_scalar(self):
        rng = np.random.default_rng(0)
        model = LinearQuantileModel(rng.normal(size=4), 0.25)
        xs = rng.normal(size=(10, 4))
        batched = model.predict_many(xs)
        assert batched == pytest.approx([predict(model, x) for x in xs])


class TestTypes:
    def test_sample_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            Sample([1.0, np.nan], 0.0)
        with pytest.raises(ValueError):
            Sample([1.0], np.inf)

    def test_dataset_shape_checks(self):
        with pytest.raises(ValueError):
            Dataset(np.zeros((3, 2)), np.zeros(4))
        with pytest.raises(ValueError):
            Dataset(np.zeros((3,)), np.zeros(3))

    def test_dataset_immutable(self):
        data = Dataset(np.ones((2, 2)), np.zeros(2))
        with pytest.raises(ValueError):
            data.x[0, 0] = 5.0

    def test_dataset_roundtrip_samples(self):
        data = Dataset([[1.0, 2.0], [3.0, 4.0]], [5.0, 6.0])
        again = Dataset.from_samples(list(data))
        assert np.array_equal(again.x, data.x)
        assert np.array_equal(again.y, data.y)

    def test_model_gamma_domain(self):
        with pytest.raises(ValueError):
            LinearQuantileModel([1.0], 0.0)

    def test_distribution_spec_invariants(self):
        good = dict(
            B=2.0, K=1.0, d=2, lambda_min=0.5, lambda_max=2.0,
            f_min=0.1, f_max=1.0, y_min=-3.0, y_max=3.0,
        )
        DistributionSpec(**good)
        with pytest.raises(ValueError):
            DistributionSpec(**{**good, "lambda_max": 5.0})  # exceeds B^2
        with pytest.raises(ValueError):
            DistributionSpec(**{**good, "f_min": 0.0})
        with pytest.raises(ValueError):
            DistributionSpec(**{**good, "y_min": 4.0})
