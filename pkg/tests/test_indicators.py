import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridrun.indicators import (
    CurveTooShort,
    IndicatorError,
    LossCurve,
    compute_all,
    overfitting,
    read_curve,
    slope_stats,
    trainability,
    write_curve,
)


def literal_reference(train, slope_mean_only=False, literal_normalization=False):
    """Index-by-index reference for the slope statistics: one window of
    exactly m epochs ending at n, one just before it, and the one-epoch
    differences over the last ceil(n/10) epochs split at the mean slope.
    Pure loops, 1-based indexing, no numpy."""
    n = len(train)
    m = math.ceil(n / 20)
    if m < 1:
        m = 1
    sum1 = 0.0
    for e in range(n - m + 1, n + 1):
        sum1 += train[e - 1]
    sum2 = 0.0
    for e in range(n - 2 * m + 1, n - m + 1):
        sum2 += train[e - 1]
    slope_mean = (sum1 / m - sum2 / m)
    if not literal_normalization:
        slope_mean = slope_mean / m
    if slope_mean_only:
        return slope_mean

    tail = math.ceil(n / 10)
    plus, minus = [], []
    for k in range(n - tail + 1, n + 1):
        if k < 2:
            continue
        s = train[k - 1] - train[k - 2]
        if s >= slope_mean:
            plus.append(s)
        if s <= slope_mean:
            minus.append(s)

    def pstd(xs):
        if len(xs) < 2:
            return 0.0
        mu = sum(xs) / len(xs)
        return math.sqrt(sum((x - mu) ** 2 for x in xs) / len(xs))

    return slope_mean, pstd(plus), pstd(minus)


def curve(train, test=None):
    return LossCurve(train=list(train), test=list(test if test is not None else train))


class TestOverfitting:
    def test_hand_example(self):
        c = curve([1.0, 0.5, 0.2], [1.1, 0.6, 0.4])
        assert overfitting(c) == pytest.approx(0.2 / 0.9, abs=1e-12)

    def test_identical_curves(self):
        assert overfitting(curve([1.0, 0.5, 0.2])) == 0.0

    def test_constant_degenerate_range(self):
        assert overfitting(curve([3.0, 3.0], [3.0, 3.0])) == 0.0


class TestSlopeStats:
    def test_constant_curve(self):
        assert slope_stats(curve([2.0] * 40)) == (0.0, 0.0, 0.0)

    def test_linear_curve(self):
        train = [10 - 0.01 * e for e in range(1, 101)]
        slope_mean, sp, sm = slope_stats(curve(train))
        assert slope_mean == pytest.approx(-0.01, abs=1e-15)
        assert sp == pytest.approx(0.0, abs=1e-12)
        assert sm == pytest.approx(0.0, abs=1e-12)

    def test_literal_normalization_is_m_times_larger(self):
        train = [10 - 0.01 * e for e in range(1, 101)]
        literal, _, _ = slope_stats(curve(train), literal_normalization=True)
        assert literal == pytest.approx(-0.05, abs=1e-12)

    def test_sawtooth_tail(self):
        # n=120 makes the averaging window even (m=6), so a pure alternating
        # sawtooth averages out exactly; jitter makes the sigma sets non-trivial.
        n = 120
        train = [
            5.0 + (0.1 + 0.03 * math.sin(e)) * (1 if e % 2 == 0 else -1)
            for e in range(1, n + 1)
        ]
        got = slope_stats(curve(train))
        want = literal_reference(train)
        assert got == pytest.approx(want, abs=1e-12)
        assert abs(got[0]) < 0.05
        assert 0.0 < got[1] < 0.5 and 0.0 < got[2] < 0.5

    def test_pure_sawtooth_even_window_slope_zero(self):
        train = [5.0 + (0.1 if e % 2 == 0 else -0.1) for e in range(1, 121)]
        slope_mean, _, _ = slope_stats(curve(train))
        assert slope_mean == pytest.approx(0.0, abs=1e-12)

    def test_too_short(self):
        with pytest.raises(CurveTooShort):
            slope_stats(curve([1.0, 0.5, 0.2]))

    def test_minimum_length_four(self):
        slope_mean, sp, sm = slope_stats(curve([4.0, 3.0, 2.0, 1.0]))
        assert slope_mean == pytest.approx(-1.0, abs=1e-12)
        assert sp == 0.0 and sm == 0.0

    @settings(max_examples=200, deadline=None)
    @given(
        st.lists(st.floats(0.0, 100.0, allow_nan=False), min_size=4, max_size=300)
    )
    def test_matches_literal_reference(self, train):
        got = slope_stats(curve(train))
        want = literal_reference(train)
        for g, w in zip(got, want):
            assert g == pytest.approx(w, abs=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(
        st.lists(st.floats(0.1, 50.0, allow_nan=False), min_size=4, max_size=100),
        st.floats(-10.0, 10.0, allow_nan=False),
    )
    def test_shift_invariance(self, train, shift):
        base = slope_stats(curve(train))
        shifted = slope_stats(curve([x + shift for x in train]))
        for a, b in zip(base, shifted):
            assert b == pytest.approx(a, abs=1e-9)


class TestTrainability:
    def test_constant(self):
        assert trainability(curve([3.0] * 7)) == pytest.approx(21.0)

    def test_forced_sum(self):
        assert trainability(curve([1.0, 0.5, 0.25])) == 1.75

    @given(st.lists(st.floats(0, 1e3, allow_nan=False), min_size=1, max_size=100))
    def test_matches_summation_oracle(self, train):
        total = 0.0
        for x in train:
            total += x
        assert trainability(curve(train)) == pytest.approx(total, rel=1e-15)


class TestComputeAll:
    def test_bundle(self):
        c = curve([1.0, 0.7, 0.5, 0.2], [1.1, 0.8, 0.6, 0.4])
        got = compute_all(c, runtime_s=12.5)
        assert got.final_train_loss == 0.2
        assert got.final_test_loss == 0.4
        assert got.overfitting == pytest.approx(0.2 / 0.9, abs=1e-12)
        assert got.runtime_s == 12.5
        assert got.trainability == pytest.approx(2.4, abs=1e-12)

    def test_all_zero(self):
        got = compute_all(curve([0.0] * 8), runtime_s=3.0)
        assert (
            got.final_train_loss
            == got.final_test_loss
            == got.overfitting
            == got.slope_mean
            == got.slope_sigma_plus
            == got.slope_sigma_minus
            == got.trainability
            == 0.0
        )
        assert got.runtime_s == 3.0

    def test_propagates_too_short(self):
        with pytest.raises(CurveTooShort):
            compute_all(curve([1.0, 0.5, 0.2]), runtime_s=0.0)

    @settings(max_examples=50, deadline=None)
    @given(
        st.lists(st.floats(0.01, 10.0, allow_nan=False), min_size=4, max_size=60),
        st.floats(0.1, 100.0, allow_nan=False),
    )
    def test_scale_covariance(self, train, lam):
        test = [x * 1.5 for x in train]
        base = compute_all(curve(train, test), runtime_s=1.0)
        scaled = compute_all(
            curve([x * lam for x in train], [x * lam for x in test]), runtime_s=1.0
        )
        assert scaled.overfitting == pytest.approx(base.overfitting, abs=1e-9)
        assert scaled.trainability == pytest.approx(lam * base.trainability, rel=1e-9)
        assert scaled.slope_mean == pytest.approx(lam * base.slope_mean, rel=1e-9, abs=1e-12)
        assert scaled.slope_sigma_plus == pytest.approx(
            lam * base.slope_sigma_plus, rel=1e-9, abs=1e-12
        )

    @settings(max_examples=100, deadline=None)
    @given(st.data())
    def test_overfitting_bounded(self, data):
        n = data.draw(st.integers(4, 50))
        train = data.draw(
            st.lists(st.floats(0, 100, allow_nan=False), min_size=n, max_size=n)
        )
        test = data.draw(
            st.lists(st.floats(0, 100, allow_nan=False), min_size=n, max_size=n)
        )
        value = overfitting(curve(train, test))
        assert 0.0 <= value <= 1.0 + 1e-12


class TestCurveValidation:
    def test_rejects_nan(self):
        with pytest.raises(IndicatorError):
            LossCurve(train=[1.0, float("nan")], test=[1.0, 1.0])

    def test_rejects_empty(self):
        with pytest.raises(IndicatorError):
            LossCurve(train=[], test=[])

    def test_rejects_mismatch(self):
        with pytest.raises(IndicatorError):
            LossCurve(train=[1.0], test=[1.0, 2.0])


class TestCurveCsv:
    def test_roundtrip_exact(self, tmp_path):
        rng = np.random.default_rng(7)
        c = curve(rng.random(20).tolist(), rng.random(20).tolist())
        path = tmp_path / "curve.csv"
        write_curve(path, c)
        text = path.read_text()
        assert text.startswith("epoch,train_loss,test_loss\n")
        assert text.splitlines()[1].startswith("1,")
        loaded = read_curve(path)
        assert loaded.train == c.train and loaded.test == c.test
