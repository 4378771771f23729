import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from smooth_reward.snra_core import (REWARD_FLOOR, DomainError, OperatorKind, SharpnessSchedule,
                                     SnraParams, hardened_reward, logistic, schedule_k, snra,
                                     snra_gradient)

SIG = OperatorKind.SIGMOID
TANH = OperatorKind.TANH_SHIFTED

ks = st.floats(min_value=1e-3, max_value=1e3, allow_nan=False)
errs = st.floats(min_value=0.0, max_value=1e3, allow_nan=False)


def oracle_reward(k, e):
    mp.mp.dps = 50
    return float(2 / (1 + mp.exp(mp.mpf(k) * mp.mpf(e))))


class TestSnra:
    def test_anchor_both_kinds(self):
        for k in (1e-6, 0.5, 1.0, 100.0, 1e6):
            assert snra(SnraParams(k), 0.0) == 1.0
            assert snra(SnraParams(k, TANH), 0.0) == 1.0

    def test_half_at_log3(self):
        assert snra(SnraParams(1.0), math.log(3)) == pytest.approx(0.5, rel=1e-14)

    def test_target_reward_level(self):
        e_star = math.log(199) / 100
        assert snra(SnraParams(100.0), e_star) == pytest.approx(0.01, rel=1e-12)

    def test_matches_extended_precision(self):
        rng = np.random.default_rng(3)
        for k, e in zip(10 ** rng.uniform(-2, 2, 200), rng.uniform(0, 5, 200)):
            assert snra(SnraParams(k), e) == pytest.approx(oracle_reward(k, e), rel=1e-12)

    def test_tanh_variant_formula(self):
        for k, e in [(0.3, 0.2), (5.0, 0.01), (2.0, 1.3)]:
            assert snra(SnraParams(k, TANH), e) == pytest.approx(1 - math.tanh(k * e), rel=1e-12)

    def test_overflow_saturates_to_floor(self):
        r = snra(SnraParams(1e4), 1e4)
        assert r == REWARD_FLOOR and r > 0
        assert snra(SnraParams(1e4), 0.01) < 1e-40

    def test_array_input(self):
        out = snra(SnraParams(2.0), np.array([0.0, 1.0, 1e6]))
        assert out.shape == (3,)
        assert np.all(np.isfinite(out)) and out[0] == 1.0

    @pytest.mark.parametrize("bad", [-1e-12, -1.0, math.nan, math.inf])
    def test_rejects_bad_error(self, bad):
        with pytest.raises(DomainError):
            snra(SnraParams(1.0), bad)

    @pytest.mark.parametrize("k", [0.0, -1.0, math.inf, math.nan])
    def test_rejects_bad_sharpness(self, k):
        with pytest.raises(DomainError):
            SnraParams(k)

    @given(ks, errs)
    def test_range(self, k, e):
        r = snra(SnraParams(k), e)
        assert 0 < r <= 1

    @given(ks, st.floats(0, 50), st.floats(1e-6, 50))
    def test_monotone_in_error(self, k, e1, gap):
        p = SnraParams(k)
        r1, r2 = snra(p, e1), snra(p, e1 + gap)
        assert r1 >= r2
        if r1 > 1e-300 and k * gap > 1e-9:
            assert r1 > r2

    @given(st.floats(1e-3, 100), st.floats(1e-3, 10), st.floats(1.01, 10))
    def test_monotone_in_sharpness(self, k, e, factor):
        lo, hi = snra(SnraParams(k), e), snra(SnraParams(k * factor), e)
        assert lo >= hi
        if hi > 1e-300:
            assert lo > hi

    def test_hardening_limit(self):
        e = 0.05
        rewards = [snra(SnraParams(k), e) for k in (1, 10, 100, 1000, 1e4)]
        assert all(a > b for a, b in zip(rewards, rewards[1:]))
        assert rewards[-1] < 1e-40


class TestGradient:
    def test_value_at_zero(self):
        assert snra_gradient(SnraParams(4.0), 0.0) == -2.0

    def test_known_point(self):
        # frozen extended-precision value of -4 e^2 / (1 + e^2)^2
        assert snra_gradient(SnraParams(2.0), 1.0) == pytest.approx(-0.41997434161402606, rel=1e-12)

    def test_far_field_vanishes(self):
        assert snra_gradient(SnraParams(1.0), 800.0) == 0.0

    @pytest.mark.parametrize("k", [0.5, 1.0, 10.0, 100.0])
    def test_central_difference(self, k):
        p = SnraParams(k)
        h = 1e-6
        for e in np.linspace(h, 10, 101):
            fd = (snra(p, e + h) - snra(p, e - h)) / (2 * h)
            g = snra_gradient(p, e)
            assert abs(fd - g) <= max(1e-6, 1e-4 * abs(g))

    def test_tanh_gradient_matches_difference(self):
        p = SnraParams(3.0, TANH)
        h = 1e-7
        for e in (0.05, 0.2, 0.9):
            fd = (snra(p, e + h) - snra(p, e - h)) / (2 * h)
            assert snra_gradient(p, e) == pytest.approx(fd, rel=1e-5)

    @pytest.mark.parametrize("k", [0.5, 1.0, 10.0, 100.0])
    def test_extremum_at_zero(self, k):
        e = np.concatenate([[0.0], np.logspace(-8, 2, 2000)])
        mag = np.abs(snra_gradient(SnraParams(k), e))
        assert np.argmax(mag) == 0
        assert abs(mag[0] - k / 2) <= 1e-12 * k


class TestHardened:
    def test_values(self):
        assert hardened_reward(0.0) == 1.0
        assert hardened_reward(1e-9) == 0.0
        assert hardened_reward(5.0) == 0.0


class TestSchedule:
    def test_midpoint(self):
        s = SharpnessSchedule(total_steps=300)
        assert schedule_k(s, 150) == pytest.approx(50.5, rel=1e-15)

    def test_endpoints_against_oracle(self):
        s = SharpnessSchedule(total_steps=300)
        # 1 + 99 * logistic(-5) and 1 + 99 * logistic(5), frozen at 40 digits
        assert schedule_k(s, 0) == pytest.approx(1.6625922415042007, rel=1e-14)
        assert schedule_k(s, 300) == pytest.approx(99.337407758495799, rel=1e-14)

    def test_bounds_and_monotone(self):
        s = SharpnessSchedule(total_steps=257)
        ks_ = [schedule_k(s, t) for t in range(258)]
        assert all(s.k_min < k < s.k_max for k in ks_)
        assert all(b >= a for a, b in zip(ks_, ks_[1:]))

    def test_linear_shape(self):
        s = SharpnessSchedule(total_steps=10, shape="linear")
        assert schedule_k(s, 0) == 1.0 and schedule_k(s, 10) == 100.0
        assert schedule_k(s, 5) == pytest.approx(50.5)

    def test_fixed(self):
        s = SharpnessSchedule.fixed(7.0, 20)
        assert {schedule_k(s, t) for t in range(21)} == {7.0}

    @pytest.mark.parametrize("t", [-1, 301])
    def test_out_of_range_step(self, t):
        with pytest.raises(DomainError):
            schedule_k(SharpnessSchedule(total_steps=300), t)

    @pytest.mark.parametrize("kw", [dict(k_min=10, k_max=1), dict(total_steps=0),
                                    dict(center=1.0), dict(center=0.0), dict(steepness=0),
                                    dict(k_min=0)])
    def test_invalid_construction(self, kw):
        with pytest.raises(DomainError):
            SharpnessSchedule(**kw)


class TestLogistic:
    def test_no_overflow(self):
        x = np.array([-1e4, -800, 0.0, 800, 1e4])
        out = logistic(x)
        assert np.all(np.isfinite(out))
        assert out[2] == 0.5 and out[-1] == 1.0 and out[0] == 0.0

    @given(st.floats(-700, 700))
    @settings(max_examples=50)
    def test_symmetry(self, x):
        assert logistic(x) + logistic(-x) == pytest.approx(1.0, abs=1e-15)
