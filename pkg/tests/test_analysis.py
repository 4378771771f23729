import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from smooth_reward.analysis import (advantage_variance, check_gradient_extremum, check_recovery,
                                    check_sharpness_dynamics, check_variance_suppression,
                                    convergence_steps, group_advantage_variance, reward_contrast,
                                    run_theory_checks)


class TestMetrics:
    def test_advantage_variance(self):
        assert advantage_variance([1.0, -1.0, 1.0, -1.0]) == 1.0
        assert advantage_variance([0.3] * 5) == 0.0
        with pytest.raises(ValueError):
            advantage_variance([])

    def test_group_variance(self):
        a = np.array([[1.0, -1.0], [0.0, 0.0]])
        assert group_advantage_variance(a) == 0.5

    def test_convergence_steps(self):
        assert convergence_steps([0.1, 0.5, 0.96, 1.0, 0.9]) == 2
        assert convergence_steps([0.0, 0.0]) is None
        assert convergence_steps([0.7]) == 0
        with pytest.raises(ValueError):
            convergence_steps([])

    @given(st.lists(st.floats(0, 1), min_size=1, max_size=50))
    def test_convergence_definition(self, acc):
        t = convergence_steps(acc)
        if max(acc) == 0:
            assert t is None
        else:
            assert acc[t] >= 0.95 * max(acc)
            assert all(a < 0.95 * max(acc) for a in acc[:t])


class TestTheoryChecks:
    def test_suppression_slopes(self):
        eps = [0.2, 0.1, 0.05, 0.025]
        r1 = check_variance_suppression(1.0, eps, n_groups=20_000, seed=3)
        r2 = check_variance_suppression(2.0, eps, n_groups=20_000, seed=3)
        assert abs(r1.slope - 2) <= 0.3
        assert abs(r2.slope - 4) <= 0.6
        # the plain relative advantage does not shrink with eps
        assert max(r1.variance_relative) / min(r1.variance_relative) < 1.1

    def test_suppression_ratio(self):
        r = check_variance_suppression(1.0, [0.1], n_groups=20_000, seed=1)
        assert 0.005 <= r.variance_modulated[0] / r.variance_relative[0] <= 0.02

    def test_recovery(self):
        res = check_recovery(1.0, [1e-1, 1e-2, 1e-3], n_groups=20_000, seed=2)
        ratios = [r.variance_ratio for r in res]
        assert ratios[0] < ratios[1] < ratios[2] <= 1.0
        assert ratios[2] >= 0.99

    def test_seed_reproducible(self):
        a = check_recovery(1.0, [0.05], n_groups=1000, seed=9)
        b = check_recovery(1.0, [0.05], n_groups=1000, seed=9)
        assert a == b

    def test_gradient_extremum(self):
        for k, e, g in check_gradient_extremum([0.5, 1, 10, 100]):
            assert e == 0.0 and abs(g - k / 2) <= 1e-9

    def test_reward_contrast(self):
        for k, d in [(1, 1e-3), (100, 1e-3), (3, 2.0)]:
            assert reward_contrast(k, d) == pytest.approx(math.tanh(k * d / 2), rel=1e-12)

    def test_sharpness_dynamics(self):
        dyn = check_sharpness_dynamics(5.0, 1e-3, 1.0, 100.0)
        assert dyn["far_gradient_vanishes"] and dyn["contrast_grows"]
        assert dyn["contrast_ratio"] == pytest.approx(100, rel=0.1)

    def test_run_all(self):
        report = run_theory_checks(seed=1, n_groups=20_000)
        assert report["passed"], [c["name"] for c in report["checks"] if not c["passed"]]
