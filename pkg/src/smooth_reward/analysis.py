"""Training diagnostics and Monte-Carlo checks of the advantage/sharpness theory.

The Monte-Carlo checkers simulate idealized groups (no policy, no format
bit) and measure the unclipped modulated advantage. Replicas draw from
independent child seeds spawned from one root seed, so results do not
depend on evaluation order.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .advantage import ap_grpo_advantage, grpo_advantage
from .snra_core import SnraParams, snra_gradient


def advantage_variance(adv) -> float:
    """Population variance of a vector of advantages."""
    a = np.asarray(adv, dtype=np.float64)
    if a.size == 0:
        raise ValueError("need at least one advantage")
    return float(np.mean((a - a.mean()) ** 2))


def group_advantage_variance(adv) -> float:
    """Mean over groups (rows) of each group's population variance."""
    a = np.atleast_2d(np.asarray(adv, dtype=np.float64))
    return float(a.var(axis=-1).mean())


def convergence_steps(accuracy: Sequence[float], fraction: float = 0.95) -> Optional[int]:
    """First index whose accuracy reaches ``fraction`` of the sequence maximum."""
    acc = np.asarray(accuracy, dtype=np.float64)
    if acc.size == 0:
        raise ValueError("accuracy sequence is empty")
    peak = acc.max()
    if peak <= 0:
        return None
    return int(np.argmax(acc >= fraction * peak))


# -- theorem checks -----------------------------------------------------------


@dataclass
class VarianceSweepResult:
    epsilon_levels: list
    variance_modulated: list
    variance_relative: list
    slope: float
    alpha: float


@dataclass
class RecoveryResult:
    residual: float
    variance_ratio: float


def _child_rngs(seed: int, n: int) -> list:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def _pooled_var(x: np.ndarray) -> float:
    return float(x.var())


def check_variance_suppression(alpha: float, epsilon_levels: Sequence[float], *,
                               noise_ratio: float = 0.1, n_groups: int = 100_000,
                               group_size: int = 8, seed: int = 0,
                               norm_epsilon: float = 1e-6) -> VarianceSweepResult:
    """Rewards ``clip(eps + xi, 0, 1)`` with ``xi ~ N(0, (noise_ratio*eps)^2)``.

    Fits the log-log slope of the pooled variance of the modulated advantage
    against ``eps``; the small-reward theory predicts ``2 * alpha``.
    """
    rngs = _child_rngs(seed, len(epsilon_levels))
    var_ap, var_rel = [], []
    for eps, rng in zip(epsilon_levels, rngs):
        r = np.clip(eps + rng.normal(0.0, noise_ratio * eps, size=(n_groups, group_size)), 0, 1)
        var_rel.append(_pooled_var(grpo_advantage(r, norm_epsilon)))
        var_ap.append(_pooled_var(ap_grpo_advantage(r, r, alpha, norm_epsilon)))
    slope = math.nan
    if len(epsilon_levels) >= 2:
        slope = float(np.polyfit(np.log(epsilon_levels), np.log(var_ap), 1)[0])
    return VarianceSweepResult(list(map(float, epsilon_levels)), var_ap, var_rel, slope, alpha)


def check_recovery(alpha: float, residual_levels: Sequence[float], *, n_groups: int = 100_000,
                   group_size: int = 8, seed: int = 0,
                   norm_epsilon: float = 1e-6) -> list[RecoveryResult]:
    """Rewards ``1 - delta_i`` with ``delta_i ~ U[0, delta]``; ratio Var(A_ap)/Var(A)."""
    out = []
    for delta, rng in zip(residual_levels, _child_rngs(seed, len(residual_levels))):
        r = 1.0 - rng.uniform(0.0, delta, size=(n_groups, group_size))
        v_rel = _pooled_var(grpo_advantage(r, norm_epsilon))
        v_ap = _pooled_var(ap_grpo_advantage(r, r, alpha, norm_epsilon))
        # both vanish when every reward is exactly 1
        ratio = 1.0 if v_rel == 0 and v_ap == 0 else v_ap / v_rel
        out.append(RecoveryResult(float(delta), ratio))
    return out


def check_gradient_extremum(k_values: Sequence[float], n_points: int = 20_001):
    """Scan |d reward/d e| on e in [0, 20/k]; returns [(k, argmax_e, max_magnitude)]."""
    out = []
    for k in k_values:
        e = np.linspace(0.0, 20.0 / k, n_points)
        mag = np.abs(snra_gradient(SnraParams(k), e))
        i = int(np.argmax(mag))
        out.append((float(k), float(e[i]), float(mag[i])))
    return out


def reward_contrast(k: float, delta: float) -> float:
    """|r(k, delta) - r(k, 0)| = tanh(k*delta/2), evaluated without cancellation."""
    x = k * delta
    return float(-math.expm1(-x) / (1.0 + math.exp(-x)))


def check_sharpness_dynamics(far_error: float, near_error: float, k_lo: float, k_hi: float) -> dict:
    g_lo = abs(snra_gradient(SnraParams(k_lo), far_error))
    g_hi = abs(snra_gradient(SnraParams(k_hi), far_error))
    c_lo = reward_contrast(k_lo, near_error)
    c_hi = reward_contrast(k_hi, near_error)
    return {
        "far_error": far_error, "near_error": near_error, "k_lo": k_lo, "k_hi": k_hi,
        "far_gradient_lo": g_lo, "far_gradient_hi": g_hi,
        "far_gradient_vanishes": g_hi < g_lo,
        "contrast_lo": c_lo, "contrast_hi": c_hi,
        "contrast_ratio": c_hi / c_lo if c_lo > 0 else None,
        "contrast_grows": c_hi > c_lo,
    }


def run_theory_checks(seed: int = 0, n_groups: int = 100_000) -> dict:
    """All idealized checks with their tolerances and pass flags, JSON-ready."""
    eps_grid = [0.2, 0.1, 0.05, 0.025]
    checks = []

    for alpha, tol in ((1.0, 0.3), (2.0, 0.6)):
        res = check_variance_suppression(alpha, eps_grid, n_groups=n_groups, seed=seed)
        checks.append({"name": f"variance_suppression_alpha{alpha:g}", **asdict(res),
                       "target": 2 * alpha, "tolerance": tol,
                       "passed": abs(res.slope - 2 * alpha) <= tol})

    single = check_variance_suppression(1.0, [0.1], n_groups=n_groups, seed=seed)
    ratio = single.variance_modulated[0] / single.variance_relative[0]
    checks.append({"name": "suppression_ratio_eps0.1", "ratio": ratio, "target": 0.01,
                   "passed": 0.005 <= ratio <= 0.02})

    deltas = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3]
    rec = check_recovery(1.0, deltas, n_groups=n_groups, seed=seed)
    ratios = [r.variance_ratio for r in rec]
    checks.append({"name": "sensitivity_recovery", "residuals": deltas, "ratios": ratios,
                   "passed": 0.99 <= ratios[-1] <= 1.0 and ratios[0] < 1.0
                   and all(b >= a - 0.02 for a, b in zip(ratios, ratios[1:]))})

    ext = check_gradient_extremum([0.5, 1.0, 10.0, 100.0])
    checks.append({"name": "gradient_extremum",
                   "results": [{"k": k, "argmax_error": e, "max_gradient": g} for k, e, g in ext],
                   "passed": all(e == 0.0 and abs(g - k / 2) <= 1e-9 for k, e, g in ext)})

    dyn = check_sharpness_dynamics(5.0, 1e-3, 1.0, 100.0)
    checks.append({"name": "sharpness_dynamics", **dyn,
                   "passed": dyn["far_gradient_vanishes"]
                   and abs(dyn["contrast_ratio"] / 100.0 - 1.0) <= 0.1})

    return {"seed": seed, "n_groups": n_groups, "checks": checks,
            "passed": all(c["passed"] for c in checks)}
