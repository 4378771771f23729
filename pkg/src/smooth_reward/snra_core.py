"""Smooth reward activation and the sharpness curriculum.

The activation maps a non-negative error ``e`` to a reward in ``(0, 1]``::

    sigmoid kind:  r = 2 / (1 + exp(k * e))  = 2 * logistic(-k * e)
    tanh kind:     r = 1 - tanh(k * e)       = 2 * logistic(-2 * k * e)

Both are evaluated through the right-hand forms so that very large ``k * e``
never produces ``inf`` or ``nan`` and the tanh variant avoids cancellation.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

# Smallest positive float64; saturated rewards are floored here so r stays in (0, 1].
REWARD_FLOOR = float(np.nextafter(0.0, 1.0))


class DomainError(ValueError):
    """Raised when an argument lies outside an operation's domain."""


class OperatorKind(str, enum.Enum):
    SIGMOID = "sigmoid"
    TANH_SHIFTED = "tanh_shifted"


class ScheduleShape(str, enum.Enum):
    SIGMOID = "sigmoid"
    LINEAR = "linear"


def logistic(x):
    """Overflow-safe logistic function for scalars or arrays."""
    x = np.asarray(x, dtype=np.float64)
    z = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
    return out if out.ndim else float(out)


def _neg_logistic_pair(x):
    """Return (logistic(-x), logistic(x)) for x >= 0 without overflow."""
    z = np.exp(-x)
    denom = 1.0 + z
    return z / denom, 1.0 / denom


@dataclass(frozen=True)
class SnraParams:
    k: float
    kind: OperatorKind = OperatorKind.SIGMOID

    def __post_init__(self):
        if not (math.isfinite(self.k) and self.k > 0):
            raise DomainError(f"sharpness k must be a positive finite number, got {self.k!r}")
        object.__setattr__(self, "kind", OperatorKind(self.kind))

    @property
    def _scale(self) -> float:
        return 2.0 * self.k if self.kind is OperatorKind.TANH_SHIFTED else self.k


def _check_error(e) -> np.ndarray:
    arr = np.asarray(e, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise DomainError("error must be finite")
    if np.any(arr < 0):
        raise DomainError("error must be non-negative")
    return arr


def snra(params: SnraParams, e):
    """Reward for error ``e`` (scalar or array) at the given sharpness."""
    arr = _check_error(e)
    x = params._scale * arr
    small, _ = _neg_logistic_pair(x)
    r = np.maximum(2.0 * small, REWARD_FLOOR)
    return r if r.ndim else float(r)


def snra_gradient(params: SnraParams, e):
    """d reward / d e. Equals -k/2 at e = 0 for the sigmoid kind."""
    arr = _check_error(e)
    scale = params._scale
    small, large = _neg_logistic_pair(scale * arr)
    g = -2.0 * scale * small * large
    return g if g.ndim else float(g)


def hardened_reward(e):
    """The k -> infinity limit: 1 for exactly zero error, else 0."""
    arr = _check_error(e)
    out = (arr == 0).astype(np.float64)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class SharpnessSchedule:
    """Coarse-to-fine sharpness curriculum k(t) over ``total_steps`` steps.

    ``shape='sigmoid'`` gives ``k_min + (k_max - k_min) * logistic(s * (t/T - center))``;
    ``shape='linear'`` interpolates linearly. ``k_min == k_max`` is a fixed-k run.
    """

    k_min: float = 1.0
    k_max: float = 100.0
    steepness: float = 10.0
    center: float = 0.5
    total_steps: int = 300
    shape: ScheduleShape = ScheduleShape.SIGMOID

    def __post_init__(self):
        object.__setattr__(self, "shape", ScheduleShape(self.shape))
        if not (self.k_min > 0 and self.k_max > 0):
            raise DomainError("k_min and k_max must be positive")
        if self.k_min > self.k_max:
            raise DomainError(f"k_min ({self.k_min}) must not exceed k_max ({self.k_max})")
        if not self.steepness > 0:
            raise DomainError("steepness must be positive")
        if not 0 < self.center < 1:
            raise DomainError("center must lie in (0, 1)")
        if int(self.total_steps) != self.total_steps or self.total_steps < 1:
            raise DomainError("total_steps must be a positive integer")

    @classmethod
    def fixed(cls, k: float, total_steps: int) -> "SharpnessSchedule":
        return cls(k_min=k, k_max=k, total_steps=total_steps)


def schedule_k(sched: SharpnessSchedule, t: int) -> float:
    if not 0 <= t <= sched.total_steps:
        raise DomainError(f"step {t} outside [0, {sched.total_steps}]")
    frac = t / sched.total_steps
    if sched.shape is ScheduleShape.LINEAR:
        w = frac
    else:
        w = logistic(sched.steepness * (frac - sched.center))
    return sched.k_min + (sched.k_max - sched.k_min) * w
