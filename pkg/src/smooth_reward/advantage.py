"""Composite rewards and group-relative advantage estimators.

All estimators operate on the last axis, so a ``(n_groups, G)`` array is
handled in one call.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np

from .snra_core import DomainError

log = logging.getLogger(__name__)


class Estimator(str, enum.Enum):
    STANDARD_GRPO = "grpo"
    AP_GRPO = "ap_grpo"
    PURE_ABSOLUTE = "pure_absolute"


@dataclass(frozen=True)
class AdvantageConfig:
    norm_epsilon: float = 1e-6
    alpha: float = 1.0
    clip: float = 1.5
    estimator: Estimator = Estimator.AP_GRPO

    def __post_init__(self):
        object.__setattr__(self, "estimator", Estimator(self.estimator))
        if not self.norm_epsilon > 0:
            raise DomainError("norm_epsilon must be positive")
        # alpha in [0, 1) is only meaningful as a consistency check against plain GRPO
        if not self.alpha >= 0:
            raise DomainError("alpha must be non-negative")
        if self.alpha < 1 and self.estimator is Estimator.AP_GRPO:
            log.debug("alpha=%s is below the supported range alpha >= 1", self.alpha)
        if not self.clip > 0:
            raise DomainError("clip must be positive")


@dataclass(frozen=True)
class RewardBreakdown:
    error: float
    smooth_reward: float
    format_bit: int
    balance: float
    composite: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "composite",
                           composite_reward(self.smooth_reward, self.format_bit, self.balance))


@dataclass
class TrajectoryGroup:
    """G sampled answers to one query, with rewards and log-probabilities."""

    context_id: int
    actions: np.ndarray
    errors: np.ndarray
    rewards: np.ndarray
    smooth_rewards: np.ndarray
    logprob_current: np.ndarray
    logprob_old: np.ndarray

    def __post_init__(self):
        sizes = {len(self.actions), len(self.errors), len(self.rewards),
                 len(self.smooth_rewards), len(self.logprob_current), len(self.logprob_old)}
        if len(sizes) != 1:
            raise DomainError("group vectors must share one length")
        if len(self.rewards) < 2:
            raise DomainError("group size must be at least 2")

    @property
    def size(self) -> int:
        return len(self.rewards)


def composite_reward(smooth_reward, format_bit, balance: float):
    if not 0 <= balance < 1:
        raise DomainError(f"balance must lie in [0, 1), got {balance!r}")
    out = (1.0 - balance) * np.asarray(smooth_reward, dtype=np.float64) \
        + balance * np.asarray(format_bit, dtype=np.float64)
    return out if out.ndim else float(out)


def grpo_advantage(rewards, norm_epsilon: float = 1e-6) -> np.ndarray:
    """(R - mean) / (population std + eps) per group; constant groups give exact zeros."""
    r = np.asarray(rewards, dtype=np.float64)
    if r.shape[-1] < 2:
        raise DomainError("group size must be at least 2")
    mean = r.mean(axis=-1, keepdims=True)
    std = r.std(axis=-1, keepdims=True)
    constant = np.ptp(r, axis=-1, keepdims=True) == 0
    centered = np.where(constant, 0.0, r - mean)
    return centered / (std + norm_epsilon)


def ap_grpo_advantage(rewards, smooth_rewards, alpha: float = 1.0,
                      norm_epsilon: float = 1e-6) -> np.ndarray:
    """Relative term on the composite reward, scaled by ``smooth_reward ** alpha``."""
    rel = grpo_advantage(rewards, norm_epsilon)
    return rel * np.power(np.asarray(smooth_rewards, dtype=np.float64), alpha)


def pure_absolute_advantage(rewards) -> np.ndarray:
    """Absolute-only baseline: rewards centered at the reward midpoint 0.5."""
    r = np.asarray(rewards, dtype=np.float64)
    if r.shape[-1] < 2:
        raise DomainError("group size must be at least 2")
    return r - 0.5


def clip_advantage(adv, clip: float) -> np.ndarray:
    if not clip > 0:
        raise DomainError("clip must be positive")
    return np.clip(np.asarray(adv, dtype=np.float64), -clip, clip)


def compute_advantages(rewards, smooth_rewards, cfg: AdvantageConfig,
                       clipped: bool = True) -> np.ndarray:
    if cfg.estimator is Estimator.STANDARD_GRPO:
        adv = grpo_advantage(rewards, cfg.norm_epsilon)
    elif cfg.estimator is Estimator.AP_GRPO:
        adv = ap_grpo_advantage(rewards, smooth_rewards, cfg.alpha, cfg.norm_epsilon)
    else:
        adv = pure_absolute_advantage(rewards)
    return clip_advantage(adv, cfg.clip) if clipped else adv
