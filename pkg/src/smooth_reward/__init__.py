"""Smooth verifiable rewards, sharpness curricula and absolute-preserving GRPO."""

from .advantage import (AdvantageConfig, Estimator, RewardBreakdown, TrajectoryGroup,
                        ap_grpo_advantage, clip_advantage, composite_reward, compute_advantages,
                        grpo_advantage, pure_absolute_advantage)
from .snra_core import (DomainError, OperatorKind, ScheduleShape, SharpnessSchedule, SnraParams,
                        hardened_reward, schedule_k, snra, snra_gradient)
from .verifiers import PhiParams, calibrate_phi, phi_map

__all__ = [
    "AdvantageConfig", "Estimator", "RewardBreakdown", "TrajectoryGroup", "ap_grpo_advantage",
    "clip_advantage", "composite_reward", "compute_advantages", "grpo_advantage",
    "pure_absolute_advantage", "DomainError", "OperatorKind", "ScheduleShape",
    "SharpnessSchedule", "SnraParams", "hardened_reward", "schedule_k", "snra", "snra_gradient",
    "PhiParams", "calibrate_phi", "phi_map",
]
__version__ = "0.1.0"
