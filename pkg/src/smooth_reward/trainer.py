"""Group-sampling policy-gradient trainer with a sharpness curriculum.

Each step samples one group per task in the batch, scores it through the
reward pipeline at the current sharpness ``k(t)``, forms advantages, and
takes plain gradient steps on

    loss = mean_groups[ -(1/G) sum_i min(rho_i A_i, clip(rho_i, 1-eps, 1+eps) A_i) ]
           + kl_coeff * mean_groups[ KL(pi(.|c) || pi_ref(.|c)) ]

Episodes are single actions, so per-token advantage broadcast is the identity.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .advantage import AdvantageConfig, compute_advantages
from .analysis import convergence_steps
from .envs import (RewardPipeline, RewardTables, TaskInstance, ToyPolicy, answer_kernels,
                   prior_logit_table, sample_actions)
from .snra_core import DomainError, OperatorKind, SharpnessSchedule, schedule_k
from .verifiers import calibrate_phi

log = logging.getLogger(__name__)

RECORD_COLUMNS = ("step", "k", "mean_reward", "accuracy", "adv_variance", "loss", "kl")


class TrainingDiverged(RuntimeError):
    def __init__(self, message: str, record: "TrainRecord"):
        super().__init__(message)
        self.record = record


@dataclass(frozen=True)
class TrainerConfig:
    schedule: SharpnessSchedule = field(default_factory=SharpnessSchedule)
    advantage: AdvantageConfig = field(default_factory=AdvantageConfig)
    group_size: int = 8
    batch_size: int = 16
    ratio_clip: float = 0.2
    kl_coeff: float = 0.02
    learning_rate: float = 20.0
    reward_balance: float = 0.1
    operator_kind: OperatorKind = OperatorKind.SIGMOID
    binary_reward: bool = False
    inner_epochs: int = 1
    kernel_width: float = 1.0
    near_miss_prior: bool = True
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "operator_kind", OperatorKind(self.operator_kind))
        if self.group_size < 2:
            raise DomainError("group_size must be at least 2")
        if self.batch_size < 1:
            raise DomainError("batch_size must be positive")
        if not 0 < self.ratio_clip < 1:
            raise DomainError("ratio_clip must lie in (0, 1)")
        if not self.kl_coeff >= 0:
            raise DomainError("kl_coeff must be non-negative")
        if not self.learning_rate > 0:
            raise DomainError("learning_rate must be positive")
        if not 0 <= self.reward_balance < 1:
            raise DomainError("reward_balance must lie in [0, 1)")
        if not self.kernel_width >= 0:
            raise DomainError("kernel_width must be non-negative")
        if self.inner_epochs < 1:
            raise DomainError("inner_epochs must be positive")

    @property
    def total_steps(self) -> int:
        return self.schedule.total_steps


@dataclass(frozen=True)
class TrainRecord:
    step: int
    k: float
    mean_reward: float
    accuracy: float
    adv_variance: float
    loss: float
    kl: float
    mean_abs_advantage: float
    update_norm: float


# -- objective ------------------------------------------------------------------


def clipped_surrogate(logprob_current, logprob_old, adv, ratio_clip: float):
    """Per-member pessimistic objective min(rho*A, clip(rho)*A) and the unclipped-branch mask."""
    lp_cur = np.asarray(logprob_current, dtype=np.float64)
    lp_old = np.asarray(logprob_old, dtype=np.float64)
    if not (np.all(np.isfinite(lp_cur)) and np.all(np.isfinite(lp_old))):
        raise DomainError("log-probabilities must be finite")
    adv = np.asarray(adv, dtype=np.float64)
    rho = np.exp(lp_cur - lp_old)
    unclipped = rho * adv
    clipped = np.clip(rho, 1.0 - ratio_clip, 1.0 + ratio_clip) * adv
    take_unclipped = unclipped <= clipped
    return np.where(take_unclipped, unclipped, clipped), take_unclipped, rho


def surrogate_loss(logprob_current, logprob_old, adv, ratio_clip: float) -> float:
    """Negated clipped surrogate, averaged over every member given."""
    obj, _, _ = clipped_surrogate(logprob_current, logprob_old, adv, ratio_clip)
    return float(-obj.mean())


def categorical_kl(logp, logq, p):
    return np.sum(p * (logp - logq), axis=-1)


def kl_penalty(policy: ToyPolicy, context_id: int) -> float:
    """Exact KL(current || reference) over the context's valid actions."""
    logp, p = policy.log_probs(context_id)
    logq, _ = policy.reference_log_probs(context_id)
    return max(float(categorical_kl(logp, logq, p)), 0.0)


def loss_and_grad(policy: ToyPolicy, context_ids, actions, logprob_old, adv,
                  ratio_clip: float, kl_coeff: float):
    """Batch loss and its gradient w.r.t. ``policy.preferences``.

    ``context_ids`` has shape (B,), ``actions``/``logprob_old``/``adv`` shape (B, G).
    Returns ``(loss, surrogate_part, mean_kl, grad)``.
    """
    context_ids = np.asarray(context_ids)
    n_groups, g = actions.shape
    logp, p = policy.log_probs(context_ids)
    lp_cur = np.take_along_axis(logp, actions, axis=1)
    obj, take_unclipped, rho = clipped_surrogate(lp_cur, logprob_old, adv, ratio_clip)
    surrogate = -obj.mean()

    logq, _ = policy.reference_log_probs(context_ids)
    kl = categorical_kl(logp, logq, p)
    loss = surrogate + kl_coeff * kl.mean()

    # d(-obj_i)/d logits = -A_i rho_i (onehot(a_i) - p) on the unclipped branch, else 0
    w = np.where(take_unclipped, -adv * rho, 0.0) / (n_groups * g)
    rows = np.zeros_like(p)
    np.add.at(rows, (np.arange(n_groups)[:, None], actions), w)
    rows -= w.sum(axis=1, keepdims=True) * p
    # d KL / d logits = p * (log p - log q - KL)
    rows += (kl_coeff / n_groups) * p * (logp - logq - kl[:, None])
    rows = np.where(policy.mask[context_ids], rows, 0.0)

    grad = np.zeros_like(policy.preferences)
    np.add.at(grad, context_ids, policy.to_preference_grad(context_ids, rows))
    return float(loss), float(surrogate), float(kl.mean()), grad


# -- training loop ------------------------------------------------------------


class Trainer:
    """Mutable training state: policy, tables, random stream and step counter."""

    def __init__(self, config: TrainerConfig, corpus: Sequence[TaskInstance],
                 pipeline: Optional[RewardPipeline] = None):
        if not corpus:
            raise DomainError("corpus is empty")
        self.config = config
        self.corpus = list(corpus)
        self.pipeline = pipeline or RewardPipeline(
            phi=calibrate_phi(config.schedule.k_max), balance=config.reward_balance,
            operator=config.operator_kind, binary=config.binary_reward)
        self.tables: RewardTables = self.pipeline.tables(self.corpus)
        kernel = (answer_kernels(self.corpus, config.kernel_width, self.tables.mask.shape[1])
                  if config.kernel_width > 0 else None)
        if config.near_miss_prior:
            ref = prior_logit_table(self.corpus, self.tables.mask.shape[1])
        else:
            ref = np.zeros(self.tables.mask.shape)
        self.policy = ToyPolicy.from_reference(ref, self.tables.mask, kernel)
        self.rng = np.random.default_rng(config.seed)
        self.step = 0

    def expected_accuracy(self) -> float:
        _, p = self.policy.log_probs()
        return float((p * self.tables.correct).sum(axis=1).mean())

    def _batch(self) -> np.ndarray:
        n = self.tables.n_contexts
        if self.config.batch_size >= n:
            return np.arange(n)
        return np.sort(self.rng.choice(n, size=self.config.batch_size, replace=False))

    def train_step(self) -> TrainRecord:
        cfg = self.config
        if self.step >= cfg.total_steps:
            raise DomainError("training already finished")
        t = self.step
        k = schedule_k(cfg.schedule, t)

        ctx = self._batch()
        actions = sample_actions(self.policy, ctx, cfg.group_size, self.rng)
        logp, _ = self.policy.log_probs(ctx)
        logprob_old = np.take_along_axis(logp, actions, axis=1)

        tb = self.tables
        rows = ctx[:, None]
        smooth, reward = self.pipeline.rewards(tb.errors[rows, actions], tb.format_bits[rows, actions],
                                               tb.correct[rows, actions], k)
        adv = compute_advantages(reward, smooth, cfg.advantage)

        start = self.policy.preferences.copy()
        first = None
        for _ in range(cfg.inner_epochs):
            loss, _, kl, grad = loss_and_grad(self.policy, ctx, actions, logprob_old, adv,
                                              cfg.ratio_clip, cfg.kl_coeff)
            if first is None:
                first = (loss, kl)
            if not (math.isfinite(loss) and np.all(np.isfinite(grad))):
                break
            self.policy.preferences -= cfg.learning_rate * grad

        record = TrainRecord(
            step=t, k=k, mean_reward=float(np.mean(reward)),
            accuracy=self.expected_accuracy(),
            adv_variance=float(adv.var(axis=1).mean()),
            loss=first[0], kl=first[1],
            mean_abs_advantage=float(np.abs(adv).mean()),
            update_norm=float(np.linalg.norm(self.policy.preferences - start)))
        if not (math.isfinite(loss) and np.all(np.isfinite(self.policy.preferences))):
            raise TrainingDiverged(f"non-finite loss at step {t}", record)
        self.step += 1
        return record


@dataclass
class ExperimentResult:
    records: list
    summary: dict


def summarize(records: Sequence[TrainRecord]) -> dict:
    acc = [r.accuracy for r in records]
    return {
        "steps": len(records),
        "t_conv": convergence_steps(acc),
        "final_accuracy": acc[-1],
        "max_accuracy": max(acc),
        "mean_adv_variance": float(np.mean([r.adv_variance for r in records])),
        "mean_abs_advantage": float(np.mean([r.mean_abs_advantage for r in records])),
        "final_k": records[-1].k,
    }


def write_records(records: Sequence[TrainRecord], out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "records.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(json.dumps(asdict(r)) + "\n")
    with open(out / "records.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RECORD_COLUMNS)
        for r in records:
            writer.writerow([getattr(r, c) for c in RECORD_COLUMNS])


def run_experiment(config: TrainerConfig, corpus: Sequence[TaskInstance],
                   out_dir=None, pipeline: Optional[RewardPipeline] = None) -> ExperimentResult:
    trainer = Trainer(config, corpus, pipeline)
    records = [trainer.train_step() for _ in range(config.total_steps)]
    summary = summarize(records)
    if out_dir is not None:
        write_records(records, out_dir)
    return ExperimentResult(records, summary)
