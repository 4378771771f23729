"""Seeded synthetic verifiable tasks and tabular softmax policies.

Every task is a single-step query with a finite answer set, so policy
log-probabilities, ratios and KL terms are exact. Each context also has one
extra "invalid" action standing in for an unparseable answer: it receives the
task's ``e_max`` error and a zero format bit.
"""

from __future__ import annotations

import enum
import itertools
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import verifiers as V
from .verifiers import ring_distance
from .advantage import TrajectoryGroup, composite_reward
from .snra_core import DomainError, OperatorKind, SnraParams, snra

SCALAR_LOW, SCALAR_HIGH = 0.0, 10.0
DEFAULT_BINS = 64
COUNT_MAX = 20
RELATION_LABELS = ("left-of", "in-front-of", "inside", "overlap", "near")
# snra(k=1, e_max) < 0.05 for both values
SCALAR_E_MAX = (SCALAR_HIGH - SCALAR_LOW) ** 2
DISCRETE_E_MAX = 4.0


class TaskKind(str, enum.Enum):
    SCALAR = "scalar_estimate"
    DIRECTION = "direction"
    ORDER_PAIR = "order_pair"
    ORDER_LIST = "order_list"
    COUNT = "count"
    POSITION = "position"

    @property
    def continuous(self) -> bool:
        return self is TaskKind.SCALAR


DISCRETE_KINDS = tuple(k for k in TaskKind if not k.continuous)
_KIND_CODE = {k: i for i, k in enumerate(TaskKind)}


@dataclass(frozen=True)
class TaskInstance:
    kind: TaskKind
    seed: int
    difficulty: float
    truth: dict = field(compare=True)
    context_id: int = 0

    def to_record(self) -> dict:
        return {"kind": self.kind.value, "seed": self.seed, "difficulty": self.difficulty,
                "context_id": self.context_id, "truth": self.truth}

    @classmethod
    def from_record(cls, rec: dict) -> "TaskInstance":
        try:
            return cls(kind=TaskKind(rec["kind"]), seed=int(rec["seed"]),
                       difficulty=float(rec["difficulty"]), truth=dict(rec["truth"]),
                       context_id=int(rec.get("context_id", 0)))
        except (KeyError, ValueError) as exc:
            raise DomainError(f"malformed task record: {exc}") from exc


def scalar_grid(n_bins: int = DEFAULT_BINS) -> np.ndarray:
    return np.linspace(SCALAR_LOW, SCALAR_HIGH, n_bins)


def generate_task(kind, seed: int, difficulty: float = 1.0, *, context_id: int = 0,
                  n_bins: int = DEFAULT_BINS, n_objects: int = 4,
                  direction_bins: int = 8) -> TaskInstance:
    """Deterministic in (kind, seed, difficulty) and the keyword options.

    ``difficulty`` scales how widely targets spread: scalar targets span
    ``5 +/- 5*d`` (clipped to [0, 10]) on the answer grid, counts span
    ``10 +/- 10*d`` (clipped to [0, 20]), and order-pair gaps shrink as ``d``
    grows. It also sets how far the initial belief of ``prior_logits`` sits
    from the truth.
    """
    try:
        kind = TaskKind(kind)
    except ValueError as exc:
        raise DomainError(f"unknown task kind {kind!r}") from exc
    if not difficulty > 0:
        raise DomainError("difficulty must be positive")
    rng = np.random.default_rng([int(seed), _KIND_CODE[kind]])
    u = rng.uniform(-1.0, 1.0)

    if kind is TaskKind.SCALAR:
        grid = scalar_grid(n_bins)
        mid = 0.5 * (SCALAR_LOW + SCALAR_HIGH)
        y = float(np.clip(mid + (mid - SCALAR_LOW) * difficulty * u, SCALAR_LOW, SCALAR_HIGH))
        idx = int(np.abs(grid - y).argmin())
        truth = {"value": float(grid[idx]), "units": "m", "n_bins": n_bins}
    elif kind is TaskKind.DIRECTION:
        b = int(rng.integers(direction_bins))
        width = 2 * math.pi / direction_bins
        bearing = (b * width + 0.5 * width * min(difficulty, 1.0) * u) % (2 * math.pi)
        truth = {"bin": b, "n_bins": direction_bins, "bearing": bearing}
    elif kind is TaskKind.ORDER_PAIR:
        t_a = int(rng.integers(0, 60))
        gap = 1 + int(rng.integers(0, max(1, round(10 / difficulty))))
        t_b = t_a + gap if rng.random() < 0.5 else t_a - gap
        truth = {"t_a": t_a, "t_b": t_b, "margin": 2.0}
    elif kind is TaskKind.ORDER_LIST:
        if n_objects < 2:
            raise DomainError("need at least two objects")
        truth = {"order": [int(x) for x in rng.permutation(n_objects)]}
    elif kind is TaskKind.COUNT:
        n = int(np.clip(round(COUNT_MAX / 2 * (1 + difficulty * u)), 0, COUNT_MAX))
        truth = {"count": n, "tolerance": 1.0}
    else:
        size = 1 + int(rng.integers(3))
        labels = rng.choice(len(RELATION_LABELS), size=size, replace=False)
        truth = {"relations": sorted(RELATION_LABELS[i] for i in labels)}
    return TaskInstance(kind, int(seed), float(difficulty), truth, context_id)


def generate_corpus(size: int, seed: int, *, continuous_fraction: float = 0.5,
                    difficulty: float = 1.0, n_bins: int = DEFAULT_BINS) -> list[TaskInstance]:
    """Mixed corpus; discrete slots cycle through the five discrete kinds."""
    if size < 1:
        raise DomainError("corpus size must be positive")
    if not 0 <= continuous_fraction <= 1:
        raise DomainError("continuous_fraction must lie in [0, 1]")
    n_cont = round(size * continuous_fraction)
    kinds = [TaskKind.SCALAR] * n_cont + [DISCRETE_KINDS[i % len(DISCRETE_KINDS)]
                                          for i in range(size - n_cont)]
    rng = np.random.default_rng(seed)
    seeds = rng.integers(0, 2**31 - 1, size=size)
    order = rng.permutation(size)
    return [generate_task(kinds[j], int(seeds[i]), difficulty, context_id=i, n_bins=n_bins)
            for i, j in enumerate(order)]


def save_corpus(tasks: Iterable[TaskInstance], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for t in tasks:
            fh.write(json.dumps(t.to_record(), sort_keys=True) + "\n")


def load_corpus(path) -> list[TaskInstance]:
    tasks = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            tasks.append(TaskInstance.from_record(json.loads(line)))
        except (json.JSONDecodeError, DomainError) as exc:
            raise DomainError(f"{path}:{lineno}: {exc}") from exc
    if not tasks:
        raise DomainError(f"{path}: corpus is empty")
    return tasks


# -- answers, errors and rewards ----------------------------------------------

INVALID = None


@lru_cache(maxsize=None)
def _permutations(n: int) -> tuple:
    return tuple(itertools.permutations(range(n)))


def _subsets() -> tuple:
    return tuple(frozenset(l for b, l in enumerate(RELATION_LABELS) if mask >> b & 1)
                 for mask in range(1 << len(RELATION_LABELS)))


def answer_space(task: TaskInstance) -> list:
    """Valid answers for a task; the invalid action is not included."""
    t = task.truth
    if task.kind is TaskKind.SCALAR:
        return [float(v) for v in scalar_grid(t["n_bins"])]
    if task.kind is TaskKind.DIRECTION:
        return list(range(t["n_bins"]))
    if task.kind is TaskKind.ORDER_PAIR:
        return ["A", "B"]
    if task.kind is TaskKind.ORDER_LIST:
        return list(_permutations(len(t["order"])))
    if task.kind is TaskKind.COUNT:
        return list(range(COUNT_MAX + 1))
    return list(_subsets())


def n_actions(task: TaskInstance) -> int:
    return len(answer_space(task)) + 1


def verifier_score(task: TaskInstance, answer,
                   variant: V.VerifierVariant = V.VerifierVariant.DEFAULT) -> float:
    t = task.truth
    smooth = variant is V.VerifierVariant.SMOOTH
    if task.kind is TaskKind.DIRECTION:
        if smooth:
            width = 2 * math.pi / t["n_bins"]
            return V.verify_direction_angular(t["bearing"], answer * width, sigma=width)
        return V.verify_direction(t["n_bins"], t["bin"], answer)
    if task.kind is TaskKind.ORDER_PAIR:
        return V.verify_order_pair(t["t_a"], t["t_b"], answer, t["margin"])
    if task.kind is TaskKind.ORDER_LIST:
        return V.verify_order_list(t["order"], answer)
    if task.kind is TaskKind.COUNT:
        if smooth:
            return V.verify_count_linear(t["count"], answer)
        return V.verify_count(t["count"], answer, t["tolerance"])
    if task.kind is TaskKind.POSITION:
        return V.verify_position(t["relations"], answer)
    raise DomainError(f"{task.kind.value} is not a discrete task")


def is_correct(task: TaskInstance, answer, e_tol: float) -> bool:
    """Binary accuracy proxy: scalar error below ``e_tol``, exact match otherwise."""
    if answer is INVALID:
        return False
    t = task.truth
    if task.kind is TaskKind.SCALAR:
        # slack keeps grid neighbours exactly one bin away from passing by rounding
        return (answer - t["value"]) ** 2 < e_tol * (1 - 1e-9)
    if task.kind is TaskKind.DIRECTION:
        return answer == t["bin"]
    if task.kind is TaskKind.ORDER_PAIR:
        return answer == ("A" if t["t_a"] < t["t_b"] else "B")
    if task.kind is TaskKind.ORDER_LIST:
        return list(answer) == t["order"]
    if task.kind is TaskKind.COUNT:
        return answer == t["count"]
    return answer == frozenset(t["relations"])


@dataclass(frozen=True)
class RewardTables:
    """Per (context, action) error, format bit and correctness; padded with ``mask``."""

    errors: np.ndarray
    format_bits: np.ndarray
    correct: np.ndarray
    mask: np.ndarray

    @property
    def n_contexts(self) -> int:
        return self.errors.shape[0]


@dataclass(frozen=True)
class RewardPipeline:
    """verifier -> unified error -> smooth activation -> composite reward."""

    phi: V.PhiParams
    balance: float = 0.1
    operator: OperatorKind = OperatorKind.SIGMOID
    binary: bool = False
    n_bins: int = DEFAULT_BINS

    @classmethod
    def default(cls, k_max: float = 100.0, **kw) -> "RewardPipeline":
        return cls(phi=V.calibrate_phi(k_max), **kw)

    @property
    def e_tol(self) -> float:
        width = (SCALAR_HIGH - SCALAR_LOW) / (self.n_bins - 1)
        return width * width

    def task_row(self, task: TaskInstance):
        """(errors, format_bits, correct) over the answer space plus the invalid action."""
        answers = answer_space(task)
        errors, fmt, correct = [], [], []
        for a in answers:
            if task.kind.continuous:
                e = V.continuous_error(V.ContinuousError(a, task.truth["value"], SCALAR_E_MAX))
            else:
                e = V.phi_map(self.phi, verifier_score(task, a))
            errors.append(e)
            fmt.append(1.0)
            correct.append(is_correct(task, a, self.e_tol))
        if task.kind.continuous:
            errors.append(V.continuous_error(V.ContinuousError(None, task.truth["value"],
                                                               SCALAR_E_MAX)))
        else:
            errors.append(DISCRETE_E_MAX)
        fmt.append(0.0)
        correct.append(False)
        return np.array(errors), np.array(fmt), np.array(correct)

    def tables(self, corpus: Sequence[TaskInstance]) -> RewardTables:
        rows = [self.task_row(t) for t in corpus]
        width = max(len(r[0]) for r in rows)
        n = len(rows)
        errors = np.zeros((n, width))
        fmt = np.zeros((n, width))
        correct = np.zeros((n, width), dtype=bool)
        mask = np.zeros((n, width), dtype=bool)
        for i, (e, f, c) in enumerate(rows):
            m = len(e)
            errors[i, :m], fmt[i, :m], correct[i, :m], mask[i, :m] = e, f, c, True
        return RewardTables(errors, fmt, correct, mask)

    def rewards(self, errors, format_bits, correct, k: float):
        """Return (smooth_rewards, composite_rewards) for arrays of outcomes at sharpness k."""
        if self.binary:
            smooth = np.asarray(correct, dtype=np.float64)
        else:
            smooth = snra(SnraParams(k, self.operator), errors)
        return smooth, composite_reward(smooth, format_bits, self.balance)


# -- tabular policy -----------------------------------------------------------


def masked_log_softmax(logits: np.ndarray, mask: np.ndarray):
    """Return (log_probs, probs); masked entries get log-prob 0 and prob 0."""
    z = np.where(mask, logits, -np.inf)
    m = z.max(axis=-1, keepdims=True)
    lse = m + np.log(np.exp(z - m).sum(axis=-1, keepdims=True))
    logp = np.where(mask, logits - lse, 0.0)
    probs = np.where(mask, np.exp(logp), 0.0)
    return logp, probs


def answer_distances(task: TaskInstance) -> np.ndarray:
    """Pairwise distances between answers (invalid action last, infinitely far from all)."""
    answers = answer_space(task)
    n = len(answers)
    kind = task.kind
    if kind in (TaskKind.SCALAR, TaskKind.COUNT):
        idx = np.arange(n)
        d = np.abs(idx[:, None] - idx[None, :]).astype(float)
    elif kind is TaskKind.DIRECTION:
        d = np.array([[ring_distance(i, j, n) for j in range(n)] for i in range(n)], float)
    elif kind is TaskKind.ORDER_LIST:
        d = np.array([[V.kendall_distance(a, b) for b in answers] for a in answers], float)
    elif kind is TaskKind.POSITION:
        d = np.array([[len(a ^ b) for b in answers] for a in answers], float)
    else:
        d = np.where(np.eye(n, dtype=bool), 0.0, np.inf)
    out = np.full((n + 1, n + 1), np.inf)
    out[:n, :n] = d
    out[n, n] = 0.0
    return out


def answer_kernels(corpus: Sequence[TaskInstance], width: float, n_cols: int) -> np.ndarray:
    """Gaussian similarity ``exp(-d^2 / (2 width^2))`` per context, zero-padded to ``n_cols``."""
    ker = np.zeros((len(corpus), n_cols, n_cols))
    for c, task in enumerate(corpus):
        d = answer_distances(task)
        m = d.shape[0]
        if width > 0:
            with np.errstate(over="ignore"):
                ker[c, :m, :m] = np.exp(-0.5 * (d / width) ** 2)
        else:
            ker[c, :m, :m] = np.eye(m)
    return ker


def truth_index(task: TaskInstance) -> int:
    """Index of the exactly-correct answer in ``answer_space(task)``."""
    for i, a in enumerate(answer_space(task)):
        if is_correct(task, a, e_tol=1e-12):
            return i
    raise DomainError("no exactly-correct answer in the answer space")


def prior_logits(task: TaskInstance, *, floor: float = 3.0, invalid_logit: float = -3.0,
                 offset_scale: float = 0.45, width_scale: float = 0.06) -> np.ndarray:
    """Seeded initial belief: a bump centred on a near-miss answer.

    The centre sits about ``1 + difficulty * offset_scale * D * u`` answer-distance
    units from the truth (``D`` the largest finite distance, ``u ~ U[0, 1)``), with
    width ``max(1, width_scale * D)``. Logits are clamped below at ``-floor`` so
    every answer keeps some probability.
    """
    rng = np.random.default_rng([task.seed, _KIND_CODE[task.kind], 1])
    dist = answer_distances(task)[:-1, :-1]
    finite_max = float(dist[np.isfinite(dist)].max())
    d_truth = dist[truth_index(task)]
    target = 1.0 + task.difficulty * offset_scale * finite_max * rng.random()
    cand = np.flatnonzero(np.isfinite(d_truth) & (d_truth >= 1))
    if cand.size == 0:  # answers unrelated to each other: start on any wrong answer
        cand = np.flatnonzero(d_truth > 0)
        center = int(rng.choice(cand))
    else:
        gap = np.abs(d_truth[cand] - target)
        center = int(rng.choice(cand[gap == gap.min()]))
    width = max(1.0, width_scale * finite_max)
    with np.errstate(invalid="ignore"):
        bump = -0.5 * (dist[center] / width) ** 2
    logits = np.maximum(np.nan_to_num(bump, neginf=-floor), -floor)
    return np.append(logits, invalid_logit)


def prior_logit_table(corpus: Sequence[TaskInstance], n_cols: int, **kw) -> np.ndarray:
    out = np.zeros((len(corpus), n_cols))
    for c, task in enumerate(corpus):
        row = prior_logits(task, **kw)
        out[c, :len(row)] = row
    return out


@dataclass
class ToyPolicy:
    """Softmax policy over (context, action) with a frozen reference copy.

    ``logits[c] = reference_logits[c] + preferences[c] @ kernel[c]``: raising
    the preference for one answer also raises answers similar to it.
    ``kernel=None`` makes it a plain tabular policy. Preferences start at zero,
    so the initial policy equals the reference.
    """

    preferences: np.ndarray
    mask: np.ndarray
    reference_logits: np.ndarray
    kernel: Optional[np.ndarray] = None

    @classmethod
    def uniform(cls, mask: np.ndarray, kernel: Optional[np.ndarray] = None) -> "ToyPolicy":
        return cls.from_reference(np.zeros(mask.shape), mask, kernel)

    @classmethod
    def from_reference(cls, reference_logits: np.ndarray, mask: np.ndarray,
                       kernel: Optional[np.ndarray] = None) -> "ToyPolicy":
        ref = np.where(mask, reference_logits, 0.0)
        return cls(np.zeros(mask.shape), mask.copy(), ref, kernel)

    def logits_of(self, rows) -> np.ndarray:
        prefs = self.preferences[rows]
        if self.kernel is not None:
            prefs = np.einsum("...a,...ab->...b", prefs, self.kernel[rows])
        return self.reference_logits[rows] + prefs

    @property
    def logits(self) -> np.ndarray:
        return self.logits_of(slice(None))

    def to_preference_grad(self, rows, grad_logits: np.ndarray) -> np.ndarray:
        """Chain rule from d/d logits to d/d preferences for the given rows."""
        if self.kernel is None:
            return grad_logits
        return np.einsum("...ab,...b->...a", self.kernel[rows], grad_logits)

    def log_probs(self, context_ids=None):
        rows = slice(None) if context_ids is None else context_ids
        return masked_log_softmax(self.logits_of(rows), self.mask[rows])

    def reference_log_probs(self, context_ids=None):
        rows = slice(None) if context_ids is None else context_ids
        return masked_log_softmax(self.reference_logits[rows], self.mask[rows])


def policy_logprob(policy: ToyPolicy, context_id: int, action: int) -> float:
    n_ctx, n_act = policy.logits.shape
    if not (0 <= context_id < n_ctx and 0 <= action < n_act) or not policy.mask[context_id, action]:
        raise DomainError(f"no action {action} in context {context_id}")
    logp, _ = policy.log_probs(context_id)
    return float(logp[action])


def sample_actions(policy: ToyPolicy, context_ids: np.ndarray, group_size: int,
                   rng: np.random.Generator) -> np.ndarray:
    """Draw ``group_size`` actions per context by inverse-CDF sampling; shape (B, G)."""
    _, probs = policy.log_probs(context_ids)
    cdf = np.cumsum(probs, axis=-1)
    u = rng.random((len(context_ids), group_size))
    idx = (cdf[:, None, :] <= u[..., None]).sum(axis=-1)
    last_valid = policy.mask[context_ids].sum(axis=-1) - 1
    return np.minimum(idx, last_valid[:, None])


def sample_group(policy: ToyPolicy, task: TaskInstance, group_size: int, rng,
                 *, pipeline: RewardPipeline, k: float) -> TrajectoryGroup:
    if group_size < 2:
        raise DomainError("group size must be at least 2")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    cid = task.context_id
    actions = sample_actions(policy, np.array([cid]), group_size, rng)[0]
    errors, fmt, correct = pipeline.task_row(task)
    smooth, comp = pipeline.rewards(errors[actions], fmt[actions], correct[actions], k)
    logp, _ = policy.log_probs(cid)
    lp = logp[actions]
    return TrajectoryGroup(cid, actions, errors[actions], np.asarray(comp),
                           np.asarray(smooth), lp.copy(), lp.copy())
