"""Graded verifiers for spatial subtasks and the log-scaled error mapping.

Discrete verifiers return a score in [0, 1]. ``phi_map`` turns a score into a
non-negative error so discrete and continuous subtasks share one error space,
and ``calibrate_phi`` picks the scale so that a complete failure lands on a
chosen near-zero reward once the sharpness reaches ``k_max``.
"""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass
from typing import Hashable, Iterable, Mapping, Optional, Sequence

from .snra_core import DomainError

DEFAULT_NEAR_CREDIT = 0.5
DEFAULT_EPS_LOG = 1e-4
DEFAULT_EPS_R = 0.01


class VerifierVariant(str, enum.Enum):
    """Scoring variants. Only DEFAULT is used by the training pipeline."""

    DEFAULT = "default"
    SMOOTH = "smooth"  # angular Gaussian / normalized linear count / relation-graph distance


@dataclass(frozen=True)
class ContinuousError:
    """A scalar prediction against its truth; ``predicted=None`` marks a parse failure."""

    predicted: Optional[float]
    truth: float
    e_max: float

    def __post_init__(self):
        if not (math.isfinite(self.e_max) and self.e_max > 0):
            raise DomainError("e_max must be positive and finite")
        if not math.isfinite(self.truth):
            raise DomainError("truth must be finite")


def continuous_error(pred: ContinuousError) -> float:
    if pred.predicted is None or not math.isfinite(pred.predicted):
        return pred.e_max
    return (pred.predicted - pred.truth) ** 2


# -- discrete verifiers ------------------------------------------------------


def ring_distance(i: int, j: int, n_bins: int) -> int:
    d = abs(i - j) % n_bins
    return min(d, n_bins - d)


def verify_direction(n_bins: int, truth_bin: int, pred_bin: int,
                     near_credit: float = DEFAULT_NEAR_CREDIT) -> float:
    if n_bins not in (4, 8):
        raise DomainError(f"direction ring must have 4 or 8 bins, got {n_bins}")
    if not (0 <= truth_bin < n_bins and 0 <= pred_bin < n_bins):
        raise DomainError("direction bin out of range")
    if not 0 < near_credit < 1:
        raise DomainError("near_credit must lie in (0, 1)")
    d = ring_distance(truth_bin, pred_bin, n_bins)
    if d == 0:
        return 1.0
    return near_credit if d == 1 else 0.0


def verify_direction_angular(theta: float, theta_pred: float, sigma: float) -> float:
    """Smooth variant: Gaussian in the wrapped bearing difference (radians)."""
    if sigma <= 0:
        raise DomainError("sigma must be positive")
    delta = abs(theta - theta_pred) % (2 * math.pi)
    delta = min(delta, 2 * math.pi - delta)
    return math.exp(-delta * delta / (2 * sigma * sigma))


def verify_order_pair(t_a: float, t_b: float, predicted_first: str, margin: float) -> float:
    """Pairwise order score; near-ties are down-weighted even when correct."""
    if margin <= 0:
        raise DomainError("margin must be positive")
    if predicted_first not in ("A", "B"):
        raise DomainError("predicted_first must be 'A' or 'B'")
    if not (math.isfinite(t_a) and math.isfinite(t_b)):
        raise DomainError("timestamps must be finite")
    if t_a == t_b:
        return 0.0
    truth_first = "A" if t_a < t_b else "B"
    if predicted_first != truth_first:
        return 0.0
    return -math.expm1(-abs(t_a - t_b) / margin)


def _count_inversions(seq: list[int]) -> int:
    # merge sort, O(n log n)
    if len(seq) < 2:
        return 0
    mid = len(seq) // 2
    left, right = seq[:mid], seq[mid:]
    inv = _count_inversions(left) + _count_inversions(right)
    i = j = 0
    merged = []
    while i < len(left) and j < len(right):
        if left[i] <= right[j]:
            merged.append(left[i])
            i += 1
        else:
            merged.append(right[j])
            inv += len(left) - i
            j += 1
    merged.extend(left[i:])
    merged.extend(right[j:])
    seq[:] = merged
    return inv


def kendall_distance(truth_perm: Sequence[Hashable], pred_perm: Sequence[Hashable]) -> int:
    """Number of item pairs ordered differently by the two permutations."""
    if len(truth_perm) != len(pred_perm):
        raise DomainError("permutations have different lengths")
    pos = {item: idx for idx, item in enumerate(pred_perm)}
    if len(pos) != len(pred_perm) or len(set(truth_perm)) != len(truth_perm):
        raise DomainError("input is not a permutation (repeated items)")
    if set(pos) != set(truth_perm):
        raise DomainError("permutations are over different items")
    return _count_inversions([pos[item] for item in truth_perm])


def verify_order_list(truth_perm: Sequence[Hashable], pred_perm: Sequence[Hashable]) -> float:
    n = len(truth_perm)
    if n < 2:
        raise DomainError("listwise order needs at least two items")
    pairs = math.comb(n, 2)
    return (pairs - kendall_distance(truth_perm, pred_perm)) / pairs


def verify_count(truth: int, pred: int, tolerance: float = 1.0) -> float:
    if tolerance <= 0:
        raise DomainError("count tolerance must be positive")
    if truth < 0 or pred < 0:
        raise DomainError("counts must be non-negative")
    return math.exp(-abs(pred - truth) / tolerance)


def verify_count_linear(truth: int, pred: int, offset: float = 1.0) -> float:
    """Smooth variant: linear decay normalized by the true count."""
    if offset <= 0:
        raise DomainError("offset must be positive")
    return max(0.0, 1.0 - abs(pred - truth) / (max(truth, 1) + offset))


def verify_position(truth_set: Iterable[str], pred_set: Iterable[str]) -> float:
    """Jaccard similarity between relation label sets."""
    truth, pred = frozenset(truth_set), frozenset(pred_set)
    if not truth:
        raise DomainError("truth relation set must be non-empty")
    return len(truth & pred) / len(truth | pred)


def verify_position_graph(graph: Mapping[str, Iterable[str]], truth: str, pred: str) -> float:
    """Smooth variant for exclusive labels: 1 - d(truth, pred) / d_max on an undirected graph."""
    adj: dict[str, set[str]] = {}
    for u, nbrs in graph.items():
        for v in nbrs:
            adj.setdefault(u, set()).add(v)
            adj.setdefault(v, set()).add(u)
    if truth not in adj or pred not in adj:
        raise DomainError("label not in relation graph")

    def bfs(src):
        dist = {src: 0}
        queue = deque([src])
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if v not in dist:
                    dist[v] = dist[u] + 1
                    queue.append(v)
        return dist

    d_max = max(max(bfs(node).values()) for node in adj)
    dist = bfs(truth)
    if pred not in dist:
        return 0.0
    return 1.0 - dist[pred] / d_max if d_max else 1.0


# -- score -> error mapping --------------------------------------------------


@dataclass(frozen=True)
class PhiParams:
    eta: float
    gamma: float = 1.0
    eps_log: float = DEFAULT_EPS_LOG
    score_floor: float = 0.0

    def __post_init__(self):
        if not self.eta > 0:
            raise DomainError("eta must be positive")
        if not self.gamma >= 1:
            raise DomainError("gamma must be >= 1")
        if not 0 < self.eps_log < 1:
            raise DomainError("eps_log must lie in (0, 1)")
        if not 0 <= self.score_floor < 1:
            raise DomainError("score_floor must lie in [0, 1)")

    @property
    def failure_score(self) -> float:
        # scores at or below this are complete failures; the eps clip keeps log finite
        return max(self.score_floor, self.eps_log)


def phi_map(params: PhiParams, score: float) -> float:
    """Error ``eta * max(0, -log(V + eps))**gamma`` with V clipped up to the failure score."""
    if not 0 <= score <= 1:
        raise DomainError(f"score must lie in [0, 1], got {score!r}")
    v = max(score, params.failure_score)
    inner = max(0.0, -math.log(v + params.eps_log))
    return params.eta * inner ** params.gamma


def target_error(k_max: float, eps_r: float) -> float:
    """Error whose sigmoid reward at sharpness ``k_max`` equals ``eps_r``."""
    if not 0 < eps_r < 1:
        raise DomainError("eps_r must lie in (0, 1)")
    if not k_max > 0:
        raise DomainError("k_max must be positive")
    return math.log(2.0 / eps_r - 1.0) / k_max


def calibrate_phi(k_max: float, eps_r: float = DEFAULT_EPS_R, gamma: float = 1.0,
                  eps_log: float = DEFAULT_EPS_LOG, score_floor: float = 0.0) -> PhiParams:
    if not 0 < eps_log < 0.5:
        raise DomainError("eps_log must lie in (0, 1/2) so the failure log is negative")
    e_star = target_error(k_max, eps_r)
    floor = max(score_floor, eps_log)
    inner = -math.log(floor + eps_log)
    if inner <= 0:
        raise DomainError("score_floor too high: failure maps to zero error")
    return PhiParams(eta=e_star / inner ** gamma, gamma=gamma, eps_log=eps_log,
                     score_floor=score_floor)


@dataclass(frozen=True)
class VerifierOutcome:
    score: float
    mapped_error: float


def outcome(params: PhiParams, score: float) -> VerifierOutcome:
    return VerifierOutcome(score, phi_map(params, score))
