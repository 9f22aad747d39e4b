"""Exponential mechanism over finite weighted candidate sets.

Scores are costs (lower is better). A candidate with weight w and score s
gets probability proportional to ``w * exp(-eps * s / (2 * sensitivity))``.
Weights let a contiguous run of equal-score candidates collapse into one
entry; sampling such a run then drawing uniformly inside it reproduces the
flat mechanism exactly. Infinite scores mark infeasible candidates; they
carry zero probability and at least one entry must stay finite.

Sampling uses the Gumbel-max trick on the log weights, so no normalization
happens on the sampling path and very negative logits cannot underflow a
softmax. ``exact_probabilities`` exists for tests and small-scale audits.
"""
from __future__ import annotations

import dataclasses

import numpy as np

from .core import ValidationError

PROBABILITY_CAP = 1_000_000


def ensure_rng(rng) -> np.random.Generator:
    """Accept a Generator, a seed, or None (fresh entropy)."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


@dataclasses.dataclass(frozen=True)
class ScoredCandidates:
    """Finite candidate set with scores, multiplicity weights, and budget."""

    ids: tuple
    scores: np.ndarray
    sensitivity: float
    epsilon: float
    weights: np.ndarray | None = None

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        if scores.ndim != 1 or scores.size == 0:
            raise ValidationError("need at least one scored candidate")
        if len(self.ids) != scores.size:
            raise ValidationError("ids and scores length mismatch")
        if np.any(np.isnan(scores)) or np.any(scores == -np.inf):
            raise ValidationError("scores must be > -inf and not NaN")
        if not (self.sensitivity > 0) or not np.isfinite(self.sensitivity):
            raise ValidationError("sensitivity must be positive and finite")
        if not (self.epsilon > 0) or not np.isfinite(self.epsilon):
            raise ValidationError("epsilon must be positive and finite")
        if self.weights is None:
            weights = np.ones_like(scores)
        else:
            weights = np.asarray(self.weights, dtype=np.float64)
            if weights.shape != scores.shape:
                raise ValidationError("weights shape mismatch")
            if np.any(~np.isfinite(weights)) or np.any(weights <= 0):
                raise ValidationError("weights must be positive and finite")
        if not np.any(np.isfinite(scores)):
            raise ValidationError("every candidate is infeasible")
        scores = scores.copy()
        scores.setflags(write=False)
        weights = weights.copy()
        weights.setflags(write=False)
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "weights", weights)

    def logits(self) -> np.ndarray:
        return np.log(self.weights) - self.epsilon * self.scores / (2.0 * self.sensitivity)


def exact_probabilities(candidates: ScoredCandidates) -> np.ndarray:
    """Normalized selection probabilities (stable log-space softmax)."""
    if len(candidates.ids) > PROBABILITY_CAP:
        raise ValidationError("candidate set too large for exact probabilities")
    logits = candidates.logits()
    finite = np.isfinite(logits)
    shifted = logits - logits[finite].max()
    probs = np.where(finite, np.exp(np.where(finite, shifted, 0.0)), 0.0)
    return probs / probs.sum()


def sample(candidates: ScoredCandidates, rng) -> tuple[object, int]:
    """Draw one candidate; returns (id, index). Deterministic given the rng."""
    rng = ensure_rng(rng)
    logits = candidates.logits()
    noisy = logits + rng.gumbel(size=logits.size)
    noisy = np.where(np.isfinite(logits), noisy, -np.inf)
    idx = int(np.argmax(noisy))
    return candidates.ids[idx], idx


def utility_gap_bound(candidates: ScoredCandidates) -> float:
    """Expected score excess over the optimum is at most this.

    The standard bound ``(2 * sensitivity / epsilon) * log(total weight)``,
    invariant under shifting all scores by a constant.
    """
    total_weight = float(candidates.weights.sum())
    return 2.0 * candidates.sensitivity / candidates.epsilon * np.log(total_weight)
