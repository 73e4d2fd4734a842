"""Preference scoring: elicited ratings to weights, weights to scores.

The personal score of every painting is the weight-averaged similarity to
the rated paintings.  The aggregated score adds a popularity boost scaled by
the user's popularity tolerance ``beta``.  By default the personal scores
are min-max normalised before the boost so that ``beta`` means the same
thing whether the similarity backbone emits cosine values in [-1, 1] or
probability scores in [0, 1]; pass ``raw=True`` for the unnormalised sum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from mosaic.dataset import PopularityTable
from mosaic.similarity import SimilarityMatrix

KIND_PERSONAL = "personal"
KIND_AGGREGATED = "aggregated"


@dataclass(frozen=True)
class UserProfile:
    """Elicited ratings plus the two tolerance knobs.

    ``beta`` (popularity) and ``xi`` (diversity) may be left as None when
    unknown; engines that need them reject such profiles, and the offline
    harness simulates the missing values.
    """

    ratings: Mapping[str, int]
    beta: float | None = None
    xi: float | None = None

    def __post_init__(self) -> None:
        if not self.ratings:
            raise ValueError("profile must rate at least one painting")
        for pid, rating in self.ratings.items():
            if not isinstance(rating, int) or isinstance(rating, bool) or not 1 <= rating <= 5:
                raise ValueError(f"rating for {pid!r} must be an integer in 1..5, got {rating!r}")
        for name, value in (("beta", self.beta), ("xi", self.xi)):
            if value is not None and not (math.isfinite(value) and 0.0 <= value <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1], got {value!r}")


@dataclass(frozen=True)
class ScoreVector:
    """A score for every painting, aligned with ``ids``."""

    ids: tuple[str, ...]
    values: np.ndarray
    kind: str

    def __post_init__(self) -> None:
        if self.values.shape != (len(self.ids),):
            raise ValueError("scores and ids disagree in length")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("score vector contains non-finite values")

    def as_dict(self) -> dict[str, float]:
        return {pid: float(v) for pid, v in zip(self.ids, self.values)}

    def __getitem__(self, painting_id: str) -> float:
        try:
            index = self._index
        except AttributeError:
            index = {pid: i for i, pid in enumerate(self.ids)}
            object.__setattr__(self, "_index", index)
        return float(self.values[index[painting_id]])


def normalize_ratings(ratings: Mapping[str, int]) -> dict[str, float]:
    """Map 1..5 star ratings to weights in [0, 1] via (rating - 1) / 4."""
    if not ratings:
        raise ValueError("ratings must be non-empty")
    weights = {}
    for pid, rating in ratings.items():
        if not isinstance(rating, int) or isinstance(rating, bool) or not 1 <= rating <= 5:
            raise ValueError(f"rating for {pid!r} must be an integer in 1..5, got {rating!r}")
        weights[pid] = (rating - 1) / 4
    return weights


def weighted_scores(matrix: SimilarityMatrix, weights: Mapping[str, float]) -> ScoreVector:
    """Weight-averaged similarity of every painting to the rated set.

    score(i) = (1/n) * sum_j w_j * A[i, j] over the n rated paintings j,
    computed for every painting in the matrix, rated ones included.
    """
    if not weights:
        raise ValueError("weights must be non-empty")
    cols = []
    for pid in weights:
        try:
            cols.append(matrix.index_of(pid))
        except KeyError:
            raise KeyError(f"rated painting {pid!r} is not in the similarity matrix") from None
    w = np.array([weights[pid] for pid in weights], dtype=np.float64)
    values = matrix.values[:, cols] @ w / len(w)
    return ScoreVector(ids=matrix.ids, values=values, kind=KIND_PERSONAL)


def user_scores(matrix: SimilarityMatrix, profile: UserProfile) -> ScoreVector:
    """Personal score for every painting from a profile's elicited ratings."""
    return weighted_scores(matrix, normalize_ratings(profile.ratings))


def minmax_normalize(values: np.ndarray) -> np.ndarray:
    """Min-max rescale into [0, 1]; a constant vector maps to all zeros."""
    low = values.min()
    span = values.max() - low
    if span == 0.0:
        return np.zeros_like(values)
    return (values - low) / span


def aggregate_with_popularity(
    personal: ScoreVector,
    popularity: PopularityTable,
    beta: float,
    *,
    raw: bool = False,
) -> ScoreVector:
    """Blend personal scores with crowd popularity.

    Default: minmax(personal) + beta * popularity.  With ``raw=True`` the
    personal scores enter unnormalised (the literal additive formulation).
    """
    if not (math.isfinite(beta) and 0.0 <= beta <= 1.0):
        raise ValueError(f"beta must lie in [0, 1], got {beta!r}")
    base = personal.values if raw else minmax_normalize(personal.values)
    pop = np.array([popularity.get(pid) for pid in personal.ids], dtype=np.float64)
    return ScoreVector(ids=personal.ids, values=base + beta * pop, kind=KIND_AGGREGATED)
