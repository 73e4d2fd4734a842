"""The eight recommendation engine variants.

Two similarity backbones (abstract names ``a`` and ``b``, bound to whatever
matrices the caller registers) crossed with four policies:

* ``base``   - rank by personal score alone
* ``pop``    - rank by the popularity-boosted score (needs ``beta``)
* ``fair``   - exact selection trading relevance against story coverage
  (needs ``xi``)
* ``mosaic`` - the combination: popularity-boosted scores inside the
  relevance/coverage selection (needs ``beta`` and ``xi``)

``fair`` solves over the same score vector as ``mosaic`` with beta = 0, so
``mosaic(beta=0, xi)`` and ``fair(xi)`` coincide exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping

from mosaic.dataset import Collection
from mosaic.scoring import (
    KIND_PERSONAL,
    ScoreVector,
    UserProfile,
    aggregate_with_popularity,
    user_scores,
)
from mosaic.selector import (
    DEFAULT_NODE_BUDGET,
    RecommendationSet,
    SelectionInstance,
    select_top_r,
    solve_selection,
)
from mosaic.similarity import SimilarityMatrix

BACKBONES = ("a", "b")
POLICIES = ("base", "pop", "fair", "mosaic")
ENGINE_IDS = tuple(f"{policy}-{backbone}" for policy in POLICIES for backbone in BACKBONES)

DEFAULT_R = 9


@dataclass(frozen=True)
class EngineSpec:
    """One engine variant: a backbone, a policy, and the set size r."""

    backbone: str
    policy: str
    r: int = DEFAULT_R

    def __post_init__(self) -> None:
        if self.backbone not in BACKBONES:
            raise ValueError(f"unknown backbone {self.backbone!r}, expected one of {BACKBONES}")
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}, expected one of {POLICIES}")
        if self.r < 1:
            raise ValueError(f"r must be positive, got {self.r}")

    @property
    def engine_id(self) -> str:
        return f"{self.policy}-{self.backbone}"


def parse_engine_id(engine_id: str, r: int = DEFAULT_R) -> EngineSpec:
    if engine_id not in ENGINE_IDS:
        raise ValueError(f"unknown engine {engine_id!r}, expected one of {ENGINE_IDS}")
    policy, backbone = engine_id.rsplit("-", 1)
    return EngineSpec(backbone=backbone, policy=policy, r=r)


@dataclass(frozen=True)
class RankedRecommendation:
    """A ranked set with full provenance for auditing."""

    engine: str
    params: Mapping[str, object]
    items: tuple[str, ...]
    scores: tuple[float, ...]
    objective: float
    solver: str
    optimal: bool


def _needs(value: float | None, name: str, engine_id: str) -> float:
    if value is None:
        raise ValueError(f"engine {engine_id} requires {name}, but the profile does not set it")
    return value


def recommend(
    engine: EngineSpec,
    collection: Collection,
    matrices: Mapping[str, SimilarityMatrix],
    profile: UserProfile,
    *,
    raw_aggregation: bool = False,
    node_budget: int = DEFAULT_NODE_BUDGET,
) -> RankedRecommendation:
    """Run one engine for one profile.

    ``matrices`` maps backbone names to registered similarity matrices; the
    engine's matrix must cover the collection exactly.  ``raw_aggregation``
    skips the min-max normalisation of personal scores everywhere it would
    apply (the literal additive formulation).
    """
    try:
        matrix = matrices[engine.backbone]
    except KeyError:
        raise ValueError(f"no similarity matrix registered for backbone {engine.backbone!r}") from None
    if set(matrix.ids) != set(collection.ids):
        raise ValueError("similarity matrix ids do not cover the collection exactly")

    personal = user_scores(matrix, profile)
    params: dict[str, object] = {"r": engine.r, "raw_aggregation": raw_aggregation}

    def solve(scores: ScoreVector, xi: float) -> RecommendationSet:
        instance = SelectionInstance(
            scores=scores, groups=collection.groups, gamma=collection.gamma, xi=xi, r=engine.r
        )
        return solve_selection(instance, node_budget=node_budget)

    if engine.policy == "base":
        result = select_top_r(personal, engine.r)
    elif engine.policy == "pop":
        beta = _needs(profile.beta, "beta", engine.engine_id)
        params["beta"] = beta
        result = select_top_r(
            aggregate_with_popularity(personal, collection.popularity, beta, raw=raw_aggregation),
            engine.r,
        )
    elif engine.policy == "fair":
        xi = _needs(profile.xi, "xi", engine.engine_id)
        params["xi"] = xi
        fair_scores = aggregate_with_popularity(
            personal, collection.popularity, 0.0, raw=raw_aggregation
        )
        result = solve(replace(fair_scores, kind=KIND_PERSONAL), xi)
    else:  # mosaic
        beta = _needs(profile.beta, "beta", engine.engine_id)
        xi = _needs(profile.xi, "xi", engine.engine_id)
        params["beta"] = beta
        params["xi"] = xi
        aggregated = aggregate_with_popularity(
            personal, collection.popularity, beta, raw=raw_aggregation
        )
        result = solve(aggregated, xi)

    return RankedRecommendation(
        engine=engine.engine_id,
        params=params,
        items=tuple(result.items),
        scores=tuple(result.item_scores),
        objective=result.objective_value,
        solver=result.solver,
        optimal=result.optimal,
    )
