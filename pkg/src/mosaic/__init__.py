"""Multistakeholder-aware visual art recommendation.

The package scores a painting collection against a handful of elicited
ratings, optionally boosts crowd-popular paintings, and selects a fixed-size
recommendation set that trades personal relevance against balanced coverage
of curated story groups.  It ships with an offline evaluation harness, an
HTTP study service, and a small CLI (``mosaic``).
"""

from mosaic.dataset import Collection, Painting, PopularityTable, StoryGroup, load_manifest, save_manifest
from mosaic.engines import ENGINE_IDS, EngineSpec, RankedRecommendation, recommend
from mosaic.metrics import group_coverage, jaccard, rbo
from mosaic.scoring import ScoreVector, UserProfile, aggregate_with_popularity, normalize_ratings, user_scores
from mosaic.selector import (
    RecommendationSet,
    SelectionInstance,
    brute_force_select,
    representativeness,
    select_top_r,
    solve_selection,
)
from mosaic.similarity import (
    EmbeddingTable,
    SimilarityMatrix,
    cosine_similarity_matrix,
    load_embeddings,
    load_similarity_matrix,
    save_embeddings,
    save_similarity_matrix,
)

__version__ = "0.1.0"

__all__ = [
    "Collection",
    "Painting",
    "PopularityTable",
    "StoryGroup",
    "load_manifest",
    "save_manifest",
    "EmbeddingTable",
    "SimilarityMatrix",
    "cosine_similarity_matrix",
    "load_similarity_matrix",
    "save_similarity_matrix",
    "load_embeddings",
    "save_embeddings",
    "ScoreVector",
    "UserProfile",
    "normalize_ratings",
    "user_scores",
    "aggregate_with_popularity",
    "SelectionInstance",
    "RecommendationSet",
    "representativeness",
    "select_top_r",
    "solve_selection",
    "brute_force_select",
    "ENGINE_IDS",
    "EngineSpec",
    "RankedRecommendation",
    "recommend",
    "jaccard",
    "rbo",
    "group_coverage",
    "__version__",
]
