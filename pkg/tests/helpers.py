"""Shared fixture builders for the test suite."""

from __future__ import annotations

import numpy as np

from mosaic.dataset import Collection, Painting, PopularityTable, StoryGroup
from mosaic.scoring import ScoreVector
from mosaic.selector import SelectionInstance
from mosaic.similarity import EmbeddingTable, SimilarityMatrix, cosine_similarity_matrix


def make_ids(m: int, prefix: str = "p") -> list[str]:
    return [f"{prefix}{i:03d}" for i in range(m)]


def make_collection(
    m: int = 30,
    k: int = 3,
    popularity: dict[str, float] | None = None,
    gamma: dict[str, float] | None = None,
    leave_ungrouped: int = 0,
) -> Collection:
    """A collection whose first m - leave_ungrouped paintings are split
    evenly (round-robin) across k disjoint story groups."""
    ids = make_ids(m)
    paintings = [Painting(id=pid, title=f"Painting {pid}", artist="A") for pid in ids]
    grouped = ids[: m - leave_ungrouped]
    members: list[list[str]] = [[] for _ in range(k)]
    for i, pid in enumerate(grouped):
        members[i % k].append(pid)
    groups = [
        StoryGroup(group_id=a + 1, name=f"story {a + 1}", member_ids=frozenset(members[a]))
        for a in range(k)
    ]
    return Collection.from_parts(
        paintings, groups, PopularityTable(popularity or {}), gamma or {}
    )


def make_matrix(ids: list[str], dim: int = 8, seed: int = 0) -> SimilarityMatrix:
    rng = np.random.default_rng(seed)
    table = EmbeddingTable(dim=dim, vectors={pid: rng.normal(size=dim) for pid in ids})
    return cosine_similarity_matrix(table)


def random_selection_instance(
    rng: np.random.Generator,
    xi: float | None = None,
    partition: bool | None = None,
    gamma_mode: str | None = None,
) -> SelectionInstance:
    """Instances matching the oracle-equivalence envelope:
    m <= 18, r <= 6, K <= 4, unit or varied gamma, partition or overlap."""
    m = int(rng.integers(6, 19))
    r = int(rng.integers(1, min(6, m) + 1))
    k = int(rng.integers(1, 5))
    ids = tuple(f"p{i:02d}" for i in range(m))
    scores = ScoreVector(ids=ids, values=rng.normal(size=m), kind="personal")

    if partition is None:
        partition = bool(rng.integers(0, 2))
    member_sets: list[set[str]] = []
    if partition:
        covered = int(rng.integers(0, m + 1))
        perm = [ids[i] for i in rng.permutation(m)[:covered]]
        cuts = sorted(rng.integers(0, covered + 1, size=k - 1)) if k > 1 else []
        bounds = [0, *cuts, covered]
        member_sets = [set(perm[bounds[a] : bounds[a + 1]]) for a in range(k)]
    else:
        for _ in range(k):
            size = int(rng.integers(0, m + 1))
            member_sets.append({ids[i] for i in rng.choice(m, size=size, replace=False)})
    groups = [
        StoryGroup(group_id=a + 1, name=f"g{a + 1}", member_ids=frozenset(member_sets[a]))
        for a in range(k)
    ]

    if gamma_mode is None:
        gamma_mode = ["unit", "per_group", "per_painting"][int(rng.integers(0, 3))]
    if gamma_mode == "unit":
        gamma: dict[str, float] = {}
    elif gamma_mode == "per_group":
        gamma = {}
        for a, members in enumerate(member_sets):
            value = float(rng.integers(1, 5))
            for pid in members:
                gamma[pid] = value
    else:
        gamma = {pid: float(rng.integers(1, 5)) for pid in ids}

    if xi is None:
        xi = float(rng.choice([0.0, 0.25, 0.5, 1.0]))
    return SelectionInstance(scores=scores, groups=groups, gamma=gamma, xi=xi, r=r)
