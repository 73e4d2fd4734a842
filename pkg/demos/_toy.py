"""Small shared builders for the demo scripts: a toy gallery of 27 paintings
in three curated stories, plus random-but-seeded embedding vectors."""

import numpy as np

from mosaic.dataset import Collection, Painting, PopularityTable, StoryGroup
from mosaic.similarity import EmbeddingTable, cosine_similarity_matrix

STORIES = ("Water", "Warfare", "Monsters & Demons")


def toy_collection(m=27, popular=("p024", "p025", "p026")):
    ids = [f"p{i:03d}" for i in range(m)]
    paintings = [
        Painting(
            id=pid,
            title=f"Untitled no. {i}",
            artist=f"Painter {i % 5}",
            date=str(1850 + 3 * i),
            medium="oil on canvas",
            description="A quiet scene." if i % 2 else "",
            image_ref=f"img/{pid}.jpg",
        )
        for i, pid in enumerate(ids)
    ]
    k = len(STORIES)
    groups = [
        StoryGroup(a + 1, STORIES[a], frozenset(ids[a::k])) for a in range(k)
    ]
    popularity = PopularityTable({pid: 1.0 for pid in popular if pid in ids})
    return Collection.from_parts(paintings, groups, popularity)


def toy_matrix(collection, dim=16, seed=2024):
    rng = np.random.default_rng(seed)
    vectors = {pid: rng.normal(size=dim) for pid in collection.ids}
    return cosine_similarity_matrix(EmbeddingTable(dim=dim, vectors=vectors))
