"""Set and ranking similarity, plus story-coverage counting.

``jaccard`` compares recommendation sets, ``rbo`` compares rankings with a
top-weighted, finite-depth overlap (normalised so identical rankings score
exactly 1), and ``group_coverage`` counts the distinct story groups a set
touches.
"""

from __future__ import annotations

from typing import Iterable, Sequence

from mosaic.dataset import StoryGroup

DEFAULT_RBO_P = 0.9


def jaccard(a: Iterable[str], b: Iterable[str]) -> float:
    """Intersection over union of two id collections (as sets).

    Two empty inputs compare equal by convention and score 1.
    """
    sa, sb = set(a), set(b)
    union = sa | sb
    if not union:
        return 1.0
    return len(sa & sb) / len(union)


def rbo(a: Sequence[str], b: Sequence[str], p: float = DEFAULT_RBO_P) -> float:
    """Rank-biased overlap of two equal-length, duplicate-free rankings.

    Truncated at the common length k and normalised by the perfect-agreement
    mass, i.e. sum_{d=1..k} p^(d-1) * |a[:d] & b[:d]| / d divided by
    sum_{d=1..k} p^(d-1).  Identical rankings score exactly 1, disjoint ones
    0.  ``p`` in (0, 1) controls top-weightedness.
    """
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie strictly between 0 and 1, got {p!r}")
    if len(a) != len(b):
        raise ValueError(f"rankings must have equal length, got {len(a)} and {len(b)}")
    if len(set(a)) != len(a) or len(set(b)) != len(b):
        raise ValueError("rankings must not contain duplicates")
    if not a:
        return 1.0

    seen_a: set[str] = set()
    seen_b: set[str] = set()
    overlap = 0
    numerator = 0.0
    denominator = 0.0
    weight = 1.0
    for depth in range(len(a)):
        x, y = a[depth], b[depth]
        if x == y:
            overlap += 1
        else:
            if x in seen_b:
                overlap += 1
            if y in seen_a:
                overlap += 1
            seen_a.add(x)
            seen_b.add(y)
        numerator += weight * overlap / (depth + 1)
        denominator += weight
        weight *= p
    return numerator / denominator


def group_coverage(items: Iterable[str], groups: Sequence[StoryGroup]) -> int:
    """Number of distinct story groups intersected by the items."""
    chosen = set(items)
    return sum(1 for g in groups if g.member_ids & chosen)
