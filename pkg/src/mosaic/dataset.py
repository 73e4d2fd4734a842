"""Painting collection, story groups, and popularity list.

A collection lives in a single JSON manifest::

    {
      "paintings": [{"id", "title", "artist", "date", "medium",
                     "dimensions", "description", "image_ref"}, ...],
      "groups": [{"group_id", "name", "member_ids"}, ...],
      "popularity": {"<painting id>": <score in [0, 1]>, ...},
      "gamma": {"<painting id>": <weight >= 0>, ...}
    }

Only ``paintings`` (with at least one entry) is mandatory.  Story groups may
overlap, paintings may belong to no group at all, popularity defaults to 0
and the per-painting coverage weight gamma defaults to 1.  A loaded
:class:`Collection` is immutable and safe to share across threads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Mapping


class ManifestError(ValueError):
    """Manifest failed to parse or violates a collection invariant."""


@dataclass(frozen=True)
class Painting:
    """One painting and its display metadata.

    ``description`` may be empty but is always carried; ``image_ref`` is an
    opaque path or URL, never dereferenced here.
    """

    id: str
    title: str = ""
    artist: str = ""
    date: str = ""
    medium: str = ""
    dimensions: str = ""
    description: str = ""
    image_ref: str = ""


@dataclass(frozen=True)
class StoryGroup:
    """A curated thematic subset of the collection."""

    group_id: int
    name: str
    member_ids: frozenset[str]


@dataclass(frozen=True)
class PopularityTable:
    """Crowd popularity per painting, in [0, 1]; missing ids score 0."""

    scores: Mapping[str, float] = field(default_factory=dict)

    def get(self, painting_id: str) -> float:
        return self.scores.get(painting_id, 0.0)


@dataclass(frozen=True)
class Collection:
    """Validated, indexed painting collection.

    Construct via :func:`load_manifest` (or :meth:`from_parts` for tests);
    both enforce the invariants: unique painting ids, group members that
    resolve, popularity in [0, 1], finite non-negative gamma.
    """

    paintings: tuple[Painting, ...]
    groups: tuple[StoryGroup, ...]
    popularity: PopularityTable
    gamma: Mapping[str, float]
    _by_id: Mapping[str, Painting] = field(repr=False, compare=False, default_factory=dict)
    _groups_of: Mapping[str, frozenset[int]] = field(repr=False, compare=False, default_factory=dict)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(p.id for p in self.paintings)

    def __len__(self) -> int:
        return len(self.paintings)

    def __contains__(self, painting_id: str) -> bool:
        return painting_id in self._by_id

    def painting(self, painting_id: str) -> Painting:
        try:
            return self._by_id[painting_id]
        except KeyError:
            raise KeyError(f"unknown painting id: {painting_id!r}") from None

    @classmethod
    def from_parts(
        cls,
        paintings: list[Painting],
        groups: list[StoryGroup] | None = None,
        popularity: PopularityTable | None = None,
        gamma: Mapping[str, float] | None = None,
    ) -> "Collection":
        return _build_collection(
            paintings,
            list(groups or []),
            popularity or PopularityTable({}),
            dict(gamma or {}),
        )


def _build_collection(
    paintings: list[Painting],
    groups: list[StoryGroup],
    popularity: PopularityTable,
    gamma: dict[str, float],
) -> Collection:
    if not paintings:
        raise ManifestError("collection must contain at least one painting")

    by_id: dict[str, Painting] = {}
    for p in paintings:
        if not p.id:
            raise ManifestError("painting with empty id")
        if p.id in by_id:
            raise ManifestError(f"duplicate painting id: {p.id!r}")
        by_id[p.id] = p

    seen_groups: set[int] = set()
    for g in groups:
        if g.group_id < 1:
            raise ManifestError(f"group_id must be a positive integer, got {g.group_id!r}")
        if g.group_id in seen_groups:
            raise ManifestError(f"duplicate group_id: {g.group_id}")
        seen_groups.add(g.group_id)
        for member in sorted(g.member_ids):
            if member not in by_id:
                raise ManifestError(
                    f"group {g.group_id} ({g.name!r}) references unknown painting {member!r}"
                )

    for pid, score in popularity.scores.items():
        if pid not in by_id:
            raise ManifestError(f"popularity entry for unknown painting {pid!r}")
        if not (isinstance(score, (int, float)) and math.isfinite(score) and 0.0 <= score <= 1.0):
            raise ManifestError(f"popularity score for {pid!r} outside [0, 1]: {score!r}")

    for pid, weight in gamma.items():
        if pid not in by_id:
            raise ManifestError(f"gamma entry for unknown painting {pid!r}")
        if not (isinstance(weight, (int, float)) and math.isfinite(weight) and weight >= 0.0):
            raise ManifestError(f"gamma for {pid!r} must be finite and >= 0, got {weight!r}")

    full_gamma = {p.id: float(gamma.get(p.id, 1.0)) for p in paintings}

    groups_of: dict[str, set[int]] = {p.id: set() for p in paintings}
    for g in groups:
        for member in g.member_ids:
            groups_of[member].add(g.group_id)

    return Collection(
        paintings=tuple(paintings),
        groups=tuple(groups),
        popularity=PopularityTable(dict(popularity.scores)),
        gamma=full_gamma,
        _by_id=by_id,
        _groups_of={pid: frozenset(gs) for pid, gs in groups_of.items()},
    )


_PAINTING_FIELDS = ("id", "title", "artist", "date", "medium", "dimensions", "description", "image_ref")


def _parse_painting(record: Any, index: int) -> Painting:
    if not isinstance(record, dict):
        raise ManifestError(f"paintings[{index}] is not an object: {record!r}")
    if "id" not in record:
        raise ManifestError(f"paintings[{index}] is missing an id")
    unknown = set(record) - set(_PAINTING_FIELDS)
    if unknown:
        raise ManifestError(f"paintings[{index}] has unknown fields: {sorted(unknown)}")
    values = {}
    for name in _PAINTING_FIELDS:
        raw = record.get(name, "")
        if not isinstance(raw, str):
            raise ManifestError(f"paintings[{index}].{name} must be a string, got {raw!r}")
        values[name] = raw
    return Painting(**values)


def _parse_group(record: Any, index: int) -> StoryGroup:
    if not isinstance(record, dict):
        raise ManifestError(f"groups[{index}] is not an object: {record!r}")
    try:
        group_id = record["group_id"]
        members = record["member_ids"]
    except KeyError as exc:
        raise ManifestError(f"groups[{index}] is missing {exc.args[0]!r}") from None
    if not isinstance(group_id, int) or isinstance(group_id, bool):
        raise ManifestError(f"groups[{index}].group_id must be an integer, got {group_id!r}")
    if not isinstance(members, list) or not all(isinstance(m, str) for m in members):
        raise ManifestError(f"groups[{index}].member_ids must be a list of painting ids")
    if len(set(members)) != len(members):
        raise ManifestError(f"groups[{index}] lists a member twice")
    name = record.get("name", "")
    if not isinstance(name, str):
        raise ManifestError(f"groups[{index}].name must be a string")
    return StoryGroup(group_id=group_id, name=name, member_ids=frozenset(members))


def load_manifest(path: str) -> Collection:
    """Load and validate a collection manifest.

    Raises :class:`ManifestError` naming the offending record on parse or
    validation failure.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest {path!r} is not valid JSON: {exc}") from exc

    if not isinstance(doc, dict):
        raise ManifestError("manifest root must be a JSON object")
    unknown = set(doc) - {"paintings", "groups", "popularity", "gamma"}
    if unknown:
        raise ManifestError(f"manifest has unknown top-level keys: {sorted(unknown)}")

    raw_paintings = doc.get("paintings")
    if not isinstance(raw_paintings, list):
        raise ManifestError("manifest must contain a 'paintings' list")
    paintings = [_parse_painting(rec, i) for i, rec in enumerate(raw_paintings)]

    raw_groups = doc.get("groups", [])
    if not isinstance(raw_groups, list):
        raise ManifestError("'groups' must be a list")
    groups = [_parse_group(rec, i) for i, rec in enumerate(raw_groups)]

    raw_pop = doc.get("popularity", {})
    if not isinstance(raw_pop, dict):
        raise ManifestError("'popularity' must be an object of id -> score")
    popularity = PopularityTable({str(k): v for k, v in raw_pop.items()})

    raw_gamma = doc.get("gamma", {})
    if not isinstance(raw_gamma, dict):
        raise ManifestError("'gamma' must be an object of id -> weight")

    return _build_collection(paintings, groups, popularity, dict(raw_gamma))


def save_manifest(collection: Collection, path: str) -> None:
    """Write ``collection`` back out in the manifest format.

    ``load_manifest(save_manifest(c))`` reproduces ``c`` (gamma is written in
    full, so defaulted weights round-trip as explicit 1.0 entries).
    """
    doc = {
        "paintings": [
            {name: getattr(p, name) for name in _PAINTING_FIELDS} for p in collection.paintings
        ],
        "groups": [
            {"group_id": g.group_id, "name": g.name, "member_ids": sorted(g.member_ids)}
            for g in collection.groups
        ],
        "popularity": dict(sorted(collection.popularity.scores.items())),
        "gamma": dict(sorted(collection.gamma.items())),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, ensure_ascii=False, indent=2)
        fh.write("\n")


def group_memberships(collection: Collection, painting_id: str) -> set[int]:
    """All group ids containing ``painting_id`` (possibly empty)."""
    try:
        return set(collection._groups_of[painting_id])
    except KeyError:
        raise KeyError(f"unknown painting id: {painting_id!r}") from None
