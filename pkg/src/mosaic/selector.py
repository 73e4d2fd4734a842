"""Exact size-r selection balancing relevance against story coverage.

The objective over a candidate set R is::

    (1 - xi) * sum of scores over R  +  xi * coverage(R)

where ``coverage`` (:func:`representativeness`) rewards spreading picks
across story groups: the sum over groups of the square root of the selected
gamma mass.  Three exact solvers are provided:

* a dynamic program over (group, remaining capacity) for the common case
  where groups do not overlap and gamma is constant within each group, so
  the optimum takes a score-descending prefix of each group;
* best-first branch and bound with a concave upper bound for the general
  case (overlapping groups, mixed gamma);
* exhaustive enumeration, kept as the verification oracle.

All solvers report the objective of the returned set through one shared,
order-independent evaluation (``math.fsum``), so their objective values are
directly comparable.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from mosaic.dataset import StoryGroup
from mosaic.scoring import ScoreVector

DEFAULT_NODE_BUDGET = 1_000_000
_PRUNE_MARGIN = 1e-12
_BRUTE_MARGIN = 1e-9


class InfeasibleError(ValueError):
    """The instance admits no feasible selection (r exceeds m)."""


class EnumerationLimitError(ValueError):
    """The instance is too large for exhaustive enumeration."""


def representativeness(
    selected: Iterable[str],
    groups: Sequence[StoryGroup],
    gamma: Mapping[str, float],
) -> float:
    """Square-root story-coverage reward of a selection.

    Sum over groups of sqrt(selected gamma mass in the group).  Paintings in
    no group contribute nothing; with overlapping groups a painting counts
    in every group containing it.  Gamma defaults to 1 per painting.
    """
    chosen = set(selected)
    terms = []
    for group in groups:
        masses = []
        for pid in sorted(group.member_ids & chosen):
            g = gamma.get(pid, 1.0)
            if g < 0:
                raise ValueError(f"gamma for {pid!r} is negative")
            masses.append(g)
        terms.append(math.sqrt(math.fsum(masses)))
    return math.fsum(terms)


@dataclass(frozen=True)
class SelectionInstance:
    """One selection problem: scores, groups, gamma, tolerance, set size."""

    scores: ScoreVector
    groups: Sequence[StoryGroup]
    gamma: Mapping[str, float]
    xi: float
    r: int

    def __post_init__(self) -> None:
        m = len(self.scores.ids)
        if not (math.isfinite(self.xi) and 0.0 <= self.xi <= 1.0):
            raise ValueError(f"xi must lie in [0, 1], got {self.xi!r}")
        if self.r < 1:
            raise ValueError(f"r must be positive, got {self.r}")
        if self.r > m:
            raise InfeasibleError(f"r={self.r} exceeds the {m} available paintings")
        known = set(self.scores.ids)
        for group in self.groups:
            stray = group.member_ids - known
            if stray:
                raise ValueError(
                    f"group {group.group_id} members missing from scores: {sorted(stray)[:5]}"
                )
        for pid, g in self.gamma.items():
            if not (math.isfinite(g) and g >= 0.0):
                raise ValueError(f"gamma for {pid!r} must be finite and >= 0, got {g!r}")


@dataclass
class RecommendationSet:
    """A solved selection: items ranked by score, with audit fields."""

    items: list[str]
    item_scores: list[float]
    objective_value: float
    solver: str
    optimal: bool = True

    def __post_init__(self) -> None:
        if len(self.items) != len(set(self.items)):
            raise ValueError("recommendation items must be distinct")
        if len(self.item_scores) != len(self.items):
            raise ValueError("item_scores must parallel items")


def _relevance(selected: Iterable[str], score_of: Mapping[str, float]) -> float:
    # fixed ascending-id order + fsum: the value is independent of how the
    # caller discovered the set, which keeps solver objectives comparable
    return math.fsum(score_of[pid] for pid in sorted(selected))


def selection_objective(
    selected: Iterable[str],
    instance: SelectionInstance,
    *,
    coverage_sign: float = 1.0,
) -> float:
    """Canonical objective of a set under an instance (shared by all solvers)."""
    score_of = instance.scores.as_dict()
    rel = _relevance(selected, score_of)
    psi = representativeness(selected, instance.groups, instance.gamma)
    return (1.0 - instance.xi) * rel + instance.xi * coverage_sign * psi


def _ranked(ids: Iterable[str], score_of: Mapping[str, float]) -> list[str]:
    return sorted(ids, key=lambda pid: (-score_of[pid], pid))


def _make_set(selected: Iterable[str], score_of: Mapping[str, float], objective: float,
              solver: str, optimal: bool = True) -> RecommendationSet:
    items = _ranked(selected, score_of)
    return RecommendationSet(
        items=items,
        item_scores=[score_of[pid] for pid in items],
        objective_value=objective,
        solver=solver,
        optimal=optimal,
    )


def select_top_r(scores: ScoreVector, r: int) -> RecommendationSet:
    """The r highest-scoring paintings (score desc, then id asc on ties)."""
    if r < 1:
        raise ValueError(f"r must be positive, got {r}")
    if r > len(scores.ids):
        raise InfeasibleError(f"r={r} exceeds the {len(scores.ids)} available paintings")
    score_of = scores.as_dict()
    items = _ranked(scores.ids, score_of)[:r]
    return RecommendationSet(
        items=items,
        item_scores=[score_of[pid] for pid in items],
        objective_value=_relevance(items, score_of),
        solver="topr",
    )


def _partition_units(instance: SelectionInstance):
    """Per-group member lists for the DP, or None when the DP does not apply.

    The DP requires non-overlapping groups and a constant gamma within each
    group (otherwise the score-prefix exchange argument can fail).
    """
    membership_count: dict[str, int] = {}
    for group in instance.groups:
        for pid in group.member_ids:
            membership_count[pid] = membership_count.get(pid, 0) + 1
            if membership_count[pid] > 1:
                return None

    units = []
    for group in instance.groups:
        members = sorted(group.member_ids)
        if not members:
            units.append(([], 0.0, True))
            continue
        gammas = {instance.gamma.get(pid, 1.0) for pid in members}
        if len(gammas) > 1:
            return None
        units.append((members, gammas.pop(), True))
    ungrouped = [pid for pid in instance.scores.ids if pid not in membership_count]
    units.append((ungrouped, 0.0, False))
    return units


def _solve_dp(instance: SelectionInstance, sign: float) -> RecommendationSet:
    units = _partition_units(instance)
    assert units is not None
    xi, r = instance.xi, instance.r
    score_of = instance.scores.as_dict()

    tables = []
    for members, gamma_const, is_group in units:
        order = _ranked(members, score_of)
        prefix = [0.0]
        for pid in order:
            prefix.append(prefix[-1] + score_of[pid])
        gains = []
        for k in range(len(order) + 1):
            cover = math.sqrt(k * gamma_const) if is_group else 0.0
            gains.append((1.0 - xi) * prefix[k] + xi * sign * cover)
        tables.append((order, prefix, gains))

    NEG = (-math.inf, -math.inf)
    # state value = (objective so far, relevance so far); the relevance
    # component breaks exact objective ties toward the more relevant set
    best = [NEG] * (r + 1)
    best[0] = (0.0, 0.0)
    choices: list[list[tuple[int, int] | None]] = []
    for order, prefix, gains in tables:
        nxt = [NEG] * (r + 1)
        pick: list[tuple[int, int] | None] = [None] * (r + 1)
        max_k = min(len(order), r)
        for used in range(r + 1):
            if best[used] == NEG:
                continue
            obj0, rel0 = best[used]
            for k in range(0, min(max_k, r - used) + 1):
                cand = (obj0 + gains[k], rel0 + prefix[k])
                slot = used + k
                if cand > nxt[slot]:
                    nxt[slot] = cand
                    pick[slot] = (used, k)
        best = nxt
        choices.append(pick)

    if best[r] == NEG:
        raise InfeasibleError(f"cannot select {r} paintings")

    selected: list[str] = []
    slot = r
    for unit_index in range(len(units) - 1, -1, -1):
        prev, k = choices[unit_index][slot]  # type: ignore[misc]
        order = tables[unit_index][0]
        selected.extend(order[:k])
        slot = prev
    objective = selection_objective(selected, instance, coverage_sign=sign)
    return _make_set(selected, score_of, objective, "dp")


def _solve_bnb(
    instance: SelectionInstance,
    sign: float,
    node_budget: int,
) -> RecommendationSet:
    """Best-first branch and bound on include/exclude decisions.

    The coverage reward is monotone submodular (a concave function of
    additive group masses), so the sum of the top `need` first-marginal
    gains among remaining items upper-bounds any completion's coverage
    increase; adding the top `need` remaining scores bounds the linear
    term.  When the coverage term is minimised it can only grow, so the
    current coverage itself is the bound.
    """
    xi, r = instance.xi, instance.r
    score_of = instance.scores.as_dict()
    k = len(instance.groups)

    # static order: strongest root contribution first, so early dives find
    # good incumbents; ties break by id for determinism
    root_gain = {
        pid: (1.0 - xi) * score_of[pid]
        + (xi * math.sqrt(instance.gamma.get(pid, 1.0)) * sum(
            1 for g in instance.groups if pid in g.member_ids
        ) if sign > 0 else 0.0)
        for pid in instance.scores.ids
    }
    items = sorted(instance.scores.ids, key=lambda pid: (-root_gain[pid], pid))
    n = len(items)
    s = np.array([score_of[pid] for pid in items])
    gam = np.array([instance.gamma.get(pid, 1.0) for pid in items])
    index_of = {pid: i for i, pid in enumerate(items)}
    group_members = [
        np.array(sorted(index_of[pid] for pid in g.member_ids), dtype=np.intp)
        for g in instance.groups
    ]
    group_gammas = [gam[members] for members in group_members]
    groups_of_item: list[list[int]] = [[] for _ in range(n)]
    for a, members in enumerate(group_members):
        for i in members:
            groups_of_item[int(i)].append(a)

    def evaluate(chosen) -> tuple[float, float, tuple[str, ...]]:
        ids = tuple(items[i] for i in chosen)
        obj = selection_objective(ids, instance, coverage_sign=sign)
        rel = _relevance(ids, score_of)
        return obj, rel, tuple(sorted(ids))

    def psi_of(masses: tuple[float, ...]) -> float:
        return sum(math.sqrt(m) for m in masses)

    def _top_sum(values: np.ndarray, count: int) -> float:
        if count >= values.size:
            return float(values.sum())
        top = np.partition(values, values.size - count)[values.size - count:]
        return float(top.sum())

    def bound(idx: int, taken: int, rel: float, masses: tuple[float, ...]) -> float:
        need = r - taken
        base = (1.0 - xi) * rel + xi * sign * psi_of(masses)
        if need == 0:
            return base
        if n - idx < need:
            return -math.inf
        if sign < 0 or not k:
            # coverage can only grow, so it contributes nothing beyond base
            return base + _top_sum((1.0 - xi) * s[idx:], need)
        # bound A: itemwise, each pick credited score plus first-marginal gain
        marg = np.zeros(n - idx)
        # bound B: decomposed, per-group coverage capped by its own top-need mass
        group_cap = 0.0
        for a in range(k):
            members = group_members[a]
            keep = members >= idx
            if not keep.any():
                continue
            mm = members[keep]
            gv = group_gammas[a][keep]
            root = math.sqrt(masses[a])
            marg[mm - idx] += np.sqrt(masses[a] + gv) - root
            top_mass = _top_sum(gv, need)
            group_cap += math.sqrt(masses[a] + top_mass) - root
        bound_a = base + _top_sum((1.0 - xi) * s[idx:] + xi * marg, need)
        bound_b = base + _top_sum((1.0 - xi) * s[idx:], need) + xi * group_cap
        return min(bound_a, bound_b)

    def add_masses(masses: tuple[float, ...], idx: int) -> tuple[float, ...]:
        if not groups_of_item[idx]:
            return masses
        lst = list(masses)
        for a in groups_of_item[idx]:
            lst[a] += gam[idx]
        return tuple(lst)

    zero_masses = tuple(0.0 for _ in range(k))

    def greedy_incumbent() -> tuple[int, ...]:
        chosen: list[int] = []
        masses = zero_masses
        available = np.ones(n, dtype=bool)
        for _ in range(r):
            values = (1.0 - xi) * s.copy()
            if k:
                for a in range(k):
                    members = group_members[a]
                    gv = group_gammas[a]
                    root = math.sqrt(masses[a])
                    values[members] += xi * sign * (np.sqrt(masses[a] + gv) - root)
            values[~available] = -math.inf
            ties = np.nonzero(values == values.max())[0]
            pick = int(min(ties, key=lambda i: (-s[i], i)))  # prefer score on exact ties
            chosen.append(pick)
            available[pick] = False
            masses = add_masses(masses, pick)
        return tuple(chosen)

    def better(obj, rel, key) -> bool:
        if obj > best_obj:
            return True
        return obj == best_obj and (rel > best_rel or (rel == best_rel and key < best_key))

    best_set = tuple(range(r))  # top root-gain items
    best_obj, best_rel, best_key = evaluate(best_set)
    greedy_set = greedy_incumbent()
    g_obj, g_rel, g_key = evaluate(greedy_set)
    if better(g_obj, g_rel, g_key):
        best_obj, best_rel, best_key, best_set = g_obj, g_rel, g_key, greedy_set

    counter = itertools.count()
    heap = [(-bound(0, 0, 0.0, zero_masses), next(counter), 0, (), 0.0, zero_masses)]
    expanded = 0
    exhausted = False
    while heap:
        neg_ub, _, idx, chosen, rel, masses = heapq.heappop(heap)
        if -neg_ub <= best_obj + _PRUNE_MARGIN:
            continue
        if expanded >= node_budget:
            exhausted = True
            break
        expanded += 1
        taken = len(chosen)
        need = r - taken
        remaining = n - idx
        if remaining < need:
            continue
        if need == 0 or remaining == need:
            # complete (or forced-complete) selection
            full = chosen if need == 0 else chosen + tuple(range(idx, n))
            obj, crel, ckey = evaluate(full)
            if better(obj, crel, ckey):
                best_obj, best_rel, best_key, best_set = obj, crel, ckey, full
            continue
        # include items[idx]
        inc_masses = add_masses(masses, idx)
        inc_rel = rel + float(s[idx])
        inc_chosen = chosen + (idx,)
        if need == 1:
            obj, crel, ckey = evaluate(inc_chosen)
            if better(obj, crel, ckey):
                best_obj, best_rel, best_key, best_set = obj, crel, ckey, inc_chosen
        else:
            ub = bound(idx + 1, taken + 1, inc_rel, inc_masses)
            if ub > best_obj + _PRUNE_MARGIN:
                heapq.heappush(heap, (-ub, next(counter), idx + 1, inc_chosen, inc_rel, inc_masses))
        # exclude items[idx]
        ub = bound(idx + 1, taken, rel, masses)
        if ub > best_obj + _PRUNE_MARGIN:
            heapq.heappush(heap, (-ub, next(counter), idx + 1, chosen, rel, masses))

    selected = [items[i] for i in best_set]
    return _make_set(selected, score_of, best_obj, "bnb", optimal=not exhausted)


def solve_selection(
    instance: SelectionInstance,
    *,
    method: str = "auto",
    node_budget: int = DEFAULT_NODE_BUDGET,
    minimize_representativeness: bool = False,
) -> RecommendationSet:
    """Exact maximiser of the scalarised relevance/coverage objective.

    ``method`` is ``auto`` (pick the fast path when valid), ``dp``, or
    ``bnb``.  With ``minimize_representativeness`` the coverage term is
    subtracted instead of added (a consistency rather than diversity
    objective); no engine uses it, it is exposed for experimentation.

    The returned set is ranked by item score.  If branch and bound runs out
    of its node budget the best incumbent is returned with ``optimal=False``.
    """
    sign = -1.0 if minimize_representativeness else 1.0
    if instance.xi == 0.0:
        # coverage term vanishes: plain top-r selection
        return select_top_r(instance.scores, instance.r)
    if method not in ("auto", "dp", "bnb"):
        raise ValueError(f"unknown method {method!r}")
    if method == "dp" or (method == "auto" and _partition_units(instance) is not None):
        if _partition_units(instance) is None:
            raise ValueError("dp requires non-overlapping groups with constant gamma per group")
        return _solve_dp(instance, sign)
    return _solve_bnb(instance, sign, node_budget)


def brute_force_select(
    instance: SelectionInstance,
    *,
    minimize_representativeness: bool = False,
    max_subsets: int = 10_000_000,
    chunk: int = 200_000,
) -> RecommendationSet:
    """Exhaustive-enumeration oracle (lexicographically smallest optimum).

    Guarded: refuses instances with more than ``max_subsets`` candidate
    subsets.  Enumeration is vectorised in chunks; near-ties are re-checked
    with the canonical objective so the reported optimum is exact.
    """
    sign = -1.0 if minimize_representativeness else 1.0
    ids = sorted(instance.scores.ids)
    m, r = len(ids), instance.r
    total = math.comb(m, r)
    if total > max_subsets:
        raise EnumerationLimitError(f"C({m},{r}) = {total} exceeds the {max_subsets} subset guard")

    score_of = instance.scores.as_dict()
    s = np.array([score_of[pid] for pid in ids])
    K = len(instance.groups)
    weighted_membership = np.zeros((m, K))
    for a, group in enumerate(instance.groups):
        for i, pid in enumerate(ids):
            if pid in group.member_ids:
                weighted_membership[i, a] = instance.gamma.get(pid, 1.0)

    best_val = -math.inf
    candidates: list[tuple[tuple[int, ...], float]] = []
    combo_iter = itertools.combinations(range(m), r)
    while True:
        block = list(itertools.islice(combo_iter, chunk))
        if not block:
            break
        arr = np.array(block, dtype=np.intp)
        rel = s[arr].sum(axis=1)
        if K:
            masses = weighted_membership[arr].sum(axis=1)
            psi = np.sqrt(masses).sum(axis=1)
        else:
            psi = np.zeros(len(block))
        obj = (1.0 - instance.xi) * rel + instance.xi * sign * psi
        block_best = float(obj.max())
        if block_best > best_val:
            best_val = block_best
            candidates = [(c, v) for c, v in candidates if v >= best_val - _BRUTE_MARGIN]
        keep = np.nonzero(obj >= best_val - _BRUTE_MARGIN)[0]
        candidates.extend((block[i], float(obj[i])) for i in keep)

    best_ids: tuple[str, ...] | None = None
    best_obj = -math.inf
    for combo, _ in candidates:  # generation order is lexicographic
        selected = tuple(ids[i] for i in combo)
        obj = selection_objective(selected, instance, coverage_sign=sign)
        if obj > best_obj:
            best_obj, best_ids = obj, selected
    assert best_ids is not None
    return _make_set(best_ids, score_of, best_obj, "brute")
