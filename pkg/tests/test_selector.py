import math
from dataclasses import replace
from itertools import combinations

import numpy as np
import pytest

from mosaic.dataset import StoryGroup
from mosaic.scoring import ScoreVector
from mosaic.selector import (
    EnumerationLimitError,
    InfeasibleError,
    RecommendationSet,
    SelectionInstance,
    brute_force_select,
    representativeness,
    select_top_r,
    selection_objective,
    solve_selection,
)

from helpers import random_selection_instance


def groups_of(counts_members):
    return [
        StoryGroup(a + 1, f"g{a + 1}", frozenset(members))
        for a, members in enumerate(counts_members)
    ]


def vector(scores):
    ids = tuple(scores)
    return ScoreVector(ids=ids, values=np.array([scores[i] for i in ids], float), kind="personal")


# --- coverage reward ------------------------------------------------------


def test_worked_example_spreading_beats_piling():
    spread = groups_of([{"p1", "p2"}, {"p3"}, {"p4"}])
    piled = groups_of([{"p1", "p2", "p3", "p4"}, set(), set()])
    selection = ["p1", "p2", "p3", "p4"]
    psi_spread = representativeness(selection, spread, {})
    psi_piled = representativeness(selection, piled, {})
    assert psi_spread == pytest.approx(math.sqrt(2) + 1 + 1, abs=1e-9)
    assert psi_piled == pytest.approx(2.0, abs=1e-9)
    assert psi_spread > psi_piled


def test_empty_selection_scores_zero():
    assert representativeness([], groups_of([{"a"}]), {}) == 0.0


def test_single_weighted_painting():
    assert representativeness(["a"], groups_of([{"a"}]), {"a": 4.0}) == 2.0


def test_overlapping_groups_count_twice():
    groups = groups_of([{"a", "b"}, {"a"}])
    assert representativeness(["a"], groups, {}) == pytest.approx(2.0)


def test_negative_gamma_rejected():
    with pytest.raises(ValueError, match="negative"):
        representativeness(["a"], groups_of([{"a"}]), {"a": -1.0})


# --- top-r ----------------------------------------------------------------


def test_top_r_basic():
    result = select_top_r(vector({"a": 0.9, "b": 0.5, "c": 0.1}), 2)
    assert result.items == ["a", "b"]
    assert result.solver == "topr"
    assert result.objective_value == pytest.approx(1.4)


def test_top_r_ties_break_by_id():
    result = select_top_r(vector({"d": 0.5, "b": 0.5, "c": 0.5, "a": 0.5}), 2)
    assert result.items == ["a", "b"]


def test_top_r_matches_independent_sort():
    rng = np.random.default_rng(123)
    ids = tuple(f"p{i:02d}" for i in range(50))
    values = rng.random(50)
    sv = ScoreVector(ids=ids, values=values, kind="personal")
    expected = [pid for _, pid in sorted(zip(-values, ids))][:9]
    assert select_top_r(sv, 9).items == expected


def test_top_r_infeasible():
    with pytest.raises(InfeasibleError):
        select_top_r(vector({"a": 1.0}), 2)


# --- brute force oracle ---------------------------------------------------


def test_brute_whole_set():
    sv = vector({"a": 0.1, "b": 0.2, "c": 0.3})
    inst = SelectionInstance(scores=sv, groups=[], gamma={}, xi=0.5, r=3)
    assert sorted(brute_force_select(inst).items) == ["a", "b", "c"]


def test_brute_xi_zero_is_top_r():
    sv = vector({"a": 0.4, "b": 0.9, "c": 0.1, "d": 0.6})
    inst = SelectionInstance(scores=sv, groups=[], gamma={}, xi=0.0, r=2)
    assert set(brute_force_select(inst).items) == {"b", "d"}


def test_brute_beats_random_subsets():
    rng = np.random.default_rng(7)
    inst = random_selection_instance(rng, xi=0.5)
    best = brute_force_select(inst)
    m, r = len(inst.scores.ids), inst.r
    for _ in range(50):
        subset = [inst.scores.ids[i] for i in rng.choice(m, size=r, replace=False)]
        assert selection_objective(subset, inst) <= best.objective_value + 1e-12


def test_brute_guard():
    ids = tuple(f"p{i:03d}" for i in range(40))
    sv = ScoreVector(ids=ids, values=np.zeros(40), kind="personal")
    inst = SelectionInstance(scores=sv, groups=[], gamma={}, xi=0.5, r=15)
    with pytest.raises(EnumerationLimitError):
        brute_force_select(inst)


def test_brute_lexicographically_smallest_on_ties():
    # all scores equal, no groups: every pair ties, lex-smallest must win
    sv = vector({"c": 0.5, "a": 0.5, "d": 0.5, "b": 0.5})
    inst = SelectionInstance(scores=sv, groups=[], gamma={}, xi=1.0, r=2)
    assert sorted(brute_force_select(inst).items) == ["a", "b"]


# --- exact solver ---------------------------------------------------------


def test_solve_xi_zero_degenerates_to_top_r():
    rng = np.random.default_rng(17)
    for _ in range(10):
        inst = random_selection_instance(rng, xi=0.0)
        top = select_top_r(inst.scores, inst.r)
        solved = solve_selection(inst)
        assert solved.items == top.items
        assert solved.solver == "topr"


def test_solve_xi_one_partition_takes_group_champions():
    # 12 paintings, 3 disjoint groups of 4, r=3, gamma 1: sqrt(1)*3
    # dominates any repeated-group profile, so one per group, and the
    # relevance tie-break picks each group's best-scoring painting
    rng = np.random.default_rng(23)
    ids = tuple(f"p{i:02d}" for i in range(12))
    values = rng.random(12)
    sv = ScoreVector(ids=ids, values=values, kind="personal")
    groups = groups_of([set(ids[0:4]), set(ids[4:8]), set(ids[8:12])])
    inst = SelectionInstance(scores=sv, groups=groups, gamma={}, xi=1.0, r=3)
    solved = solve_selection(inst)
    brute = brute_force_select(inst)
    assert solved.objective_value == brute.objective_value
    champions = {max(g.member_ids, key=lambda pid: (sv[pid], pid)) for g in groups}
    assert set(solved.items) == champions


def test_oracle_equivalence_random_instances():
    rng = np.random.default_rng(99)
    for _ in range(60):
        inst = random_selection_instance(rng)
        solved = solve_selection(inst)
        brute = brute_force_select(inst)
        assert solved.optimal
        assert solved.objective_value == brute.objective_value, (
            f"solver {solved.solver} disagrees with enumeration on {inst}"
        )
        recomputed = selection_objective(solved.items, inst)
        assert abs(recomputed - solved.objective_value) <= 1e-9


def test_dp_and_bnb_agree_on_partition_instances():
    rng = np.random.default_rng(41)
    for _ in range(25):
        inst = random_selection_instance(rng, partition=True, gamma_mode="per_group")
        if inst.xi == 0.0:
            inst = replace(inst, xi=0.5)
        dp = solve_selection(inst, method="dp")
        bnb = solve_selection(inst, method="bnb")
        assert dp.solver == "dp" and bnb.solver == "bnb"
        assert dp.objective_value == bnb.objective_value


def test_dp_solutions_take_score_prefixes_within_groups():
    rng = np.random.default_rng(53)
    for _ in range(20):
        inst = random_selection_instance(rng, partition=True, gamma_mode="per_group")
        if inst.xi == 0.0:
            inst = replace(inst, xi=0.25)
        solved = solve_selection(inst)
        if solved.solver != "dp":
            continue
        chosen = set(solved.items)
        score_of = inst.scores.as_dict()
        for group in inst.groups:
            members = sorted(group.member_ids, key=lambda pid: (-score_of[pid], pid))
            taken = [pid in chosen for pid in members]
            assert taken == sorted(taken, reverse=True), "non-prefix selection inside a group"


def test_varied_gamma_within_group_falls_back_to_bnb():
    rng = np.random.default_rng(61)
    inst = random_selection_instance(rng, partition=True, gamma_mode="per_painting")
    if inst.xi == 0.0:
        inst = replace(inst, xi=0.75)
    solved = solve_selection(inst)
    assert solved.solver == "bnb"
    assert solved.objective_value == brute_force_select(inst).objective_value


def test_coverage_monotone_in_xi():
    rng = np.random.default_rng(71)
    for _ in range(12):
        inst = random_selection_instance(rng, xi=0.0)
        prev_cover = -math.inf
        prev_rel = math.inf
        for xi in np.linspace(0.0, 1.0, 11):
            solved = solve_selection(replace(inst, xi=float(xi)))
            cover = representativeness(solved.items, inst.groups, inst.gamma)
            rel = sum(inst.scores[pid] for pid in solved.items)
            assert cover >= prev_cover - 1e-9
            assert rel <= prev_rel + 1e-9
            prev_cover, prev_rel = cover, rel


def test_minimize_coverage_flag():
    rng = np.random.default_rng(83)
    for _ in range(8):
        inst = random_selection_instance(rng)
        if inst.xi == 0.0:
            inst = replace(inst, xi=0.5)
        solved = solve_selection(inst, minimize_representativeness=True)
        brute = brute_force_select(inst, minimize_representativeness=True)
        assert solved.objective_value == brute.objective_value


def test_node_budget_returns_flagged_incumbent():
    rng = np.random.default_rng(91)
    inst = random_selection_instance(rng, partition=False, gamma_mode="per_painting")
    if inst.xi == 0.0:
        inst = replace(inst, xi=0.5)
    solved = solve_selection(inst, node_budget=1)
    assert not solved.optimal
    assert len(solved.items) == inst.r
    assert solved.objective_value <= brute_force_select(inst).objective_value + 1e-12


def test_infeasible_r():
    sv = vector({"a": 1.0, "b": 0.5})
    with pytest.raises(InfeasibleError):
        SelectionInstance(scores=sv, groups=[], gamma={}, xi=0.5, r=3)


def test_recommendation_set_invariants():
    with pytest.raises(ValueError, match="distinct"):
        RecommendationSet(items=["a", "a"], item_scores=[1.0, 1.0], objective_value=0.0, solver="topr")


def test_items_ranked_by_score_then_id():
    rng = np.random.default_rng(101)
    for _ in range(10):
        inst = random_selection_instance(rng)
        solved = solve_selection(inst)
        score_of = inst.scores.as_dict()
        expected = sorted(solved.items, key=lambda pid: (-score_of[pid], pid))
        assert solved.items == expected


def test_greedy_baseline_never_beats_exact():
    # greedy marginal-gain comparator, kept here as an independent check
    rng = np.random.default_rng(111)
    for _ in range(10):
        inst = random_selection_instance(rng)
        chosen: list[str] = []
        remaining = set(inst.scores.ids)
        while len(chosen) < inst.r:
            best_pid = max(
                sorted(remaining),
                key=lambda pid: selection_objective([*chosen, pid], inst),
            )
            chosen.append(best_pid)
            remaining.discard(best_pid)
        greedy_obj = selection_objective(chosen, inst)
        exact = solve_selection(inst)
        assert greedy_obj <= exact.objective_value + 1e-12
