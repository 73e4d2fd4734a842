"""Offline evaluation: simulated tolerances and pairwise engine tables.

Profiles that do not state their tolerances get them simulated: a draw from
a Poisson distribution at a configured mean rate, clamped into [0, 1] (0
stays 0, any positive count saturates to 1; ``scaled_poisson`` instead maps
a count k to min(k/2, 1) for sensitivity runs).

A run evaluates a grid of engine cells, each an engine variant with its
popularity/diversity knobs either fixed (``beta=1``) or simulated at a rate
(``beta_rate=0.5``).  Simulated draws are made once per profile and rate,
then shared by every cell using that rate, so cells stay comparable.  For
every cell pair the harness reports mean and SD of set overlap (IoU) and
rank-biased overlap across profiles, as CSV (the contract) and as an
aligned text table with an empty diagonal.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from mosaic.dataset import Collection
from mosaic.engines import DEFAULT_R, parse_engine_id, recommend
from mosaic.metrics import DEFAULT_RBO_P, jaccard, rbo
from mosaic.scoring import UserProfile
from mosaic.similarity import SimilarityMatrix


def sample_tolerance(rate: float, rng: np.random.Generator, *, scaled: bool = False) -> float:
    """One simulated tolerance in [0, 1] from a Poisson draw at ``rate``."""
    if rate < 0:
        raise ValueError(f"rate must be >= 0, got {rate!r}")
    k = int(rng.poisson(rate))
    if scaled:
        return min(k / 2, 1.0)
    return float(min(k, 1))


def _fmt(x: float) -> str:
    return f"{x:g}"


@dataclass(frozen=True)
class GridCell:
    """One engine column of the evaluation table.

    For each knob the cell either fixes a value, names a simulation rate, or
    (both None) defers to the profile's own value.
    """

    engine: str
    beta: float | None = None
    xi: float | None = None
    beta_rate: float | None = None
    xi_rate: float | None = None

    def __post_init__(self) -> None:
        parse_engine_id(self.engine)
        if self.beta is not None and self.beta_rate is not None:
            raise ValueError("cell fixes beta and names a beta_rate at the same time")
        if self.xi is not None and self.xi_rate is not None:
            raise ValueError("cell fixes xi and names an xi_rate at the same time")

    @property
    def label(self) -> str:
        knobs = []
        if self.beta is not None:
            knobs.append(f"beta={_fmt(self.beta)}")
        elif self.beta_rate is not None:
            knobs.append(f"beta~{_fmt(self.beta_rate)}")
        if self.xi is not None:
            knobs.append(f"xi={_fmt(self.xi)}")
        elif self.xi_rate is not None:
            knobs.append(f"xi~{_fmt(self.xi_rate)}")
        return f"{self.engine}({' '.join(knobs)})" if knobs else self.engine


def default_grid(backbones: Sequence[str] = ("a",), rates: Sequence[float] = (0.0, 0.5, 1.0)) -> tuple[GridCell, ...]:
    """The canonical table layout per backbone.

    One baseline column, popularity and coverage columns at each simulated
    rate, and the combined engine at the rate pairs (0,0), (0.5,0.5), (1,1),
    (0,1), (1,0).
    """
    cells: list[GridCell] = []
    for bb in backbones:
        cells.append(GridCell(engine=f"base-{bb}"))
        for rate in rates:
            cells.append(GridCell(engine=f"pop-{bb}", beta_rate=rate))
        for rate in rates:
            cells.append(GridCell(engine=f"fair-{bb}", xi_rate=rate))
        lo, hi = min(rates), max(rates)
        mid = sorted(rates)[len(rates) // 2]
        for br, xr in ((lo, lo), (mid, mid), (hi, hi), (lo, hi), (hi, lo)):
            cells.append(GridCell(engine=f"mosaic-{bb}", beta_rate=br, xi_rate=xr))
    unique: dict[str, GridCell] = {}
    for cell in cells:
        unique.setdefault(cell.label, cell)
    return tuple(unique.values())


@dataclass(frozen=True)
class EvalConfig:
    """Everything a run needs to be reproducible from its seed."""

    grid: tuple[GridCell, ...]
    tolerance_rates: tuple[float, ...] = (0.0, 0.5, 1.0)
    rbo_p: float = DEFAULT_RBO_P
    r: int = DEFAULT_R
    seed: int = 0
    raw_aggregation: bool = False
    scaled_poisson: bool = False
    node_budget: int = 1_000_000

    def __post_init__(self) -> None:
        if not self.grid:
            raise ValueError("evaluation grid must contain at least one cell")
        if any(rate < 0 for rate in self.tolerance_rates):
            raise ValueError("tolerance rates must be >= 0")


@dataclass
class PairwiseTable:
    """Mean +/- SD of IoU and RBO for every cell pair.

    The matrices are symmetric; diagonal entries hold the (trivial) self
    comparison and are left blank when rendered.
    """

    labels: list[str]
    iou_mean: np.ndarray
    iou_sd: np.ndarray
    rbo_mean: np.ndarray
    rbo_sd: np.ndarray
    n_profiles: int
    notes: dict[str, int] = field(default_factory=dict)

    def csv_text(self) -> str:
        """Distinct pairs only, one row per (pair, measure)."""
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["engine_a", "engine_b", "measure", "mean", "sd", "n_profiles"])
        n = len(self.labels)
        for i in range(n):
            for j in range(i + 1, n):
                for measure, mean, sd in (
                    ("iou", self.iou_mean[i, j], self.iou_sd[i, j]),
                    ("rbo", self.rbo_mean[i, j], self.rbo_sd[i, j]),
                ):
                    writer.writerow(
                        [self.labels[i], self.labels[j], measure,
                         f"{mean:.17g}", f"{sd:.17g}", self.n_profiles]
                    )
        return out.getvalue()

    def to_csv(self, path: str) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.csv_text())

    def render_text(self) -> str:
        def block(title: str, mean: np.ndarray, sd: np.ndarray) -> list[str]:
            width = max(len(lbl) for lbl in self.labels)
            cell_w = max(11, width)
            lines = [title]
            header = " " * (width + 2) + " ".join(lbl.rjust(cell_w) for lbl in self.labels)
            lines.append(header)
            for i, lbl in enumerate(self.labels):
                cells = []
                for j in range(len(self.labels)):
                    if i == j:
                        cells.append("".rjust(cell_w))
                    else:
                        cells.append(f"{mean[i, j]:.2f}±{sd[i, j]:.2f}".rjust(cell_w))
                lines.append(lbl.ljust(width + 2) + " ".join(cells))
            return lines

        lines = block("IoU (mean±sd)", self.iou_mean, self.iou_sd)
        lines.append("")
        lines.extend(block("RBO (mean±sd)", self.rbo_mean, self.rbo_sd))
        if self.notes:
            lines.append("")
            for label, count in sorted(self.notes.items()):
                lines.append(f"note: {label}: {count}/{self.n_profiles} solutions hit the node budget")
        lines.append("")
        lines.append(f"n_profiles = {self.n_profiles}")
        return "\n".join(lines)


def load_profiles(path: str) -> list[UserProfile]:
    """Read a JSON list of {ratings, beta?, xi?} records."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, list):
        raise ValueError("profile file must contain a JSON list")
    profiles = []
    for i, rec in enumerate(doc):
        if not isinstance(rec, dict) or "ratings" not in rec:
            raise ValueError(f"profile[{i}] must be an object with a 'ratings' map")
        beta = rec.get("beta")
        xi = rec.get("xi")
        profiles.append(UserProfile(ratings=dict(rec["ratings"]), beta=beta, xi=xi))
    return profiles


_POLICY_KNOBS = {"base": (), "pop": ("beta",), "fair": ("xi",), "mosaic": ("beta", "xi")}


def _resolve_knob(
    cell: GridCell,
    knob: str,
    profile: UserProfile,
    draws: Mapping[tuple[int, float], float],
    profile_index: int,
) -> float:
    fixed = getattr(cell, knob)
    if fixed is not None:
        return fixed
    rate = getattr(cell, f"{knob}_rate")
    if rate is not None:
        return draws[(profile_index, rate)]
    value = getattr(profile, knob)
    if value is None:
        raise ValueError(
            f"cell {cell.label} needs {knob}: fix it, give it a rate, or set it on every profile"
        )
    return value


def run_offline_eval(
    collection: Collection,
    matrices: Mapping[str, SimilarityMatrix],
    profiles: Sequence[UserProfile],
    config: EvalConfig,
) -> PairwiseTable:
    """Evaluate every grid cell over every profile and compare cell pairs.

    Fully deterministic for a fixed (seed, config, inputs).  A solver that
    exhausts its node budget is recorded in the table notes rather than
    failing the run.
    """
    if not profiles:
        raise ValueError("at least one profile is required")
    for cell in config.grid:
        backbone = cell.engine.rsplit("-", 1)[1]
        if backbone not in matrices:
            raise ValueError(f"grid cell {cell.label} needs backbone {backbone!r}, not registered")

    rng = np.random.default_rng(config.seed)
    rates = set(config.tolerance_rates)
    for cell in config.grid:
        if cell.beta_rate is not None:
            rates.add(cell.beta_rate)
        if cell.xi_rate is not None:
            rates.add(cell.xi_rate)
    beta_draws: dict[tuple[int, float], float] = {}
    xi_draws: dict[tuple[int, float], float] = {}
    for pi in range(len(profiles)):
        for rate in sorted(rates):
            beta_draws[(pi, rate)] = sample_tolerance(rate, rng, scaled=config.scaled_poisson)
            xi_draws[(pi, rate)] = sample_tolerance(rate, rng, scaled=config.scaled_poisson)

    notes: dict[str, int] = {}
    rankings: list[list[list[str]]] = []
    for cell in config.grid:
        spec = parse_engine_id(cell.engine, r=config.r)
        knobs = _POLICY_KNOBS[spec.policy]
        cell_rankings = []
        for pi, profile in enumerate(profiles):
            resolved = profile
            if "beta" in knobs:
                resolved = replace(resolved, beta=_resolve_knob(cell, "beta", profile, beta_draws, pi))
            if "xi" in knobs:
                resolved = replace(resolved, xi=_resolve_knob(cell, "xi", profile, xi_draws, pi))
            rec = recommend(
                spec,
                collection,
                matrices,
                resolved,
                raw_aggregation=config.raw_aggregation,
                node_budget=config.node_budget,
            )
            if not rec.optimal:
                notes[cell.label] = notes.get(cell.label, 0) + 1
            cell_rankings.append(list(rec.items))
        rankings.append(cell_rankings)

    n = len(config.grid)
    iou_mean = np.zeros((n, n))
    iou_sd = np.zeros((n, n))
    rbo_mean = np.zeros((n, n))
    rbo_sd = np.zeros((n, n))
    for i in range(n):
        for j in range(i, n):
            ious = np.array([jaccard(a, b) for a, b in zip(rankings[i], rankings[j])])
            rbos = np.array([rbo(a, b, config.rbo_p) for a, b in zip(rankings[i], rankings[j])])
            iou_mean[i, j] = iou_mean[j, i] = ious.mean()
            iou_sd[i, j] = iou_sd[j, i] = ious.std()
            rbo_mean[i, j] = rbo_mean[j, i] = rbos.mean()
            rbo_sd[i, j] = rbo_sd[j, i] = rbos.std()

    return PairwiseTable(
        labels=[cell.label for cell in config.grid],
        iou_mean=iou_mean,
        iou_sd=iou_sd,
        rbo_mean=rbo_mean,
        rbo_sd=rbo_sd,
        n_profiles=len(profiles),
        notes=notes,
    )
