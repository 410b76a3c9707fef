"""Closed-form capacity layer: largest feasible update spacing per source,
necessary feasibility conditions, pick probabilities, and AAoI bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .core import SourceParams

__all__ = [
    "FeasibilityReport",
    "InfeasibleTarget",
    "LOAD_TOLERANCE",
    "aaoi_lower_bound",
    "aaoi_upper_bound_randomized",
    "check_feasibility",
    "max_feasible_spacing",
    "pick_probabilities",
]

# Floating-point slack on the load sum so boundary configs do not flip verdicts.
LOAD_TOLERANCE = 1e-12


class InfeasibleTarget(ValueError):
    """Age target below the per-source floor mean_delay + mean_intergen/sqrt(2)."""


def max_feasible_spacing(age_target: float, mean_delay: float, mean_intergen: float) -> float:
    """Largest mean spacing of delivered updates consistent with the age
    target: (a - g) + sqrt((a - g)^2 - m^2/2) for target a, delay mean g,
    inter-generation mean m."""
    a = age_target - mean_delay
    disc = a * a - mean_intergen * mean_intergen / 2.0
    if disc < 0.0:
        # a*a - m*m/2 cancels to a few ulps of noise exactly at the floor;
        # only treat materially negative discriminants as infeasible.
        if disc < -1e-12 * max(1.0, a * a):
            raise InfeasibleTarget(
                f"age target {age_target} below floor "
                f"{mean_delay + mean_intergen / math.sqrt(2.0)}"
            )
        disc = 0.0
    return a + math.sqrt(disc)


@dataclass(frozen=True, slots=True)
class FeasibilityReport:
    """Verdict of the necessary conditions: per-source target margins, the
    per-source max spacings, and the channel load they imply."""

    feasible: bool
    margins: List[float]
    max_spacing: List[float]
    load: float


def check_feasibility(
    sources: Sequence[SourceParams],
    age_targets: Optional[Sequence[float]] = None,
) -> FeasibilityReport:
    """Evaluate both necessary conditions; infeasibility is a report, not an
    error. 'Feasible' means 'passes the necessary conditions' only."""
    if age_targets is None:
        age_targets = [s.age_target for s in sources]
        if any(t is None for t in age_targets):
            raise ValueError("every source needs an age target")
    if len(age_targets) != len(sources):
        raise ValueError("age_targets length must match sources")

    margins: List[float] = []
    spacings: List[float] = []
    for src, target in zip(sources, age_targets):
        margins.append(target - src.mean_delay - src.mean_intergen / math.sqrt(2.0))
        try:
            spacings.append(max_feasible_spacing(target, src.mean_delay, src.mean_intergen))
        except InfeasibleTarget:
            spacings.append(math.nan)

    load = 0.0
    for src, spacing in zip(sources, spacings):
        if math.isnan(spacing):
            load = math.nan
            break
        load = math.inf if spacing == 0.0 else load + src.mean_delay / spacing

    feasible = all(m >= 0.0 for m in margins) and (not math.isnan(load)) and (
        load <= 1.0 + LOAD_TOLERANCE
    )
    return FeasibilityReport(feasible=feasible, margins=margins, max_spacing=spacings, load=load)


def pick_probabilities(max_spacing: Sequence[float]) -> np.ndarray:
    """Probability of picking each source, proportional to 1/max_spacing."""
    spacing = np.asarray(max_spacing, dtype=float)
    if spacing.ndim != 1 or spacing.size == 0:
        raise ValueError("max_spacing must be a nonempty vector")
    if not np.all(np.isfinite(spacing)) or np.any(spacing <= 0.0):
        raise ValueError("max_spacing entries must be positive and finite")
    inv = 1.0 / spacing
    return inv / inv.sum()


def aaoi_lower_bound(mean_spacing: float, mean_intergen: float, mean_delay: float) -> float:
    """Lower bound on expected AAoI for any policy whose delivered updates
    have the given mean inter-generation spacing."""
    if mean_spacing <= 0.0:
        raise ValueError("mean_spacing must be > 0")
    m2 = mean_intergen * mean_intergen / 2.0
    return 0.5 * (m2 / mean_spacing + mean_spacing + 2.0 * mean_delay)


def aaoi_upper_bound_randomized(max_spacing: float, mean_intergen: float, mean_delay: float) -> float:
    """Upper bound on expected AAoI of the stationary randomized policy whose
    pick probabilities derive from the given max spacing."""
    if max_spacing <= 0.0:
        raise ValueError("max_spacing must be > 0")
    m2 = mean_intergen * mean_intergen
    return 0.5 * (m2 / max_spacing + 3.0 * max_spacing + 2.0 * mean_delay)
