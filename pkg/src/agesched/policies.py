"""Scheduling policies for the shared channel.

A policy exposes session(cfg, policy_stream) -> object with decide(view);
decide is called once per decision epoch and must return Transmit, IdleLock,
or Wait. Stationary policies draw exactly one uniform per epoch from the
policy stream so the vectorized kernels can replay them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .capacity import max_feasible_spacing, pick_probabilities
from .core import DelaySpec, RandomStream, SourceParams, SystemConfig
from .engine import Decision, IdleLock, Transmit, Wait, run

__all__ = [
    "MarkedRandomizedPolicy",
    "RandomizedPolicy",
    "RoundRobinPolicy",
    "ThresholdSearchResult",
    "ThresholdWaitPolicy",
    "grid_search_threshold",
    "mark_generation_times",
    "marked_from_targets",
    "pick_from_cumulative",
    "policy_from_name",
    "randomized_from_targets",
]


def pick_from_cumulative(cumulative: np.ndarray, u: float) -> int:
    """Index i with cum[i-1] <= u < cum[i], clamped to the last cell so a
    cumulative that tops out slightly below 1.0 cannot fall off the end."""
    return int(min(np.searchsorted(cumulative, u, side="right"), cumulative.size - 1))


def _validated_probs(pick_probs: Sequence[float]) -> Tuple[float, ...]:
    probs = tuple(float(p) for p in pick_probs)
    if not probs:
        raise ValueError("pick_probs must be non-empty")
    if any(not math.isfinite(p) or p < 0.0 for p in probs):
        raise ValueError("pick_probs must be finite and >= 0")
    total = sum(probs)
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"pick_probs must sum to 1, got {total!r}")
    return probs


class _StationarySession:
    __slots__ = ("cum", "stream", "marked")

    def __init__(self, probs: Sequence[float], stream: RandomStream, marked: bool):
        self.cum = np.cumsum(probs)
        self.stream = stream
        self.marked = marked

    def decide(self, view) -> Decision:
        i = pick_from_cumulative(self.cum, self.stream.random())
        if self.marked:
            if view.has_fresh_marked(i):
                return Transmit(i, use_marked=True)
        elif view.has_fresh(i):
            return Transmit(i)
        return IdleLock(i)


class RandomizedPolicy:
    """Each time the channel frees, pick source i with probability p_i and
    transmit its freshest undelivered packet, or hold the channel idle for
    one delay draw when nothing fresh is buffered."""

    __slots__ = ("pick_probs", "target_spacings")

    def __init__(self, pick_probs: Sequence[float],
                 target_spacings: Optional[Sequence[float]] = None):
        self.pick_probs = _validated_probs(pick_probs)
        self.target_spacings = (None if target_spacings is None
                                else tuple(float(t) for t in target_spacings))

    def session(self, cfg: SystemConfig, policy_stream: RandomStream):
        if len(self.pick_probs) != cfg.n_sources:
            raise ValueError("pick_probs length must match the source count")
        return _StationarySession(self.pick_probs, policy_stream, marked=False)


class MarkedRandomizedPolicy:
    """Randomized picking restricted to marked packets: each source marks the
    first generation at least marking_gaps[i] after its previous mark, and only
    marked packets are eligible to transmit."""

    __slots__ = ("pick_probs", "marking_gaps", "target_spacings")

    def __init__(self, pick_probs: Sequence[float], marking_gaps: Sequence[float],
                 target_spacings: Optional[Sequence[float]] = None):
        self.pick_probs = _validated_probs(pick_probs)
        gaps = tuple(float(g) for g in marking_gaps)
        if len(gaps) != len(self.pick_probs):
            raise ValueError("marking_gaps length must match pick_probs")
        if any(not math.isfinite(g) or g < 0.0 for g in gaps):
            raise ValueError("marking_gaps must be finite and >= 0")
        self.marking_gaps = gaps
        self.target_spacings = (None if target_spacings is None
                                else tuple(float(t) for t in target_spacings))

    def session(self, cfg: SystemConfig, policy_stream: RandomStream):
        if len(self.pick_probs) != cfg.n_sources:
            raise ValueError("pick_probs length must match the source count")
        return _StationarySession(self.pick_probs, policy_stream, marked=True)


class _RoundRobinSession:
    __slots__ = ("n", "cursor")

    def __init__(self, n: int):
        self.n = n
        self.cursor = 0

    def decide(self, view) -> Decision:
        for step in range(self.n):
            i = (self.cursor + step) % self.n
            if view.has_fresh(i):
                self.cursor = (i + 1) % self.n
                return Transmit(i)
        return Wait()  # nothing fresh anywhere; sleep until some generation


class RoundRobinPolicy:
    """Cycle through the sources, skipping any with nothing fresh; with a free
    channel and empty buffers, sleep until the next generation event."""

    def session(self, cfg: SystemConfig, policy_stream: RandomStream):
        return _RoundRobinSession(cfg.n_sources)


class _ThresholdWaitSession:
    __slots__ = ("threshold", "last_send")

    def __init__(self, threshold: float):
        self.threshold = threshold
        self.last_send: Optional[float] = None

    def decide(self, view) -> Decision:
        due = 0.0 if self.last_send is None else self.last_send + self.threshold
        if view.time >= due:
            self.last_send = view.time
            return Transmit(0)
        return Wait(until=due)


class ThresholdWaitPolicy:
    """Single generate-at-will source: send a fresh sample as soon as the
    channel is free and at least spacing_threshold has elapsed since the
    previous send. Threshold 0 is the zero-wait policy."""

    __slots__ = ("spacing_threshold",)

    def __init__(self, spacing_threshold: float = 0.0):
        t = float(spacing_threshold)
        if not math.isfinite(t) or t < 0.0:
            raise ValueError("spacing_threshold must be finite and >= 0")
        self.spacing_threshold = t

    def session(self, cfg: SystemConfig, policy_stream: RandomStream):
        if cfg.n_sources != 1 or not cfg.sources[0].generate_at_will:
            raise ValueError("ThresholdWaitPolicy needs exactly one "
                             "generate-at-will source")
        return _ThresholdWaitSession(self.spacing_threshold)


def mark_generation_times(generation_times: Sequence[float], gap: float) -> np.ndarray:
    """Greedy marking: keep the first time, then the first time at least
    `gap` after the previous kept one. With gap == 0 every time is kept."""
    times = np.asarray(generation_times, dtype=float)
    if gap < 0.0 or not math.isfinite(gap):
        raise ValueError("gap must be finite and >= 0")
    if times.size == 0:
        return times.copy()
    if gap == 0.0:
        return times.copy()
    marks: List[float] = []
    i = 0
    n = times.size
    while i < n:
        t = float(times[i])
        marks.append(t)
        j = int(times.searchsorted(t + gap, side="left"))
        i = j if j > i else i + 1
    return np.asarray(marks)


def _resolve_spacings(sources: Sequence[SourceParams],
                      age_targets: Optional[Sequence[float]]) -> List[float]:
    if age_targets is None:
        age_targets = [s.age_target for s in sources]
        if any(a is None for a in age_targets):
            raise ValueError("every source needs an age target "
                             "(set age_target or pass age_targets)")
    if len(age_targets) != len(sources):
        raise ValueError("age_targets length must match the source count")
    return [max_feasible_spacing(a, s.mean_delay, s.mean_intergen)
            for a, s in zip(age_targets, sources)]


def randomized_from_targets(sources: Sequence[SourceParams],
                            age_targets: Optional[Sequence[float]] = None
                            ) -> RandomizedPolicy:
    """Randomized policy whose pick rates are proportional to 1 / (largest
    spacing meeting each source's age target)."""
    spacings = _resolve_spacings(sources, age_targets)
    return RandomizedPolicy(pick_probabilities(spacings), spacings)


def marked_from_targets(sources: Sequence[SourceParams],
                        age_targets: Optional[Sequence[float]] = None
                        ) -> MarkedRandomizedPolicy:
    """Marked variant: same pick rates, marking gap max(0, spacing - mean
    inter-generation time) so marked packets arrive about one per spacing."""
    spacings = _resolve_spacings(sources, age_targets)
    gaps = [max(0.0, t - s.mean_intergen) for t, s in zip(spacings, sources)]
    return MarkedRandomizedPolicy(pick_probabilities(spacings), gaps, spacings)


def policy_from_name(name: str, sources: Optional[Sequence[SourceParams]] = None,
                     age_targets: Optional[Sequence[float]] = None):
    """Build a policy from its CLI spelling: randomized, marked, round-robin,
    zero-wait, or threshold-wait:<spacing>."""
    key = name.strip().lower()
    if key == "randomized":
        if sources is None:
            raise ValueError("randomized needs source parameters")
        return randomized_from_targets(sources, age_targets)
    if key == "marked":
        if sources is None:
            raise ValueError("marked needs source parameters")
        return marked_from_targets(sources, age_targets)
    if key == "round-robin":
        return RoundRobinPolicy()
    if key == "zero-wait":
        return ThresholdWaitPolicy(0.0)
    if key.startswith("threshold-wait:"):
        try:
            return ThresholdWaitPolicy(float(key.split(":", 1)[1]))
        except ValueError as exc:
            raise ValueError(f"bad threshold in policy name {name!r}") from exc
    raise ValueError(f"unknown policy {name!r}")


@dataclass(frozen=True, slots=True)
class ThresholdSearchResult:
    best_threshold: float
    best_aaoi: float
    thresholds: Tuple[float, ...]
    aaoi_means: Tuple[float, ...]
    half_widths: Tuple[float, ...]  # 1.96 * standard error across replications


def grid_search_threshold(delay: DelaySpec, thresholds: Optional[Sequence[float]] = None,
                          horizon: float = 2e5, replications: int = 3,
                          seed: int = 0) -> ThresholdSearchResult:
    """Simulated AAoI of the threshold-wait policy over a grid of spacing
    thresholds for one generate-at-will source; ties go to the smallest
    threshold."""
    if thresholds is None:
        thresholds = np.linspace(0.0, 3.0 * delay.mean, 151)
    grid = tuple(float(t) for t in thresholds)
    src = SourceParams(mean_intergen=0.0, delay=delay)
    means, halves = [], []
    for theta in grid:
        policy = ThresholdWaitPolicy(theta)
        vals = []
        for rep in range(replications):
            cfg = SystemConfig(sources=(src,), horizon=horizon, seed=seed,
                               replications=replications)
            vals.append(run(cfg, policy, replication=rep).aaoi[0])
        arr = np.asarray(vals)
        means.append(float(arr.mean()))
        halves.append(float(1.96 * arr.std(ddof=1) / math.sqrt(len(vals)))
                      if len(vals) > 1 else math.nan)
    best = int(np.argmin(means))
    return ThresholdSearchResult(
        best_threshold=grid[best],
        best_aaoi=means[best],
        thresholds=grid,
        aaoi_means=tuple(means),
        half_widths=tuple(halves),
    )
