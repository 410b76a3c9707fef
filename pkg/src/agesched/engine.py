"""Discrete-event simulation of N sources sharing one non-preemptive channel,
with exact piecewise-linear age accounting.

Two execution paths produce the same results: a generic event loop that works
with any policy implementing the decision interface, and vectorized kernels
(see _fastpath) for the stationary policies. Both consume the same labelled
random streams in the same per-stream order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .core import (
    RandomStream,
    SourceParams,
    SystemConfig,
    make_stream,
    sample_delay,
    sample_intergen,
    validate_config,
)

__all__ = [
    "Decision",
    "IdleLock",
    "LogRecord",
    "PickProcessReport",
    "PolicyContractViolation",
    "SimResult",
    "SourceProgress",
    "TooFewSamples",
    "Transmit",
    "Wait",
    "aoi_integral_segment",
    "deliver",
    "gap_variance",
    "replay_aaoi",
    "run",
    "simulate_pick_process",
]

PURPOSE_GENERATION = "generation"
PURPOSE_DELAY = "delay"
PURPOSE_POLICY = "policy"

KIND_GENERATION = "generation"
KIND_BUSY_START = "busy_start"
KIND_CHANNEL_FREE = "channel_free"
# processing order at equal timestamps: generations fire first so a packet
# generated exactly at a decision epoch is visible to the policy
_KIND_PRIORITY = {KIND_GENERATION: 0, KIND_CHANNEL_FREE: 1, KIND_BUSY_START: 2}


class PolicyContractViolation(RuntimeError):
    """The policy asked for something the channel or buffer state forbids."""


class TooFewSamples(ValueError):
    """gap_variance needs at least two generation times."""


@dataclass(frozen=True, slots=True)
class Transmit:
    source: int
    use_marked: bool = False


@dataclass(frozen=True, slots=True)
class IdleLock:
    source: int


@dataclass(frozen=True, slots=True)
class Wait:
    until: Optional[float] = None


Decision = Union[Transmit, IdleLock, Wait]


@dataclass(frozen=True, slots=True)
class LogRecord:
    time: float
    kind: str
    source: int
    generation_time: float  # nan for idle locks
    age_after: float


@dataclass(frozen=True, slots=True)
class SimResult:
    """Per-source statistics of one replication plus channel-level totals."""

    aaoi: List[float]
    mean_spacing: List[float]      # delivered inter-generation mean, origin-anchored
    spacing_variance: List[float]  # variance of delivered inter-generation gaps
    delivered: List[int]
    mean_wait: List[float]         # transmission start minus generation time
    mean_system_time: List[float]  # delivery minus generation time
    pick_count: List[int]
    mean_inter_pick: List[float]
    busy_fraction: float
    n_decisions: int
    horizon: float
    seed: int
    replication: int
    event_log: Optional[List[LogRecord]] = None


def aoi_integral_segment(start_age: float, duration: float) -> float:
    """Exact area under one age ramp (slope is always 1)."""
    if start_age < 0.0 or duration < 0.0:
        raise ValueError("start_age and duration must be >= 0")
    return start_age * duration + duration * duration * 0.5


def gap_variance(generation_times: Sequence[float]) -> float:
    """Population variance of consecutive gaps in a generation-time sequence."""
    times = np.asarray(generation_times, dtype=float)
    if times.size < 2:
        raise TooFewSamples("need at least two generation times")
    gaps = np.diff(times)
    return float(np.mean((gaps - gaps.mean()) ** 2))


class SourceProgress:
    """One source's age trajectory; segments close only at deliveries and at
    the horizon, which keeps the integral an exact sum of ramp areas."""

    __slots__ = ("delivered_gen", "segment_start", "areas", "delivered_gens",
                 "wait_sum", "system_sum")

    def __init__(self) -> None:
        self.delivered_gen = 0.0  # initial age is 0 at t=0
        self.segment_start = 0.0
        self.areas: List[float] = []
        self.delivered_gens: List[float] = []
        self.wait_sum = 0.0
        self.system_sum = 0.0

    def age_at(self, t: float) -> float:
        return t - self.delivered_gen


def deliver(progress: SourceProgress, generation_time: float, delivery_time: float) -> float:
    """Close the elapsed segment, drop the age to (delivery time - newest
    delivered generation time), and return the new age. Deliveries older than
    the newest delivered packet leave the age unchanged."""
    if generation_time > delivery_time:
        raise ValueError("generation_time must be <= delivery_time")
    start_age = progress.segment_start - progress.delivered_gen
    duration = delivery_time - progress.segment_start
    progress.areas.append(aoi_integral_segment(start_age, duration))
    if generation_time > progress.delivered_gen:
        progress.delivered_gen = generation_time
    progress.segment_start = delivery_time
    progress.delivered_gens.append(generation_time)
    return delivery_time - progress.delivered_gen


def _close_at_horizon(progress: SourceProgress, horizon: float) -> None:
    start_age = progress.segment_start - progress.delivered_gen
    progress.areas.append(aoi_integral_segment(start_age, horizon - progress.segment_start))


def _sum_areas(areas: Sequence[float]) -> float:
    return float(np.sum(np.asarray(areas, dtype=float)))


def replay_aaoi(records: Sequence[LogRecord], horizon: float, n_sources: int) -> List[float]:
    """Rebuild per-source AAoI from the delivery records of an event log with
    the same segment decomposition and summation the engine uses."""
    trackers = [SourceProgress() for _ in range(n_sources)]
    for rec in records:
        if rec.kind != KIND_CHANNEL_FREE or math.isnan(rec.generation_time):
            continue
        deliver(trackers[rec.source], rec.generation_time, rec.time)
    out = []
    for tracker in trackers:
        _close_at_horizon(tracker, horizon)
        out.append(_sum_areas(tracker.areas) / horizon)
    return out


class _EngineView:
    """Read-only causal snapshot handed to policies at decision epochs."""

    __slots__ = ("time", "n_sources", "_eng")

    def __init__(self, eng: "_GenericRun", time: float):
        self.time = time
        self.n_sources = eng.n
        self._eng = eng

    def has_fresh(self, source: int) -> bool:
        eng = self._eng
        if eng.sources[source].generate_at_will:
            return True
        gen = eng.buffer_gen[source]
        return gen is not None and gen > eng.last_transmitted[source]

    def has_fresh_marked(self, source: int) -> bool:
        eng = self._eng
        gaps = eng.marking_gaps
        if gaps is None:
            return False
        if eng.sources[source].generate_at_will:
            lm = eng.last_marked[source]
            return lm is None or self.time - lm >= gaps[source]
        gen = eng.marked_latest[source]
        return gen is not None and gen > eng.last_transmitted[source]

    def age(self, source: int) -> float:
        return self._eng.progress[source].age_at(self.time)

    def transmitted_age(self, source: int) -> float:
        eng = self._eng
        if not eng.has_transmitted[source]:
            return math.inf
        return self.time - eng.last_transmitted[source]


class _GenericRun:
    def __init__(self, cfg: SystemConfig, policy, replication: int, collect_log: bool):
        self.cfg = cfg
        self.sources = cfg.sources
        self.n = cfg.n_sources
        self.horizon = cfg.horizon
        self.replication = replication
        self.gen_streams: List[Optional[RandomStream]] = [
            None if s.generate_at_will
            else make_stream(cfg.seed, PURPOSE_GENERATION, i, replication)
            for i, s in enumerate(cfg.sources)
        ]
        self.delay_streams = [
            make_stream(cfg.seed, PURPOSE_DELAY, i, replication) for i in range(self.n)
        ]
        self.policy_stream = make_stream(cfg.seed, PURPOSE_POLICY, 0, replication)
        self.session = policy.session(cfg, self.policy_stream)
        self.marking_gaps: Optional[Sequence[float]] = getattr(policy, "marking_gaps", None)

        self.next_gen = [
            math.inf if st is None else sample_intergen(s.mean_intergen, st)
            for s, st in zip(cfg.sources, self.gen_streams)
        ]
        self.buffer_gen: List[Optional[float]] = [None] * self.n
        self.last_transmitted = [0.0] * self.n
        self.has_transmitted = [False] * self.n
        self.marked_latest: List[Optional[float]] = [None] * self.n
        self.last_marked: List[Optional[float]] = [None] * self.n
        self.progress = [SourceProgress() for _ in range(self.n)]
        self.log: Optional[List[LogRecord]] = [] if collect_log else None

        self.busy_time = 0.0
        self.n_decisions = 0
        self.pick_count = [0] * self.n
        self.last_pick: List[Optional[float]] = [None] * self.n
        self.pick_gap_sum = [0.0] * self.n

    def _process_generations(self, limit: float) -> None:
        while True:
            t_min, src = math.inf, -1
            for i, t in enumerate(self.next_gen):
                if t < t_min:
                    t_min, src = t, i
            if src < 0 or t_min > limit:
                return
            self.buffer_gen[src] = t_min
            if self.marking_gaps is not None:
                lm = self.last_marked[src]
                if lm is None or t_min - lm >= self.marking_gaps[src]:
                    self.last_marked[src] = t_min
                    self.marked_latest[src] = t_min
            if self.log is not None:
                self.log.append(LogRecord(t_min, KIND_GENERATION, src, t_min,
                                          self.progress[src].age_at(t_min)))
            stream = self.gen_streams[src]
            assert stream is not None
            self.next_gen[src] = t_min + sample_intergen(
                self.sources[src].mean_intergen, stream)

    def _record_pick(self, source: int, t: float) -> None:
        prev = self.last_pick[source]
        if prev is not None:
            self.pick_gap_sum[source] += t - prev
        self.last_pick[source] = t
        self.pick_count[source] += 1

    def _transmitted_generation(self, decision: Transmit, now: float) -> float:
        i = decision.source
        src = self.sources[i]
        if src.generate_at_will:
            if decision.use_marked:
                gaps = self.marking_gaps
                if gaps is None:
                    raise PolicyContractViolation("policy has no marking thresholds")
                lm = self.last_marked[i]
                if lm is not None and now - lm < gaps[i]:
                    raise PolicyContractViolation("no fresh marked packet available")
                self.last_marked[i] = now
            return now
        gen = self.marked_latest[i] if decision.use_marked else self.buffer_gen[i]
        if gen is None or gen <= self.last_transmitted[i]:
            raise PolicyContractViolation("no fresh packet available to transmit")
        return gen

    def execute(self) -> SimResult:
        horizon = self.horizon
        now = 0.0
        busy_until: Optional[float] = None
        in_flight: Optional[Tuple[int, float, float]] = None  # source, gen, start
        idle_of: Optional[int] = None
        wake_at: Optional[float] = None
        waiting_for_event = False

        while True:
            if busy_until is not None:
                epoch = busy_until
            elif wake_at is not None:
                epoch = wake_at
            elif waiting_for_event:
                epoch = min(self.next_gen)
            else:
                epoch = now
            if epoch > horizon or math.isinf(epoch):
                break
            self._process_generations(epoch)

            if busy_until is not None:
                if in_flight is not None:
                    i, gen, start = in_flight
                    age_after = deliver(self.progress[i], gen, epoch)
                    self.progress[i].wait_sum += start - gen
                    self.progress[i].system_sum += epoch - gen
                    if self.log is not None:
                        self.log.append(LogRecord(epoch, KIND_CHANNEL_FREE, i, gen, age_after))
                    in_flight = None
                else:
                    assert idle_of is not None
                    if self.log is not None:
                        self.log.append(LogRecord(
                            epoch, KIND_CHANNEL_FREE, idle_of, math.nan,
                            self.progress[idle_of].age_at(epoch)))
                    idle_of = None
                busy_until = None
                now = epoch
                continue

            now = epoch
            wake_at = None
            waiting_for_event = False
            if now >= horizon:
                break  # decisions happen strictly before the horizon

            self.n_decisions += 1
            decision = self.session.decide(_EngineView(self, now))
            if isinstance(decision, Transmit):
                gen = self._transmitted_generation(decision, now)
                i = decision.source
                self.last_transmitted[i] = gen
                self.has_transmitted[i] = True
                d = sample_delay(self.sources[i].delay, self.delay_streams[i])
                self.busy_time += min(d, horizon - now)
                busy_until = now + d
                in_flight = (i, gen, now)
                self._record_pick(i, now)
                if self.log is not None:
                    self.log.append(LogRecord(now, KIND_BUSY_START, i, gen,
                                              self.progress[i].age_at(now)))
            elif isinstance(decision, IdleLock):
                i = decision.source
                d = sample_delay(self.sources[i].delay, self.delay_streams[i])
                self.busy_time += min(d, horizon - now)
                busy_until = now + d
                idle_of = i
                self._record_pick(i, now)
                if self.log is not None:
                    self.log.append(LogRecord(now, KIND_BUSY_START, i, math.nan,
                                              self.progress[i].age_at(now)))
            elif isinstance(decision, Wait):
                if decision.until is not None:
                    if decision.until <= now:
                        raise PolicyContractViolation("wait(until) must be in the future")
                    wake_at = decision.until
                else:
                    waiting_for_event = True
            else:
                raise PolicyContractViolation(f"unknown decision {decision!r}")

        if self.log is not None:
            self._process_generations(horizon)  # complete the log to the horizon
        return self._build_result()

    def _build_result(self) -> SimResult:
        horizon = self.horizon
        aaoi, mean_spacing, spacing_var = [], [], []
        delivered, mean_wait, mean_system = [], [], []
        inter_pick = []
        for i, tracker in enumerate(self.progress):
            _close_at_horizon(tracker, horizon)
            aaoi.append(_sum_areas(tracker.areas) / horizon)
            count = len(tracker.delivered_gens)
            delivered.append(count)
            mean_spacing.append(tracker.delivered_gens[-1] / count if count else math.nan)
            spacing_var.append(gap_variance(tracker.delivered_gens) if count >= 2 else math.nan)
            mean_wait.append(tracker.wait_sum / count if count else math.nan)
            mean_system.append(tracker.system_sum / count if count else math.nan)
            picks = self.pick_count[i]
            inter_pick.append(self.pick_gap_sum[i] / (picks - 1) if picks >= 2 else math.nan)
        return SimResult(
            aaoi=aaoi,
            mean_spacing=mean_spacing,
            spacing_variance=spacing_var,
            delivered=delivered,
            mean_wait=mean_wait,
            mean_system_time=mean_system,
            pick_count=list(self.pick_count),
            mean_inter_pick=inter_pick,
            busy_fraction=self.busy_time / horizon,
            n_decisions=self.n_decisions,
            horizon=horizon,
            seed=self.cfg.seed,
            replication=self.replication,
            event_log=self.log,
        )


def run(cfg: SystemConfig, policy, replication: int = 0, *,
        collect_event_log: bool = False, force_generic: bool = False) -> SimResult:
    """Simulate [0, horizon] under the given policy. The policy is consulted
    exactly once at t=0 and at every later instant the channel becomes free;
    deliveries in flight at the horizon are discarded."""
    validate_config(cfg)
    if not force_generic:
        from . import _fastpath

        kernel = _fastpath.select_kernel(cfg, policy)
        if kernel is not None:
            return kernel(cfg, policy, replication, collect_event_log)
    return _GenericRun(cfg, policy, replication, collect_event_log).execute()


@dataclass(frozen=True, slots=True)
class PickProcessReport:
    pick_count: List[int]
    mean_inter_pick: List[float]
    horizon: float
    seed: int


def simulate_pick_process(sources: Sequence[SourceParams], pick_probs: Sequence[float],
                          horizon: float, seed: int, replication: int = 0) -> PickProcessReport:
    """Simulate only the pick/idle epoch process of the randomized policy (no
    age accounting) and report per-source inter-pick statistics."""
    from . import _fastpath

    starts, picks, _ = _fastpath.build_epochs(sources, pick_probs, horizon, seed, replication)
    counts, means = [], []
    for i in range(len(sources)):
        times = starts[picks == i]
        counts.append(int(times.size))
        means.append(float(np.mean(np.diff(times))) if times.size >= 2 else math.nan)
    return PickProcessReport(pick_count=counts, mean_inter_pick=means,
                             horizon=horizon, seed=seed)
