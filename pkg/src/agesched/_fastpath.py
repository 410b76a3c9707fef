"""Vectorized simulation kernels for the stationary policies.

Draw-order contract with the generic event loop: the policy stream yields one
uniform per decision epoch, and each source's delay stream is consumed once
per pick of that source (transmit or idle lock), in pick order. Bulk array
draws from a numpy Generator equal the same number of scalar draws, so both
paths see identical random values.
"""

from __future__ import annotations

import math
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .core import SourceParams, SystemConfig, make_stream, sample_delay_array, sample_intergen_array
from .engine import (
    _KIND_PRIORITY,
    KIND_BUSY_START,
    KIND_CHANNEL_FREE,
    KIND_GENERATION,
    PURPOSE_DELAY,
    PURPOSE_GENERATION,
    PURPOSE_POLICY,
    LogRecord,
    SimResult,
    gap_variance,
)

CHUNK = 1 << 15


def select_kernel(cfg: SystemConfig, policy):
    from .policies import MarkedRandomizedPolicy, RandomizedPolicy, ThresholdWaitPolicy

    if type(policy) is RandomizedPolicy:
        return _run_randomized
    if type(policy) is MarkedRandomizedPolicy and all(
            s.mean_intergen > 0 for s in cfg.sources):
        return _run_marked
    if (type(policy) is ThresholdWaitPolicy and cfg.n_sources == 1
            and cfg.sources[0].generate_at_will):
        return _run_threshold
    return None


def build_epochs(sources: Sequence[SourceParams], pick_probs: Sequence[float],
                 horizon: float, seed: int, replication: int
                 ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Decision epochs of the randomized policy: start times (strictly before
    the horizon), picked sources, and the committed delay draws."""
    n = len(sources)
    cum = np.cumsum(np.asarray(pick_probs, dtype=float))
    policy_stream = make_stream(seed, PURPOSE_POLICY, 0, replication)
    delay_streams = [make_stream(seed, PURPOSE_DELAY, i, replication) for i in range(n)]

    starts_parts: List[np.ndarray] = []
    picks_parts: List[np.ndarray] = []
    delay_parts: List[np.ndarray] = []
    t = 0.0
    while t < horizon:
        u = policy_stream.random_array(CHUNK)
        picks = np.minimum(np.searchsorted(cum, u, side="right"), n - 1)
        d = np.empty(CHUNK)
        for i in range(n):
            mask = picks == i
            count = int(mask.sum())
            if count:
                d[mask] = sample_delay_array(sources[i].delay, delay_streams[i], count)
        starts = t + np.concatenate(([0.0], np.cumsum(d[:-1])))
        t = float(starts[-1] + d[-1])
        keep = starts < horizon
        starts_parts.append(starts[keep])
        picks_parts.append(picks[keep])
        delay_parts.append(d[keep])
        if not keep.all():
            break
    return (np.concatenate(starts_parts), np.concatenate(picks_parts),
            np.concatenate(delay_parts))


def _generation_times(source: SourceParams, horizon: float, seed: int,
                      replication: int, index: int) -> np.ndarray:
    """All generation times <= horizon (plus the first one beyond it)."""
    stream = make_stream(seed, PURPOSE_GENERATION, index, replication)
    parts: List[np.ndarray] = []
    t = 0.0
    while t <= horizon:
        gaps = sample_intergen_array(source.mean_intergen, stream, CHUNK)
        times = t + np.cumsum(gaps)
        t = float(times[-1])
        parts.append(times)
    return np.concatenate(parts)


def _segment_integral(deliver_times: np.ndarray, deliver_gens: np.ndarray,
                      horizon: float) -> float:
    # same segment decomposition and summation as the generic path: one ramp
    # per delivery plus the closing ramp at the horizon
    opens = np.concatenate(([0.0], deliver_times))
    closes = np.concatenate((deliver_times, [horizon]))
    lam = np.concatenate(([0.0], deliver_gens))
    dt = closes - opens
    start_age = opens - lam
    areas = start_age * dt + dt * dt * 0.5
    return float(np.sum(areas))


def _age_at(at_times: np.ndarray, deliver_times: np.ndarray,
            deliver_gens: np.ndarray, inclusive: bool) -> np.ndarray:
    """Ages at given instants; inclusive counts a delivery at the exact
    instant as already applied."""
    side = "right" if inclusive else "left"
    idx = np.searchsorted(deliver_times, at_times, side=side) - 1
    lam = np.where(idx >= 0, deliver_gens[np.maximum(idx, 0)], 0.0)
    return at_times - lam


def _transmit_mask(available: np.ndarray, epochs: np.ndarray
                   ) -> Tuple[np.ndarray, np.ndarray]:
    """Freshness rule: transmit iff the newest available generation index rose
    above everything transmitted so far; the index sequence is nondecreasing,
    so the previous entry is exactly that running maximum."""
    idx = np.searchsorted(available, epochs, side="right") - 1
    prev = np.concatenate(([-1], idx[:-1]))
    return idx > prev, idx


class _SourceTrace:
    """Everything the statistics and the optional event log need per source."""

    __slots__ = ("epochs", "delays", "transmit_mask", "generations",
                 "sent_gens_all", "send_times", "sent_gens", "deliver_times",
                 "deliver_gens")

    def __init__(self, epochs: np.ndarray, delays: np.ndarray,
                 transmit_mask: np.ndarray, sent_gens: np.ndarray,
                 generations: Optional[np.ndarray], horizon: float):
        self.epochs = epochs
        self.delays = delays
        self.transmit_mask = transmit_mask
        self.generations = generations
        self.sent_gens_all = sent_gens  # aligned with epochs[transmit_mask]
        sends = epochs[transmit_mask]
        arrivals = sends + delays[transmit_mask]
        keep = arrivals <= horizon  # in-flight at the horizon is discarded
        self.send_times = sends[keep]
        self.sent_gens = sent_gens[keep]
        self.deliver_times = arrivals[keep]
        self.deliver_gens = self.sent_gens


def _trace_source(cfg: SystemConfig, index: int, epochs: np.ndarray,
                  delays: np.ndarray, replication: int,
                  marking_gaps: Optional[Sequence[float]]) -> _SourceTrace:
    src = cfg.sources[index]
    if src.generate_at_will:
        tmask = np.ones(epochs.size, dtype=bool)  # a fresh packet always exists
        return _SourceTrace(epochs, delays, tmask, epochs, None, cfg.horizon)
    gens = _generation_times(src, cfg.horizon, cfg.seed, replication, index)
    available = gens
    if marking_gaps is not None:
        from .policies import mark_generation_times

        available = mark_generation_times(gens, marking_gaps[index])
    tmask, idx = _transmit_mask(available, epochs)
    sent_gens = available[idx[tmask]]
    return _SourceTrace(epochs, delays, tmask, sent_gens, gens, cfg.horizon)


def _stationary_kernel(cfg: SystemConfig, policy, replication: int,
                       collect_log: bool, marked: bool) -> SimResult:
    horizon = cfg.horizon
    starts, picks, delays = build_epochs(cfg.sources, policy.pick_probs, horizon,
                                         cfg.seed, replication)
    busy = float(np.sum(np.minimum(starts + delays, horizon) - starts))
    gaps = policy.marking_gaps if marked else None

    traces = []
    for i in range(cfg.n_sources):
        mask = picks == i
        traces.append(_trace_source(cfg, i, starts[mask], delays[mask],
                                    replication, gaps))

    aaoi, mean_spacing, spacing_var = [], [], []
    delivered, mean_wait, mean_system = [], [], []
    pick_count, inter_pick = [], []
    for tr in traces:
        count = int(tr.deliver_times.size)
        delivered.append(count)
        aaoi.append(_segment_integral(tr.deliver_times, tr.deliver_gens, horizon) / horizon)
        mean_spacing.append(float(tr.deliver_gens[-1]) / count if count else math.nan)
        spacing_var.append(gap_variance(tr.deliver_gens) if count >= 2 else math.nan)
        mean_wait.append(float(np.mean(tr.send_times - tr.sent_gens)) if count else math.nan)
        mean_system.append(float(np.mean(tr.deliver_times - tr.sent_gens)) if count else math.nan)
        pick_count.append(int(tr.epochs.size))
        inter_pick.append(float(np.mean(np.diff(tr.epochs))) if tr.epochs.size >= 2
                          else math.nan)

    log = _build_log(traces, horizon) if collect_log else None
    return SimResult(
        aaoi=aaoi,
        mean_spacing=mean_spacing,
        spacing_variance=spacing_var,
        delivered=delivered,
        mean_wait=mean_wait,
        mean_system_time=mean_system,
        pick_count=pick_count,
        mean_inter_pick=inter_pick,
        busy_fraction=busy / horizon,
        n_decisions=int(starts.size),
        horizon=horizon,
        seed=cfg.seed,
        replication=replication,
        event_log=log,
    )


def _run_randomized(cfg: SystemConfig, policy, replication: int, collect_log: bool) -> SimResult:
    return _stationary_kernel(cfg, policy, replication, collect_log, marked=False)


def _run_marked(cfg: SystemConfig, policy, replication: int, collect_log: bool) -> SimResult:
    return _stationary_kernel(cfg, policy, replication, collect_log, marked=True)


def _build_log(traces: List[_SourceTrace], horizon: float) -> List[LogRecord]:
    records: List[LogRecord] = []
    for i, tr in enumerate(traces):
        dt, dg = tr.deliver_times, tr.deliver_gens
        if tr.generations is not None:
            gkeep = tr.generations[tr.generations <= horizon]
            ages = _age_at(gkeep, dt, dg, inclusive=False)
            records.extend(
                LogRecord(float(t), KIND_GENERATION, i, float(t), float(a))
                for t, a in zip(gkeep, ages))

        gen_of_epoch = np.full(tr.epochs.size, math.nan)
        gen_of_epoch[tr.transmit_mask] = tr.sent_gens_all
        ages = _age_at(tr.epochs, dt, dg, inclusive=True)
        records.extend(
            LogRecord(float(t), KIND_BUSY_START, i, float(g), float(a))
            for t, g, a in zip(tr.epochs, gen_of_epoch, ages))

        records.extend(
            LogRecord(float(t), KIND_CHANNEL_FREE, i, float(g), float(t - g))
            for t, g in zip(tr.deliver_times, tr.deliver_gens))
        idle_end = tr.epochs[~tr.transmit_mask] + tr.delays[~tr.transmit_mask]
        ikeep = idle_end[idle_end <= horizon]
        iages = _age_at(ikeep, dt, dg, inclusive=True)
        records.extend(
            LogRecord(float(t), KIND_CHANNEL_FREE, i, math.nan, float(a))
            for t, a in zip(ikeep, iages))

    records.sort(key=lambda r: (r.time, _KIND_PRIORITY[r.kind]))
    return records


def _run_threshold(cfg: SystemConfig, policy, replication: int, collect_log: bool) -> SimResult:
    src = cfg.sources[0]
    horizon = cfg.horizon
    theta = policy.spacing_threshold
    stream = make_stream(cfg.seed, PURPOSE_DELAY, 0, replication)

    sends_parts, delay_parts = [], []
    t = 0.0
    while t < horizon:
        d = sample_delay_array(src.delay, stream, CHUNK)
        steps = np.maximum(d, theta)
        ends = t + np.cumsum(steps)
        sends = np.concatenate(([t], ends[:-1]))
        t = float(ends[-1])
        keep = sends < horizon
        sends_parts.append(sends[keep])
        delay_parts.append(d[keep])
        if not keep.all():
            break
    sends = np.concatenate(sends_parts)
    delays = np.concatenate(delay_parts)
    arrivals = sends + delays
    keep = arrivals <= horizon
    s_del, r_del = sends[keep], arrivals[keep]

    count = int(r_del.size)
    busy = float(np.sum(np.minimum(arrivals, horizon) - sends))
    # every delivery that arrives sooner than the spacing threshold triggers
    # one extra wait decision before the next transmission
    n_decisions = int(sends.size + np.sum((delays < theta) & (arrivals < horizon)))

    log = None
    if collect_log:
        records = []
        ages = _age_at(sends, r_del, s_del, inclusive=True)
        records.extend(
            LogRecord(float(t), KIND_BUSY_START, 0, float(t), float(a))
            for t, a in zip(sends, ages))
        records.extend(
            LogRecord(float(t), KIND_CHANNEL_FREE, 0, float(g), float(t - g))
            for t, g in zip(r_del, s_del))
        records.sort(key=lambda r: (r.time, _KIND_PRIORITY[r.kind]))
        log = records

    return SimResult(
        aaoi=[_segment_integral(r_del, s_del, horizon) / horizon],
        mean_spacing=[float(s_del[-1]) / count if count else math.nan],
        spacing_variance=[gap_variance(s_del) if count >= 2 else math.nan],
        delivered=[count],
        mean_wait=[0.0 if count else math.nan],
        mean_system_time=[float(np.mean(r_del - s_del)) if count else math.nan],
        pick_count=[int(sends.size)],
        mean_inter_pick=[float(np.mean(np.diff(sends))) if sends.size >= 2 else math.nan],
        busy_fraction=busy / horizon,
        n_decisions=n_decisions,
        horizon=horizon,
        seed=cfg.seed,
        replication=replication,
        event_log=log,
    )
