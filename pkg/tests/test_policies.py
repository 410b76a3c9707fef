import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agesched.core import DelayKind, DelaySpec, SourceParams, SystemConfig, make_stream
from agesched.engine import IdleLock, Transmit, Wait, run
from agesched.policies import (
    MarkedRandomizedPolicy,
    RandomizedPolicy,
    RoundRobinPolicy,
    ThresholdWaitPolicy,
    grid_search_threshold,
    mark_generation_times,
    marked_from_targets,
    pick_from_cumulative,
    policy_from_name,
    randomized_from_targets,
)

E = DelayKind.EXPONENTIAL


class TestPickFromCumulative:
    def test_cell_boundaries(self):
        cum = np.array([0.25, 0.75, 1.0])
        assert pick_from_cumulative(cum, 0.0) == 0
        assert pick_from_cumulative(cum, 0.25) == 1  # boundary goes right
        assert pick_from_cumulative(cum, 0.74) == 1
        assert pick_from_cumulative(cum, 0.999) == 2

    def test_rounding_shortfall_clamps_to_last(self):
        cum = np.array([0.5, 1.0 - 1e-12])
        assert pick_from_cumulative(cum, 1.0 - 1e-13) == 1

    @given(u=st.floats(0.0, 1.0, exclude_max=True))
    @settings(max_examples=50, deadline=None)
    def test_always_a_valid_index(self, u):
        cum = np.array([0.1, 0.4, 0.9, 1.0])
        assert 0 <= pick_from_cumulative(cum, u) < 4


class TestPolicyConstruction:
    def test_probability_validation(self):
        with pytest.raises(ValueError):
            RandomizedPolicy([])
        with pytest.raises(ValueError):
            RandomizedPolicy([0.5, 0.6])
        with pytest.raises(ValueError):
            RandomizedPolicy([-0.1, 1.1])
        RandomizedPolicy([0.3, 0.7])  # ok

    def test_marking_gap_validation(self):
        with pytest.raises(ValueError):
            MarkedRandomizedPolicy([1.0], [-1.0])
        with pytest.raises(ValueError):
            MarkedRandomizedPolicy([0.5, 0.5], [1.0])

    def test_threshold_validation(self):
        with pytest.raises(ValueError):
            ThresholdWaitPolicy(-0.5)
        with pytest.raises(ValueError):
            ThresholdWaitPolicy(math.inf)

    def test_session_checks_source_count(self):
        cfg = SystemConfig((SourceParams(1.0, DelaySpec(E, 1.0)),), horizon=10.0)
        with pytest.raises(ValueError):
            RandomizedPolicy([0.5, 0.5]).session(cfg, make_stream(0, "policy"))

    def test_threshold_needs_one_generate_at_will_source(self):
        cfg = SystemConfig((SourceParams(1.0, DelaySpec(E, 1.0)),), horizon=10.0)
        with pytest.raises(ValueError):
            ThresholdWaitPolicy(0.0).session(cfg, make_stream(0, "policy"))


class TestFromTargets:
    def sources(self):
        return (SourceParams(4.0, DelaySpec(E, 3.0), age_target=10.0),
                SourceParams(8.0, DelaySpec(E, 2.0), age_target=20.0))

    def test_probabilities_proportional_to_reciprocal_spacing(self):
        pol = randomized_from_targets(self.sources())
        t = pol.target_spacings
        assert pol.pick_probs[0] / pol.pick_probs[1] == pytest.approx(t[1] / t[0], rel=1e-12)
        assert sum(pol.pick_probs) == pytest.approx(1.0, abs=1e-12)

    def test_marking_gap_is_spacing_minus_intergen_clamped(self):
        pol = marked_from_targets(self.sources())
        for gap, t, s in zip(pol.marking_gaps, pol.target_spacings, self.sources()):
            assert gap == pytest.approx(max(0.0, t - s.mean_intergen), rel=1e-12)

    def test_gap_clamps_to_zero_when_spacing_below_intergen(self):
        # alpha close to the margin boundary makes the spacing < mu
        src = SourceParams(4.0, DelaySpec(E, 1.0), age_target=1.0 + 4.0 / math.sqrt(2.0) + 1e-6)
        pol = marked_from_targets((src,))
        assert pol.marking_gaps[0] == 0.0

    def test_explicit_targets_override(self):
        srcs = tuple(SourceParams(s.mean_intergen, s.delay) for s in self.sources())
        pol = randomized_from_targets(srcs, age_targets=[10.0, 20.0])
        assert pol.pick_probs == randomized_from_targets(self.sources()).pick_probs

    def test_missing_targets_rejected(self):
        with pytest.raises(ValueError):
            randomized_from_targets((SourceParams(4.0, DelaySpec(E, 3.0)),))


class TestMarkGenerationTimes:
    def test_first_time_always_kept(self):
        out = mark_generation_times([5.0, 6.0, 12.0], 10.0)
        assert out.tolist() == [5.0]

    def test_greedy_reference_case(self):
        times = [0.0, 1.0, 2.5, 4.0, 4.5, 7.0, 9.5]
        assert mark_generation_times(times, 3.0).tolist() == [0.0, 4.0, 7.0]

    def test_zero_gap_keeps_everything(self):
        times = [0.5, 1.0, 1.1]
        assert mark_generation_times(times, 0.0).tolist() == times

    def test_exact_gap_boundary_is_kept(self):
        assert mark_generation_times([0.0, 3.0, 5.0], 3.0).tolist() == [0.0, 3.0]

    def test_empty_input(self):
        assert mark_generation_times([], 2.0).size == 0

    def test_negative_gap_rejected(self):
        with pytest.raises(ValueError):
            mark_generation_times([1.0], -1.0)

    @given(st.lists(st.floats(0.0, 1e3), min_size=1, max_size=200),
           st.floats(0.0, 50.0))
    @settings(max_examples=100, deadline=None)
    def test_marked_gaps_respect_threshold(self, raw, gap):
        times = np.sort(np.asarray(raw))
        marks = mark_generation_times(times, gap)
        assert marks[0] == times[0]
        if marks.size >= 2:
            assert np.min(np.diff(marks)) >= gap - 1e-9
        # greedy maximality: every skipped time is within gap of the
        # preceding mark
        j = np.searchsorted(marks, times, side="right") - 1
        assert np.all(times - marks[np.maximum(j, 0)] < gap + 1e-9)


class TestPolicyFromName:
    def test_named_policies(self):
        srcs = (SourceParams(4.0, DelaySpec(E, 3.0), age_target=10.0),)
        assert isinstance(policy_from_name("randomized", srcs), RandomizedPolicy)
        assert isinstance(policy_from_name("marked", srcs), MarkedRandomizedPolicy)
        assert isinstance(policy_from_name("round-robin"), RoundRobinPolicy)
        zw = policy_from_name("zero-wait")
        assert isinstance(zw, ThresholdWaitPolicy) and zw.spacing_threshold == 0.0

    def test_threshold_spelling_carries_the_value(self):
        pol = policy_from_name("threshold-wait:1.75")
        assert pol.spacing_threshold == 1.75

    @pytest.mark.parametrize("bad", ["nope", "threshold-wait:abc", "threshold-wait:-1"])
    def test_bad_names_rejected(self, bad):
        with pytest.raises(ValueError):
            policy_from_name(bad)

    def test_randomized_needs_sources(self):
        with pytest.raises(ValueError):
            policy_from_name("randomized")


class TestSessionDecisions:
    def test_randomized_session_decides_per_pick(self):
        sources = (SourceParams(0.0, DelaySpec(E, 1.0)),
                   SourceParams(1e9, DelaySpec(E, 1.0)))
        cfg = SystemConfig(sources, horizon=10.0)
        sess = RandomizedPolicy([0.5, 0.5]).session(cfg, make_stream(0, "policy"))

        class View:
            time = 0.0

            def has_fresh(self, i):
                return i == 0  # only the generate-at-will source has a packet

        kinds = [sess.decide(View()) for _ in range(64)]
        assert any(isinstance(d, Transmit) and d.source == 0 for d in kinds)
        assert any(isinstance(d, IdleLock) and d.source == 1 for d in kinds)

    def test_pick_frequency_tracks_probabilities(self):
        probs = [0.2, 0.8]
        sess = RandomizedPolicy(probs).session(
            SystemConfig((SourceParams(0.0, DelaySpec(E, 1.0)),) * 2, horizon=1.0),
            make_stream(3, "policy"))

        class View:
            time = 0.0

            def has_fresh(self, i):
                return True

        n = 20_000
        picks = [sess.decide(View()).source for _ in range(n)]
        freq = np.bincount(picks, minlength=2) / n
        se = math.sqrt(0.2 * 0.8 / n)
        assert abs(freq[1] - 0.8) <= 3.0 * se

    def test_threshold_session_paces_sends(self):
        sess = ThresholdWaitPolicy(2.0).session(
            SystemConfig((SourceParams(0.0, DelaySpec(E, 1.0)),), horizon=1.0),
            make_stream(0, "policy"))

        class View:
            def __init__(self, t):
                self.time = t

        assert isinstance(sess.decide(View(0.0)), Transmit)   # first send immediate
        w = sess.decide(View(0.7))
        assert isinstance(w, Wait) and w.until == 2.0
        assert isinstance(sess.decide(View(2.0)), Transmit)   # due exactly now


class TestGridSearchThreshold:
    def test_deterministic_delay_prefers_zero(self):
        res = grid_search_threshold(DelaySpec(DelayKind.DETERMINISTIC, 1.0),
                                    thresholds=[0.0, 0.5, 1.0, 2.0],
                                    horizon=2e4, replications=2)
        assert res.best_threshold == 0.0

    def test_best_never_worse_than_zero_wait(self):
        res = grid_search_threshold(DelaySpec(E, 1.0),
                                    thresholds=np.linspace(0.0, 3.0, 16),
                                    horizon=5e4, replications=2)
        zero_idx = res.thresholds.index(0.0)
        assert res.best_aaoi <= res.aaoi_means[zero_idx] + 1e-12
        assert len(res.aaoi_means) == len(res.thresholds) == len(res.half_widths)

    def test_single_point_grid(self):
        res = grid_search_threshold(DelaySpec(E, 1.0), thresholds=[1.0],
                                    horizon=2e4, replications=2)
        assert res.best_threshold == 1.0
