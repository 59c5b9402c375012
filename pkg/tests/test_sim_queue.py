import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from delayexp import exponents as ex
from delayexp import sim_queue as sq
from delayexp.channel import OutOfRangeError
from delayexp.errors import DomainError

LN15 = math.log(1.5)


class TestChain:
    def test_birth_death_probs(self):
        chain = sq.birth_death(0.4)
        assert chain.birth_prob == pytest.approx(0.16, rel=1e-12)
        assert chain.death_prob == pytest.approx(0.36, rel=1e-12)
        assert chain.birth_prob + chain.death_prob <= 1.0
        assert chain.birth_prob < chain.death_prob

    def test_rejects_unstable_delta(self):
        for bad in (0.0, 0.5, 0.9):
            with pytest.raises(OutOfRangeError):
                sq.birth_death(bad)

    def test_tail_exponent_values(self):
        assert sq.tail_exponent(sq.birth_death(0.4)) == pytest.approx(LN15, rel=1e-12)
        assert sq.tail_exponent(sq.birth_death(0.25)) == pytest.approx(math.log(3.0), rel=1e-12)

    @given(st.floats(min_value=0.01, max_value=0.49))
    @settings(max_examples=30, deadline=None)
    def test_matches_closed_form_exponent(self, delta):
        # Cross-module identity: the chain tail rate equals the channel's
        # feedback exponent exactly.
        assert sq.tail_exponent(sq.birth_death(delta)) == pytest.approx(
            ex.bec_feedback_exponent(delta), rel=1e-12)


class TestSimulate:
    def test_deterministic_by_seed(self):
        a = sq.simulate_bec_feedback(0.4, 100_000, [4, 8, 12], 11)
        b = sq.simulate_bec_feedback(0.4, 100_000, [4, 8, 12], 11)
        c = sq.simulate_bec_feedback(0.4, 100_000, [4, 8, 12], 12)
        assert a == b
        assert a != c

    def test_horizon_guard(self):
        with pytest.raises(sq.HorizonTooShortError):
            sq.simulate_bec_feedback(0.4, 100, [20], 0)

    def test_zero_delay_error_positive(self):
        t = sq.simulate_bec_feedback(0.4, 200_000, [0], 3)
        assert t.errors[0] > 0.0

    def test_low_erasure_rate_tiny_errors(self):
        t = sq.simulate_bec_feedback(0.01, 100_000, [20, 24, 28], 5)
        assert all(e < 1e-4 for e in t.errors)

    def test_nonincreasing_within_noise(self):
        t = sq.simulate_bec_feedback(0.4, 400_000, [2, 4, 6, 8, 10, 12], 1)
        for i in range(len(t.delays) - 1):
            slack = t.half_widths[i] + t.half_widths[i + 1]
            assert t.errors[i + 1] <= t.errors[i] + slack

    def test_fitted_slope_tracks_closed_form(self):
        t = sq.simulate_bec_feedback(0.4, 2_000_000, [6, 10, 14, 18], 0)
        fit = sq.fit_exponent(t)
        assert 0.34 <= fit.slope <= 0.47
        assert fit.r_squared > 0.99

    def test_level_frequencies_geometric(self):
        # Successive backlog-level frequencies decay like birth/death.
        freq = sq.queue_level_frequencies(0.4, 2_000_000, 0)
        target = 0.16 / 0.36
        for k in range(1, 6):
            assert freq[k + 1] / freq[k] == pytest.approx(target, rel=0.10)

    def test_delays_sorted_and_deduped(self):
        t = sq.simulate_bec_feedback(0.4, 100_000, [12, 4, 8, 4], 2)
        assert t.delays == (4, 8, 12)


class TestTable:
    def test_validation(self):
        with pytest.raises(DomainError):
            sq.DelayErrorTable((4, 2), (0.1, 0.2), (10, 10), (0.0, 0.0))
        with pytest.raises(DomainError):
            sq.DelayErrorTable((2, 4), (0.1, 1.5), (10, 10), (0.0, 0.0))
        with pytest.raises(DomainError):
            sq.DelayErrorTable((2, 4), (0.1, 0.2), (10, 0), (0.0, 0.0))
        with pytest.raises(DomainError):
            sq.DelayErrorTable((2, 4), (0.1,), (10, 10), (0.0, 0.0))

    def test_csv_roundtrip(self):
        t = sq.simulate_bec_feedback(0.4, 50_000, [2, 6], 9)
        text = t.to_csv()
        lines = text.strip().split("\n")
        assert lines[0] == "delay,error,trials,half_width"
        assert len(lines) == 3
        d, e, n, w = lines[1].split(",")
        assert int(d) == 2
        assert float(e) == pytest.approx(t.errors[0], rel=1e-9)
        assert int(n) == t.trials[0]
        assert float(w) == pytest.approx(t.half_widths[0], rel=1e-9)


class TestReplicas:
    def test_parallel_equals_sequential(self):
        seq = sq.run_replicas(0.4, 100_000, [4, 8, 12], 21, replicas=3)
        par = sq.run_replicas(0.4, 100_000, [4, 8, 12], 21, replicas=3, workers=3)
        assert seq == par

    def test_merge_pools_counts(self):
        seeds = sq.replica_seeds(21, 3)
        tables = [sq.simulate_bec_feedback(0.4, 100_000, [4, 8], s) for s in seeds]
        merged = sq.merge_tables(tables)
        assert merged.trials[0] == sum(t.trials[0] for t in tables)
        expected = sum(t.errors[0] * t.trials[0] for t in tables) / merged.trials[0]
        assert merged.errors[0] == pytest.approx(expected, rel=1e-12)

    def test_replica_seeds_distinct_and_stable(self):
        a = sq.replica_seeds(5, 4)
        assert a == sq.replica_seeds(5, 4)
        assert len(set(a)) == 4

    def test_mismatched_grids_rejected(self):
        a = sq.simulate_bec_feedback(0.4, 50_000, [2, 4], 1)
        b = sq.simulate_bec_feedback(0.4, 50_000, [2, 6], 1)
        with pytest.raises(DomainError):
            sq.merge_tables([a, b])


class TestFit:
    def test_exact_exponential(self):
        delays = (5, 10, 15, 20)
        errors = tuple(math.exp(-0.4 * d) for d in delays)
        t = sq.DelayErrorTable(delays, errors, (100,) * 4, (0.0,) * 4)
        fit = sq.fit_exponent(t)
        assert fit.slope == pytest.approx(0.4, rel=1e-9)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-9)
        assert fit.excluded_delays == ()

    def test_zero_rows_excluded_and_reported(self):
        delays = (5, 10, 15, 20)
        errors = (math.exp(-2.0), math.exp(-4.0), math.exp(-6.0), 0.0)
        t = sq.DelayErrorTable(delays, errors, (100,) * 4, (0.0,) * 4)
        fit = sq.fit_exponent(t)
        assert fit.excluded_delays == (20,)
        assert fit.slope == pytest.approx(0.4, rel=1e-9)

    def test_too_few_points(self):
        t = sq.DelayErrorTable((5, 10, 15), (0.1, 0.05, 0.0), (10,) * 3, (0.0,) * 3)
        with pytest.raises(sq.TooFewPointsError):
            sq.fit_exponent(t)

    def test_all_zero_errors(self):
        t = sq.DelayErrorTable((5, 10, 15), (0.0, 0.0, 0.0), (10,) * 3, (0.0,) * 3)
        with pytest.raises(sq.AllZeroErrorsError):
            sq.fit_exponent(t)
