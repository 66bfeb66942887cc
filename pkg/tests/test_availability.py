from collections import Counter
from datetime import datetime

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mdhg.availability import (
    StationSeries,
    StudyWindow,
    inferred_capacity,
    reconstruct_station,
    reversed_rank,
    station_events,
    surplus,
    zone_zeta,
)
from mdhg.ingest import RawTrip

from oracles import replay_hourly_mean


def series(sid, level, cap):
    return StationSeries(sid, cap, np.full(24, float(level)))


def test_three_events_in_one_hour():
    # arrivals at 10 and 20 minutes, departure at 40 minutes, starting empty
    s = reconstruct_station([600, 1200, 2400], [1, 1, -1], capacity=10, days=1, initial=0)
    expected = (0 * 600 + 1 * 600 + 2 * 1200 + 1 * 1200) / 3600
    assert s.hourly_available[0] == pytest.approx(expected, abs=1e-15)
    assert s.hourly_available[1] == 1.0


def test_counter_is_clamped_at_zero():
    s = reconstruct_station([0, 1800], [-1, 1], capacity=5, days=1, initial=0)
    # departure at an empty dock stays at 0, the later arrival lifts it to 1
    assert s.hourly_available[0] == pytest.approx(0.5)
    assert s.hourly_available.min() >= 0


def test_counter_is_clamped_at_capacity():
    s = reconstruct_station([0, 0, 0], [1, 1, 1], capacity=2, days=1, initial=2)
    assert np.all(s.hourly_available == 2)


def test_unclamped_replay_can_leave_range():
    s = reconstruct_station([0], [-1], capacity=4, days=1, initial=0, clamp=False)
    assert np.all(s.hourly_available == -1)


def test_no_events_is_flat_at_initial_level():
    s = reconstruct_station([], [], capacity=15, days=3)
    assert s.hourly_available.shape == (24,)
    assert np.all(s.hourly_available == 7)


def test_days_are_averaged():
    # one departure at 01:00 on day 0 and one arrival at 01:00 on day 1
    s = reconstruct_station([3600, 86400 + 3600], [-1, 1], capacity=4, days=2, initial=2)
    # day 0 hour 0 at 2, day 1 hour 0 still at 1
    assert s.hourly_available[0] == pytest.approx((2 + 1) / 2)
    assert s.hourly_available[1] == pytest.approx((1 + 2) / 2)
    assert s.hourly_available[5] == pytest.approx((1 + 2) / 2)


def test_events_outside_window_rejected():
    with pytest.raises(ValueError):
        reconstruct_station([86400], [1], capacity=3, days=1)
    with pytest.raises(ValueError):
        reconstruct_station([10, 5], [1, 1], capacity=3, days=1)


events = st.integers(1, 3).flatmap(lambda days: st.tuples(
    st.just(days),
    st.lists(st.tuples(st.integers(0, days * 86400 - 1), st.sampled_from([-1, 1])), max_size=100),
    st.integers(1, 12),
    st.integers(0, 12),
    st.booleans(),
))


@settings(max_examples=150, deadline=None)
@given(events)
def test_reconstruction_matches_replay_oracle(case):
    days, evs, cap, init, clamp = case
    evs = sorted(evs, key=lambda e: (e[0], -e[1]))
    init = min(init, cap)
    times = [t for t, _ in evs]
    deltas = [d for _, d in evs]
    got = reconstruct_station(times, deltas, cap, days, initial=init, clamp=clamp).hourly_available
    want = replay_hourly_mean(times, deltas, cap, init, days, clamp=clamp)
    assert np.allclose(got, want, rtol=0, atol=1e-12)
    if clamp:
        assert got.min() >= 0 and got.max() <= cap


def test_arrivals_precede_departures_at_equal_times():
    t0 = datetime(2018, 8, 1, 8)
    trips = [RawTrip(True, t0, datetime(2018, 8, 1, 8, 30), "A", "B", 0, 0, 0, 0),
             RawTrip(True, datetime(2018, 8, 1, 7, 30), t0, "C", "A", 0, 0, 0, 0)]
    ev = station_events(trips, StudyWindow(datetime(2018, 8, 1), 1))
    ts, ds = ev["A"]
    assert list(ts) == [8 * 3600, 8 * 3600] and list(ds) == [1, -1]


def test_study_window_covers_whole_days():
    w = StudyWindow.covering([datetime(2018, 8, 3, 5), datetime(2018, 8, 1, 23, 59)])
    assert w.start == datetime(2018, 8, 1) and w.days == 3


def test_inferred_capacity_is_swing():
    assert inferred_capacity([1, 1, -1, -1, -1]) == 3
    assert inferred_capacity([]) == 1


def test_zeta_single_station():
    za = zone_zeta({"Z": {"s"}}, {"s": series("s", 6, 10)})
    assert np.all(za.zeta == 0.6)


def test_zeta_two_stations():
    za = zone_zeta({"Z": {"a", "b"}}, {"a": series("a", 2, 10), "b": series("b", 8, 10)})
    assert np.all(za.zeta == 0.5)


def test_unserved_zone_has_no_zeta():
    za = zone_zeta({"Z": {"a"}, "Y": set()}, {"a": series("a", 2, 10)}, zone_ids=["Y", "Z"])
    assert list(za.served) == [False, True]
    assert np.isnan(za.zeta[0]).all() and np.isnan(za.z[0]).all()
    assert np.all(za.z[1] == 1.0)


def test_strict_mode_zeroes_out_of_range_totals():
    za = zone_zeta({"Z": {"a"}}, {"a": series("a", -1, 10)}, strict=True)
    assert np.all(za.available == 0)


def test_zone_availability_is_additive():
    rng = np.random.default_rng(4)
    a = StationSeries("a", 10, rng.uniform(0, 10, 24))
    b = StationSeries("b", 6, rng.uniform(0, 6, 24))
    joint = zone_zeta({"Z": {"a", "b"}}, {"a": a, "b": b})
    sa = zone_zeta({"Z": {"a"}}, {"a": a})
    sb = zone_zeta({"Z": {"b"}}, {"b": b})
    assert np.allclose(joint.available, sa.available + sb.available, atol=1e-12)
    assert np.array_equal(joint.capacity, sa.capacity + sb.capacity)


def test_reversed_rank_examples():
    assert np.allclose(reversed_rank([0.2, 0.5, 0.8]), [1.0, 2 / 3, 1 / 3])
    assert np.all(reversed_rank([0.4, 0.4, 0.4]) == 1.0)
    z = reversed_rank([0.9, 0.7, 0.3, 0.1])
    assert np.all(np.diff(z) > 0)
    with pytest.raises(ValueError):
        reversed_rank([])


@given(st.lists(st.floats(0, 1), min_size=1, max_size=40))
def test_reversed_rank_antitone(vals):
    z = reversed_rank(vals)
    v = np.asarray(vals)
    assert np.all((z > 0) & (z <= 1))
    for i in range(len(v)):
        for j in range(len(v)):
            if v[i] < v[j]:
                assert z[i] >= z[j]
            elif v[i] == v[j]:
                assert z[i] == z[j]


def _trip(start_id, end_id, hour):
    return RawTrip(True, datetime(2018, 8, 1, hour, 5), datetime(2018, 8, 1, hour, 25),
                   start_id, end_id, 0, 0, 0, 0)


def test_surplus_example():
    trips = [_trip("a", "x", 8), _trip("a", "x", 8), _trip("b", "x", 8), _trip("x", "a", 8)]
    df = surplus(trips, {"a": "P", "b": "P", "x": "Q"})
    row = df[(df.area_id == "P") & (df.hour == 8)].iloc[0]
    assert (row.supply, row.demand, row.surplus) == (1, 3, -2)


def test_surplus_internal_trips_balance_and_unmapped_tallied():
    trips = [_trip("a", "b", h) for h in range(0, 24, 3)] + [_trip("a", "zz", 5)]
    tally = Counter()
    df = surplus(trips, {"a": "P", "b": "P"}, tally)
    p = df[df.area_id == "P"]
    assert p.supply.sum() == p.demand.sum() - 1
    assert tally["unmapped_station"] == 1
    assert (df.surplus == df.supply - df.demand).all()
