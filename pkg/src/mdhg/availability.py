"""Station availability reconstruction and zone-level service availability.

A station's stock is replayed from trip endpoints: +1 for every arrival,
-1 for every departure. The replay is integrated exactly per hour of every
day in the study window and then averaged across days.
"""

from collections import Counter, defaultdict
from dataclasses import dataclass
from datetime import datetime, timedelta

import numpy as np
import pandas as pd

from ._validation import check_vector

HOURS = 24
SECONDS_PER_HOUR = 3600
ARRIVAL, DEPARTURE = 1, -1


@dataclass(frozen=True)
class StationSeries:
    station_id: str
    capacity: int
    hourly_available: np.ndarray  # shape (24,)


@dataclass(frozen=True)
class StudyWindow:
    """Whole days [start, start + days) over which hours are averaged."""

    start: datetime
    days: int

    @classmethod
    def covering(cls, times):
        first, last = min(times), max(times)
        start = datetime(first.year, first.month, first.day)
        end = datetime(last.year, last.month, last.day) + timedelta(days=1)
        return cls(start, (end - start).days)

    @property
    def end(self):
        return self.start + timedelta(days=self.days)

    def seconds(self, t):
        return int((t - self.start).total_seconds())


def station_events(trips, window):
    """station id -> (event seconds from window start, +1/-1 deltas), time-sorted.

    At equal timestamps arrivals are ordered before departures.
    """
    times, deltas = defaultdict(list), defaultdict(list)
    for t in trips:
        times[t.start_station_id].append(window.seconds(t.start_time))
        deltas[t.start_station_id].append(DEPARTURE)
        times[t.end_station_id].append(window.seconds(t.end_time))
        deltas[t.end_station_id].append(ARRIVAL)
    out = {}
    for sid in times:
        ts = np.asarray(times[sid], dtype=np.int64)
        ds = np.asarray(deltas[sid], dtype=np.int64)
        order = np.lexsort((-ds, ts))
        out[sid] = (ts[order], ds[order])
    return out


def station_locations(trips):
    """station id -> (lon, lat), the median of every reported coordinate."""
    seen = defaultdict(list)
    for t in trips:
        seen[t.start_station_id].append((t.start_lon, t.start_lat))
        seen[t.end_station_id].append((t.end_lon, t.end_lat))
    return {sid: tuple(np.median(np.asarray(v), axis=0)) for sid, v in seen.items()}


def inferred_capacity(deltas):
    """Smallest dock count that can hold the observed net-flow swing."""
    path = np.concatenate(([0], np.cumsum(deltas)))
    return max(int(path.max() - path.min()), 1)


def initial_level(capacity, fill=0.5):
    return int(np.floor(capacity * fill))


def replay_levels(deltas, capacity, initial, clamp=True):
    """Stock level after each event; saturates at [0, capacity] when clamping."""
    levels = np.empty(len(deltas), dtype=np.int64)
    level = int(initial)
    if clamp:
        for i, d in enumerate(deltas):
            level += int(d)
            if level < 0:
                level = 0
            elif level > capacity:
                level = capacity
            levels[i] = level
    else:
        levels[:] = initial + np.cumsum(deltas)
    return levels


def hourly_level_seconds(times, levels, initial, n_hours):
    """Integral of the step function (level x seconds) over each hour bin.

    Exact integer arithmetic: the level is `initial` before the first event and
    ``levels[j]`` from ``times[j]`` onward.
    """
    bp = np.concatenate(([0], np.asarray(times, dtype=np.int64)))
    vals = np.concatenate(([int(initial)], np.asarray(levels, dtype=np.int64)))
    cum = np.concatenate(([0], np.cumsum(vals[:-1] * np.diff(bp))))
    edges = np.arange(n_hours + 1, dtype=np.int64) * SECONDS_PER_HOUR
    j = np.searchsorted(bp, edges, side="right") - 1
    area_at = cum[j] + vals[j] * (edges - bp[j])
    return np.diff(area_at)


def reconstruct_station(times, deltas, capacity, days, station_id="", initial=None, fill=0.5, clamp=True):
    """Mean available vehicles for each hour of the day over `days` days.

    `times` are integer seconds from the window start (ascending, within the
    window) and `deltas` are +1 arrivals / -1 departures.
    """
    times = np.asarray(times, dtype=np.int64)
    deltas = np.asarray(deltas, dtype=np.int64)
    if len(times) != len(deltas):
        raise ValueError("times and deltas differ in length")
    if days < 1:
        raise ValueError("study window must span at least one day")
    if len(times) and (np.any(np.diff(times) < 0) or times[0] < 0 or times[-1] >= days * 86400):
        raise ValueError("events must be time-sorted and inside the study window")
    if initial is None:
        initial = initial_level(capacity, fill)
    if clamp:
        initial = min(max(int(initial), 0), int(capacity))
    levels = replay_levels(deltas, capacity, initial, clamp=clamp)
    per_hour = hourly_level_seconds(times, levels, initial, days * HOURS)
    totals = per_hour.reshape(days, HOURS).sum(axis=0)
    return StationSeries(station_id, int(capacity), totals / float(SECONDS_PER_HOUR * days))


def reconstruct_stations(trips, window, capacities=None, fill=0.5, clamp=True):
    """StationSeries for every station seen in `trips`."""
    capacities = capacities or {}
    out = {}
    for sid, (ts, ds) in sorted(station_events(trips, window).items()):
        cap = capacities.get(sid) or inferred_capacity(ds)
        out[sid] = reconstruct_station(ts, ds, cap, window.days, station_id=sid, fill=fill, clamp=clamp)
    return out


@dataclass
class ZoneAvailability:
    """Per-zone hourly available vehicles (A), dock capacity (C) and ratio."""

    zone_ids: tuple
    available: np.ndarray  # (Z, 24)
    capacity: np.ndarray  # (Z,)
    zeta: np.ndarray  # (Z, 24), NaN where unserved
    z: np.ndarray  # (Z, 24), NaN where unserved

    @property
    def served(self):
        return self.capacity > 0

    def to_frame(self):
        rows = []
        for i, zid in enumerate(self.zone_ids):
            for h in range(HOURS):
                rows.append((zid, h, self.available[i, h], self.capacity[i], self.zeta[i, h], self.z[i, h]))
        return pd.DataFrame(rows, columns=["zone_id", "hour", "A", "C", "zeta", "z"])


def zone_zeta(join, stations, zone_ids=None, strict=False):
    """Aggregate station series over each zone's joined stations.

    ``join`` maps zone id -> station ids. Zones with no joined capacity are
    unserved and carry NaN. With ``strict`` the hourly totals outside
    [0, C] are set to 0 instead of relying on counter clamping.
    """
    zone_ids = tuple(zone_ids if zone_ids is not None else sorted(join))
    Z = len(zone_ids)
    A = np.zeros((Z, HOURS))
    C = np.zeros(Z)
    for i, zid in enumerate(zone_ids):
        for sid in sorted(join.get(zid, ())):
            s = stations[sid]
            A[i] += s.hourly_available
            C[i] += s.capacity
    served = C > 0
    if strict:
        A = np.where((A < 0) | (A > C[:, None]), 0.0, A)
    zeta = np.full((Z, HOURS), np.nan)
    zeta[served] = A[served] / C[served, None]
    return ZoneAvailability(zone_ids, A, C, zeta, performance_rank(zeta))


def reversed_rank(values):
    """Share of values at or above each value; NaN entries are left out.

    Low availability maps to a high rank, ties share their rank.
    """
    v = check_vector(values, allow_nan=True)
    ok = ~np.isnan(v)
    if not ok.any():
        raise ValueError("reversed_rank needs at least one finite value")
    ref = np.sort(v[ok])
    out = np.full(v.shape, np.nan)
    out[ok] = (len(ref) - np.searchsorted(ref, v[ok], side="left")) / len(ref)
    return out


def performance_rank(zeta):
    """Column-wise (per hour) reversed rank of a zones x hours matrix."""
    z = np.full(zeta.shape, np.nan)
    for h in range(zeta.shape[1]):
        col = zeta[:, h]
        if np.isfinite(col).any():
            z[:, h] = reversed_rank(col)
    return z


def surplus(trips, membership, tally=None):
    """Hour-of-day arrivals (supply), departures (demand) and their difference per area.

    `membership` maps station id -> area id. Endpoints at unmapped stations are
    counted in `tally` under ``unmapped_station`` and skipped.
    """
    tally = Counter() if tally is None else tally
    supply = Counter()
    demand = Counter()
    for t in trips:
        a = membership.get(t.start_station_id)
        if a is None:
            tally["unmapped_station"] += 1
        else:
            demand[a, t.start_time.hour] += 1
        b = membership.get(t.end_station_id)
        if b is None:
            tally["unmapped_station"] += 1
        else:
            supply[b, t.end_time.hour] += 1
    areas = sorted(set(membership.values()))
    rows = [
        (a, h, supply[a, h], demand[a, h], supply[a, h] - demand[a, h])
        for a in areas
        for h in range(HOURS)
    ]
    return pd.DataFrame(rows, columns=["area_id", "hour", "supply", "demand", "surplus"])
