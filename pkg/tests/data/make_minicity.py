"""Regenerate the committed mini-city fixture: ``python tests/data/make_minicity.py``.

Nine 2 km square tracts in a 3x3 grid, grouped by row into three parent
areas. Five stations; the fifth only exists in the "after" period. Tract Z21
is therefore unserved before and served after, and tract Z22 is never within
500 m of any station.
"""

import csv
import json
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np
from shapely.geometry import box, mapping

from mdhg.geometry import Projection

HERE = Path(__file__).parent / "minicity"
PROJ = Projection(-73.95, 40.70, (-74.2, 40.5, -73.7, 40.9))
SIDE = 2000.0

STATIONS = {  # id -> planar (x, y), capacity
    "S1": ((2000.0, 2000.0), 15),
    "S2": ((5000.0, 3000.0), 10),
    "S3": ((2000.0, 4000.0), 12),
    "S4": ((5000.0, 1000.0), 8),
    "S5": ((3000.0, 3000.0), 10),
}
PERIOD_STATIONS = {"before": ["S1", "S3", "S4", "S5"], "after": ["S1", "S2", "S3", "S4", "S5"]}
PERIOD_START = {"before": datetime(2018, 8, 6), "after": datetime(2024, 4, 8)}
N_DAYS = 3
N_ROWS = 200

ZONING = [
    ("C4-4", (1500, 1500, 3500, 2500)),
    ("M1-1", (4200, 200, 5800, 1800)),
    ("PARK", (500, 4500, 1500, 5500)),
    ("R6", (0, 5800, 6000, 6000)),
    ("C2-1", (2500, 4200, 3500, 4800)),
    ("M2-1", (300, 300, 1200, 900)),
]


def lonlat(geom):
    return PROJ.unproject_geometry(geom)


def write_geojson(path, feats):
    doc = {"type": "FeatureCollection", "features": feats}
    path.write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def zones():
    feats = []
    for r in range(3):
        for c in range(3):
            poly = box(c * SIDE, r * SIDE, (c + 1) * SIDE, (r + 1) * SIDE)
            feats.append({
                "type": "Feature",
                "properties": {"zone_id": f"Z{c}{r}", "parent_id": f"P{r}"},
                "geometry": mapping(lonlat(poly)),
            })
    write_geojson(HERE / "zones.geojson", feats)


def zoning():
    feats = [
        {"type": "Feature", "properties": {"zonedist": tag}, "geometry": mapping(lonlat(box(*b)))}
        for tag, b in ZONING
    ]
    write_geojson(HERE / "zoning.geojson", feats)


def station_lonlat(sid):
    (x, y), _ = STATIONS[sid]
    return PROJ.unproject(x, y)


def trips(period, rng):
    ids = PERIOD_STATIONS[period]
    start = PERIOD_START[period]
    # morning outflow from S1/S5, evening return, so availability varies by hour
    hour_w = np.ones(24)
    hour_w[6:10] += 4
    hour_w[16:20] += 4
    hour_w[:5] *= 0.3
    hour_w /= hour_w.sum()
    rows = []
    for _ in range(N_ROWS):
        day = int(rng.integers(N_DAYS))
        hour = int(rng.choice(24, p=hour_w))
        t0 = start + timedelta(days=day, hours=hour, seconds=int(rng.integers(3600)))
        if hour < 12:
            o = str(rng.choice(["S1", "S5", "S1", "S3"] if "S2" not in ids else ["S1", "S5", "S2"]))
            d = str(rng.choice(ids))
        else:
            o = str(rng.choice(ids))
            d = str(rng.choice(["S1", "S5", "S4"]))
        (xo, yo), _ = STATIONS[o]
        (xd, yd), _ = STATIONS[d]
        dist = float(np.hypot(xd - xo, yd - yo))
        speed = float(rng.uniform(120, 300))
        secs = max(int(dist / speed * 60), int(rng.integers(240, 900)))
        t1 = t0 + timedelta(seconds=secs)
        if t1.date() != t0.date():
            t1 = t0.replace(hour=23, minute=59, second=0)
            t0 = t1 - timedelta(seconds=secs) if secs < 3000 else t1 - timedelta(seconds=600)
        rows.append(dict(member=True, t0=t0, t1=t1, o=o, d=d))
    # rows that the cleaning filters must drop
    bad = [
        dict(member=False), dict(member=False), dict(member=False),
        dict(secs=30), dict(secs=45),
        dict(overnight=True), dict(overnight=True),
        dict(fast=True), dict(fast=True),
    ]
    for i, b in enumerate(bad):
        r = rows[i * 7]
        if "member" in b:
            r["member"] = False
        if "secs" in b:
            r["d"] = r["o"]
            r["t1"] = r["t0"] + timedelta(seconds=b["secs"])
        if "overnight" in b:
            r["t0"] = r["t0"].replace(hour=23, minute=50)
            r["t1"] = r["t0"] + timedelta(minutes=20)
        if "fast" in b:
            r["o"], r["d"] = "S4", "S3"
            r["t1"] = r["t0"] + timedelta(minutes=5)
    rows[3]["d"] = ""  # missing end station -> skipped
    rows[5]["t0"] = "not-a-time"
    return rows


def fmt_time(t, period):
    if isinstance(t, str):
        return t
    ms = 123
    return t.strftime("%Y-%m-%d %H:%M:%S") + (f".{ms:03d}0" if period == "before" else f".{ms:03d}")


def write_trips(period, rows):
    if period == "before":
        header = ["tripduration", "starttime", "stoptime", "start station id", "start station name",
                  "start station latitude", "start station longitude", "end station id",
                  "end station name", "end station latitude", "end station longitude", "bikeid",
                  "usertype", "birth year", "gender"]
        path = HERE / "trips_2018-08.csv"
    else:
        header = ["ride_id", "rideable_type", "started_at", "ended_at", "start_station_name",
                  "start_station_id", "end_station_name", "end_station_id", "start_lat", "start_lng",
                  "end_lat", "end_lng", "member_casual"]
        path = HERE / "trips_2024-04.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, r in enumerate(rows):
            o_lon, o_lat = station_lonlat(r["o"])
            d_lon, d_lat = station_lonlat(r["d"]) if r["d"] else ("", "")
            t0, t1 = fmt_time(r["t0"], period), fmt_time(r["t1"], period)
            if period == "before":
                dur = 0 if isinstance(r["t0"], str) else int((r["t1"] - r["t0"]).total_seconds())
                w.writerow([dur, t0, t1, r["o"], f"{r['o']} Ave", f"{o_lat:.10f}", f"{o_lon:.10f}",
                            r["d"], f"{r['d']} Ave", d_lat if d_lat == "" else f"{d_lat:.10f}",
                            d_lon if d_lon == "" else f"{d_lon:.10f}", 30000 + i,
                            "Subscriber" if r["member"] else "Customer", 1980, 1])
            else:
                w.writerow([f"R{i:05d}", "classic_bike", t0, t1, f"{r['o']} Ave", r["o"],
                            f"{r['d']} Ave", r["d"], f"{o_lat:.10f}", f"{o_lon:.10f}",
                            d_lat if d_lat == "" else f"{d_lat:.10f}",
                            d_lon if d_lon == "" else f"{d_lon:.10f}",
                            "member" if r["member"] else "casual"])


def population(rng):
    hh_rows, p_rows = [], []
    pid = 0
    for r in range(3):
        for c in range(3):
            zid = f"Z{c}{r}"
            # poorer, more diverse tracts toward the east
            tilt = c / 2.0
            for h in range(int(rng.integers(6, 14))):
                hid = f"H{zid}{h:02d}"
                size = int(rng.integers(1, 5))
                income = float(rng.normal(60000 - 30000 * tilt, 12000))
                vehicles = int(rng.random() > 0.3 + 0.5 * tilt)
                hh_rows.append([hid, zid, max(round(income), 0), size, vehicles])
                for _ in range(size):
                    race = "white" if rng.random() > 0.3 + 0.5 * tilt else str(rng.choice(["black", "asian", "hispanic"]))
                    le = int(rng.random() < 0.1 + 0.4 * tilt)
                    emp = "unemployed" if rng.random() < 0.05 + 0.2 * tilt else "employed"
                    p_rows.append([f"P{pid:04d}", hid, race, le, emp])
                    pid += 1
    with open(HERE / "households.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["household_id", "zone_id", "income", "family_size", "vehicles"])
        w.writerows(hh_rows)
    with open(HERE / "persons.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["person_id", "household_id", "race", "limited_english", "employment"])
        w.writerows(p_rows)
    with open(HERE / "poverty.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["family_size", "threshold"])
        for s, t in [(1, 20000), (2, 27000), (3, 33000), (4, 40000), (5, 46000), (6, 52000)]:
            w.writerow([s, t])


def capacity():
    with open(HERE / "capacity.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["station_id", "capacity"])
        for sid, (_, cap) in STATIONS.items():
            w.writerow([sid, cap])


CONFIG = """\
# Mini-city fixture run configuration.
zones: zones.geojson
activity_zones: zoning.geojson
population:
  persons: persons.csv
  households: households.csv
poverty_table: poverty.csv
capacity: capacity.csv
output_dir: out
projection:
  ref_lon: -73.95
  ref_lat: 40.70
  bbox: [-74.2, 40.5, -73.7, 40.9]
periods:
  before:
    trips: [trips_2018-08.csv]
    column_map: citibike-2018
  after:
    trips: [trips_2024-04.csv]
    column_map: citibike-2024
params:
  service_radius: 500
  reach_radius: 2600
  threshold_range: [0.3, 0.8]
  threshold_step: 0.1
"""


def main():
    HERE.mkdir(exist_ok=True)
    rng = np.random.default_rng(20240408)
    zones()
    zoning()
    for period in ("before", "after"):
        write_trips(period, trips(period, rng))
    population(rng)
    capacity()
    (HERE / "run.yaml").write_text(CONFIG, encoding="utf-8")


if __name__ == "__main__":
    main()
