"""Readers for trip dumps, boundary files, activity zoning and population tables."""

import configparser
import csv
import io
import json
import logging
from collections import Counter
from dataclasses import dataclass, fields
from datetime import datetime
from importlib import resources
from pathlib import Path

import numpy as np
import pandas as pd
import shapely
from shapely.geometry import shape

from .exceptions import ConfigError, GeometryError, InputError, OutOfBoundsError, PopulationError

log = logging.getLogger(__name__)

SEMANTIC_FIELDS = (
    "member",
    "start_time",
    "end_time",
    "start_station_id",
    "end_station_id",
    "start_lat",
    "start_lon",
    "end_lat",
    "end_lon",
)

MIN_DURATION_S = 60
MAX_DURATION_S = 4 * 3600
MAX_SPEED_M_PER_MIN = 650.0


@dataclass(frozen=True)
class ColumnMap:
    """Maps semantic trip fields onto the header names of one vendor layout."""

    columns: dict
    time_format: str = "iso"
    member_values: frozenset = frozenset({"member"})
    delimiter: str = ","

    def __post_init__(self):
        missing = [f for f in SEMANTIC_FIELDS if f not in self.columns]
        extra = [f for f in self.columns if f not in SEMANTIC_FIELDS]
        if missing or extra:
            raise ConfigError(f"column map must map exactly {SEMANTIC_FIELDS}; missing={missing} unknown={extra}")
        headers = list(self.columns.values())
        dupes = sorted({h for h in headers if headers.count(h) > 1})
        if dupes:
            raise ConfigError(f"column map reuses source headers {dupes}")

    @classmethod
    def from_file(cls, path):
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except FileNotFoundError:
            raise ConfigError(f"column map not found: {path}") from None
        return cls._from_parser(parser, str(path))

    @classmethod
    def preset(cls, name):
        res = resources.files("mdhg") / "presets" / f"{name}.ini"
        if not res.is_file():
            raise ConfigError(f"unknown column map preset {name!r}; available: {available_presets()}")
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        parser.read_string(res.read_text(encoding="utf-8"))
        return cls._from_parser(parser, name)

    @classmethod
    def load(cls, name_or_path):
        """Preset name (e.g. ``citibike-2018``) or path to an .ini file."""
        if Path(name_or_path).suffix == ".ini" or Path(name_or_path).exists():
            return cls.from_file(name_or_path)
        return cls.preset(name_or_path)

    @classmethod
    def _from_parser(cls, parser, origin):
        if not parser.has_section("columns"):
            raise ConfigError(f"{origin}: missing [columns] section")
        fmt = parser["format"] if parser.has_section("format") else {}
        members = fmt.get("member_values", "member")
        delimiter = fmt.get("delimiter", ",")
        if delimiter in ("\\t", "tab"):
            delimiter = "\t"
        return cls(
            columns=dict(parser["columns"]),
            time_format=fmt.get("time_format", "iso"),
            member_values=frozenset(v.strip() for v in members.split("|")),
            delimiter=delimiter,
        )


def available_presets():
    root = resources.files("mdhg") / "presets"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".ini"))


@dataclass(frozen=True, slots=True)
class RawTrip:
    member: bool
    start_time: datetime
    end_time: datetime
    start_station_id: str
    end_station_id: str
    start_lat: float
    start_lon: float
    end_lat: float
    end_lon: float


@dataclass(frozen=True, slots=True)
class TripRecord(RawTrip):
    duration: float
    euclidean_distance: float
    speed: float

    def raw(self):
        return RawTrip(*(getattr(self, f.name) for f in fields(RawTrip)))


def _timestamp_parser(time_format):
    if time_format == "iso":
        def parse(text):
            text = text.strip()
            if len(text) < 19:
                raise ValueError(text)
            # sub-second digits vary between dumps; second resolution is enough
            return datetime.fromisoformat(text[:19])
        return parse

    def parse(text):
        return datetime.strptime(text.strip(), time_format).replace(microsecond=0)

    return parse


def _open_text(source):
    if isinstance(source, (str, Path)):
        return open(source, encoding="utf-8-sig", newline=""), True
    if isinstance(source, io.TextIOBase):
        return source, False
    return io.TextIOWrapper(source, encoding="utf-8-sig", newline=""), False


def parse_trips(source, column_map, tally=None):
    """Yield a RawTrip for every well-formed row of a delimited trip dump.

    Malformed rows are skipped and counted in `tally` (a Counter) under
    ``skipped:<reason>``; every row read increments ``rows``.
    """
    tally = Counter() if tally is None else tally
    fh, owned = _open_text(source)
    try:
        reader = csv.reader(fh, delimiter=column_map.delimiter)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise InputError("trip file is empty (no header row)") from None
        pos = {}
        for field_name, col in column_map.columns.items():
            if col not in header:
                raise ConfigError(f"trip header lacks mapped column {col!r} (for {field_name})")
            pos[field_name] = header.index(col)
        width = max(pos.values()) + 1
        parse_ts = _timestamp_parser(column_map.time_format)
        members = column_map.member_values
        i_member, i_st, i_et = pos["member"], pos["start_time"], pos["end_time"]
        i_ss, i_es = pos["start_station_id"], pos["end_station_id"]
        i_coords = [pos[k] for k in ("start_lat", "start_lon", "end_lat", "end_lon")]

        for row in reader:
            if not row:
                continue
            tally["rows"] += 1
            if len(row) < width:
                tally["skipped:short_row"] += 1
                continue
            start_id, end_id = row[i_ss].strip(), row[i_es].strip()
            if not start_id or not end_id or start_id == "NULL" or end_id == "NULL":
                tally["skipped:missing_station"] += 1
                continue
            try:
                start, end = parse_ts(row[i_st]), parse_ts(row[i_et])
            except ValueError:
                tally["skipped:bad_timestamp"] += 1
                continue
            try:
                slat, slon, elat, elon = (float(row[i]) for i in i_coords)
            except ValueError:
                tally["skipped:missing_coordinates"] += 1
                continue
            if not all(np.isfinite((slat, slon, elat, elon))):
                tally["skipped:missing_coordinates"] += 1
                continue
            yield RawTrip(
                row[i_member].strip() in members, start, end, start_id, end_id, slat, slon, elat, elon
            )
    finally:
        if owned:
            fh.close()


def _is_member(t):
    return t.member


def _duration_ok(t):
    return MIN_DURATION_S < t.duration < MAX_DURATION_S


def _speed_ok(t):
    return t.speed < MAX_SPEED_M_PER_MIN


def _same_date(t):
    return t.start_time.date() == t.end_time.date()


TRIP_FILTERS = (
    ("not_member", _is_member),
    ("duration", _duration_ok),
    ("speed", _speed_ok),
    ("date_change", _same_date),
)


def measure_trip(trip, projection):
    """Attach duration (s), planar distance (m) and speed (m/min) to a trip."""
    a = projection.project(trip.start_lon, trip.start_lat)
    b = projection.project(trip.end_lon, trip.end_lat)
    distance = float(np.hypot(b.x - a.x, b.y - a.y))
    duration = (trip.end_time - trip.start_time).total_seconds()
    speed = distance / (duration / 60.0) if duration > 0 else float("inf")
    base = trip.raw() if isinstance(trip, TripRecord) else trip
    return TripRecord(*(getattr(base, f.name) for f in fields(RawTrip)), duration, distance, speed)


def clean_trips(trips, projection, tally=None, filters=TRIP_FILTERS):
    """Yield the trips that pass every filter, as TripRecords.

    Rejections are counted in `tally` as ``rejected:<first failing filter>``;
    accepted trips as ``accepted``.
    """
    tally = Counter() if tally is None else tally
    for trip in trips:
        try:
            rec = measure_trip(trip, projection)
        except OutOfBoundsError:
            tally["rejected:out_of_bounds"] += 1
            continue
        for reason, ok in filters:
            if not ok(rec):
                tally[f"rejected:{reason}"] += 1
                break
        else:
            tally["accepted"] += 1
            yield rec


def read_trips(paths, column_map, projection, tally=None):
    """Parse and clean one or more dumps into a list of TripRecords."""
    tally = Counter() if tally is None else tally
    if isinstance(paths, (str, Path)):
        paths = [paths]
    out = []
    for p in paths:
        if not Path(p).exists():
            raise InputError(f"trip file not found: {p}")
        out.extend(clean_trips(parse_trips(p, column_map, tally), projection, tally))
    return out


@dataclass(frozen=True)
class ZoneGeometry:
    zone_id: str
    parent_id: str
    geometry: shapely.Geometry  # lon/lat (Multi)Polygon


def _read_features(source):
    try:
        with open(source, encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise InputError(f"geo-file not found: {source}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{source}: not valid GeoJSON ({exc})") from None
    if doc.get("type") == "Feature":
        return [doc]
    if doc.get("type") != "FeatureCollection":
        raise InputError(f"{source}: expected a GeoJSON FeatureCollection")
    return doc.get("features", [])


def _polygonal(feature, idx, source):
    geom = feature.get("geometry")
    kind = (geom or {}).get("type")
    if kind not in ("Polygon", "MultiPolygon"):
        raise GeometryError(f"{source}: feature {idx} is not a polygon (geometry type {kind})")
    # shapely closes open rings on construction
    return shape(geom)


def load_zones(source, zone_key="zone_id", parent_key="parent_id"):
    """Read analysis zones (tracts) from a GeoJSON file."""
    zones, seen = [], set()
    for idx, feat in enumerate(_read_features(source)):
        geom = _polygonal(feat, idx, source)
        props = feat.get("properties") or {}
        for key in (zone_key, parent_key):
            if props.get(key) in (None, ""):
                raise InputError(f"{source}: feature {idx} lacks property {key!r}")
        zid = str(props[zone_key])
        if zid in seen:
            raise InputError(f"{source}: duplicate zone_id {zid!r}")
        seen.add(zid)
        zones.append(ZoneGeometry(zid, str(props[parent_key]), geom))
    return zones


COMMUTE = "commute"
RECREATIONAL = "recreational"
CATEGORIES = (COMMUTE, RECREATIONAL)

# zoning kind -> categories it feeds
CATEGORY_KINDS = {
    COMMUTE: frozenset({"commercial", "manufacturing"}),
    RECREATIONAL: frozenset({"commercial", "park"}),
}

DEFAULT_TAG_RULES = (("PARK", "park"), ("C", "commercial"), ("M", "manufacturing"))


def zoning_kind(tag, rules=DEFAULT_TAG_RULES):
    """Zoning kind for a district tag such as ``C4-4`` or ``PARK``; None if unused."""
    tag = str(tag).strip().upper()
    for prefix, kind in rules:
        if tag.startswith(prefix):
            return kind
    return None


@dataclass(frozen=True)
class ActivityZoneSet:
    category: str
    polygons: tuple  # lon/lat polygons
    tags: tuple


def load_activity_zones(source, tag_key="zonedist", rules=DEFAULT_TAG_RULES):
    """Split zoning polygons into commute and recreational activity sets."""
    buckets = {c: ([], []) for c in CATEGORIES}
    for idx, feat in enumerate(_read_features(source)):
        props = feat.get("properties") or {}
        if tag_key not in props:
            raise InputError(f"{source}: feature {idx} lacks property {tag_key!r}")
        kind = zoning_kind(props[tag_key], rules)
        if kind is None:
            continue
        geom = _polygonal(feat, idx, source)
        for cat, kinds in CATEGORY_KINDS.items():
            if kind in kinds:
                buckets[cat][0].append(geom)
                buckets[cat][1].append(str(props[tag_key]))
    return {c: ActivityZoneSet(c, tuple(p), tuple(t)) for c, (p, t) in buckets.items()}


@dataclass
class PopulationTable:
    """Person rows with their household attributes joined on."""

    frame: pd.DataFrame
    zone_column: str = "zone_id"

    def zone_counts(self, zones=None):
        counts = self.frame.groupby(self.zone_column).size()
        counts.index = counts.index.astype(str)
        if zones is not None:
            counts = counts.reindex(list(zones), fill_value=0)
        return counts.astype(int)


def _read_table(source, what):
    try:
        return pd.read_csv(source, dtype=str, keep_default_na=False)
    except FileNotFoundError:
        raise InputError(f"{what} table not found: {source}") from None


def load_population(persons, households, household_key="household_id", zone_column="zone_id"):
    """Join person rows to household rows on the shared household key."""
    p = persons if isinstance(persons, pd.DataFrame) else _read_table(persons, "persons")
    h = households if isinstance(households, pd.DataFrame) else _read_table(households, "households")
    for name, df in (("persons", p), ("households", h)):
        if household_key not in df.columns:
            raise PopulationError(f"{name} table lacks household key column {household_key!r}")
    if h[household_key].duplicated().any():
        raise PopulationError("household table has duplicate household keys")
    orphans = int((~p[household_key].isin(h[household_key])).sum())
    if orphans:
        raise PopulationError(f"{orphans} person row(s) reference unknown households")
    overlap = [c for c in h.columns if c in p.columns and c != household_key]
    joined = p.merge(h.drop(columns=overlap), on=household_key, how="left", validate="many_to_one")
    if zone_column not in joined.columns:
        raise PopulationError(f"neither table carries the zone column {zone_column!r}")
    joined[zone_column] = joined[zone_column].astype(str)
    return PopulationTable(joined, zone_column)


def load_capacity_table(source):
    """station_id -> dock count."""
    df = _read_table(source, "capacity")
    if not {"station_id", "capacity"} <= set(df.columns):
        raise InputError(f"{source}: capacity table needs columns station_id, capacity")
    try:
        caps = df["capacity"].astype(float)
    except ValueError:
        raise InputError(f"{source}: non-numeric capacity") from None
    if (caps <= 0).any():
        raise InputError(f"{source}: capacities must be positive")
    return dict(zip(df["station_id"].str.strip(), caps.astype(int)))
