"""Metric layers: GeoJSON and delimited-table export, import and period diffs."""

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from shapely.geometry import mapping

from .exceptions import InputError

HOURS = 24
HOUR_KEYS = tuple(f"value_h{h:02d}" for h in range(HOURS))

# +1: larger is better; -1: larger is worse
POLARITY = {
    "zeta": 1,
    "z": -1,
    "d_sp": -1,
    "i_access": -1,
    "zi_access": -1,
    "sr": -1,
    "sr_band": -1,
}


def fmt(v):
    """Nine significant digits; empty for missing."""
    if v is None or (isinstance(v, float) and np.isnan(v)):
        return ""
    return f"{float(v):.9g}"


@dataclass
class MetricLayer:
    """A named per-zone scalar field, optionally with one value per hour.

    Zones in ``never_served`` carry no values. ``no_service`` zones may carry a
    fixed value (D_sp assigns them 1) or none.
    """

    name: str
    values: dict  # zone id -> float, or length-24 array when hourly
    period: str = ""
    category: str = ""
    hourly: bool = False
    no_service: frozenset = field(default_factory=frozenset)
    never_served: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        self.no_service = frozenset(self.no_service)
        self.never_served = frozenset(self.never_served)
        both = self.no_service & self.never_served
        if both:
            raise ValueError(f"zones marked both no_service and never_served: {sorted(both)}")
        clash = self.never_served & set(self.values)
        if clash:
            raise ValueError(f"never-served zones must not carry values: {sorted(clash)}")

    @property
    def zone_ids(self):
        return sorted(set(self.values) | self.no_service | self.never_served)

    @property
    def metric(self):
        return self.name.split("__")[0]

    def value_columns(self):
        return list(HOUR_KEYS) if self.hourly else ["value"]

    def row(self, zid):
        vals = self.values.get(zid)
        if vals is None:
            cells = [None] * len(self.value_columns())
        elif self.hourly:
            cells = [float(v) for v in vals]
        else:
            cells = [float(vals)]
        return cells, zid in self.no_service, zid in self.never_served


def export_layer(layer, path, fmt_name=None, zones=None):
    """Write a layer as GeoJSON (``.geojson``) or a delimited table (``.csv``).

    `zones` maps zone id -> lon/lat geometry and is required for GeoJSON.
    """
    path = Path(path)
    fmt_name = fmt_name or ("geojson" if path.suffix in (".geojson", ".json") else "table")
    if fmt_name == "geojson":
        if zones is None:
            raise ValueError("zone geometries are required for GeoJSON export")
        unknown = [z for z in layer.zone_ids if z not in zones]
        if unknown:
            raise InputError(f"layer {layer.name!r} references unknown zones {unknown[:5]}")
        _write_geojson(layer, path, zones)
    elif fmt_name == "table":
        if zones is not None:
            unknown = [z for z in layer.zone_ids if z not in zones]
            if unknown:
                raise InputError(f"layer {layer.name!r} references unknown zones {unknown[:5]}")
        _write_table(layer, path)
    else:
        raise ValueError(f"unknown layer format {fmt_name!r}")
    return path


def _write_table(layer, path):
    cols = layer.value_columns()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["zone_id", *cols, "no_service", "never_served"])
        for zid in layer.zone_ids:
            cells, ns, nv = layer.row(zid)
            w.writerow([zid, *(fmt(c) for c in cells), str(ns).lower(), str(nv).lower()])


def _json_number(v):
    return None if v is None else float(fmt(v))


def _write_geojson(layer, path, zones):
    cols = layer.value_columns()
    feats = []
    for zid in layer.zone_ids:
        cells, ns, nv = layer.row(zid)
        props = {"zone_id": zid}
        if not nv:
            props.update({c: _json_number(v) for c, v in zip(cols, cells)})
        props["no_service"] = ns
        props["never_served"] = nv
        feats.append({"type": "Feature", "properties": props, "geometry": mapping(zones[zid])})
    doc = {
        "type": "FeatureCollection",
        "name": layer.name,
        "period": layer.period,
        "category": layer.category,
        "features": feats,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, separators=(",", ":"), sort_keys=False)
        fh.write("\n")


def _flag(text):
    return str(text).strip().lower() in ("true", "1")


def read_layer(path, name=None, period="", category=""):
    """Read a layer written by :func:`export_layer` (table or GeoJSON)."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"layer file not found: {path}")
    if path.suffix in (".geojson", ".json"):
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        rows = [f["properties"] for f in doc["features"]]
        name = name or doc.get("name") or path.stem
        period = period or doc.get("period", "")
        category = category or doc.get("category", "")
    else:
        rows = pd.read_csv(path, dtype=str, keep_default_na=False).to_dict("records")
        name = name or path.stem
    if not rows:
        return MetricLayer(name, {}, period, category)
    hourly = HOUR_KEYS[0] in rows[0]
    cols = list(HOUR_KEYS) if hourly else ["value"]
    values, ns, nv = {}, set(), set()
    for r in rows:
        zid = str(r["zone_id"])
        if _flag(r.get("never_served", False)):
            nv.add(zid)
            continue
        if _flag(r.get("no_service", False)):
            ns.add(zid)
        cells = [r.get(c) for c in cols]
        if all(c in (None, "") for c in cells):
            continue
        nums = [np.nan if c in (None, "") else float(c) for c in cells]
        values[zid] = np.array(nums) if hourly else nums[0]
    return MetricLayer(name, values, period, category, hourly, frozenset(ns), frozenset(nv))


def diff_periods(before, after, polarity=None, tol=0.0):
    """Per-zone (and per-hour) change between two layers of the same metric.

    Returns ``(rows, summary)`` frames. `polarity` is +1 when larger values are
    better, -1 when they are worse; it defaults from the layer name.
    """
    zb, za = set(before.zone_ids), set(after.zone_ids)
    if zb != za:
        raise InputError(f"layers cover different zones; symmetric difference: {sorted(zb ^ za)}")
    if before.hourly != after.hourly:
        raise InputError("cannot diff an hourly layer against a static one")
    if polarity is None:
        polarity = POLARITY.get(before.metric, 1)
    hours = range(HOURS) if before.hourly else [None]
    rows = []
    for zid in sorted(zb):
        vb, va = before.values.get(zid), after.values.get(zid)
        for h in hours:
            b = None if vb is None else float(vb[h] if h is not None else vb)
            a = None if va is None else float(va[h] if h is not None else va)
            if b is not None and np.isnan(b):
                b = None
            if a is not None and np.isnan(a):
                a = None
            if b is None and a is None:
                status, delta = "not_served", None
            elif b is None:
                status, delta = "gained_service", None
            elif a is None:
                status, delta = "lost_service", None
            else:
                delta = a - b
                signed = delta * polarity
                status = "improved" if signed > tol else "worsened" if signed < -tol else "unchanged"
            rows.append({"zone_id": zid, "hour": h, "before": b, "after": a, "delta": delta, "status": status})
    table = pd.DataFrame(rows, columns=["zone_id", "hour", "before", "after", "delta", "status"])
    summary = (
        table.assign(category=before.category or after.category)
        .groupby(["category", "status"]).size().rename("count").reset_index()
    )
    return table, summary


def write_table(df, path):
    """Delimited export with the same 9-significant-digit float convention."""
    out = df.copy()
    for c in out.columns:
        if pd.api.types.is_float_dtype(out[c]):
            out[c] = out[c].map(fmt)
        elif out[c].dtype == object:
            out[c] = out[c].map(lambda v: fmt(v) if isinstance(v, float) else ("" if v is None else v))
    out.to_csv(path, index=False, lineterminator="\n")
    return Path(path)
