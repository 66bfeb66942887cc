"""End-to-end orchestration: inputs -> per-period metric layers -> artifact set."""

import hashlib
import json
import logging
import os
import shutil
import tempfile
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import pandas as pd
import shapely

from . import availability as av
from . import metrics
from .cluster import cluster_zones
from .config import RunConfig
from .demographics import PovertyTable, combine_segments, flag_persons
from .exceptions import ConfigError, InvariantError, MDHGError
from .export import MetricLayer, diff_periods, export_layer, write_table
from .geometry import AreaOverlay, Projection, buffer_polygon, join_stations
from .ingest import (
    CATEGORIES,
    ColumnMap,
    load_activity_zones,
    load_capacity_table,
    load_population,
    load_zones,
    parse_trips,
    clean_trips,
)
from .recovery import recovery_profile
from .stats import compare_groups

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"
HOURS = 24


@contextmanager
def stage(name):
    """Prefix any library error raised inside the block with the stage name."""
    try:
        yield
    except MDHGError as exc:
        if str(exc).startswith("["):
            raise
        raise type(exc)(f"[{name}] {exc}") from exc
    except ValueError as exc:
        raise InvariantError(f"[{name}] {exc}") from exc


def thread_cap():
    try:
        return max(int(os.environ.get("EQUITY_THREADS", "1")), 1)
    except ValueError:
        raise ConfigError("EQUITY_THREADS must be an integer") from None


@dataclass
class PeriodResult:
    name: str
    trips: list
    tally: Counter
    window: av.StudyWindow | None
    stations: dict = field(default_factory=dict)
    locations: dict = field(default_factory=dict)
    join: dict = field(default_factory=dict)


class Pipeline:
    """Lazily computed study state for one RunConfig.

    Each ``*_artifacts`` method returns ``{relative path: writer}`` callables
    so a CLI stage can emit just its slice of the full run.
    """

    def __init__(self, config: RunConfig, periods=None):
        self.config = config
        self.period_names = list(periods or config.periods)
        for p in self.period_names:
            if p not in config.periods:
                raise ConfigError(f"period {p!r} is not configured")

    # -- study area -------------------------------------------------------

    @cached_property
    def zones(self):
        with stage("ingest"):
            return load_zones(self.config.zones, self.config.zone_id_property, self.config.parent_id_property)

    @cached_property
    def zone_ids(self):
        return sorted(z.zone_id for z in self.zones)

    @cached_property
    def lonlat(self):
        return {z.zone_id: z.geometry for z in self.zones}

    @cached_property
    def parents(self):
        return {z.zone_id: z.parent_id for z in self.zones}

    @cached_property
    def projection(self):
        p = self.config.projection
        if p:
            return Projection(p["ref_lon"], p["ref_lat"], tuple(p.get("bbox", (-180, -90, 180, 90))))
        bounds = shapely.union_all([z.geometry for z in self.zones]).bounds
        return Projection.around(bounds)

    @cached_property
    def planar(self):
        with stage("geometry"):
            return {z.zone_id: self.projection.project_geometry(z.geometry) for z in self.zones}

    @cached_property
    def activity(self):
        if self.config.activity_zones is None:
            return {c: AreaOverlay([]) for c in CATEGORIES}
        with stage("ingest"):
            sets = load_activity_zones(self.config.activity_zones, self.config.activity_tag_property)
        with stage("geometry"):
            return {
                c: AreaOverlay([self.projection.project_geometry(g) for g in s.polygons])
                for c, s in sets.items()
            }

    @cached_property
    def reach_area(self):
        """category -> zone id -> activity area (m²) inside the reach buffer."""
        out = {c: {} for c in CATEGORIES}
        with stage("geometry"):
            for zid in self.analyzed:
                buf = buffer_polygon(self.planar[zid], self.config.reach_radius)
                for c in CATEGORIES:
                    out[c][zid] = self.activity[c].area_within(buf)
        return out

    @cached_property
    def population(self):
        cfg = self.config
        if cfg.persons is None or cfg.households is None:
            return None
        with stage("ingest"):
            return load_population(cfg.persons, cfg.households, cfg.household_key, cfg.zone_column)

    @cached_property
    def zone_population(self):
        if self.population is None:
            return pd.Series(0, index=self.zone_ids, dtype=int)
        return self.population.zone_counts(self.zone_ids)

    @cached_property
    def flags(self):
        if self.population is None or self.config.poverty_table is None:
            return None
        with stage("overlay"):
            table = PovertyTable.from_csv(self.config.poverty_table)
            flags = flag_persons(self.population, table)
            if self.config.household_key in self.population.frame.columns:
                flags["household_id"] = self.population.frame[self.config.household_key].astype(str).values
            return flags

    @cached_property
    def overlays(self):
        if self.flags is None:
            return []
        with stage("overlay"):
            return combine_segments(self.flags, self.analyzed, q=self.config.overlay_percentile)

    @cached_property
    def capacities(self):
        if self.config.capacity is None:
            return {}
        with stage("ingest"):
            return load_capacity_table(self.config.capacity)

    # -- periods ----------------------------------------------------------

    def _load_period(self, name):
        entry = self.config.periods[name]
        tally = Counter()
        trips = []
        with stage("ingest"):
            cmap = ColumnMap.load(entry.column_map)
            for path in entry.trips:
                trips.extend(clean_trips(parse_trips(path, cmap, tally), self.projection, tally))
        res = PeriodResult(name, trips, tally, None)
        if not trips:
            return res
        res.window = av.StudyWindow.covering([t.start_time for t in trips] + [t.end_time for t in trips])
        res.locations = av.station_locations(trips)
        with stage("geometry"):
            pts = {
                sid: shapely.Point(self.projection.project(lon, lat))
                for sid, (lon, lat) in res.locations.items()
            }
            res.join = join_stations(self.planar, pts, self.config.service_radius)
        with stage("availability"):
            res.stations = av.reconstruct_stations(
                trips, res.window, self.capacities, fill=self.config.initial_fill,
                clamp=not self.config.strict_paper,
            )
        return res

    @cached_property
    def period_results(self):
        names = self.period_names
        self.planar, self.capacities  # build shared state before fanning out
        with ThreadPoolExecutor(max_workers=min(thread_cap(), len(names))) as pool:
            results = list(pool.map(self._load_period, names))
        return dict(zip(names, results))

    @cached_property
    def analyzed(self):
        """Zones with at least one joined station in any configured period."""
        hit = set()
        for name in self.config.periods:
            res = self.period_results.get(name) if name in self.period_names else None
            if res is None:
                res = self._load_period(name)
            hit |= {z for z, s in res.join.items() if s}
        return [z for z in self.zone_ids if z in hit]

    @cached_property
    def never_served(self):
        return frozenset(self.zone_ids) - frozenset(self.analyzed)

    def served(self, period):
        join = self.period_results[period].join
        return [z for z in self.analyzed if join.get(z)]

    def no_service(self, period):
        return frozenset(self.analyzed) - frozenset(self.served(period))

    # -- metrics ----------------------------------------------------------

    @cached_property
    def _zone_availability(self):
        out = {}
        for p in self.period_names:
            res = self.period_results[p]
            with stage("availability"):
                out[p] = av.zone_zeta(res.join, res.stations, zone_ids=self.analyzed, strict=self.config.strict_paper)
        return out

    def availability(self, period):
        return self._zone_availability[period]

    def _n(self, zone_ids):
        return self.zone_population.reindex(zone_ids, fill_value=0).to_numpy(dtype=float)

    def d_sp(self, period):
        za = self.availability(period)
        with stage("metrics"):
            return metrics.d_sp(za.z, self._n(za.zone_ids), served=za.served, scope=self.config.minmax_scope)

    def _access_inputs(self, period, category):
        served = self.served(period)
        x = np.array([self.reach_area[category][z] for z in served])
        parents = np.array([self.parents[z] for z in served])
        return served, self._n(served), x, parents

    def i_access(self, period, category):
        served, n, x, parents = self._access_inputs(period, category)
        if not served:
            return {}, {}
        with stage("metrics"):
            est = metrics.AccessInsufficiency().fit(np.column_stack((n, x)), groups=parents)
        return dict(zip(served, est.i_access_)), dict(zip(served, est.k_))

    def zi_access(self, period, category):
        za = self.availability(period)
        idx = {z: i for i, z in enumerate(za.zone_ids)}
        served, n, x, parents = self._access_inputs(period, category)
        if not served:
            return {}
        rows = [idx[z] for z in served]
        with stage("metrics"):
            zi = metrics.zi_access(za.z[rows], n, x, parents, scope=self.config.minmax_scope)
        return dict(zip(served, zi))

    def recovery(self, period):
        za = self.availability(period)
        cfg = self.config
        out = {}
        with stage("recovery"):
            for i, zid in enumerate(za.zone_ids):
                if za.served[i]:
                    out[zid] = recovery_profile(
                        zid, za.zeta[i], cfg.threshold_range, cfg.threshold_step,
                        rule=cfg.sr_rule, mode=cfg.recovery_mode,
                    )
        return out

    def comparisons(self, period):
        prof = self.recovery(period)
        zones = sorted(prof)
        sr = np.array([prof[z].sr for z in zones])
        rows = []
        with stage("compare"):
            for ov in self.overlays:
                mask = np.array([z in ov.mask for z in zones])
                try:
                    rows.append(compare_groups(sr, mask, ov.label).as_row())
                except ValueError:
                    rows.append({"grouping": ov.label, "n_disadvantaged": int(mask.sum()),
                                 "n_other": int((~mask).sum())})
        cols = ["grouping", "n_disadvantaged", "n_other", "mean_disadvantaged", "mean_other",
                "t_statistic", "t_pvalue", "ks_statistic", "ks_pvalue"]
        return pd.DataFrame(rows, columns=cols)

    def station_membership(self, period):
        """station id -> parent area id, by point-in-polygon on merged parent areas."""
        areas = {}
        for zid, geom in sorted(self.planar.items()):
            areas.setdefault(self.parents[zid], []).append(geom)
        merged = {p: shapely.union_all(gs) for p, gs in sorted(areas.items())}
        out = {}
        for sid, (lon, lat) in sorted(self.period_results[period].locations.items()):
            pt = shapely.Point(self.projection.project(lon, lat))
            for p, geom in merged.items():
                if geom.covers(pt):
                    out[sid] = p
                    break
        return out

    def cluster_features(self, period, category="commute", hour=None):
        served = self.served(period)
        if hour is None:
            score, _ = self.i_access(period, category)
            score = pd.Series(score)
        else:
            zi = self.zi_access(period, category)
            score = pd.Series({z: v[hour] for z, v in zi.items()})
        feats = pd.DataFrame(index=pd.Index(served, name="zone_id"))
        feats["equity_score"] = score.reindex(served).astype(float)
        feats["population"] = self._n(served)
        f = self.flags
        if f is not None:
            g = f[f["zone_id"].isin(served)].groupby("zone_id")
            feats["households"] = g["household_id"].nunique().reindex(served, fill_value=0) if "household_id" in f else 0
            feats["non_white"] = g["non_white"].sum().reindex(served, fill_value=0)
            feats["limited_english"] = g["limited_english"].sum().reindex(served, fill_value=0)
            if "household_id" in f:
                for col, name in (("under_poverty", "low_income_households"), ("no_vehicle", "no_vehicle_households")):
                    sel = f[f["zone_id"].isin(served) & f[col]]
                    feats[name] = sel.groupby("zone_id")["household_id"].nunique().reindex(served, fill_value=0)
        return feats.fillna(0.0)

    # -- artifacts --------------------------------------------------------

    def _layer(self, name, period, values, category="", hourly=False, no_service_value=None):
        ns = self.no_service(period)
        vals = {z: v for z, v in values.items()}
        if no_service_value is not None:
            for z in ns:
                vals[z] = no_service_value
        return MetricLayer(name, vals, period, category, hourly, ns, self.never_served)

    def _layer_writer(self, layer):
        def write(path):
            export_layer(layer, path, zones=self.lonlat)
        return write

    def ingest_artifacts(self, period, include_trips=False):
        res = self.period_results[period]
        arts = {f"{period}/trip_tally.json": _json_writer(dict(sorted(res.tally.items())))}
        if include_trips:
            def write(path):
                rows = [{
                    "member": t.member, "start_time": t.start_time.isoformat(sep=" "),
                    "end_time": t.end_time.isoformat(sep=" "), "start_station_id": t.start_station_id,
                    "end_station_id": t.end_station_id, "start_lat": t.start_lat, "start_lon": t.start_lon,
                    "end_lat": t.end_lat, "end_lon": t.end_lon, "duration": t.duration,
                    "euclidean_distance": t.euclidean_distance, "speed": t.speed,
                } for t in res.trips]
                write_table(pd.DataFrame(rows), path)
            arts[f"{period}/trips_clean.csv"] = write
        return arts

    def availability_artifacts(self, period, hour=None):
        za = self.availability(period)
        res = self.period_results[period]
        arts = {}
        for name, M in (("zeta", za.zeta), ("z", za.z)):
            values = {z: M[i] for i, z in enumerate(za.zone_ids) if za.served[i]}
            arts.update(self._hourly_layers(name, period, values, "", hour))

        def stations(path):
            rows = []
            for sid, s in sorted(res.stations.items()):
                lon, lat = res.locations[sid]
                rows.append({"station_id": sid, "lon": lon, "lat": lat, "capacity": s.capacity,
                             **{f"h{h:02d}": s.hourly_available[h] for h in range(HOURS)}})
            write_table(pd.DataFrame(rows), path)

        def surplus(path):
            tally = Counter()
            write_table(av.surplus(res.trips, self.station_membership(period), tally), path)

        arts[f"{period}/station_series.csv"] = stations
        arts[f"{period}/surplus.csv"] = surplus
        return arts

    def _hourly_layers(self, name, period, values, category, hour, no_service_value=None):
        if hour is None:
            layer = self._layer(name, period, values, category, hourly=True,
                                no_service_value=None if no_service_value is None else np.full(HOURS, no_service_value))
            return {f"{period}/{name}.geojson": self._layer_writer(layer)}
        one = {z: float(v[hour]) for z, v in values.items()}
        lname = f"{name}__h{hour:02d}"
        layer = self._layer(lname, period, one, category, no_service_value=no_service_value)
        return {f"{period}/{lname}.geojson": self._layer_writer(layer)}

    def metric_artifacts(self, period, hour=None, categories=CATEGORIES):
        za = self.availability(period)
        D = self.d_sp(period)
        dvals = {z: D[i] for i, z in enumerate(za.zone_ids) if za.served[i]}
        arts = self._hourly_layers("d_sp", period, dvals, "", hour, no_service_value=1.0)
        for c in categories:
            ia, _ = self.i_access(period, c)
            layer = self._layer(f"i_access__{c}", period, ia, c)
            arts[f"{period}/i_access__{c}.geojson"] = self._layer_writer(layer)
            arts.update(self._hourly_layers(f"zi_access__{c}", period, self.zi_access(period, c), c, hour))
        return arts

    def recovery_artifacts(self, period):
        prof = self.recovery(period)
        arts = {}
        for name, attr in (("sr", "sr"), ("sr_band", "sr_band")):
            layer = self._layer(name, period, {z: float(getattr(p, attr)) for z, p in prof.items()})
            arts[f"{period}/{name}.geojson"] = self._layer_writer(layer)

        def table(path):
            rows = []
            for z, p in sorted(prof.items()):
                row = {"zone_id": z}
                row.update({f"R_{lv:.2f}": r for lv, r in zip(p.thresholds, p.recovery_hours)})
                row.update({"sr": p.sr, "sr_band": p.sr_band})
                rows.append(row)
            write_table(pd.DataFrame(rows), path)

        arts[f"{period}/recovery_profiles.csv"] = table
        return arts

    def compare_artifacts(self, period):
        df = self.comparisons(period)
        return {f"{period}/comparisons.csv": lambda path: write_table(df, path)}

    def cluster_artifacts(self, period, category="commute", hour=None):
        feats = self.cluster_features(period, category, hour)
        if len(feats) == 0:
            return {}
        k = self.config.n_clusters or len({self.parents[z] for z in feats.index})
        k = min(k, len(feats))
        with stage("cluster"):
            ca = cluster_zones(feats, k, seed=self.config.cluster_seed, parents=self.parents)
        df = feats.assign(cluster=ca.labels, parent_id=[self.parents[z] for z in feats.index]).reset_index()
        summary = {"n_clusters": ca.n_clusters, "inertia": ca.inertia, "rand_index": ca.rand_index,
                   "features": list(ca.features), "category": category, "hour": hour}
        return {
            f"{period}/clusters.csv": lambda path: write_table(df, path),
            f"{period}/clusters.json": _json_writer(summary),
        }

    def overlay_artifacts(self):
        rows = []
        for ov in self.overlays:
            for z in ov.counts.index:
                rows.append({"combination": ov.label, "zone_id": z, "count": int(ov.counts[z]),
                             "share": float(ov.share[z]), "threshold": ov.threshold,
                             "masked": z in ov.mask})
        if not rows:
            return {}
        df = pd.DataFrame(rows)
        return {"overlays.csv": lambda path: write_table(df, path)}

    def diff_artifacts(self):
        if not {"before", "after"} <= set(self.period_names):
            return {}
        arts = {}
        pairs = [("zeta", lambda p: self._values_matrix(p, "zeta"), ""),
                 ("d_sp", lambda p: self._dsp_values(p), "")]
        for c in CATEGORIES:
            pairs.append((f"i_access__{c}", lambda p, c=c: self.i_access(p, c)[0], c))
        pairs.append(("sr", lambda p: {z: pr.sr for z, pr in self.recovery(p).items()}, ""))
        for name, getter, cat in pairs:
            hourly = name in ("zeta", "d_sp")
            before = self._layer(name, "before", getter("before"), cat, hourly)
            after = self._layer(name, "after", getter("after"), cat, hourly)
            with stage("diff"):
                table, summary = diff_periods(before, after)

            def write(path, table=table):
                write_table(table, path)

            arts[f"diff/{name}.csv"] = write
            arts[f"diff/{name}__summary.csv"] = lambda path, s=summary: write_table(s, path)
        return arts

    def _values_matrix(self, period, which):
        za = self.availability(period)
        M = getattr(za, which)
        return {z: M[i] for i, z in enumerate(za.zone_ids) if za.served[i]}

    def _dsp_values(self, period):
        za = self.availability(period)
        D = self.d_sp(period)
        out = {z: D[i] for i, z in enumerate(za.zone_ids) if za.served[i]}
        out.update({z: np.ones(HOURS) for z in self.no_service(period)})
        return out

    def full_artifacts(self):
        arts = {}
        for p in self.period_names:
            arts.update(self.ingest_artifacts(p))
            arts.update(self.availability_artifacts(p))
            arts.update(self.metric_artifacts(p))
            arts.update(self.recovery_artifacts(p))
            arts.update(self.compare_artifacts(p))
        arts.update(self.overlay_artifacts())
        arts.update(self.diff_artifacts())
        return arts

    def check_invariants(self):
        for p in self.period_names:
            za = self.availability(p)
            z = za.zeta[za.served]
            if not self.config.strict_paper and z.size and (np.nanmin(z) < 0 or np.nanmax(z) > 1):
                raise InvariantError(f"[{p}] service availability outside [0, 1]")
            D = self.d_sp(p)
            if not np.all(D[~za.served] == 1.0):
                raise InvariantError(f"[{p}] unserved zones must carry D_sp = 1")


def _json_writer(obj):
    def write(path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
            fh.write("\n")
    return write


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    raise TypeError(type(o))


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_artifacts(artifacts, output_dir):
    """Write every artifact into a staging directory, add a manifest, then swap
    it into place. Nothing is left behind if a writer fails."""
    output_dir = Path(output_dir)
    if output_dir.exists() and any(output_dir.iterdir()) and not (output_dir / MANIFEST).exists():
        raise ConfigError(f"refusing to overwrite non-empty directory without a manifest: {output_dir}")
    output_dir.parent.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=".mdhg-", dir=output_dir.parent))
    try:
        entries = []
        for rel in sorted(artifacts):
            dest = staging / rel
            dest.parent.mkdir(parents=True, exist_ok=True)
            artifacts[rel](dest)
            entries.append({"path": rel, "sha256": sha256(dest), "bytes": dest.stat().st_size})
        on_disk = sorted(str(p.relative_to(staging)) for p in staging.rglob("*") if p.is_file())
        if on_disk != [e["path"] for e in entries]:
            raise InvariantError("output directory contains files missing from the manifest")
        with open(staging / MANIFEST, "w", encoding="utf-8") as fh:
            json.dump({"artifacts": entries}, fh, indent=2, sort_keys=True)
            fh.write("\n")
        if output_dir.exists():
            shutil.rmtree(output_dir)
        staging.rename(output_dir)
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    return output_dir / MANIFEST


def run_pipeline(config, periods=None):
    """Compute every layer and report for the configured periods and write them out."""
    pipe = Pipeline(config, periods)
    pipe.check_invariants()
    return write_artifacts(pipe.full_artifacts(), config.output_dir)
