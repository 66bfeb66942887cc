"""Run configuration (YAML) with paths resolved against the config file."""

from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .exceptions import ConfigError


@dataclass
class PeriodInput:
    trips: list
    column_map: str = "citibike-2024"


@dataclass
class RunConfig:
    zones: Path
    periods: dict  # period name -> PeriodInput
    output_dir: Path
    activity_zones: Path | None = None
    persons: Path | None = None
    households: Path | None = None
    poverty_table: Path | None = None
    capacity: Path | None = None
    zone_id_property: str = "zone_id"
    parent_id_property: str = "parent_id"
    activity_tag_property: str = "zonedist"
    household_key: str = "household_id"
    zone_column: str = "zone_id"
    projection: dict | None = None
    service_radius: float = 500.0
    reach_radius: float = 2600.0
    threshold_range: tuple = (0.3, 0.8)
    threshold_step: float = 0.1
    initial_fill: float = 0.5
    minmax_scope: str = "hour"
    overlay_percentile: float = 0.75
    recovery_mode: str = "total"
    strict_paper: bool = False
    n_clusters: int | None = None
    cluster_seed: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def sr_rule(self):
        return "rectangle" if self.strict_paper else "trapezoid"

    @classmethod
    def from_file(cls, path):
        path = Path(path)
        try:
            with open(path, encoding="utf-8") as fh:
                raw = yaml.safe_load(fh) or {}
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML ({exc})") from None
        return cls.from_dict(raw, base=path.parent)

    @classmethod
    def from_dict(cls, raw, base="."):
        base = Path(base)
        raw = dict(raw)
        params = raw.pop("params", {}) or {}
        known = {f.name for f in fields(cls)}
        unknown = [k for k in {**raw, **params} if k not in known and k != "population"]
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")

        def resolve(p):
            return None if p in (None, "") else (base / p)

        pop = raw.pop("population", None) or {}
        for key in ("persons", "households"):
            if key in pop:
                raw[key] = pop[key]
        if "zones" not in raw or "periods" not in raw:
            raise ConfigError("config needs at least 'zones' and 'periods'")
        periods = {}
        for name, entry in (raw.pop("periods") or {}).items():
            if isinstance(entry, (str, list)):
                entry = {"trips": entry}
            trips = entry.get("trips")
            if not trips:
                raise ConfigError(f"period {name!r} lists no trip files")
            trips = [trips] if isinstance(trips, str) else list(trips)
            periods[str(name)] = PeriodInput([resolve(t) for t in trips], entry.get("column_map", "citibike-2024"))
        kwargs = {**raw, **params, "periods": periods}
        for key in ("zones", "activity_zones", "persons", "households", "poverty_table", "capacity"):
            if key in kwargs:
                kwargs[key] = resolve(kwargs[key])
        kwargs["output_dir"] = resolve(kwargs.get("output_dir", "mdhg-output"))
        if "threshold_range" in kwargs:
            kwargs["threshold_range"] = tuple(kwargs["threshold_range"])
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    def validate(self, check_files=True):
        if self.service_radius <= 0 or self.reach_radius <= 0:
            raise ConfigError("buffer radii must be positive")
        lo, hi = self.threshold_range
        if not (0 < lo < hi < 1):
            raise ConfigError(f"threshold_range must lie within (0, 1), got {self.threshold_range}")
        if self.minmax_scope not in ("hour", "joint"):
            raise ConfigError("minmax_scope must be 'hour' or 'joint'")
        if not (0 < self.overlay_percentile < 1):
            raise ConfigError("overlay_percentile must lie within (0, 1)")
        if not (0 <= self.initial_fill <= 1):
            raise ConfigError("initial_fill must lie within [0, 1]")
        if not self.periods:
            raise ConfigError("no periods configured")
        if check_files:
            for p in self.input_paths():
                if not Path(p).exists():
                    raise ConfigError(f"input file does not exist: {p}")

    def input_paths(self):
        paths = [self.zones]
        for key in ("activity_zones", "persons", "households", "poverty_table", "capacity"):
            if getattr(self, key) is not None:
                paths.append(getattr(self, key))
        for p in self.periods.values():
            paths.extend(p.trips)
        return paths
