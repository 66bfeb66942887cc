"""Multi-dimensional, high-granularity transportation equity metrics."""

from .availability import reconstruct_station, reversed_rank, surplus, zone_zeta
from .cluster import ZoneKMeans, cluster_zones
from .config import RunConfig
from .demographics import combine_segments, flag_persons, segment_population
from .geometry import Projection, SpatialIndex, buffer_polygon, intersection_area, stations_in_buffer
from .ingest import ColumnMap, clean_trips, load_population, load_zones, parse_trips
from .metrics import (
    AccessInsufficiency,
    MinMaxNormalizer,
    PercentileRank,
    ServiceDisparity,
    d_sp,
    i_access,
    lognorm,
    minmax,
    percentile_rank,
    zi_access,
)
from .pipeline import run_pipeline
from .recovery import categorize_sr, recovery_time, sr_integral
from .stats import compare_groups

__version__ = "0.1.0"

__all__ = [
    "AccessInsufficiency",
    "buffer_polygon",
    "categorize_sr",
    "clean_trips",
    "cluster_zones",
    "ColumnMap",
    "combine_segments",
    "compare_groups",
    "d_sp",
    "flag_persons",
    "i_access",
    "intersection_area",
    "load_population",
    "load_zones",
    "lognorm",
    "minmax",
    "MinMaxNormalizer",
    "parse_trips",
    "percentile_rank",
    "PercentileRank",
    "Projection",
    "reconstruct_station",
    "recovery_time",
    "reversed_rank",
    "run_pipeline",
    "RunConfig",
    "segment_population",
    "ServiceDisparity",
    "SpatialIndex",
    "sr_integral",
    "stations_in_buffer",
    "surplus",
    "zi_access",
    "zone_zeta",
    "ZoneKMeans",
]
