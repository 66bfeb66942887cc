"""Person-level disadvantage flags, flag combinations and zone overlays."""

from dataclasses import dataclass, field
from itertools import combinations
from math import ceil

import numpy as np
import pandas as pd

from .exceptions import InputError, PopulationError

FLAGS = ("limited_english", "non_white", "under_poverty", "no_vehicle", "unemployed")
TRUTHY = frozenset({"1", "true", "t", "yes", "y"})


def all_combinations(flags=FLAGS):
    """Every non-empty flag subset, singletons first (31 for five flags)."""
    return [c for size in range(1, len(flags) + 1) for c in combinations(flags, size)]


def combination_label(combo):
    return "+".join(combo)


@dataclass(frozen=True)
class PovertyTable:
    thresholds: dict  # family size -> annual income threshold

    def __post_init__(self):
        if not self.thresholds:
            raise InputError("poverty table is empty")
        if any(v <= 0 for v in self.thresholds.values()):
            raise InputError("poverty thresholds must be positive")

    @classmethod
    def from_csv(cls, source):
        try:
            df = pd.read_csv(source)
        except FileNotFoundError:
            raise InputError(f"poverty table not found: {source}") from None
        if not {"family_size", "threshold"} <= set(df.columns):
            raise InputError(f"{source}: poverty table needs columns family_size, threshold")
        return cls({int(s): float(t) for s, t in zip(df["family_size"], df["threshold"])})

    def threshold(self, size):
        try:
            return self.thresholds[int(size)]
        except KeyError:
            raise PopulationError(f"no poverty threshold for family size {size}") from None


@dataclass(frozen=True)
class FlagRules:
    """Column names and value conventions for deriving the five flags."""

    race_column: str = "race"
    white_values: frozenset = frozenset({"white"})
    language_column: str = "limited_english"
    employment_column: str = "employment"
    unemployed_values: frozenset = frozenset({"unemployed"})
    income_column: str = "income"
    size_column: str = "family_size"
    vehicles_column: str = "vehicles"


def _truthy(series):
    return series.astype(str).str.strip().str.lower().isin(TRUTHY)


def flag_persons(pop, thresholds, rules=FlagRules()):
    """Frame with person id, zone id and one boolean column per flag.

    A person is under the poverty line iff household income is strictly below
    the threshold for the family size.
    """
    df = pop.frame
    need = [rules.race_column, rules.language_column, rules.employment_column,
            rules.income_column, rules.size_column, rules.vehicles_column]
    missing = [c for c in need if c not in df.columns]
    if missing:
        raise PopulationError(f"population lacks columns {missing}")
    try:
        income = df[rules.income_column].astype(float)
        size = df[rules.size_column].astype(float).astype(int)
        vehicles = df[rules.vehicles_column].astype(float)
    except ValueError as exc:
        raise PopulationError(f"non-numeric household attribute: {exc}") from None
    limits = size.map(lambda s: thresholds.threshold(s))
    out = pd.DataFrame({"zone_id": df[pop.zone_column].astype(str)})
    if "person_id" in df.columns:
        out.insert(0, "person_id", df["person_id"].astype(str))
    out["limited_english"] = _truthy(df[rules.language_column])
    out["non_white"] = ~df[rules.race_column].astype(str).str.strip().str.lower().isin(
        {v.lower() for v in rules.white_values})
    out["under_poverty"] = income < limits
    out["no_vehicle"] = vehicles <= 0
    out["unemployed"] = df[rules.employment_column].astype(str).str.strip().str.lower().isin(
        {v.lower() for v in rules.unemployed_values})
    return out.reset_index(drop=True)


def nearest_rank(values, q):
    """Nearest-rank percentile: the ceil(q*N)-th smallest value."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise ValueError("percentile of an empty set")
    return float(v[max(ceil(q * v.size), 1) - 1])


@dataclass
class SegmentOverlay:
    combination: tuple
    counts: pd.Series  # zone -> members
    share: pd.Series  # zone -> members / population (NaN when population is 0)
    threshold: float
    mask: frozenset = field(default_factory=frozenset)

    @property
    def label(self):
        return combination_label(self.combination)


def segment_population(flags, zones=None, combos=None):
    """Zones x combinations member counts (conjunction of the combination's flags)."""
    combos = combos or all_combinations()
    zones = sorted(flags["zone_id"].unique()) if zones is None else list(zones)
    cols = {}
    for combo in combos:
        member = flags[list(combo)].all(axis=1)
        counts = flags.loc[member, "zone_id"].value_counts()
        cols[combination_label(combo)] = counts.reindex(zones, fill_value=0).astype(int)
    return pd.DataFrame(cols, index=pd.Index(zones, name="zone_id"))


def combine_segments(flags, zones=None, q=0.75):
    """One overlay per flag combination, masking zones at/above the q-th percentile share."""
    combos = all_combinations()
    counts = segment_population(flags, zones, combos)
    totals = flags["zone_id"].value_counts().reindex(counts.index, fill_value=0)
    out = []
    for combo in combos:
        c = counts[combination_label(combo)]
        share = (c / totals.where(totals > 0)).astype(float)
        defined = share.dropna()
        if defined.empty:
            out.append(SegmentOverlay(combo, c, share, float("nan")))
            continue
        cut = nearest_rank(defined.values, q)
        mask = frozenset(defined.index[defined.values >= cut])
        out.append(SegmentOverlay(combo, c, share, cut, mask))
    return out
