"""Ingestion of OxCGRT-style NPI/case data, population tables, scenarios.

The case CSV carries one row per region-day with cumulative confirmed
counts and the 12 NPI stringency columns. Ingestion groups rows by
region, fills calendar gaps with missing markers, repairs non-monotone
cumulative counts by running maximum (the day of a decrease is treated as
a missing new-case report), clamps out-of-range NPI values to their
bounds, and accounts for every input row so nothing is dropped silently.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from pandemic_fhoc.contact import N_NPI, NPI_CODES, U_MAX, U_MIN, NpiSchedule

MANDATORY_COLUMNS = ["CountryName", "Date", "ConfirmedCases"]

SCENARIO_KINDS = ("fixed", "random_constant", "random_variable", "max", "min", "explicit")


@dataclass
class RegionSeries:
    """A cleaned, calendar-contiguous daily series for one region."""

    region_id: str
    dates: list
    confirmed_cases: np.ndarray  # cumulative counts, NaN where missing
    new_cases: np.ndarray  # daily counts, NaN where missing
    npis: np.ndarray  # (n, 12), NaN where missing
    population: float | None = None

    def __post_init__(self):
        n = len(self.dates)
        if len(self.confirmed_cases) != n or len(self.new_cases) != n:
            raise ValueError("case series must align with the calendar")
        if self.npis.shape != (n, N_NPI):
            raise ValueError(f"npis must be ({n}, {N_NPI})")
        d = pd.to_datetime(self.dates)
        if n > 1:
            deltas = np.diff(d.values).astype("timedelta64[D]").astype(int)
            if not np.all(deltas == 1):
                raise ValueError("dates must be strictly increasing and daily")
        finite = self.confirmed_cases[np.isfinite(self.confirmed_cases)]
        if len(finite) > 1 and np.any(np.diff(finite) < 0):
            raise ValueError("cleaned cumulative series must be non-decreasing")

    def to_dict(self) -> dict:
        def col(x):
            return [None if not np.isfinite(v) else float(v) for v in x]

        return {
            "region_id": self.region_id,
            "dates": list(self.dates),
            "confirmed_cases": col(self.confirmed_cases),
            "new_cases": col(self.new_cases),
            "npis": [
                [None if not np.isfinite(v) else float(v) for v in row] for row in self.npis
            ],
            "population": self.population,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, doc: dict) -> "RegionSeries":
        def arr(x):
            return np.array([np.nan if v is None else float(v) for v in x])

        return cls(
            region_id=doc["region_id"],
            dates=list(doc["dates"]),
            confirmed_cases=arr(doc["confirmed_cases"]),
            new_cases=arr(doc["new_cases"]),
            npis=np.array(
                [[np.nan if v is None else float(v) for v in row] for row in doc["npis"]]
            ).reshape(len(doc["dates"]), N_NPI),
            population=doc.get("population"),
        )

    @classmethod
    def from_json(cls, text: str) -> "RegionSeries":
        return cls.from_dict(json.loads(text))


@dataclass
class IngestStats:
    """Row accounting: every input row is stored or itemized as skipped."""

    rows_in: int = 0
    rows_stored: int = 0
    skipped: dict = field(default_factory=dict)
    npi_values_clamped: int = 0
    negative_diffs: int = 0
    calendar_gaps_filled: int = 0

    def skip(self, reason: str, count: int = 1):
        self.skipped[reason] = self.skipped.get(reason, 0) + count

    @property
    def rows_skipped(self) -> int:
        return sum(self.skipped.values())


class IngestError(ValueError):
    pass


def _npi_column_map(columns) -> dict:
    """Map each NPI code to its CSV column (bare code or code-prefixed)."""
    mapping = {}
    for code in NPI_CODES:
        hit = None
        for col in columns:
            if col == code or col.startswith(code + "_") or col.startswith(code + " "):
                hit = col
                break
        if hit is None:
            raise IngestError(f"missing mandatory column for NPI index {code}")
        mapping[code] = hit
    return mapping


def region_key(country: str, region: str) -> str:
    region = (region or "").strip()
    country = (country or "").strip()
    return f"{country} / {region}" if region else country


def ingest_oxcgrt(stream) -> tuple[dict, IngestStats]:
    """Parse an OxCGRT-format CSV into per-region cleaned series.

    stream may be a path, file object, or CSV text. Returns the region
    map and the row-accounting stats.
    """
    if isinstance(stream, str) and "\n" in stream:
        stream = io.StringIO(stream)
    df = pd.read_csv(stream, dtype={"Date": str}, low_memory=False)
    for col in MANDATORY_COLUMNS:
        if col not in df.columns:
            raise IngestError(f"missing mandatory column {col}")
    npi_cols = _npi_column_map(df.columns)
    has_region = "RegionName" in df.columns

    stats = IngestStats(rows_in=len(df))
    parsed_dates = pd.to_datetime(df["Date"], format="%Y%m%d", errors="coerce")
    bad_dates = parsed_dates.isna()
    if bad_dates.any():
        stats.skip("unparseable_date", int(bad_dates.sum()))
    df = df.loc[~bad_dates].copy()
    df["__date"] = parsed_dates[~bad_dates]

    regions: dict[str, RegionSeries] = {}
    group_cols = ["CountryName"] + (["RegionName"] if has_region else [])
    df["RegionName"] = df["RegionName"].fillna("") if has_region else ""
    for (country, *rest), sub in df.groupby(["CountryName", "RegionName"], sort=True):
        rid = region_key(str(country), str(rest[0]) if rest else "")
        sub = sub.sort_values("__date")
        dup = sub["__date"].duplicated(keep="first")
        if dup.any():
            stats.skip("duplicate_date", int(dup.sum()))
            sub = sub.loc[~dup]
        stats.rows_stored += len(sub)

        full = pd.date_range(sub["__date"].iloc[0], sub["__date"].iloc[-1], freq="D")
        stats.calendar_gaps_filled += len(full) - len(sub)
        indexed = sub.set_index("__date").reindex(full)

        raw_cum = pd.to_numeric(indexed["ConfirmedCases"], errors="coerce").to_numpy(float)
        cleaned = np.fmax.accumulate(np.where(np.isfinite(raw_cum), raw_cum, -np.inf))
        cleaned[~np.isfinite(cleaned)] = np.nan

        new_cases = np.full(len(full), np.nan)
        last_val = None
        for k, v in enumerate(raw_cum):
            if not np.isfinite(v):
                continue
            if last_val is not None:
                diff = v - last_val
                if diff >= 0:
                    new_cases[k] = diff
                else:
                    stats.negative_diffs += 1
            last_val = v

        npis = np.full((len(full), N_NPI), np.nan)
        for j, code in enumerate(NPI_CODES):
            vals = pd.to_numeric(indexed[npi_cols[code]], errors="coerce").to_numpy(float)
            over = vals > U_MAX[j]
            under = vals < U_MIN[j]
            stats.npi_values_clamped += int(np.sum(over & np.isfinite(vals)))
            stats.npi_values_clamped += int(np.sum(under & np.isfinite(vals)))
            vals = np.clip(vals, U_MIN[j], U_MAX[j])
            npis[:, j] = vals

        regions[rid] = RegionSeries(
            region_id=rid,
            dates=[d.date().isoformat() for d in full],
            confirmed_cases=cleaned,
            new_cases=new_cases,
            npis=npis,
        )
    return regions, stats


def ingest_population(stream) -> tuple[dict, int]:
    """Parse a two-column (region_id, population) table.

    Returns the populations and the count of rejected rows.
    """
    if isinstance(stream, str) and "\n" in stream:
        stream = io.StringIO(stream)
    df = pd.read_csv(stream, header=None, names=["region_id", "population"], skipinitialspace=True)
    pops: dict[str, float] = {}
    rejected = 0
    for _, row in df.iterrows():
        try:
            value = float(row["population"])
        except (TypeError, ValueError):
            rejected += 1  # header row or garbage
            continue
        if not np.isfinite(value) or value <= 0:
            rejected += 1
            continue
        pops[str(row["region_id"]).strip()] = value
    return pops, rejected


def attach_population(regions: dict, pops: dict) -> list[str]:
    """Assign populations; returns region ids excluded for lack of one."""
    excluded = []
    for rid, series in regions.items():
        if rid in pops:
            series.population = pops[rid]
        else:
            excluded.append(rid)
    return excluded


@dataclass(frozen=True)
class Scenario:
    """A parsed scenario directive, materializable to a daily schedule."""

    kind: str
    seed: int = 0
    schedule: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in SCENARIO_KINDS:
            raise ValueError(f"unknown scenario kind {self.kind!r}; expected one of {SCENARIO_KINDS}")


def parse_scenario(source) -> Scenario:
    """Parse a scenario JSON document (text, dict, or file path).

    Schema: {"kind": fixed|random_constant|random_variable|max|min|explicit,
    "seed": int?, "schedule": [[12 ints] per day]?}. An explicit schedule
    is validated against the per-index bounds; the offending coordinate
    and day are named on failure.
    """
    if isinstance(source, dict):
        doc = source
    elif isinstance(source, str) and source.lstrip().startswith("{"):
        doc = json.loads(source)
    else:
        with open(source) as fh:
            doc = json.load(fh)
    kind = doc.get("kind")
    if kind not in SCENARIO_KINDS:
        raise ValueError(f"unknown scenario kind {kind!r}")
    schedule = None
    if kind == "explicit":
        if "schedule" not in doc:
            raise ValueError("explicit scenario requires a schedule")
        arr = np.asarray(doc["schedule"], float)
        if arr.ndim != 2 or arr.shape[1] != N_NPI:
            raise ValueError(f"explicit schedule must be (n_days, {N_NPI})")
        for k, row in enumerate(arr):
            bad = (row < U_MIN) | (row > U_MAX)
            if bad.any():
                j = int(np.argmax(bad))
                raise ValueError(
                    f"explicit schedule day {k}: {NPI_CODES[j]}={row[j]:g} outside "
                    f"[{U_MIN[j]}, {U_MAX[j]}]"
                )
        schedule = arr
    return Scenario(kind=kind, seed=int(doc.get("seed", 0)), schedule=schedule)


def materialize_scenario(
    sc: Scenario, horizon: int, latest_npi: np.ndarray | None = None
) -> NpiSchedule:
    """Expand a scenario directive into a full-horizon admissible schedule."""
    if horizon < 1:
        raise ValueError("horizon must be at least one day")
    if sc.kind == "max":
        levels = np.tile(U_MAX, (horizon, 1))
    elif sc.kind == "min":
        levels = np.tile(U_MIN, (horizon, 1))
    elif sc.kind == "fixed":
        if latest_npi is None:
            raise ValueError("fixed scenario needs the latest NPI vector")
        levels = np.tile(np.asarray(latest_npi, float).round().astype(int), (horizon, 1))
    elif sc.kind == "random_constant":
        rng = np.random.default_rng(sc.seed)
        levels = np.tile(rng.integers(U_MIN, U_MAX + 1), (horizon, 1))
    elif sc.kind == "random_variable":
        rng = np.random.default_rng(sc.seed)
        levels = rng.integers(U_MIN, U_MAX + 1, size=(horizon, N_NPI))
    else:  # explicit
        levels = np.asarray(sc.schedule, float).round().astype(int)
        if len(levels) < horizon:
            raise ValueError(
                f"explicit schedule covers {len(levels)} days, horizon needs {horizon}"
            )
        levels = levels[:horizon]
    return NpiSchedule(levels=np.clip(levels, U_MIN, U_MAX))
