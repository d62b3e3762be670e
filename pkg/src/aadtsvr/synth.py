"""Seeded synthetic ATR networks with known AADT, for benchmarking both estimators.

Each station gets a base AADT drawn log-uniformly from its group's range. A
day's total is ``base * m(day) * noise`` where ``m`` is the product of a
monthly sinusoid and a weekday sinusoid, rescaled so that ``m`` averages
exactly 1 over the calendar year, and ``noise`` is lognormal. The total is
spread over the hours by the group's hourly profile.

Short-term counts are whole days held out of the ATR files. Ground truth for a
station is the AADT computed from its ATR file as written, which is what an
agency would call the actual AADT.
"""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .domain import (
    GROUP_ORDER,
    HOURS,
    DailyCount,
    GroupMapping,
    ModelGroup,
    ShortTermRecord,
    StationKey,
)
from .errors import BadConfig
from .estimators import compute_station_aadt
from .ingest import (
    AtrStationMeta,
    AtrYearData,
    ExpansionFactorTable,
    atr_filename,
    write_atr_file,
    write_atr_list,
    write_expansion_factors,
    write_group_mapping,
    write_short_term_counts,
    write_truth,
)

GROUP_CLASS = {
    ModelGroup.INTERSTATE: 12,
    ModelGroup.ARTERIAL: 2,
    ModelGroup.COLLECTOR: 4,
}


def _bump(center: float, width: float) -> np.ndarray:
    h = np.arange(HOURS) + 0.5
    return np.exp(-0.5 * ((h - center) / width) ** 2)


def default_profiles() -> Dict[ModelGroup, Tuple[float, ...]]:
    """Hourly share of the daily total for each group (each sums to 1)."""
    shapes = {
        # flat-ish with a broad daytime plateau and heavy night traffic
        ModelGroup.INTERSTATE: 0.25 + 0.5 * _bump(8, 2.0) + 0.7 * _bump(17, 2.5) + 0.8 * _bump(13, 4.0),
        ModelGroup.ARTERIAL: 0.08 + 1.0 * _bump(7.5, 1.3) + 1.2 * _bump(17, 1.6) + 0.6 * _bump(12.5, 2.5),
        ModelGroup.COLLECTOR: 0.04 + 0.8 * _bump(7.5, 1.0) + 1.3 * _bump(16.5, 1.3) + 0.4 * _bump(12, 2.0),
    }
    return {g: tuple((s / s.sum()).tolist()) for g, s in shapes.items()}


@dataclass(frozen=True)
class SynthConfig:
    stations_per_group: Mapping[ModelGroup, int] = field(
        default_factory=lambda: {g: 10 for g in GROUP_ORDER}
    )
    aadt_range: Mapping[ModelGroup, Tuple[float, float]] = field(
        default_factory=lambda: {
            ModelGroup.INTERSTATE: (15000.0, 80000.0),
            ModelGroup.ARTERIAL: (3000.0, 30000.0),
            ModelGroup.COLLECTOR: (800.0, 12000.0),
        }
    )
    seasonal_amplitude: float = 0.1
    weekday_amplitude: float = 0.1
    noise_sigma: float = 0.05
    #: month at which each group's seasonal curve crosses 1 going up
    seasonal_phase: Mapping[ModelGroup, float] = field(
        default_factory=lambda: {
            ModelGroup.INTERSTATE: 4.0,
            ModelGroup.ARTERIAL: 2.0,
            ModelGroup.COLLECTOR: 7.0,
        }
    )
    #: weekday (Monday = 0) of each group's weekly peak
    weekday_peak: Mapping[ModelGroup, float] = field(
        default_factory=lambda: {
            ModelGroup.INTERSTATE: 4.0,
            ModelGroup.ARTERIAL: 2.0,
            ModelGroup.COLLECTOR: 1.0,
        }
    )
    profiles: Optional[Mapping[ModelGroup, Sequence[float]]] = None
    n_short_term: int = 25
    #: probability that a station reports a complete day; the rest are written with a blank hour
    coverage: float = 1.0
    year: int = 2017
    county: int = 1
    integer_volumes: bool = True
    #: optional fixed base AADTs per group, overriding the random draws
    aadt_values: Optional[Mapping[ModelGroup, Sequence[float]]] = None
    seed: int = 0

    def validate(self) -> None:
        for name in ("seasonal_amplitude", "weekday_amplitude"):
            v = getattr(self, name)
            if not 0 <= v < 1:
                raise BadConfig(f"{name} must lie in [0, 1), got {v}")
        if self.noise_sigma < 0:
            raise BadConfig("noise_sigma must be >= 0")
        if not 0 < self.coverage <= 1:
            raise BadConfig("coverage must lie in (0, 1]")
        if self.n_short_term < 0:
            raise BadConfig("n_short_term must be >= 0")
        for g in GROUP_ORDER:
            n = self.stations_per_group.get(g, 0)
            if n < 0:
                raise BadConfig(f"negative station count for {g}")
            if n:
                lo, hi = self.aadt_range[g]
                if not 0 < lo <= hi:
                    raise BadConfig(f"AADT range for {g} must satisfy 0 < lo <= hi")
            if self.aadt_values is not None and len(self.aadt_values.get(g, ())) != n:
                raise BadConfig(f"aadt_values for {g} must list {n} values")
        if self.n_short_term and sum(self.stations_per_group.values()) == 0:
            raise BadConfig("short-term counts requested but no stations")
        if self.profiles is not None:
            for g, p in self.profiles.items():
                if len(p) != HOURS or min(p) < 0 or not math.isclose(sum(p), 1.0, rel_tol=1e-9):
                    raise BadConfig(f"hourly profile for {g} must be 24 non-negative shares summing to 1")


@dataclass
class SynthDataset:
    config: SynthConfig
    mapping: GroupMapping
    meta: List[AtrStationMeta]
    atr: List[AtrYearData]
    incomplete_days: Dict[StationKey, List[dt.date]]
    short_term: List[ShortTermRecord]
    truth: Dict[StationKey, float]
    base_aadt: Dict[StationKey, float]
    true_factors: ExpansionFactorTable

    def group_of(self, key: StationKey) -> ModelGroup:
        fclass = next(m.fclass for m in self.meta if m.key == key)
        return self.mapping.entries[fclass]

    def misgrouped_factors(self) -> ExpansionFactorTable:
        """True factors assigned to the wrong class columns (groups rotated by one)."""
        return rotate_factor_groups(self.true_factors)

    def write(self, directory) -> Dict[str, Path]:
        """Emit every input file in the ingest formats; returns name -> path."""
        root = Path(directory)
        atr_dir = root / "atr"
        atr_dir.mkdir(parents=True, exist_ok=True)
        by_key = {d.station: d for d in self.atr}
        for m in self.meta:
            rows = []
            data = by_key.get(m.key)
            if data is not None:
                rows += [(d.date, d.volumes) for d in data.days]
            for date in self.incomplete_days.get(m.key, []):
                rows.append((date, [0] * (HOURS - 1) + [None]))
            rows.sort(key=lambda r: r[0])
            (atr_dir / atr_filename(m.key)).write_text(write_atr_file(rows))
        paths = {
            "atr_dir": atr_dir,
            "atr_list": root / "atr_list.csv",
            "mapping": root / "mapping.csv",
            "counts": root / "counts.csv",
            "factors": root / "factors.csv",
            "factors_misgrouped": root / "factors_misgrouped.csv",
            "truth": root / "truth.csv",
        }
        paths["atr_list"].write_text(write_atr_list(self.meta))
        paths["mapping"].write_text(write_group_mapping(self.mapping))
        paths["counts"].write_text(write_short_term_counts(self.short_term))
        paths["factors"].write_text(write_expansion_factors(self.true_factors))
        paths["factors_misgrouped"].write_text(write_expansion_factors(self.misgrouped_factors()))
        paths["truth"].write_text(write_truth(self.truth))
        return paths


def rotate_factor_groups(table: ExpansionFactorTable) -> ExpansionFactorTable:
    classes = [GROUP_CLASS[g] for g in GROUP_ORDER]
    source = {c: classes[(i - 1) % len(classes)] for i, c in enumerate(classes)}
    axle = {c: table.axle[source.get(c, c)] for c in table.classes}
    seasonal = {
        (c, m): table.seasonal[(source.get(c, c), m)] for c in table.classes for m in range(1, 13)
    }
    return ExpansionFactorTable(table.classes, axle, seasonal)


def _year_days(year: int) -> List[dt.date]:
    d0 = dt.date(year, 1, 1)
    n = (dt.date(year + 1, 1, 1) - d0).days
    return [d0 + dt.timedelta(days=k) for k in range(n)]


def _multipliers(cfg: SynthConfig, group: ModelGroup, days: Sequence[dt.date]) -> np.ndarray:
    months = np.array([d.month for d in days], dtype=float)
    wdays = np.array([d.weekday() for d in days], dtype=float)
    seasonal = 1.0 + cfg.seasonal_amplitude * np.sin(
        2 * np.pi * (months - cfg.seasonal_phase[group]) / 12.0
    )
    weekly = 1.0 + cfg.weekday_amplitude * np.cos(
        2 * np.pi * (wdays - cfg.weekday_peak[group]) / 7.0
    )
    m = seasonal * weekly
    return m / m.mean()


def _spread(total: float, profile: np.ndarray, integer: bool) -> Tuple[float, ...]:
    """Split a daily total over the hours; integer mode keeps the exact total."""
    raw = total * profile
    if not integer:
        return tuple(raw.tolist())
    floor = np.floor(raw)
    short = int(round(total - floor.sum()))
    order = np.argsort(-(raw - floor), kind="stable")
    floor[order[:short]] += 1
    return tuple(int(v) for v in floor)


def synth_generate(cfg: SynthConfig) -> SynthDataset:
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    profiles = {g: np.asarray(p, dtype=float) for g, p in (cfg.profiles or default_profiles()).items()}
    days = _year_days(cfg.year)
    mapping = GroupMapping({GROUP_CLASS[g]: g for g in GROUP_ORDER})

    meta: List[AtrStationMeta] = []
    base: Dict[StationKey, float] = {}
    daily: Dict[StationKey, List[Optional[Tuple]]] = {}
    station_id = 0
    for g in GROUP_ORDER:
        mult = _multipliers(cfg, g, days)
        for s in range(cfg.stations_per_group.get(g, 0)):
            station_id += 1
            key = StationKey(cfg.county, station_id)
            meta.append(AtrStationMeta(key, GROUP_CLASS[g]))
            if cfg.aadt_values is not None:
                aadt = float(cfg.aadt_values[g][s])
            else:
                lo, hi = cfg.aadt_range[g]
                aadt = math.exp(rng.uniform(math.log(lo), math.log(hi)))
            if cfg.integer_volumes:
                aadt = float(round(aadt))
            base[key] = aadt
            noise = np.exp(rng.normal(0.0, cfg.noise_sigma, len(days))) if cfg.noise_sigma else np.ones(len(days))
            covered = rng.random(len(days)) < cfg.coverage if cfg.coverage < 1 else np.ones(len(days), bool)
            totals = aadt * mult * noise
            if cfg.integer_volumes:
                totals = np.round(totals)
            daily[key] = [
                _spread(totals[k], profiles[g], cfg.integer_volumes) if covered[k] else None
                for k in range(len(days))
            ]

    # hold out one complete day per short-term count, cycling through the groups
    by_group = {g: [m.key for m in meta if mapping.entries[m.fclass] is g] for g in GROUP_ORDER}
    groups_with_stations = [g for g in GROUP_ORDER if by_group[g]]
    short_term: List[ShortTermRecord] = []
    pools = {g: [] for g in groups_with_stations}
    for i in range(cfg.n_short_term):
        g = groups_with_stations[i % len(groups_with_stations)]
        if not pools[g]:
            pools[g] = list(rng.permutation(len(by_group[g])))
        key = by_group[g][int(pools[g].pop())]
        avail = [k for k, v in enumerate(daily[key]) if v is not None]
        if len(avail) < 2:
            raise BadConfig(f"station {key} has too few complete days to hold one out")
        k = int(rng.choice(avail))
        short_term.append(ShortTermRecord(key, days[k], GROUP_CLASS[g], 1.0, daily[key][k]))
        daily[key][k] = "held-out"

    atr: List[AtrYearData] = []
    incomplete: Dict[StationKey, List[dt.date]] = {}
    truth: Dict[StationKey, float] = {}
    for m in meta:
        series = daily[m.key]
        complete = tuple(
            DailyCount(days[k], v) for k, v in enumerate(series) if isinstance(v, tuple)
        )
        incomplete[m.key] = [days[k] for k, v in enumerate(series) if v is None]
        data = AtrYearData(m.key, cfg.year, complete)
        atr.append(data)
        truth[m.key] = compute_station_aadt(data)

    return SynthDataset(
        config=cfg,
        mapping=mapping,
        meta=meta,
        atr=atr,
        incomplete_days=incomplete,
        short_term=short_term,
        truth=truth,
        base_aadt=base,
        true_factors=true_factor_table(cfg),
    )


def true_factor_table(cfg: SynthConfig) -> ExpansionFactorTable:
    """Monthly expansion factors implied by the generator's curves (axle factor 1).

    The factor for a month is the reciprocal of the mean day multiplier in that
    month, so with no weekday swing and no noise it maps any day's total back
    to the base AADT.
    """
    days = _year_days(cfg.year)
    months = np.array([d.month for d in days])
    classes = tuple(GROUP_CLASS[g] for g in GROUP_ORDER)
    axle = {c: 1.0 for c in classes}
    seasonal = {}
    for g in GROUP_ORDER:
        mult = _multipliers(cfg, g, days)
        for month in range(1, 13):
            seasonal[(GROUP_CLASS[g], month)] = float(1.0 / mult[months == month].mean())
    return ExpansionFactorTable(classes, axle, seasonal)
