"""Readers and writers for the CSV files the estimator consumes and produces.

Formats:

* short-term counts: ``County,Station,Date,FClass,GF,Hour1..Hour24``
* expansion factors: class codes across row 1, axle factors in row 2, the
  twelve monthly seasonal factors in rows 3-14; blank cells read as 0
* SVR parameters: ``C,Gamma`` then one row each for the interstate, arterial
  and collector models
* ATR list: ``County,Station,FClass``
* ATR hourly data: one ``<county>_<station>.csv`` per station with
  ``Date,Hour1..Hour24``
* group mapping: ``FClass,Group``
* output: ``County,Station,Functional_Class,AADT-SVR,AADT-Factor`` in
  ``Output_MM.DD.YYYY_HH.MM.CSV``

Files are comma separated without quoting; CRLF is accepted on read and LF
written.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .domain import (
    GROUP_ORDER,
    HOURS,
    DailyCount,
    GroupMapping,
    ModelGroup,
    ShortTermRecord,
    StationKey,
    format_mdy,
    parse_mdy,
)
from .errors import (
    AadtError,
    BadClassCode,
    BadDate,
    DuplicateStation,
    MissingGrowthFactor,
    MissingHeader,
    NonNumericCell,
    NonNumericVolume,
    NonPositiveParam,
    ParseError,
    WrongRowCount,
)

log = logging.getLogger(__name__)

HOUR_COLUMNS = tuple(f"Hour{h}" for h in range(1, HOURS + 1))
SHORT_TERM_HEADER = ("County", "Station", "Date", "FClass", "GF") + HOUR_COLUMNS
ATR_FILE_HEADER = ("Date",) + HOUR_COLUMNS
ATR_LIST_HEADER = ("County", "Station", "FClass")
HYPERPARAM_HEADER = ("C", "Gamma")
MAPPING_HEADER = ("FClass", "Group")
OUTPUT_HEADER = ("County", "Station", "Functional_Class", "AADT-SVR", "AADT-Factor")
MONTH_NAMES = (
    "Jan", "Feb", "Mar", "Apr", "May", "Jun",
    "Jul", "Aug", "Sep", "Oct", "Nov", "Dec",
)


# --------------------------------------------------------------------------
# types


@dataclass(frozen=True)
class ExpansionFactorTable:
    """Axle factor and twelve monthly seasonal factors per functional class.

    Blank cells are stored as 0.0; ``factor_estimate`` refuses to use them.
    """

    classes: Tuple[int, ...]
    axle: Dict[int, float]
    seasonal: Dict[Tuple[int, int], float]


@dataclass(frozen=True)
class HyperparamTable:
    """(C, gamma) per model group, always in interstate/arterial/collector order."""

    params: Dict[ModelGroup, Tuple[float, float]]

    def __post_init__(self) -> None:
        if set(self.params) != set(GROUP_ORDER):
            raise ValueError("hyperparameter table needs exactly the three model groups")
        for g, (c, gamma) in self.params.items():
            if not (c > 0 and gamma > 0):
                raise NonPositiveParam(f"{g}: C and gamma must be positive, got {c}, {gamma}")

    def __getitem__(self, group: ModelGroup) -> Tuple[float, float]:
        return self.params[group]

    def rows(self) -> List[Tuple[float, float]]:
        return [self.params[g] for g in GROUP_ORDER]


@dataclass(frozen=True)
class AtrStationMeta:
    key: StationKey
    fclass: int


@dataclass(frozen=True)
class AtrYearData:
    station: StationKey
    year: int
    days: Tuple[DailyCount, ...]


@dataclass(frozen=True)
class EstimateRecord:
    key: StationKey
    fclass: int
    aadt_svr: int
    aadt_factor: int

    def __post_init__(self) -> None:
        if self.aadt_svr < 0 or self.aadt_factor < 0:
            raise ValueError("AADT estimates must be non-negative")


@dataclass
class AtrLoadReport:
    """What ``load_atr_year`` skipped, keyed by station."""

    missing_files: List[StationKey] = field(default_factory=list)
    dropped_days: Dict[StationKey, int] = field(default_factory=dict)
    out_of_year_rows: Dict[StationKey, int] = field(default_factory=dict)
    duplicate_dates: Dict[StationKey, int] = field(default_factory=dict)
    empty_stations: List[StationKey] = field(default_factory=list)

    @property
    def warnings(self) -> List[str]:
        out = [f"{k}: no ATR data file" for k in self.missing_files]
        out += [f"{k}: no complete days, station excluded" for k in self.empty_stations]
        return out


# --------------------------------------------------------------------------
# low-level helpers


def _rows(text: str) -> List[Tuple[int, List[str]]]:
    """(1-based line number, stripped cells) for each non-blank row."""
    out = []
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        cells = [c.strip() for c in row]
        if not any(cells):
            continue
        out.append((lineno, cells))
    return out


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def _to_int(text: str, what: str, row: int, col: int) -> int:
    try:
        return int(text)
    except ValueError:
        raise ParseError(f"{what} must be an integer, got {text!r}", row, col) from None


def _to_float(text: str, row: int, col: int, exc=NonNumericCell) -> float:
    if text == "":
        return 0.0
    try:
        v = float(text)
    except ValueError:
        raise exc(f"not a number: {text!r}", row, col) from None
    if not math.isfinite(v):
        raise exc(f"not a finite number: {text!r}", row, col)
    return v


def _volume(text: str, row: int, col: int) -> int:
    if text == "":
        raise NonNumericVolume("hourly volume is blank", row, col)
    try:
        v = float(text)
    except ValueError:
        raise NonNumericVolume(f"hourly volume is not a number: {text!r}", row, col) from None
    if not (math.isfinite(v) and v >= 0 and v.is_integer()):
        raise NonNumericVolume(f"hourly volume must be a non-negative integer, got {text!r}", row, col)
    return int(v)


def _date(text: str, row: int, col: int) -> dt.date:
    try:
        return parse_mdy(text)
    except ValueError:
        raise BadDate(f"bad date {text!r}, expected M/D/YYYY", row, col) from None


def _require_header(rows, expected: Sequence[str], what: str) -> List[Tuple[int, List[str]]]:
    if not rows:
        raise MissingHeader(f"{what}: file is empty, row 1 must hold the headings")
    lineno, cells = rows[0]
    if _is_number(cells[0]) or len([c for c in cells if c]) < len(expected):
        raise MissingHeader(
            f"{what}: row 1 must hold the headings {','.join(expected)}", lineno
        )
    return rows[1:]


def fmt_number(x: float) -> str:
    """Shortest text that reads back to exactly ``x``; integral values lose the '.0'."""
    x = float(x)
    if x.is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def _write(rows: Iterable[Sequence[object]]) -> str:
    return "".join(",".join(str(c) for c in row) + "\n" for row in rows)


def _positive_int(text: str, what: str, row: int, col: int) -> int:
    v = _to_int(text, what, row, col)
    if v < 1:
        raise ParseError(f"{what} must be >= 1, got {v}", row, col)
    return v


# --------------------------------------------------------------------------
# short-term counts


def parse_short_term_counts(text: str) -> List[ShortTermRecord]:
    rows = _require_header(_rows(text), SHORT_TERM_HEADER, "short-term counts")
    records = []
    for lineno, cells in rows:
        if len(cells) < len(SHORT_TERM_HEADER):
            cells = cells + [""] * (len(SHORT_TERM_HEADER) - len(cells))
        county = _positive_int(cells[0], "county", lineno, 1)
        station = _positive_int(cells[1], "station", lineno, 2)
        date = _date(cells[2], lineno, 3)
        fclass = _to_int(cells[3], "functional class", lineno, 4)
        gf = _to_float(cells[4], lineno, 5)
        if gf == 0:
            raise MissingGrowthFactor(lineno)
        if gf < 0:
            raise ParseError(f"growth factor must be positive, got {cells[4]}", lineno, 5)
        vols = tuple(_volume(cells[5 + h], lineno, 6 + h) for h in range(HOURS))
        records.append(ShortTermRecord(StationKey(county, station), date, fclass, gf, vols))
    return records


def write_short_term_counts(records: Sequence[ShortTermRecord]) -> str:
    rows: List[Sequence[object]] = [SHORT_TERM_HEADER]
    for r in records:
        rows.append(
            [r.key.county, r.key.station, format_mdy(r.date), r.fclass, fmt_number(r.growth_factor)]
            + [fmt_number(v) for v in r.volumes]
        )
    return _write(rows)


# --------------------------------------------------------------------------
# expansion factors


def parse_expansion_factors(text: str) -> ExpansionFactorTable:
    rows = _rows(text)
    if len(rows) != 14:
        raise WrongRowCount(
            f"expansion factor file needs 14 rows (classes, axle, 12 months), found {len(rows)}"
        )
    head_line, head = rows[0]
    while head and head[-1] == "":
        head.pop()
    classes = []
    for c, cell in enumerate(head[1:], start=2):
        try:
            classes.append(int(cell))
        except ValueError:
            raise NonNumericCell(f"functional class code must be an integer, got {cell!r}", head_line, c) from None
    if len(set(classes)) != len(classes):
        raise ParseError("functional class listed twice in row 1", head_line)

    def values(lineno, cells):
        vals = []
        for c in range(len(classes)):
            cell = cells[c + 1] if c + 1 < len(cells) else ""
            v = _to_float(cell, lineno, c + 2)
            if v < 0:
                raise NonNumericCell(f"factor must be non-negative, got {cell}", lineno, c + 2)
            vals.append(v)
        return vals

    axle = dict(zip(classes, values(*rows[1])))
    seasonal = {}
    for month, (lineno, cells) in enumerate(rows[2:], start=1):
        for fc, v in zip(classes, values(lineno, cells)):
            seasonal[(fc, month)] = v
    return ExpansionFactorTable(tuple(classes), axle, seasonal)


def write_expansion_factors(table: ExpansionFactorTable) -> str:
    def cell(v):
        return "" if v == 0 else fmt_number(v)

    rows: List[Sequence[object]] = [["FC"] + [str(c) for c in table.classes]]
    rows.append(["Axle_f"] + [cell(table.axle[c]) for c in table.classes])
    for month in range(1, 13):
        label = "Seasonal_f" if month == 1 else ""
        rows.append([label] + [cell(table.seasonal[(c, month)]) for c in table.classes])
    return _write(rows)


# --------------------------------------------------------------------------
# SVR hyperparameters


def parse_hyperparams(text: str) -> HyperparamTable:
    rows = _rows(text)
    if not rows or [c.lower() for c in rows[0][1][:2]] != ["c", "gamma"]:
        raise MissingHeader("parameter file: row 1 must be 'C,Gamma'", 1)
    body = rows[1:]
    if len(body) != 3:
        raise WrongRowCount(
            f"parameter file needs 3 rows (interstate, arterial, collector), found {len(body)}"
        )
    params = {}
    for group, (lineno, cells) in zip(GROUP_ORDER, body):
        cells = cells + [""] * (2 - len(cells))
        c = _to_float(cells[0], lineno, 1)
        gamma = _to_float(cells[1], lineno, 2)
        if c <= 0 or gamma <= 0:
            raise NonPositiveParam(f"C and gamma must be positive, got {cells[0]!r}, {cells[1]!r}", lineno)
        params[group] = (c, gamma)
    return HyperparamTable(params)


def write_hyperparams(table: HyperparamTable) -> str:
    return _write([HYPERPARAM_HEADER] + [(fmt_number(c), fmt_number(g)) for c, g in table.rows()])


# --------------------------------------------------------------------------
# ATR list and group mapping


def parse_atr_list(text: str, class_codes: Optional[Iterable[int]] = None) -> List[AtrStationMeta]:
    """Parse the ATR list; ``class_codes`` optionally restricts the allowed classes."""
    allowed = set(class_codes) if class_codes is not None else None
    rows = _require_header(_rows(text), ATR_LIST_HEADER, "ATR list")
    out: List[AtrStationMeta] = []
    seen = set()
    for lineno, cells in rows:
        cells = cells + [""] * (3 - len(cells))
        key = StationKey(
            _positive_int(cells[0], "county", lineno, 1),
            _positive_int(cells[1], "station", lineno, 2),
        )
        try:
            fclass = int(cells[2])
        except ValueError:
            raise BadClassCode(f"functional class must be an integer, got {cells[2]!r}", lineno, 3) from None
        if allowed is not None and fclass not in allowed:
            raise BadClassCode(f"functional class {fclass} is not a known code", lineno, 3)
        if key in seen:
            raise DuplicateStation(key, lineno)
        seen.add(key)
        out.append(AtrStationMeta(key, fclass))
    return out


def write_atr_list(stations: Sequence[AtrStationMeta]) -> str:
    return _write([ATR_LIST_HEADER] + [(m.key.county, m.key.station, m.fclass) for m in stations])


def parse_group_mapping(text: str) -> GroupMapping:
    rows = _require_header(_rows(text), MAPPING_HEADER, "group mapping")
    entries: Dict[int, ModelGroup] = {}
    for lineno, cells in rows:
        cells = cells + [""] * (2 - len(cells))
        fc = _to_int(cells[0], "functional class", lineno, 1)
        try:
            group = ModelGroup.parse(cells[1])
        except ValueError:
            raise ParseError(f"unknown model group {cells[1]!r}", lineno, 2) from None
        if fc in entries and entries[fc] is not group:
            raise ParseError(f"class {fc} mapped to two groups", lineno)
        entries[fc] = group
    return GroupMapping(entries)


def write_group_mapping(mapping: GroupMapping) -> str:
    return _write([MAPPING_HEADER] + [(fc, g.value) for fc, g in sorted(mapping.entries.items())])


# --------------------------------------------------------------------------
# ATR hourly files


def atr_filename(key: StationKey) -> str:
    return f"{key.county}_{key.station}.csv"


def write_atr_file(days: Iterable[Tuple[dt.date, Sequence[Optional[float]]]]) -> str:
    """Render ATR rows; ``None`` hours are written blank (an incomplete day)."""
    rows: List[Sequence[object]] = [ATR_FILE_HEADER]
    for date, vols in days:
        rows.append([format_mdy(date)] + ["" if v is None else fmt_number(v) for v in vols])
    return _write(rows)


def parse_atr_file(
    text: str, key: StationKey, year: int, report: Optional[AtrLoadReport] = None
) -> AtrYearData:
    report = report if report is not None else AtrLoadReport()
    rows = _require_header(_rows(text), ATR_FILE_HEADER, f"ATR file {atr_filename(key)}")
    days: Dict[dt.date, DailyCount] = {}
    dropped = out_of_year = dupes = 0
    for lineno, cells in rows:
        cells = cells + [""] * (1 + HOURS - len(cells))
        date = _date(cells[0], lineno, 1)
        if date.year != year:
            out_of_year += 1
            continue
        hours = cells[1 : 1 + HOURS]
        if any(h == "" for h in hours):
            dropped += 1
            continue
        vols = tuple(_volume(h, lineno, c) for c, h in enumerate(hours, start=2))
        if date in days:
            dupes += 1
            continue
        days[date] = DailyCount(date, vols)
    if dropped:
        report.dropped_days[key] = dropped
    if out_of_year:
        report.out_of_year_rows[key] = out_of_year
    if dupes:
        report.duplicate_dates[key] = dupes
    return AtrYearData(key, year, tuple(days[d] for d in sorted(days)))


def load_atr_year(
    directory,
    stations: Sequence[AtrStationMeta],
    year: int,
    report: Optional[AtrLoadReport] = None,
) -> List[AtrYearData]:
    """Load complete days for ``year`` for every listed station that has a file.

    Missing files and stations without a single complete day are logged,
    recorded in ``report`` and left out of the result.
    """
    report = report if report is not None else AtrLoadReport()
    directory = Path(directory)
    out = []
    for meta in stations:
        path = directory / atr_filename(meta.key)
        if not path.is_file():
            log.warning("ATR data file missing for station %s (%s)", meta.key, path)
            report.missing_files.append(meta.key)
            continue
        data = parse_atr_file(path.read_text(), meta.key, year, report)
        if not data.days:
            log.warning("station %s has no complete days in %d; excluded", meta.key, year)
            report.empty_stations.append(meta.key)
            continue
        out.append(data)
    return out


# --------------------------------------------------------------------------
# output


def output_filename(timestamp: dt.datetime) -> str:
    return f"Output_{timestamp:%m.%d.%Y_%H.%M}.CSV"


def format_output(records: Sequence[EstimateRecord]) -> str:
    seen = set()
    for r in records:
        if r.key in seen:
            raise AadtError(f"station {r.key} appears twice; aggregate estimates first")
        seen.add(r.key)
    return _write(
        [OUTPUT_HEADER]
        + [(r.key.county, r.key.station, r.fclass, r.aadt_svr, r.aadt_factor) for r in records]
    )


def write_output(records: Sequence[EstimateRecord], timestamp: dt.datetime, directory) -> Path:
    path = Path(directory) / output_filename(timestamp)
    path.write_text(format_output(records))
    return path


def parse_output(text: str) -> List[EstimateRecord]:
    rows = _require_header(_rows(text), OUTPUT_HEADER, "output file")
    out = []
    for lineno, cells in rows:
        cells = cells + [""] * (5 - len(cells))
        out.append(
            EstimateRecord(
                StationKey(
                    _positive_int(cells[0], "county", lineno, 1),
                    _positive_int(cells[1], "station", lineno, 2),
                ),
                _to_int(cells[2], "functional class", lineno, 3),
                _to_int(cells[3], "AADT-SVR", lineno, 4),
                _to_int(cells[4], "AADT-Factor", lineno, 5),
            )
        )
    return out


# --------------------------------------------------------------------------
# ground truth (evaluation input)

TRUTH_HEADER = ("County", "Station", "AADT")


def parse_truth(text: str) -> Dict[StationKey, float]:
    rows = _require_header(_rows(text), TRUTH_HEADER, "ground truth")
    out: Dict[StationKey, float] = {}
    for lineno, cells in rows:
        cells = cells + [""] * (3 - len(cells))
        key = StationKey(
            _positive_int(cells[0], "county", lineno, 1),
            _positive_int(cells[1], "station", lineno, 2),
        )
        if key in out:
            raise DuplicateStation(key, lineno)
        if cells[2] == "":
            raise NonNumericCell("AADT is blank", lineno, 3)
        out[key] = _to_float(cells[2], lineno, 3)
    return out


def write_truth(truth: Dict[StationKey, float]) -> str:
    return _write([TRUTH_HEADER] + [(k.county, k.station, fmt_number(v)) for k, v in truth.items()])
