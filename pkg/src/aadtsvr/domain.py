"""Value types shared across the package: stations, classes, model groups, days."""

from __future__ import annotations

import datetime as dt
import enum
from dataclasses import dataclass
from typing import Mapping, Sequence

from .errors import AadtError, UnmappedClass

HOURS = 24

#: Functional-class codes in the header row of the expansion factor file.
DEFAULT_CLASS_CODES = (2, 3, 4, 5, 9, 12, 13, 14, 15, 18)


class ModelGroup(enum.Enum):
    INTERSTATE = "Interstate"
    ARTERIAL = "Arterial"
    COLLECTOR = "Collector"

    @classmethod
    def parse(cls, text: str) -> "ModelGroup":
        key = text.strip().lower()
        for g in cls:
            if g.value.lower() == key:
                return g
        raise ValueError(f"unknown model group {text!r}")

    def __str__(self) -> str:
        return self.value


#: Fixed order used by the hyperparameter file and reports.
GROUP_ORDER = (ModelGroup.INTERSTATE, ModelGroup.ARTERIAL, ModelGroup.COLLECTOR)


@dataclass(frozen=True, order=True)
class StationKey:
    county: int
    station: int

    def __post_init__(self) -> None:
        if self.county < 1 or self.station < 1:
            raise ValueError(f"county and station must be >= 1, got {self.county}/{self.station}")

    def __str__(self) -> str:
        return f"{self.county}_{self.station}"


@dataclass(frozen=True)
class GroupMapping:
    """Functional class code to model group. Unknown codes are an error."""

    entries: Mapping[int, ModelGroup]

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", dict(self.entries))

    def __contains__(self, fclass: int) -> bool:
        return fclass in self.entries

    def __hash__(self) -> int:
        return hash(tuple(sorted((k, v.value) for k, v in self.entries.items())))

    @classmethod
    def default(cls) -> "GroupMapping":
        return cls(
            {
                12: ModelGroup.INTERSTATE,
                2: ModelGroup.ARTERIAL,
                4: ModelGroup.COLLECTOR,
            }
        )


def map_class_to_group(fclass: int, mapping: GroupMapping) -> ModelGroup:
    try:
        return mapping.entries[fclass]
    except KeyError:
        raise UnmappedClass(fclass) from None


def _check_volumes(volumes: Sequence[float]) -> tuple:
    vols = tuple(volumes)
    if len(vols) != HOURS:
        raise AadtError(f"expected {HOURS} hourly volumes, got {len(vols)}")
    if any(v < 0 for v in vols):
        raise AadtError("hourly volumes must be non-negative")
    return vols


@dataclass(frozen=True)
class DailyCount:
    """24 hourly volumes for one calendar day; index 0 is Hour1."""

    date: dt.date
    volumes: tuple

    def __post_init__(self) -> None:
        object.__setattr__(self, "volumes", _check_volumes(self.volumes))


@dataclass(frozen=True)
class ShortTermRecord:
    key: StationKey
    date: dt.date
    fclass: int
    growth_factor: float
    volumes: tuple

    def __post_init__(self) -> None:
        if not self.growth_factor > 0:
            raise AadtError(f"growth factor must be positive, got {self.growth_factor}")
        object.__setattr__(self, "volumes", _check_volumes(self.volumes))


def day_of_week(date: dt.date) -> int:
    """Weekday with Monday = 0."""
    return date.weekday()


def total_volume(day) -> float:
    """Sum of the 24 hourly volumes of a DailyCount or ShortTermRecord."""
    return sum(day.volumes)


def parse_mdy(text: str) -> dt.date:
    """Parse ``M/D/YYYY`` (leading zeros optional)."""
    parts = text.strip().split("/")
    if len(parts) != 3 or len(parts[2]) != 4:
        raise ValueError(f"expected M/D/YYYY, got {text!r}")
    month, day, year = (int(p) for p in parts)
    return dt.date(year, month, day)


def format_mdy(date: dt.date) -> str:
    return f"{date.month}/{date.day}/{date.year}"
