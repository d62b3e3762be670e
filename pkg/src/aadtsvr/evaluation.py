"""Absolute percentage errors, MAPE and the per-group comparison report."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Sequence, Tuple

from .domain import GROUP_ORDER, GroupMapping, ModelGroup, StationKey, map_class_to_group
from .errors import AadtError, EmptyInput, NonPositiveActual
from .ingest import EstimateRecord

REPORT_HEADER = ("Group", "N", "MAPE-Factor", "MAPE-SVR")


def ape(actual: float, estimate: float) -> float:
    if not actual > 0:
        raise NonPositiveActual(f"actual AADT must be positive, got {actual}")
    return 100.0 * abs(estimate - actual) / actual


def mape(pairs: Iterable[Tuple[float, float]]) -> float:
    """Mean absolute percentage error of (actual, estimate) pairs, in percent."""
    errs = [ape(a, e) for a, e in pairs]
    if not errs:
        raise EmptyInput("MAPE of an empty list")
    return sum(errs) / len(errs)


@dataclass(frozen=True)
class EvalRow:
    key: StationKey
    group: ModelGroup
    actual: float
    est_factor: float
    est_svr: float

    @property
    def ape_factor(self) -> float:
        return ape(self.actual, self.est_factor)

    @property
    def ape_svr(self) -> float:
        return ape(self.actual, self.est_svr)


@dataclass(frozen=True)
class GroupSummary:
    label: str
    n: int
    mape_factor: float
    mape_svr: float


def summarize(rows: Sequence[EvalRow], round_rows: bool = False) -> List[GroupSummary]:
    """Per-group means of the APEs plus an ``All`` row, in group order.

    ``round_rows`` rounds every row's APE to a whole percent before
    averaging, the way a table printed in whole percents averages.
    """
    if not rows:
        raise EmptyInput("no evaluation rows")

    def r(x: float) -> float:
        return float(round(x)) if round_rows else x

    def summary(label: str, subset: Sequence[EvalRow]) -> GroupSummary:
        return GroupSummary(
            label,
            len(subset),
            sum(r(x.ape_factor) for x in subset) / len(subset),
            sum(r(x.ape_svr) for x in subset) / len(subset),
        )

    out = []
    for g in GROUP_ORDER:
        subset = [x for x in rows if x.group is g]
        if subset:
            out.append(summary(g.value, subset))
    out.append(summary("All", list(rows)))
    return out


def format_report(summaries: Sequence[GroupSummary]) -> str:
    lines = [",".join(REPORT_HEADER)]
    for s in summaries:
        lines.append(f"{s.label},{s.n},{s.mape_factor:.2f},{s.mape_svr:.2f}")
    return "\n".join(lines) + "\n"


def eval_rows(
    predictions: Sequence[EstimateRecord],
    truth: Mapping[StationKey, float],
    mapping: GroupMapping,
) -> List[EvalRow]:
    """Join output records with ground truth; every predicted station needs a truth value."""
    missing = [p.key for p in predictions if p.key not in truth]
    if missing:
        raise AadtError(
            "no ground truth for station(s) " + ", ".join(str(k) for k in missing)
        )
    return [
        EvalRow(
            p.key,
            map_class_to_group(p.fclass, mapping),
            float(truth[p.key]),
            float(p.aadt_factor),
            float(p.aadt_svr),
        )
        for p in predictions
    ]


def summary_by_label(summaries: Sequence[GroupSummary]) -> Dict[str, GroupSummary]:
    return {s.label: s for s in summaries}
