"""AADT estimation pipelines: SVR per model group and the expansion-factor baseline."""

from __future__ import annotations

import dataclasses
import hashlib
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

from .domain import (
    GROUP_ORDER,
    GroupMapping,
    ModelGroup,
    ShortTermRecord,
    StationKey,
    day_of_week,
    map_class_to_group,
    total_volume,
)
from .errors import (
    InconsistentClass,
    NoCompleteDays,
    UnknownStation,
    UntrainedGroup,
    ZeroFactor,
)
from .ingest import (
    AtrStationMeta,
    AtrYearData,
    EstimateRecord,
    ExpansionFactorTable,
    HyperparamTable,
)
from .svr import DEFAULT_EPSILON, DEFAULT_TOL, Sample, SvrHyperparams, SvrModel, fit_svr, predict
from .tuning import CvResult, GridSpec, grid_search

log = logging.getLogger(__name__)

#: Hyperparameters written for a group that had no training data.
UNTRAINED_PLACEHOLDER = (1.0, 1.0)


@dataclass
class TrainingSet:
    group: ModelGroup
    samples: List[Sample] = field(default_factory=list)
    targets: List[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.samples)


@dataclass
class ModelSuite:
    models: Dict[ModelGroup, SvrModel]
    untrained: Dict[ModelGroup, str]
    year: Optional[int] = None
    atr_digest: Optional[str] = None
    cv_results: Dict[ModelGroup, CvResult] = field(default_factory=dict)

    def model(self, group: ModelGroup) -> SvrModel:
        if group in self.models:
            return self.models[group]
        raise UntrainedGroup(group, self.untrained.get(group, ""))


def compute_station_aadt(data: AtrYearData) -> float:
    """Mean daily volume over the complete days on file."""
    if not data.days:
        raise NoCompleteDays(f"station {data.station} has no complete days in {data.year}")
    return sum(total_volume(d) for d in data.days) / len(data.days)


def atr_digest(atr: Sequence[AtrYearData]) -> str:
    h = hashlib.sha256()
    for data in sorted(atr, key=lambda d: d.station):
        h.update(f"{data.station}|{data.year}\n".encode())
        for d in data.days:
            h.update(f"{d.date.isoformat()},{','.join(str(v) for v in d.volumes)}\n".encode())
    return h.hexdigest()


def build_training_set(
    atr: Sequence[AtrYearData],
    meta: Sequence[AtrStationMeta],
    mapping: GroupMapping,
) -> Dict[ModelGroup, TrainingSet]:
    """One sample per complete ATR day, labelled with that station's AADT."""
    classes = {m.key: m.fclass for m in meta}
    sets = {g: TrainingSet(g) for g in GROUP_ORDER}
    for data in atr:
        if data.station not in classes:
            raise UnknownStation(data.station)
        group = map_class_to_group(classes[data.station], mapping)
        aadt = compute_station_aadt(data)
        ts = sets[group]
        for d in data.days:
            ts.samples.append((d.volumes, day_of_week(d.date), d.date.month))
            ts.targets.append(aadt)
    return sets


def train_suite(
    sets: Dict[ModelGroup, TrainingSet],
    params: Union[GridSpec, HyperparamTable],
    *,
    tol: float = DEFAULT_TOL,
    epsilon: float = DEFAULT_EPSILON,
    progress: Optional[Callable[[int, int], None]] = None,
    workers: int = 1,
    year: Optional[int] = None,
    digest: Optional[str] = None,
) -> Tuple[ModelSuite, HyperparamTable]:
    """Fit the three group models.

    With a ``GridSpec`` each group is grid-searched first and refit on all of
    its samples with the winning (C, gamma). With a ``HyperparamTable`` the
    search is skipped. Empty groups are marked untrained. Returns the suite
    (grid results in ``suite.cv_results``) and the table actually used.
    """
    grid = isinstance(params, GridSpec)
    if grid:
        epsilon = params.epsilon
        tol = params.tol
    trained_groups = [g for g in GROUP_ORDER if len(sets.get(g, ())) > 0]
    total = params.n_cells * len(trained_groups) if grid else 0
    done_before = 0

    models: Dict[ModelGroup, SvrModel] = {}
    untrained: Dict[ModelGroup, str] = {}
    chosen: Dict[ModelGroup, Tuple[float, float]] = {}
    cv: Dict[ModelGroup, CvResult] = {}
    for group in GROUP_ORDER:
        ts = sets.get(group)
        if ts is None or len(ts) == 0:
            untrained[group] = "no ATR stations in this group"
            chosen[group] = params[group] if not grid else UNTRAINED_PLACEHOLDER
            log.warning("group %s has no training data; left untrained", group)
            continue
        if grid:
            offset = done_before

            def report(done, _total, offset=offset):
                if progress:
                    progress(offset + done, total)

            result = grid_search(ts.samples, ts.targets, params, progress=report, workers=workers)
            cv[group] = result
            c, gamma = result.best_params
            done_before += params.n_cells
        else:
            c, gamma = params[group]
        chosen[group] = (c, gamma)
        models[group] = fit_svr(ts.samples, ts.targets, SvrHyperparams(c, gamma, epsilon), tol)
    suite = ModelSuite(models, untrained, year, digest, cv)
    return suite, HyperparamTable(chosen)


def apply_growth_factor(rec: ShortTermRecord) -> ShortTermRecord:
    """Project the hourly volumes to the current year; the result has factor 1."""
    gf = rec.growth_factor
    return dataclasses.replace(
        rec, volumes=tuple(float(v) * gf for v in rec.volumes), growth_factor=1.0
    )


def svr_estimate(suite: ModelSuite, mapping: GroupMapping, rec: ShortTermRecord) -> float:
    group = map_class_to_group(rec.fclass, mapping)
    model = suite.model(group)
    return predict(model, (rec.volumes, day_of_week(rec.date), rec.date.month))


def factor_estimate(table: ExpansionFactorTable, rec: ShortTermRecord) -> float:
    """24-hour total times the axle factor and the month's seasonal factor."""
    month = rec.date.month
    axle = table.axle.get(rec.fclass, 0.0)
    if axle == 0:
        raise ZeroFactor(rec.fclass, month, "axle")
    seasonal = table.seasonal.get((rec.fclass, month), 0.0)
    if seasonal == 0:
        raise ZeroFactor(rec.fclass, month, "seasonal")
    return total_volume(rec) * axle * seasonal


def round_half_away(x: float) -> int:
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def aggregate_estimates(
    per_record: Sequence[Tuple[StationKey, int, float, float]],
) -> List[EstimateRecord]:
    """One record per station: mean of each estimate, rounded half away from zero."""
    order: List[StationKey] = []
    acc: Dict[StationKey, List] = {}
    for key, fclass, svr, factor in per_record:
        if key not in acc:
            order.append(key)
            acc[key] = [fclass, [], []]
        elif acc[key][0] != fclass:
            raise InconsistentClass(key, {acc[key][0], fclass})
        acc[key][1].append(svr)
        acc[key][2].append(factor)
    return [
        EstimateRecord(
            key,
            acc[key][0],
            round_half_away(sum(acc[key][1]) / len(acc[key][1])),
            round_half_away(sum(acc[key][2]) / len(acc[key][2])),
        )
        for key in order
    ]


def estimate(
    suite: ModelSuite,
    mapping: GroupMapping,
    factors: ExpansionFactorTable,
    records: Sequence[ShortTermRecord],
    progress: Optional[Callable[[int, int], None]] = None,
) -> List[EstimateRecord]:
    """Growth projection, both estimators, then per-station aggregation."""
    rows = []
    for i, rec in enumerate(records, start=1):
        projected = apply_growth_factor(rec)
        rows.append(
            (
                rec.key,
                rec.fclass,
                svr_estimate(suite, mapping, projected),
                factor_estimate(factors, projected),
            )
        )
        if progress:
            progress(i, len(records))
    return aggregate_estimates(rows)
