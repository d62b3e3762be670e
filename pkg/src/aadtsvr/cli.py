"""Command-line entry point: ``aadt-svr {fetch,train,estimate,evaluate,synth}``.

Exit codes: 0 success, 1 input/config/usage error, 2 fetch finished with no
station downloaded.
"""

from __future__ import annotations

import argparse
import collections
import datetime as dt
import json
import logging
import os
import re
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from . import __version__
from .domain import GROUP_ORDER, GroupMapping, map_class_to_group, parse_mdy
from .errors import AadtError
from .estimators import atr_digest, build_training_set, estimate, train_suite
from .evaluation import eval_rows, format_report, summarize
from .fetch import fetch_atr_data, parse_fetch_config
from .ingest import (
    AtrLoadReport,
    AtrStationMeta,
    atr_filename,
    load_atr_year,
    parse_atr_list,
    parse_expansion_factors,
    parse_group_mapping,
    parse_hyperparams,
    parse_output,
    parse_short_term_counts,
    parse_truth,
    write_hyperparams,
    write_output,
)
from .tuning import GridSpec

log = logging.getLogger("aadtsvr")

DEFAULT_SEED = 0


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# --------------------------------------------------------------------------
# run manifest and progress


@dataclass
class RunManifest:
    subcommand: str
    inputs: Dict[str, str] = field(default_factory=dict)
    seed: Optional[int] = None
    started: str = field(default_factory=lambda: dt.datetime.now().isoformat(timespec="seconds"))
    finished: Optional[str] = None
    output: Optional[str] = None
    stages: Dict[str, float] = field(default_factory=dict)
    _t: float = field(default_factory=time.perf_counter, repr=False)

    def stage(self, name: str) -> None:
        now = time.perf_counter()
        self.stages[name] = round(now - self._t, 3)
        self._t = now

    def write(self, path: Path) -> Path:
        self.finished = dt.datetime.now().isoformat(timespec="seconds")
        body = {k: v for k, v in self.__dict__.items() if not k.startswith("_")}
        path.write_text(json.dumps(body, indent=2) + "\n")
        return path


class Progress:
    """Prints whole percentages to stderr, never going backwards."""

    def __init__(self, label: str, stream=None):
        self.label = label
        self.stream = stream or sys.stderr
        self.last = -1

    def __call__(self, done: int, total: int) -> None:
        pct = 100 if total <= 0 else min(100, int(100 * done / total))
        if pct > self.last:
            self.last = pct
            print(f"{self.label}: {pct}%", file=self.stream, flush=True)

    def finish(self) -> None:
        self(1, 1)


# --------------------------------------------------------------------------
# helpers


def _read(path) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise AadtError(f"cannot read {path}: {exc.strerror}") from None


def _year(text: str) -> int:
    if not re.fullmatch(r"\d{4}", text or ""):
        raise UsageError(f"year must be given as YYYY (e.g. 2017), got {text!r}")
    return int(text)


def _seed(arg: Optional[int]) -> int:
    env = os.environ.get("AADT_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"AADT_SEED must be an integer, got {env!r}") from None
    return DEFAULT_SEED if arg is None else arg


def _mapping(path: Optional[str]) -> GroupMapping:
    return parse_group_mapping(_read(path)) if path else GroupMapping.default()


def _infer_year(atr_dir: Path, stations: Sequence[AtrStationMeta]) -> int:
    years = collections.Counter()
    for m in stations:
        p = atr_dir / atr_filename(m.key)
        if not p.is_file():
            continue
        for line in p.read_text().splitlines()[1:]:
            cell = line.split(",", 1)[0].strip()
            if cell:
                try:
                    years[parse_mdy(cell).year] += 1
                except ValueError:
                    pass
                break
    if not years:
        raise AadtError(f"cannot infer the ATR year from {atr_dir}; pass --year")
    return years.most_common(1)[0][0]


def _load_training(args, manifest: RunManifest, mapping: GroupMapping):
    atr_dir = Path(args.atr_dir)
    stations = parse_atr_list(_read(args.atr_list))
    year = _year(args.year) if args.year else _infer_year(atr_dir, stations)
    report = AtrLoadReport()
    atr = load_atr_year(atr_dir, stations, year, report)
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    dropped = sum(report.dropped_days.values())
    if dropped:
        print(f"note: dropped {dropped} incomplete ATR day(s)", file=sys.stderr)
    sets = build_training_set(atr, stations, mapping)
    manifest.inputs.update(atr_dir=str(atr_dir.resolve()), atr_list=str(Path(args.atr_list).resolve()))
    manifest.stage("load_atr")
    return atr, sets, year


# --------------------------------------------------------------------------
# subcommands


def cmd_fetch(args) -> int:
    year = _year(args.year)
    manifest = RunManifest("fetch", seed=None)
    config = parse_fetch_config(_read(args.config))
    stations = parse_atr_list(_read(args.atr_list))
    manifest.inputs.update(config=str(Path(args.config).resolve()), atr_list=str(Path(args.atr_list).resolve()))
    out = Path(args.out)
    report = fetch_atr_data(config, stations, year, out)
    manifest.stage("fetch")
    for m in stations:
        if m.key in report.written:
            print(f"ok      {m.key}")
        else:
            print(f"FAILED  {m.key}: {report.failures[m.key]}")
    print(f"{report.n_ok} of {len(stations)} station(s) fetched into {out}")
    manifest.output = str(out.resolve())
    manifest.write(out / "fetch_manifest.json")
    return 0 if report.n_ok > 0 else 2


def cmd_train(args) -> int:
    manifest = RunManifest("train")
    mapping = _mapping(args.mapping)
    atr, sets, year = _load_training(args, manifest, mapping)
    progress = Progress("grid search")
    if args.grid:
        seed = _seed(args.seed)
        manifest.seed = seed
        spec = GridSpec(
            c_exponents=tuple(args.c_range),
            gamma_exponents=tuple(args.gamma_range),
            step=args.step,
            folds=args.folds,
            seed=seed,
        )
        params = spec
    else:
        params = parse_hyperparams(_read(args.params_in))
        manifest.inputs["params_in"] = str(Path(args.params_in).resolve())
    suite, table = train_suite(
        sets, params, progress=progress, workers=args.workers, year=year, digest=atr_digest(atr)
    )
    if args.grid:
        progress.finish()
    manifest.stage("train")
    for g in GROUP_ORDER:
        c, gamma = table[g]
        state = "untrained: " + suite.untrained[g] if g in suite.untrained else f"{len(sets[g])} samples"
        print(f"{g.value:<10} C={c:g} gamma={gamma:g} ({state})")
    if args.params_out:
        out = Path(args.params_out)
        out.write_text(write_hyperparams(table))
        manifest.output = str(out.resolve())
        manifest.write(out.with_name(out.name + ".manifest.json"))
        print(f"parameters written to {out}")
    return 0


def _parse_timestamp(text: Optional[str]) -> dt.datetime:
    if not text:
        return dt.datetime.now()
    try:
        return dt.datetime.strptime(text, "%Y-%m-%d %H:%M")
    except ValueError:
        raise UsageError(f"--timestamp must look like '2018-07-18 14:45', got {text!r}") from None


def cmd_estimate(args) -> int:
    manifest = RunManifest("estimate")
    stamp = _parse_timestamp(args.timestamp)
    mapping = _mapping(args.mapping)
    counts = parse_short_term_counts(_read(args.counts))
    factors = parse_expansion_factors(_read(args.factors))
    table = parse_hyperparams(_read(args.params))
    manifest.inputs.update(
        counts=str(Path(args.counts).resolve()),
        factors=str(Path(args.factors).resolve()),
        params=str(Path(args.params).resolve()),
    )
    manifest.stage("parse_inputs")
    records = []
    if counts:
        # route every count first so an unmapped class fails before training
        needed = {map_class_to_group(r.fclass, mapping) for r in counts}
        atr, sets, year = _load_training(args, manifest, mapping)
        for g in GROUP_ORDER:
            if g not in needed:
                sets[g].samples.clear()
                sets[g].targets.clear()
        suite, _ = train_suite(sets, table, year=year, digest=atr_digest(atr))
        manifest.stage("fit_models")
        progress = Progress("estimating")
        records = estimate(suite, mapping, factors, counts, progress=progress)
        manifest.stage("estimate")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = write_output(records, stamp, out_dir)
    manifest.output = str(path.resolve())
    manifest.write(path.with_name(path.name + ".manifest.json"))
    print(path)
    return 0


def cmd_evaluate(args) -> int:
    manifest = RunManifest("evaluate")
    mapping = _mapping(args.mapping)
    predictions = parse_output(_read(args.predictions))
    truth = parse_truth(_read(args.truth))
    rows = eval_rows(predictions, truth, mapping)
    report = format_report(summarize(rows, round_rows=args.round_rows))
    out = Path(args.out)
    out.write_text(report)
    manifest.inputs.update(predictions=str(Path(args.predictions).resolve()), truth=str(Path(args.truth).resolve()))
    manifest.output = str(out.resolve())
    manifest.write(out.with_name(out.name + ".manifest.json"))
    sys.stdout.write(report)
    return 0


def cmd_synth(args) -> int:
    from .synth import SynthConfig, synth_generate

    seed = _seed(args.seed)
    cfg = SynthConfig(
        seed=seed,
        coverage=args.coverage,
        n_short_term=args.counts,
        year=_year(args.year),
        stations_per_group={g: args.stations for g in GROUP_ORDER},
    )
    ds = synth_generate(cfg)
    paths = ds.write(args.out)
    manifest = RunManifest("synth", seed=seed, output=str(Path(args.out).resolve()))
    manifest.write(Path(args.out) / "synth_manifest.json")
    for name, p in paths.items():
        print(f"{name:<20} {p}")
    return 0


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="aadt-svr", description="Estimate AADT from 24-hour counts with SVR and expansion factors.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log debug output")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    f = sub.add_parser("fetch", help="download ATR hourly files")
    f.add_argument("--config", required=True, help="key=value fetch config")
    f.add_argument("--atr-list", required=True)
    f.add_argument("--year", required=True, help="YYYY")
    f.add_argument("--out", required=True, help="directory for <county>_<station>.csv files")
    f.set_defaults(func=cmd_fetch)

    def training_inputs(sp):
        sp.add_argument("--atr-dir", required=True)
        sp.add_argument("--atr-list", required=True)
        sp.add_argument("--mapping", help="FClass,Group CSV (default: 12/2/4 only)")
        sp.add_argument("--year", help="ATR data year YYYY (default: inferred from the files)")

    t = sub.add_parser("train", help="fit the group models, optionally grid-searching C and gamma")
    training_inputs(t)
    how = t.add_mutually_exclusive_group(required=True)
    how.add_argument("--params-in", help="existing C,Gamma file (skip the grid search)")
    how.add_argument("--grid", action="store_true", help="grid-search C and gamma (new ATR data)")
    t.add_argument("--params-out", help="where to write the C,Gamma file")
    t.add_argument("--step", type=int, default=1, help="exponent step of the grid")
    t.add_argument("--folds", type=int, default=5)
    t.add_argument("--seed", type=int, default=None, help="fold shuffle seed (AADT_SEED overrides)")
    t.add_argument("--c-range", type=int, nargs=2, default=(-3, 15), metavar=("LO", "HI"))
    t.add_argument("--gamma-range", type=int, nargs=2, default=(-15, 3), metavar=("LO", "HI"))
    t.add_argument("--workers", type=int, default=1)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("estimate", help="estimate AADT for short-term counts")
    e.add_argument("--counts", required=True)
    e.add_argument("--factors", required=True)
    e.add_argument("--params", required=True)
    training_inputs(e)
    e.add_argument("--out", required=True, help="directory for the Output_*.CSV file")
    e.add_argument("--timestamp", help="override the output timestamp, 'YYYY-MM-DD HH:MM'")
    e.set_defaults(func=cmd_estimate)

    v = sub.add_parser("evaluate", help="MAPE report against ground truth AADT")
    v.add_argument("--predictions", required=True, help="an Output_*.CSV file")
    v.add_argument("--truth", required=True, help="County,Station,AADT CSV")
    v.add_argument("--out", required=True)
    v.add_argument("--mapping")
    v.add_argument("--round-rows", action="store_true", help="round each APE to whole percent before averaging")
    v.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("synth", help="write a synthetic ATR network and short-term counts")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--stations", type=int, default=10, help="stations per group")
    s.add_argument("--counts", type=int, default=25, help="short-term counts to hold out")
    s.add_argument("--coverage", type=float, default=1.0, help="share of complete ATR days")
    s.add_argument("--year", default="2017")
    s.set_defaults(func=cmd_synth)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"aadt-svr: error: {exc}", file=sys.stderr)
        return 1
    except AadtError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
