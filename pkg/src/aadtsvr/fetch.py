"""Download per-station ATR hourly files from a templated URL.

The config file is plain ``key=value`` lines::

    url_template=https://example.org/atr?station={station}&county={county}&year={year}
    timeout_seconds=30
    max_concurrent=4
    retries=1

``{station}`` and ``{year}`` are required placeholders, ``{county}`` is
optional. Every station gets one GET (plus retries); a failure is recorded
for that station and the batch carries on.
"""

from __future__ import annotations

import logging
import string
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import requests

from .domain import StationKey
from .errors import AadtError, InvalidTemplate
from .ingest import AtrStationMeta, atr_filename

log = logging.getLogger(__name__)

_REQUIRED = {"station", "year"}
_ALLOWED = _REQUIRED | {"county"}


@dataclass(frozen=True)
class FetchConfig:
    url_template: str
    timeout_seconds: float = 30.0
    max_concurrent: int = 4
    retries: int = 0
    retry_backoff: float = 0.5

    def __post_init__(self) -> None:
        validate_template(self.url_template)
        if self.timeout_seconds <= 0:
            raise AadtError("timeout_seconds must be positive")
        if self.max_concurrent < 1:
            raise AadtError("max_concurrent must be >= 1")
        if self.retries < 0:
            raise AadtError("retries must be >= 0")

    def url_for(self, key: StationKey, year: int) -> str:
        return self.url_template.format(station=key.station, county=key.county, year=year)


@dataclass
class FetchReport:
    written: Dict[StationKey, Path] = field(default_factory=dict)
    failures: Dict[StationKey, str] = field(default_factory=dict)

    @property
    def n_ok(self) -> int:
        return len(self.written)


def validate_template(template: str) -> None:
    try:
        names = {f for _, f, _, _ in string.Formatter().parse(template) if f is not None}
    except ValueError as exc:
        raise InvalidTemplate(f"malformed URL template: {exc}") from None
    missing = _REQUIRED - names
    if missing:
        raise InvalidTemplate(f"URL template lacks placeholder(s) {sorted('{' + m + '}' for m in missing)}")
    unknown = names - _ALLOWED
    if unknown:
        raise InvalidTemplate(f"URL template has unknown placeholder(s) {sorted(unknown)}")


def parse_fetch_config(text: str) -> FetchConfig:
    values: Dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise AadtError(f"fetch config line {lineno}: expected key=value")
        k, v = line.split("=", 1)
        values[k.strip()] = v.strip()
    if "url_template" not in values:
        raise AadtError("fetch config needs url_template")
    unknown = set(values) - {"url_template", "timeout_seconds", "max_concurrent", "retries"}
    if unknown:
        raise AadtError(f"unknown fetch config keys {sorted(unknown)}")
    try:
        return FetchConfig(
            url_template=values["url_template"],
            timeout_seconds=float(values.get("timeout_seconds", 30)),
            max_concurrent=int(values.get("max_concurrent", 4)),
            retries=int(values.get("retries", 0)),
        )
    except ValueError as exc:
        raise AadtError(f"fetch config: {exc}") from None


def _get(session: requests.Session, url: str, config: FetchConfig) -> bytes:
    last: Optional[Exception] = None
    for attempt in range(config.retries + 1):
        if attempt:
            time.sleep(config.retry_backoff * attempt)
        try:
            resp = session.get(url, timeout=config.timeout_seconds)
            resp.raise_for_status()
            return resp.content
        except requests.RequestException as exc:
            last = exc
    assert last is not None
    raise last


def fetch_atr_data(
    config: FetchConfig,
    stations: Sequence[AtrStationMeta],
    year: int,
    out_dir,
    session: Optional[requests.Session] = None,
) -> FetchReport:
    """GET each station's file into ``out_dir``; failures never abort the batch."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    session = session or requests.Session()

    def one(meta: AtrStationMeta):
        url = config.url_for(meta.key, year)
        try:
            body = _get(session, url, config)
        except requests.RequestException as exc:
            log.warning("station %s: %s", meta.key, exc)
            return None, f"{type(exc).__name__}: {exc}"
        path = out / atr_filename(meta.key)
        try:
            path.write_bytes(body)
        except OSError as exc:
            return None, f"write failed: {exc}"
        return path, None

    with ThreadPoolExecutor(max_workers=config.max_concurrent) as pool:
        results: List = list(pool.map(one, stations))

    report = FetchReport()
    for meta, (path, err) in zip(stations, results):
        if path is not None:
            report.written[meta.key] = path
        else:
            report.failures[meta.key] = err
    return report
