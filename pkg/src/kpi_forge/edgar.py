"""Rate-limited EDGAR client.

Listing walks the quarterly ``full-index/<year>/QTR<n>/master.idx`` files and
filters rows by date and form. Documents are resolved through each filing's
``index.json`` directory listing and persisted under
``<store>/<cik>/<accession>/``.
"""
from __future__ import annotations

import datetime as dt
import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import requests

from .exceptions import ConfigError, RetryableFetchError

logger = logging.getLogger(__name__)

BASE_URL = "https://www.sec.gov"
FORMS = frozenset({"10-K", "10-Q"})
ROLES = ("primary_ixbrl", "calculation_linkbase", "presentation_linkbase", "other")
STORE_NAMES = {
    "primary_ixbrl": "primary.htm",
    "calculation_linkbase": "cal.xml",
    "presentation_linkbase": "pre.xml",
}
META_NAME = "meta.jsonl"
ACCESSION_RE = re.compile(r"^\d{10}-\d{2}-\d{6}$")


@dataclass(frozen=True)
class FilingRef:
    accession_number: str
    cik: str
    form_type: str
    filing_date: dt.date
    company_name: str
    document_urls: tuple[tuple[str, str], ...] = ()
    # Acceptance timestamp; the dataset's ``filing_date`` epoch value uses it when known.
    accepted: dt.datetime | None = None
    period_of_report: dt.date | None = None

    def __post_init__(self):
        if not ACCESSION_RE.match(self.accession_number):
            raise ValueError(f"malformed accession number {self.accession_number!r}")
        if self.form_type not in FORMS:
            raise ValueError(f"unsupported form type {self.form_type!r}")
        object.__setattr__(self, "cik", str(int(self.cik)).zfill(10))

    def url_for(self, role: str) -> str | None:
        for r, u in self.document_urls:
            if r == role:
                return u
        return None

    @property
    def filing_date_ms(self) -> int:
        if self.accepted is not None:
            ts = self.accepted if self.accepted.tzinfo else self.accepted.replace(tzinfo=dt.timezone.utc)
        else:
            ts = dt.datetime.combine(self.filing_date, dt.time(), dt.timezone.utc)
        return int(round(ts.timestamp() * 1000))

    def to_record(self) -> dict:
        return {
            "accession_number": self.accession_number,
            "cik": self.cik,
            "form_type": self.form_type,
            "filing_date": self.filing_date.isoformat(),
            "company_name": self.company_name,
            "document_urls": [list(d) for d in self.document_urls],
            "accepted": self.accepted.isoformat() if self.accepted else None,
            "period_of_report": self.period_of_report.isoformat() if self.period_of_report else None,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "FilingRef":
        accepted = rec.get("accepted")
        por = rec.get("period_of_report")
        return cls(
            accession_number=rec["accession_number"],
            cik=rec["cik"],
            form_type=rec["form_type"],
            filing_date=dt.date.fromisoformat(rec["filing_date"]),
            company_name=rec["company_name"],
            document_urls=tuple((r, u) for r, u in rec.get("document_urls", [])),
            accepted=dt.datetime.fromisoformat(accepted) if accepted else None,
            period_of_report=dt.date.fromisoformat(por) if por else None,
        )


@dataclass
class FilingBundle:
    ref: FilingRef
    directory: Path
    paths: dict = field(default_factory=dict)
    linkbases_absent: bool = False
    downloads: int = 0


class RateLimiter:
    """Spaces calls at least ``1/rate`` seconds apart across all threads."""

    def __init__(self, rate: float = 8.0, clock=time.monotonic, sleep=time.sleep):
        if rate <= 0:
            raise ConfigError("rate limit must be positive")
        self.interval = 1.0 / rate
        self._clock = clock
        self._sleep = sleep
        self._lock = threading.Lock()
        self._next = 0.0

    def acquire(self):
        with self._lock:
            now = self._clock()
            slot = max(now, self._next)
            self._next = slot + self.interval
        delay = slot - now
        if delay > 0:
            self._sleep(delay)


def parse_master_index(text: str) -> Iterator[tuple[str, str, str, str, str]]:
    """Yield ``(cik, company, form, date, filename)`` rows of a master index.

    Header lines and malformed rows are skipped; malformed rows are logged.
    """
    in_body = False
    for lineno, line in enumerate(text.splitlines(), 1):
        if not in_body:
            if line.startswith("-----"):
                in_body = True
            continue
        if not line.strip():
            continue
        parts = line.split("|")
        if len(parts) != 5:
            logger.warning("skipping malformed index row %d: %r", lineno, line)
            continue
        yield tuple(p.strip() for p in parts)


def _quarters(start: dt.date, end: dt.date) -> Iterator[tuple[int, int]]:
    y, q = start.year, (start.month - 1) // 3 + 1
    while (y, q) <= (end.year, (end.month - 1) // 3 + 1):
        yield y, q
        q += 1
        if q == 5:
            y, q = y + 1, 1


class EdgarClient:
    """Thin EDGAR archive client with a shared rate limiter.

    Parameters
    ----------
    ident : str
        Identification header sent as ``User-Agent`` with every request,
        e.g. ``"Jane Doe jane@example.com"``. Falls back to ``EDGAR_IDENT``.
    rate : float
        Maximum requests per second across every thread using this client.
    """

    def __init__(self, ident=None, rate=8.0, base_url=BASE_URL, session=None,
                 max_retries=5, backoff=1.0, timeout=30.0, limiter=None, sleep=time.sleep):
        ident = ident or os.environ.get("EDGAR_IDENT")
        if not ident or not ident.strip():
            raise ConfigError("EDGAR identification header missing: pass ident or set EDGAR_IDENT")
        self.ident = ident.strip()
        self.base_url = base_url.rstrip("/")
        self.session = session or requests.Session()
        self.limiter = limiter or RateLimiter(rate)
        self.max_retries = max_retries
        self.backoff = backoff
        self.timeout = timeout
        self._sleep = sleep

    # -- transport -----------------------------------------------------
    def _get(self, url: str) -> requests.Response:
        headers = {"User-Agent": self.ident, "Accept-Encoding": "gzip, deflate"}
        last = None
        for attempt in range(self.max_retries + 1):
            self.limiter.acquire()
            try:
                resp = self.session.get(url, headers=headers, timeout=self.timeout)
            except requests.RequestException as exc:
                last = exc
                self._sleep(self.backoff * 2 ** attempt)
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last = f"HTTP {resp.status_code}"
                retry_after = resp.headers.get("Retry-After")
                wait = float(retry_after) if retry_after and retry_after.isdigit() else self.backoff * 2 ** attempt
                logger.info("%s for %s; retrying in %.1fs", last, url, wait)
                self._sleep(wait)
                continue
            return resp
        raise RetryableFetchError(f"giving up on {url}: {last}", context=url)

    # -- listing -------------------------------------------------------
    def list_filings(self, start: dt.date, end: dt.date, forms: Iterable[str] = FORMS) -> Iterator[FilingRef]:
        if start > end:
            raise ValueError("start must not be after end")
        forms = frozenset(forms) & FORMS
        if not forms:
            return
        for year, qtr in _quarters(start, end):
            url = f"{self.base_url}/Archives/edgar/full-index/{year}/QTR{qtr}/master.idx"
            try:
                resp = self._get(url)
            except RetryableFetchError as exc:
                raise RetryableFetchError(str(exc), context=(start, end, year, qtr)) from exc
            if resp.status_code == 404:
                continue
            if resp.status_code != 200:
                raise RetryableFetchError(f"HTTP {resp.status_code} for {url}", context=(start, end, year, qtr))
            yield from filter_index(resp.content.decode("latin-1"), start, end, forms, self.base_url)

    def resolve_documents(self, ref: FilingRef) -> FilingRef:
        """Fill ``document_urls`` from the filing's directory listing."""
        folder = f"{self.base_url}/Archives/edgar/data/{int(ref.cik)}/{ref.accession_number.replace('-', '')}"
        resp = self._get(f"{folder}/index.json")
        if resp.status_code != 200:
            raise RetryableFetchError(f"HTTP {resp.status_code} for {folder}/index.json", context=ref.accession_number)
        names = [item["name"] for item in resp.json().get("directory", {}).get("item", [])]
        roles = classify_documents(names)
        urls = tuple((role, f"{folder}/{name}") for role, name in roles)
        return FilingRef(**{**ref.__dict__, "document_urls": urls})

    # -- fetching ------------------------------------------------------
    def fetch_filing(self, ref: FilingRef, store) -> FilingBundle:
        if ref.url_for("primary_ixbrl") is None:
            raise ValueError(f"{ref.accession_number} has no primary_ixbrl url")
        directory = filing_dir(store, ref.cik, ref.accession_number)
        directory.mkdir(parents=True, exist_ok=True)
        bundle = FilingBundle(ref=ref, directory=directory)
        for role, name in STORE_NAMES.items():
            url = ref.url_for(role)
            target = directory / name
            if url is None:
                if role != "primary_ixbrl":
                    bundle.linkbases_absent = True
                continue
            if target.exists():
                bundle.paths[role] = target
                continue
            resp = self._get(url)
            if resp.status_code == 404 and role != "primary_ixbrl":
                logger.warning("%s missing for %s", role, ref.accession_number)
                bundle.linkbases_absent = True
                continue
            if resp.status_code != 200:
                raise RetryableFetchError(f"HTTP {resp.status_code} for {url}", context=url)
            body = resp.content
            expected = resp.headers.get("Content-Length")
            if expected is not None and resp.headers.get("Content-Encoding") is None and int(expected) != len(body):
                raise RetryableFetchError(f"truncated body for {url}: {len(body)} of {expected} bytes", context=url)
            _atomic_write(target, body)
            bundle.downloads += 1
            bundle.paths[role] = target
        meta = dict(ref.to_record(), linkbases_absent=bundle.linkbases_absent)
        _atomic_write(directory / META_NAME, (json.dumps(meta, sort_keys=True) + "\n").encode())
        return bundle


def filter_index(text: str, start: dt.date, end: dt.date, forms, base_url=BASE_URL) -> Iterator[FilingRef]:
    for cik, company, form, date_s, filename in parse_master_index(text):
        if form not in forms:
            continue
        try:
            day = dt.date.fromisoformat(date_s)
        except ValueError:
            logger.warning("skipping row with bad date %r", date_s)
            continue
        if not start <= day <= end:
            continue
        accession = Path(filename).stem
        if not ACCESSION_RE.match(accession) or not cik.isdigit():
            logger.warning("skipping row with bad accession/cik %r", filename)
            continue
        yield FilingRef(
            accession_number=accession,
            cik=cik,
            form_type=form,
            filing_date=day,
            company_name=company,
            document_urls=(("other", f"{base_url}/Archives/{filename}"),),
        )


def classify_documents(names: Iterable[str]) -> list[tuple[str, str]]:
    """Pick the primary iXBRL document and linkbases out of a directory listing."""
    names = list(names)
    out = []
    stem = None
    for n in names:
        low = n.lower()
        if low.endswith("_cal.xml"):
            out.append(("calculation_linkbase", n))
            stem = n[:-8]
        elif low.endswith("_pre.xml"):
            out.append(("presentation_linkbase", n))
            stem = n[:-8]
    htm = [n for n in names if n.lower().endswith((".htm", ".html"))
           and not re.match(r"^R\d+\.htm$", n) and "index" not in n.lower()]
    primary = None
    if stem is not None:
        primary = next((n for n in htm if n.rsplit(".", 1)[0] == stem), None)
    if primary is None and htm:
        primary = next((n for n in htm if not re.search(r"ex-?\d", n.lower())), htm[0])
    if primary is not None:
        out.insert(0, ("primary_ixbrl", primary))
    return out


def filing_dir(store, cik: str, accession: str) -> Path:
    return Path(store) / str(int(cik)).zfill(10) / accession


def load_store(store) -> Iterator[tuple[FilingRef, Path]]:
    """Yield ``(ref, directory)`` for every fetched filing, in sorted order."""
    for meta in sorted(Path(store).glob(f"*/*/{META_NAME}")):
        with open(meta, encoding="utf-8") as fh:
            rec = json.loads(fh.readline())
        yield FilingRef.from_record(rec), meta.parent


def _atomic_write(path: Path, data: bytes):
    tmp = path.with_name(path.name + ".part")
    tmp.write_bytes(data)
    os.replace(tmp, path)
