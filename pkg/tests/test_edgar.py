import datetime as dt
import json
import logging
import threading

import pytest
import requests
from hypothesis import given, settings, strategies as st

from kpi_forge.edgar import (
    EdgarClient,
    FilingRef,
    RateLimiter,
    classify_documents,
    filter_index,
    load_store,
    parse_master_index,
)
from kpi_forge.exceptions import ConfigError, RetryableFetchError

INDEX = """Description:           Master Index of EDGAR Dissemination Feed
Last Data Received:    June 28, 2024

CIK|Company Name|Form Type|Date Filed|Filename
--------------------------------------------------------------------------------
1018840|ABERCROMBIE & FITCH CO /DE/|10-K|2024-04-01|edgar/data/1018840/0001018840-24-000019.txt
1018840|ABERCROMBIE & FITCH CO /DE/|8-K|2024-03-06|edgar/data/1018840/0001018840-24-000011.txt
900001|SAMPLE BANCORP INC|10-Q|2024-05-09|edgar/data/900001/0000900001-24-000045.txt
"""


class Resp:
    def __init__(self, status=200, body=b"", headers=None):
        self.status_code = status
        self.content = body
        self.headers = headers or {}

    def json(self):
        return json.loads(self.content)


class FakeSession:
    def __init__(self, routes):
        self.routes = routes
        self.calls = []

    def get(self, url, headers=None, timeout=None):
        self.calls.append((url, dict(headers or {})))
        hit = self.routes.get(url)
        if isinstance(hit, list):
            hit = hit.pop(0)
        if isinstance(hit, Exception):
            raise hit
        return hit or Resp(404)


def client(routes, **kw):
    session = FakeSession(routes)
    c = EdgarClient(ident="Test Operator test@example.com", session=session, base_url="http://edgar",
                    limiter=RateLimiter(1e9), sleep=lambda s: None, **kw)
    return c, session


def test_parse_master_index_skips_malformed(caplog):
    text = INDEX + "garbage row without pipes\n"
    with caplog.at_level(logging.WARNING):
        rows = list(parse_master_index(text))
    assert len(rows) == 3
    assert "malformed" in caplog.text


def test_three_rows_one_eight_k():
    refs = list(filter_index(INDEX, dt.date(2024, 1, 1), dt.date(2024, 6, 1), {"10-K", "10-Q"}))
    assert [r.accession_number for r in refs] == ["0001018840-24-000019", "0000900001-24-000045"]
    assert refs[1].cik == "0000900001"


def test_list_filings_queries_quarters():
    c, s = client({"http://edgar/Archives/edgar/full-index/2024/QTR2/master.idx": Resp(body=INDEX.encode())})
    refs = list(c.list_filings(dt.date(2024, 1, 1), dt.date(2024, 6, 1), {"10-K", "10-Q"}))
    assert len(refs) == 2
    assert [u for u, _ in s.calls] == [
        "http://edgar/Archives/edgar/full-index/2024/QTR1/master.idx",
        "http://edgar/Archives/edgar/full-index/2024/QTR2/master.idx",
    ]
    assert all(h["User-Agent"] == "Test Operator test@example.com" for _, h in s.calls)


def test_date_window_is_inclusive_and_filtered():
    c, _ = client({"http://edgar/Archives/edgar/full-index/2024/QTR2/master.idx": Resp(body=INDEX.encode())})
    refs = list(c.list_filings(dt.date(2024, 4, 1), dt.date(2024, 4, 1), {"10-K"}))
    assert [r.filing_date for r in refs] == [dt.date(2024, 4, 1)]


def test_empty_forms():
    c, s = client({})
    assert list(c.list_filings(dt.date(2020, 1, 1), dt.date(2020, 1, 1), set())) == []
    assert s.calls == []


def test_missing_ident(monkeypatch):
    monkeypatch.delenv("EDGAR_IDENT", raising=False)
    with pytest.raises(ConfigError):
        EdgarClient()


def test_retry_on_429_then_give_up():
    url = "http://edgar/Archives/edgar/full-index/2024/QTR1/master.idx"
    waits = []
    c, s = client({url: [Resp(429, headers={"Retry-After": "2"}), Resp(200, INDEX.encode())]})
    c._sleep = waits.append
    assert len(list(c.list_filings(dt.date(2024, 1, 1), dt.date(2024, 4, 30), {"10-K"}))) == 1
    assert waits == [2.0]
    c, _ = client({url: [Resp(503)] * 3}, max_retries=2)
    with pytest.raises(RetryableFetchError) as info:
        list(c.list_filings(dt.date(2024, 1, 1), dt.date(2024, 4, 30), {"10-K"}))
    assert info.value.context[:2] == (dt.date(2024, 1, 1), dt.date(2024, 4, 30))
    c, _ = client({url: [requests.ConnectionError("boom")] * 2}, max_retries=1)
    with pytest.raises(RetryableFetchError):
        list(c.list_filings(dt.date(2024, 1, 1), dt.date(2024, 4, 30), {"10-K"}))


REF = FilingRef(
    accession_number="0000900001-24-000045",
    cik="900001",
    form_type="10-Q",
    filing_date=dt.date(2024, 5, 9),
    company_name="SAMPLE BANCORP INC",
    document_urls=(
        ("primary_ixbrl", "http://edgar/d/sbk-20240331.htm"),
        ("calculation_linkbase", "http://edgar/d/sbk-20240331_cal.xml"),
        ("presentation_linkbase", "http://edgar/d/sbk-20240331_pre.xml"),
    ),
)


def test_fetch_three_files_and_idempotence(tmp_path):
    routes = {u: Resp(body=f"<doc>{u}</doc>".encode()) for _, u in REF.document_urls}
    c, s = client(routes)
    b = c.fetch_filing(REF, tmp_path)
    assert set(b.paths) == {"primary_ixbrl", "calculation_linkbase", "presentation_linkbase"}
    assert b.downloads == 3 and not b.linkbases_absent
    assert b.directory == tmp_path / "0000900001" / "0000900001-24-000045"
    first = {p.name: p.read_bytes() for p in b.directory.iterdir()}
    again = c.fetch_filing(REF, tmp_path)
    assert again.downloads == 0 and len(s.calls) == 3
    assert {p.name: p.read_bytes() for p in b.directory.iterdir()} == first
    ((ref, path),) = list(load_store(tmp_path))
    assert ref == REF and path == b.directory


def test_linkbase_404_flags_absent(tmp_path):
    routes = {REF.document_urls[0][1]: Resp(body=b"<html/>"), REF.document_urls[2][1]: Resp(body=b"<x/>")}
    c, _ = client(routes)
    b = c.fetch_filing(REF, tmp_path)
    assert b.linkbases_absent and "calculation_linkbase" not in b.paths
    meta = json.loads((b.directory / "meta.jsonl").read_text())
    assert meta["linkbases_absent"] is True


def test_content_length_mismatch(tmp_path):
    routes = {u: Resp(body=b"short", headers={"Content-Length": "999"}) for _, u in REF.document_urls}
    c, _ = client(routes)
    with pytest.raises(RetryableFetchError):
        c.fetch_filing(REF, tmp_path)
    assert not any(p.suffix == ".htm" for p in tmp_path.rglob("*"))


def test_primary_required(tmp_path):
    ref = FilingRef(**{**REF.__dict__, "document_urls": ()})
    c, _ = client({})
    with pytest.raises(ValueError):
        c.fetch_filing(ref, tmp_path)


def test_resolve_documents():
    listing = {"directory": {"item": [{"name": n} for n in (
        "0000900001-24-000045-index.htm", "R1.htm", "sbk-20240331.htm", "sbk-20240331_cal.xml",
        "sbk-20240331_pre.xml", "sbk-20240331_lab.xml", "ex31-1.htm")]}}
    c, _ = client({"http://edgar/Archives/edgar/data/900001/000090000124000045/index.json":
                   Resp(body=json.dumps(listing).encode())})
    ref = c.resolve_documents(REF)
    assert ref.url_for("primary_ixbrl").endswith("/sbk-20240331.htm")
    assert ref.url_for("calculation_linkbase").endswith("_cal.xml")


def test_classify_without_linkbases():
    assert classify_documents(["a-index.htm", "ex-99.htm", "main10q.htm"]) == [("primary_ixbrl", "main10q.htm")]


def test_ref_validation_and_round_trip():
    with pytest.raises(ValueError):
        FilingRef("bad", "1", "10-Q", dt.date(2024, 1, 1), "X")
    with pytest.raises(ValueError):
        FilingRef("0000000001-24-000001", "1", "8-K", dt.date(2024, 1, 1), "X")
    assert FilingRef.from_record(REF.to_record()) == REF
    assert REF.filing_date_ms == 1715212800000


def test_rate_limiter_spacing():
    now = [0.0]
    slept = []

    def sleep(s):
        slept.append(s)

    lim = RateLimiter(8, clock=lambda: now[0], sleep=sleep)
    for _ in range(4):
        lim.acquire()
    assert slept == pytest.approx([0.125, 0.25, 0.375])


def test_rate_limiter_threads():
    now = [0.0]
    lock = threading.Lock()
    slots = []

    def sleep(s):
        with lock:
            slots.append(s)

    lim = RateLimiter(4, clock=lambda: now[0], sleep=sleep)
    threads = [threading.Thread(target=lim.acquire) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert sorted(slots) == pytest.approx([0.25 * k for k in range(1, 8)])
    with pytest.raises(ConfigError):
        RateLimiter(0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.dates(dt.date(2024, 2, 1), dt.date(2024, 6, 1)), min_size=4, max_size=4))
def test_filter_then_window_equals_intersection(days):
    a, b, c, d = days
    forms = {"10-K", "10-Q"}
    outer = [r for r in filter_index(INDEX, a, b, forms) if c <= r.filing_date <= d]
    inner = list(filter_index(INDEX, max(a, c), min(b, d), forms))
    assert outer == inner
