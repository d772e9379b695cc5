import datetime as dt

import pytest
from hypothesis import given, strategies as st

from conftest import ent, para
from kpi_forge.records import (
    ENTITY_KEYS,
    Paragraph,
    dumps,
    is_valid_label,
    read_paragraphs,
    write_paragraphs,
)


@pytest.mark.parametrize("label, ok", [
    ("us-gaap:Revenues", True),
    ("anf:Segment_Detail", True),
    ("Revenues", False),
    (":Revenues", False),
    ("us-gaap:", False),
    ("a:b:c", False),
])
def test_label_grammar(label, ok):
    assert is_valid_label(label) is ok


def test_record_keys_and_round_trip(tmp_path):
    p = para(["us-gaap:Revenues"], text="Sales grew to $3.3 billion.")
    rec = p.to_record()
    assert tuple(rec["entities"][0]) == ENTITY_KEYS
    assert Paragraph.from_record(rec) == p
    path = tmp_path / "d.jsonl"
    write_paragraphs(path, [p, p])
    assert list(read_paragraphs(path)) == [p, p]
    assert not (tmp_path / "d.jsonl.part").exists()


def test_dumps_keeps_unicode():
    assert dumps({"t": "café"}) == '{"t": "café"}'


@given(st.decimals(allow_nan=False, allow_infinity=False, places=2, min_value=-10**12, max_value=10**12))
def test_value_survives_json(value):
    e = ent("us-gaap:Revenues", value=str(value))
    p = Paragraph("10-K", "0000000001-24-000001", 0, "20231231", "X", "Y", (e,))
    back = Paragraph.from_record(p.to_record()).entities[0]
    assert back.value == value


def test_filing_day_is_utc():
    p = Paragraph("10-K", "0000000001-24-000001", 1711991312000, "20240203", "X", "Y")
    assert p.filing_day == dt.date(2024, 4, 1)
