import datetime as dt
from decimal import Decimal
from pathlib import Path

import pytest

from kpi_forge.records import Entity, Paragraph

FIXTURES = Path(__file__).parent / "fixtures"
STORE = FIXTURES / "store"
GOLDEN = Path(__file__).parent / "golden"

ANF_10K = STORE / "0001018840" / "0001018840-24-000019"


def ent(label, start=0, end=1, value="1", unit="USD", period=("2023-01-01", "2023-12-31")):
    return Entity(start, end, label, dt.date.fromisoformat(period[0]), dt.date.fromisoformat(period[1]),
                  unit, Decimal(value))


def para(labels=(), text="Revenue grew.", company="ACME CORP", accession="0000000001-23-000001",
         day="2023-03-01", form="10-Q"):
    d = dt.date.fromisoformat(day)
    ms = int(dt.datetime(d.year, d.month, d.day, tzinfo=dt.timezone.utc).timestamp() * 1000)
    ents = tuple(ent(lab, i, i + 1) for i, lab in enumerate(labels))
    return Paragraph(form, accession, ms, "20230331", company, text, ents)


@pytest.fixture
def store():
    return STORE
