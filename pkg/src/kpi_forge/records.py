"""Dataset record types and their line-delimited JSON form.

Field names on disk follow the published dataset layout exactly::

    {"form_type": ..., "accession_number": ..., "filing_date": <epoch ms>,
     "quarter_ending": "YYYYMMDD", "company_name": ..., "text": ...,
     "entities": [{"Start character": ..., "End character": ..., "Label": ...,
                   "Start date for period": ..., "End date for period": ...,
                   "Currency / Unit": ..., "Value": ...}]}
"""
from __future__ import annotations

import datetime as dt
import json
import os
from dataclasses import dataclass, field, replace
from decimal import Decimal
from pathlib import Path
from typing import Iterable, Iterator

ENTITY_KEYS = (
    "Start character",
    "End character",
    "Label",
    "Start date for period",
    "End date for period",
    "Currency / Unit",
    "Value",
)


def is_valid_label(label: str) -> bool:
    prefix, sep, local = label.partition(":")
    return bool(sep) and bool(prefix) and bool(local) and ":" not in local


@dataclass(frozen=True)
class Entity:
    start_char: int
    end_char: int
    label: str
    period_start: dt.date
    period_end: dt.date
    unit: str
    value: Decimal

    def to_record(self) -> dict:
        return {
            "Start character": self.start_char,
            "End character": self.end_char,
            "Label": self.label,
            "Start date for period": self.period_start.isoformat(),
            "End date for period": self.period_end.isoformat(),
            "Currency / Unit": self.unit,
            "Value": float(self.value),
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Entity":
        return cls(
            start_char=int(rec["Start character"]),
            end_char=int(rec["End character"]),
            label=rec["Label"],
            period_start=dt.date.fromisoformat(rec["Start date for period"]),
            period_end=dt.date.fromisoformat(rec["End date for period"]),
            unit=rec["Currency / Unit"],
            value=Decimal(repr(rec["Value"])) if isinstance(rec["Value"], float) else Decimal(rec["Value"]),
        )


@dataclass(frozen=True)
class Paragraph:
    form_type: str
    accession_number: str
    filing_date: int  # epoch milliseconds, UTC
    quarter_ending: str
    company_name: str
    text: str
    entities: tuple[Entity, ...] = field(default_factory=tuple)

    @property
    def filing_day(self) -> dt.date:
        return dt.datetime.fromtimestamp(self.filing_date / 1000, dt.timezone.utc).date()

    def with_labels(self, labels: Iterable[str]) -> "Paragraph":
        ents = tuple(replace(e, label=lab) for e, lab in zip(self.entities, labels, strict=True))
        return replace(self, entities=ents)

    def to_record(self) -> dict:
        return {
            "form_type": self.form_type,
            "accession_number": self.accession_number,
            "filing_date": self.filing_date,
            "quarter_ending": self.quarter_ending,
            "company_name": self.company_name,
            "text": self.text,
            "entities": [e.to_record() for e in self.entities],
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Paragraph":
        return cls(
            form_type=rec["form_type"],
            accession_number=rec["accession_number"],
            filing_date=int(rec["filing_date"]),
            quarter_ending=str(rec["quarter_ending"]),
            company_name=rec["company_name"],
            text=rec["text"],
            entities=tuple(Entity.from_record(e) for e in rec["entities"]),
        )


def dumps(record) -> str:
    """Canonical single-line JSON used by every artifact writer."""
    return json.dumps(record, ensure_ascii=False, allow_nan=False)


def read_jsonl(path) -> Iterator[dict]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield json.loads(line)


def write_jsonl(path, records: Iterable[dict]) -> int:
    """Write records atomically: readers never observe a partial file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".part")
    n = 0
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(dumps(rec))
            fh.write("\n")
            n += 1
    os.replace(tmp, path)
    return n


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".part")
    tmp.write_text(json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")
    os.replace(tmp, path)


def read_paragraphs(path) -> Iterator[Paragraph]:
    for rec in read_jsonl(path):
        yield Paragraph.from_record(rec)


def write_paragraphs(path, paragraphs: Iterable[Paragraph]) -> int:
    return write_jsonl(path, (p.to_record() for p in paragraphs))
