"""Inline XBRL fact extraction into text snippets.

A snippet is the normalized text of the nearest block-level element that
encloses one or more ``ix:nonFraction`` facts. Every fact found in the
document is either emitted as an :class:`~kpi_forge.records.Entity` or
counted under exactly one drop reason in the diagnostics tally, so
``tally["facts"] == tally["emitted"] + sum(dropped reasons)``.
"""
from __future__ import annotations

import datetime as dt
import logging
import re
import unicodedata
import warnings
from collections import Counter
from decimal import Decimal, InvalidOperation

from bs4 import BeautifulSoup, Comment, NavigableString, Tag, XMLParsedAsHTMLWarning

from .records import Entity, Paragraph

logger = logging.getLogger(__name__)

BLOCK_TAGS = frozenset({
    "p", "div", "li", "blockquote", "section", "article", "body",
    "h1", "h2", "h3", "h4", "h5", "h6", "dd", "dt", "center",
})
SKIP_TAGS = frozenset({"script", "style", "head", "title"})
TABLE_TAGS = frozenset({"table"})

DROP_REASONS = (
    "hidden",
    "nested_outer",
    "missing_context",
    "nil",
    "value_error",
    "in_table",
    "no_block",
    "misparsed",
    "filtered",
)


class FactValueError(ValueError):
    """Displayed fact text cannot be turned into a number."""


def _local(name: str | None) -> str:
    return (name or "").rsplit(":", 1)[-1].lower()


def normalize_ws(text: str) -> str:
    return " ".join(text.split())


# ---------------------------------------------------------------------------
# value resolution

_SMALL = {
    "zero": 0, "no": 0, "none": 0, "one": 1, "two": 2, "three": 3, "four": 4,
    "five": 5, "six": 6, "seven": 7, "eight": 8, "nine": 9, "ten": 10,
    "eleven": 11, "twelve": 12, "thirteen": 13, "fourteen": 14, "fifteen": 15,
    "sixteen": 16, "seventeen": 17, "eighteen": 18, "nineteen": 19,
    "twenty": 20, "thirty": 30, "forty": 40, "fifty": 50, "sixty": 60,
    "seventy": 70, "eighty": 80, "ninety": 90,
}
_MAGNITUDE = {"thousand": 10**3, "million": 10**6, "billion": 10**9, "trillion": 10**12}
_NUMBER_RE = re.compile(r"^(\d+(\.\d*)?|\.\d+)$")


def _words_to_number(text: str) -> Decimal:
    words = [w for w in re.split(r"[\s\-]+", text.lower().strip()) if w and w != "and"]
    if not words:
        raise FactValueError(f"empty number words {text!r}")
    total = current = 0
    for w in words:
        if w in _SMALL:
            current += _SMALL[w]
        elif w == "hundred":
            current = (current or 1) * 100
        elif w in _MAGNITUDE:
            total += (current or 1) * _MAGNITUDE[w]
            current = 0
        else:
            raise FactValueError(f"unrecognized number word {w!r} in {text!r}")
    return Decimal(total + current)


def _format_key(format_hint: str | None) -> str:
    if not format_hint:
        return "numdotdecimal"
    return _local(format_hint).replace("-", "")


def resolve_value(raw_text: str, scale: int = 0, sign=None, format_hint: str | None = None) -> Decimal:
    """Return the fully scaled, signed value of a displayed numeric fact.

    ``sign`` is the fact's ``sign`` attribute: ``"-"`` (or ``True``) negates.
    ``format_hint`` is the ``format`` attribute; dot-decimal grouping is assumed
    when absent.
    """
    text = (raw_text or "").strip()
    key = _format_key(format_hint)
    if key in ("fixedzero", "zerodash", "numdash", "fixedempty"):
        number = Decimal(0)
    elif not text:
        raise FactValueError("empty fact text")
    elif key in ("numwordsen", "numberwordsen", "numwords"):
        number = _words_to_number(text)
    else:
        cleaned = re.sub(r"[\s  ]", "", text)
        if key in ("numcommadecimal", "numcomma", "numdotcomma"):
            cleaned = cleaned.replace(".", "").replace(",", ".")
        else:
            cleaned = cleaned.replace(",", "")
        if not _NUMBER_RE.match(cleaned):
            raise FactValueError(f"non-numeric fact text {raw_text!r}")
        try:
            number = Decimal(cleaned)
        except InvalidOperation as exc:  # pragma: no cover - regex guards this
            raise FactValueError(str(exc)) from exc
    value = number.scaleb(int(scale))
    if sign is True or sign == "-":
        value = -value
    return value


# ---------------------------------------------------------------------------
# snippet filter

def filter_snippet(text: str) -> bool:
    """Keep snippets that start cleanly: no leading punctuation, capitalized."""
    stripped = text.lstrip()
    if not stripped:
        return False
    if unicodedata.category(stripped[0]).startswith("P"):
        return False
    for ch in stripped:
        if ch.isalpha():
            return ch.isupper()
    return False


# ---------------------------------------------------------------------------
# document structure

def parse_contexts(soup) -> dict[str, tuple[dt.date, dt.date]]:
    contexts = {}
    for el in soup.find_all(lambda t: _local(t.name) == "context"):
        cid = el.get("id")
        period = el.find(lambda t: _local(t.name) == "period")
        if not cid or period is None:
            continue
        found = {}
        for child in period.find_all(lambda t: _local(t.name) in ("startdate", "enddate", "instant")):
            try:
                found[_local(child.name)] = dt.date.fromisoformat(child.get_text().strip()[:10])
            except ValueError:
                pass
        if "instant" in found:
            contexts[cid] = (found["instant"], found["instant"])
        elif "startdate" in found and "enddate" in found:
            contexts[cid] = (found["startdate"], found["enddate"])
    return contexts


def _measure_name(el) -> str:
    text = el.get_text().strip()
    return text.rsplit(":", 1)[-1] if text else ""


def parse_units(soup) -> dict[str, str]:
    units = {}
    for el in soup.find_all(lambda t: _local(t.name) == "unit"):
        uid = el.get("id")
        if not uid:
            continue
        num = el.find(lambda t: _local(t.name) == "unitnumerator")
        den = el.find(lambda t: _local(t.name) == "unitdenominator")
        if num is not None and den is not None:
            n = "*".join(_measure_name(m) for m in num.find_all(lambda t: _local(t.name) == "measure"))
            d = "*".join(_measure_name(m) for m in den.find_all(lambda t: _local(t.name) == "measure"))
            units[uid] = f"{n}/{d}"
        else:
            measures = [_measure_name(m) for m in el.find_all(lambda t: _local(t.name) == "measure")]
            if measures:
                units[uid] = "*".join(measures)
    return units


def _has_ancestor(el, names) -> bool:
    return any(_local(p.name) in names for p in el.parents if isinstance(p, Tag))


def _is_ix(el, *names) -> bool:
    name = el.name or ""
    return ":" in name and _local(name) in names


def _in_ix_header(el) -> bool:
    return any(_is_ix(p, "hidden", "header") for p in el.parents if isinstance(p, Tag))


def _nearest_block(el):
    for p in el.parents:
        if isinstance(p, Tag) and _local(p.name) in BLOCK_TAGS:
            return p
    return None


def _period_end_from_dei(soup, contexts) -> str:
    for el in soup.find_all(lambda t: _local(t.name) == "nonnumeric"):
        if (el.get("name") or "").lower() == "dei:documentperiodenddate":
            ctx = contexts.get(el.get("contextref"))
            if ctx:
                return ctx[1].strftime("%Y%m%d")
    return ""


class _TextBuilder:
    """Flattens a block to text, recording raw offsets of chosen elements."""

    def __init__(self, anchors):
        self.anchors = {id(a): a for a in anchors}
        self.parts: list[str] = []
        self.length = 0
        self.spans: dict[int, tuple[int, int]] = {}

    def _emit(self, s: str):
        self.parts.append(s)
        self.length += len(s)

    def walk(self, node, root=True):
        for child in node.children:
            if isinstance(child, Comment):
                continue
            if isinstance(child, NavigableString):
                if type(child) is NavigableString:
                    self._emit(str(child))
                continue
            name = _local(child.name)
            if name in SKIP_TAGS or name in TABLE_TAGS or _is_ix(child, "header", "hidden", "exclude"):
                self._emit(" ")
                continue
            if name == "br":
                self._emit(" ")
                continue
            is_block = name in BLOCK_TAGS
            if is_block:
                self._emit(" ")
            start = self.length
            self.walk(child, root=False)
            if id(child) in self.anchors:
                self.spans[id(child)] = (start, self.length)
            if is_block:
                self._emit(" ")

    @property
    def raw(self) -> str:
        return "".join(self.parts)


def _collapse(raw: str) -> tuple[str, list[int]]:
    out: list[str] = []
    pos = [0] * (len(raw) + 1)
    pending = False
    n = 0
    for i, ch in enumerate(raw):
        if ch.isspace():
            pending = n > 0
            pos[i] = n
            continue
        if pending:
            out.append(" ")
            n += 1
            pending = False
        pos[i] = n
        out.append(ch)
        n += 1
    pos[len(raw)] = n
    return "".join(out), pos


def segment_snippets(soup, facts) -> list[tuple[str, list[tuple[object, int, int]]]]:
    """Group fact elements by enclosing block and locate them in its text.

    Returns ``(text, [(fact_element, start, end), ...])`` per block, in
    document order. Blocks whose offsets fail to reproduce the fact text are
    returned with ``text=None`` so callers can tally them as misparsed.
    """
    groups: dict[int, list] = {}
    blocks: dict[int, object] = {}
    order: list[int] = []
    for fact in facts:
        block = _nearest_block(fact)
        key = id(block)
        if key not in groups:
            groups[key] = []
            blocks[key] = block
            order.append(key)
        groups[key].append(fact)
    out = []
    for key in order:
        members = groups[key]
        builder = _TextBuilder(members)
        builder.walk(blocks[key])
        raw = builder.raw
        text, pos = _collapse(raw)
        anchors = []
        ok = True
        for fact in members:
            span = builder.spans.get(id(fact))
            if span is None:
                ok = False
                break
            rs, re_ = span
            chars = [i for i in range(rs, re_) if not raw[i].isspace()]
            if not chars:
                ok = False
                break
            start, end = pos[chars[0]], pos[chars[-1]] + 1
            if text[start:end] != normalize_ws(fact.get_text()):
                ok = False
                break
            anchors.append((fact, start, end))
        out.append((text if ok else None, anchors if ok else members))
    return out


def _sign(el):
    return "-" if (el.get("sign") or "").strip() == "-" else None


def parse_document(html, meta, diagnostics: Counter | None = None) -> list[Paragraph]:
    """Extract Paragraph records from one iXBRL primary document.

    ``meta`` is a :class:`~kpi_forge.edgar.FilingRef` (or anything with the
    same attributes). Pass a ``Counter`` as ``diagnostics`` to receive the
    per-reason tally.
    """
    tally = diagnostics if diagnostics is not None else Counter()
    # HTML parsing tolerates the malformed markup found in real filings.
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", XMLParsedAsHTMLWarning)
        soup = BeautifulSoup(html, "lxml")
    contexts = parse_contexts(soup)
    units = parse_units(soup)

    facts = soup.find_all(lambda t: _local(t.name) == "nonfraction")
    tally["facts"] += len(facts)
    resolved = {}
    candidates = []
    for el in facts:
        if _in_ix_header(el):
            tally["hidden"] += 1
            continue
        if el.find(lambda t: _local(t.name) == "nonfraction") is not None:
            tally["nested_outer"] += 1
            continue
        ctx = contexts.get(el.get("contextref"))
        if ctx is None:
            tally["missing_context"] += 1
            continue
        if (el.get("xsi:nil") or "").lower() == "true":
            tally["nil"] += 1
            continue
        try:
            value = resolve_value(el.get_text(), int(el.get("scale") or 0), _sign(el), el.get("format"))
        except (FactValueError, ValueError):
            tally["value_error"] += 1
            continue
        if _has_ancestor(el, TABLE_TAGS):
            tally["in_table"] += 1
            continue
        if _nearest_block(el) is None:
            tally["no_block"] += 1
            continue
        unit = units.get(el.get("unitref") or "", "pure")
        label = el.get("name") or ""
        resolved[id(el)] = (label, ctx, unit, value)
        candidates.append(el)

    quarter_ending = (
        meta.period_of_report.strftime("%Y%m%d")
        if getattr(meta, "period_of_report", None)
        else _period_end_from_dei(soup, contexts)
    )
    filing_ms = meta.filing_date_ms if hasattr(meta, "filing_date_ms") else int(meta.filing_date)

    paragraphs = []
    for text, anchors in segment_snippets(soup, candidates):
        if text is None:
            tally["misparsed"] += len(anchors)
            continue
        if not filter_snippet(text):
            tally["filtered"] += len(anchors)
            continue
        entities = []
        for el, start, end in anchors:
            label, (p_start, p_end), unit, value = resolved[id(el)]
            entities.append(Entity(start, end, label, p_start, p_end, unit, value))
        entities.sort(key=lambda e: (e.start_char, e.end_char))
        tally["emitted"] += len(entities)
        paragraphs.append(Paragraph(
            form_type=meta.form_type,
            accession_number=meta.accession_number,
            filing_date=filing_ms,
            quarter_ending=quarter_ending,
            company_name=meta.company_name,
            text=text,
            entities=tuple(entities),
        ))
    return paragraphs
