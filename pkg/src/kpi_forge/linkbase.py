"""Calculation and presentation linkbase parsing.

All extended-link roles in a file are flattened into one edge list, and
duplicate ``(parent, child, kind)`` triples are collapsed. Files that were
already converted to the line-delimited edge interchange format
(``{"parent", "child", "kind", "accession"}``) are accepted as well.
"""
from __future__ import annotations

import io
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from typing import Iterable, Iterator
from urllib.parse import unquote

from lxml import etree

from .exceptions import WrongLinkbaseKind
from .records import is_valid_label

logger = logging.getLogger(__name__)

LINK_NS = "http://www.xbrl.org/2003/linkbase"
XLINK_NS = "http://www.w3.org/1999/xlink"

KINDS = ("calculation", "presentation")
_ALIASES = {"cal": "calculation", "calculation": "calculation", "pre": "presentation", "presentation": "presentation"}
_LINK_ELEMENT = {"calculation": "calculationLink", "presentation": "presentationLink"}
_ARC_ELEMENT = {"calculation": "calculationArc", "presentation": "presentationArc"}


def normalize_kind(kind: str) -> str:
    try:
        return _ALIASES[kind.lower()]
    except (KeyError, AttributeError):
        raise ValueError(f"unknown relationship kind {kind!r}; expected one of {KINDS}") from None


@dataclass(frozen=True, order=True)
class TaxonomyEdge:
    parent: str
    child: str
    kind: str
    order_hint: Decimal | None = field(default=None, compare=False)
    weight: Decimal | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.parent == self.child:
            raise ValueError(f"self-loop on {self.parent}")
        if self.weight is not None and self.kind != "calculation":
            raise ValueError("weight only applies to calculation edges")

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.parent, self.child, self.kind)


@dataclass
class DocumentTaxonomy:
    accession_number: str
    edges: list[TaxonomyEdge]
    cik: str | None = None

    def records(self) -> Iterator[dict]:
        for e in self.edges:
            rec = {"parent": e.parent, "child": e.child, "kind": e.kind, "accession": self.accession_number}
            if self.cik is not None:
                rec["cik"] = self.cik
            yield rec


def href_to_tag(href: str) -> str | None:
    """Turn a locator href such as ``...xsd#us-gaap_Revenues`` into ``us-gaap:Revenues``."""
    _, sep, fragment = (href or "").partition("#")
    if not sep or not fragment:
        return None
    fragment = unquote(fragment)
    prefix, sep, local = fragment.partition("_")
    if not sep or not prefix or not local:
        return None
    tag = f"{prefix}:{local}"
    return tag if is_valid_label(tag) else None


def _decimal(value: str | None) -> Decimal | None:
    if value is None:
        return None
    try:
        return Decimal(value.strip())
    except InvalidOperation:
        return None


def parse_linkbase(content: bytes, kind: str, diagnostics: Counter | None = None) -> list[TaxonomyEdge]:
    """Parse one linkbase file into a sorted, de-duplicated edge list.

    Raises :class:`WrongLinkbaseKind` when the file holds extended links but
    none of the requested kind.
    """
    kind = normalize_kind(kind)
    tally = diagnostics if diagnostics is not None else Counter()
    if content.lstrip()[:1] == b"{":
        return _dedupe(
            (e for e in read_interchange(io.BytesIO(content)) if e.kind == kind), tally
        )
    try:
        root = etree.fromstring(content, parser=etree.XMLParser(resolve_entities=False, huge_tree=True))
    except etree.XMLSyntaxError as exc:
        raise WrongLinkbaseKind(f"not a linkbase document: {exc}") from exc
    if etree.QName(root).localname != "linkbase":
        raise WrongLinkbaseKind(f"root element is {etree.QName(root).localname!r}, not linkbase")

    links = root.findall(f"{{{LINK_NS}}}{_LINK_ELEMENT[kind]}")
    if not links:
        others = [k for k in KINDS if k != kind and root.find(f"{{{LINK_NS}}}{_LINK_ELEMENT[k]}") is not None]
        if others:
            raise WrongLinkbaseKind(f"expected {kind} links, found {others[0]} links")
        return []

    edges = []
    for link in links:
        locs: dict[str, list[str]] = {}
        for loc in link.iterfind(f"{{{LINK_NS}}}loc"):
            label = loc.get(f"{{{XLINK_NS}}}label")
            tag = href_to_tag(loc.get(f"{{{XLINK_NS}}}href"))
            if label is None:
                continue
            if tag is None:
                tally["unresolved_locators"] += 1
                continue
            locs.setdefault(label, []).append(tag)
        for arc in link.iterfind(f"{{{LINK_NS}}}{_ARC_ELEMENT[kind]}"):
            if arc.get("use") == "prohibited":
                tally["prohibited_arcs"] += 1
                continue
            parents = locs.get(arc.get(f"{{{XLINK_NS}}}from"))
            children = locs.get(arc.get(f"{{{XLINK_NS}}}to"))
            if not parents or not children:
                tally["unresolved_arcs"] += 1
                logger.debug("arc with unresolvable endpoint %s -> %s",
                             arc.get(f"{{{XLINK_NS}}}from"), arc.get(f"{{{XLINK_NS}}}to"))
                continue
            order = _decimal(arc.get("order"))
            weight = _decimal(arc.get("weight")) if kind == "calculation" else None
            for p in parents:
                for c in children:
                    if p == c:
                        tally["self_loops"] += 1
                        continue
                    edges.append(TaxonomyEdge(p, c, kind, order, weight))
    return _dedupe(edges, tally)


def _dedupe(edges: Iterable[TaxonomyEdge], tally: Counter) -> list[TaxonomyEdge]:
    best: dict[tuple, TaxonomyEdge] = {}

    def rank(e):
        return (e.order_hint is None, e.order_hint or 0, e.weight is None, e.weight or 0)

    for e in edges:
        prev = best.get(e.key)
        if prev is None:
            best[e.key] = e
        else:
            tally["duplicate_arcs"] += 1
            if rank(e) < rank(prev):
                best[e.key] = e
    return sorted(best.values())


def read_interchange(source) -> Iterator[TaxonomyEdge]:
    """Read edges from interchange-format lines (path or binary file object)."""
    fh = open(source, "rb") if not hasattr(source, "read") else source
    try:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            if rec["parent"] == rec["child"]:
                continue
            yield TaxonomyEdge(rec["parent"], rec["child"], normalize_kind(rec["kind"]))
    finally:
        if fh is not source:
            fh.close()


def read_edge_records(path) -> Iterator[dict]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                yield json.loads(line)
