"""Scoring of structured-extraction predictions against gold entities.

A wrong prediction on an aligned pair counts as a false negative for the
gold value and a false positive for the predicted one. Label macro-F1
averages only over labels present in gold.
"""
from __future__ import annotations

import datetime as dt
import json
from collections import Counter
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from typing import Iterable, Mapping, Sequence

from .records import Entity, Paragraph

FIELDS = ("start_date", "end_date", "currency", "value", "label")
# value dominates, then each date, then unit, then label
_WEIGHTS = {"value": 16, "start_date": 4, "end_date": 4, "currency": 2, "label": 1}
PRED_KEYS = {
    "label": "label",
    "start_date": "start_date_for_period",
    "end_date": "end_date_for_period",
    "currency": "currency_/_unit",
    "value": "value",
}


@dataclass(frozen=True)
class PredictedEntity:
    label: str | None = None
    period_start: str | None = None
    period_end: str | None = None
    unit: str | None = None
    value: Decimal | None = None

    @classmethod
    def from_record(cls, rec: Mapping) -> "PredictedEntity":
        value = rec.get(PRED_KEYS["value"])
        return cls(
            label=_clean_str(rec.get(PRED_KEYS["label"])),
            period_start=_clean_str(rec.get(PRED_KEYS["start_date"])),
            period_end=_clean_str(rec.get(PRED_KEYS["end_date"])),
            unit=_clean_str(rec.get(PRED_KEYS["currency"])),
            value=_to_decimal(value),
        )


def _clean_str(v):
    if v is None:
        return None
    s = str(v).strip()
    return s or None


def _to_decimal(v) -> Decimal | None:
    if v is None or isinstance(v, bool):
        return None
    try:
        d = Decimal(repr(v)) if isinstance(v, float) else Decimal(str(v).strip().replace(",", ""))
    except InvalidOperation:
        return None
    return d if d.is_finite() else None


def _norm_decimal(d: Decimal | None):
    return None if d is None else d.normalize()


def _norm_date(v) -> str | None:
    if v is None:
        return None
    if isinstance(v, dt.date):
        return v.isoformat()
    s = str(v).strip()
    try:
        return dt.date.fromisoformat(s).isoformat() if len(s) == 10 else s
    except ValueError:
        return s


def gold_fields(e: Entity) -> dict:
    return {
        "start_date": _norm_date(e.period_start),
        "end_date": _norm_date(e.period_end),
        "currency": e.unit,
        "value": _norm_decimal(e.value),
        "label": e.label,
    }


def pred_fields(e: PredictedEntity) -> dict:
    return {
        "start_date": _norm_date(e.period_start),
        "end_date": _norm_date(e.period_end),
        "currency": e.unit,
        "value": _norm_decimal(e.value),
        "label": e.label,
    }


def _agreement(g: dict, p: dict) -> int:
    return sum(w for f, w in _WEIGHTS.items() if p[f] is not None and g[f] == p[f])


def _canon_key(fields: dict) -> tuple:
    return tuple((fields[f] is None, str(fields[f])) for f in FIELDS)


@dataclass
class Alignment:
    pairs: list[tuple[int, int]]
    unmatched_gold: list[int]
    unmatched_pred: list[int]


def align(gold: Sequence[Entity], pred: Sequence[PredictedEntity]) -> Alignment:
    """Greedy one-to-one matching on weighted field agreement.

    Candidates are ranked by agreement, then by position in a canonical
    (content-sorted) order of each side, so shuffling either input does not
    change which contents get paired. Pairs with no agreeing field are left
    unmatched.
    """
    gf = [gold_fields(g) for g in gold]
    pf = [pred_fields(p) for p in pred]
    g_order = sorted(range(len(gf)), key=lambda i: (_canon_key(gf[i]), i))
    p_order = sorted(range(len(pf)), key=lambda j: (_canon_key(pf[j]), j))
    g_rank = {i: r for r, i in enumerate(g_order)}
    p_rank = {j: r for r, j in enumerate(p_order)}
    cands = []
    for i in range(len(gf)):
        for j in range(len(pf)):
            s = _agreement(gf[i], pf[j])
            if s > 0:
                cands.append((-s, g_rank[i], p_rank[j], i, j))
    cands.sort()
    used_g, used_p, pairs = set(), set(), []
    for _, _, _, i, j in cands:
        if i in used_g or j in used_p:
            continue
        used_g.add(i)
        used_p.add(j)
        pairs.append((i, j))
    pairs.sort()
    return Alignment(
        pairs=pairs,
        unmatched_gold=[i for i in range(len(gf)) if i not in used_g],
        unmatched_pred=[j for j in range(len(pf)) if j not in used_p],
    )


@dataclass
class Tally:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __add__(self, other):
        return Tally(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    def prf(self) -> tuple[float, float, float]:
        p = self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0
        r = self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        return p, r, f


@dataclass
class Scorer:
    """Accumulates tallies over documents; merge two with ``+``."""

    fields: dict = field(default_factory=lambda: {f: Tally() for f in FIELDS})
    labels: dict = field(default_factory=dict)
    gold_total: int = 0
    exact: int = 0
    label_support: Counter = field(default_factory=Counter)

    def __add__(self, other):
        out = Scorer()
        for f in FIELDS:
            out.fields[f] = self.fields[f] + other.fields[f]
        for lab in set(self.labels) | set(other.labels):
            out.labels[lab] = self.labels.get(lab, Tally()) + other.labels.get(lab, Tally())
        out.gold_total = self.gold_total + other.gold_total
        out.exact = self.exact + other.exact
        out.label_support = self.label_support + other.label_support
        return out

    def _label(self, lab) -> Tally:
        return self.labels.setdefault(lab, Tally())

    def add(self, gold: Sequence[Entity], pred: Sequence[PredictedEntity], alignment: Alignment | None = None):
        alignment = alignment or align(gold, pred)
        gf = [gold_fields(g) for g in gold]
        pf = [pred_fields(p) for p in pred]
        self.gold_total += len(gold)
        for g in gf:
            self.label_support[g["label"]] += 1
        for i, j in alignment.pairs:
            g, p = gf[i], pf[j]
            all_ok = True
            for f in FIELDS:
                t = self.fields[f]
                if p[f] is not None and g[f] == p[f]:
                    t.tp += 1
                else:
                    all_ok = False
                    t.fn += 1
                    if p[f] is not None:
                        t.fp += 1
            if p["label"] is not None and g["label"] == p["label"]:
                self._label(g["label"]).tp += 1
            else:
                self._label(g["label"]).fn += 1
                if p["label"] is not None:
                    self._label(p["label"]).fp += 1
            self.exact += all_ok
        for i in alignment.unmatched_gold:
            for f in FIELDS:
                self.fields[f].fn += 1
            self._label(gf[i]["label"]).fn += 1
        for j in alignment.unmatched_pred:
            for f in FIELDS:
                if pf[j][f] is not None:
                    self.fields[f].fp += 1
            if pf[j]["label"] is not None:
                self._label(pf[j]["label"]).fp += 1
        return self

    # -- metrics -------------------------------------------------------
    def score_field(self, name: str) -> tuple[float, float, float]:
        return self.fields[name].prf()

    def per_label_f1(self, gold_only: bool = True) -> dict[str, float]:
        return {
            lab: t.prf()[2]
            for lab, t in sorted(self.labels.items())
            if not gold_only or self.label_support[lab] > 0
        }

    def label_macro_f1(self) -> float:
        f1s = self.per_label_f1(gold_only=True)
        return sum(f1s.values()) / len(f1s) if f1s else 0.0

    def entity_exact_match(self) -> float:
        return self.exact / self.gold_total if self.gold_total else 0.0

    def report(self) -> dict:
        return {
            "per_field": {
                f: dict(zip(("precision", "recall", "micro_f1"), self.score_field(f))) for f in FIELDS
            },
            "label_macro_f1": self.label_macro_f1(),
            "entity_exact_match": self.entity_exact_match(),
            "counts": {
                "fields": {f: vars(self.fields[f]).copy() for f in FIELDS},
                "labels": {lab: vars(t).copy() for lab, t in sorted(self.labels.items())},
                "gold_entities": self.gold_total,
                "exact_matches": self.exact,
            },
            "per_label_f1": self.per_label_f1(),
            "cumulative_macro_f1": [
                list(pt) for pt in cumulative_macro_f1(self.per_label_f1(), self.label_support)
            ],
        }


# functional forms -----------------------------------------------------------

def score_field(gold, pred, name: str, alignment: Alignment | None = None) -> tuple[float, float, float]:
    return Scorer().add(gold, pred, alignment).score_field(name)


def label_macro_f1(gold, pred, alignment: Alignment | None = None) -> float:
    return Scorer().add(gold, pred, alignment).label_macro_f1()


def entity_exact_match(gold, pred, alignment: Alignment | None = None) -> float:
    return Scorer().add(gold, pred, alignment).entity_exact_match()


def cumulative_macro_f1(per_label_f1: Mapping[str, float], test_label_freq: Mapping[str, int]) -> list[tuple[int, float]]:
    """Macro-F1 of the top-k labels by test frequency against their cumulative support."""
    missing = [lab for lab in per_label_f1 if lab not in test_label_freq]
    if missing:
        raise ValueError(f"no test frequency for labels {missing[:5]}")
    order = sorted(per_label_f1, key=lambda lab: (-test_label_freq[lab], lab))
    points = []
    support = 0
    f1_sum = 0.0
    for k, lab in enumerate(order, 1):
        support += test_label_freq[lab]
        f1_sum += per_label_f1[lab]
        points.append((support, f1_sum / k))
    return points


# files ----------------------------------------------------------------------

def parse_prediction(obj) -> list[PredictedEntity]:
    """Accept ``{"entities": [...]}``, ``[{"entities": [...]}]`` or a bare list."""
    if isinstance(obj, dict):
        items = obj.get("entities", [])
    elif isinstance(obj, list):
        if obj and all(isinstance(o, dict) and "entities" in o for o in obj):
            items = [e for o in obj for e in o["entities"]]
        else:
            items = obj
    else:
        raise ValueError(f"unsupported prediction record {type(obj).__name__}")
    return [PredictedEntity.from_record(e) for e in items if isinstance(e, dict)]


def evaluate(gold: Iterable[Paragraph], predictions: Iterable) -> Scorer:
    """Score paired documents; ``predictions`` align with ``gold`` by position."""
    scorer = Scorer()
    gold = list(gold)
    predictions = list(predictions)
    if len(gold) != len(predictions):
        raise ValueError(f"{len(gold)} gold records but {len(predictions)} prediction records")
    for g, p in zip(gold, predictions):
        if not (isinstance(p, list) and p and all(isinstance(e, PredictedEntity) for e in p)):
            p = parse_prediction(p)
        scorer.add(list(g.entities), p)
    return scorer


def read_predictions(path) -> list:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(json.loads(line))
    return out
