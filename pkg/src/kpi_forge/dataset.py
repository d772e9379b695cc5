"""Dataset assembly: temporal company-aware splits, the Lite subset, task
labels and corpus statistics."""
from __future__ import annotations

import csv
import datetime as dt
import io
import logging
import random
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass
from fractions import Fraction
from importlib import resources
from typing import Iterable, Iterator, Mapping

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .records import Paragraph

logger = logging.getLogger(__name__)

TRAIN_END = dt.date(2023, 10, 31)
DEV_END = dt.date(2024, 5, 31)
TEST_END = dt.date(2024, 6, 1)
DEFAULT_CUTOFFS = (TRAIN_END, DEV_END, TEST_END)
DEFAULT_SEED = 2024

SPLITS = ("train", "dev", "test")
LITE_CATEGORIES = ("Revenues", "Earnings", "EPS", "EBIT")
LITE_OOS = "XBRL-OOS"
TASK_OOS = "OOS"


# ---------------------------------------------------------------------------
# split

@dataclass(frozen=True)
class SplitAssignment:
    accession_number: str
    split: str
    reason: str  # global_cutoff | company_cutoff | new_company


def _check_cutoffs(cutoffs):
    train_end, dev_end, test_end = cutoffs
    if not train_end < dev_end < test_end:
        raise ValueError(f"cutoffs must be strictly increasing, got {cutoffs}")


def _company_cut(dates: list[dt.date], dev_end: dt.date) -> int:
    """Number of a company's post-train filings (sorted) that go to dev.

    The cut never separates filings sharing a date, never puts a filing after
    ``dev_end`` into dev, and lands as close to half as possible; on a tie the
    extra filing goes to dev.
    """
    m = len(dates)
    limit = sum(1 for d in dates if d <= dev_end)
    valid = [k for k in range(m + 1) if k <= limit and (k in (0, m) or dates[k - 1] < dates[k])]
    return min(valid, key=lambda k: (abs(2 * k - m), -k))


def assign_splits(paragraphs: Iterable[Paragraph], cutoffs=DEFAULT_CUTOFFS, seed: int = DEFAULT_SEED,
                  diagnostics: Counter | None = None) -> dict[str, SplitAssignment]:
    """Assign each filing (accession) to train, dev or test."""
    _check_cutoffs(cutoffs)
    train_end, dev_end, test_end = cutoffs
    tally = diagnostics if diagnostics is not None else Counter()
    filings: dict[str, tuple[dt.date, str]] = {}
    for p in paragraphs:
        filings.setdefault(p.accession_number, (p.filing_day, p.company_name))

    by_company: dict[str, list[tuple[dt.date, str]]] = defaultdict(list)
    for acc, (day, company) in filings.items():
        if day > test_end:
            tally["after_test_end"] += 1
            logger.info("excluding %s filed %s after %s", acc, day, test_end)
            continue
        by_company[company].append((day, acc))

    out: dict[str, SplitAssignment] = {}
    for company in sorted(by_company):
        items = sorted(by_company[company])
        if items[0][0] > train_end:
            for _, acc in items:
                out[acc] = SplitAssignment(acc, "test", "new_company")
            continue
        post = []
        for day, acc in items:
            if day <= train_end:
                out[acc] = SplitAssignment(acc, "train", "global_cutoff")
            else:
                post.append((day, acc))
        if not post:
            continue
        if len(post) == 1:
            rng = random.Random(f"{seed}:{company}")
            choice = "dev" if post[0][0] <= dev_end and rng.random() < 0.5 else "test"
            out[post[0][1]] = SplitAssignment(post[0][1], choice, "company_cutoff")
            continue
        k = _company_cut([d for d, _ in post], dev_end)
        for i, (_, acc) in enumerate(post):
            out[acc] = SplitAssignment(acc, "dev" if i < k else "test", "company_cutoff")
    return out


def split(paragraphs: Iterable[Paragraph], cutoffs=DEFAULT_CUTOFFS, seed: int = DEFAULT_SEED,
          diagnostics: Counter | None = None) -> Iterator[tuple[Paragraph, SplitAssignment]]:
    paragraphs = list(paragraphs)
    assignment = assign_splits(paragraphs, cutoffs, seed, diagnostics)
    for p in paragraphs:
        a = assignment.get(p.accession_number)
        if a is not None:
            yield p, a


def dev_companies_in_test(paragraphs: Iterable[Paragraph], assignment: Mapping[str, SplitAssignment]) -> float | None:
    """Share of dev companies that also have a test filing; None without dev filings."""
    seen: dict[str, set[str]] = defaultdict(set)
    for p in paragraphs:
        a = assignment.get(p.accession_number)
        if a is not None:
            seen[a.split].add(p.company_name)
    if not seen["dev"]:
        return None
    return len(seen["dev"] & seen["test"]) / len(seen["dev"])


class TemporalCompanySplitter(BaseEstimator):
    """Splitter in the spirit of ``sklearn.model_selection`` splitters.

    Filings up to ``train_end`` train; companies first seen after it are
    test-only; every other company's later filings are cut in time into dev
    and test halves.
    """

    def __init__(self, train_end=TRAIN_END, dev_end=DEV_END, test_end=TEST_END, seed=DEFAULT_SEED):
        self.train_end = train_end
        self.dev_end = dev_end
        self.test_end = test_end
        self.seed = seed

    def assign(self, paragraphs, diagnostics=None):
        return assign_splits(paragraphs, (self.train_end, self.dev_end, self.test_end), self.seed, diagnostics)

    def split(self, paragraphs, diagnostics=None):
        """Return ``{"train": [...], "dev": [...], "test": [...]}`` of paragraphs."""
        out = {s: [] for s in SPLITS}
        for p, a in split(paragraphs, (self.train_end, self.dev_end, self.test_end), self.seed, diagnostics):
            out[a.split].append(p)
        return out


# ---------------------------------------------------------------------------
# Lite subset

def load_lite_mapping(source=None) -> dict[str, str]:
    """Read a ``tag,category`` table; the packaged default when ``source`` is None."""
    if source is None:
        text = resources.files("kpi_forge").joinpath("data/lite_mapping.csv").read_text(encoding="utf-8")
    else:
        with open(source, encoding="utf-8") as fh:
            text = fh.read()
    mapping = {}
    for row in csv.DictReader(io.StringIO(text)):
        tag, category = row["tag"].strip(), row["category"].strip()
        if category not in LITE_CATEGORIES:
            raise ValueError(f"unknown Lite category {category!r} for {tag}")
        if tag in mapping:
            raise ValueError(f"duplicate tag {tag} in Lite mapping")
        mapping[tag] = category
    return mapping


def build_lite(paragraphs: Iterable[Paragraph], mapping: Mapping[str, str] | None = None,
               threshold: float = 0.5) -> Iterator[Paragraph]:
    """Keep paragraphs where more than ``threshold`` of entities are mapped.

    Mapped labels become lowercase category names; the rest become ``XBRL-OOS``.
    """
    mapping = load_lite_mapping() if mapping is None else mapping
    if not mapping:
        raise ValueError("Lite mapping must not be empty")
    cut = Fraction(str(threshold))
    for p in paragraphs:
        if not p.entities:
            continue
        hits = sum(1 for e in p.entities if e.label in mapping)
        if Fraction(hits, len(p.entities)) > cut:
            yield p.with_labels(mapping[e.label].lower() if e.label in mapping else LITE_OOS for e in p.entities)


class LiteFilter(BaseEstimator, TransformerMixin):
    def __init__(self, mapping=None, threshold=0.5):
        self.mapping = mapping
        self.threshold = threshold

    def fit(self, paragraphs=None, y=None):
        self.mapping_ = load_lite_mapping() if self.mapping is None else dict(self.mapping)
        return self

    def transform(self, paragraphs):
        check_is_fitted(self, "mapping_")
        return list(build_lite(paragraphs, self.mapping_, self.threshold))


# ---------------------------------------------------------------------------
# task labels

def top_labels(paragraphs: Iterable[Paragraph], top_k: int | None) -> set[str]:
    freq = Counter(e.label for p in paragraphs for e in p.entities)
    ranked = sorted(freq, key=lambda t: (-freq[t], t))
    return set(ranked if top_k is None else ranked[:top_k])


def prepare_task_labels(paragraphs: Iterable[Paragraph], task: str, top_k: int | None = 1000,
                        train: Iterable[Paragraph] | None = None) -> Iterator[dict]:
    """Turn paragraphs into classification or sequence-labeling records.

    ``text_classification`` labels each paragraph with its first entity's tag.
    ``sequence_labeling`` keeps character spans and replaces tags outside the
    ``top_k`` most frequent tags of ``train`` with ``OOS``.
    """
    if task == "text_classification":
        for p in paragraphs:
            if p.entities:
                first = min(p.entities, key=lambda e: (e.start_char, e.end_char))
                yield {"text": p.text, "label": first.label}
    elif task == "sequence_labeling":
        if train is None:
            raise ValueError("sequence_labeling needs the train split to rank tags")
        yield from _sequence_records(paragraphs, top_labels(train, top_k))
    else:
        raise ValueError(f"unknown task {task!r}")


def _sequence_records(paragraphs, keep):
    for p in paragraphs:
        yield {
            "text": p.text,
            "spans": [[e.start_char, e.end_char, e.label if e.label in keep else TASK_OOS] for e in p.entities],
        }


class TaskLabeler(BaseEstimator, TransformerMixin):
    """Fit the tag vocabulary on train, then emit task records for any split."""

    def __init__(self, task="sequence_labeling", top_k=1000):
        self.task = task
        self.top_k = top_k

    def fit(self, paragraphs, y=None):
        self.vocabulary_ = top_labels(paragraphs, self.top_k)
        return self

    def transform(self, paragraphs):
        check_is_fitted(self, "vocabulary_")
        if self.task == "text_classification":
            return list(prepare_task_labels(paragraphs, self.task))
        if self.task != "sequence_labeling":
            raise ValueError(f"unknown task {self.task!r}")
        return list(_sequence_records(paragraphs, self.vocabulary_))


# ---------------------------------------------------------------------------
# statistics

@dataclass(frozen=True)
class CorpusStats:
    avg_words: float
    avg_tags: float
    words_per_tag: float
    n_paragraphs: int
    n_entities: int
    n_words: int

    def to_record(self) -> dict:
        return asdict(self)


def compute_stats(paragraphs: Iterable[Paragraph]) -> CorpusStats:
    n_par = n_ent = n_words = 0
    for p in paragraphs:
        n_par += 1
        n_ent += len(p.entities)
        n_words += len(p.text.split())
    return CorpusStats(
        avg_words=n_words / n_par if n_par else 0.0,
        avg_tags=n_ent / n_par if n_par else 0.0,
        words_per_tag=n_words / n_ent if n_ent else 0.0,
        n_paragraphs=n_par,
        n_entities=n_ent,
        n_words=n_words,
    )
