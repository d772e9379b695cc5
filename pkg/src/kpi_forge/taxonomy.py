"""Master taxonomies: each tag's parent is its most frequent parent in the corpus.

Edge counts form a commutative monoid (``collections.Counter`` addition), so
shards can be counted independently and merged before the argmax step.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import CyclicTaxonomyError, MixedKindError, UnknownCompanyError
from .linkbase import TaxonomyEdge, normalize_kind


@dataclass(frozen=True)
class MasterTaxonomy:
    kind: str
    parent_of: Mapping[str, tuple[str, int]]
    roots: frozenset = field(default_factory=frozenset)

    @property
    def nodes(self) -> set[str]:
        out = set(self.roots)
        for child, (parent, _) in self.parent_of.items():
            out.add(child)
            out.add(parent)
        return out

    def parent(self, tag: str) -> str | None:
        entry = self.parent_of.get(tag)
        return entry[0] if entry else None

    def children(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {}
        for child, (parent, _) in sorted(self.parent_of.items()):
            out.setdefault(parent, []).append(child)
        return out

    def ancestors(self, tag: str) -> list[str]:
        """Root path of ``tag`` excluding itself, nearest first."""
        out = []
        seen = {tag}
        cur = self.parent(tag)
        while cur is not None:
            if cur in seen:
                raise CyclicTaxonomyError(f"cycle through {cur}")
            seen.add(cur)
            out.append(cur)
            cur = self.parent(cur)
        return out

    def __len__(self):
        return len(self.nodes)


def count_edges(edges: Iterable[TaxonomyEdge], kind: str | None = None) -> tuple[Counter, str | None]:
    """Count ``(parent, child)`` occurrences, enforcing a single kind."""
    counts: Counter = Counter()
    for e in edges:
        if kind is None:
            kind = e.kind
        elif e.kind != kind:
            raise MixedKindError(f"mixed edge kinds: {kind} and {e.kind}")
        counts[(e.parent, e.child)] += 1
    return counts, kind


def _break_cycles(choice: dict[str, tuple[str, int]]) -> dict[str, tuple[str, int]]:
    choice = dict(choice)
    state: dict[str, int] = {}  # 1 = on current path, 2 = finished
    for start in sorted(choice):
        if start in state:
            continue
        path = []
        node = start
        while node is not None and node not in state:
            state[node] = 1
            path.append(node)
            entry = choice.get(node)
            node = entry[0] if entry else None
        if node is not None and state.get(node) == 1:
            cycle = path[path.index(node):]
            # lowest support first; among equals the lexicographically greatest child
            victim = max(cycle, key=lambda c: (-choice[c][1], c))
            del choice[victim]
        for n in path:
            state[n] = 2
    return choice


def build_from_counts(counts: Mapping[tuple[str, str], int], kind: str) -> MasterTaxonomy:
    candidates: dict[str, list[tuple[int, str]]] = {}
    nodes = set()
    for (parent, child), n in counts.items():
        if n <= 0 or parent == child:
            continue
        candidates.setdefault(child, []).append((n, parent))
        nodes.add(parent)
        nodes.add(child)
    choice = {}
    for child, cands in candidates.items():
        n, parent = min(cands, key=lambda np: (-np[0], np[1]))
        choice[child] = (parent, n)
    choice = _break_cycles(choice)
    roots = frozenset(t for t in nodes if t not in choice)
    return MasterTaxonomy(kind=normalize_kind(kind), parent_of=dict(sorted(choice.items())), roots=roots)


def build_master(edges: Iterable[TaxonomyEdge]) -> MasterTaxonomy:
    """Aggregate per-document edges into a master forest.

    An empty edge stream yields an empty presentation taxonomy.
    """
    counts, kind = count_edges(edges)
    return build_from_counts(counts, kind or "presentation")


class MasterTaxonomyBuilder(BaseEstimator):
    """Estimator wrapper around :func:`build_master`.

    ``partial_fit`` adds counts from another shard, so
    ``fit(a).partial_fit(b)`` equals ``fit(a + b)``.
    """

    def __init__(self, kind=None):
        self.kind = kind

    def fit(self, edges, y=None):
        self.counts_ = Counter()
        self.kind_ = normalize_kind(self.kind) if self.kind else None
        return self.partial_fit(edges)

    def partial_fit(self, edges, y=None):
        if not hasattr(self, "counts_"):
            self.counts_ = Counter()
            self.kind_ = normalize_kind(self.kind) if self.kind else None
        counts, self.kind_ = count_edges(edges, self.kind_)
        self.counts_.update(counts)
        self.taxonomy_ = build_from_counts(self.counts_, self.kind_ or "presentation")
        return self

    def transform(self, tags):
        """Map each tag to its master parent (``None`` for roots/unknown)."""
        check_is_fitted(self, "taxonomy_")
        return [self.taxonomy_.parent(t) for t in tags]


# ---------------------------------------------------------------------------
# artifacts

def taxonomy_records(tax: MasterTaxonomy) -> list[dict]:
    return [
        {"child": child, "parent": parent, "kind": tax.kind, "support": support}
        for child, (parent, support) in sorted(tax.parent_of.items())
    ]


def taxonomy_from_records(records: Iterable[dict], kind: str | None = None) -> MasterTaxonomy:
    parent_of = {}
    nodes = set()
    for rec in records:
        rk = normalize_kind(rec["kind"])
        if kind is None:
            kind = rk
        elif rk != normalize_kind(kind):
            raise MixedKindError(f"mixed kinds in taxonomy artifact: {kind} and {rk}")
        parent_of[rec["child"]] = (rec["parent"], int(rec["support"]))
        nodes.update((rec["child"], rec["parent"]))
    roots = frozenset(t for t in nodes if t not in parent_of)
    return MasterTaxonomy(kind=normalize_kind(kind or "presentation"), parent_of=dict(sorted(parent_of.items())), roots=roots)


def export_taxonomy(edge_records: Iterable[dict], kind: str, scope: str = "merged") -> MasterTaxonomy:
    """Build the merged taxonomy, or the one for a single company.

    ``edge_records`` are interchange records; per-company scope (``scope`` set
    to a CIK) needs a ``cik`` field on them.
    """
    kind = normalize_kind(kind)
    wanted = None if scope == "merged" else str(int(scope)).zfill(10)
    edges = []
    found = False
    for rec in edge_records:
        if normalize_kind(rec["kind"]) != kind:
            continue
        if wanted is not None:
            cik = rec.get("cik")
            if cik is None or str(int(cik)).zfill(10) != wanted:
                continue
            found = True
        if rec["parent"] != rec["child"]:
            edges.append(TaxonomyEdge(rec["parent"], rec["child"], kind))
    if wanted is not None and not found:
        raise UnknownCompanyError(f"no {kind} edges for cik {scope}")
    counts, _ = count_edges(edges, kind)
    return build_from_counts(counts, kind)


# ---------------------------------------------------------------------------
# treemap

def label_frequencies(paragraphs) -> Counter:
    return Counter(e.label for p in paragraphs for e in p.entities)


def treemap_export(tax: MasterTaxonomy, frequencies: Mapping[str, int], top_k: int) -> dict:
    """Nested tree of the ``top_k`` most frequent tags plus their ancestors.

    Roots are always present. Each node carries its own ``count`` and the
    ``total`` over its exported subtree. Tags absent from the taxonomy rank
    alongside taxonomy tags and appear as standalone roots.
    """
    if top_k < 0:
        raise ValueError("top_k must be non-negative")
    universe = tax.nodes | set(frequencies)
    ranked = sorted(universe, key=lambda t: (-frequencies.get(t, 0), t))
    keep = set(tax.roots)
    for tag in ranked[:top_k]:
        keep.add(tag)
        keep.update(tax.ancestors(tag))
    children: dict[str | None, list[str]] = {}
    for tag in sorted(keep):
        parent = tax.parent(tag)
        children.setdefault(parent, []).append(tag)

    def node(tag: str) -> dict:
        kids = [node(c) for c in children.get(tag, [])]
        count = int(frequencies.get(tag, 0))
        return {"name": tag, "count": count, "total": count + sum(k["total"] for k in kids), "children": kids}

    tops = [node(t) for t in children.get(None, [])]
    return {"name": f"{tax.kind}-taxonomy", "count": 0, "total": sum(t["total"] for t in tops), "children": tops}


def flatten_treemap(tree: dict) -> Iterator[dict]:
    """``id``/``parent``/``value`` rows, the shape plotting libraries expect."""
    def walk(n, parent):
        yield {"id": n["name"], "parent": parent, "value": n["total"]}
        for c in n["children"]:
            yield from walk(c, n["name"])

    for top in tree["children"]:
        yield from walk(top, "")
