"""Bottom-up leaf collapse of a taxonomy to a chosen granularity level.

Each iteration takes every current leaf that still has a parent and merges
it into that parent. A node of height ``h`` (leaves have height 0) is
therefore merged away in iteration ``h + 1`` unless it is a root, so the
image of tag ``t`` after ``n`` iterations is the first node on its root path
whose height is at least ``n``, or the root itself.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import CyclicTaxonomyError
from .records import Paragraph
from .taxonomy import MasterTaxonomy

OOS_LABEL = "OOS"
OOS_POLICIES = ("keep", "map_to_oos")


@dataclass(frozen=True)
class CollapseMap:
    level: int
    mapping: Mapping[str, str]
    taxonomy_kind: str

    def __call__(self, tag: str) -> str | None:
        return self.mapping.get(tag)

    def image(self) -> set[str]:
        return set(self.mapping.values())

    def records(self) -> list[dict]:
        return [
            {"tag": t, "collapsed_tag": c, "level": self.level, "kind": self.taxonomy_kind}
            for t, c in sorted(self.mapping.items())
        ]

    @classmethod
    def from_records(cls, records: Iterable[dict]) -> "CollapseMap":
        mapping = {}
        level = kind = None
        for rec in records:
            mapping[rec["tag"]] = rec["collapsed_tag"]
            level = int(rec["level"])
            kind = rec["kind"]
        return cls(level=level or 0, mapping=mapping, taxonomy_kind=kind or "presentation")


def node_heights(tax: MasterTaxonomy) -> dict[str, int]:
    """Height of every node (longest downward path); raises on cycles."""
    children = tax.children()
    heights: dict[str, int] = {}
    for start in sorted(tax.nodes):
        if start in heights:
            continue
        # iterative post-order; ``active`` detects back edges
        stack = [(start, iter(children.get(start, ())))]
        active = {start}
        while stack:
            node, it = stack[-1]
            child = next(it, None)
            if child is None:
                stack.pop()
                active.discard(node)
                heights[node] = 1 + max((heights[c] for c in children.get(node, ())), default=-1)
            elif child in active:
                raise CyclicTaxonomyError(f"cycle through {child}")
            elif child not in heights:
                active.add(child)
                stack.append((child, iter(children.get(child, ()))))
    # nodes on a parent cycle are unreachable from any root: check explicitly
    for tag in tax.parent_of:
        tax.ancestors(tag)
    return heights


def collapse(tax: MasterTaxonomy, n: int) -> CollapseMap:
    """Apply ``n`` leaf-to-parent iterations and return the composed mapping."""
    if n < 0:
        raise ValueError("collapse level must be non-negative")
    heights = node_heights(tax)
    mapping = {}
    for tag in tax.nodes:
        cur = tag
        while heights[cur] < n:
            parent = tax.parent(cur)
            if parent is None:
                break
            cur = parent
        mapping[tag] = cur
    return CollapseMap(level=n, mapping=dict(sorted(mapping.items())), taxonomy_kind=tax.kind)


def _remap_label(label: str, cmap: CollapseMap, oos_policy: str) -> str:
    target = cmap.mapping.get(label)
    if target is not None:
        return target
    return label if oos_policy == "keep" else OOS_LABEL


def remap_dataset(paragraphs: Iterable[Paragraph], cmap: CollapseMap, oos_policy: str = "keep") -> Iterator[Paragraph]:
    if oos_policy not in OOS_POLICIES:
        raise ValueError(f"oos_policy must be one of {OOS_POLICIES}")
    for p in paragraphs:
        yield p.with_labels(_remap_label(e.label, cmap, oos_policy) for e in p.entities)


def unique_label_count(paragraphs: Iterable[Paragraph], cmap: CollapseMap, oos_policy: str = "keep") -> int:
    return len({_remap_label(e.label, cmap, oos_policy) for p in paragraphs for e in p.entities})


class TaxonomyCollapser(BaseEstimator, TransformerMixin):
    """Remap entity labels to their collapsed taxonomy node.

    Parameters
    ----------
    level : int
        Number of leaf-collapse iterations.
    oos_policy : {"keep", "map_to_oos"}
        What to do with labels the taxonomy does not know.

    Examples
    --------
    >>> collapser = TaxonomyCollapser(level=2).fit(master)  # doctest: +SKIP
    >>> coarse = collapser.transform(paragraphs)            # doctest: +SKIP
    """

    def __init__(self, level=1, oos_policy="keep"):
        self.level = level
        self.oos_policy = oos_policy

    def fit(self, taxonomy: MasterTaxonomy, y=None):
        if not isinstance(self.level, int) or self.level < 0:
            raise ValueError(f"level must be a non-negative int, got {self.level!r}")
        if self.oos_policy not in OOS_POLICIES:
            raise ValueError(f"oos_policy must be one of {OOS_POLICIES}")
        self.collapse_map_ = collapse(taxonomy, self.level)
        return self

    def transform(self, paragraphs):
        check_is_fitted(self, "collapse_map_")
        return list(remap_dataset(paragraphs, self.collapse_map_, self.oos_policy))
