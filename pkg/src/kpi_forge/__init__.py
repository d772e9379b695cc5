"""Hierarchical financial KPI dataset toolkit for SEC iXBRL filings."""

from .dataset import (
    CorpusStats,
    LiteFilter,
    SplitAssignment,
    TaskLabeler,
    TemporalCompanySplitter,
    build_lite,
    compute_stats,
    load_lite_mapping,
    prepare_task_labels,
    split,
)
from .edgar import EdgarClient, FilingBundle, FilingRef, RateLimiter
from .evalkit import PredictedEntity, Scorer, align, cumulative_macro_f1, evaluate
from .granularity import CollapseMap, TaxonomyCollapser, collapse, remap_dataset, unique_label_count
from .ixbrl import filter_snippet, parse_document, resolve_value
from .linkbase import DocumentTaxonomy, TaxonomyEdge, parse_linkbase
from .records import Entity, Paragraph
from .taxonomy import MasterTaxonomy, MasterTaxonomyBuilder, build_master, export_taxonomy, treemap_export

__version__ = "0.1.0"

__all__ = [
    "CollapseMap", "CorpusStats", "DocumentTaxonomy", "EdgarClient", "Entity", "FilingBundle",
    "FilingRef", "LiteFilter", "MasterTaxonomy", "MasterTaxonomyBuilder", "Paragraph",
    "PredictedEntity", "RateLimiter", "Scorer", "SplitAssignment", "TaskLabeler", "TaxonomyCollapser",
    "TaxonomyEdge", "TemporalCompanySplitter", "align", "build_lite", "build_master", "collapse",
    "compute_stats", "cumulative_macro_f1", "evaluate", "export_taxonomy", "filter_snippet",
    "load_lite_mapping", "parse_document", "parse_linkbase", "prepare_task_labels", "remap_dataset",
    "resolve_value", "split", "treemap_export", "unique_label_count",
]
