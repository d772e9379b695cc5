"""``kpi-forge`` command line: one subcommand per pipeline stage.

Stages communicate only through files, so each one can be rerun alone.
Exit codes: 0 success, 1 other failure, 2 invalid configuration or usage,
3 missing or partial upstream artifact. Failures print one JSON error
record on stderr.
"""
from __future__ import annotations

import datetime as dt
import functools
import json
import logging
import sys
from collections import Counter
from pathlib import Path

import click

from . import dataset, edgar, evalkit, granularity, ixbrl, linkbase, taxonomy
from .config import PipelineConfig
from .exceptions import ConfigError, KpiForgeError, MissingArtifactError, UnknownCompanyError
from .records import read_jsonl, read_paragraphs, write_json, write_jsonl, write_paragraphs

logger = logging.getLogger("kpi_forge")


def _fail(code: int, kind: str, message: str, **extra):
    click.echo(json.dumps({"error": kind, "message": message, **extra}, sort_keys=True), err=True)
    sys.exit(code)


def stage(fn):
    """Translate package exceptions into exit codes and error records."""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            _fail(2, "config", str(exc))
        except MissingArtifactError as exc:
            _fail(3, "missing_artifact", str(exc), stage=exc.stage)
        except KpiForgeError as exc:
            _fail(1, type(exc).__name__, str(exc))
    return wrapper


def _require(path, upstream: str) -> Path:
    p = Path(path)
    if not p.exists() or p.with_name(p.name + ".part").exists():
        raise MissingArtifactError(f"{p} is missing or incomplete", stage=upstream)
    return p


def _load_paragraphs(path, upstream: str):
    p = _require(path, upstream)
    try:
        return list(read_paragraphs(p))
    except (json.JSONDecodeError, KeyError, ValueError) as exc:
        raise MissingArtifactError(f"{p} is not a complete dataset file: {exc}", stage=upstream) from exc


def _load_records(path, upstream: str):
    p = _require(path, upstream)
    try:
        return list(read_jsonl(p))
    except json.JSONDecodeError as exc:
        raise MissingArtifactError(f"{p} is truncated or corrupt: {exc}", stage=upstream) from exc


def _date(ctx, param, value):
    if value is None:
        return None
    try:
        return dt.date.fromisoformat(value)
    except ValueError:
        raise click.BadParameter(f"expected YYYY-MM-DD, got {value!r}")


@click.group()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
              help="JSON pipeline config; EDGAR_IDENT and KPI_SEED override it.")
@click.option("-v", "--verbose", is_flag=True)
@click.pass_context
def main(ctx, config_path, verbose):
    """Build hierarchical financial KPI datasets from SEC iXBRL filings."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        ctx.obj = PipelineConfig.load(config_path)
    except ConfigError as exc:
        _fail(2, "config", str(exc))


@main.command("config")
@click.pass_obj
def show_config(cfg):
    """Print the effective configuration."""
    click.echo(cfg.dumps(), nl=False)


@main.command()
@click.option("--from", "start", callback=_date, default=None)
@click.option("--to", "end", callback=_date, default=None)
@click.option("--forms", default=None, help="Comma-separated, e.g. 10-K,10-Q")
@click.option("--store", default=None, type=click.Path(file_okay=False))
@click.option("--rate", type=float, default=None, help="Requests per second.")
@click.pass_obj
@stage
def fetch(cfg, start, end, forms, store, rate):
    """Download filings and linkbases into the local store."""
    start = start or cfg.start
    end = end or cfg.end
    forms = tuple(f.strip() for f in forms.split(",")) if forms else cfg.forms
    if not cfg.ident:
        raise ConfigError("EDGAR_IDENT (or config 'ident') is required for fetching")
    client = edgar.EdgarClient(ident=cfg.ident, rate=rate or cfg.rate_limit)
    store = store or cfg.store
    done = 0
    for ref in client.list_filings(start, end, forms):
        bundle = client.fetch_filing(client.resolve_documents(ref), store)
        done += 1
        logger.info("%s: %d downloads%s", ref.accession_number, bundle.downloads,
                    " (linkbases absent)" if bundle.linkbases_absent else "")
    click.echo(f"fetched {done} filings into {store}")


@main.command()
@click.option("--store", required=True, type=click.Path(file_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--diagnostics", "diag_path", default=None, type=click.Path(dir_okay=False))
@stage
def extract(store, out, diag_path):
    """Parse every stored primary document into dataset paragraphs."""
    _require(store, "fetch")
    paragraphs = []
    totals = Counter()
    per_doc = {}
    for ref, directory in edgar.load_store(store):
        primary = directory / edgar.STORE_NAMES["primary_ixbrl"]
        if not primary.exists():
            raise MissingArtifactError(f"{primary} missing", stage="fetch")
        tally = Counter()
        paragraphs.extend(ixbrl.parse_document(primary.read_bytes(), ref, tally))
        per_doc[ref.accession_number] = dict(sorted(tally.items()))
        totals.update(tally)
    n = write_paragraphs(out, paragraphs)
    if diag_path:
        write_json(diag_path, {"totals": dict(sorted(totals.items())), "documents": per_doc})
    click.echo(f"wrote {n} paragraphs to {out}")


@main.command("linkbase")
@click.option("--store", required=True, type=click.Path(file_okay=False))
@click.option("--kind", required=True, type=click.Choice(["pre", "cal", "presentation", "calculation"]))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@stage
def linkbase_cmd(store, kind, out):
    """Write per-document edges in the interchange format."""
    _require(store, "fetch")
    kind = linkbase.normalize_kind(kind)
    name = "pre.xml" if kind == "presentation" else "cal.xml"
    records = []
    for ref, directory in edgar.load_store(store):
        path = directory / name
        if not path.exists():
            logger.info("%s has no %s", ref.accession_number, name)
            continue
        edges = linkbase.parse_linkbase(path.read_bytes(), kind)
        doc = linkbase.DocumentTaxonomy(ref.accession_number, edges, cik=ref.cik)
        records.extend(doc.records())
    n = write_jsonl(out, records)
    click.echo(f"wrote {n} edges to {out}")


@main.command("taxonomy")
@click.option("--edges", required=True, type=click.Path(dir_okay=False))
@click.option("--kind", required=True, type=click.Choice(["pre", "cal", "presentation", "calculation"]))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--per-company", "cik", default=None, help="Restrict to one company's filings.")
@stage
def taxonomy_cmd(edges, kind, out, cik):
    """Aggregate edges into a master taxonomy."""
    records = _load_records(edges, "linkbase")
    try:
        tax = taxonomy.export_taxonomy(records, kind, scope=cik or "merged")
    except UnknownCompanyError:
        raise
    except KeyError as exc:
        raise MissingArtifactError(f"malformed edge record: missing {exc}", stage="linkbase") from exc
    n = write_jsonl(out, taxonomy.taxonomy_records(tax))
    click.echo(f"wrote {n} parent links ({len(tax.roots)} roots) to {out}")


@main.command("collapse")
@click.option("--taxonomy", "tax_path", required=True, type=click.Path(dir_okay=False))
@click.option("--level", required=True, type=click.IntRange(min=0))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@stage
def collapse_cmd(tax_path, level, out):
    """Compute the label mapping after LEVEL leaf-collapse iterations."""
    tax = taxonomy.taxonomy_from_records(_load_records(tax_path, "taxonomy"))
    cmap = granularity.collapse(tax, level)
    write_jsonl(out, cmap.records())
    click.echo(f"level {level}: {len(cmap.mapping)} tags -> {len(cmap.image())} labels")


@main.command()
@click.option("--data", required=True, type=click.Path(dir_okay=False))
@click.option("--cmap", required=True, type=click.Path(dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--oos-policy", type=click.Choice(granularity.OOS_POLICIES), default="keep")
@stage
def remap(data, cmap, out, oos_policy):
    """Rewrite entity labels through a collapse map."""
    paragraphs = _load_paragraphs(data, "extract")
    cm = granularity.CollapseMap.from_records(_load_records(cmap, "collapse"))
    n = write_paragraphs(out, granularity.remap_dataset(paragraphs, cm, oos_policy))
    click.echo(f"remapped {n} paragraphs")


@main.command("split")
@click.option("--data", required=True, type=click.Path(dir_okay=False))
@click.option("--out-dir", required=True, type=click.Path(file_okay=False))
@click.option("--seed", type=int, default=None)
@click.pass_obj
@stage
def split_cmd(cfg, data, out_dir, seed):
    """Write train/dev/test files plus per-filing assignments."""
    paragraphs = _load_paragraphs(data, "extract")
    seed = cfg.seed if seed is None else seed
    tally = Counter()
    assignment = dataset.assign_splits(paragraphs, cfg.cutoffs, seed, tally)
    out_dir = Path(out_dir)
    for name in dataset.SPLITS:
        sel = [p for p in paragraphs if (a := assignment.get(p.accession_number)) and a.split == name]
        write_paragraphs(out_dir / f"{name}.jsonl", sel)
    write_jsonl(out_dir / "assignments.jsonl",
                ({"accession_number": a.accession_number, "split": a.split, "reason": a.reason}
                 for _, a in sorted(assignment.items())))
    write_json(out_dir / "split_diagnostics.json", {
        "seed": seed, "excluded": dict(tally),
        "dev_companies_in_test": dataset.dev_companies_in_test(paragraphs, assignment),
    })
    counts = Counter(a.split for a in assignment.values())
    click.echo(" ".join(f"{s}={counts.get(s, 0)}" for s in dataset.SPLITS) + " filings")


@main.command()
@click.option("--data", required=True, type=click.Path(dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--mapping", default=None, type=click.Path(dir_okay=False), help="tag,category CSV")
@click.option("--threshold", type=float, default=None)
@click.pass_obj
@stage
def lite(cfg, data, out, mapping, threshold):
    """Build the Lite subset with the four expert categories."""
    paragraphs = _load_paragraphs(data, "split")
    table = dataset.load_lite_mapping(mapping)
    thr = cfg.lite_threshold if threshold is None else threshold
    n = write_paragraphs(out, dataset.build_lite(paragraphs, table, thr))
    click.echo(f"kept {n} of {len(paragraphs)} paragraphs")


@main.command()
@click.option("--train", "train_path", required=True, type=click.Path(dir_okay=False))
@click.option("--data", required=True, type=click.Path(dir_okay=False))
@click.option("--task", required=True, type=click.Choice(["text_classification", "sequence_labeling"]))
@click.option("--top-k", type=int, default=1000, help="Vocabulary size; 0 keeps every tag.")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@stage
def tasks(train_path, data, task, top_k, out):
    """Emit task-ready records (first-entity label or OOS-mapped spans)."""
    train = _load_paragraphs(train_path, "split")
    paragraphs = _load_paragraphs(data, "split")
    labeler = dataset.TaskLabeler(task=task, top_k=top_k or None).fit(train)
    n = write_jsonl(out, labeler.transform(paragraphs))
    click.echo(f"wrote {n} {task} records")


@main.command()
@click.option("--split", "splits", multiple=True, required=True, metavar="NAME=PATH")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@stage
def stats(splits, out):
    """Corpus statistics per split."""
    result = {}
    for item in splits:
        name, sep, path = item.partition("=")
        if not sep:
            raise ConfigError(f"--split expects NAME=PATH, got {item!r}")
        result[name] = dataset.compute_stats(_load_paragraphs(path, "split")).to_record()
    write_json(out, result)
    for name, s in result.items():
        click.echo(f"{name}: {s['n_paragraphs']} paragraphs, {s['n_entities']} entities, "
                   f"{s['avg_words']:.2f} words, {s['avg_tags']:.2f} tags")


@main.command("eval")
@click.option("--gold", required=True, type=click.Path(dir_okay=False))
@click.option("--pred", required=True, type=click.Path(dir_okay=False))
@click.option("--report", required=True, type=click.Path(dir_okay=False))
@click.option("--per-label", "per_label", default=None, type=click.Path(dir_okay=False),
              help="Optional TSV breakdown per label.")
@stage
def eval_cmd(gold, pred, report, per_label):
    """Score a prediction file against gold paragraphs (matched line by line)."""
    gold_pars = _load_paragraphs(gold, "split")
    preds = _load_records(pred, "predictions")
    try:
        scorer = evalkit.evaluate(gold_pars, preds)
    except ValueError as exc:
        raise MissingArtifactError(str(exc), stage="predictions") from exc
    rep = scorer.report()
    write_json(report, rep)
    if per_label:
        lines = ["label\tsupport\ttp\tfp\tfn\tf1"]
        for lab, t in sorted(scorer.labels.items()):
            lines.append(f"{lab}\t{scorer.label_support[lab]}\t{t.tp}\t{t.fp}\t{t.fn}\t{t.prf()[2]:.6f}")
        Path(per_label).write_text("\n".join(lines) + "\n", encoding="utf-8")
    click.echo(f"label macro-F1 {rep['label_macro_f1']:.4f}, exact match {rep['entity_exact_match']:.2%}")


@main.command("treemap")
@click.option("--taxonomy", "tax_path", required=True, type=click.Path(dir_okay=False))
@click.option("--data", required=True, type=click.Path(dir_okay=False))
@click.option("--top-k", type=click.IntRange(min=0), default=10000)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@stage
def treemap_cmd(tax_path, data, top_k, out):
    """Export the most frequent tags and their ancestors as a nested tree."""
    tax = taxonomy.taxonomy_from_records(_load_records(tax_path, "taxonomy"))
    freq = taxonomy.label_frequencies(_load_paragraphs(data, "extract"))
    write_json(out, taxonomy.treemap_export(tax, freq, top_k))
    click.echo(f"wrote treemap to {out}")


if __name__ == "__main__":  # pragma: no cover
    main()
