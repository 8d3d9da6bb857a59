"""Command line entry points, one group per pipeline stage plus the orchestrator."""

from __future__ import annotations

import json
from pathlib import Path

import click

from . import jsonl
from .audit import AuditStore, AuditTask, stratified_sample
from .audit_service import ManualClock, make_server
from .benchreport import join_predictions, score_breakdown, weighted_combine
from .clients import StubGenerator, make_judge
from .dedup import DedupParams, find_duplicates
from .ledger import CatalogEntry, partition_trainable
from .lexicons import load_lexicons
from .normalize import RawPage, normalize_pages, segment_and_tag, strip_boilerplate
from .ocrqa import RouteThresholds, page_quality, route_page
from .pipeline import STAGES, PipelineConfig, run_pipeline
from .taxonomy import assign_domain, distribution_report, load_taxonomy


@click.group()
def main():
    """Corpus curation pipeline: scanned-book OCR to instruction data."""


# -- ledger ----------------------------------------------------------------


@main.group()
def ledger():
    """License ledger operations."""


@ledger.command("partition")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out-trainable", required=True, type=click.Path())
@click.option("--out-shadow", required=True, type=click.Path())
def ledger_partition(in_path, out_trainable, out_shadow):
    """Split a catalogue into trainable and shadow entries."""
    entries = [CatalogEntry.from_record(r) for r in jsonl.read_jsonl(in_path)]
    trainable, shadow = partition_trainable(entries)
    jsonl.write_jsonl(out_trainable, (e.to_record() for e in trainable))
    jsonl.write_jsonl(out_shadow, (e.to_record() for e in shadow))
    click.echo(f"trainable: {len(trainable)}  shadow: {len(shadow)}")


# -- normalize ---------------------------------------------------------------


def _read_pages_dir(pages_dir: str) -> dict[str, list[RawPage]]:
    by_entry: dict[str, list[RawPage]] = {}
    for path in sorted(Path(pages_dir).glob("*.jsonl")):
        for rec in jsonl.read_jsonl(path):
            page = RawPage.from_record(rec)
            by_entry.setdefault(page.entry_id, []).append(page)
    return by_entry


@main.group()
def normalize():
    """Post-OCR normalization and passage segmentation."""


@normalize.command("run")
@click.option("--in", "in_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--lexicons", "lexicons_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--aggressive", is_flag=True, help="Apply the aggressive repair table too.")
def normalize_run(in_dir, out_path, lexicons_dir, aggressive):
    """Normalize per-page OCR records and emit tagged passages."""
    lexicons = load_lexicons(lexicons_dir)
    passages = []
    for entry_id, pages in sorted(_read_pages_dir(in_dir).items()):
        pages = normalize_pages(pages, aggressive=aggressive, lexicons=lexicons)
        pages = strip_boilerplate(pages)
        passages.extend(segment_and_tag(pages, lexicons))
    jsonl.write_jsonl(out_path, (p.to_record() for p in passages))
    click.echo(f"passages: {len(passages)}")


# -- ocrqa -------------------------------------------------------------------


@main.group()
def ocrqa():
    """Page quality measurement and routing."""


@ocrqa.command("run")
@click.option("--in", "in_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--thresholds", "thresholds_path", type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--seed", default=0, show_default=True)
@click.option("--sample-rate", default=1.0, show_default=True)
def ocrqa_run(in_dir, thresholds_path, out_path, seed, sample_rate):
    """Quality report keyed by page, with routes."""
    cfg = {}
    if thresholds_path:
        cfg = json.loads(Path(thresholds_path).read_text(encoding="utf-8"))
    thresholds = RouteThresholds.from_mapping(cfg)
    records = []
    for entry_id, pages in sorted(_read_pages_dir(in_dir).items()):
        for page in sorted(pages, key=lambda p: p.page_no):
            if not page.lines:
                continue
            quality = page_quality(page, sample_rate=sample_rate, seed=seed)
            route = route_page(quality, thresholds)
            records.append({**quality.to_record(), "route": route.label})
    jsonl.write_jsonl(out_path, records)
    counts = {}
    for r in records:
        counts[r["route"]] = counts.get(r["route"], 0) + 1
    click.echo(f"pages: {len(records)}  routes: {counts}")


# -- dedup -------------------------------------------------------------------


@main.group()
def dedup():
    """Near-duplicate page detection."""


@dedup.command("run")
@click.option("--pages", "pages_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--params", "params_path", type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def dedup_run(pages_dir, params_path, out_path):
    """Cluster near-duplicate pages into a duplicate report."""
    raw = {}
    if params_path:
        raw = json.loads(Path(params_path).read_text(encoding="utf-8"))
    params = DedupParams.from_mapping(raw)
    pages = []
    for entry_id, entry_pages in sorted(_read_pages_dir(pages_dir).items()):
        for page in entry_pages:
            pages.append((page.page_ref, page.text))
    clusters = find_duplicates(pages, params)
    jsonl.write_jsonl(out_path, (c.to_record() for c in clusters))
    dup_clusters = sum(1 for c in clusters if len(c.members) > 1)
    click.echo(f"pages: {len(pages)}  clusters: {len(clusters)}  with duplicates: {dup_clusters}")


# -- taxonomy ----------------------------------------------------------------


@main.group()
def taxonomy():
    """Domain tagging and distribution reporting."""


@taxonomy.command("tag")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--taxonomy", "taxonomy_path", type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def taxonomy_tag(in_path, taxonomy_path, out_path):
    """Tag passages with domains from the taxonomy keyword lexicons."""
    from .normalize import Passage

    tax = load_taxonomy(taxonomy_path)
    records = []
    for rec in jsonl.read_jsonl(in_path):
        p = Passage.from_record(rec)
        records.append({**rec, "domain": assign_domain(p, tax)})
    jsonl.write_jsonl(out_path, records)
    click.echo(f"tagged: {len(records)}")


@taxonomy.command("report")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", type=click.Path())
def taxonomy_report(in_path, out_path):
    """Distribution report over tagged passages (text to stdout, JSON to --out)."""
    records = list(jsonl.read_jsonl(in_path))
    report = distribution_report(
        records, domain_of=lambda r: r.get("domain", "Unassigned"), lang_of=lambda r: r["lang"]
    )
    if out_path:
        jsonl.write_text(out_path, json.dumps(report.to_record(), indent=2, ensure_ascii=False) + "\n")
    click.echo(report.to_text(), nl=False)


# -- validate ----------------------------------------------------------------


@main.group()
def validate():
    """Candidate validation: rules, anchoring, routing, adjudication."""


@validate.command("run")
@click.option("--items", "items_path", type=click.Path(exists=True), help="Pre-generated candidate items (QaItem JSONL). Omit to generate with the stub.")
@click.option("--passages", "passages_path", required=True, type=click.Path(exists=True))
@click.option("--rules", "rules_path", type=click.Path(exists=True))
@click.option("--judge", "judge_spec", default="stub", show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--policy-version", default="v1", show_default=True)
def validate_run(items_path, passages_path, rules_path, judge_spec, out_path, policy_version):
    """Validate items against their source passages; write the decision log."""
    from .normalize import Passage
    from .validate import (
        ALL_QA_TYPES,
        QaItem,
        RouteThresholds as CoverageThresholds,
        ValidationRules,
        adjudicate,
        anchor_evidence,
        build_generation_request,
        parse_candidates,
        route_item,
        validate_item,
    )

    rules_cfg = {}
    if rules_path:
        rules_cfg = json.loads(Path(rules_path).read_text(encoding="utf-8"))
    rules = ValidationRules.from_config(rules_cfg)
    thresholds = CoverageThresholds(
        accept_cov=float(rules_cfg.get("accept_cov", 0.7)),
        escalate_cov=float(rules_cfg.get("escalate_cov", 0.4)),
    )
    judge = make_judge(judge_spec)

    passages = {}
    domains = {}
    for rec in jsonl.read_jsonl(passages_path):
        passages[rec["passage_id"]] = Passage.from_record(rec)
        domains[rec["passage_id"]] = rec.get("domain", "Unassigned")

    items = []
    if items_path:
        items = [QaItem.from_record(r) for r in jsonl.read_jsonl(items_path)]
    else:
        generator = StubGenerator()
        for passage_id in sorted(passages):
            passage = passages[passage_id]
            for qa_type in ALL_QA_TYPES:
                request = build_generation_request(
                    passage, qa_type, policy_version, domain_id=domains[passage_id]
                )
                items.extend(parse_candidates(generator.generate(request), passage))

    results = []
    for item in sorted(items, key=lambda i: i.item_id):
        passage = passages[item.source]
        rule_results = validate_item(item, rules)
        overlap, coverage = anchor_evidence(item, passage)
        route = route_item(rule_results, coverage, thresholds)
        results.append((item, rule_results, overlap, coverage, route))

    escalated = [item for item, *_, route in results if route.status == "escalate"]
    final = dict(adjudicate(escalated, judge, passages))

    records = []
    for item, rule_results, overlap, coverage, route in results:
        decision = final.get(item.item_id, route)
        records.append(
            {
                "item_id": item.item_id,
                "qa_type": item.qa_type.value,
                "language": item.language,
                "domain": item.domain_id,
                "source": item.source,
                "rules": [r.to_record() for r in rule_results],
                "overlap": round(overlap, 6),
                "coverage": round(coverage, 6),
                "route": decision.status,
                "reason": decision.reason,
                "policy_version": policy_version,
            }
        )
    jsonl.write_jsonl(out_path, records)
    counts = {}
    for r in records:
        counts[r["route"]] = counts.get(r["route"], 0) + 1
    click.echo(f"items: {len(records)}  routes: {counts}")


# -- audit -------------------------------------------------------------------


@main.group()
def audit():
    """Practitioner audit sampling and review service."""


@audit.command("sample")
@click.option("--items", "items_path", required=True, type=click.Path(exists=True))
@click.option("--spec", "spec_path", type=click.Path(exists=True))
@click.option("--n", "per_stratum_n", required=True, type=int)
@click.option("--seed", required=True, type=int)
@click.option("--out", "out_path", required=True, type=click.Path())
def audit_sample(items_path, spec_path, per_stratum_n, seed, out_path):
    """Stratified sample of items into audit tasks."""
    keys = ["route", "conf_band", "risk"]
    if spec_path:
        spec = json.loads(Path(spec_path).read_text(encoding="utf-8"))
        keys = list(spec.get("keys", keys))
    items = list(jsonl.read_jsonl(items_path))
    tasks, shortfalls = stratified_sample(items, keys, per_stratum_n, seed)
    jsonl.write_jsonl(out_path, (t.to_record() for t in tasks))
    click.echo(f"tasks: {len(tasks)}  shortfalls: {shortfalls or 'none'}")


@audit.command("serve")
@click.option("--state", "state_dir", required=True, type=click.Path())
@click.option("--port", required=True, type=int)
@click.option("--tasks", "tasks_path", type=click.Path(exists=True), help="Seed tasks into the state if not already present.")
@click.option("--lease-seconds", default=1800.0, show_default=True)
@click.option("--required-verdicts", default=2, show_default=True)
@click.option("--test-clock", is_flag=True, help="Manual clock starting at 0, advanced via POST /audit/_clock/advance.")
def audit_serve(state_dir, port, tasks_path, lease_seconds, required_verdicts, test_clock):
    """Serve the audit HTTP API over an event-logged state directory."""
    clock = ManualClock() if test_clock else None
    store = AuditStore(
        state_dir,
        clock=clock if clock else __import__("time").time,
        lease_seconds=lease_seconds,
        required_verdicts=required_verdicts,
    )
    if tasks_path:
        added = store.add_tasks(AuditTask.from_record(r) for r in jsonl.read_jsonl(tasks_path))
        click.echo(f"seeded {added} tasks")
    server = make_server(store, port=port, manual_clock=clock)
    click.echo(f"audit API listening on http://127.0.0.1:{server.server_address[1]}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()


# -- export ------------------------------------------------------------------


@main.group()
def export():
    """Dialogue rendering and dataset statistics."""


@export.command("run")
@click.option("--items", "items_path", required=True, type=click.Path(exists=True))
@click.option("--decisions", "decisions_path", type=click.Path(exists=True), help="Decision log; only accepted items render. Omit to render everything.")
@click.option("--passages", "passages_path", type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--stats", "stats_path", required=True, type=click.Path())
@click.option("--system-prompt", default=None)
def export_run(items_path, decisions_path, passages_path, out_path, stats_path, system_prompt):
    """Render accepted items into the token-templated dialogue format."""
    from .export import dataset_stats, file_header, render_dialogue
    from .errors import MarkerCollision
    from .validate import QaItem

    accepted = None
    if decisions_path:
        accepted = {
            r["item_id"] for r in jsonl.read_jsonl(decisions_path) if r["route"] == "accept"
        }
    passage_text = {}
    if passages_path:
        passage_text = {r["passage_id"]: r["text"] for r in jsonl.read_jsonl(passages_path)}

    records = []
    marker_rejects = []
    for rec in jsonl.read_jsonl(items_path):
        if accepted is not None and rec["item_id"] not in accepted:
            continue
        item = QaItem.from_record(rec)
        try:
            dialogue = render_dialogue(
                item,
                system_prompt=system_prompt,
                passage_text=passage_text.get(item.source),
            )
        except MarkerCollision:
            marker_rejects.append(item.item_id)
            continue
        records.append(dialogue.to_record())
    records.sort(key=lambda r: r["item_id"])
    jsonl.write_jsonl(out_path, records, header=file_header(system_prompt))
    stats = dataset_stats(records).to_record()
    stats["marker_rejects"] = sorted(marker_rejects)
    jsonl.write_text(stats_path, json.dumps(stats, indent=2, ensure_ascii=False) + "\n")
    click.echo(f"rendered: {len(records)}  marker rejects: {len(marker_rejects)}")


# -- bench -------------------------------------------------------------------


@main.group()
def bench():
    """Benchmark scoring and accuracy breakdowns."""


@bench.command("report")
@click.option("--gold", "gold_path", required=True, type=click.Path(exists=True))
@click.option("--pred", "pred_path", required=True, type=click.Path(exists=True))
@click.option("--facet", default="overall", show_default=True,
              type=click.Choice(["overall", "language", "difficulty", "qtype"]))
@click.option("--out", "out_path", type=click.Path(), help="Also write machine-readable rows.")
def bench_report(gold_path, pred_path, facet, out_path):
    """Accuracy breakdown of a prediction file against the answer key."""
    records, missing = join_predictions(jsonl.read_jsonl(gold_path), jsonl.read_jsonl(pred_path))
    table = score_breakdown(records, facet)
    click.echo(table.to_text(), nl=False)
    if missing:
        click.echo(f"unmatched questions (no prediction): {len(missing)}", err=True)
    if out_path:
        jsonl.write_jsonl(out_path, table.to_records())


@bench.command("combine")
@click.argument("groups", nargs=-1, required=True)
def bench_combine(groups):
    """Weighted combination of ACC:COUNT groups, e.g. 41.12:9348 38.04:5615."""
    parsed = []
    for g in groups:
        acc, count = g.split(":")
        parsed.append((float(acc), int(count)))
    click.echo(f"{weighted_combine(parsed):.2f}")


# -- pipeline ----------------------------------------------------------------


@main.group()
def pipeline():
    """Full-pipeline orchestration."""


@pipeline.command("run")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--from", "from_stage", default=None, help=f"Resume from stage ({', '.join(STAGES)}).")
@click.option("--dry-run", is_flag=True)
@click.option("--jobs", default=1, show_default=True, type=int)
@click.option("--seed", default=None, type=int, help="Override the config seed.")
def pipeline_run(config_path, from_stage, dry_run, jobs, seed):
    """Run all stages in order with resumable per-stage manifests."""
    cfg = PipelineConfig.load(config_path)
    if seed is not None:
        cfg.seed = seed
    manifests = run_pipeline(
        cfg, from_stage=from_stage, dry_run=dry_run, jobs=jobs, log=click.echo
    )
    if manifests:
        click.echo(f"done: {len(manifests)} stages, outputs in {cfg.out_dir}")


if __name__ == "__main__":
    main()
