"""Stage orchestration: config, digests, resumable manifests, deterministic runs.

Stage order: ledger, normalize, ocrqa, dedup, taxonomy, validate,
audit_sample, export. Every stage reads files written by earlier stages and
writes its own outputs atomically, then records a manifest with content
digests of inputs, config, and outputs. A rerun skips stages whose digests
all match; --from forces re-execution from a stage onward. With the stub
judge, two runs with the same config and seed produce byte-identical data
outputs regardless of the --jobs setting.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from . import jsonl
from .audit import stratified_sample
from .clients import StubGenerator, make_judge
from .dedup import DedupParams, find_duplicates
from .errors import ConfigError, MarkerCollision, StageFailure
from .export import dataset_stats, file_header, render_dialogue, split_of
from .ledger import CatalogEntry, link_editions, partition_trainable
from .lexicons import load_lexicons
from .normalize import Passage, RawPage, normalize_pages, segment_and_tag, strip_boilerplate
from .ocrqa import Route, RouteThresholds, page_quality, route_page
from .taxonomy import QuotaConfig, assign_domain, distribution_report, enforce_quotas, load_taxonomy
from .validate import (
    ALL_QA_TYPES,
    QaItem,
    QaType,
    RouteThresholds as CoverageThresholds,
    ValidationReport,
    ValidationRules,
    adjudicate,
    anchor_evidence,
    anchor_turns,
    build_generation_request,
    parse_candidates,
    route_item,
    validate_item,
)

STAGES = ("ledger", "normalize", "ocrqa", "dedup", "taxonomy", "validate", "audit_sample", "export")

JUDGE_ENDPOINT_ENV = "SAMHITA_JUDGE"


@dataclass
class PipelineConfig:
    catalog: Path
    pages_dir: Path
    out_dir: Path
    seed: int = 0
    lexicons_dir: str | None = None
    taxonomy_path: str | None = None
    dedup: dict = field(default_factory=dict)
    ocrqa: dict = field(default_factory=dict)
    quotas: dict = field(default_factory=dict)
    validate: dict = field(default_factory=dict)
    audit: dict = field(default_factory=dict)
    export: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot load config {path}: {exc}") from exc
        base = path.parent

        def respath(value: str) -> Path:
            p = Path(value)
            return p if p.is_absolute() else (base / p)

        try:
            cfg = cls(
                catalog=respath(raw["catalog"]),
                pages_dir=respath(raw["pages_dir"]),
                out_dir=respath(raw["out_dir"]),
                seed=int(raw.get("seed", 0)),
                lexicons_dir=str(respath(raw["lexicons_dir"])) if raw.get("lexicons_dir") else None,
                taxonomy_path=str(respath(raw["taxonomy"])) if raw.get("taxonomy") else None,
                dedup=dict(raw.get("dedup", {})),
                ocrqa=dict(raw.get("ocrqa", {})),
                quotas=dict(raw.get("quotas", {})),
                validate=dict(raw.get("validate", {})),
                audit=dict(raw.get("audit", {})),
                export=dict(raw.get("export", {})),
            )
        except KeyError as exc:
            raise ConfigError(f"config misses required field {exc}") from exc
        return cfg

    def check(self) -> None:
        if not self.catalog.exists():
            raise ConfigError(f"catalog file not found: {self.catalog}")
        if not self.pages_dir.is_dir():
            raise ConfigError(f"pages directory not found: {self.pages_dir}")
        # threshold preconditions surface here, before any stage runs
        RouteThresholds.from_mapping(self.ocrqa)
        params = DedupParams.from_mapping(self.dedup)
        if params.bands * params.rows != params.k:
            raise ConfigError(f"dedup banding invalid: {params.bands}*{params.rows} != {params.k}")
        v = self.validate
        accept_cov = float(v.get("accept_cov", 0.7))
        escalate_cov = float(v.get("escalate_cov", 0.4))
        if accept_cov <= escalate_cov:
            raise ConfigError("validate.accept_cov must exceed validate.escalate_cov")

    def stage_config(self, stage: str) -> dict:
        common = {"seed": self.seed, "lexicons_dir": self.lexicons_dir}
        per_stage = {
            "ledger": {},
            "normalize": {},
            "ocrqa": self.ocrqa,
            "dedup": self.dedup,
            "taxonomy": {"quotas": self.quotas, "taxonomy_path": self.taxonomy_path},
            "validate": self.validate,
            "audit_sample": self.audit,
            "export": self.export,
        }[stage]
        return {**common, **per_stage}


@dataclass(frozen=True)
class StageManifest:
    stage: str
    input_digest: str
    config_digest: str
    output_digest: str
    outputs: tuple[str, ...]
    started_at: float
    finished_at: float

    def to_record(self) -> dict:
        return {
            "stage": self.stage,
            "input_digest": self.input_digest,
            "config_digest": self.config_digest,
            "output_digest": self.output_digest,
            "outputs": list(self.outputs),
            "started_at": self.started_at,
            "finished_at": self.finished_at,
        }


def _digest_files(paths: Sequence[Path]) -> str:
    h = hashlib.sha256()
    for p in sorted(paths, key=str):
        h.update(str(p.name).encode("utf-8"))
        h.update(p.read_bytes() if p.exists() else b"<missing>")
    return h.hexdigest()


def _digest_config(cfg: dict) -> str:
    return hashlib.sha256(
        json.dumps(cfg, sort_keys=True, ensure_ascii=False).encode("utf-8")
    ).hexdigest()


def pmap(fn: Callable, items: Sequence, jobs: int) -> list:
    """Order-preserving parallel map; identical output for any jobs value."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


# --------------------------------------------------------------------------
# stage implementations


class _Paths:
    def __init__(self, out_dir: Path):
        self.out = out_dir
        self.trainable = out_dir / "trainable.jsonl"
        self.shadow = out_dir / "shadow.jsonl"
        self.pages_normalized = out_dir / "pages_normalized.jsonl"
        self.quality = out_dir / "quality.jsonl"
        self.pages_kept = out_dir / "pages_kept.jsonl"
        self.clusters = out_dir / "clusters.jsonl"
        self.lineage = out_dir / "lineage.jsonl"
        self.pages_unique = out_dir / "pages_unique.jsonl"
        self.passages = out_dir / "passages.jsonl"
        self.selection = out_dir / "selection.jsonl"
        self.distribution = out_dir / "distribution.json"
        self.distribution_txt = out_dir / "distribution.txt"
        self.skew = out_dir / "skew.json"
        self.items = out_dir / "items.jsonl"
        self.decisions = out_dir / "decisions.jsonl"
        self.audit_input = out_dir / "audit_input.jsonl"
        self.audit_tasks = out_dir / "audit_tasks.jsonl"
        self.audit_shortfalls = out_dir / "audit_shortfalls.json"
        self.dialogue = out_dir / "dialogue.jsonl"
        self.stats = out_dir / "stats.json"
        self.manifests = out_dir / "manifests"


def _stage_ledger(cfg: PipelineConfig, paths: _Paths, jobs: int) -> list[Path]:
    entries = [CatalogEntry.from_record(rec) for rec in jsonl.read_jsonl(cfg.catalog)]
    trainable, shadow = partition_trainable(entries)
    jsonl.write_jsonl(paths.trainable, (e.to_record() for e in trainable))
    jsonl.write_jsonl(paths.shadow, (e.to_record() for e in shadow))
    return [paths.trainable, paths.shadow]


def _load_pages_for_entry(cfg: PipelineConfig, entry: CatalogEntry) -> list[RawPage]:
    if not entry.pages_path:
        return []
    path = cfg.pages_dir / entry.pages_path
    return [RawPage.from_record(rec) for rec in jsonl.read_jsonl(path)]


def _stage_normalize(cfg: PipelineConfig, paths: _Paths, jobs: int) -> list[Path]:
    lexicons = load_lexicons(cfg.lexicons_dir)
    trainable = [CatalogEntry.from_record(r) for r in jsonl.read_jsonl(paths.trainable)]

    def process(entry: CatalogEntry) -> list[RawPage]:
        pages = _load_pages_for_entry(cfg, entry)
        pages = normalize_pages(pages, lexicons=lexicons)
        return strip_boilerplate(pages)

    all_pages: list[RawPage] = []
    for pages in pmap(process, trainable, jobs):
        all_pages.extend(pages)
    all_pages.sort(key=lambda p: p.page_ref)
    jsonl.write_jsonl(paths.pages_normalized, (p.to_record() for p in all_pages))
    return [paths.pages_normalized]


def _stage_ocrqa(cfg: PipelineConfig, paths: _Paths, jobs: int) -> list[Path]:
    lexicons = load_lexicons(cfg.lexicons_dir)
    thresholds = RouteThresholds.from_mapping(cfg.ocrqa)
    sample_rate = float(cfg.ocrqa.get("sample_rate", 1.0))
    pages = [RawPage.from_record(r) for r in jsonl.read_jsonl(paths.pages_normalized)]

    def assess(page: RawPage):
        if not any(line.text.strip() for line in page.lines):
            return page, None, Route.EXCLUDE
        quality = page_quality(page, sample_rate=sample_rate, seed=cfg.seed, lexicons=lexicons)
        return page, quality, route_page(quality, thresholds)

    kept: list[RawPage] = []
    quality_records = []
    for page, quality, route in pmap(assess, pages, jobs):
        if quality is not None:
            quality_records.append({**quality.to_record(), "route": route.label})
        if route is Route.ACCEPT:
            kept.append(page)
        elif route is Route.STRICT_CLEAN:
            # stricter cleaning: rerun normalization with the aggressive repair set
            (cleaned,) = normalize_pages([page], aggressive=True, lexicons=lexicons)
            kept.append(cleaned)
    kept.sort(key=lambda p: p.page_ref)
    jsonl.write_jsonl(paths.quality, quality_records)
    jsonl.write_jsonl(paths.pages_kept, (p.to_record() for p in kept))
    return [paths.quality, paths.pages_kept]


def _stage_dedup(cfg: PipelineConfig, paths: _Paths, jobs: int) -> list[Path]:
    params = DedupParams.from_mapping({**cfg.dedup, "seed": cfg.dedup.get("seed", cfg.seed)})
    pages = [RawPage.from_record(r) for r in jsonl.read_jsonl(paths.pages_kept)]
    clusters = find_duplicates([(p.page_ref, p.text) for p in pages], params)
    jsonl.write_jsonl(paths.clusters, (c.to_record() for c in clusters))

    entries = [CatalogEntry.from_record(r) for r in jsonl.read_jsonl(paths.trainable)]
    link_threshold = float(cfg.dedup.get("link_threshold", 0.5))
    edges = link_editions(entries, clusters, link_threshold)
    jsonl.write_jsonl(paths.lineage, (e.to_record() for e in edges))

    representatives = {c.representative for c in clusters}
    unique = [p for p in pages if p.page_ref in representatives]
    unique.sort(key=lambda p: p.page_ref)
    jsonl.write_jsonl(paths.pages_unique, (p.to_record() for p in unique))
    return [paths.clusters, paths.lineage, paths.pages_unique]


def _stage_taxonomy(cfg: PipelineConfig, paths: _Paths, jobs: int) -> list[Path]:
    lexicons = load_lexicons(cfg.lexicons_dir)
    taxonomy = load_taxonomy(cfg.taxonomy_path)
    pages = [RawPage.from_record(r) for r in jsonl.read_jsonl(paths.pages_unique)]
    by_entry: dict[str, list[RawPage]] = {}
    for page in pages:
        by_entry.setdefault(page.entry_id, []).append(page)

    def process(entry_id: str) -> list[Passage]:
        return segment_and_tag(sorted(by_entry[entry_id], key=lambda p: p.page_no), lexicons)

    passages: list[Passage] = []
    for batch in pmap(process, sorted(by_entry), jobs):
        passages.extend(batch)

    tagged = [
        {**p.to_record(), "domain": assign_domain(p, taxonomy)}
        for p in passages
    ]
    tagged.sort(key=lambda r: r["passage_id"])
    jsonl.write_jsonl(paths.passages, tagged)

    quota_cfg = QuotaConfig(maxima=dict(cfg.quotas.get("maxima", {})), minima=dict(cfg.quotas.get("minima", {})))
    selected, skew = enforce_quotas(
        tagged, quota_cfg, cfg.seed, domain_of=lambda r: r["domain"], sort_key=lambda r: r["passage_id"]
    )
    jsonl.write_jsonl(paths.selection, selected)
    jsonl.write_text(paths.skew, json.dumps(skew, indent=2, ensure_ascii=False, sort_keys=True) + "\n")

    report = distribution_report(
        tagged, domain_of=lambda r: r["domain"], lang_of=lambda r: r["lang"]
    )
    jsonl.write_text(
        paths.distribution, json.dumps(report.to_record(), indent=2, ensure_ascii=False) + "\n"
    )
    jsonl.write_text(paths.distribution_txt, report.to_text())
    return [paths.passages, paths.selection, paths.skew, paths.distribution, paths.distribution_txt]


def _conf_band(value: float, edges: Sequence[float]) -> str:
    lo, hi = edges
    if value < lo:
        return "low"
    if value < hi:
        return "mid"
    return "high"


def _stage_validate(cfg: PipelineConfig, paths: _Paths, jobs: int) -> list[Path]:
    lexicons = load_lexicons(cfg.lexicons_dir)
    vcfg = cfg.validate
    qa_types = tuple(QaType(t) for t in vcfg.get("qa_types", [t.value for t in ALL_QA_TYPES]))
    policy_version = str(vcfg.get("policy_version", "v1"))
    rules = ValidationRules.from_config(vcfg.get("rules"), cfg.lexicons_dir)
    thresholds = CoverageThresholds(
        accept_cov=float(vcfg.get("accept_cov", 0.7)),
        escalate_cov=float(vcfg.get("escalate_cov", 0.4)),
    )
    judge_spec = os.environ.get(JUDGE_ENDPOINT_ENV) or vcfg.get("judge", "stub")
    judge = make_judge(judge_spec)
    generator = StubGenerator(noise=bool(vcfg.get("stub_noise", True)))
    max_retries = int(vcfg.get("max_retries", 3))

    selection = list(jsonl.read_jsonl(paths.selection))
    passages = {rec["passage_id"]: Passage.from_record(rec) for rec in selection}
    domains = {rec["passage_id"]: rec["domain"] for rec in selection}

    def process(rec: dict) -> list[tuple[QaItem, ValidationReport]]:
        passage = passages[rec["passage_id"]]
        out = []
        for qa_type in qa_types:
            request = build_generation_request(
                passage, qa_type, policy_version, domain_id=rec["domain"]
            )
            raw = generator.generate(request)
            for item in parse_candidates(raw, passage):
                rule_results = validate_item(item, rules)
                overlap, coverage = anchor_evidence(item, passage, lexicons)
                route = route_item(rule_results, coverage, thresholds)
                out.append(
                    (
                        item,
                        ValidationReport(
                            item_id=item.item_id,
                            rule_results=rule_results,
                            overlap=overlap,
                            coverage=coverage,
                            route=route,
                            thresholds=thresholds,
                            policy_version=policy_version,
                        ),
                    )
                )
        return out

    results: list[tuple[QaItem, ValidationReport]] = []
    for batch in pmap(process, selection, jobs):
        results.extend(batch)
    results.sort(key=lambda pair: pair[0].item_id)

    escalated = [item for item, report in results if report.route.status == "escalate"]
    final_routes = {
        item_id: decision
        for item_id, decision in adjudicate(
            escalated, judge, passages, max_retries=max_retries
        )
    }

    items_records = []
    decision_records = []
    for item, report in results:
        final = final_routes.get(item.item_id, report.route)
        adjudicated = item.item_id in final_routes
        items_records.append(item.to_record())
        record = {
            "item_id": item.item_id,
            "qa_type": item.qa_type.value,
            "language": item.language,
            "domain": item.domain_id,
            "source": item.source,
            **report.to_record(),
            "route": final.status,
            "reason": final.reason,
            "initial_route": report.route.status,
            "adjudicated": adjudicated,
        }
        if item.qa_type is QaType.MULTI_TURN:
            record["turn_coverage"] = [
                round(c, 6) for c in anchor_turns(item, passages[item.source], lexicons)
            ]
        decision_records.append(record)
    jsonl.write_jsonl(paths.items, items_records)
    jsonl.write_jsonl(paths.decisions, decision_records)
    return [paths.items, paths.decisions]


def _stage_audit_sample(cfg: PipelineConfig, paths: _Paths, jobs: int) -> list[Path]:
    acfg = cfg.audit
    keys = list(acfg.get("keys", ["route", "conf_band", "risk"]))
    per_stratum_n = int(acfg.get("per_stratum_n", 2))
    high_risk = set(acfg.get("high_risk_domains", ["ShalyaTantra", "ShalakyaTantra"]))
    band_edges = list(acfg.get("conf_bands", [0.7, 0.85]))

    quality = {(r["entry_id"], r["page_no"]): r for r in jsonl.read_jsonl(paths.quality)}
    selection = {r["passage_id"]: r for r in jsonl.read_jsonl(paths.selection)}
    items = {r["item_id"]: r for r in jsonl.read_jsonl(paths.items)}

    audit_input = []
    for decision in jsonl.read_jsonl(paths.decisions):
        item = items[decision["item_id"]]
        passage_rec = selection.get(decision["source"])
        if passage_rec is None:
            continue
        span_pages = range(passage_rec["page_span"][0], passage_rec["page_span"][1] + 1)
        confs = [
            quality[(passage_rec["entry_id"], page_no)]["mean_conf"]
            for page_no in span_pages
            if (passage_rec["entry_id"], page_no) in quality
        ]
        mean_conf = sum(confs) / len(confs) if confs else 1.0
        question = next((t["text"] for t in item["turns"] if t["role"] == "user"), "")
        audit_input.append(
            {
                "item_id": decision["item_id"],
                "route": decision["route"],
                "conf_band": _conf_band(mean_conf, band_edges),
                "risk": "high" if decision["domain"] in high_risk else "standard",
                "domain": decision["domain"],
                "question": question,
                "answer": item["answer_final"],
                "passage": passage_rec["text"],
                "spans": item["support_spans"],
            }
        )
    audit_input.sort(key=lambda r: r["item_id"])
    jsonl.write_jsonl(paths.audit_input, audit_input)

    tasks, shortfalls = stratified_sample(audit_input, keys, per_stratum_n, cfg.seed)
    jsonl.write_jsonl(paths.audit_tasks, (t.to_record() for t in tasks))
    jsonl.write_text(
        paths.audit_shortfalls,
        json.dumps({"shortfalls": shortfalls}, indent=2, sort_keys=True) + "\n",
    )
    return [paths.audit_input, paths.audit_tasks, paths.audit_shortfalls]


def _stage_export(cfg: PipelineConfig, paths: _Paths, jobs: int) -> list[Path]:
    system_prompt = cfg.export.get("system_prompt") or None
    selection = {r["passage_id"]: r for r in jsonl.read_jsonl(paths.selection)}
    decisions = {r["item_id"]: r for r in jsonl.read_jsonl(paths.decisions)}

    records = []
    marker_rejects = []
    for rec in jsonl.read_jsonl(paths.items):
        decision = decisions[rec["item_id"]]
        if decision["route"] != "accept":
            continue
        item = QaItem.from_record(rec)
        passage_rec = selection.get(item.source)
        try:
            dialogue = render_dialogue(
                item,
                system_prompt=system_prompt,
                passage_text=passage_rec["text"] if passage_rec else None,
            )
        except MarkerCollision:
            marker_rejects.append(item.item_id)
            continue
        records.append(dialogue.to_record())
    records.sort(key=lambda r: r["item_id"])

    split_seed = cfg.export.get("split_seed")
    if split_seed is not None:
        val_fraction = float(cfg.export.get("val_fraction", 0.05))
        for rec in records:
            rec["split"] = split_of(rec["item_id"], int(split_seed), val_fraction)

    jsonl.write_jsonl(paths.dialogue, records, header=file_header(system_prompt))
    stats = dataset_stats(records).to_record()
    stats["marker_rejects"] = sorted(marker_rejects)
    jsonl.write_text(paths.stats, json.dumps(stats, indent=2, ensure_ascii=False) + "\n")
    return [paths.dialogue, paths.stats]


_STAGE_FNS: dict[str, Callable] = {
    "ledger": _stage_ledger,
    "normalize": _stage_normalize,
    "ocrqa": _stage_ocrqa,
    "dedup": _stage_dedup,
    "taxonomy": _stage_taxonomy,
    "validate": _stage_validate,
    "audit_sample": _stage_audit_sample,
    "export": _stage_export,
}

_STAGE_INPUTS: dict[str, Callable[[PipelineConfig, _Paths], list[Path]]] = {
    "ledger": lambda cfg, p: [cfg.catalog],
    "normalize": lambda cfg, p: [p.trainable],
    "ocrqa": lambda cfg, p: [p.pages_normalized],
    "dedup": lambda cfg, p: [p.pages_kept, p.trainable],
    "taxonomy": lambda cfg, p: [p.pages_unique],
    "validate": lambda cfg, p: [p.selection],
    "audit_sample": lambda cfg, p: [p.decisions, p.items, p.selection, p.quality],
    "export": lambda cfg, p: [p.items, p.decisions, p.selection],
}


def run_pipeline(
    cfg: PipelineConfig,
    from_stage: str | None = None,
    dry_run: bool = False,
    jobs: int = 1,
    log: Callable[[str], None] = lambda msg: None,
) -> list[StageManifest]:
    """Execute (or resume) the full pipeline; returns the stage manifests."""
    cfg.check()
    if from_stage is not None:
        from_stage = from_stage.replace("-", "_")
        if from_stage not in STAGES:
            raise ConfigError(f"unknown stage {from_stage!r}; stages: {', '.join(STAGES)}")
    if dry_run:
        log("config valid; stages: " + " -> ".join(STAGES))
        return []

    paths = _Paths(cfg.out_dir)
    paths.out.mkdir(parents=True, exist_ok=True)
    paths.manifests.mkdir(parents=True, exist_ok=True)

    manifests: list[StageManifest] = []
    force = False
    for stage in STAGES:
        if from_stage is not None and stage == from_stage:
            force = True
        manifest = _run_stage(cfg, paths, stage, jobs, force=force, log=log)
        manifests.append(manifest)
    return manifests


def _run_stage(
    cfg: PipelineConfig,
    paths: _Paths,
    stage: str,
    jobs: int,
    force: bool,
    log: Callable[[str], None],
) -> StageManifest:
    manifest_path = paths.manifests / f"{stage}.json"
    inputs = _STAGE_INPUTS[stage](cfg, paths)
    input_digest = _digest_files(inputs)
    config_digest = _digest_config(cfg.stage_config(stage))

    if not force and manifest_path.exists():
        prior = json.loads(manifest_path.read_text(encoding="utf-8"))
        outputs = [Path(o) for o in prior.get("outputs", [])]
        if (
            prior.get("input_digest") == input_digest
            and prior.get("config_digest") == config_digest
            and outputs
            and all(Path(o).exists() for o in outputs)
            and _digest_files(outputs) == prior.get("output_digest")
        ):
            log(f"{stage}: skipped (digests match)")
            return StageManifest(
                stage=stage,
                input_digest=input_digest,
                config_digest=config_digest,
                output_digest=prior["output_digest"],
                outputs=tuple(prior["outputs"]),
                started_at=prior["started_at"],
                finished_at=prior["finished_at"],
            )

    started = time.time()
    log(f"{stage}: running")
    try:
        outputs = _STAGE_FNS[stage](cfg, paths, jobs)
    except Exception as exc:
        raise StageFailure(stage, exc) from exc
    finished = time.time()
    manifest = StageManifest(
        stage=stage,
        input_digest=input_digest,
        config_digest=config_digest,
        output_digest=_digest_files(outputs),
        outputs=tuple(str(o) for o in outputs),
        started_at=started,
        finished_at=finished,
    )
    jsonl.write_text(
        manifest_path, json.dumps(manifest.to_record(), indent=2, sort_keys=True) + "\n"
    )
    return manifest
