"""Staged validation of generated supervision candidates.

Flow per candidate item: strict schema parse, rule-based filters (length,
banned phrases, symbol consistency), evidence anchoring against the source
passage (token overlap and content-token coverage), threshold routing into
accept / escalate / reject, and judge adjudication for the escalated slice.
A failed hard rule rejects regardless of metrics.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Protocol, Sequence

import regex

from .errors import (
    EmptyPassage,
    InvalidThresholds,
    JudgeTransportError,
    JudgeUnavailable,
    SchemaError,
    SpanNotFound,
    SpanOutOfBounds,
)
from .lexicons import Lexicons, load_banned_phrases, load_lexicons
from .normalize import Passage

# regex, not re: stdlib \w splits Devanagari words at matras
_TOKEN_RE = regex.compile(r"\w+")


class QaType(str, Enum):
    QA_PAIR = "qa_pair"
    OBJECTIVE = "objective"
    MULTI_TURN = "multi_turn"
    CONTEXTUAL = "contextual"


ALL_QA_TYPES = tuple(QaType)


@dataclass(frozen=True)
class Turn:
    role: str  # user | assistant
    text: str


@dataclass(frozen=True)
class QaItem:
    item_id: str
    qa_type: QaType
    language: str
    domain_id: str
    turns: tuple[Turn, ...]
    support_spans: tuple[tuple[int, int], ...]
    source: str  # passage_id
    answer_final: str
    options: tuple[str, ...] | None = None
    gold_index: int | None = None

    def user_turns(self) -> list[Turn]:
        return [t for t in self.turns if t.role == "user"]

    def assistant_turns(self) -> list[Turn]:
        return [t for t in self.turns if t.role == "assistant"]

    def to_record(self) -> dict:
        return {
            "item_id": self.item_id,
            "qa_type": self.qa_type.value,
            "language": self.language,
            "domain_id": self.domain_id,
            "turns": [{"role": t.role, "text": t.text} for t in self.turns],
            "support_spans": [list(s) for s in self.support_spans],
            "source": self.source,
            "answer_final": self.answer_final,
            "options": list(self.options) if self.options is not None else None,
            "gold_index": self.gold_index,
        }

    @classmethod
    def from_record(cls, rec: Mapping) -> "QaItem":
        return cls(
            item_id=rec["item_id"],
            qa_type=QaType(rec["qa_type"]),
            language=rec["language"],
            domain_id=rec["domain_id"],
            turns=tuple(Turn(t["role"], t["text"]) for t in rec["turns"]),
            support_spans=tuple((int(s[0]), int(s[1])) for s in rec["support_spans"]),
            source=rec["source"],
            answer_final=rec["answer_final"],
            options=tuple(rec["options"]) if rec.get("options") is not None else None,
            gold_index=rec.get("gold_index"),
        )


ITEM_FIELDS = frozenset(
    {
        "item_id",
        "qa_type",
        "language",
        "domain_id",
        "turns",
        "support_spans",
        "source",
        "answer_final",
        "options",
        "gold_index",
    }
)


@dataclass(frozen=True)
class GenerationRequest:
    """Contract sent to the (pluggable) generator client."""

    request_id: str
    passage_id: str
    passage_text: str
    language: str
    domain_id: str
    qa_type: QaType
    policy_version: str
    constraints: tuple[str, ...]
    output_schema: dict

    def to_record(self) -> dict:
        return {
            "request_id": self.request_id,
            "passage_id": self.passage_id,
            "passage_text": self.passage_text,
            "language": self.language,
            "domain_id": self.domain_id,
            "qa_type": self.qa_type.value,
            "policy_version": self.policy_version,
            "constraints": list(self.constraints),
            "output_schema": self.output_schema,
        }


_BASE_CONSTRAINTS = (
    "Every answer must be derivable from the passage text alone.",
    "Do not add external knowledge or elaboration beyond the passage.",
    "Do not give prescriptive treatment advice or dosages.",
    "Cite support spans as [start, end) character offsets into the passage.",
)

_OBJECTIVE_OPTION_COUNT = 4


def _output_schema(qa_type: QaType) -> dict:
    schema = {
        "items": [
            {
                "item_id": "string",
                "qa_type": qa_type.value,
                "language": "string",
                "domain_id": "string",
                "turns": [{"role": "user|assistant", "text": "string"}],
                "support_spans": [["int start", "int end"]],
                "source": "passage_id",
                "answer_final": "string",
                "options": None,
                "gold_index": None,
            }
        ]
    }
    if qa_type is QaType.OBJECTIVE:
        schema["items"][0]["options"] = ["string"] * _OBJECTIVE_OPTION_COUNT
        schema["items"][0]["gold_index"] = "int"
    return schema


def build_generation_request(
    p: Passage, qa_type: QaType, policy_version: str = "v1", domain_id: str = ""
) -> GenerationRequest:
    """Deterministic request embedding the passage verbatim plus constraints."""
    if not p.text:
        raise EmptyPassage(p.passage_id)
    constraints = _BASE_CONSTRAINTS
    if qa_type is QaType.OBJECTIVE:
        constraints = constraints + (
            f"Produce exactly {_OBJECTIVE_OPTION_COUNT} options with one gold option.",
        )
    if qa_type is QaType.MULTI_TURN:
        constraints = constraints + ("Produce at least two user turns.",)
    return GenerationRequest(
        request_id=f"{p.passage_id}:{qa_type.value}",
        passage_id=p.passage_id,
        passage_text=p.text,
        language=p.lang,
        domain_id=domain_id,
        qa_type=qa_type,
        policy_version=policy_version,
        constraints=constraints,
        output_schema=_output_schema(qa_type),
    )


def parse_candidates(raw: str, passage: Passage) -> list[QaItem]:
    """Strict parse of a generator response against the item schema.

    Unknown fields, wrong types, bad turn structure, or spans outside the
    passage all raise; nothing is silently coerced.
    """
    try:
        payload = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"response is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict) or "items" not in payload:
        raise SchemaError("response must be an object with an 'items' list")
    items_raw = payload["items"]
    if not isinstance(items_raw, list):
        raise SchemaError("'items' must be a list")

    items = []
    for idx, rec in enumerate(items_raw):
        items.append(_parse_item(rec, idx, passage))
    return items


def _parse_item(rec, idx: int, passage: Passage) -> QaItem:
    if not isinstance(rec, dict):
        raise SchemaError(f"items[{idx}] is not an object")
    unknown = set(rec) - ITEM_FIELDS
    if unknown:
        raise SchemaError(f"items[{idx}] has unknown fields: {sorted(unknown)}")
    missing = {"item_id", "qa_type", "language", "turns", "support_spans", "source", "answer_final"} - set(rec)
    if missing:
        raise SchemaError(f"items[{idx}] misses fields: {sorted(missing)}")
    try:
        qa_type = QaType(rec["qa_type"])
    except ValueError as exc:
        raise SchemaError(f"items[{idx}] has unknown qa_type {rec['qa_type']!r}") from exc

    turns_raw = rec["turns"]
    if not isinstance(turns_raw, list) or not turns_raw:
        raise SchemaError(f"items[{idx}] has no turns")
    turns = []
    for t in turns_raw:
        if not isinstance(t, dict) or set(t) != {"role", "text"}:
            raise SchemaError(f"items[{idx}] has a malformed turn")
        if t["role"] not in ("user", "assistant"):
            raise SchemaError(f"items[{idx}] has turn role {t['role']!r}")
        if not isinstance(t["text"], str):
            raise SchemaError(f"items[{idx}] turn text must be a string")
        turns.append(Turn(t["role"], t["text"]))
    user_count = sum(1 for t in turns if t.role == "user")
    assistant_count = sum(1 for t in turns if t.role == "assistant")
    if user_count < 1 or assistant_count < 1:
        raise SchemaError(f"items[{idx}] needs at least one user and one assistant turn")
    if qa_type is QaType.MULTI_TURN and user_count < 2:
        raise SchemaError(f"items[{idx}] multi_turn needs >= 2 user turns")

    spans = []
    for s in rec["support_spans"]:
        if not isinstance(s, (list, tuple)) or len(s) != 2:
            raise SchemaError(f"items[{idx}] has a malformed span")
        start, end = int(s[0]), int(s[1])
        if start < 0 or end > len(passage.text) or start >= end:
            raise SpanOutOfBounds(
                f"items[{idx}] span [{start},{end}) outside passage of length {len(passage.text)}"
            )
        spans.append((start, end))
    if not spans:
        raise SchemaError(f"items[{idx}] must cite at least one support span")

    options = rec.get("options")
    gold_index = rec.get("gold_index")
    if qa_type is QaType.OBJECTIVE:
        if not isinstance(options, list) or len(options) < 2:
            raise SchemaError(f"items[{idx}] objective needs >= 2 options")
        if not isinstance(gold_index, int) or not 0 <= gold_index < len(options):
            raise SchemaError(f"items[{idx}] objective needs exactly one valid gold option")
        options = tuple(str(o) for o in options)
    else:
        if options is not None or gold_index is not None:
            raise SchemaError(f"items[{idx}] options only allowed on objective items")

    if rec["source"] != passage.passage_id:
        raise SchemaError(
            f"items[{idx}] cites source {rec['source']!r}, expected {passage.passage_id!r}"
        )
    if not isinstance(rec["answer_final"], str):
        raise SchemaError(f"items[{idx}] answer_final must be a string")

    return QaItem(
        item_id=str(rec["item_id"]),
        qa_type=qa_type,
        language=str(rec["language"]),
        domain_id=str(rec.get("domain_id", "")),
        turns=tuple(turns),
        support_spans=tuple(spans),
        source=rec["source"],
        answer_final=rec["answer_final"],
        options=options if qa_type is QaType.OBJECTIVE else None,
        gold_index=gold_index if qa_type is QaType.OBJECTIVE else None,
    )


@dataclass(frozen=True)
class RuleResult:
    name: str
    passed: bool
    reason: str | None = None

    def to_record(self) -> dict:
        return {"name": self.name, "passed": self.passed, "reason": self.reason}


@dataclass(frozen=True)
class ValidationRules:
    min_len: int = 20
    max_len: int = 2000
    banned_phrases: tuple[str, ...] = ()
    banned_patterns: tuple[str, ...] = ()

    @classmethod
    def from_config(cls, cfg: Mapping | None = None, lexicon_dir: str | None = None) -> "ValidationRules":
        banned = load_banned_phrases(lexicon_dir)
        cfg = cfg or {}
        return cls(
            min_len=int(cfg.get("min_len", 20)),
            max_len=int(cfg.get("max_len", 2000)),
            banned_phrases=tuple(banned.get("phrases", ())),
            banned_patterns=tuple(banned.get("patterns", ())),
        )


_PAIRED = (("(", ")"), ("[", "]"), ("{", "}"), ("“", "”"))
_EVEN = ('"', "॥")


def _symbol_issues(text: str) -> str | None:
    for opener, closer in _PAIRED:
        depth = 0
        for ch in text:
            if ch == opener:
                depth += 1
            elif ch == closer:
                depth -= 1
                if depth < 0:
                    return f"unbalanced {opener}{closer}"
        if depth != 0:
            return f"unbalanced {opener}{closer}"
    for ch in _EVEN:
        if text.count(ch) % 2 != 0:
            return f"unpaired {ch}"
    return None


def validate_item(i: QaItem, rules: ValidationRules) -> tuple[RuleResult, ...]:
    """Rule verdicts for one item; verdicts, never exceptions."""
    results = []

    n = len(i.answer_final)
    if n < rules.min_len:
        results.append(RuleResult("length", False, f"answer length {n} < min {rules.min_len}"))
    elif n > rules.max_len:
        results.append(RuleResult("length", False, f"answer length {n} > max {rules.max_len}"))
    else:
        results.append(RuleResult("length", True))

    assistant_text = "\n".join(t.text for t in i.assistant_turns())
    folded = assistant_text.casefold()
    hit = next((p for p in rules.banned_phrases if p.casefold() in folded), None)
    if hit is None:
        hit = next(
            (pat for pat in rules.banned_patterns if re.search(pat, assistant_text, re.IGNORECASE)),
            None,
        )
    if hit is not None:
        results.append(RuleResult("banned_phrase", False, f"matched banned {hit!r}"))
    else:
        results.append(RuleResult("banned_phrase", True))

    issue = None
    for t in i.assistant_turns():
        issue = _symbol_issues(t.text)
        if issue:
            break
    if issue:
        results.append(RuleResult("symbol_consistency", False, issue))
    else:
        results.append(RuleResult("symbol_consistency", True))

    return tuple(results)


def tokens(text: str) -> list[str]:
    """Script-aware tokens: word runs, split at whitespace, dandas, punctuation."""
    return [t.casefold() for t in _TOKEN_RE.findall(text)]


def anchor_evidence(
    i: QaItem, p: Passage, lexicons: Lexicons | None = None
) -> tuple[float, float]:
    """Token overlap (Jaccard) and content-token coverage of the answer.

    Coverage drops stopwords of the item's language from the answer side;
    an answer whose every content token appears in the cited spans scores
    coverage 1.0.
    """
    if lexicons is None:
        lexicons = load_lexicons()
    for start, end in i.support_spans:
        if start < 0 or end > len(p.text) or start >= end:
            raise SpanNotFound(f"span [{start},{end}) not found in passage {p.passage_id}")
    span_text = " ".join(p.text[start:end] for start, end in i.support_spans)
    span_tokens = set(tokens(span_text))
    answer_tokens = tokens(i.answer_final)

    answer_set = set(answer_tokens)
    union = answer_set | span_tokens
    overlap = len(answer_set & span_tokens) / len(union) if union else 1.0

    stop = {w.casefold() for w in lexicons.stopwords_for(i.language)}
    content = [t for t in answer_tokens if t not in stop]
    if not content:
        coverage = 1.0  # nothing left to support; the length rule polices degenerate answers
    else:
        coverage = sum(1 for t in content if t in span_tokens) / len(content)
    return overlap, coverage


def anchor_turns(i: QaItem, p: Passage, lexicons: Lexicons | None = None) -> list[float]:
    """Per-assistant-turn coverage, informational only.

    Routing anchors the final answer; multi-turn reports still expose how
    well each intermediate reply sits on the cited spans.
    """
    if lexicons is None:
        lexicons = load_lexicons()
    span_text = " ".join(p.text[start:end] for start, end in i.support_spans)
    span_tokens = set(tokens(span_text))
    stop = {w.casefold() for w in lexicons.stopwords_for(i.language)}
    coverages = []
    for turn in i.assistant_turns():
        content = [t for t in tokens(turn.text) if t not in stop]
        if not content:
            coverages.append(1.0)
        else:
            coverages.append(sum(1 for t in content if t in span_tokens) / len(content))
    return coverages


@dataclass(frozen=True)
class RouteDecision:
    status: str  # accept | escalate | reject
    reason: str | None = None

    def to_record(self) -> dict:
        return {"status": self.status, "reason": self.reason}


ACCEPT = RouteDecision("accept")
ESCALATE = RouteDecision("escalate")


@dataclass(frozen=True)
class RouteThresholds:
    accept_cov: float = 0.7
    escalate_cov: float = 0.4

    def to_record(self) -> dict:
        return {"accept_cov": self.accept_cov, "escalate_cov": self.escalate_cov}


@dataclass(frozen=True)
class ValidationReport:
    item_id: str
    rule_results: tuple[RuleResult, ...]
    overlap: float
    coverage: float
    route: RouteDecision
    thresholds: RouteThresholds
    policy_version: str = "v1"

    def to_record(self) -> dict:
        return {
            "item_id": self.item_id,
            "rules": [r.to_record() for r in self.rule_results],
            "overlap": round(self.overlap, 6),
            "coverage": round(self.coverage, 6),
            "route": self.route.status,
            "reason": self.route.reason,
            "thresholds": self.thresholds.to_record(),
            "policy_version": self.policy_version,
        }


def route_item(
    rule_results: Sequence[RuleResult],
    coverage: float,
    thresholds: RouteThresholds = RouteThresholds(),
) -> RouteDecision:
    """Hard rules dominate; otherwise coverage thresholds pick the route."""
    if thresholds.accept_cov <= thresholds.escalate_cov:
        raise InvalidThresholds(
            f"accept_cov ({thresholds.accept_cov}) must exceed escalate_cov ({thresholds.escalate_cov})"
        )
    failed = next((r for r in rule_results if not r.passed), None)
    if failed is not None:
        return RouteDecision("reject", f"rule:{failed.name}")
    if coverage >= thresholds.accept_cov:
        return ACCEPT
    if coverage >= thresholds.escalate_cov:
        return ESCALATE
    return RouteDecision("reject", "unsupported")


@dataclass(frozen=True)
class JudgeVerdict:
    item_id: str
    grounded: bool
    contradiction: bool
    rationale: str
    judge_id: str

    def __post_init__(self):
        if self.contradiction and self.grounded:
            raise ValueError("a contradicted item cannot be grounded")

    def to_record(self) -> dict:
        return {
            "item_id": self.item_id,
            "grounded": self.grounded,
            "contradiction": self.contradiction,
            "rationale": self.rationale,
            "judge_id": self.judge_id,
        }


class JudgeClient(Protocol):
    def judge(self, item: QaItem, passage: Passage) -> JudgeVerdict: ...


def adjudicate(
    escalated: Sequence[QaItem],
    judge: JudgeClient,
    passages: Mapping[str, Passage],
    max_retries: int = 3,
) -> list[tuple[str, RouteDecision]]:
    """Resolve escalated items through the judge; deterministic order by item_id.

    Transport failures retry up to max_retries; exhausting the retries raises
    JudgeUnavailable with the item still escalated (the caller keeps its
    pending state).
    """
    decisions: list[tuple[str, RouteDecision]] = []
    for item in sorted(escalated, key=lambda i: i.item_id):
        passage = passages[item.source]
        verdict = None
        for attempt in range(max_retries):
            try:
                verdict = judge.judge(item, passage)
                break
            except JudgeTransportError:
                continue
        if verdict is None:
            raise JudgeUnavailable(item.item_id, max_retries)
        if verdict.contradiction:
            decisions.append((item.item_id, RouteDecision("reject", "contradiction")))
        elif verdict.grounded:
            decisions.append((item.item_id, ACCEPT))
        else:
            decisions.append((item.item_id, RouteDecision("reject", "unsupported")))
    return decisions
