"""Dialogue rendering with special tokens, strict re-parsing, dataset stats.

Rendering order: optional <system_prompt> block, optional <context> block
(contextual items embed their source passage), then alternating <user> and
<assistant> blocks with each reply wrapped in <actual_response> and
</actual_response>. Only <actual_response> has a closing token; every other
block ends where the next marker starts. parse_dialogue inverts the grammar
strictly, which is how every rendered record is verified before it ships.
"""

from __future__ import annotations

import hashlib
import re
import unicodedata
from dataclasses import dataclass
from typing import Iterable, Mapping

from .errors import (
    MarkerCollision,
    MarkerImbalance,
    MissingAnswer,
    MissingContext,
    UnacceptedItem,
    UnknownMarker,
)
from .validate import QaItem, QaType, RouteDecision, Turn

MARKER_SYSTEM = "<system_prompt>"
MARKER_CONTEXT = "<context>"
MARKER_USER = "<user>"
MARKER_ASSISTANT = "<assistant>"
MARKER_RESPONSE_OPEN = "<actual_response>"
MARKER_RESPONSE_CLOSE = "</actual_response>"

SPECIAL_TOKENS = (
    MARKER_USER,
    MARKER_ASSISTANT,
    MARKER_CONTEXT,
    MARKER_SYSTEM,
    MARKER_RESPONSE_OPEN,
    MARKER_RESPONSE_CLOSE,
)

# closing forms that do not exist in the token set, e.g. </user>
_BOGUS_CLOSER_RE = re.compile(r"</(?:user|assistant|context|system_prompt)>")

_MARKER_RE = re.compile("|".join(re.escape(m) for m in SPECIAL_TOKENS))


@dataclass(frozen=True)
class DialogueRecord:
    item_id: str
    rendered: str
    qa_type: str
    language: str
    domain_id: str

    def to_record(self) -> dict:
        return {
            "item_id": self.item_id,
            "rendered": self.rendered,
            "qa_type": self.qa_type,
            "language": self.language,
            "domain": self.domain_id,
        }


def _scan_payload(text: str, what: str) -> None:
    if _MARKER_RE.search(text):
        raise MarkerCollision(f"{what} contains a special token")


def render_dialogue(
    i: QaItem,
    route: RouteDecision | None = None,
    system_prompt: str | None = None,
    passage_text: str | None = None,
) -> DialogueRecord:
    """Render an accepted item into the token-templated training string.

    Payload text containing any special token is rejected outright: escaping
    would change what the trainer's tokenizer sees, so collision means the
    item does not ship.
    """
    if route is not None and route.status != "accept":
        raise UnacceptedItem(f"{i.item_id} routed {route.status}")
    if not i.answer_final.strip():
        raise MissingAnswer(i.item_id)
    if not i.turns or i.turns[0].role != "user":
        raise MissingAnswer(f"{i.item_id} has no leading user turn")

    parts: list[str] = []
    if system_prompt:
        _scan_payload(system_prompt, "system prompt")
        parts.append(MARKER_SYSTEM + system_prompt)
    if i.qa_type is QaType.CONTEXTUAL:
        if passage_text is None:
            raise MissingContext(f"{i.item_id} is contextual but no passage text was provided")
        _scan_payload(passage_text, "context passage")
        parts.append(MARKER_CONTEXT + passage_text)

    expect = "user"
    for turn in i.turns:
        if turn.role != expect:
            raise MissingAnswer(f"{i.item_id} turns do not alternate user/assistant")
        _scan_payload(turn.text, f"turn ({turn.role})")
        if not turn.text.strip():
            raise MissingAnswer(f"{i.item_id} has an empty {turn.role} turn")
        if turn.role == "user":
            parts.append(MARKER_USER + turn.text)
            expect = "assistant"
        else:
            parts.append(MARKER_ASSISTANT + MARKER_RESPONSE_OPEN + turn.text + MARKER_RESPONSE_CLOSE)
            expect = "user"
    if expect == "assistant":
        raise MissingAnswer(f"{i.item_id} ends on a user turn with no reply")

    rendered = unicodedata.normalize("NFC", "".join(parts))
    return DialogueRecord(
        item_id=i.item_id,
        rendered=rendered,
        qa_type=i.qa_type.value,
        language=i.language,
        domain_id=i.domain_id,
    )


@dataclass(frozen=True)
class ParsedDialogue:
    system_prompt: str | None
    context: str | None
    turns: tuple[Turn, ...]


def parse_dialogue(rendered: str) -> ParsedDialogue:
    """Strict inverse of render_dialogue; raises on any marker irregularity."""
    bogus = _BOGUS_CLOSER_RE.search(rendered)
    if bogus:
        raise UnknownMarker(f"unknown closing marker {bogus.group(0)!r}")

    events = [(m.start(), m.end(), m.group(0)) for m in _MARKER_RE.finditer(rendered)]
    if not events:
        raise MarkerImbalance("no markers found")
    if rendered[: events[0][0]].strip():
        raise MarkerImbalance("payload text before the first marker")

    blocks: list[tuple[str, str]] = []
    for idx, (start, end, marker) in enumerate(events):
        next_start = events[idx + 1][0] if idx + 1 < len(events) else len(rendered)
        blocks.append((marker, rendered[end:next_start]))

    system_prompt: str | None = None
    context: str | None = None
    turns: list[Turn] = []
    pos = 0

    if pos < len(blocks) and blocks[pos][0] == MARKER_SYSTEM:
        system_prompt = blocks[pos][1]
        pos += 1
    if pos < len(blocks) and blocks[pos][0] == MARKER_CONTEXT:
        context = blocks[pos][1]
        pos += 1

    expect = "user"
    while pos < len(blocks):
        marker, payload = blocks[pos]
        if marker in (MARKER_SYSTEM, MARKER_CONTEXT):
            raise MarkerImbalance(f"{marker} may only open the record")
        if expect == "user":
            if marker != MARKER_USER:
                raise MarkerImbalance(f"expected {MARKER_USER}, found {marker}")
            turns.append(Turn("user", payload))
            pos += 1
            expect = "assistant"
        else:
            if marker != MARKER_ASSISTANT:
                raise MarkerImbalance(f"expected {MARKER_ASSISTANT}, found {marker}")
            if payload:
                raise MarkerImbalance("text between <assistant> and <actual_response>")
            if pos + 1 >= len(blocks) or blocks[pos + 1][0] != MARKER_RESPONSE_OPEN:
                raise MarkerImbalance("<assistant> without <actual_response>")
            if pos + 2 >= len(blocks) or blocks[pos + 2][0] != MARKER_RESPONSE_CLOSE:
                raise MarkerImbalance("<actual_response> without closing marker")
            turns.append(Turn("assistant", blocks[pos + 1][1]))
            if blocks[pos + 2][1]:
                raise MarkerImbalance("text after </actual_response> before the next marker")
            pos += 3
            expect = "user"
    if expect == "assistant":
        raise MarkerImbalance("record ends on a user turn")
    if not turns:
        raise MarkerImbalance("no dialogue turns found")
    return ParsedDialogue(system_prompt=system_prompt, context=context, turns=tuple(turns))


# Target composition of the final dataset (counts the mix is balanced toward).
TARGET_COMPOSITION = {
    "qa_pair": 1_270_000,
    "objective": 900_000,
    "multi_turn": 1_510_000,
    "contextual": 1_070_000,
}


def target_shares() -> dict[str, float]:
    total = sum(TARGET_COMPOSITION.values())
    return {k: v / total for k, v in TARGET_COMPOSITION.items()}


@dataclass(frozen=True)
class DatasetStats:
    total: int
    by_qa_type: dict[str, int]
    by_language: dict[str, int]
    by_domain: dict[str, int]

    @property
    def empty(self) -> bool:
        return self.total == 0

    def fractions(self) -> dict[str, float]:
        if self.total == 0:
            return {}
        return {k: v / self.total for k, v in self.by_qa_type.items()}

    def to_record(self) -> dict:
        shares = target_shares()
        fractions = self.fractions()
        return {
            "total": self.total,
            "empty": self.empty,
            "by_qa_type": dict(sorted(self.by_qa_type.items())),
            "by_language": dict(sorted(self.by_language.items())),
            "by_domain": dict(sorted(self.by_domain.items())),
            "qa_type_fractions": {k: round(v, 6) for k, v in sorted(fractions.items())},
            "target_shares": {k: round(v, 6) for k, v in sorted(shares.items())},
            "deviation_from_target": {
                k: round(fractions.get(k, 0.0) - shares[k], 6) for k in sorted(shares)
            }
            if not self.empty
            else {},
        }


def dataset_stats(records: Iterable[DialogueRecord | Mapping]) -> DatasetStats:
    by_type: dict[str, int] = {}
    by_lang: dict[str, int] = {}
    by_domain: dict[str, int] = {}
    total = 0
    for rec in records:
        if isinstance(rec, DialogueRecord):
            qa_type, lang, domain = rec.qa_type, rec.language, rec.domain_id
        else:
            qa_type, lang, domain = rec["qa_type"], rec["language"], rec.get("domain", "")
        by_type[qa_type] = by_type.get(qa_type, 0) + 1
        by_lang[lang] = by_lang.get(lang, 0) + 1
        by_domain[domain] = by_domain.get(domain, 0) + 1
        total += 1
    return DatasetStats(total=total, by_qa_type=by_type, by_language=by_lang, by_domain=by_domain)


def file_header(system_prompt: str | None = None) -> dict:
    """Leading JSONL record describing the rendering grammar for trainers."""
    return {
        "header": {
            "format": "dialogue-v1",
            "block_order": ["system_prompt?", "context?", "(user assistant)+"],
            "special_tokens": list(SPECIAL_TOKENS),
            "response_wrapper": [MARKER_RESPONSE_OPEN, MARKER_RESPONSE_CLOSE],
            "system_prompt_included": bool(system_prompt),
        }
    }


def split_of(item_id: str, split_seed: int, val_fraction: float) -> str:
    """Seeded hash split; stable for a given (item_id, seed)."""
    digest = hashlib.blake2b(f"{split_seed}:{item_id}".encode("utf-8"), digest_size=4).digest()
    frac = int.from_bytes(digest, "big") / 2**32
    return "val" if frac < val_fraction else "train"
