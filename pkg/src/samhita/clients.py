"""Generator and judge client contracts plus their deterministic stubs.

The real model endpoints are deployment config; the pipeline only depends on
the wire contracts here. Both stubs are pure functions of their inputs, so a
pipeline run with stubs is byte-reproducible.
"""

from __future__ import annotations

import hashlib
import json
import re
import urllib.error
import urllib.request
from dataclasses import dataclass
from typing import Protocol

from .errors import JudgeTransportError
from .lexicons import Lexicons, load_lexicons
from .normalize import Passage
from .validate import (
    GenerationRequest,
    JudgeVerdict,
    QaItem,
    QaType,
    anchor_evidence,
    tokens,
)

_SENTENCE_RE = re.compile(r"[^।॥.!?]+[।॥.!?]*")


class GeneratorClient(Protocol):
    def generate(self, request: GenerationRequest) -> str: ...


_WORDCHAR_RE = re.compile(r"\w")


def _sentences_with_offsets(text: str) -> list[tuple[int, int]]:
    """Sentence spans [start, end) over the passage, danda and period aware.

    Fragments without real word content (stray verse numbers, bare dandas)
    are skipped so extracted answers are never degenerate.
    """
    spans = []
    for m in _SENTENCE_RE.finditer(text):
        start, end = m.start(), m.end()
        while start < end and text[start].isspace():
            start += 1
        while end > start and text[end - 1].isspace():
            end -= 1
        if end > start and len(_WORDCHAR_RE.findall(text[start:end])) >= 3:
            spans.append((start, end))
    return spans or ([(0, len(text))] if text else [])


def _clean_answer(sentence: str) -> str:
    """Extracted answers drop trailing dandas and terminal punctuation.

    A lone trailing danda would trip the paired-marker symbol rule, and the
    terminator carries no content either way.
    """
    return sentence.rstrip("।॥.!? \t\n")


def _stable_int(key: str, modulo: int) -> int:
    digest = hashlib.blake2b(key.encode("utf-8"), digest_size=4).digest()
    return int.from_bytes(digest, "big") % modulo


_QUESTION_TEMPLATES = {
    "en": {
        QaType.QA_PAIR: "What does the text state about {topic}?",
        QaType.OBJECTIVE: "Which of the following statements appears in the text?",
        QaType.MULTI_TURN: ("What does the text state about {topic}?", "What else does it state?"),
        QaType.CONTEXTUAL: "According to the provided context, what is stated about {topic}?",
    },
    "deva": {
        QaType.QA_PAIR: "पाठ में {topic} के विषय में क्या कहा गया है?",
        QaType.OBJECTIVE: "निम्न में से कौन सा कथन पाठ में आया है?",
        QaType.MULTI_TURN: ("पाठ में {topic} के विषय में क्या कहा गया है?", "इसके आगे क्या कहा गया है?"),
        QaType.CONTEXTUAL: "दिए गए सन्दर्भ के अनुसार {topic} के विषय में क्या कहा गया है?",
    },
}

_DISTRACTORS = {
    "en": (
        "This statement does not occur anywhere in the given text.",
        "The text attributes this claim to a different chapter entirely.",
        "No such wording can be found in the cited passage.",
    ),
    "deva": (
        "यह कथन दिए गए पाठ में कहीं नहीं आया है।",
        "पाठ में यह बात किसी अन्य अध्याय की बताई गई है।",
        "उद्धृत अंश में ऐसा कोई वाक्य नहीं मिलता।",
    ),
}


@dataclass
class StubGenerator:
    """Deterministic extractive generator used for tests and offline runs.

    Answers are verbatim sentences of the passage with their spans cited, so
    well-formed passages yield acceptable items. With noise enabled, a stable
    hash of the request id occasionally produces an under-supported or
    banned-phrase answer, which exercises the escalate and reject routes.
    """

    noise: bool = True

    def generate(self, request: GenerationRequest) -> str:
        text = request.passage_text
        spans = _sentences_with_offsets(text)
        first = spans[0]
        second = spans[1] if len(spans) > 1 else spans[0]
        script = "deva" if request.language.endswith("-Deva") else "en"
        templates = _QUESTION_TEMPLATES[script]
        topic = " ".join(tokens(text[first[0] : first[1]])[:3]) or "this"

        item_id = request.request_id
        noise_kind = self._noise_kind(item_id)
        answer = _clean_answer(text[first[0] : first[1]])
        if noise_kind == "pad":
            filler = (
                " Beyond this, later commentators add broader claims not present here."
                if script == "en"
                else " इसके अतिरिक्त परवर्ती टीकाकार ऐसे व्यापक दावे जोड़ते हैं जो यहाँ नहीं हैं।"
            )
            answer = answer + filler
        elif noise_kind == "banned":
            answer = answer + (
                " You should take twice daily for best results."
                if script == "en"
                else " इसे दिन में दो बार सेवन करें।"
            )

        qa_type = request.qa_type
        if qa_type is QaType.QA_PAIR:
            turns = [
                {"role": "user", "text": templates[qa_type].format(topic=topic)},
                {"role": "assistant", "text": answer},
            ]
            support = [list(first)]
        elif qa_type is QaType.CONTEXTUAL:
            turns = [
                {"role": "user", "text": templates[qa_type].format(topic=topic)},
                {"role": "assistant", "text": answer},
            ]
            support = [list(first)]
        elif qa_type is QaType.MULTI_TURN:
            q1, q2 = templates[qa_type]
            follow = _clean_answer(text[second[0] : second[1]])
            turns = [
                {"role": "user", "text": q1.format(topic=topic)},
                {"role": "assistant", "text": _clean_answer(text[first[0] : first[1]])},
                {"role": "user", "text": q2},
                {"role": "assistant", "text": answer if noise_kind else follow},
            ]
            answer = answer if noise_kind else follow
            support = [list(first), list(second)]
        else:  # objective
            gold = answer
            distractors = _DISTRACTORS[script]
            gold_index = _stable_int(item_id + ":gold", 4)
            options = list(distractors[:3])
            options.insert(gold_index, gold)
            turns = [
                {"role": "user", "text": templates[qa_type].format(topic=topic)},
                {"role": "assistant", "text": gold},
            ]
            support = [list(first)]
            return json.dumps(
                {
                    "items": [
                        {
                            "item_id": item_id,
                            "qa_type": qa_type.value,
                            "language": request.language,
                            "domain_id": request.domain_id,
                            "turns": turns,
                            "support_spans": support,
                            "source": request.passage_id,
                            "answer_final": gold,
                            "options": options,
                            "gold_index": gold_index,
                        }
                    ]
                },
                ensure_ascii=False,
            )

        return json.dumps(
            {
                "items": [
                    {
                        "item_id": item_id,
                        "qa_type": qa_type.value,
                        "language": request.language,
                        "domain_id": request.domain_id,
                        "turns": turns,
                        "support_spans": support,
                        "source": request.passage_id,
                        "answer_final": answer,
                    }
                ]
            },
            ensure_ascii=False,
        )

    def _noise_kind(self, item_id: str) -> str | None:
        if not self.noise:
            return None
        bucket = _stable_int(item_id, 13)
        if bucket == 0:
            return "pad"
        if bucket == 1:
            return "banned"
        return None


_NEGATIONS = frozenset({"not", "never", "no", "नहीं", "नहि", "न"})


@dataclass
class StubJudge:
    """Rule-based deterministic judge for the escalated slice.

    Contradiction: the answer introduces a negation token absent from the
    cited spans. Groundedness: no contradiction and content coverage at or
    above the floor.
    """

    judge_id: str = "stub-judge"
    grounded_floor: float = 0.45
    lexicons: Lexicons | None = None

    def judge(self, item: QaItem, passage: Passage) -> JudgeVerdict:
        lexicons = self.lexicons or load_lexicons()
        overlap, coverage = anchor_evidence(item, passage, lexicons)
        span_text = " ".join(passage.text[s:e] for s, e in item.support_spans)
        span_tokens = set(tokens(span_text))
        answer_tokens = set(tokens(item.answer_final))
        contradiction = any(t in _NEGATIONS and t not in span_tokens for t in answer_tokens)
        grounded = (not contradiction) and coverage >= self.grounded_floor
        rationale = f"coverage={coverage:.3f} overlap={overlap:.3f} floor={self.grounded_floor}"
        return JudgeVerdict(
            item_id=item.item_id,
            grounded=grounded,
            contradiction=contradiction,
            rationale=rationale,
            judge_id=self.judge_id,
        )


@dataclass
class HttpJudge:
    """Judge client for a real adjudication endpoint.

    POSTs {"item": ..., "passage": {"passage_id", "text"}} as JSON and expects
    a JudgeVerdict-shaped JSON object back. Any transport or protocol failure
    surfaces as JudgeTransportError so the caller's retry policy applies.
    """

    endpoint: str
    timeout: float = 30.0

    def judge(self, item: QaItem, passage: Passage) -> JudgeVerdict:
        body = json.dumps(
            {
                "item": item.to_record(),
                "passage": {"passage_id": passage.passage_id, "text": passage.text},
            },
            ensure_ascii=False,
        ).encode("utf-8")
        req = urllib.request.Request(
            self.endpoint, data=body, headers={"Content-Type": "application/json"}
        )
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                payload = json.loads(resp.read().decode("utf-8"))
        except (urllib.error.URLError, TimeoutError, OSError, json.JSONDecodeError) as exc:
            raise JudgeTransportError(str(exc)) from exc
        try:
            return JudgeVerdict(
                item_id=payload["item_id"],
                grounded=bool(payload["grounded"]),
                contradiction=bool(payload["contradiction"]),
                rationale=str(payload.get("rationale", "")),
                judge_id=str(payload.get("judge_id", self.endpoint)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise JudgeTransportError(f"malformed judge response: {exc}") from exc


class FailingJudge:
    """Test double that always fails transport; exercises the retry path."""

    def judge(self, item: QaItem, passage: Passage) -> JudgeVerdict:
        raise JudgeTransportError("simulated transport failure")


def make_judge(spec: str) -> StubJudge | HttpJudge:
    """Resolve a judge spec: 'stub' or 'endpoint:<url>'."""
    if spec == "stub":
        return StubJudge()
    if spec.startswith("endpoint:"):
        return HttpJudge(spec.split(":", 1)[1])
    raise ValueError(f"unknown judge spec {spec!r} (use 'stub' or 'endpoint:<url>')")
