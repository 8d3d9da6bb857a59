"""Benchmark scoring: accuracy breakdowns by language, difficulty, and type.

Predictions arrive as option labels joined to the answer key on question_id.
Accuracies are exact integer counting reported as half-up two-decimal
percentages, and weighted_combine recombines per-group accuracies into the
overall figure.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Iterable, Mapping, Sequence

from .errors import EmptyFacet, ZeroCount

LANGUAGES = ("en", "hi")
DIFFICULTIES = ("Easy", "Medium", "Hard")
QTYPES = ("AssertionReasoning", "FillBlanks", "MCQ", "MatchColumn")
FACETS = ("overall", "language", "difficulty", "qtype")


@dataclass(frozen=True)
class BenchRecord:
    question_id: str
    language: str
    difficulty: str
    qtype: str
    gold: str
    prediction: str | None
    options: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.options:
            if self.gold not in self.options:
                raise ValueError(f"{self.question_id}: gold {self.gold!r} not in options")
            if self.prediction is not None and self.prediction not in self.options:
                raise ValueError(
                    f"{self.question_id}: prediction {self.prediction!r} not in options"
                )

    @property
    def correct(self) -> bool:
        return self.prediction == self.gold


def round2(value: float) -> float:
    return float(Decimal(str(value)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class BreakdownRow:
    key: str
    accuracy: float  # percentage, 2 decimals
    count: int
    correct: int

    def to_record(self) -> dict:
        return {
            "key": self.key,
            "accuracy": self.accuracy,
            "count": self.count,
            "correct": self.correct,
        }


@dataclass(frozen=True)
class BreakdownTable:
    facet: str
    rows: tuple[BreakdownRow, ...]

    def to_records(self) -> list[dict]:
        return [dict(r.to_record(), facet=self.facet) for r in self.rows]

    def to_text(self) -> str:
        key_width = max([len(r.key) for r in self.rows] + [len(self.facet), 10])
        lines = [f"{self.facet:<{key_width}}  accuracy   count"]
        lines.append("-" * (key_width + 18))
        for r in self.rows:
            lines.append(f"{r.key:<{key_width}}  {r.accuracy:>7.2f} {r.count:>7}")
        return "\n".join(lines) + "\n"


def _facet_key(record: BenchRecord, facet: str) -> str:
    if facet == "overall":
        return "overall"
    if facet == "language":
        return record.language
    if facet == "difficulty":
        return record.difficulty
    if facet == "qtype":
        return record.qtype
    raise ValueError(f"unknown facet {facet!r} (expected one of {FACETS})")


_ROW_ORDER = {
    "overall": ("overall",),
    "language": LANGUAGES,
    "difficulty": DIFFICULTIES,
    "qtype": QTYPES,
}


def score_breakdown(records: Sequence[BenchRecord], facet: str = "overall") -> BreakdownTable:
    """Accuracy per facet value, rows in the report's canonical order."""
    if not records:
        raise EmptyFacet(f"no records to score for facet {facet!r}")
    counts: dict[str, int] = {}
    corrects: dict[str, int] = {}
    for rec in records:
        key = _facet_key(rec, facet)
        counts[key] = counts.get(key, 0) + 1
        corrects[key] = corrects.get(key, 0) + (1 if rec.correct else 0)

    ordered = [k for k in _ROW_ORDER[facet] if k in counts]
    ordered += [k for k in sorted(counts) if k not in ordered]
    rows = tuple(
        BreakdownRow(
            key=k,
            accuracy=round2(100.0 * corrects[k] / counts[k]),
            count=counts[k],
            correct=corrects[k],
        )
        for k in ordered
    )
    return BreakdownTable(facet=facet, rows=rows)


def weighted_combine(groups: Sequence[tuple[float, int]]) -> float:
    """Count-weighted combination of per-group accuracy percentages."""
    if not groups:
        raise ZeroCount("no groups to combine")
    for acc, count in groups:
        if count <= 0:
            raise ZeroCount(f"group with accuracy {acc} has count {count}")
    total = sum(count for _, count in groups)
    return sum(acc * count for acc, count in groups) / total


def join_predictions(
    gold_records: Iterable[Mapping],
    predictions: Iterable[Mapping],
) -> tuple[list[BenchRecord], list[str]]:
    """Join the answer key with a prediction file on question_id.

    Returns the joined records plus the ids that had no prediction; missing
    predictions are excluded from scoring, not silently counted wrong.
    """
    pred_by_id = {p["question_id"]: p.get("prediction") for p in predictions}
    records = []
    missing = []
    for g in gold_records:
        qid = g["question_id"]
        prediction = pred_by_id.get(qid)
        if prediction is None:
            missing.append(qid)
            continue
        records.append(
            BenchRecord(
                question_id=qid,
                language=g["language"],
                difficulty=g["difficulty"],
                qtype=g["qtype"],
                gold=g["gold"],
                prediction=prediction,
                options=tuple(g["options"]) if g.get("options") else None,
            )
        )
    return records, missing
