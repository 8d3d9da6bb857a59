"""Practitioner audit loop: stratified sampling, leasing, verdicts, agreement.

Audit state is an append-only event log replayed at startup; every mutation
goes through a single lock-guarded writer, so concurrent annotators cannot
double-lease a task or lose a verdict. Agreement is pairwise Cohen's kappa
per stratum over the tasks both annotators labeled.
"""

from __future__ import annotations

import json
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .errors import (
    EmptyInput,
    InvalidLabel,
    LeaseExpired,
    LengthMismatch,
    UnknownStratumKey,
    UnknownTask,
)

VERDICT_LABELS = (
    "Grounded",
    "OverGeneralization",
    "ImplicitAssumption",
    "UnsupportedReasoning",
    "Unsafe",
)


@dataclass(frozen=True)
class AuditTask:
    task_id: str
    item_id: str
    stratum_key: str
    payload: dict  # question, answer, passage, spans

    def to_record(self) -> dict:
        return {
            "task_id": self.task_id,
            "item_id": self.item_id,
            "stratum_key": self.stratum_key,
            "payload": self.payload,
        }

    @classmethod
    def from_record(cls, rec: Mapping) -> "AuditTask":
        return cls(rec["task_id"], rec["item_id"], rec["stratum_key"], dict(rec["payload"]))


@dataclass(frozen=True)
class AnnotatorVerdict:
    task_id: str
    annotator_id: str
    label: str
    note: str | None
    timestamp: float


def stratified_sample(
    items: Sequence[Mapping],
    strata_keys: Sequence[str],
    per_stratum_n: int,
    seed: int,
) -> tuple[list[AuditTask], dict[str, int]]:
    """Sample min(per_stratum_n, |stratum|) items per stratum, without replacement.

    Items are plain records; every strata key must resolve on every item.
    Returns the tasks plus a shortfall map for strata thinner than requested.
    """
    strata: dict[str, list[Mapping]] = {}
    for item in items:
        parts = []
        for key in strata_keys:
            if key not in item:
                raise UnknownStratumKey(f"item {item.get('item_id')!r} lacks stratum key {key!r}")
            parts.append(str(item[key]))
        strata.setdefault("|".join(parts), []).append(item)

    tasks: list[AuditTask] = []
    shortfalls: dict[str, int] = {}
    for stratum in sorted(strata):
        members = sorted(strata[stratum], key=lambda r: str(r.get("item_id")))
        rng = random.Random(f"audit:{seed}:{stratum}")
        take = min(per_stratum_n, len(members))
        if take < per_stratum_n:
            shortfalls[stratum] = per_stratum_n - take
        chosen = rng.sample(members, take)
        chosen.sort(key=lambda r: str(r.get("item_id")))
        for rec in chosen:
            tasks.append(
                AuditTask(
                    task_id=f"task-{rec['item_id']}",
                    item_id=str(rec["item_id"]),
                    stratum_key=stratum,
                    payload={
                        "question": rec.get("question", ""),
                        "answer": rec.get("answer", ""),
                        "passage": rec.get("passage", ""),
                        "spans": rec.get("spans", []),
                    },
                )
            )
    tasks.sort(key=lambda t: t.task_id)
    return tasks, shortfalls


def cohen_kappa(a: Sequence[str], b: Sequence[str]) -> float | None:
    """Chance-corrected agreement; None when expected agreement is 1.

    kappa = (p_o - p_e) / (1 - p_e), with p_e from the two raters' marginal
    label frequencies.
    """
    if len(a) != len(b):
        raise LengthMismatch(f"sequences differ in length: {len(a)} vs {len(b)}")
    if not a:
        raise EmptyInput("cannot compute kappa over empty sequences")
    n = len(a)
    p_o = sum(1 for x, y in zip(a, b) if x == y) / n
    labels = set(a) | set(b)
    p_e = sum((a.count(l) / n) * (b.count(l) / n) for l in labels)
    if p_e >= 1.0:
        return None
    return (p_o - p_e) / (1 - p_e)


@dataclass(frozen=True)
class StratumAgreement:
    stratum_key: str
    pairs: tuple[dict, ...]  # {"annotators": [a,b], "kappa": float|None, "n_tasks": int}
    label_counts: dict[str, int]
    mean_kappa: float | None

    def to_record(self) -> dict:
        return {
            "stratum_key": self.stratum_key,
            "pairs": [dict(p) for p in self.pairs],
            "label_counts": dict(sorted(self.label_counts.items())),
            "mean_kappa": self.mean_kappa,
        }


def agreement_report(
    verdicts: Iterable[AnnotatorVerdict],
    task_strata: Mapping[str, str],
) -> list[StratumAgreement]:
    """Pairwise kappas per stratum over tasks both annotators labeled.

    Strata where no annotator pair shares a task come back with an empty pair
    list and mean_kappa None, which readers must render as insufficient
    overlap rather than zero agreement.
    """
    current: dict[tuple[str, str], AnnotatorVerdict] = {}
    for v in verdicts:
        current[(v.task_id, v.annotator_id)] = v  # later verdicts replace earlier

    by_stratum: dict[str, dict[str, dict[str, str]]] = {}
    label_counts: dict[str, dict[str, int]] = {}
    for (task_id, annotator_id), v in current.items():
        stratum = task_strata.get(task_id)
        if stratum is None:
            continue
        by_stratum.setdefault(stratum, {}).setdefault(annotator_id, {})[task_id] = v.label
        counts = label_counts.setdefault(stratum, {})
        counts[v.label] = counts.get(v.label, 0) + 1

    report = []
    for stratum in sorted(by_stratum):
        annotators = sorted(by_stratum[stratum])
        pairs = []
        kappas = []
        for i, x in enumerate(annotators):
            for y in annotators[i + 1 :]:
                shared = sorted(set(by_stratum[stratum][x]) & set(by_stratum[stratum][y]))
                if not shared:
                    continue
                seq_x = [by_stratum[stratum][x][t] for t in shared]
                seq_y = [by_stratum[stratum][y][t] for t in shared]
                kappa = cohen_kappa(seq_x, seq_y)
                pairs.append({"annotators": [x, y], "kappa": kappa, "n_tasks": len(shared)})
                if kappa is not None:
                    kappas.append(kappa)
        mean_kappa = sum(kappas) / len(kappas) if kappas else None
        report.append(
            StratumAgreement(
                stratum_key=stratum,
                pairs=tuple(pairs),
                label_counts=label_counts.get(stratum, {}),
                mean_kappa=mean_kappa,
            )
        )
    return report


@dataclass
class _TaskState:
    task: AuditTask
    lease: tuple[str, float] | None = None  # (annotator_id, expiry)
    verdicts: dict[str, AnnotatorVerdict] = field(default_factory=dict)
    done: bool = False


class AuditStore:
    """Event-sourced audit state with single-writer mutation semantics."""

    def __init__(
        self,
        state_dir: str | Path,
        clock: Callable[[], float] = time.time,
        lease_seconds: float = 1800.0,
        required_verdicts: int = 2,
    ):
        self.state_dir = Path(state_dir)
        self.state_dir.mkdir(parents=True, exist_ok=True)
        self.events_path = self.state_dir / "events.jsonl"
        self.clock = clock
        self.lease_seconds = lease_seconds
        self.required_verdicts = required_verdicts
        self._lock = threading.Lock()
        self._tasks: dict[str, _TaskState] = {}
        self._replay()

    # -- event log -------------------------------------------------------

    def _replay(self) -> None:
        if not self.events_path.exists():
            return
        with open(self.events_path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    self._apply(json.loads(line))

    def _append(self, event: dict) -> None:
        with open(self.events_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, ensure_ascii=False, separators=(",", ":")) + "\n")
            fh.flush()

    def _apply(self, event: dict) -> None:
        kind = event["event"]
        if kind == "task_created":
            task = AuditTask.from_record(event["task"])
            self._tasks.setdefault(task.task_id, _TaskState(task))
        elif kind == "leased":
            state = self._tasks[event["task_id"]]
            state.lease = (event["annotator_id"], float(event["expires_at"]))
        elif kind == "verdict":
            state = self._tasks[event["task_id"]]
            state.verdicts[event["annotator_id"]] = AnnotatorVerdict(
                task_id=event["task_id"],
                annotator_id=event["annotator_id"],
                label=event["label"],
                note=event.get("note"),
                timestamp=float(event["ts"]),
            )
            state.lease = None
            if len(state.verdicts) >= self.required_verdicts:
                state.done = True

    # -- mutations -------------------------------------------------------

    def add_tasks(self, tasks: Iterable[AuditTask]) -> int:
        added = 0
        with self._lock:
            for task in tasks:
                if task.task_id in self._tasks:
                    continue
                event = {"event": "task_created", "task": task.to_record(), "ts": self.clock()}
                self._append(event)
                self._apply(event)
                added += 1
        return added

    def lease_next(self, annotator_id: str) -> tuple[AuditTask, float] | None:
        """Lease the first available task; returns (task, lease_expiry).

        A task the annotator already holds (unexpired) is returned again; a
        task already labeled by this annotator is skipped.
        """
        with self._lock:
            now = self.clock()
            for task_id in sorted(self._tasks):
                state = self._tasks[task_id]
                if state.done or annotator_id in state.verdicts:
                    continue
                if state.lease is not None:
                    holder, expiry = state.lease
                    if holder == annotator_id and expiry > now:
                        return state.task, expiry
                    if expiry > now:
                        continue  # someone else holds it
                expires_at = now + self.lease_seconds
                event = {
                    "event": "leased",
                    "task_id": task_id,
                    "annotator_id": annotator_id,
                    "expires_at": expires_at,
                    "ts": now,
                }
                self._append(event)
                self._apply(event)
                return state.task, expires_at
        return None

    def submit_verdict(
        self, task_id: str, annotator_id: str, label: str, note: str | None = None
    ) -> dict:
        """Store a verdict; resubmission by the same annotator replaces it.

        Requires a live lease held by this annotator; an expired or missing
        lease raises LeaseExpired (resubmission on an already-labeled task is
        allowed without a lease).
        """
        if label not in VERDICT_LABELS:
            raise InvalidLabel(f"label {label!r} not in {VERDICT_LABELS}")
        with self._lock:
            state = self._tasks.get(task_id)
            if state is None:
                raise UnknownTask(task_id)
            now = self.clock()
            replaced = annotator_id in state.verdicts
            if not replaced:
                if state.lease is None or state.lease[0] != annotator_id:
                    raise LeaseExpired(f"no active lease on {task_id} for {annotator_id}")
                if state.lease[1] <= now:
                    raise LeaseExpired(f"lease on {task_id} expired for {annotator_id}")
            event = {
                "event": "verdict",
                "task_id": task_id,
                "annotator_id": annotator_id,
                "label": label,
                "note": note,
                "replaced_prior": replaced,
                "ts": now,
            }
            self._append(event)
            self._apply(event)
            return {
                "task_id": task_id,
                "annotator_id": annotator_id,
                "label": label,
                "replaced_prior": replaced,
                "done": state.done,
            }

    # -- reads -----------------------------------------------------------

    def tasks(self) -> list[AuditTask]:
        return [self._tasks[tid].task for tid in sorted(self._tasks)]

    def verdicts(self) -> list[AnnotatorVerdict]:
        out = []
        for tid in sorted(self._tasks):
            for annotator in sorted(self._tasks[tid].verdicts):
                out.append(self._tasks[tid].verdicts[annotator])
        return out

    def strata_summary(self) -> dict:
        summary: dict[str, dict] = {}
        for tid in sorted(self._tasks):
            state = self._tasks[tid]
            entry = summary.setdefault(
                state.task.stratum_key, {"tasks": 0, "done": 0, "verdicts": 0}
            )
            entry["tasks"] += 1
            entry["done"] += 1 if state.done else 0
            entry["verdicts"] += len(state.verdicts)
        return summary

    def agreement(self) -> list[StratumAgreement]:
        task_strata = {tid: s.task.stratum_key for tid, s in self._tasks.items()}
        return agreement_report(self.verdicts(), task_strata)
