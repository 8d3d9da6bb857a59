"""Page-quality measurement and three-way routing (accept / strict-clean / exclude).

Quality signals: mean and median line confidence, a lexicon-free character
error estimate (fraction of sampled grapheme clusters violating script
combining rules), and Indic-specific anomaly counts. Thresholds route each
page; a high error estimate downgrades the route one level.
"""

from __future__ import annotations

import random
import statistics
import unicodedata
from dataclasses import dataclass
from enum import IntEnum
from typing import Mapping

import regex

from .errors import EmptyPage, InvalidThresholds
from .lexicons import Lexicons, load_lexicons
from .normalize import RawPage, tag_language

_GRAPHEME_RE = regex.compile(r"\X")

# Devanagari dependent vowel signs (matras); virama kept separate.
_MATRAS = frozenset(
    chr(c)
    for c in (
        list(range(0x093A, 0x093C))  # vocalic candra forms
        + list(range(0x093E, 0x094D))  # aa..au
        + [0x094E, 0x094F, 0x0955, 0x0956, 0x0957, 0x0962, 0x0963]
    )
)
_VIRAMA = "्"
_CONSONANT_RANGE = ("क", "ह")

_MERGE_RE = regex.compile(r"(?:[क-ह]्){3,}[क-ह]")


class Route(IntEnum):
    EXCLUDE = 0
    STRICT_CLEAN = 1
    ACCEPT = 2

    @property
    def label(self) -> str:
        return {0: "exclude", 1: "strict_clean", 2: "accept"}[int(self)]


@dataclass(frozen=True)
class AnomalyCounts:
    matra_anomalies: int
    danda_deficit: int
    akshara_merge_suspects: int

    def to_record(self) -> dict:
        return {
            "matra_anomalies": self.matra_anomalies,
            "danda_deficit": self.danda_deficit,
            "akshara_merge_suspects": self.akshara_merge_suspects,
        }


@dataclass(frozen=True)
class PageQuality:
    page_ref: tuple[str, int]
    mean_conf: float
    median_conf: float
    cer_estimate: float
    anomalies: AnomalyCounts

    def to_record(self) -> dict:
        return {
            "entry_id": self.page_ref[0],
            "page_no": self.page_ref[1],
            "mean_conf": self.mean_conf,
            "median_conf": self.median_conf,
            "cer_estimate": self.cer_estimate,
            "anomalies": self.anomalies.to_record(),
        }


@dataclass(frozen=True)
class RouteThresholds:
    accept_min: float = 0.80
    exclude_max: float = 0.55
    cer_downgrade: float = 0.15

    @classmethod
    def from_mapping(cls, m: Mapping) -> "RouteThresholds":
        return cls(**{f: m[f] for f in ("accept_min", "exclude_max", "cer_downgrade") if f in m})


def _invalid_cluster(cluster: str) -> bool:
    """Does this grapheme cluster violate Devanagari combining rules?

    Flags clusters that start with a combining sign (orphan matra/virama,
    possibly clustered onto a preceding space) or stack two or more dependent
    vowel signs on one base.
    """
    stripped = cluster.lstrip()
    if not stripped:
        return False
    first = stripped[0]
    if first in _MATRAS or first == _VIRAMA:
        return True
    if unicodedata.category(first) in ("Mn", "Mc"):
        return True
    matra_count = sum(1 for ch in stripped if ch in _MATRAS)
    return matra_count >= 2


def page_quality(
    page: RawPage,
    sample_rate: float = 1.0,
    seed: int = 0,
    lexicons: Lexicons | None = None,
) -> PageQuality:
    """Confidence statistics plus sampled grapheme-level error estimate.

    The sample is seeded per page (entry_id, page_no), so results do not
    depend on processing order; sample_rate 1.0 reproduces the exact count
    ratio.
    """
    confidences = [line.confidence for line in page.lines if line.text.strip()]
    if not confidences:
        raise EmptyPage(f"page {page.page_ref} has no recognized text lines")
    mean_conf = statistics.fmean(confidences)
    median_conf = statistics.median(confidences)

    text = page.text
    clusters = [g for g in _GRAPHEME_RE.findall(text) if not g.isspace()]
    if sample_rate >= 1.0:
        sampled = clusters
    else:
        rng = random.Random(f"cer:{seed}:{page.entry_id}:{page.page_no}")
        sampled = [g for g in clusters if rng.random() < sample_rate]
    invalid = sum(1 for g in sampled if _invalid_cluster(g))
    cer = invalid / len(sampled) if sampled else 0.0

    return PageQuality(
        page_ref=page.page_ref,
        mean_conf=mean_conf,
        median_conf=median_conf,
        cer_estimate=cer,
        anomalies=detect_indic_anomalies(text, lexicons=lexicons),
    )


def detect_indic_anomalies(
    text: str,
    lang: str | None = None,
    lexicons: Lexicons | None = None,
) -> AnomalyCounts:
    """Count combining-rule violations, missing verse dandas, merge suspects.

    Danda deficit applies to Sanskrit lines only: either the caller passes
    lang="san-Deva", or each line is tagged individually. A merge suspect is
    a run of four or more consonants chained by viramas, the usual shape of
    adjacent aksharas the OCR fused.
    """
    if lexicons is None:
        lexicons = load_lexicons()

    matra = sum(
        1
        for g in _GRAPHEME_RE.findall(text)
        if not g.isspace() and _invalid_cluster(g)
    )

    deficit = 0
    for line in text.split("\n"):
        stripped = line.strip()
        if not stripped:
            continue
        line_lang = lang if lang is not None else tag_language(stripped, lexicons)
        if line_lang == "san-Deva" and not stripped.endswith(("।", "॥")):
            deficit += 1

    merges = len(_MERGE_RE.findall(text))
    return AnomalyCounts(matra, deficit, merges)


def route_page(q: PageQuality, thresholds: RouteThresholds = RouteThresholds()) -> Route:
    """Threshold routing with a one-level downgrade on a bad error estimate."""
    if thresholds.accept_min <= thresholds.exclude_max:
        raise InvalidThresholds(
            f"accept_min ({thresholds.accept_min}) must exceed exclude_max ({thresholds.exclude_max})"
        )
    if q.mean_conf >= thresholds.accept_min:
        route = Route.ACCEPT
    elif q.mean_conf < thresholds.exclude_max:
        route = Route.EXCLUDE
    else:
        route = Route.STRICT_CLEAN
    if q.cer_estimate > thresholds.cer_downgrade and route > Route.EXCLUDE:
        route = Route(int(route) - 1)
    return route
