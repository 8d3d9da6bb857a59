"""Curriculum-aligned domain taxonomy: tagging, quotas, distribution reports.

The taxonomy ships as an editable config file; each domain node carries
keyword lists in Devanagari, IAST, and plain Latin transliteration. Tagging
is keyword counting, quotas are enforced by deterministic seeded sampling,
and the report gives exact counts plus normalized fractions per facet.
"""

from __future__ import annotations

import random
import re
import unicodedata
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence, TypeVar

from .errors import ConfigError
from .lexicons import load_taxonomy_config
from .normalize import Passage

UNASSIGNED = "Unassigned"

REQUIRED_CATEGORIES = frozenset(
    {
        "Foundations",
        "AnatomyPhysiology",
        "ClassicalCompendia",
        "ClinicalDisciplines",
        "PharmacologyFormulations",
        "PathologyToxicology",
        "Specialties",
    }
)

T = TypeVar("T")


@dataclass(frozen=True)
class DomainNode:
    domain_id: str
    display_name: str
    category: str
    keywords_deva: tuple[str, ...]
    keywords_iast: tuple[str, ...]
    keywords_latin: tuple[str, ...]


@dataclass(frozen=True)
class Taxonomy:
    domains: tuple[DomainNode, ...]

    def by_id(self) -> dict[str, DomainNode]:
        return {d.domain_id: d for d in self.domains}


def load_taxonomy(path: str | None = None) -> Taxonomy:
    cfg = load_taxonomy_config(path)
    domains = []
    seen = set()
    for d in cfg["domains"]:
        if d["domain_id"] in seen:
            raise ConfigError(f"duplicate domain_id {d['domain_id']!r}")
        seen.add(d["domain_id"])
        kw = d.get("keywords", {})
        domains.append(
            DomainNode(
                domain_id=d["domain_id"],
                display_name=d.get("display_name", d["domain_id"]),
                category=d.get("category", d["domain_id"]),
                keywords_deva=tuple(unicodedata.normalize("NFC", k) for k in kw.get("deva", ())),
                keywords_iast=tuple(k.casefold() for k in kw.get("iast", ())),
                keywords_latin=tuple(k.casefold() for k in kw.get("latin", ())),
            )
        )
    taxonomy = Taxonomy(tuple(domains))
    missing = REQUIRED_CATEGORIES - {d.category for d in domains}
    if missing:
        raise ConfigError(f"taxonomy misses required categories: {sorted(missing)}")
    return taxonomy


def _count_latin_hits(folded_text: str, keyword: str) -> int:
    return len(re.findall(rf"(?<!\w){re.escape(keyword)}(?!\w)", folded_text))


def assign_domain(p: Passage, taxonomy: Taxonomy) -> str:
    """Domain with the most keyword hits; zero hits means Unassigned.

    Devanagari keywords match as substrings (compounds agglutinate), Latin
    and IAST keywords match on word boundaries, case-insensitively. Ties go
    to the lexicographically smaller domain_id.
    """
    text = p.text
    folded = text.casefold()
    scores: list[tuple[int, str]] = []
    for d in taxonomy.domains:
        hits = 0
        for kw in set(d.keywords_deva):
            hits += text.count(kw)
        # iast and latin lists overlap on unaccented terms; count each once
        for kw in set(d.keywords_iast) | set(d.keywords_latin):
            hits += _count_latin_hits(folded, kw)
        if hits:
            scores.append((hits, d.domain_id))
    if not scores:
        return UNASSIGNED
    scores.sort(key=lambda s: (-s[0], s[1]))
    return scores[0][1]


@dataclass(frozen=True)
class QuotaConfig:
    maxima: Mapping[str, int] = field(default_factory=dict)
    minima: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        for domain, quota in self.maxima.items():
            if quota < 0:
                raise ConfigError(f"quota for {domain!r} must be >= 0, got {quota}")
            if self.minima.get(domain, 0) > quota:
                raise ConfigError(f"minimum exceeds maximum for {domain!r}")


def enforce_quotas(
    items: Sequence[T],
    quotas: QuotaConfig,
    seed: int,
    domain_of: Callable[[T], str],
    sort_key: Callable[[T], str] = str,
) -> tuple[list[T], dict]:
    """Deterministically downsample each domain to its quota.

    Domains without a configured maximum pass through untouched. The skew
    report lists deficits (quota minus supply where positive, using the
    minimum target when configured) plus supply and selected counts.
    """
    by_domain: dict[str, list[T]] = {}
    for item in items:
        by_domain.setdefault(domain_of(item), []).append(item)

    selected: list[T] = []
    supply_counts: dict[str, int] = {}
    selected_counts: dict[str, int] = {}
    for domain in sorted(by_domain):
        members = sorted(by_domain[domain], key=sort_key)
        supply_counts[domain] = len(members)
        quota = quotas.maxima.get(domain)
        if quota is None or len(members) <= quota:
            chosen = members
        else:
            rng = random.Random(f"quota:{seed}:{domain}")
            chosen = rng.sample(members, quota)
            chosen.sort(key=sort_key)
        selected_counts[domain] = len(chosen)
        selected.extend(chosen)

    deficits: dict[str, int] = {}
    for domain, quota in sorted(quotas.maxima.items()):
        target = quotas.minima.get(domain, quota)
        supply = supply_counts.get(domain, 0)
        if supply < target:
            deficits[domain] = target - supply

    skew_report = {
        "deficits": deficits,
        "supply": supply_counts,
        "selected": selected_counts,
    }
    return selected, skew_report


@dataclass(frozen=True)
class DistributionReport:
    total: int
    by_domain: dict[str, int]
    by_lang: dict[str, int]

    @property
    def empty(self) -> bool:
        return self.total == 0

    def fractions(self, facet: str) -> dict[str, float]:
        counts = self.by_domain if facet == "domain" else self.by_lang
        if self.total == 0:
            return {}
        return {k: v / self.total for k, v in counts.items()}

    def to_record(self) -> dict:
        return {
            "total": self.total,
            "by_domain": dict(sorted(self.by_domain.items())),
            "by_lang": dict(sorted(self.by_lang.items())),
            "domain_fractions": dict(sorted(self.fractions("domain").items())),
            "lang_fractions": dict(sorted(self.fractions("lang").items())),
            "empty": self.empty,
        }

    def to_text(self) -> str:
        if self.empty:
            return "empty input: no items to report\n"
        lines = [f"total items: {self.total}", "", "domain            count  fraction"]
        for domain, count in sorted(self.by_domain.items()):
            lines.append(f"{domain:<18}{count:>5}  {count / self.total:8.4f}")
        lines.append("")
        lines.append("language          count  fraction")
        for lang, count in sorted(self.by_lang.items()):
            lines.append(f"{lang:<18}{count:>5}  {count / self.total:8.4f}")
        return "\n".join(lines) + "\n"


def distribution_report(
    items: Sequence,
    domain_of: Callable | None = None,
    lang_of: Callable | None = None,
) -> DistributionReport:
    """Exact counts and fractions per domain and language."""
    domain_of = domain_of or (lambda item: item.domain)
    lang_of = lang_of or (lambda item: item.lang)
    by_domain: dict[str, int] = {}
    by_lang: dict[str, int] = {}
    for item in items:
        d = domain_of(item)
        by_domain[d] = by_domain.get(d, 0) + 1
        lang = lang_of(item)
        by_lang[lang] = by_lang.get(lang, 0) + 1
    return DistributionReport(total=len(items), by_domain=by_domain, by_lang=by_lang)
