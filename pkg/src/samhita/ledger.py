"""Edition catalogue: license classification, trainable/shadow partition, lineage.

The catalogue is the gate that keeps non-open text out of every later stage.
Entries whose declared rights do not match a clear open license survive only
as shadow entries: bibliographic metadata with the text reference dropped, so
no byte of their content can reach a downstream artifact.
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Sequence

from .errors import DuplicateEntryId, UnknownEntryReference
from .lexicons import load_license_lexicon


def _nfc(s: str) -> str:
    return unicodedata.normalize("NFC", s)

PageRef = tuple[str, int]

OPEN = "open"
RESTRICTED = "restricted"
AMBIGUOUS = "ambiguous"


@dataclass(frozen=True)
class LicenseClass:
    status: str  # open | restricted | ambiguous
    kind: str | None = None  # CC0 | CC-BY | PublicDomain when status == open

    @property
    def is_open(self) -> bool:
        return self.status == OPEN


LICENSE_RESTRICTED = LicenseClass(RESTRICTED)
LICENSE_AMBIGUOUS = LicenseClass(AMBIGUOUS)


@dataclass(frozen=True)
class CatalogEntry:
    """One edition-level row of the license ledger."""

    entry_id: str
    title: str
    authors: tuple[str, ...]
    translators: tuple[str, ...]
    publication_year: int
    source_url: str
    language_tags: tuple[str, ...]
    declared_rights: str
    license_class: LicenseClass
    shadow: bool = False
    pages_path: str | None = None  # reference to the per-page OCR export; dropped on shadow

    def to_record(self) -> dict:
        return {
            "entry_id": self.entry_id,
            "title": self.title,
            "authors": list(self.authors),
            "translators": list(self.translators),
            "publication_year": self.publication_year,
            "source_url": self.source_url,
            "language_tags": list(self.language_tags),
            "declared_rights": self.declared_rights,
            "license_class": self.license_class.status,
            "license_kind": self.license_class.kind,
            "shadow": self.shadow,
            "pages_path": self.pages_path,
        }

    @classmethod
    def from_record(cls, rec: Mapping, lexicon: Mapping | None = None) -> "CatalogEntry":
        if rec.get("license_class"):
            lic = LicenseClass(rec["license_class"], rec.get("license_kind"))
        else:
            lic = classify_license(rec.get("declared_rights", ""), lexicon)
        return cls(
            entry_id=rec["entry_id"],
            title=_nfc(rec.get("title", "")),
            authors=tuple(_nfc(a) for a in rec.get("authors", ())),
            translators=tuple(_nfc(t) for t in rec.get("translators", ())),
            publication_year=int(rec.get("publication_year", 0)),
            source_url=rec.get("source_url", ""),
            language_tags=tuple(rec.get("language_tags", ())),
            declared_rights=_nfc(rec.get("declared_rights", "")),
            license_class=lic,
            shadow=bool(rec.get("shadow", False)),
            pages_path=rec.get("pages_path"),
        )


@dataclass(frozen=True)
class LineageEdge:
    """Symmetric cross-link between two editions sharing near-duplicate pages."""

    entry_a: str
    entry_b: str
    shared_page_fraction: float

    def to_record(self) -> dict:
        return {
            "entry_a": self.entry_a,
            "entry_b": self.entry_b,
            "shared_page_fraction": self.shared_page_fraction,
        }


def _fold(text: str) -> str:
    return re.sub(r"\s+", " ", text.lower()).strip()


def classify_license(declared_rights: str, lexicon: Mapping | None = None) -> LicenseClass:
    """Classify a free-text rights declaration, failing closed to Ambiguous.

    Keyword driven: a match in the restriction list with no open match yields
    Restricted; an open match with no restriction match yields Open with the
    matched kind; anything conflicting, empty, or unmatched is Ambiguous.
    """
    if lexicon is None:
        lexicon = load_license_lexicon()
    folded = _fold(declared_rights)
    if not folded:
        return LICENSE_AMBIGUOUS

    open_kind = None
    for kind, needles in lexicon["open"].items():
        if any(needle in folded for needle in needles):
            open_kind = kind
            break
    restricted_hit = any(needle in folded for needle in lexicon["restricted"])

    if open_kind and restricted_hit:
        return LICENSE_AMBIGUOUS
    if open_kind:
        return LicenseClass(OPEN, open_kind)
    if restricted_hit:
        return LICENSE_RESTRICTED
    return LICENSE_AMBIGUOUS


def partition_trainable(
    entries: Sequence[CatalogEntry],
) -> tuple[list[CatalogEntry], list[CatalogEntry]]:
    """Split the catalogue into trainable (Open) and shadow (everything else).

    Shadow entries come back with the shadow flag set and the text reference
    dropped. Outputs are sorted by entry_id, so the partition is independent
    of input order. Raises DuplicateEntryId on id collisions.
    """
    seen: set[str] = set()
    for entry in entries:
        if entry.entry_id in seen:
            raise DuplicateEntryId(entry.entry_id)
        seen.add(entry.entry_id)

    trainable: list[CatalogEntry] = []
    shadow: list[CatalogEntry] = []
    for entry in entries:
        if entry.license_class.is_open:
            trainable.append(replace(entry, shadow=False))
        else:
            shadow.append(replace(entry, shadow=True, pages_path=None))
    trainable.sort(key=lambda e: e.entry_id)
    shadow.sort(key=lambda e: e.entry_id)
    return trainable, shadow


def link_editions(
    entries: Sequence[CatalogEntry],
    dup_clusters: Iterable,  # DupCluster objects or (members) sequences
    link_threshold: float = 0.5,
) -> list[LineageEdge]:
    """Cross-link editions whose pages overlap through duplicate clusters.

    Two editions are linked when, for either edition, the fraction of its
    pages that sit in a cluster shared with the other edition reaches
    link_threshold. The recorded fraction is the larger of the two sides.
    """
    known = {e.entry_id for e in entries}
    pages_per_entry: dict[str, set[int]] = {}
    shared_pages: dict[tuple[str, str], set[int]] = {}

    clusters = [getattr(c, "members", c) for c in dup_clusters]
    for members in clusters:
        entries_here: dict[str, list[int]] = {}
        for entry_id, page_no in members:
            if entry_id not in known:
                raise UnknownEntryReference(entry_id)
            pages_per_entry.setdefault(entry_id, set()).add(page_no)
            entries_here.setdefault(entry_id, []).append(page_no)
        ids = sorted(entries_here)
        for i, a in enumerate(ids):
            for b in ids[i + 1 :]:
                shared_pages.setdefault((a, b), set()).update(entries_here[a])
                shared_pages.setdefault((b, a), set()).update(entries_here[b])

    edges: list[LineageEdge] = []
    done: set[tuple[str, str]] = set()
    for (a, b), pages_a in sorted(shared_pages.items()):
        if (b, a) in done or (a, b) in done:
            continue
        done.add((a, b))
        frac_a = len(pages_a) / len(pages_per_entry[a])
        frac_b = len(shared_pages.get((b, a), ())) / len(pages_per_entry[b])
        frac = max(frac_a, frac_b)
        if frac >= link_threshold:
            lo, hi = sorted((a, b))
            edges.append(LineageEdge(lo, hi, frac))
    edges.sort(key=lambda e: (e.entry_a, e.entry_b))
    return edges
