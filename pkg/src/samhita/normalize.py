"""Post-OCR text conditioning and passage segmentation.

Stages, in the order the pipeline applies them per document:

1. normalize_text on every line: Unicode NFC, the configurable Devanagari
   repair table, digit harmonization inside Devanagari-majority lines, and
   whitespace collapse. Idempotent by construction.
2. strip_boilerplate across the document's pages: page-edge lines whose
   digit-masked form repeats on enough pages (headers, footers, page numbers)
   are dropped everywhere.
3. segment_and_tag: blank-line segmentation into passages that may span page
   breaks, de-hyphenation across line breaks, script-ratio plus stopword
   language tagging, and canonical-division inheritance from detected
   headings.
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import regex

from .lexicons import Lexicons, load_lexicons

DEVA_DIGITS = "०१२३४५६७८९"
ASCII_DIGITS = "0123456789"
_ASCII_TO_DEVA = str.maketrans(ASCII_DIGITS, DEVA_DIGITS)
_DIGIT_MASK = {ord(c): "#" for c in ASCII_DIGITS + DEVA_DIGITS}

_HSPACE_RE = re.compile(r"[^\S\n]+")
_BLANKS_RE = re.compile(r"\n{3,}")
_HYPHEN_BREAK_RE = re.compile(r"-\n(?=\S)")
# stdlib re's \w drops combining marks, which splits Devanagari words at
# matras; the regex module keeps them whole
_TOKEN_RE = regex.compile(r"\w+")

LANG_TAGS = ("san-Deva", "hi-Deva", "mr-Deva", "en-Latn", "und")


@dataclass(frozen=True)
class Line:
    text: str
    confidence: float


@dataclass(frozen=True)
class RawPage:
    entry_id: str
    page_no: int
    lines: tuple[Line, ...]

    @property
    def page_ref(self) -> tuple[str, int]:
        return (self.entry_id, self.page_no)

    @property
    def text(self) -> str:
        return "\n".join(line.text for line in self.lines)

    def to_record(self) -> dict:
        return {
            "entry_id": self.entry_id,
            "page_no": self.page_no,
            "lines": [{"text": l.text, "confidence": l.confidence} for l in self.lines],
        }

    @classmethod
    def from_record(cls, rec: Mapping) -> "RawPage":
        return cls(
            entry_id=rec["entry_id"],
            page_no=int(rec["page_no"]),
            lines=tuple(Line(l["text"], float(l["confidence"])) for l in rec["lines"]),
        )


@dataclass(frozen=True)
class Passage:
    passage_id: str
    entry_id: str
    page_span: tuple[int, int]
    text: str
    lang: str
    division: str | None = None

    def to_record(self) -> dict:
        return {
            "passage_id": self.passage_id,
            "entry_id": self.entry_id,
            "page_span": list(self.page_span),
            "text": self.text,
            "lang": self.lang,
            "division": self.division,
        }

    @classmethod
    def from_record(cls, rec: Mapping) -> "Passage":
        return cls(
            passage_id=rec["passage_id"],
            entry_id=rec["entry_id"],
            page_span=(int(rec["page_span"][0]), int(rec["page_span"][1])),
            text=rec["text"],
            lang=rec["lang"],
            division=rec.get("division"),
        )


def _is_deva(ch: str) -> bool:
    return "ऀ" <= ch <= "ॿ"


def _is_latin_letter(ch: str) -> bool:
    o = ord(ch)
    return (65 <= o <= 90) or (97 <= o <= 122) or (0x00C0 <= o <= 0x024F)


def _deva_majority(line: str) -> bool:
    deva = sum(1 for ch in line if _is_deva(ch))
    latin = sum(1 for ch in line if _is_latin_letter(ch))
    return deva > 0 and deva > latin


def _apply_repairs(line: str, repairs: Sequence[tuple[str, str, str]]) -> str:
    deva_line = None
    for src, dst, scope in repairs:
        if scope == "deva_line":
            if deva_line is None:
                deva_line = _deva_majority(line)
            if not deva_line:
                continue
        if src in line:
            line = line.replace(src, dst)
    return line


def normalize_text(
    text: str,
    repair_devanagari: bool = True,
    aggressive: bool = False,
    lexicons: Lexicons | None = None,
) -> str:
    """NFC plus repairs plus whitespace collapse; idempotent.

    Newlines survive (they carry the line structure segmentation relies on);
    runs of other whitespace collapse to one space, and runs of three or more
    newlines collapse to a single blank line.
    """
    if lexicons is None:
        lexicons = load_lexicons()
    s = unicodedata.normalize("NFC", text)
    s = s.replace("\r\n", "\n").replace("\r", "\n")

    repairs: tuple[tuple[str, str, str], ...] = ()
    if repair_devanagari:
        repairs = lexicons.repair_standard
        if aggressive:
            repairs = repairs + lexicons.repair_aggressive

    out_lines = []
    for line in s.split("\n"):
        if repairs:
            line = _apply_repairs(line, repairs)
        if _deva_majority(line):
            line = line.translate(_ASCII_TO_DEVA)
        line = _HSPACE_RE.sub(" ", line).strip()
        out_lines.append(line)
    s = "\n".join(out_lines)
    s = _BLANKS_RE.sub("\n\n", s).strip()
    return unicodedata.normalize("NFC", s)


def dehyphenate(text: str) -> str:
    """Join words the OCR split across lines with a trailing hyphen."""
    return _HYPHEN_BREAK_RE.sub("", text)


def mask_digits(text: str) -> str:
    """Replace digit runs with a single #, so 'Page 7' and 'Page 12' agree."""
    masked = text.translate(_DIGIT_MASK)
    return re.sub(r"#+", "#", masked)


def strip_boilerplate(
    pages: Sequence[RawPage],
    repeat_fraction: float = 0.6,
    edge_lines: int = 2,
) -> list[RawPage]:
    """Drop headers/footers that repeat at page edges across the document.

    A line counts as boilerplate when its digit-masked form appears in the
    same edge window (top or bottom edge_lines) on at least repeat_fraction
    of the pages. Needs at least two pages of evidence; single-page documents
    pass through unchanged.
    """
    if len(pages) < 2:
        return list(pages)

    counts: dict[tuple[str, str], set[int]] = {}
    for page in pages:
        for window, mask in _edge_masks(page, edge_lines):
            counts.setdefault((window, mask), set()).add(page.page_no)

    n_pages = len(pages)
    boiler = {
        key
        for key, page_nos in counts.items()
        if len(page_nos) >= 2 and len(page_nos) / n_pages >= repeat_fraction
    }
    if not boiler:
        return list(pages)

    result = []
    for page in pages:
        drop_idx = set()
        for window, mask, idx in _edge_masks(page, edge_lines, with_index=True):
            if (window, mask) in boiler:
                drop_idx.add(idx)
        kept = tuple(line for i, line in enumerate(page.lines) if i not in drop_idx)
        result.append(RawPage(page.entry_id, page.page_no, kept))
    return result


def _edge_masks(page: RawPage, edge_lines: int, with_index: bool = False):
    n = len(page.lines)
    top = range(0, min(edge_lines, n))
    bottom = range(max(n - edge_lines, 0), n)
    seen = set()
    for window, idx_range in (("top", top), ("bottom", bottom)):
        for idx in idx_range:
            if idx in seen:
                continue
            seen.add(idx)
            stripped = page.lines[idx].text.strip()
            if not stripped:
                continue
            mask = mask_digits(stripped)
            if with_index:
                yield window, mask, idx
            else:
                yield window, mask


def _tokens(text: str) -> list[str]:
    return _TOKEN_RE.findall(text)


def tag_language(text: str, lexicons: Lexicons | None = None) -> str:
    """Script-ratio then stopword-density language tagging.

    Devanagari-dominant text: Hindi when Hindi stopword density reaches one
    per 50 tokens, Marathi when its stopwords out-hit Hindi's at that
    density, Sanskrit on danda density (one per 100 chars) or Sanskrit
    stopword hits, Hindi as the in-script fallback. Latin-dominant text is
    en-Latn; everything else is und.
    """
    if lexicons is None:
        lexicons = load_lexicons()
    deva = sum(1 for ch in text if _is_deva(ch) and not ch.isdigit() and ch not in "।॥")
    latin = sum(1 for ch in text if _is_latin_letter(ch))
    other = sum(
        1
        for ch in text
        if ch.isalpha() and not _is_deva(ch) and not _is_latin_letter(ch)
    )
    alpha = deva + latin + other
    if alpha == 0:
        return "und"
    if deva / alpha >= 0.8:
        tokens = _tokens(text)
        n_tokens = max(len(tokens), 1)
        hi_hits = sum(1 for t in tokens if t in lexicons.stopwords_hi)
        mr_hits = sum(1 for t in tokens if t in lexicons.stopwords_mr)
        sa_hits = sum(1 for t in tokens if t in lexicons.stopwords_sa)
        # Marathi dominance is checked first: shared particles land in the
        # Hindi list too, so a bare density bar would shadow Marathi entirely.
        if mr_hits > hi_hits and mr_hits * 50 >= n_tokens:
            return "mr-Deva"
        if hi_hits >= 1 and hi_hits * 50 >= n_tokens:
            return "hi-Deva"
        danda_count = text.count("।") + text.count("॥")
        if danda_count * 100 >= len(text) or sa_hits >= 1:
            return "san-Deva"
        return "hi-Deva"
    if latin / alpha >= 0.8:
        return "en-Latn"
    return "und"


_HEADING_TRIM_RE = re.compile(r"^[\s\d०-९.:|।॥\-–—]*|[\s\d०-९.:|।॥\-–—]*$")


def _division_lookup(lexicons: Lexicons) -> dict[str, str]:
    lookup = {}
    for tag, forms in lexicons.divisions:
        for form in forms:
            lookup[form.casefold()] = tag
    return lookup


def detect_division(line: str, lexicons: Lexicons | None = None) -> str | None:
    """Return the canonical division tag when the line is a division heading."""
    if lexicons is None:
        lexicons = load_lexicons()
    trimmed = _HEADING_TRIM_RE.sub("", line)
    if not trimmed:
        return None
    return _division_lookup(lexicons).get(trimmed.casefold())


def segment_and_tag(
    pages: Sequence[RawPage],
    lexicons: Lexicons | None = None,
) -> list[Passage]:
    """Split normalized, boilerplate-stripped pages into tagged passages.

    Passages break at blank lines and may continue across page boundaries.
    Division headings become passages themselves and stamp their tag on
    everything up to the next heading.
    """
    if lexicons is None:
        lexicons = load_lexicons()

    ordered = sorted(pages, key=lambda p: p.page_no)
    entry_id = ordered[0].entry_id if ordered else ""

    groups: list[list[tuple[str, int]]] = []
    current: list[tuple[str, int]] = []
    for page in ordered:
        for line in page.lines:
            if line.text.strip():
                current.append((line.text, page.page_no))
            elif current:
                groups.append(current)
                current = []
    if current:
        groups.append(current)

    passages: list[Passage] = []
    division: str | None = None
    for ordinal, group in enumerate(groups):
        raw = "\n".join(text for text, _ in group)
        joined = dehyphenate(raw)
        text = unicodedata.normalize("NFC", re.sub(r"\s+", " ", joined).strip())
        if not text:
            continue
        if len(group) == 1:
            heading = detect_division(group[0][0], lexicons)
            if heading is not None:
                division = heading
        first = min(page_no for _, page_no in group)
        last = max(page_no for _, page_no in group)
        passages.append(
            Passage(
                passage_id=f"{entry_id}:{first:05d}:{ordinal:04d}",
                entry_id=entry_id,
                page_span=(first, last),
                text=text,
                lang=tag_language(text, lexicons),
                division=division,
            )
        )
    return passages


def normalize_pages(
    pages: Iterable[RawPage],
    repair_devanagari: bool = True,
    aggressive: bool = False,
    lexicons: Lexicons | None = None,
) -> list[RawPage]:
    """normalize_text over every line of every page, preserving confidences."""
    if lexicons is None:
        lexicons = load_lexicons()
    out = []
    for page in pages:
        lines = tuple(
            Line(
                normalize_text(
                    line.text,
                    repair_devanagari=repair_devanagari,
                    aggressive=aggressive,
                    lexicons=lexicons,
                ),
                line.confidence,
            )
            for line in page.lines
        )
        out.append(RawPage(page.entry_id, page.page_no, lines))
    return out
