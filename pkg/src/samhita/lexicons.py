"""Loading for the editable config lexicons bundled with the package.

Every lexicon (license keywords, stopword lists, division headings, the
Devanagari repair table, taxonomy keywords, banned phrases) lives in
``samhita/config`` and can be overridden by pointing the loaders at another
directory. Keeping these as data files, not code, lets curators tune them per
corpus without touching the pipeline.
"""

from __future__ import annotations

import json
import unicodedata
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path


def _default_dir() -> Path:
    return Path(resources.files("samhita").joinpath("config"))  # type: ignore[arg-type]


def _read_text(name: str, base_dir: str | Path | None) -> str:
    base = Path(base_dir) if base_dir is not None else _default_dir()
    return (base / name).read_text(encoding="utf-8")


def load_json(name: str, base_dir: str | Path | None = None) -> dict:
    return json.loads(_read_text(name, base_dir))


def load_stopwords(lang_code: str, base_dir: str | Path | None = None) -> frozenset[str]:
    """Stopword set for one of: hi, mr, sa, en. Lines starting with # are comments."""
    text = _read_text(f"stopwords_{lang_code}.txt", base_dir)
    words = set()
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        words.add(unicodedata.normalize("NFC", line))
    return frozenset(words)


@dataclass(frozen=True)
class Lexicons:
    """All lexicons the normalization and validation stages need."""

    stopwords_hi: frozenset[str]
    stopwords_mr: frozenset[str]
    stopwords_sa: frozenset[str]
    stopwords_en: frozenset[str]
    divisions: tuple[tuple[str, tuple[str, ...]], ...]  # (tag, surface forms)
    repair_standard: tuple[tuple[str, str, str], ...]  # (from, to, scope)
    repair_aggressive: tuple[tuple[str, str, str], ...]

    def stopwords_for(self, lang: str) -> frozenset[str]:
        if lang == "hi-Deva":
            return self.stopwords_hi
        if lang == "mr-Deva":
            return self.stopwords_mr
        if lang == "san-Deva":
            return self.stopwords_sa
        if lang == "en-Latn":
            return self.stopwords_en
        return frozenset()


def _repair_entries(raw: list[dict]) -> tuple[tuple[str, str, str], ...]:
    out = []
    for entry in raw:
        out.append((
            unicodedata.normalize("NFC", entry["from"]),
            unicodedata.normalize("NFC", entry["to"]) if entry["to"] else "",
            entry.get("scope", "all"),
        ))
    return tuple(out)


@lru_cache(maxsize=8)
def load_lexicons(base_dir: str | None = None) -> Lexicons:
    repair = load_json("repair_table.json", base_dir)
    divisions_raw = load_json("divisions.json", base_dir)["divisions"]
    divisions = tuple(
        (d["tag"], tuple(unicodedata.normalize("NFC", f) for f in d["forms"]))
        for d in divisions_raw
    )
    return Lexicons(
        stopwords_hi=load_stopwords("hi", base_dir),
        stopwords_mr=load_stopwords("mr", base_dir),
        stopwords_sa=load_stopwords("sa", base_dir),
        stopwords_en=load_stopwords("en", base_dir),
        divisions=divisions,
        repair_standard=_repair_entries(repair["standard"]),
        repair_aggressive=_repair_entries(repair["aggressive"]),
    )


def load_license_lexicon(base_dir: str | Path | None = None) -> dict:
    return load_json("license_lexicon.json", base_dir)


def load_taxonomy_config(path: str | Path | None = None) -> dict:
    if path is not None:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    return load_json("taxonomy.json", None)


def load_banned_phrases(base_dir: str | Path | None = None) -> dict:
    return load_json("banned_phrases.json", base_dir)
