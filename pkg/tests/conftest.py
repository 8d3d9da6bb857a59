import random

import pytest

from samhita.ledger import CatalogEntry, classify_license
from samhita.normalize import Line, RawPage


def make_entry(entry_id: str, rights: str = "CC0 1.0 Universal", pages_path: str | None = None) -> CatalogEntry:
    return CatalogEntry(
        entry_id=entry_id,
        title=f"Title {entry_id}",
        authors=("Author One",),
        translators=(),
        publication_year=1952,
        source_url=f"https://archive.example/{entry_id}",
        language_tags=("en-Latn",),
        declared_rights=rights,
        license_class=classify_license(rights),
        pages_path=pages_path,
    )


def make_page(entry_id: str, page_no: int, lines: list[str], confidence: float = 0.9) -> RawPage:
    return RawPage(
        entry_id=entry_id,
        page_no=page_no,
        lines=tuple(Line(text, confidence) for text in lines),
    )


def random_text(rng: random.Random, length: int, alphabet: str = "abcdefghijklmnopqrstuvwxyz ") -> str:
    return "".join(rng.choice(alphabet) for _ in range(length))


@pytest.fixture
def rng():
    return random.Random(20240817)
