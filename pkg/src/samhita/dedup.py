"""Page-level near-duplicate detection: character shingles, MinHash, LSH banding.

Shingles are character n-grams hashed to 64 bits. Signatures use k affine
permutations h_i(x) = (a_i * x + b_i) mod p over the shingle hash reduced
mod p (p = 2^31 - 1), with all a_i/b_i drawn from a single seed, so the same
(text, n, k, seed) always yields the same signature on any machine. LSH
banding proposes candidate pairs, the signature estimate verifies them
against the Jaccard threshold, and a union-find closes clusters.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import EmptyShingleSet, EmptyText, IncompatibleSignatures, InvalidBanding

PageRef = tuple[str, int]

_PRIME = (1 << 31) - 1  # Mersenne; keeps a*x+b inside uint64


def _hash64(s: str) -> int:
    return int.from_bytes(hashlib.blake2b(s.encode("utf-8"), digest_size=8).digest(), "big")


def _mix64(x: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer; destroys arithmetic structure in shingle hashes.

    Affine permutations alone are biased on arithmetically related inputs
    (e.g. sets of small multiples), so the raw 64-bit hash is mixed first.
    """
    z = x + np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@dataclass(frozen=True)
class ShingleSet:
    page_ref: PageRef
    hashes: frozenset[int]
    n: int


@dataclass(frozen=True)
class MinHashSignature:
    page_ref: PageRef
    values: tuple[int, ...]
    k: int
    seed: int


@dataclass(frozen=True)
class DupCluster:
    cluster_id: str
    members: tuple[PageRef, ...]
    representative: PageRef

    def to_record(self) -> dict:
        return {
            "cluster_id": self.cluster_id,
            "members": [list(m) for m in self.members],
            "representative": list(self.representative),
        }


@dataclass(frozen=True)
class DedupParams:
    n: int = 5
    k: int = 256
    bands: int = 32
    rows: int = 8
    seed: int = 0
    jaccard_threshold: float = 0.8

    @classmethod
    def from_mapping(cls, m: Mapping) -> "DedupParams":
        return cls(**{f: m[f] for f in ("n", "k", "bands", "rows", "seed", "jaccard_threshold") if f in m})


def shingle(text: str, n: int = 5, page_ref: PageRef = ("", 0)) -> ShingleSet:
    """Hash every distinct character n-gram of the whitespace-collapsed text.

    Text shorter than n becomes a single whole-text shingle, so short pages
    still participate in dedup instead of erroring out.
    """
    if n < 2:
        raise ValueError(f"shingle length must be >= 2, got {n}")
    collapsed = " ".join(text.split())
    if not collapsed:
        raise EmptyText(f"page {page_ref} has no text to shingle")
    if len(collapsed) < n:
        grams: Iterable[str] = (collapsed,)
    else:
        grams = (collapsed[i : i + n] for i in range(len(collapsed) - n + 1))
    return ShingleSet(page_ref=page_ref, hashes=frozenset(_hash64(g) for g in grams), n=n)


@lru_cache(maxsize=16)
def _permutation_params(k: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    rng = random.Random(f"minhash-{seed}")
    a = np.array([rng.randrange(1, _PRIME) for _ in range(k)], dtype=np.uint64)
    b = np.array([rng.randrange(0, _PRIME) for _ in range(k)], dtype=np.uint64)
    return a, b


def minhash_signature(s: ShingleSet, k: int = 256, seed: int = 0) -> MinHashSignature:
    if not s.hashes:
        raise EmptyShingleSet(f"page {s.page_ref} has an empty shingle set")
    if k < 1:
        raise ValueError(f"permutation count must be >= 1, got {k}")
    a, b = _permutation_params(k, seed)
    raw = np.fromiter(s.hashes, dtype=np.uint64, count=len(s.hashes))
    x = _mix64(raw) % np.uint64(_PRIME)
    # (k, m) fits easily: values stay below 2^62 so uint64 never wraps.
    vals = (a[:, None] * x[None, :] + b[:, None]) % _PRIME
    mins = vals.min(axis=1)
    return MinHashSignature(page_ref=s.page_ref, values=tuple(int(v) for v in mins), k=k, seed=seed)


def estimate_jaccard(a: MinHashSignature, b: MinHashSignature) -> float:
    """Fraction of matching signature positions; unbiased estimate of Jaccard."""
    if a.k != b.k or a.seed != b.seed:
        raise IncompatibleSignatures(
            f"signatures differ in k/seed: ({a.k},{a.seed}) vs ({b.k},{b.seed})"
        )
    matches = sum(1 for x, y in zip(a.values, b.values) if x == y)
    return matches / a.k


def exact_jaccard(a: Iterable, b: Iterable) -> float:
    """Brute-force set Jaccard; the oracle the estimator is tested against."""
    sa, sb = set(a), set(b)
    if not sa and not sb:
        return 1.0
    return len(sa & sb) / len(sa | sb)


class _UnionFind:
    def __init__(self, items: Iterable[PageRef]):
        self.parent = {x: x for x in items}

    def find(self, x: PageRef) -> PageRef:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: PageRef, b: PageRef) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # smaller ref wins the root, keeping merges order-independent
            lo, hi = sorted((ra, rb))
            self.parent[hi] = lo


def _band_key(values: Sequence[int], start: int, rows: int) -> bytes:
    h = hashlib.blake2b(digest_size=8)
    for v in values[start : start + rows]:
        h.update(v.to_bytes(8, "big"))
    return h.digest()


def find_duplicates(
    pages: Sequence[tuple[PageRef, str]],
    params: DedupParams | Mapping = DedupParams(),
) -> list[DupCluster]:
    """Cluster near-duplicate pages.

    LSH banding proposes candidates, estimate_jaccard >= jaccard_threshold
    verifies them, and transitive closure forms the clusters. Every input
    page lands in exactly one cluster (singletons included); representatives
    are the lexicographically smallest (entry_id, page_no) member.
    """
    if not isinstance(params, DedupParams):
        params = DedupParams.from_mapping(params)
    if params.bands * params.rows != params.k:
        raise InvalidBanding(
            f"bands*rows must equal k: {params.bands}*{params.rows} != {params.k}"
        )
    if not 0 < params.jaccard_threshold <= 1:
        raise ValueError(f"jaccard_threshold must be in (0,1], got {params.jaccard_threshold}")

    ordered = sorted(pages, key=lambda p: p[0])
    refs = [ref for ref, _ in ordered]
    if len(set(refs)) != len(refs):
        raise ValueError("duplicate page_ref in input")

    signatures: dict[PageRef, MinHashSignature] = {}
    for ref, text in ordered:
        try:
            sh = shingle(text, params.n, page_ref=ref)
        except EmptyText:
            continue  # blank page: stays a singleton cluster
        signatures[ref] = minhash_signature(sh, k=params.k, seed=params.seed)

    buckets: dict[tuple[int, bytes], list[PageRef]] = {}
    for ref in refs:
        sig = signatures.get(ref)
        if sig is None:
            continue
        for band in range(params.bands):
            key = (band, _band_key(sig.values, band * params.rows, params.rows))
            buckets.setdefault(key, []).append(ref)

    candidates: set[tuple[PageRef, PageRef]] = set()
    for members in buckets.values():
        if len(members) < 2:
            continue
        for i, a in enumerate(members):
            for b in members[i + 1 :]:
                candidates.add((a, b) if a < b else (b, a))

    uf = _UnionFind(refs)
    for a, b in sorted(candidates):
        if estimate_jaccard(signatures[a], signatures[b]) >= params.jaccard_threshold:
            uf.union(a, b)

    groups: dict[PageRef, list[PageRef]] = {}
    for ref in refs:
        groups.setdefault(uf.find(ref), []).append(ref)

    clusters = []
    for idx, root in enumerate(sorted(groups)):
        members = tuple(sorted(groups[root]))
        clusters.append(
            DupCluster(cluster_id=f"c{idx:06d}", members=members, representative=members[0])
        )
    return clusters
