import random

import pytest

from samhita.dedup import (
    DedupParams,
    MinHashSignature,
    ShingleSet,
    estimate_jaccard,
    find_duplicates,
    minhash_signature,
    shingle,
)
from samhita.errors import EmptyShingleSet, EmptyText, IncompatibleSignatures, InvalidBanding

from conftest import random_text


def exact_jaccard_sets(a: set, b: set) -> float:
    """Independent brute-force oracle used throughout this module."""
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


class TestShingle:
    def test_exact_length_one_shingle(self):
        assert len(shingle("abcde", n=5).hashes) == 1

    def test_two_shingles(self):
        s = shingle("abcdef", n=5)
        assert len(s.hashes) == 2
        # the two shingles are the hashes of the two 5-grams
        expected = shingle("abcde", n=5).hashes | shingle("bcdef", n=5).hashes
        assert s.hashes == expected

    def test_short_text_whole_shingle(self):
        assert len(shingle("ab", n=5).hashes) == 1

    def test_empty_raises(self):
        with pytest.raises(EmptyText):
            shingle("", n=5)
        with pytest.raises(EmptyText):
            shingle("   ", n=5)

    def test_n_below_two_rejected(self):
        with pytest.raises(ValueError):
            shingle("abc", n=1)

    def test_whitespace_collapse_invariance(self):
        assert shingle("a  b\tc", n=3).hashes == shingle("a b c", n=3).hashes

    def test_distinct_ngrams_only(self):
        # "aaaa" has a single distinct 2-gram "aa"
        assert len(shingle("aaaa", n=2).hashes) == 1


class TestMinHashSignature:
    def test_deterministic(self):
        s = shingle("the quick brown fox", n=5)
        sig1 = minhash_signature(s, k=64, seed=3)
        sig2 = minhash_signature(s, k=64, seed=3)
        assert sig1.values == sig2.values

    def test_identical_sets_same_signature(self):
        a = shingle("some identical page text here", n=5, page_ref=("x", 1))
        b = shingle("some identical page text here", n=5, page_ref=("y", 2))
        assert minhash_signature(a, k=128, seed=0).values == minhash_signature(b, k=128, seed=0).values

    def test_length_equals_k(self):
        s = shingle("whatever text", n=5)
        assert len(minhash_signature(s, k=256, seed=0).values) == 256

    def test_empty_set_raises(self):
        empty = ShingleSet(page_ref=("e", 1), hashes=frozenset(), n=5)
        with pytest.raises(EmptyShingleSet):
            minhash_signature(empty, k=16, seed=0)

    def test_seed_changes_signature(self):
        s = shingle("the quick brown fox jumps", n=5)
        assert minhash_signature(s, k=64, seed=1).values != minhash_signature(s, k=64, seed=2).values


class TestEstimateJaccard:
    def test_identical_pages_equal_one(self):
        s = shingle("identical page content", n=5)
        sig = minhash_signature(s, k=128, seed=0)
        assert estimate_jaccard(sig, sig) == 1.0

    def test_three_element_sets(self):
        # {a,b,c} vs {b,c,d}: exact Jaccard 0.5 by the set oracle
        sa = ShingleSet(("a", 1), frozenset({10, 20, 30}), 5)
        sb = ShingleSet(("b", 1), frozenset({20, 30, 40}), 5)
        assert exact_jaccard_sets(set(sa.hashes), set(sb.hashes)) == 0.5
        est = estimate_jaccard(
            minhash_signature(sa, k=1024, seed=0), minhash_signature(sb, k=1024, seed=0)
        )
        assert abs(est - 0.5) <= 0.05

    def test_disjoint_sets_near_zero(self):
        sa = ShingleSet(("a", 1), frozenset(range(1000, 1100)), 5)
        sb = ShingleSet(("b", 1), frozenset(range(2000, 2100)), 5)
        assert exact_jaccard_sets(set(sa.hashes), set(sb.hashes)) == 0.0
        est = estimate_jaccard(
            minhash_signature(sa, k=1024, seed=0), minhash_signature(sb, k=1024, seed=0)
        )
        assert est <= 0.05

    def test_incompatible_signatures(self):
        s = shingle("text for signatures", n=5)
        with pytest.raises(IncompatibleSignatures):
            estimate_jaccard(minhash_signature(s, k=64, seed=0), minhash_signature(s, k=128, seed=0))
        with pytest.raises(IncompatibleSignatures):
            estimate_jaccard(minhash_signature(s, k=64, seed=0), minhash_signature(s, k=64, seed=1))


def mutate(rng: random.Random, text: str, n_mutations: int) -> str:
    chars = list(text)
    for _ in range(n_mutations):
        pos = rng.randrange(len(chars))
        chars[pos] = rng.choice("abcdefghijklmnopqrstuvwxyz")
    return "".join(chars)


class TestFindDuplicates:
    def test_exact_duplicate_clustered(self):
        text = "this page repeats verbatim in the corpus " * 5
        pages = [(("a", 1), text), (("a", 2), text), (("a", 3), "totally different content here " * 5)]
        clusters = find_duplicates(pages)
        by_member = {m: c for c in clusters for m in c.members}
        assert by_member[("a", 1)] is by_member[("a", 2)]
        assert by_member[("a", 3)] is not by_member[("a", 1)]

    def test_random_unique_pages_stay_singletons(self, rng):
        pages = [(("r", i), random_text(rng, 400)) for i in range(100)]
        # oracle: verify no true pair reaches the clustering threshold
        shingles = {ref: set(shingle(t, 5).hashes) for ref, t in pages}
        refs = sorted(shingles)
        for i, a in enumerate(refs):
            for b in refs[i + 1 :]:
                assert exact_jaccard_sets(shingles[a], shingles[b]) < 0.8
        clusters = find_duplicates(pages)
        assert len(clusters) == 100
        assert all(len(c.members) == 1 for c in clusters)

    def test_planted_near_duplicate_found(self, rng):
        base = random_text(rng, 600)
        near = mutate(rng, base, 6)
        # oracle confirms the plant is above threshold
        true_j = exact_jaccard_sets(set(shingle(base, 5).hashes), set(shingle(near, 5).hashes))
        assert true_j >= 0.8
        pages = [(("p", 1), base), (("p", 2), near)]
        pages += [(("p", i), random_text(rng, 600)) for i in range(3, 30)]
        clusters = find_duplicates(pages, DedupParams(jaccard_threshold=0.8))
        by_member = {m: c.cluster_id for c in clusters for m in c.members}
        assert by_member[("p", 1)] == by_member[("p", 2)]

    def test_invalid_banding(self):
        with pytest.raises(InvalidBanding):
            find_duplicates([(("x", 1), "abc")], DedupParams(k=256, bands=10, rows=10))

    def test_clusters_partition_input(self, rng):
        pages = [(("q", i), random_text(rng, 200)) for i in range(20)]
        clusters = find_duplicates(pages)
        seen = [m for c in clusters for m in c.members]
        assert sorted(seen) == sorted(ref for ref, _ in pages)

    def test_representative_is_smallest_member(self):
        text = "duplicate page body shared by both editions " * 4
        pages = [(("zed", 9), text), (("alpha", 3), text)]
        clusters = find_duplicates(pages)
        cluster = next(c for c in clusters if len(c.members) == 2)
        assert cluster.representative == ("alpha", 3)

    def test_order_and_schedule_independence(self, rng):
        base = random_text(rng, 500)
        pages = [(("s", 1), base), (("s", 2), mutate(rng, base, 5))]
        pages += [(("s", i), random_text(rng, 500)) for i in range(3, 40)]
        forward = find_duplicates(pages)
        shuffled = list(pages)
        rng.shuffle(shuffled)
        assert find_duplicates(shuffled) == forward

    def test_threshold_monotonicity(self, rng):
        base = random_text(rng, 400)
        pages = [(("m", i), mutate(rng, base, i * 3) if i % 2 else base) for i in range(1, 15)]
        low = find_duplicates(pages, DedupParams(jaccard_threshold=0.5))
        high = find_duplicates(pages, DedupParams(jaccard_threshold=0.9))
        low_by_member = {m: set(c.members) for c in low for m in c.members}
        for cluster in high:
            for member in cluster.members:
                # every high-threshold cluster is contained in a low-threshold one
                assert set(cluster.members) <= low_by_member[member]

    def test_blank_page_singleton(self):
        pages = [(("b", 1), "   "), (("b", 2), "actual content on this page")]
        clusters = find_duplicates(pages)
        assert len(clusters) == 2


class TestEstimatorAccuracy:
    def test_over_100_random_pairs(self, rng):
        """|estimate - exact| <= 0.05 at k=1024 for at least 95 of 100 pairs."""
        good = 0
        for i in range(100):
            base = random_text(rng, 300)
            if i % 3 == 0:
                other = mutate(rng, base, rng.randrange(1, 40))
            elif i % 3 == 1:
                other = base[: rng.randrange(50, 290)] + random_text(rng, 60)
            else:
                other = random_text(rng, 300)
            sa, sb = shingle(base, 5, ("a", i)), shingle(other, 5, ("b", i))
            exact = exact_jaccard_sets(set(sa.hashes), set(sb.hashes))
            est = estimate_jaccard(
                minhash_signature(sa, k=1024, seed=7), minhash_signature(sb, k=1024, seed=7)
            )
            if abs(est - exact) <= 0.05:
                good += 1
        assert good >= 95
