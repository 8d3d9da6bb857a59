"""Acceptance suite: one test per release criterion, each printing PASS/FAIL.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines. Every tolerance is pinned here; nothing is deferred to calibration.
"""

import json
import random
import shutil
import time
import unicodedata
from pathlib import Path

import pytest

from samhita import jsonl
from samhita.audit import VERDICT_LABELS, cohen_kappa
from samhita.benchreport import round2, weighted_combine
from samhita.clients import StubGenerator, StubJudge
from samhita.dedup import DedupParams, estimate_jaccard, find_duplicates, minhash_signature, shingle
from samhita.export import dataset_stats, parse_dialogue, render_dialogue, target_shares
from samhita.normalize import Passage, normalize_text
from samhita.pipeline import PipelineConfig, run_pipeline
from samhita.validate import (
    ALL_QA_TYPES,
    RouteThresholds,
    ValidationRules,
    anchor_evidence,
    build_generation_request,
    parse_candidates,
    route_item,
    validate_item,
)

FIXTURE = Path(__file__).parent / "fixtures" / "corpus"
SENTINEL = "SENTINEL-GUPTA-9Q7XK"


def report(ok: bool, label: str) -> None:
    print(f"{'PASS' if ok else 'FAIL'}: {label}")
    assert ok, label


def exact_jaccard_sets(a: set, b: set) -> float:
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


def rand_text(rng: random.Random, length: int) -> str:
    return "".join(rng.choice("abcdefghijklmnopqrstuvwxyz ") for _ in range(length))


def mutate(rng: random.Random, text: str, n: int) -> str:
    chars = list(text)
    for _ in range(n):
        chars[rng.randrange(len(chars))] = rng.choice("abcdefghijklmnopqrstuvwxyz")
    return "".join(chars)


class TestMinHashFidelity:
    def test_estimator_within_tolerance(self):
        """100 random string pairs: |estimate - exact| <= 0.05 for >= 95, < 10 s."""
        rng = random.Random(1234)
        start = time.monotonic()
        good = 0
        for i in range(100):
            base = rand_text(rng, 300)
            kind = i % 3
            if kind == 0:
                other = mutate(rng, base, rng.randrange(1, 40))
            elif kind == 1:
                other = base[: rng.randrange(50, 290)] + rand_text(rng, 60)
            else:
                other = rand_text(rng, 300)
            sa = shingle(base, 5, ("a", i))
            sb = shingle(other, 5, ("b", i))
            exact = exact_jaccard_sets(set(sa.hashes), set(sb.hashes))
            est = estimate_jaccard(
                minhash_signature(sa, k=1024, seed=42),
                minhash_signature(sb, k=1024, seed=42),
            )
            if abs(est - exact) <= 0.05:
                good += 1
        elapsed = time.monotonic() - start
        report(
            good >= 95 and elapsed < 10.0,
            f"minhash fidelity: {good}/100 pairs within 0.05 at k=1024 in {elapsed:.1f}s",
        )


class TestDedupRecallPrecision:
    def test_planted_pairs_recovered_without_false_merges(self):
        """500 pages, 50 planted pairs (J >= 0.85): recall >= 48/50, 0 false merges."""
        rng = random.Random(777)
        pages = []
        planted = []
        shingles = {}

        for i in range(50):
            while True:
                base = rand_text(rng, 600)
                near = mutate(rng, base, 5)
                sa = frozenset(shingle(base, 5).hashes)
                sb = frozenset(shingle(near, 5).hashes)
                if exact_jaccard_sets(set(sa), set(sb)) >= 0.85:
                    break
            ra, rb = ("plant", 2 * i), ("plant", 2 * i + 1)
            pages += [(ra, base), (rb, near)]
            shingles[ra], shingles[rb] = sa, sb
            planted.append((ra, rb))
        for i in range(400):
            ref = ("fill", i)
            text = rand_text(rng, 600)
            pages.append((ref, text))
            shingles[ref] = frozenset(shingle(text, 5).hashes)

        # brute-force all-pairs oracle: no non-planted pair above 0.3
        refs = sorted(shingles)
        planted_set = {tuple(sorted(p)) for p in planted}
        max_other = 0.0
        for i, a in enumerate(refs):
            sa = shingles[a]
            for b in refs[i + 1 :]:
                if (a, b) in planted_set:
                    continue
                j = len(sa & shingles[b]) / len(sa | shingles[b])
                if j > max_other:
                    max_other = j
        assert max_other <= 0.3, f"corpus construction violated: stray pair at {max_other}"

        clusters = find_duplicates(pages, DedupParams(jaccard_threshold=0.8, seed=3))
        cluster_of = {m: c.cluster_id for c in clusters for m in c.members}
        recovered = sum(1 for a, b in planted if cluster_of[a] == cluster_of[b])

        false_merges = 0
        for c in clusters:
            if len(c.members) < 2:
                continue
            for i, a in enumerate(c.members):
                for b in c.members[i + 1 :]:
                    if tuple(sorted((a, b))) not in planted_set:
                        false_merges += 1
        report(
            recovered >= 48 and false_merges == 0,
            f"dedup recall/precision: {recovered}/50 planted pairs recovered, {false_merges} false merges",
        )


class TestNormalizationFuzz:
    _ALPHABET = (
        "abcdefgh ijklmnop\t\n"
        "कखगघङचछजझटठडढतथदधनपफबभमयरलवशषसह"
        "ािीुूृेैोौ्ंःँ"
        "।॥०१२३४५६७८९0123456789"
        "́̂eé-()[]"
    )

    def test_idempotence_and_nfc_on_fuzz_corpus(self):
        """10k mixed-script fuzz passages: zero idempotence or NFC violations."""
        rng = random.Random(4242)
        violations = 0
        for _ in range(10_000):
            length = rng.randrange(0, 240)
            s = "".join(rng.choice(self._ALPHABET) for _ in range(length))
            once = normalize_text(s)
            if normalize_text(once) != once or not unicodedata.is_normalized("NFC", once):
                violations += 1
        report(violations == 0, f"normalization fuzz: {violations} violations in 10000 passages")


class TestPublishedTableIdentity:
    def test_weighted_overall(self):
        """weighted_combine([(41.12, 9348), (38.04, 5615)]) within 0.05 of 39.97."""
        combined = weighted_combine([(41.12, 9348), (38.04, 5615)])
        delta = abs(round2(combined) - 39.97)
        report(delta <= 0.05, f"table identity: combined={round2(combined)} vs 39.97 (|d|={delta:.3f})")


class TestKappaOracle:
    def test_hand_fixtures_and_bounds(self):
        """Hand-computed kappas exact; 1000 random pairs stay within [-1, 1]."""
        exact = (
            cohen_kappa(["A", "B", "A", "B"], ["A", "B", "A", "B"]) == 1.0
            and cohen_kappa(["A", "A", "B", "B"], ["A", "B", "A", "B"]) == 0.0
            and cohen_kappa(["A", "A", "A", "B"], ["A", "A", "B", "B"]) == 0.5
        )
        rng = random.Random(31337)
        in_bounds = 0
        for _ in range(1000):
            n = rng.randrange(5, 40)
            labels = VERDICT_LABELS[: rng.randrange(2, 6)]
            a = [rng.choice(labels) for _ in range(n)]
            b = [rng.choice(labels) for _ in range(n)]
            kappa = cohen_kappa(a, b)
            if kappa is not None and -1.0 <= kappa <= 1.0:
                in_bounds += 1
        report(
            exact and in_bounds == 1000,
            f"kappa oracle: hand fixtures exact, {in_bounds}/1000 random pairs in [-1, 1]",
        )


def _fixture_passages(n: int, rng: random.Random) -> list[Passage]:
    en_bits = [
        "Turmeric is described as light and dry in classical pharmacology.",
        "The rhizome is dried and ground before any preparation begins.",
        "Basti is regarded as the foremost procedure for vata disorders.",
        "Diagnosis proceeds from questioning, observation, and palpation.",
        "Wound care is taught with bandaging patterns and cleaning rules.",
        "Seasonal conduct is tied to the strength of digestion in this text.",
    ]
    hi_bits = [
        "आयुर्वेद में वात पित्त और कफ के असंतुलन से रोग होता है ऐसा कहा गया है।",
        "इन क्रियाओं से शरीर की शुद्धि होती है और दोष संतुलन में आते हैं।",
        "हल्दी को लघु और रूक्ष गुण वाला द्रव्य कहा गया है और यह व्रण भरती है।",
        "भस्म बनाने से पहले शोधन और मारण की क्रियाएँ आवश्यक होती हैं।",
    ]
    passages = []
    for i in range(n):
        if i % 3 == 2:
            bits = rng.sample(hi_bits, k=rng.randrange(2, 4))
            lang = "hi-Deva"
        else:
            bits = rng.sample(en_bits, k=rng.randrange(2, 5))
            lang = "en-Latn"
        passages.append(
            Passage(
                passage_id=f"fx:{i:05d}:0000",
                entry_id="fx",
                page_span=(i + 1, i + 1),
                text=" ".join(bits),
                lang=lang,
            )
        )
    return passages


class TestValidationPipelineProperties:
    def test_properties_on_generated_items(self):
        """1k generated items: dominance, monotonicity, span-verbatim; 0 counterexamples."""
        rng = random.Random(99)
        passages = _fixture_passages(250, rng)
        generator = StubGenerator(noise=True)
        rules = ValidationRules.from_config()
        thresholds = RouteThresholds()
        rank = {"reject": 0, "escalate": 1, "accept": 2}

        dominance_violations = 0
        span_violations = 0
        clean = []  # (coverage, route rank) for all-pass items
        n_items = 0
        for passage in passages:
            for qa_type in ALL_QA_TYPES:
                request = build_generation_request(passage, qa_type)
                for item in parse_candidates(generator.generate(request), passage):
                    n_items += 1
                    rule_results = validate_item(item, rules)
                    _, coverage = anchor_evidence(item, passage)
                    route = route_item(rule_results, coverage, thresholds)
                    if any(not r.passed for r in rule_results) and route.status != "reject":
                        dominance_violations += 1
                    if all(r.passed for r in rule_results):
                        clean.append((coverage, rank[route.status]))
                    if route.status == "accept":
                        for s, e in item.support_spans:
                            span_text = passage.text[s:e]
                            if not span_text or passage.text.find(span_text, s) != s:
                                span_violations += 1

        # with fixed (passing) rules the route is a function of coverage
        # alone, so ranks sorted by coverage must be non-decreasing
        ranks_sorted = [r for _, r in sorted(clean)]
        monotonic_violations = sum(
            1 for i in range(1, len(ranks_sorted)) if ranks_sorted[i] < ranks_sorted[i - 1]
        )

        ok = (
            n_items >= 1000
            and dominance_violations == 0
            and monotonic_violations == 0
            and span_violations == 0
        )
        report(
            ok,
            "validation properties: "
            f"{n_items} items, dominance={dominance_violations}, "
            f"monotonic={monotonic_violations}, span={span_violations} violations",
        )

    def test_byte_identical_across_reruns_and_jobs(self, tmp_path_factory):
        """Stub-judge full run: identical decision log across 3 reruns and jobs."""
        digests = []
        for jobs in (1, 4, 2):
            workdir = tmp_path_factory.mktemp(f"accept_jobs{jobs}")
            shutil.copytree(FIXTURE, workdir, dirs_exist_ok=True)
            cfg = PipelineConfig.load(workdir / "pipeline.json")
            run_pipeline(cfg, jobs=jobs)
            digests.append(
                (
                    (cfg.out_dir / "decisions.jsonl").read_bytes(),
                    (cfg.out_dir / "dialogue.jsonl").read_bytes(),
                )
            )
        ok = digests[0] == digests[1] == digests[2]
        report(ok, "validation determinism: byte-identical logs across 3 runs at jobs=1,4,2")


class TestShadowLeakage:
    def test_sentinel_reaches_no_output(self, tmp_path):
        """Sentinel planted in the restricted edition appears in zero output bytes."""
        shutil.copytree(FIXTURE, tmp_path, dirs_exist_ok=True)
        cfg = PipelineConfig.load(tmp_path / "pipeline.json")
        run_pipeline(cfg)
        leaks = []
        for path in sorted(cfg.out_dir.rglob("*")):
            if path.is_file() and SENTINEL.encode("utf-8") in path.read_bytes():
                leaks.append(str(path))
        report(not leaks, f"shadow leakage: sentinel found in {len(leaks)} output files")


class TestExportRoundTrip:
    def test_ten_thousand_generated_items(self):
        """10k generated dialogues round-trip exactly; target shares match."""
        from samhita.validate import QaItem, QaType, Turn

        rng = random.Random(2025)
        alphabet = "abcdef ghij क खग ाीु ।॥ 012 .,:!?'-"
        failures = 0
        for i in range(10_000):
            n_pairs = rng.randrange(1, 4)
            turns = []
            for _ in range(n_pairs):
                turns.append(Turn("user", _payload(rng, alphabet)))
                turns.append(Turn("assistant", _payload(rng, alphabet)))
            qa_type = rng.choice([QaType.QA_PAIR, QaType.MULTI_TURN, QaType.CONTEXTUAL])
            if qa_type is QaType.MULTI_TURN and n_pairs < 2:
                qa_type = QaType.QA_PAIR
            item = QaItem(
                item_id=f"rt-{i:05d}",
                qa_type=qa_type,
                language="en-Latn",
                domain_id="X",
                turns=tuple(turns),
                support_spans=((0, 1),),
                source="src",
                answer_final=turns[-1].text,
            )
            passage_text = "context body" if qa_type is QaType.CONTEXTUAL else None
            record = render_dialogue(item, passage_text=passage_text)
            parsed = parse_dialogue(record.rendered)
            if parsed.turns != item.turns:
                failures += 1

        shares = target_shares()
        expected = {"qa_pair": 0.267, "objective": 0.189, "multi_turn": 0.318, "contextual": 0.225}
        share_ok = all(abs(shares[k] - v) <= 0.001 for k, v in expected.items())

        records = []
        for qa_type, count in (("qa_pair", 1270), ("objective", 900), ("multi_turn", 1510), ("contextual", 1070)):
            records += [{"qa_type": qa_type, "language": "en-Latn", "domain": "X"}] * count
        fractions = dataset_stats(records).fractions()
        prop_ok = all(abs(fractions[k] - shares[k]) <= 0.001 for k in shares)

        report(
            failures == 0 and share_ok and prop_ok,
            f"export round-trip: {failures}/10000 failures; target shares within 0.001",
        )


def _payload(rng: random.Random, alphabet: str) -> str:
    while True:
        s = "".join(rng.choice(alphabet) for _ in range(rng.randrange(1, 50)))
        if s.strip():
            return s.strip()


class TestEndToEndFixture:
    def test_bundled_corpus_flows_to_dialogues(self, tmp_path):
        """20-page, 3-edition corpus: ledger->export in < 60 s, all types present."""
        shutil.copytree(FIXTURE, tmp_path, dirs_exist_ok=True)
        cfg = PipelineConfig.load(tmp_path / "pipeline.json")
        start = time.monotonic()
        manifests = run_pipeline(cfg)
        elapsed = time.monotonic() - start

        lines = (cfg.out_dir / "dialogue.jsonl").read_text(encoding="utf-8").strip().split("\n")
        header, records = json.loads(lines[0]), [json.loads(l) for l in lines[1:]]
        assert "header" in header
        by_type = {}
        for rec in records:
            by_type[rec["qa_type"]] = by_type.get(rec["qa_type"], 0) + 1
            parse_dialogue(rec["rendered"])  # every shipped record re-parses
        ok = (
            len(manifests) == 8
            and elapsed < 60.0
            and all(by_type.get(t, 0) >= 1 for t in ("qa_pair", "objective", "multi_turn", "contextual"))
        )
        report(ok, f"end-to-end fixture: {len(records)} dialogues {by_type} in {elapsed:.1f}s")
