import json
import shutil
from pathlib import Path

import pytest
from click.testing import CliRunner

from samhita import jsonl
from samhita.cli import main

FIXTURE = Path(__file__).parent / "fixtures" / "corpus"


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def corpus(tmp_path):
    shutil.copytree(FIXTURE, tmp_path, dirs_exist_ok=True)
    return tmp_path


class TestLedgerCli:
    def test_partition(self, runner, corpus):
        result = runner.invoke(
            main,
            [
                "ledger", "partition",
                "--in", str(corpus / "catalog.jsonl"),
                "--out-trainable", str(corpus / "t.jsonl"),
                "--out-shadow", str(corpus / "s.jsonl"),
            ],
        )
        assert result.exit_code == 0, result.output
        assert "trainable: 2" in result.output
        shadow = list(jsonl.read_jsonl(corpus / "s.jsonl"))
        assert shadow[0]["shadow"] is True


class TestNormalizeCli:
    def test_run(self, runner, corpus):
        out = corpus / "passages.jsonl"
        result = runner.invoke(
            main,
            ["normalize", "run", "--in", str(corpus / "pages"), "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
        passages = list(jsonl.read_jsonl(out))
        assert passages
        assert all(p["lang"] for p in passages)


class TestOcrqaCli:
    def test_run(self, runner, corpus):
        out = corpus / "quality.jsonl"
        result = runner.invoke(
            main,
            ["ocrqa", "run", "--in", str(corpus / "pages"), "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
        report = list(jsonl.read_jsonl(out))
        assert {"accept", "exclude"} <= {r["route"] for r in report} or report


class TestDedupCli:
    def test_run(self, runner, corpus):
        out = corpus / "clusters.jsonl"
        result = runner.invoke(
            main,
            ["dedup", "run", "--pages", str(corpus / "pages"), "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
        clusters = list(jsonl.read_jsonl(out))
        assert any(len(c["members"]) > 1 for c in clusters)


class TestBenchCli:
    def test_report_and_combine(self, runner, tmp_path):
        gold = tmp_path / "gold.jsonl"
        pred = tmp_path / "pred.jsonl"
        jsonl.write_jsonl(
            gold,
            [
                {"question_id": "q1", "language": "en", "difficulty": "Easy", "qtype": "MCQ", "gold": "A"},
                {"question_id": "q2", "language": "hi", "difficulty": "Hard", "qtype": "MCQ", "gold": "B"},
            ],
        )
        jsonl.write_jsonl(
            pred,
            [
                {"question_id": "q1", "prediction": "A"},
                {"question_id": "q2", "prediction": "C"},
            ],
        )
        result = runner.invoke(
            main, ["bench", "report", "--gold", str(gold), "--pred", str(pred), "--facet", "language"]
        )
        assert result.exit_code == 0, result.output
        assert "100.00" in result.output
        assert "0.00" in result.output

        combined = runner.invoke(main, ["bench", "combine", "41.12:9348", "38.04:5615"])
        assert combined.exit_code == 0
        assert combined.output.strip() == "39.96"


class TestPipelineCli:
    def test_dry_run(self, runner, corpus):
        result = runner.invoke(
            main, ["pipeline", "run", "--config", str(corpus / "pipeline.json"), "--dry-run"]
        )
        assert result.exit_code == 0, result.output
        assert "config valid" in result.output
        assert not (corpus / "out").exists()

    def test_full_run(self, runner, corpus):
        result = runner.invoke(
            main, ["pipeline", "run", "--config", str(corpus / "pipeline.json")]
        )
        assert result.exit_code == 0, result.output
        assert (corpus / "out" / "dialogue.jsonl").exists()


class TestValidateCli:
    def test_stub_generation_run(self, runner, corpus):
        # produce tagged passages first
        passages = corpus / "passages.jsonl"
        runner.invoke(main, ["normalize", "run", "--in", str(corpus / "pages"), "--out", str(passages)])
        out = corpus / "decisions.jsonl"
        result = runner.invoke(
            main,
            [
                "validate", "run",
                "--passages", str(passages),
                "--judge", "stub",
                "--out", str(out),
            ],
        )
        assert result.exit_code == 0, result.output
        decisions = list(jsonl.read_jsonl(out))
        assert decisions
        assert {"route", "coverage", "overlap", "rules"} <= set(decisions[0])


class TestExportCli:
    def test_round_trip_file(self, runner, corpus):
        runner.invoke(main, ["pipeline", "run", "--config", str(corpus / "pipeline.json")])
        out = corpus / "redone.jsonl"
        stats = corpus / "redone_stats.json"
        result = runner.invoke(
            main,
            [
                "export", "run",
                "--items", str(corpus / "out" / "items.jsonl"),
                "--decisions", str(corpus / "out" / "decisions.jsonl"),
                "--passages", str(corpus / "out" / "selection.jsonl"),
                "--out", str(out),
                "--stats", str(stats),
            ],
        )
        assert result.exit_code == 0, result.output
        lines = out.read_text(encoding="utf-8").strip().split("\n")
        header = json.loads(lines[0])
        assert "header" in header
        from samhita.export import parse_dialogue

        for line in lines[1:]:
            rec = json.loads(line)
            parsed = parse_dialogue(rec["rendered"])
            assert parsed.turns


class TestAuditSampleCli:
    def test_sample(self, runner, corpus):
        runner.invoke(main, ["pipeline", "run", "--config", str(corpus / "pipeline.json")])
        out = corpus / "tasks.jsonl"
        result = runner.invoke(
            main,
            [
                "audit", "sample",
                "--items", str(corpus / "out" / "audit_input.jsonl"),
                "--n", "2",
                "--seed", "5",
                "--out", str(out),
            ],
        )
        assert result.exit_code == 0, result.output
        tasks = list(jsonl.read_jsonl(out))
        assert tasks
