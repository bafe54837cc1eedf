from __future__ import annotations

import json

import pytest
from click.testing import CliRunner

from ehrqa import fixtures
from ehrqa.cli import main


@pytest.fixture()
def runner():
    return CliRunner()


class TestAsk:
    def test_golden_answer_and_exit_zero(self, runner, fixtures_dir):
        result = runner.invoke(
            main,
            [
                "ask",
                "--db", str(fixtures_dir / fixtures.MIMIC_DB),
                "--patient", "10001",
                "What was the last aspirin dose for patient 10001?",
            ],
        )
        assert result.exit_code == 0, result.output
        assert "Response: The last aspirin dose for patient 10001 was 325 mg." in result.output
        assert "Rows: 1" in result.output

    def test_insufficient_evidence_still_exits_zero(self, runner, fixtures_dir):
        result = runner.invoke(
            main,
            ["ask", "--db", str(fixtures_dir / fixtures.MIMIC_DB), "--patient", "10004", fixtures.INSUFFICIENT_QUESTION],
        )
        assert result.exit_code == 0, result.output
        assert "insufficient evidence found" in result.output

    def test_missing_db_is_a_usage_error(self, runner):
        result = runner.invoke(main, ["ask", "just a question?"])
        assert result.exit_code != 0
        assert "--db" in result.output

    def test_backend_failure_is_nonzero(self, runner, fixtures_dir, tmp_path):
        script = tmp_path / "empty_script.json"
        script.write_text("[]")
        result = runner.invoke(
            main,
            ["ask", "--db", str(fixtures_dir / fixtures.MIMIC_DB), "--script", str(script), "unanswerable?"],
        )
        assert result.exit_code == 1
        assert "backend failure" in result.output


class TestEval:
    def test_fixture_benchmark_writes_golden_report(self, runner, fixtures_dir, tmp_path):
        out = tmp_path / "report.json"
        result = runner.invoke(
            main,
            [
                "eval",
                "--dataset", str(fixtures_dir / fixtures.BENCHMARK_FILE),
                "--profile", "fixture",
                "--db", str(fixtures_dir / fixtures.MIMIC_DB),
                "--out", str(out),
            ],
        )
        assert result.exit_code == 0, result.output
        assert "accuracy: 20/20" in result.output
        golden = (fixtures_dir / "golden" / "report.json").read_bytes()
        assert out.read_bytes() == golden

    def test_ehrnoteqa_loader_path(self, runner, fixtures_dir, tmp_path):
        out = tmp_path / "report.json"
        result = runner.invoke(
            main,
            [
                "eval",
                "--dataset", str(fixtures_dir / fixtures.EHRNOTEQA_FILE),
                "--profile", "ehrnoteqa",
                "--db", str(fixtures_dir / fixtures.MIMIC_DB),
                "--out", str(out),
            ],
        )
        assert result.exit_code == 0, result.output
        report = json.loads(out.read_text())
        assert report["aggregates"]["total_items"] == 3
        assert report["aggregates"]["correct"] == 3
        assert report["aggregates"]["rouge_l_mean"] == 1.0


class TestDescribeSchema:
    def test_lists_fixture_tables_and_keys(self, runner, fixtures_dir):
        result = runner.invoke(main, ["describe-schema", "--db", str(fixtures_dir / fixtures.MIMIC_DB)])
        assert result.exit_code == 0, result.output
        for table in ("admissions", "labevents", "patients", "prescriptions"):
            assert f"table {table}" in result.output
        assert "foreign key: hadm_id -> admissions.hadm_id" in result.output
        assert "description: (absent)" in result.output


class TestMakeFixtures:
    def test_materializes_into_target_directory(self, runner, tmp_path):
        target = tmp_path / "fx"
        result = runner.invoke(main, ["make-fixtures", "--out", str(target)])
        assert result.exit_code == 0, result.output
        for name in (fixtures.MIMIC_DB, fixtures.OMOP_DB, fixtures.NOTES_FILE, fixtures.BENCHMARK_FILE, fixtures.SCRIPT_FILE):
            assert (target / name).exists()
