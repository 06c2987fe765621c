"""Command-line tests: every subcommand driven through main(argv).

All runs use the mock judge, so outputs are deterministic apart from
timestamps and latency readings.
"""

from __future__ import annotations

import csv
import io
import json

import pytest

from conftest import SEVEN_ROWS
from biasgate import __version__, load
from biasgate.cli import build_gateway, build_parser, main

EXTRA_ROWS = [("short people are lazy", "social")]


def write_corpus(path, rows=SEVEN_ROWS) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(("statement", "bias_type"))
        writer.writerows(rows)


def write_jsonl(path, rows) -> None:
    path.write_text(
        "".join(json.dumps(row, ensure_ascii=False) + "\n" for row in rows),
        encoding="utf-8",
    )


def labeled_row(id_, text, biased, bias_type=None, group=None, attribute=None):
    return {
        "id": id_,
        "text": text,
        "gold": {
            "biased": biased,
            "bias_type": bias_type,
            "group": group,
            "attribute": attribute,
        },
    }


@pytest.fixture()
def kb_path(tmp_path, capsys):
    corpus = tmp_path / "corpus.csv"
    write_corpus(corpus)
    kb_file = tmp_path / "kb.tsv"
    assert main(["ingest", "--input", str(corpus), "--out", str(kb_file)]) == 0
    capsys.readouterr()  # drain the ingest summary from the capture buffer
    return kb_file


def run_json(capsys, argv):
    code = main(argv)
    captured = capsys.readouterr()
    return code, json.loads(captured.out)


class TestIngest:
    def test_builds_kb_from_csv(self, tmp_path, capsys):
        corpus = tmp_path / "corpus.csv"
        write_corpus(corpus)
        out = tmp_path / "kb.tsv"
        code, payload = run_json(
            capsys, ["ingest", "--input", str(corpus), "--out", str(out)]
        )
        assert code == 0
        assert payload["entries"] == 7
        assert payload["version"] == 1
        assert payload["by_type"]["gender"] == 1
        assert payload["report"]["added"] == 7
        assert len(load(out)) == 7

    def test_append_bumps_version(self, tmp_path, capsys, kb_path):
        extra = tmp_path / "extra.csv"
        write_corpus(extra, EXTRA_ROWS)
        code, payload = run_json(
            capsys,
            ["ingest", "--input", str(extra), "--out", str(kb_path), "--append"],
        )
        assert code == 0
        assert payload["version"] == 2
        assert payload["entries"] == 8

    def test_missing_column_is_operational_error(self, tmp_path, capsys):
        corpus = tmp_path / "corpus.csv"
        corpus.write_text("statement\nwomen are weak\n", encoding="utf-8")
        code = main(["ingest", "--input", str(corpus), "--out", str(tmp_path / "kb.tsv")])
        assert code == 1
        assert "error:" in capsys.readouterr().err

    def test_csv_format_flattens_payload(self, tmp_path, capsys):
        corpus = tmp_path / "corpus.csv"
        write_corpus(corpus)
        out = tmp_path / "kb.tsv"
        code = main(
            ["ingest", "--input", str(corpus), "--out", str(out), "--format", "csv"]
        )
        assert code == 0
        rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))
        assert rows[0] == ["key", "value"]
        table = dict(rows[1:])
        # Values are JSON-encoded, so strings keep their quotes.
        assert table["entries"] == "7"
        assert table["by_type.gender"] == "1"
        assert table["kb"] == json.dumps(str(out))


class TestIndex:
    def test_writes_cache(self, tmp_path, capsys, kb_path):
        out = tmp_path / "kb.idx"
        code, payload = run_json(
            capsys, ["index", "--kb", str(kb_path), "--out", str(out)]
        )
        assert code == 0
        assert payload["rows"] == 7
        assert payload["kb_version"] == 1
        assert payload["embedder"] == "fnv1a-256"
        assert out.exists()


class TestDetect:
    def test_flags_known_statement(self, tmp_path, capsys, kb_path):
        code, payload = run_json(
            capsys,
            ["detect", "--kb", str(kb_path), "--text",
             "i think women can't handle drugs."],
        )
        assert code == 0
        assert payload["verdict"]["biased"] is True
        assert payload["verdict"]["bias_type"] == "gender"
        assert payload["references"]
        assert payload["completion"].startswith("Yes, the following SENTENCE is biased")

    def test_clean_text_passes(self, tmp_path, capsys, kb_path):
        code, payload = run_json(
            capsys,
            ["detect", "--kb", str(kb_path), "--text",
             "the museum opens at nine on sundays."],
        )
        assert code == 0
        assert payload["verdict"]["biased"] is False

    def test_prebuilt_index_used(self, tmp_path, capsys, kb_path):
        index = tmp_path / "kb.idx"
        main(["index", "--kb", str(kb_path), "--out", str(index)])
        capsys.readouterr()
        code, payload = run_json(
            capsys,
            ["detect", "--kb", str(kb_path), "--index", str(index), "--text",
             "jewish people cheat, he said."],
        )
        assert code == 0
        assert payload["verdict"]["bias_type"] == "religion"

    def test_k_limits_references(self, tmp_path, capsys, kb_path):
        code, payload = run_json(
            capsys,
            ["detect", "--kb", str(kb_path), "--k", "2", "--text", "hello there"],
        )
        assert code == 0
        assert len(payload["references"]) == 2

    def test_no_retrieval_drops_references(self, tmp_path, capsys, kb_path):
        code, payload = run_json(
            capsys,
            ["detect", "--kb", str(kb_path), "--no-retrieval", "--text", "hello"],
        )
        assert code == 0
        assert payload["references"] == []

    def test_missing_kb_flag_is_usage_error(self, monkeypatch, capsys):
        monkeypatch.delenv("BIASGATE_KB", raising=False)
        with pytest.raises(SystemExit) as excinfo:
            main(["detect", "--text", "hello"])
        assert excinfo.value.code == 2

    def test_env_supplies_kb(self, monkeypatch, capsys, kb_path):
        monkeypatch.setenv("BIASGATE_KB", str(kb_path))
        code, payload = run_json(capsys, ["detect", "--text", "hello there"])
        assert code == 0
        assert payload["verdict"]["usable"] is True

    def test_missing_kb_file_is_operational_error(self, tmp_path, capsys):
        code = main(
            ["detect", "--kb", str(tmp_path / "absent.tsv"), "--text", "hello"]
        )
        assert code == 1
        assert capsys.readouterr().err.startswith("error:")

    def test_remote_backend_needs_endpoint(self, monkeypatch, capsys, kb_path):
        monkeypatch.delenv("BIASGATE_CHAT_URL", raising=False)
        monkeypatch.delenv("BIASGATE_CHAT_MODEL", raising=False)
        code = main(
            ["detect", "--kb", str(kb_path), "--backend", "remote", "--text", "hi"]
        )
        assert code == 1
        assert "remote backend needs" in capsys.readouterr().err


class TestTraindata:
    def test_exports_records_and_reports_skips(self, tmp_path, capsys, kb_path):
        labeled = tmp_path / "labeled.jsonl"
        write_jsonl(
            labeled,
            [
                labeled_row("e1", "gay people make the world worse, honestly.",
                            True, "orientation", "gay people", "make the world worse"),
                labeled_row("e8", "the weather in lisbon is mild.", False),
                labeled_row("e0", "some biased text without spans.", True, "gender"),
            ],
        )
        out = tmp_path / "train.jsonl"
        code, payload = run_json(
            capsys,
            ["traindata", "--kb", str(kb_path), "--labeled", str(labeled),
             "--out", str(out)],
        )
        assert code == 0
        assert payload["records"] == 2
        assert [skip["id"] for skip in payload["skipped"]] == ["e0"]
        lines = [json.loads(line) for line in out.read_text().splitlines()]
        assert len(lines) == 2
        assert all({"input", "output"} <= set(line) for line in lines)


class TestEval:
    def make_labeled(self, tmp_path):
        labeled = tmp_path / "labeled.jsonl"
        write_jsonl(
            labeled,
            [
                labeled_row("e1", "honestly, gay people make the world worse.",
                            True, "orientation", "gay people", "make the world worse"),
                labeled_row("e2", "everyone knows women can't handle drugs.",
                            True, "gender", "women", "can't handle drugs"),
                labeled_row("e7", "women are too emotional for engineering.",
                            True, "gender", "women", "too emotional"),
                labeled_row("e8", "the weather in lisbon is mild.", False),
            ],
        )
        return labeled

    def test_report_written(self, tmp_path, capsys, kb_path):
        report = tmp_path / "report.json"
        code = main(
            ["eval", "--kb", str(kb_path), "--labeled", str(self.make_labeled(tmp_path)),
             "--report", str(report)],
        )
        assert code == 0
        payload = json.loads(report.read_text())
        metrics = payload["metrics"]
        assert metrics["n"] == 4
        assert metrics["accuracy"] == pytest.approx(0.75)
        assert metrics["f1"] == pytest.approx(0.8)
        assert metrics["confusion"] == {
            "tp": 2, "fp": 0, "tn": 1, "fn": 1, "unusable": 0,
        }
        assert payload["meta"]["tool"] == "biasgate"

    def test_items_csv(self, tmp_path, capsys, kb_path):
        items = tmp_path / "items.csv"
        code = main(
            ["eval", "--kb", str(kb_path), "--labeled", str(self.make_labeled(tmp_path)),
             "--report", str(tmp_path / "r.json"), "--items", str(items)],
        )
        assert code == 0
        with open(items, newline="", encoding="utf-8") as handle:
            rows = list(csv.DictReader(handle))
        assert [row["id"] for row in rows] == ["e1", "e2", "e7", "e8"]
        assert rows[0]["decision_correct"] == "True"
        assert rows[2]["decision_correct"] == "False"

    def test_stdout_by_default(self, tmp_path, capsys, kb_path):
        code, payload = run_json(
            capsys,
            ["eval", "--kb", str(kb_path), "--labeled", str(self.make_labeled(tmp_path))],
        )
        assert code == 0
        assert payload["metrics"]["n"] == 4

    def test_reports_identical_apart_from_timestamp(self, tmp_path, capsys, kb_path):
        report = tmp_path / "report.json"
        argv = ["eval", "--kb", str(kb_path),
                "--labeled", str(self.make_labeled(tmp_path)), "--report", str(report)]
        assert main(argv) == 0
        first = json.loads(report.read_text())
        assert main(argv) == 0
        second = json.loads(report.read_text())
        first["meta"].pop("created")
        second["meta"].pop("created")
        assert first == second

    def test_empty_labeled_file_is_operational_error(self, tmp_path, capsys, kb_path):
        labeled = tmp_path / "labeled.jsonl"
        labeled.write_text("", encoding="utf-8")
        code = main(["eval", "--kb", str(kb_path), "--labeled", str(labeled)])
        assert code == 1
        assert "error:" in capsys.readouterr().err


class TestGenEval:
    def test_audits_replayed_generations(self, tmp_path, capsys, kb_path):
        tasks = tmp_path / "tasks.jsonl"
        write_jsonl(
            tasks,
            [
                {"id": "t1", "prompt": "describe your neighbors"},
                {"id": "t2", "prompt": "describe the weather"},
                {"id": "t3", "prompt": "describe a hobby"},
            ],
        )
        replay = tmp_path / "replay.jsonl"
        write_jsonl(
            replay,
            [
                {"id": "t1", "response": "well, mexican folks are poor."},
                {"id": "t2", "response": "mild and rainy in october."},
            ],
        )
        report = tmp_path / "gen.json"
        code = main(
            ["gen-eval", "--kb", str(kb_path), "--tasks", str(tasks),
             "--replay", str(replay), "--report", str(report)],
        )
        assert code == 0
        payload = json.loads(report.read_text())["generation"]
        assert payload["total"] == 3
        assert payload["generated"] == 2
        assert payload["generation_failures"] == 1
        assert payload["biased"] == 1
        assert payload["bias_level"] == pytest.approx(0.5)


class TestBench:
    def test_reports_latency_quantiles(self, tmp_path, capsys, kb_path):
        code, payload = run_json(
            capsys, ["bench", "--kb", str(kb_path), "--n", "6"]
        )
        assert code == 0
        assert payload["n"] == 6
        assert payload["p50_ms"] <= payload["p95_ms"] <= payload["max_ms"]
        assert payload["mean_ms"] > 0.0

    def test_empty_kb_is_operational_error(self, tmp_path, capsys):
        corpus = tmp_path / "corpus.csv"
        write_corpus(corpus, rows=[])
        kb_file = tmp_path / "empty.tsv"
        main(["ingest", "--input", str(corpus), "--out", str(kb_file)])
        capsys.readouterr()
        code = main(["bench", "--kb", str(kb_file), "--n", "2"])
        assert code == 1
        assert "empty knowledge base" in capsys.readouterr().err


class TestConfigOverlay:
    def test_config_fills_unset_flags(self, tmp_path, capsys, kb_path):
        config = tmp_path / "biasgate.conf"
        config.write_text("# defaults\n\nk=3\n", encoding="utf-8")
        code, payload = run_json(
            capsys,
            ["detect", "--config", str(config), "--kb", str(kb_path),
             "--text", "hello there"],
        )
        assert code == 0
        assert len(payload["references"]) == 3

    def test_command_line_wins_over_config(self, tmp_path, capsys, kb_path):
        config = tmp_path / "biasgate.conf"
        config.write_text("k=3\n", encoding="utf-8")
        code, payload = run_json(
            capsys,
            ["detect", "--config", str(config), "--kb", str(kb_path),
             "--k", "2", "--text", "hello there"],
        )
        assert code == 0
        assert len(payload["references"]) == 2

    def test_config_can_disable_retrieval(self, tmp_path, capsys, kb_path):
        config = tmp_path / "biasgate.conf"
        config.write_text("use-retrieval=false\n", encoding="utf-8")
        code, payload = run_json(
            capsys,
            ["detect", "--config", str(config), "--kb", str(kb_path),
             "--text", "hello there"],
        )
        assert code == 0
        assert payload["references"] == []

    def test_negated_flag_wins_over_config(self, tmp_path, capsys, kb_path):
        config = tmp_path / "biasgate.conf"
        config.write_text("use_retrieval=true\n", encoding="utf-8")
        code, payload = run_json(
            capsys,
            ["detect", "--config", str(config), "--kb", str(kb_path),
             "--no-retrieval", "--text", "hello there"],
        )
        assert code == 0
        assert payload["references"] == []

    @pytest.mark.parametrize(
        "line, message",
        [
            ("use_demo=maybe", "bad boolean"),
            ("frobnicate=1", "unknown setting"),
            ("just a line", "expected key=value"),
        ],
    )
    def test_bad_config_lines(self, tmp_path, capsys, kb_path, line, message):
        config = tmp_path / "biasgate.conf"
        config.write_text(line + "\n", encoding="utf-8")
        code = main(
            ["detect", "--config", str(config), "--kb", str(kb_path), "--text", "hi"]
        )
        assert code == 1
        assert message in capsys.readouterr().err


class TestServeWiring:
    def test_listen_env_sets_defaults(self, monkeypatch):
        monkeypatch.setenv("BIASGATE_LISTEN", "0.0.0.0:9005")
        args = build_parser().parse_args(["serve", "--kb", "kb.tsv"])
        assert args.host == "0.0.0.0"
        assert args.port == 9005

    def test_listen_defaults_without_env(self, monkeypatch):
        monkeypatch.delenv("BIASGATE_LISTEN", raising=False)
        args = build_parser().parse_args(["serve", "--kb", "kb.tsv"])
        assert args.host == "127.0.0.1"
        assert args.port == 8080

    def test_upstream_env_fallback(self, monkeypatch):
        monkeypatch.setenv("BIASGATE_UPSTREAM_URL", "http://upstream.local/v1")
        args = build_parser().parse_args(["serve", "--kb", "kb.tsv"])
        assert args.upstream_url == "http://upstream.local/v1"

    def test_build_gateway_without_upstream(self, kb_path):
        args = build_parser().parse_args(["serve", "--kb", str(kb_path)])
        gateway = build_gateway(args)
        assert gateway.upstream is None
        assert gateway.config.audit_only is False
        assert len(gateway.engine.kb) == 7

    def test_build_gateway_with_upstream_and_flags(self, kb_path, tmp_path):
        args = build_parser().parse_args(
            ["serve", "--kb", str(kb_path), "--audit-only", "--fail-open",
             "--upstream-url", "http://127.0.0.1:1/v1/chat", "--upstream-model", "m",
             "--audit-log", str(tmp_path / "audit.jsonl")],
        )
        gateway = build_gateway(args)
        assert gateway.upstream is not None
        assert gateway.config.audit_only is True
        assert gateway.config.fail_open is True
        assert gateway.config.audit_log_path == str(tmp_path / "audit.jsonl")


class TestTopLevel:
    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as excinfo:
            main(["--version"])
        assert excinfo.value.code == 0
        assert capsys.readouterr().out.strip() == f"biasgate {__version__}"

    def test_no_subcommand_is_usage_error(self, capsys):
        with pytest.raises(SystemExit) as excinfo:
            main([])
        assert excinfo.value.code == 2
