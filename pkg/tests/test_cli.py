import json

import numpy as np
import pytest

from attnrank.cli import main
from attnrank.core import RelevanceJudgments
from attnrank.dump import DumpStore
from attnrank.synth import SynthConfig, gen_synthetic_query
from tests.test_dump import make_dump


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture()
def synth_dumps(tmp_path):
    """Small synthetic corpus exported as ICRA files plus qrels text."""
    cfg = SynthConfig(num_layers=8, num_docs=12, num_queries=4, peak_layer=5,
                      num_heads=8, query_token_count=8, seed=21)
    store = DumpStore(tmp_path / "dumps")
    grades = {}
    for qi in range(cfg.num_queries):
        real, null, qrels = gen_synthetic_query(cfg, qi)
        store.save_pair(real, null)
        grades.update(qrels.grades)
    qrels_path = tmp_path / "qrels.txt"
    qrels_path.write_text(
        "\n".join(f"{q} 0 {d} {g}" for (q, d), g in sorted(grades.items())) + "\n"
    )
    return store.root, qrels_path, cfg


class TestSelectInterval:
    def test_llama_row_prints_15_18(self, capsys):
        code, out, _ = run_cli(capsys, "select-interval", "--peaks", "18",
                               "--layers", "32", "-w", "4")
        assert code == 0
        assert out.splitlines()[0] == "15 18"

    def test_multi_peak_row(self, capsys):
        code, out, _ = run_cli(capsys, "select-interval", "--peaks", "18,21",
                               "--layers", "36", "-w", "4")
        assert code == 0
        assert out.splitlines()[0] == "18 21"

    def test_trace_mentions_direction(self, capsys):
        _, out, _ = run_cli(capsys, "select-interval", "--peaks", "10",
                            "--layers", "28", "-w", "4")
        assert out.splitlines()[0] == "10 13"
        assert "earlier half" in out


class TestEval:
    def test_ideal_run_scores_one(self, tmp_path, capsys):
        (tmp_path / "qrels.txt").write_text("q1 0 a 2\nq1 0 b 1\n")
        (tmp_path / "run.txt").write_text("q1 Q0 a 1 2.0 t\nq1 Q0 b 2 1.0 t\n")
        code, out, _ = run_cli(capsys, "eval", "--run", str(tmp_path / "run.txt"),
                               "--qrels", str(tmp_path / "qrels.txt"))
        assert code == 0
        assert "nDCG@10 = 1.0000" in out

    def test_missing_file_exits_1(self, tmp_path, capsys):
        code, _, err = run_cli(capsys, "eval", "--run", str(tmp_path / "nope.txt"),
                               "--qrels", str(tmp_path / "nope.txt"))
        assert code == 1
        assert "nope.txt" in err

    def test_unknown_flag_exits_2(self, capsys):
        with pytest.raises(SystemExit) as err:
            main(["eval", "--run", "x", "--qrels", "y", "--frobnicate"])
        assert err.value.code == 2


class TestScoreAndRank:
    def test_score_writes_run(self, synth_dumps, tmp_path, capsys):
        dumps, qrels, cfg = synth_dumps
        out_file = tmp_path / "run.txt"
        code, _, _ = run_cli(capsys, "score", "--dumps", str(dumps),
                             "--interval", "all", "--tag", "t", "--out", str(out_file))
        assert code == 0
        lines = out_file.read_text().strip().split("\n")
        assert len(lines) == cfg.num_queries * cfg.num_docs
        assert lines[0].split()[1] == "Q0"

    def test_score_reproducible_byte_identical(self, synth_dumps, tmp_path, capsys):
        dumps, _, _ = synth_dumps
        a, b = tmp_path / "a.txt", tmp_path / "b.txt"
        run_cli(capsys, "score", "--dumps", str(dumps), "--interval", "2:5",
                "--tag", "t", "--out", str(a))
        run_cli(capsys, "score", "--dumps", str(dumps), "--interval", "2:5",
                "--tag", "t", "--out", str(b))
        assert a.read_bytes() == b.read_bytes()

    def test_parallel_jobs_output_identical_to_serial(self, synth_dumps, tmp_path, capsys):
        dumps, _, _ = synth_dumps
        serial, parallel = tmp_path / "s.txt", tmp_path / "p.txt"
        run_cli(capsys, "score", "--dumps", str(dumps), "--interval", "all",
                "--tag", "t", "--jobs", "1", "--out", str(serial))
        run_cli(capsys, "score", "--dumps", str(dumps), "--interval", "all",
                "--tag", "t", "--jobs", "4", "--out", str(parallel))
        assert serial.read_bytes() == parallel.read_bytes()

    def test_rank_attention_all_equals_score(self, synth_dumps, tmp_path, capsys):
        dumps, _, _ = synth_dumps
        a, b = tmp_path / "score.txt", tmp_path / "rank.txt"
        run_cli(capsys, "score", "--dumps", str(dumps), "--interval", "all",
                "--tag", "same", "--out", str(a))
        code, _, _ = run_cli(capsys, "rank", "--dumps", str(dumps),
                             "--framework", "single", "--scorer", "attention",
                             "--interval", "all", "--tag", "same", "--out", str(b))
        assert code == 0
        assert a.read_text().split() == b.read_text().split()

    def test_rank_heapsort_synthetic(self, synth_dumps, tmp_path, capsys):
        dumps, qrels, cfg = synth_dumps
        out_file = tmp_path / "run.txt"
        stats_file = tmp_path / "stats.csv"
        code, _, _ = run_cli(capsys, "rank", "--dumps", str(dumps),
                             "--framework", "heapsort:3,5", "--scorer", "synthetic",
                             "--qrels", str(qrels), "--tag", "hs",
                             "--out", str(out_file), "--stats-out", str(stats_file))
        assert code == 0
        stats_lines = stats_file.read_text().strip().split("\n")
        assert stats_lines[0] == "query_id,oracle_calls,forward_passes,docs_touched"
        assert len(stats_lines) == 1 + cfg.num_queries

    def test_rank_adapter_requires_cmd(self, synth_dumps, capsys):
        dumps, _, _ = synth_dumps
        with pytest.raises(SystemExit, match="adapter"):
            main(["rank", "--dumps", str(dumps), "--framework", "single",
                  "--scorer", "adapter:likelihood"])


class TestSweepPipeline:
    def test_sweep_then_select_contains_planted_peak(self, synth_dumps, tmp_path, capsys):
        dumps, qrels, cfg = synth_dumps
        out_dir = tmp_path / "curves"
        code, out, _ = run_cli(capsys, "sweep", "--dumps", str(dumps),
                               "--qrels", str(qrels), "--dataset-id", "toy",
                               "--out-dir", str(out_dir))
        assert code == 0
        csvs = sorted(out_dir.glob("*.csv"))
        assert len(csvs) == 1
        code, out, _ = run_cli(capsys, "select-interval", "--curves", str(csvs[0]),
                               "--layers", str(cfg.num_layers), "-w", "4")
        assert code == 0
        lo, hi = map(int, out.splitlines()[0].split())
        assert lo <= cfg.peak_layer <= hi

    def test_export_curves_svg(self, tmp_path, capsys):
        csv_path = tmp_path / "c.csv"
        csv_path.write_text("layer_index,metric\n0,0.1\n1,0.5\n2,0.2\n")
        out = tmp_path / "c.svg"
        code, _, _ = run_cli(capsys, "export-curves", "--curves", str(csv_path),
                             "--out", str(out))
        assert code == 0
        svg = out.read_text()
        assert svg.startswith("<svg") and "polyline" in svg


class TestSimulate:
    def test_simulate_outputs(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({
            "num_layers": 8, "num_docs": 10, "num_queries": 5, "peak_layer": 4,
            "num_heads": 8, "query_token_count": 8, "seed": 5,
        }))
        out = tmp_path / "study.csv"
        code, _, _ = run_cli(capsys, "simulate", "--synth-config", str(cfg_path),
                             "--policies", "all,peak", "--out", str(out))
        assert code == 0
        lines = out.read_text().strip().split("\n")
        assert len(lines) == 3

    def test_simulate_reproducible_and_exports(self, tmp_path, capsys):
        args = ["simulate", "--num-layers", "8", "--num-docs", "10",
                "--num-queries", "4", "--peak-layer", "4", "--seed", "3",
                "--policies", "all"]
        outs = []
        for name in ("x.csv", "y.csv"):
            out = tmp_path / name
            code, _, _ = run_cli(capsys, *args, "--out", str(out))
            assert code == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_simulate_config_flag_override(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({
            "num_layers": 8, "num_docs": 10, "num_queries": 5, "peak_layer": 4,
            "num_heads": 8, "query_token_count": 8, "seed": 5,
        }))
        dumps_out = tmp_path / "dumps"
        code, out, _ = run_cli(capsys, "simulate", "--synth-config", str(cfg_path),
                               "--num-queries", "2", "--policies", "all",
                               "--dumps-out", str(dumps_out),
                               "--qrels-out", str(tmp_path / "q.txt"))
        assert code == 0
        assert len(list(dumps_out.glob("*.icra"))) == 4  # 2 queries x (real, null)
        assert (tmp_path / "q.txt").exists()
