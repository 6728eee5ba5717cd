import csv
import io
import json
import math
import subprocess
import sys

import pytest

import reference as ref
from qwsearch.cli import main
from qwsearch.experiments import (
    ConfigError,
    ExperimentConfig,
    cmd_grid_bench,
    cmd_ht,
    cmd_search,
    format_csv,
)
from qwsearch.verify import SUITES


def records(capsys, argv, code=0):
    assert main(argv) == code
    return [json.loads(line) for line in capsys.readouterr().out.splitlines()]


# -- ht ----------------------------------------------------------------------------


def test_ht_on_complete_4():
    rows = cmd_ht(ExperimentConfig(family="complete", size=4, marked=(0,), trials=2000))
    summary = rows[0]
    assert summary["ht_matrix"] == pytest.approx(4.0, abs=1e-12)
    assert summary["ht_spectral"] == pytest.approx(4.0, abs=1e-10)


def test_ht_on_two_state_chain(tmp_path):
    path = tmp_path / "two.chain"
    path.write_text("2\n0.5 0.5\n0.5 0.5\n")
    rows = cmd_ht(ExperimentConfig(family="file", path=str(path), marked=(1,), trials=2000))
    summary = rows[0]
    assert summary["ht_matrix"] == pytest.approx(2.0, abs=1e-12)
    assert abs(summary["ht_spectral"] - summary["ht_matrix"]) <= 1e-10
    curve = [r for r in rows if r["row"] == "curve"]
    assert len(curve) == 11
    assert all(r["abs_error"] <= r["bound"] for r in curve)


def test_ht_monte_carlo_rows(capsys):
    rows = records(capsys, ["ht", "--family", "complete", "--size", "8", "--marked", "2",
                            "--trials", "4000", "--seeds", "0-2"])
    mc = [r for r in rows if r["row"] == "monte_carlo"]
    assert [r["seed"] for r in mc] == [0, 1, 2]
    assert all(abs(r["z_score"]) < 5 for r in mc)


def test_ht_reports_field_name_on_bad_config(capsys):
    assert main(["ht", "--family", "grid", "--size", "1"]) == 2
    assert "size" in capsys.readouterr().err


# -- walk-verify ---------------------------------------------------------------------


def test_walk_verify_two_state(capsys, tmp_path):
    path = tmp_path / "two.chain"
    path.write_text("2\n0.5 0.5\n0.5 0.5\n")
    (rec,) = records(capsys, ["walk-verify", "--family", "file", "--path", str(path),
                              "--marked", "1"])
    assert rec["ok"] and rec["lemma1"]["ok"] and rec["circuit"]["ok"]


def test_walk_verify_torus_4(capsys):
    (rec,) = records(capsys, ["walk-verify", "--family", "grid", "--size", "4", "--marked", "5",
                              "--s", "0.5"])
    assert rec["ok"]
    assert max(rec["unitarity"].values()) <= 1e-9


def test_walk_verify_rejects_substochastic_chain(capsys, tmp_path):
    path = tmp_path / "bad.chain"
    path.write_text("2\n0.49 0.5\n0.5 0.5\n")
    assert main(["walk-verify", "--family", "file", "--path", str(path), "--marked", "1"]) != 0
    assert "row" in capsys.readouterr().err.lower()


def test_walk_verify_capacity(capsys):
    assert main(["walk-verify", "--family", "grid", "--size", "5"]) == 3
    assert "capacity" in capsys.readouterr().err


# -- search --------------------------------------------------------------------------


def test_search_on_torus_8(capsys):
    (rec,) = records(capsys, ["search", "--family", "grid", "--size", "8", "--marked", "27"])
    P = ref.grid_chain(8)
    assert rec["t"] == ref.t_for(ref.hitting_time_matrix(P, ref.mask_of([27], 64)))
    assert rec["p_star"] == pytest.approx(1 / 64)
    assert rec["p_success_exact"] >= 0.05
    assert rec["result"] == 27


def test_search_auto_emits_ledger_per_seed(capsys):
    rows = records(capsys, ["search", "--family", "complete", "--size", "64", "--marked", "9",
                            "--auto", "--mode", "sample", "--seeds", "0-19"])
    assert [r["seed"] for r in rows] == list(range(20))
    for r in rows:
        assert r["result"] == 9
        assert r["ledger"]["update"] == sum(row["ledger"]["update"] for row in r["trace"])


def test_search_htmax_trace_rows(capsys, tmp_path):
    path = tmp_path / "two.chain"
    path.write_text("2\n0.5 0.5\n0.5 0.5\n")
    (rec,) = records(capsys, ["search", "--family", "file", "--path", str(path), "--marked", "1",
                              "--htmax", "2"])
    assert rec["t"] == 1
    assert rec["trace"][0]["p_star"] == 0.5


@pytest.mark.parametrize("argv", [
    ["--auto", "--htmax", "4"],
    ["--auto", "--pmin", "0.1"],
    ["--auto", "--t", "3"],
    ["--t", "3", "--T", "8"],
])
def test_conflicting_search_flags_are_usage_errors(capsys, argv):
    assert main(["search", "--family", "complete", "--size", "4", *argv]) == 2
    capsys.readouterr()


def test_output_is_deterministic(capsys):
    argv = ["search", "--family", "complete", "--size", "16", "--marked", "3", "--auto",
            "--mode", "sample", "--seeds", "0-4"]
    assert main(argv) == 0
    first = capsys.readouterr().out
    assert main(argv) == 0
    assert capsys.readouterr().out == first


def test_every_record_is_attributable(capsys):
    rows = records(capsys, ["search", "--family", "cycle", "--size", "6", "--marked", "0",
                            "--lazy", "--mode", "sample", "--t", "2", "--seeds", "0,1"])
    for r in rows:
        assert r["config"]["family"] == "cycle" and r["config"]["lazy"] is True
        assert r["config"]["marked"] == [0] and "ledger" in r and "seed" in r


def test_config_validation_names_fields():
    with pytest.raises(ConfigError, match="p_star"):
        cmd_search(ExperimentConfig(p_star=0.7))
    with pytest.raises(ConfigError, match="marked"):
        cmd_search(ExperimentConfig(size=4, marked=(9,)))


# -- grid-bench ----------------------------------------------------------------------


def test_grid_bench_side_4():
    (row,) = cmd_grid_bench([4], 1, (0,))
    assert row["status"] == "ok"
    assert row["two_t"] / math.sqrt(row["ht"]) <= 32
    # the torus is vertex-transitive, so any single marked vertex gives the same HT
    expected = ref.hitting_time_matrix(ref.grid_chain(4), ref.mask_of([0], 16))
    assert row["ht"] == pytest.approx(expected, rel=1e-9)


def test_grid_bench_half_marked_needs_no_walk():
    (row,) = cmd_grid_bench([4], 8, (0,))
    assert row["t_min"] == 0
    assert row["p_success"] >= 0.5


def test_grid_bench_skips_oversized_side():
    (row,) = cmd_grid_bench([32], 1, (0,), side_limit=16)
    assert row["status"].startswith("skipped")


def test_grid_bench_csv(capsys):
    assert main(["grid-bench", "--sides", "2,4"]) == 0
    table = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert [r["side"] for r in table] == ["2", "4"]
    assert format_csv([]).strip().split(",")[0] == "side"


# -- verify-all ----------------------------------------------------------------------


@pytest.fixture(scope="module")
def verify_all_clean():
    out = subprocess.run([sys.executable, "-m", "qwsearch.cli", "verify-all"],
                         capture_output=True, text=True)
    return out.returncode, [json.loads(line) for line in out.stdout.splitlines()]


def test_verify_all_passes(verify_all_clean):
    code, rows = verify_all_clean
    failing = [r["suite"] for r in rows if not r["ok"]]
    assert code == 0, failing
    assert rows[-1]["suite"] == "summary" and rows[-1]["failed"] == 0


def test_verify_all_suites_cover_every_module(verify_all_clean):
    _, rows = verify_all_clean
    names = [r["suite"] for r in rows[:-1]]
    assert names == list(SUITES)
    assert {r["module"] for r in rows[:-1]} == {
        "graph_core", "markov_chain", "szegedy_walk", "oracle_circuits", "quantum_search",
        "cli_experiments"}


def test_injected_discriminant_fault_is_isolated(capsys):
    code = main(["verify-all", "--inject-fault", "discriminant"])
    rows = [json.loads(line) for line in capsys.readouterr().out.splitlines()]
    assert code == 1
    failing = {r["suite"] for r in rows if r["suite"] != "summary" and not r["ok"]}
    assert failing == {"markov_chain.discriminant_derivative"}


def test_unknown_suite_is_usage_error(capsys):
    assert main(["verify-all", "--suite", "nope"]) == 2
    capsys.readouterr()


def test_output_dir_variable(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("QWSEARCH_OUTPUT_DIR", str(tmp_path))
    assert main(["ht", "--family", "complete", "--size", "4", "--trials", "100",
                 "-o", "runs/ht.jsonl"]) == 0
    assert capsys.readouterr().out == ""
    lines = (tmp_path / "runs" / "ht.jsonl").read_text().splitlines()
    assert json.loads(lines[0])["ht_matrix"] == pytest.approx(4.0)
