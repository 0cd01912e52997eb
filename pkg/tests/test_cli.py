import json
import subprocess
import sys

import pytest

from rumatch.cli import EXIT_ERROR, EXIT_NONCONVERGENCE, main
from rumatch.lp import read_lp

TWO_SEGMENT = {"shares": [0.25, 0.25, 0.5], "N": 300, "seed": 3,
               "model": {"model": "multisegment", "prices": [[1, 2, 3], [1, 2, 1]]}}
LOGIT = {"shares": [0.5, 0.25, 0.25], "N": 500, "seed": 1, "model": {"model": "logit", "num_alternatives": 3}}


@pytest.fixture
def market_file(tmp_path):
    def write(doc, name="m.json"):
        path = tmp_path / name
        path.write_text(json.dumps(doc))
        return str(path)
    return write


def _json_out(capsys):
    return json.loads(capsys.readouterr().out)


def test_invert_msa_with_trace(market_file, tmp_path, capsys):
    trace = tmp_path / "trace.csv"
    assert main(["invert", "msa", "--market", market_file(TWO_SEGMENT), "--trace", str(trace)]) == 0
    out = _json_out(capsys)
    assert set(out) == {"algorithm", "delta_upper", "step_upper", "delta_lower", "step_lower"}
    assert out["delta_upper"][2] > out["delta_lower"][2] + 1
    assert trace.read_text().startswith("round,eta,excess_0,excess_1,excess_2\n")


def test_invert_msa_upper_only(market_file, capsys):
    assert main(["invert", "msa", "--market", market_file(LOGIT), "--bound", "upper"]) == 0
    assert "delta_lower" not in _json_out(capsys)


def test_invert_auction(market_file, tmp_path, capsys):
    alloc = tmp_path / "alloc.csv"
    dump = tmp_path / "draws.csv"
    args = ["invert", "auction", "--market", market_file(TWO_SEGMENT), "--bounds", "--eps-final", "5e-5",
            "--allocation", str(alloc), "--dump-sample", str(dump)]
    assert main(args) == 0
    out = _json_out(capsys)
    assert out["point_identified"] is False
    assert out["delta_lower"][2] < out["delta_upper"][2]
    assert len(alloc.read_text().splitlines()) == 301
    assert dump.read_text().startswith("consumer,draw_0,draw_1\n")


def test_invert_auction_point_only(market_file, capsys):
    assert main(["invert", "auction", "--market", market_file(LOGIT)]) == 0
    assert set(_json_out(capsys)) == {"delta_point", "algorithm"}


def test_invert_blp(market_file, capsys):
    assert main(["invert", "blp", "--market", market_file(LOGIT), "--lambda", "1.0"]) == 0
    out = _json_out(capsys)
    assert out["residual"] <= 1e-12 and len(out["delta"]) == 3


def test_invert_blp_non_convergence(market_file, capsys):
    code = main(["invert", "blp", "--market", market_file(TWO_SEGMENT), "--lambda", "0.01", "--max-iters", "50"])
    assert code == EXIT_NONCONVERGENCE
    err = json.loads(capsys.readouterr().err)
    assert len(err["last_iterate"]) == 3 and err["diagnostics"]["iterations"] == 50


def test_bad_market_is_an_error(market_file, capsys):
    assert main(["invert", "msa", "--market", market_file({"shares": [1.0], "N": 3})]) == EXIT_ERROR
    assert "missing" in capsys.readouterr().err
    assert main(["invert", "msa", "--market", "/nonexistent.json"]) == EXIT_ERROR


def test_export_lp_files(market_file, tmp_path, capsys):
    a = market_file(LOGIT, "a.json")
    out = tmp_path / "dual.lp"
    assert main(["export", "lp", "--market", a, "-o", str(out)]) == 0
    assert len(read_lp(out).rows) == 500 * 3 + 1
    assert main(["export", "bounds-lp", "--market", a, "--direction", "min"]) == 0
    assert capsys.readouterr().out.splitlines()[1] == "Minimize"
    b = market_file(dict(LOGIT, seed=2), "b.json")
    out = tmp_path / "comb.lp"
    assert main(["export", "combined-lp", "--market", a, "--market", b, "-o", str(out)]) == 0
    assert len(read_lp(out).rows) == 2 * (500 * 3 + 1)
    assert main(["export", "lp", "--market", a, "--market", b]) == EXIT_ERROR


def test_export_multisegment_uses_price_shocks(market_file, capsys):
    assert main(["export", "lp", "--market", market_file(TWO_SEGMENT)]) == 0
    assert "feas_299_2" in capsys.readouterr().out


def test_bench_csv_and_figures(tmp_path, capsys):
    out = tmp_path / "t3.csv"
    figs = tmp_path / "figs"
    code = main(["bench", "table3", "--n", "200", "--reps", "2", "--out", str(out), "--figures", str(figs)])
    assert code == 0
    assert out.read_text().startswith("brand,statistic,mean,std,algorithm,runtime_s\n")
    assert sorted(p.name for p in figs.iterdir()) == ["table3_bounds.png", "table3_gaps.png"]
    assert "non-converged replications: blp: 2/2" in capsys.readouterr().err


def test_bench_strict_exit_code(tmp_path):
    args = ["bench", "table3", "--n", "200", "--reps", "1", "--algos", "blp", "--out", str(tmp_path / "x.csv")]
    assert main(args + ["--strict"]) == EXIT_NONCONVERGENCE
    assert main(args) == 0


def test_bench_config_and_overrides(tmp_path, capsys):
    config = tmp_path / "spec.json"
    config.write_text(json.dumps({"n": 400, "reps": 5, "seed": 2, "algorithms": ["auction"],
                                  "model": {"model": "logit", "num_alternatives": 3},
                                  "shares": [0.4, 0.3, 0.3]}))
    assert main(["bench", "custom", "--config", str(config), "--reps", "1", "--deterministic"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "brand,statistic,mean,std,algorithm,runtime_s"
    assert all(line.endswith(",") for line in lines[1:])
    config.write_text(json.dumps({"n": 400, "wrong": 1}))
    assert main(["bench", "custom", "--config", str(config)]) == EXIT_ERROR


def test_bench_table2_rmse_figure(tmp_path):
    figs = tmp_path / "figs"
    args = ["bench", "table2-inner", "--n", "200", "--reps", "2", "--brands", "3", "--algos", "auction,blp",
            "--out", str(tmp_path / "t2.csv"), "--figures", str(figs)]
    assert main(args) == 0
    assert (figs / "table2-inner_rmse.png").stat().st_size > 0


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "rumatch.cli", "bench", "table4", "--n", "1000", "--reps", "1",
                           "--deterministic"], capture_output=True, text=True, check=True)
    rows = proc.stdout.splitlines()
    assert rows[0] == "brand,statistic,mean,std,algorithm,runtime_s"
    assert any(r.startswith("all,max_mean_gap,") for r in rows)
