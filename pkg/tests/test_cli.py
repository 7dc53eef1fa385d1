import csv
import json
import math
import subprocess
import sys

import pytest

from walkbell.cli import CoarseConfig, apply_overrides, main
from walkbell.io import fmt, sha256_file


def run(tmp_path, cmd, config=None, *extra):
    args = [cmd, "--out", str(tmp_path / cmd)]
    if config is not None:
        path = tmp_path / f"{cmd}.json"
        path.write_text(config if isinstance(config, str) else json.dumps(config))
        args += ["--config", str(path)]
    return main(args + list(extra)), tmp_path / cmd


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def check_manifest(out):
    man = json.loads((out / "manifest.json").read_text())
    for name, digest in man["outputs"].items():
        assert sha256_file(out / name) == digest
    return man


def test_bad_field_type(tmp_path, capsys):
    code, _ = run(tmp_path, "benchmark", {"T": "sixty"})
    assert code == 2
    assert "'T'" in capsys.readouterr().err


def test_json_syntax_error_names_line(tmp_path, capsys):
    code, _ = run(tmp_path, "coarse", '{\n  "T": 60,\n  "n_trials": ,\n}')
    assert code == 2
    assert "line 3" in capsys.readouterr().err


def test_unknown_field(tmp_path, capsys):
    code, _ = run(tmp_path, "scan-r", {"n_direction": 5})
    assert code == 2
    assert "n_direction" in capsys.readouterr().err


def test_empty_grid(tmp_path, capsys):
    code, _ = run(tmp_path, "scan-r", {"r_grid": []})
    assert code == 2
    assert "r_grid" in capsys.readouterr().err


def test_threshold_out_of_range(tmp_path):
    code, _ = run(tmp_path, "coarse", {"T": 10, "x0_grid": [30], "n_trials": 10})
    assert code == 2


def test_benchmark_default(tmp_path):
    code, out = run(tmp_path, "benchmark", {"n_dirs": 2000})
    assert code == 0
    data = json.loads((out / "benchmark.json").read_text())
    assert data["S_max"] == pytest.approx(2.70, abs=0.005)
    assert data["direction_label"] == "+z"
    assert abs(data["achieved_S"] - data["S_max"]) <= 1e-6
    rows = read_csv(out / "fig4_position_distribution.csv")
    assert list(rows[0]) == ["x", "P"] and len(rows) == 121
    assert sum(float(r["P"]) for r in rows) == pytest.approx(1.0, abs=1e-12)
    man = check_manifest(out)
    assert man["config"]["n_dirs"] == 2000 and man["passed"]


def test_benchmark_one_step(tmp_path):
    code, out = run(tmp_path, "benchmark", {"T": 1, "direction": [0, 0, 1], "n_dirs": 100})
    assert code == 0
    data = json.loads((out / "benchmark.json").read_text())
    assert data["S_max"] == pytest.approx(2 * math.sqrt(2), abs=1e-12)


def test_benchmark_not_found_fails(tmp_path):
    code, out = run(tmp_path, "benchmark", {"target_coeffs": [0.9999, 0.01414], "match_tol": 1e-4})
    assert code == 1
    assert json.loads((out / "benchmark.json").read_text())["found"] is False


def test_scan_r_quantum_point(tmp_path):
    code, out = run(tmp_path, "scan-r", {"r_grid": [0.0], "witness_r_norms": [], "n_dirs": 500})
    assert code == 0
    rows = read_csv(out / "fig2_S_vs_r.csv")
    assert list(rows[0]) == ["r_norm", "best_S", "min_p"]
    assert float(rows[0]["best_S"]) <= 2 * math.sqrt(2)
    check_manifest(out)


def test_scan_r_witness_row(tmp_path):
    code, out = run(tmp_path, "scan-r", {"r_grid": [1.0, 1.45], "n_dirs": 10_000})
    assert code == 0
    rows = read_csv(out / "fig3_minp_vs_r.csv")
    assert float(rows[1]["best_S"]) >= 3.0 and float(rows[1]["min_p"]) > 0
    assert (out / "witness_r1.45.json").exists()


COARSE = {"T": 20, "n_trials": 2000, "seeds": [0, 1]}


def test_coarse_bit_exact_rerun(tmp_path):
    code, out = run(tmp_path, "coarse", COARSE)
    assert code == 0
    first = check_manifest(out)["outputs"]
    assert {"table1_witness.json", "fig5_position_distribution.csv", "coarse_cells.csv"} <= set(first)
    code, out = run(tmp_path, "coarse", COARSE)
    assert check_manifest(out)["outputs"] == first


def test_seed_override(tmp_path):
    code, out = run(tmp_path, "coarse", COARSE, "--seed-override", "10", "--tol", "1e-10")
    assert code == 0
    man = check_manifest(out)
    assert man["seeds"] == [10, 11] and man["config"]["tol"] == 1e-10
    cfg = apply_overrides(CoarseConfig(), 3, None)
    assert cfg.seeds == list(range(3, 11))


def test_finite_time_small(tmp_path):
    code, out = run(tmp_path, "finite-time", {"T_list": [2, 4], "n_trials": 1000, "seeds": [0, 1]})
    assert code == 0
    for name in ("fig6_S_vs_T.csv", "fig6_summary.csv", "fig7_fraction_gt2.csv", "fig8_minp_vs_T.csv"):
        assert (out / name).exists()
    fr = read_csv(out / "fig7_fraction_gt2.csv")
    assert all(0.0 <= float(r["fraction_gt2"]) <= 1.0 for r in fr)
    assert len(read_csv(out / "fig6_S_vs_T.csv")) == 4


def test_emulate_stored_witness(tmp_path):
    code, bout = run(tmp_path, "benchmark", {"n_dirs": 2000})
    assert code == 0
    cfg = {"witness": str(bout / "witness.json"), "shot_budgets": [1000, 10_000, 100_000], "n_repeats": 200}
    code, out = run(tmp_path, "emulate", cfg)
    assert code == 0
    rows = read_csv(out / "emulation_variance.csv")
    assert [int(r["n_shots"]) for r in rows] == [1000, 10_000, 100_000]
    data = json.loads((out / "emulation.json").read_text())
    assert data["closure_error"] <= 1e-12
    code, _ = run(tmp_path, "emulate", {"witness": str(tmp_path / "missing.json")})
    assert code == 2


def test_csv_format_round_trips():
    for v in (0.1, 1 / 3, 2.1025e-4, -1e-300, 3.0972748140862434):
        assert float(fmt(v)) == v
    assert fmt(7) == "7" and fmt(math.nan) == "nan" and fmt(True) == "1"


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "walkbell", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for name in ("benchmark", "scan-r", "coarse", "finite-time", "emulate"):
        assert name in res.stdout
