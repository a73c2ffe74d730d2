import json
import math
import os

import pytest

from geodesic_lab import __version__
from geodesic_lab.errors import EXIT_INCOMPLETE
from geodesic_lab.run import main
from geodesic_lab.store import ReportStore

FOUR_PI = repr(4 * math.pi)


def read_bytes(path):
    with open(path, "rb") as handle:
        return handle.read()


def read_json(path):
    with open(path, "r", encoding="utf-8") as handle:
        return json.load(handle)


# === Argument handling ===

def test_version_flag(capsys):
    assert main(["--version"]) == 0
    assert __version__ in capsys.readouterr().out


def test_missing_command_is_a_usage_error():
    assert main([]) == 2


def test_invalid_parameters_exit_2(data_dir):
    assert main(["spectrum", "--beta", "4", "--alpha", "1"]) == 2
    assert main(["psi", "--norm-bound", "100"]) == 2
    assert main(["spectrum", "--epsilon", "0.3"]) == 2
    assert main(["scan", "--n", "1:3", "--synthetic-area", FOUR_PI]) == 2


def test_missing_eigenvalue_file_names_the_flag(data_dir, caplog):
    missing = str(data_dir / "nope.txt")
    assert main(["zeros", "--eigenvalues", missing]) == 2
    assert "--eigenvalues" in caplog.text


def test_eigenvalues_and_synthetic_zeros_exclude_each_other(data_dir, sample_eigenvalue_path):
    argv = ["zeros", "--eigenvalues", sample_eigenvalue_path, "--synthetic-t-max", "20"]
    assert main(argv) == 2


def test_config_file_and_overrides(data_dir):
    path = data_dir / "lab.json"
    path.write_text(json.dumps({"model": "modular", "norm_bound": 1000.0}))
    assert main(["spectrum", "--config", str(path)]) == 0
    assert os.path.exists(data_dir / "cache" / "spectrum_modular_1000.0.csv")
    assert main(["spectrum", "--config", str(path), "--norm-bound", "500", "--grid", "10:500:5log"]) == 0
    assert os.path.exists(data_dir / "cache" / "spectrum_modular_500.0.csv")


def test_bad_config_files_exit_2(data_dir):
    assert main(["spectrum", "--config", str(data_dir / "absent.json")]) == 2
    broken = data_dir / "broken.json"
    broken.write_text("{model: modular")
    assert main(["spectrum", "--config", str(broken)]) == 2
    unknown = data_dir / "unknown.json"
    unknown.write_text(json.dumps({"modle": "modular"}))
    assert main(["spectrum", "--config", str(unknown)]) == 2


def test_bad_worker_env_exits_2(data_dir, monkeypatch):
    monkeypatch.setenv("LAB_WORKERS", "0")
    assert main(["spectrum", "--model", "modular"]) == 2


# === spectrum ===

def test_spectrum_cache_is_reused_and_reproducible(data_dir, caplog):
    argv = ["spectrum", "--model", "modular", "--norm-bound", "1e4"]
    assert main(argv) == 0
    cache = data_dir / "cache" / "spectrum_modular_10000.0.csv"
    first = read_bytes(cache)

    caplog.clear()
    assert main(argv) == 0
    assert "Reusing spectrum cache" in caplog.text

    os.remove(cache)
    assert main(argv + ["--workers", "3"]) == 0
    assert read_bytes(cache) == first


def test_word_capped_bolza_spectrum_exits_incomplete(data_dir):
    argv = ["spectrum", "--norm-bound", "200", "--grid", "10:200:5log", "--word-cap", "2"]
    assert main(argv) == EXIT_INCOMPLETE


# === zeros ===

def test_zeros_from_sample_file(data_dir, sample_eigenvalue_path):
    assert main(["zeros", "--eigenvalues", sample_eigenvalue_path]) == 0
    meta, rows = ReportStore._read_csv(str(data_dir / "reports" / "zeros.csv"))
    assert meta["trivial"] is True
    assert meta["weyl"]["ratio"] == pytest.approx(13 / (14.72621679 - 0.25))
    assert sum(int(r["multiplicity"]) for r in rows) == 13


def test_synthetic_zeros(data_dir):
    assert main(["zeros", "--synthetic-area", FOUR_PI, "--synthetic-t-max", "20", "--seed", "4"]) == 0
    meta, rows = ReportStore._read_csv(str(data_dir / "reports" / "zeros.csv"))
    assert meta["coverage"] == 20.0
    assert meta["weyl"]["plausible"] is True
    assert float(rows[-1]["gamma"]) <= 20.0


def test_zeros_without_a_source_exit_2(data_dir):
    assert main(["zeros"]) == 2


# === psi ===

def test_psi_profile_is_monotone_and_reproducible(data_dir):
    argv = ["psi", "--model", "modular", "--grid", "2:1e3:25log"]
    assert main(argv) == 0
    path = data_dir / "reports" / "profile_modular.csv"
    first = read_bytes(path)
    meta, rows = ReportStore._read_csv(str(path))
    assert len(rows) == 25
    assert float(rows[0]["x"]) == 2.0 and float(rows[-1]["x"]) == 1000.0
    values = [float(r["psi"]) for r in rows]
    assert values == sorted(values)
    assert meta["provenance"]["complete"] is True

    assert main(argv) == 0
    assert read_bytes(path) == first


# === compare ===

def test_modular_compare_reports_residuals_only(data_dir):
    argv = ["compare", "--model", "modular", "--grid", "5:1e3:30log"]
    assert main(argv) == 0
    _, rows = ReportStore._read_csv(str(data_dir / "reports" / "compare_modular.csv"))
    assert len(rows) == 30
    assert all(r["formula"] == "" and r["lower"] == "" for r in rows)
    for r in rows:
        assert float(r["residual"]) == pytest.approx(float(r["psi_exact"]) - float(r["x"]))
    summary = read_json(data_dir / "reports" / "compare_modular.json")
    assert summary["coefficients"] is None
    assert summary["containment_rate"] is None
    assert summary["points"] == 30
    assert "exponent_fit" in summary


def test_bolza_compare_needs_zero_data(data_dir):
    assert main(["compare", "--norm-bound", "200", "--grid", "20:200:12log"]) == 2


def test_bolza_compare_with_sample_zeros(data_dir, sample_eigenvalue_path):
    argv = ["compare", "--norm-bound", "200", "--grid", "20:200:12log", "--eigenvalues", sample_eigenvalue_path]
    assert main(argv) == 0
    _, rows = ReportStore._read_csv(str(data_dir / "reports" / "compare_bolza.csv"))
    assert len(rows) == 12
    for r in rows:
        assert float(r["formula"]) == pytest.approx((float(r["lower"]) + float(r["upper"])) / 2)
    summary = read_json(data_dir / "reports" / "compare_bolza.json")
    assert summary["sandwich_points"] == 12
    assert 0.0 <= summary["containment_rate"] <= 1.0
    assert summary["coefficients"]["residual_psi1"] <= 1.0 + 1e-12


# === scan ===

def test_scan_writes_reports_and_checks_the_bound(data_dir):
    argv = ["scan", "--synthetic-area", FOUR_PI, "--n", "3:4", "--density", "64"]
    assert main(argv) == 0
    reports = data_dir / "reports"
    assert os.path.exists(reports / "scan_n3_G.json")
    assert os.path.exists(reports / "scan_n4_E.json")
    summary = read_json(reports / "scan_summary.json")
    assert summary["measure_bound"] is not None
    assert len(summary["partial_G"]) == 2
    _, rows = ReportStore._read_csv(str(reports / "scan_summary.csv"))
    assert [r["n"] for r in rows] == ["3", "4"]


def test_single_octave_scan_skips_the_bound(data_dir):
    assert main(["scan", "--synthetic-area", FOUR_PI, "--n", "3", "--density", "64"]) == 0
    assert read_json(data_dir / "reports" / "scan_summary.json")["measure_bound"] is None


def test_scan_refuses_shallow_zero_data(data_dir, caplog):
    argv = ["scan", "--synthetic-area", FOUR_PI, "--synthetic-t-max", "30", "--n", "3:5", "--density", "64"]
    assert main(argv) == 1
    assert "max feasible n is 3" in caplog.text


# === thm2 ===

def test_thm2_on_synthetic_zeros(data_dir):
    argv = ["thm2", "--norm-bound", "200", "--grid", "30:120:8log", "--synthetic-area", FOUR_PI,
            "--n", "3:4", "--density", "64"]
    assert main(argv) == 0
    _, rows = ReportStore._read_csv(str(data_dir / "reports" / "thm2_bolza.csv"))
    assert len(rows) == 8
    for r in rows:
        assert r["case"] in ("I", "II")
        assert r["exceptional"] in ("0", "1")
        assert float(r["exact_lower"]) <= float(r["psi"]) <= float(r["exact_upper"])
    summary = read_json(data_dir / "reports" / "thm2_bolza.json")
    assert summary["points"] == 8
    assert summary["non_exceptional"] <= 8


def test_thm2_needs_a_compact_model(data_dir):
    argv = ["thm2", "--model", "modular", "--synthetic-area", FOUR_PI, "--n", "3:4", "--density", "64"]
    assert main(argv) == 2
