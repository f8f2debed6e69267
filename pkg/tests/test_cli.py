"""End-to-end tests of the command-line interface (in-process)."""

import json

import numpy as np
import pytest

from scenopt.cli import main


def run_config(tmp_path, override, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(override))
    return path


def interval_config(tmp_path, out="out", **extra):
    cfg = {
        "problem": {"name": "interval_cover"},
        "scenarios": {"generator": "uniform-box", "n": 12, "seed": 3},
        "formulation": {"kind": "worst-case", "rho": 100.0, "gamma": 1.0},
        "solver": {"multistart": 2, "inner_maxiter": 200},
        "analysis": {"n_test": 2000, "m_prime": 50, "gammas": [0.95], "seed": 9},
        "output_dir": str(tmp_path / out),
        "seed": 3,
    }
    cfg.update(extra)
    return run_config(tmp_path, cfg)


class TestTemplate:
    def test_prints_valid_json(self, capsys):
        assert main(["template"]) == 0
        data = json.loads(capsys.readouterr().out)
        assert "formulation" in data and "solver" in data

    def test_writes_file(self, tmp_path):
        target = tmp_path / "cfg.json"
        assert main(["template", "--output", str(target)]) == 0
        assert json.loads(target.read_text())["problem"]["name"] == "enclosure"


class TestDesign:
    def test_interval_design_run(self, tmp_path):
        cfg = interval_config(tmp_path)
        assert main(["design", str(cfg)]) == 0
        report = json.loads((tmp_path / "out" / "design_report.json").read_text())
        assert report["status"] == "converged"
        assert report["sigma"] == 0
        assert len(report["theta"]) == 1
        assert report["config_hash"]
        assert (tmp_path / "out" / "theta.csv").exists()
        assert (tmp_path / "out" / "outliers.csv").exists()

    def test_missing_csv_exits_one(self, tmp_path, capsys):
        cfg = interval_config(tmp_path)
        data = json.loads(cfg.read_text())
        data["scenarios"] = {"csv": "missing.csv"}
        cfg.write_text(json.dumps(data))
        assert main(["design", str(cfg)]) == 1

    def test_csv_ingestion(self, tmp_path):
        csv_path = tmp_path / "data.csv"
        csv_path.write_text("d1\n1.0\n2.0\n5.0\n")
        cfg = interval_config(tmp_path, scenarios={"csv": str(csv_path)})
        assert main(["design", str(cfg)]) == 0
        report = json.loads((tmp_path / "out" / "design_report.json").read_text())
        assert report["theta"][0] == pytest.approx(5.0, abs=1e-4)

    def test_enclosure_worst_case_smoke(self, tmp_path):
        cfg = run_config(
            tmp_path,
            {
                "problem": {"name": "enclosure", "params": {"mc_points": 3000, "seed": 4}},
                "scenarios": {"generator": "enclosure-cluster", "n": 8, "seed": 4},
                "formulation": {"kind": "worst-case", "rho": 1000.0, "gamma": 1.0},
                "solver": {"multistart": 2, "inner_maxiter": 150, "max_outer": 20},
                "output_dir": str(tmp_path / "enc"),
                "seed": 4,
            },
        )
        assert main(["design", str(cfg)]) == 0
        report = json.loads((tmp_path / "enc" / "design_report.json").read_text())
        assert report["sigma"] == 0
        assert report["objective"] > 0


class TestAnalyze:
    def test_analysis_deterministic(self, tmp_path):
        cfg = interval_config(tmp_path)
        assert main(["design", str(cfg)]) == 0
        design = tmp_path / "out" / "design_report.json"
        assert main(["analyze", str(cfg), "--design", str(design)]) == 0
        first = (tmp_path / "out" / "analysis.csv").read_text()
        assert main(["analyze", str(cfg), "--design", str(design)]) == 0
        assert (tmp_path / "out" / "analysis.csv").read_text() == first

    def test_ci_contains_analytic_value(self, tmp_path):
        cfg = interval_config(tmp_path, out="out2")
        design = tmp_path / "out2" / "design.json"
        design.parent.mkdir(parents=True, exist_ok=True)
        design.write_text(json.dumps({"theta": [3.0], "objective": 3.0, "sigma": 0}))
        assert main(["analyze", str(cfg), "--design", str(design)]) == 0
        rows = (tmp_path / "out2" / "analysis.csv").read_text().strip().splitlines()
        header, values = rows[0].split(","), rows[1].split(",")
        row = dict(zip(header, values))
        assert float(row["p_nom_lo"]) <= 0.25 <= float(row["p_nom_hi"])

    def test_dimension_mismatch_names_both(self, tmp_path, capsys):
        cfg = interval_config(tmp_path, out="out3")
        design = tmp_path / "bad_design.json"
        design.write_text(json.dumps({"theta": [1.0, 2.0], "objective": 0.0}))
        assert main(["analyze", str(cfg), "--design", str(design)]) == 1
        err = capsys.readouterr().err
        assert "2" in err and "1" in err

    def test_missing_design_file(self, tmp_path):
        cfg = interval_config(tmp_path, out="out4")
        assert main(["analyze", str(cfg), "--design", str(tmp_path / "absent.json")]) == 1

    def test_zero_radius_perturbation_matches_reliability(self, tmp_path):
        cfg = interval_config(tmp_path, out="out5")
        data = json.loads(cfg.read_text())
        data["perturbation"] = {
            "kind": "ball-volume",
            "m": 1,
            "radius_rule": {"type": "constant", "value": 0.5},
        }
        data["analysis"]["gammas"] = [1.0]
        data["analysis"]["m_prime"] = 1
        # radius 0 variant
        data2 = json.loads(json.dumps(data))
        data2["perturbation"]["radius_rule"]["value"] = 0.0
        cfg.write_text(json.dumps(data))
        cfg2 = run_config(tmp_path, data2, name="run2.json")

        design = tmp_path / "out5" / "design.json"
        design.parent.mkdir(parents=True, exist_ok=True)
        design.write_text(json.dumps({"theta": [3.0]}))
        assert main(["analyze", str(cfg), "--design", str(design)]) == 0
        rows = (tmp_path / "out5" / "analysis.csv").read_text().strip().splitlines()
        row = dict(zip(rows[0].split(","), rows[1].split(",")))
        # gamma=1 and m'=1: perturbational failure uses single draws; with
        # radius 0 it must equal the nominal estimate exactly
        data2_out = tmp_path / "out5b"
        data2["output_dir"] = str(data2_out)
        cfg2.write_text(json.dumps(data2))
        assert main(["analyze", str(cfg2), "--design", str(design)]) == 0
        rows2 = (data2_out / "analysis.csv").read_text().strip().splitlines()
        row2 = dict(zip(rows2[0].split(","), rows2[1].split(",")))
        assert row2["p_per_1"] == row2["p_nom"]

    def test_config_hash_embedded(self, tmp_path):
        cfg = interval_config(tmp_path, out="out6")
        design = tmp_path / "out6" / "design.json"
        design.parent.mkdir(parents=True, exist_ok=True)
        design.write_text(json.dumps({"theta": [3.0]}))
        assert main(["analyze", str(cfg), "--design", str(design)]) == 0
        rows = (tmp_path / "out6" / "analysis.csv").read_text().strip().splitlines()
        assert "config_hash" in rows[0]


class TestSequential:
    def test_trace_structure(self, tmp_path):
        cfg = run_config(
            tmp_path,
            {
                "problem": {"name": "interval_cover"},
                "scenarios": {"generator": "uniform-box", "n": 20, "seed": 5},
                "formulation": {"kind": "worst-case", "rho": 100.0, "gamma": 1.0},
                "solver": {"multistart": 2, "inner_maxiter": 150},
                "sequential": {
                    "initial_n": 10,
                    "batch_size": 3,
                    "max_iterations": 6,
                    "pool_size": 200,
                    "target_pf": 0.0,
                },
                "output_dir": str(tmp_path / "seq"),
                "seed": 5,
            },
        )
        assert main(["sequential", str(cfg)]) == 0
        lines = (tmp_path / "seq" / "sequential_trace.csv").read_text().strip().splitlines()
        assert lines[0].startswith("iteration,n_train")
        ns = [int(line.split(",")[1]) for line in lines[1:]]
        assert all(b > a for a, b in zip(ns, ns[1:]))
        if len(ns) > 1:
            assert ns[1] - ns[0] == 3
        report = json.loads((tmp_path / "seq" / "sequential_report.json").read_text())
        assert report["status"] in ("target-met", "max-iterations")


class TestDemoEnclosure:
    def test_fast_demo_structure(self, tmp_path):
        cfg = run_config(
            tmp_path,
            {
                "problem": {"name": "enclosure"},
                "output_dir": str(tmp_path / "demo"),
                "seed": 11,
                "demo": {
                    "mc_points": 2500,
                    "m_robust": 16,
                    "n_small": 10,
                    "skip_table2": True,
                    "multistart": 1,
                    "inner_maxiter": 80,
                    "max_outer": 12,
                },
            },
        )
        assert main(["demo-enclosure", str(cfg)]) == 0
        table = (tmp_path / "demo" / "table1.csv").read_text().strip().splitlines()
        assert table[0] == "design,formulation,m,sigma,J,status,note"
        assert len(table) == 11  # header + 10 designs
        points = (tmp_path / "demo" / "points_theta01.csv").read_text().splitlines()
        assert points[0] == "scenario,point,x1,x2,scenario_is_outlier,point_failed"
        meta = json.loads((tmp_path / "demo" / "demo_meta.json").read_text())
        assert meta["table1_rows"] == 10


class TestDeterminism:
    def test_identical_config_identical_outputs(self, tmp_path):
        cfg_a = interval_config(tmp_path, out="detA")
        cfg_b = interval_config(tmp_path, out="detB")
        assert main(["design", str(cfg_a)]) == 0
        assert main(["design", str(cfg_b)]) == 0
        a = json.loads((tmp_path / "detA" / "design_report.json").read_text())
        b = json.loads((tmp_path / "detB" / "design_report.json").read_text())
        for key in ("theta", "objective", "sigma", "status"):
            assert a[key] == b[key]
        assert (tmp_path / "detA" / "theta.csv").read_text() == (tmp_path / "detB" / "theta.csv").read_text()
