"""Config resolution and end-to-end command-line behavior: strict schemas,
run directory contents, exit codes, and the density report."""

import csv
import json

import numpy as np
import pytest

from kflow.cli import main
from kflow.config import load_json, resolve_run_config, resolve_sweep_spec
from kflow.diagnostics import SERIES_HEADER, read_series
from kflow.errors import ConfigError


def _base_config(out_dir, **flow):
    flow_doc = {"t_end": 0.02}
    flow_doc.update(flow)
    return {
        "model": "flat-C2",
        "surface": {"family": "round-sphere", "params": {"radius": 1.0}, "nu": 16, "nv": 8},
        "flow": flow_doc,
        "output_dir": str(out_dir),
    }


def _write(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


class TestResolve:
    def test_defaults_materialized(self):
        resolved = resolve_run_config(_base_config("out"))
        assert resolved["flow"]["cfl_factor"] == 0.2
        assert resolved["flow"]["converged_H_tol"] == 1e-4
        assert resolved["density"] == {"eps0": 0.1, "monitor": False, "r0": None}
        assert resolved["surface"]["params"]["center"] == [0.0, 0.0, 0.0, 0.0]
        assert resolved["seed"] == 0

    @pytest.mark.parametrize(
        "mutate",
        [
            lambda d: d.update(typo=1),
            lambda d: d["surface"].update(shape="big"),
            lambda d: d["flow"].update(dt=0.1),
            lambda d: d["surface"]["params"].update(radius2=1.0),
        ],
    )
    def test_unknown_keys_rejected_at_every_level(self, mutate):
        doc = _base_config("out")
        mutate(doc)
        with pytest.raises(ConfigError):
            resolve_run_config(doc)

    def test_missing_required_keys(self):
        doc = _base_config("out")
        del doc["flow"]["t_end"]
        with pytest.raises(ConfigError, match="t_end"):
            resolve_run_config(doc)
        doc = _base_config("out")
        del doc["output_dir"]
        with pytest.raises(ConfigError):
            resolve_run_config(doc)

    def test_family_model_compatibility(self):
        doc = _base_config("out")
        doc["surface"]["family"] = "cp1"
        doc["surface"]["params"] = {}
        with pytest.raises(ConfigError, match="requires model"):
            resolve_run_config(doc)

    def test_grid_floor(self):
        doc = _base_config("out")
        doc["surface"]["nu"] = 4
        with pytest.raises(ConfigError, match="at least 8"):
            resolve_run_config(doc)

    def test_sweep_spec_validation(self):
        base = {
            "model": "Fubini-Study-CP2",
            "surface": {"family": "perturbed-cp1", "nu": 16, "nv": 8},
            "flow": {"t_end": 0.1},
            "output_dir": "sweep-out",
        }
        spec = resolve_sweep_spec({"base": base, "deltas": [0.01, 0.05]})
        assert spec["deltas"] == [0.01, 0.05]
        assert spec["eps0"] == 0.1
        with pytest.raises(ConfigError, match="ascending"):
            resolve_sweep_spec({"base": base, "deltas": [0.05, 0.01]})
        bad = json.loads(json.dumps(base))
        bad["surface"] = {"family": "round-sphere", "nu": 16, "nv": 8}
        bad["model"] = "flat-C2"
        with pytest.raises(ConfigError, match="perturbed-cp1"):
            resolve_sweep_spec({"base": bad, "deltas": [0.01]})

    def test_load_json_errors(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_json(tmp_path / "missing.json")
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        with pytest.raises(ConfigError, match="not valid JSON"):
            load_json(bad)


class TestRunCommand:
    def test_run_directory_contents(self, tmp_path):
        out = tmp_path / "run"
        cfg = _write(tmp_path / "cfg.json", _base_config(out))
        assert main(["run", cfg]) == 0

        resolved = json.loads((out / "config.resolved.json").read_text())
        assert resolved["flow"]["cfl_factor"] == 0.2

        lines = (out / "series.csv").read_text().splitlines()
        assert lines[0] == ",".join(SERIES_HEADER)
        series = read_series(out / "series.csv")
        assert series[0].t == 0.0

        summary = json.loads((out / "summary.json").read_text())
        assert summary["stop_reason"] in ("reached-t-end", "converged")
        assert summary["holomorphicity_gap"] is not None
        assert "series_summary" in summary

        snaps = sorted((out / "snapshots").glob("t_*.json"))
        assert snaps and summary["n_snapshots"] == len(snaps)
        assert not (out / "error.json").exists()

    def test_config_error_exit_code_and_error_json(self, tmp_path):
        out = tmp_path / "bad-run"
        doc = _base_config(out)
        doc["flow"]["cfl_factor"] = 2.0
        cfg = _write(tmp_path / "bad.json", doc)
        assert main(["run", cfg]) == 1
        err = json.loads((out / "error.json").read_text())
        assert err["error"] == "ConfigError"

    def test_blowup_exit_code(self, tmp_path):
        out = tmp_path / "blow"
        doc = _base_config(out, t_end=0.3, diagnostics_stride=1)
        doc["flow"]["blowup_threshold"] = 50.0
        cfg = _write(tmp_path / "blow.json", doc)
        # sphere extinction at t = 0.25 < t_end: supA must cross the threshold
        assert main(["run", cfg]) == 2
        err = json.loads((out / "error.json").read_text())
        assert err["message"] == "blowup-flag"

    def test_output_root_env_override(self, tmp_path, monkeypatch):
        monkeypatch.setenv("KFLOW_OUTPUT_ROOT", str(tmp_path))
        cfg = _write(tmp_path / "cfg.json", _base_config("rel-run"))
        assert main(["run", cfg]) == 0
        assert (tmp_path / "rel-run" / "summary.json").exists()

    def test_runs_are_reproducible(self, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        main(["run", _write(tmp_path / "c1.json", _base_config(out1))])
        main(["run", _write(tmp_path / "c2.json", _base_config(out2))])
        assert (out1 / "series.csv").read_text() == (out2 / "series.csv").read_text()


class TestDensityCommand:
    @pytest.fixture()
    def run_dir(self, tmp_path):
        out = tmp_path / "run"
        doc = _base_config(out, t_end=0.02, snapshot_stride=5)
        main(["run", _write(tmp_path / "cfg.json", doc)])
        return out

    def test_monitor_report(self, run_dir):
        assert main(["density", str(run_dir)]) == 0
        with open(run_dir / "density_report.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert rows
        assert set(rows[0]) == {"x0_index", "t0", "r", "t_used", "phi"}
        assert all(float(r["phi"]) < 1.1 for r in rows)

    def test_explicit_queries_with_uncomputable_row(self, run_dir, tmp_path):
        queries = [
            {"x0": [0.0, 0.0, 1.0, 0.0], "chart": 0, "t0": 0.05, "r": 0.1},
            {"x0": [0.0, 0.0, 1.0, 0.0], "chart": 0, "t0": 0.001, "r": 0.5},
        ]
        qpath = _write(tmp_path / "q.json", queries)
        assert main(["density", str(run_dir), "--queries", qpath]) == 0
        with open(run_dir / "density_report.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert float(rows[0]["phi"]) > 0
        # no snapshot exists at t <= t0 - r^2 for the second query
        assert rows[1]["phi"] == "not-computable"

    def test_missing_snapshots_fails(self, tmp_path):
        assert main(["density", str(tmp_path / "nope")]) == 1


def test_verify_quick_battery_passes(capsys):
    assert main(["verify", "--level", "quick"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out
    assert "all checks passed" in out
