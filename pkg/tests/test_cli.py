"""Tests for the command line interface: dispatch, exit codes, artifacts."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from batchtail.cli import dispatch

GOLDEN = Path(__file__).parent / "golden"


def _write_config(path: Path, **overrides) -> Path:
    doc = {
        "policy": {"name": "base_h"},
        "instance": {
            "kind": "finite",
            "arms": [
                {"kind": "two_point_nu", "delta0": 0.25, "delta": 0.2, "epsilon": 1.0},
                {"kind": "two_point_nu", "delta0": 0.25, "delta": 0.0, "epsilon": 1.0},
            ],
        },
        "horizon": 512,
        "grid": {"kind": "minimax", "batches": 3},
        "spec": {"epsilon": 1.0, "v": 1.0, "c": 1.0},
        "replications": 3,
        "base_seed": 5,
    }
    doc.update(overrides)
    path.write_text(json.dumps(doc))
    return path


class TestHelp:
    @pytest.mark.parametrize(
        "args, golden",
        [
            ([], "help_main.txt"),
            (["run"], "help_run.txt"),
            (["sweep"], "help_sweep.txt"),
            (["grid"], "help_grid.txt"),
            (["instances"], "help_instances.txt"),
            (["analyze"], "help_analyze.txt"),
        ],
    )
    def test_help_matches_golden(self, capsys, args, golden):
        assert dispatch([*args, "--help"]) == 0
        assert capsys.readouterr().out == (GOLDEN / golden).read_text()

    def test_bare_invocation_prints_help_as_usage_error(self, capsys):
        assert dispatch([]) == 2
        captured = capsys.readouterr()
        assert "Usage: batchtail" in captured.out + captured.err


class TestUsageErrors:
    def test_unknown_flag(self, capsys):
        assert dispatch(["--bogus"]) == 2
        err = capsys.readouterr().err
        assert "Usage:" in err and "--bogus" in err

    def test_unknown_command(self, capsys):
        assert dispatch(["frobnicate"]) == 2
        assert "Usage:" in capsys.readouterr().err

    def test_missing_required_flag(self, capsys):
        assert dispatch(["grid", "--T", "100"]) == 2
        assert "Usage:" in capsys.readouterr().err


class TestGrid:
    def test_geometric_example(self, capsys):
        assert dispatch(["grid", "--T", "1000000", "--M", "3", "--which", "geometric"]) == 0
        assert capsys.readouterr().out == "[0,100,10000,1000000]\n"

    def test_minimax(self, capsys):
        argv = ["grid", "--T", "1000000", "--M", "2", "--which", "minimax", "--epsilon", "1.0"]
        assert dispatch(argv) == 0
        assert capsys.readouterr().out == "[0,10000,1000000]\n"


class TestRun:
    def test_run_exports_and_reports(self, tmp_path, capsys):
        config = _write_config(tmp_path / "config.json", keep_curve=True)
        out = tmp_path / "out"
        assert dispatch(["run", "--config", str(config), "--out", str(out)]) == 0
        report = json.loads(capsys.readouterr().out)
        names = {p.name for p in out.iterdir()}
        assert {"results.csv", "manifest.json", "curve.csv", "finals.png", "curve.png"} <= names
        manifest = json.loads((out / "manifest.json").read_text())
        assert report["config_hash"] == manifest["config_hash"]
        assert report["replications"] == 3
        assert report["figures"] == ["finals.png", "curve.png"]

    def test_refuses_overwrite_without_force(self, tmp_path, capsys):
        config = _write_config(tmp_path / "config.json")
        out = tmp_path / "out"
        assert dispatch(["run", "--config", str(config), "--out", str(out)]) == 0
        capsys.readouterr()
        assert dispatch(["run", "--config", str(config), "--out", str(out)]) == 2
        assert "--force" in capsys.readouterr().err
        argv = ["run", "--config", str(config), "--out", str(out), "--force"]
        assert dispatch(argv) == 0

    def test_seed_flag_overrides_config(self, tmp_path, capsys):
        config = _write_config(tmp_path / "config.json")
        out = tmp_path / "out"
        argv = ["run", "--config", str(config), "--out", str(out), "--seed", "41"]
        assert dispatch(argv) == 0
        rows = (out / "results.csv").read_text().splitlines()[1:]
        assert [row.split(",")[1] for row in rows] == ["41", "42", "43"]

    def test_jobs_flag_matches_serial(self, tmp_path, capsys):
        config = _write_config(tmp_path / "config.json")
        assert dispatch(["run", "--config", str(config), "--out", str(tmp_path / "a")]) == 0
        argv = ["run", "--config", str(config), "--out", str(tmp_path / "b"), "--jobs", "2"]
        assert dispatch(argv) == 0
        assert (
            (tmp_path / "a" / "results.csv").read_bytes()
            == (tmp_path / "b" / "results.csv").read_bytes()
        )

    def test_jobs_env_default_and_flag_priority(self, tmp_path, capsys, monkeypatch):
        config = _write_config(tmp_path / "config.json")
        monkeypatch.setenv("BATCHTAIL_JOBS", "2")
        assert dispatch(["run", "--config", str(config), "--out", str(tmp_path / "a")]) == 0
        monkeypatch.setenv("BATCHTAIL_JOBS", "zero")
        capsys.readouterr()
        assert dispatch(["run", "--config", str(config), "--out", str(tmp_path / "b")]) == 2
        assert "BATCHTAIL_JOBS" in capsys.readouterr().err
        # an explicit flag wins over a broken environment value
        argv = ["run", "--config", str(config), "--out", str(tmp_path / "c"), "--jobs", "1"]
        assert dispatch(argv) == 0

    def test_config_errors_exit_2(self, tmp_path, capsys):
        out = tmp_path / "out"
        assert dispatch(["run", "--config", str(tmp_path / "no.json"), "--out", str(out)]) == 2
        bad = tmp_path / "bad.json"
        bad.write_text("{ nope }")
        capsys.readouterr()
        assert dispatch(["run", "--config", str(bad), "--out", str(out)]) == 2
        assert "config error" in capsys.readouterr().err


class TestSweep:
    def test_sweep_artifacts(self, tmp_path, capsys):
        config = _write_config(tmp_path / "config.json")
        out = tmp_path / "sweep"
        argv = [
            "sweep", "--config", str(config), "--axis", "T",
            "--values", "256,512", "--out", str(out),
        ]
        assert dispatch(argv) == 0
        report = json.loads(capsys.readouterr().out)
        assert [point["axis_value"] for point in report["points"]] == [256, 512]
        lines = (out / "sweep.csv").read_text().splitlines()
        assert lines[0] == "axis_value,mean_regret,std"
        assert len(lines) == 3
        assert (out / "sweep.png").exists()
        for name in ("T=256", "T=512"):
            assert (out / name / "manifest.json").exists()

    def test_appending_values_preserves_earlier_points(self, tmp_path, capsys):
        config = _write_config(tmp_path / "config.json")
        out = tmp_path / "sweep"
        base = ["sweep", "--config", str(config), "--axis", "T", "--out", str(out)]
        assert dispatch([*base, "--values", "256,512"]) == 0
        first = (out / "T=256" / "results.csv").read_bytes()
        assert dispatch([*base, "--values", "256,512,1024", "--force"]) == 0
        assert (out / "T=256" / "results.csv").read_bytes() == first
        assert (out / "T=1024" / "manifest.json").exists()

    def test_value_validation(self, tmp_path, capsys):
        config = _write_config(tmp_path / "config.json")
        base = ["sweep", "--config", str(config), "--out", str(tmp_path / "s")]
        assert dispatch([*base, "--axis", "T", "--values", "256,abc"]) == 2
        assert dispatch([*base, "--axis", "T", "--values", "256,256"]) == 2
        assert dispatch([*base, "--axis", "Q", "--values", "1"]) == 2
        assert dispatch([*base, "--axis", "epsilon", "--values", ""]) == 2

    def test_epsilon_axis(self, tmp_path, capsys):
        config = _write_config(tmp_path / "config.json")
        out = tmp_path / "sweep"
        argv = [
            "sweep", "--config", str(config), "--axis", "epsilon",
            "--values", "0.5,1.0", "--out", str(out),
        ]
        assert dispatch(argv) == 0
        assert (out / "epsilon=0.5" / "manifest.json").exists()


class TestInstances:
    def test_finite_static_family(self, capsys):
        params = '{"K": 3, "delta": 0.05, "epsilon": 1.0}'
        assert dispatch(["instances", "--family", "finite_static", "--params", params]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert len(doc["instances"]) == 3
        assert all(len(member["arms"]) == 3 for member in doc["instances"])

    def test_lipschitz_family(self, capsys):
        assert dispatch(["instances", "--family", "peak", "--params", '{"d": 2}']) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["instance"]["params"]["d"] == 2

    def test_bad_params(self, capsys):
        assert dispatch(["instances", "--family", "peak", "--params", "not json"]) == 2
        assert dispatch(["instances", "--family", "peak", "--params", "[1]"]) == 2
        assert dispatch(["instances", "--family", "peak", "--params", '{"bogus": 1}']) == 2
        params = '{"K": 3, "delta": 0.05}'
        assert dispatch(["instances", "--family", "finite_static", "--params", params]) == 2


class TestAnalyze:
    def _sweep(self, tmp_path, capsys) -> Path:
        config = _write_config(tmp_path / "config.json")
        out = tmp_path / "sweep"
        argv = [
            "sweep", "--config", str(config), "--axis", "T",
            "--values", "256,512,1024", "--out", str(out),
        ]
        assert dispatch(argv) == 0
        capsys.readouterr()
        return out

    def test_summary_without_fit(self, tmp_path, capsys):
        out = self._sweep(tmp_path, capsys)
        assert dispatch(["analyze", "--results", str(out / "T=*")]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["fit"] is None
        assert [point["horizon"] for point in doc["points"]] == [256, 512, 1024]

    def test_fit_and_artifacts(self, tmp_path, capsys):
        out = self._sweep(tmp_path, capsys)
        fit_dir = tmp_path / "fit"
        argv = ["analyze", "--results", str(out / "T=*"), "--fit", "--out", str(fit_dir)]
        assert dispatch(argv) == 0
        doc = json.loads(capsys.readouterr().out)
        assert 0.0 < doc["fit"]["slope"] < 1.5
        assert (fit_dir / "fit.csv").read_text().splitlines()[0] == "horizon,mean_regret,std"
        assert (fit_dir / "fit.png").exists()

    def test_no_matches_is_config_error(self, tmp_path, capsys):
        assert dispatch(["analyze", "--results", str(tmp_path / "nothing*")]) == 2

    def test_duplicate_horizons_with_fit_is_runtime_error(self, tmp_path, capsys):
        config = _write_config(tmp_path / "config.json")
        for name, seed in (("a", "1"), ("b", "2")):
            argv = [
                "run", "--config", str(config),
                "--out", str(tmp_path / "res" / name), "--seed", seed,
            ]
            assert dispatch(argv) == 0
        capsys.readouterr()
        assert dispatch(["analyze", "--results", str(tmp_path / "res" / "*"), "--fit"]) == 1
        assert "error" in capsys.readouterr().err
