"""Tests for the ``occupation-estimator`` command line."""

import json
from pathlib import Path

import pytest

from occupation_estimator import __version__
from occupation_estimator.cli import build_parser, main
from occupation_estimator.io import load_estimate_record, load_path


def _simulate(tmp_path: Path, name: str = "path.csv", seed: str = "5") -> Path:
    output = tmp_path / name
    code = main(
        [
            "simulate",
            "--density",
            "trig:a1=0.5",
            "--T",
            "2.5",
            "--dt",
            "0.01",
            "--seed",
            seed,
            "--output",
            str(output),
        ]
    )
    assert code == 0
    return output


class TestParser:
    def test_version(self, capsys: pytest.CaptureFixture) -> None:
        with pytest.raises(SystemExit) as exc_info:
            main(["--version"])
        assert exc_info.value.code == 0
        assert __version__ in capsys.readouterr().out

    def test_subcommand_required(self) -> None:
        with pytest.raises(SystemExit):
            build_parser().parse_args([])

    def test_rate_sources_are_exclusive(self) -> None:
        with pytest.raises(SystemExit):
            build_parser().parse_args(["rate", "--config", "a.env", "--preset", "circle-occupation"])


class TestSimulateAndEstimate:
    def test_simulate(self, tmp_path: Path, capsys: pytest.CaptureFixture) -> None:
        output = _simulate(tmp_path)
        assert "251 points over T=2.5" in capsys.readouterr().out
        path = load_path(output)
        assert path.seed == 5
        assert path.density == "trig:a1=0.5"

    def test_simulate_is_reproducible(self, tmp_path: Path) -> None:
        first = load_path(_simulate(tmp_path, "a.npz"))
        second = load_path(_simulate(tmp_path, "b.npz"))
        assert (first.intrinsic == second.intrinsic).all()

    def test_estimate(self, tmp_path: Path, capsys: pytest.CaptureFixture) -> None:
        path = _simulate(tmp_path)
        output = tmp_path / "estimate.json"
        code = main(
            [
                "estimate",
                "--path",
                str(path),
                "--kernel",
                "triangular",
                "--h",
                "0.2",
                "--distance-mode",
                "geodesic",
                "--grid",
                "64",
                "--output",
                str(output),
            ]
        )
        assert code == 0
        assert "h=0.2 positivity_ok=True" in capsys.readouterr().out
        record = load_estimate_record(output)
        assert record.grid_resolution == 64
        assert record.mass == pytest.approx(1.0, abs=1e-6)

    def test_unknown_manifold_is_reported(self, tmp_path: Path, capsys: pytest.CaptureFixture) -> None:
        code = main(["simulate", "--manifold", "klein:c=1", "--T", "1", "--output", str(tmp_path / "x.csv")])
        assert code == 2
        assert "Unknown manifold" in capsys.readouterr().err

    def test_invalid_sde_settings(self, tmp_path: Path, capsys: pytest.CaptureFixture) -> None:
        code = main(["simulate", "--T", "0.1", "--dt", "1", "--output", str(tmp_path / "x.csv")])
        assert code == 2
        assert "Input Error" in capsys.readouterr().err


class TestTransportCommands:
    def test_w2_between_paths(self, tmp_path: Path, capsys: pytest.CaptureFixture) -> None:
        first = _simulate(tmp_path, "a.csv", "1")
        second = _simulate(tmp_path, "b.csv", "2")
        code = main(["w2", "--a", str(first), "--b", str(second)])
        assert code == 0
        result = json.loads(capsys.readouterr().out)
        assert result["cost"] >= 0
        assert "plan" not in result

    def test_w2_missing_file(self, tmp_path: Path, capsys: pytest.CaptureFixture) -> None:
        code = main(["w2", "--a", str(tmp_path / "a.csv"), "--b", str(tmp_path / "b.csv")])
        assert code == 2
        assert "Measure file not found" in capsys.readouterr().err

    def test_peyre(self, tmp_path: Path, capsys: pytest.CaptureFixture) -> None:
        breakdown = tmp_path / "modes.csv"
        code = main(
            [
                "peyre",
                "--p1",
                "trig:a1=0.3",
                "--p2",
                "uniform",
                "--p-min",
                "0.7",
                "--breakdown",
                str(breakdown),
                "--top",
                "2",
            ]
        )
        assert code == 0
        first = capsys.readouterr().out.split()[0]
        assert float(first.split("=")[1]) == pytest.approx(0.006513, abs=1e-6)
        lines = breakdown.read_text(encoding="utf-8").splitlines()
        assert lines[0] == "k,eigenvalue,energy,contribution"
        assert len(lines) == 3


class TestKernelCheck:
    def test_valid_kernel(self, capsys: pytest.CaptureFixture) -> None:
        assert main(["kernel-check", "--kernel", "poly:r=4", "--dimension", "1"]) == 0
        assert "nonneg=False" in capsys.readouterr().out

    def test_normalisers(self, capsys: pytest.CaptureFixture) -> None:
        code = main(
            ["kernel-check", "--kernel", "triangular", "--manifold", "circle:c=1", "--h", "0.1,0.2"]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "eta(h=0.1)" in out
        assert "eta(h=0.2)" in out

    def test_unknown_kernel(self, capsys: pytest.CaptureFixture) -> None:
        assert main(["kernel-check", "--kernel", "cosine"]) == 2
        assert capsys.readouterr().err


class TestExperimentCommands:
    def test_rate_from_config(self, tmp_path: Path, capsys: pytest.CaptureFixture) -> None:
        config = tmp_path / "rate.env"
        config.write_text(
            "T_GRID=2,4,8,16\nREPLICAS=1\nDT=0.02\nW2_N_REF=30\nW2_N_EST=30\n", encoding="utf-8"
        )
        output = tmp_path / "rate.csv"
        code = main(["rate", "--config", str(config), "--output", str(output), "--seed", "4"])
        assert code == 0
        assert "reliable=False" in capsys.readouterr().out
        summary = json.loads(output.with_suffix(".json").read_text(encoding="utf-8"))
        assert summary["config"]["master_seed"] == 4
        assert len(summary["rows"]) == 4

    def test_rate_bad_config(self, tmp_path: Path, capsys: pytest.CaptureFixture) -> None:
        config = tmp_path / "rate.env"
        config.write_text("T_GRID=1,2\n", encoding="utf-8")
        assert main(["rate", "--config", str(config)]) == 2
        assert "Invalid ExperimentConfig" in capsys.readouterr().err

    def test_kl_check(self, tmp_path: Path, capsys: pytest.CaptureFixture) -> None:
        output = tmp_path / "kl.json"
        code = main(["kl-check", "--T", "0.5", "--dt", "0.01", "--replicas", "4", "--output", str(output)])
        assert code == 0
        printed = json.loads(capsys.readouterr().out)
        assert "config" not in printed
        assert json.loads(output.read_text(encoding="utf-8"))["config"]["replicas"] == 4

    def test_minimax(self, tmp_path: Path) -> None:
        output = tmp_path / "minimax.csv"
        code = main(["minimax", "--epsilons", "0.1", "--fractions", "0.5,1", "--pairs", "1", "--output", str(output)])
        assert code == 0
        assert len(output.read_text(encoding="utf-8").splitlines()) == 3
        assert output.with_suffix(".json").is_file()
