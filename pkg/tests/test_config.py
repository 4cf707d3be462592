"""Tests for flat KEY=value experiment configuration."""

import logging
from pathlib import Path

import pytest

from occupation_estimator.config import config_from_mapping, load_config
from occupation_estimator.exceptions import InputError
from occupation_estimator.models.estimate import DistanceMode, PositivityMargin, SmoothingMethod
from occupation_estimator.models.experiment import (
    EstimatorMode,
    ExperimentConfig,
    KLCheckConfig,
    MinimaxConfig,
)
from occupation_estimator.models.measure import SolverKind

SAMPLE = """\
# five-dimensional smoothed run
MANIFOLD=torus:d=5,s=1
DENSITY=trig:a1=0.5
T_GRID=256,512,1024,2048
REPLICAS=8
ESTIMATOR_MODE=smoothed
KERNEL=poly:r=4
W2_SOLVER=entropic
W2_N_REF=2000
W2_N_EST=2000
MASTER_SEED=3
"""


@pytest.fixture
def config_file(tmp_path: Path) -> Path:
    path = tmp_path / "experiment.env"
    path.write_text(SAMPLE, encoding="utf-8")
    return path


class TestConfigFromMapping:
    def test_defaults(self) -> None:
        cfg = config_from_mapping(ExperimentConfig, {})
        assert cfg == ExperimentConfig()

    def test_keys_are_case_insensitive(self) -> None:
        cfg = config_from_mapping(ExperimentConfig, {"Replicas": "12", "distance_MODE": "geodesic"})
        assert cfg.replicas == 12
        assert cfg.distance_mode == DistanceMode.GEODESIC

    def test_smoothing_settings(self) -> None:
        cfg = config_from_mapping(
            ExperimentConfig,
            {"MARGIN": "grid", "SMOOTHING_METHOD": "binned", "CLAMP_CRITICAL_BANDWIDTH": "false"},
        )
        assert cfg.margin == PositivityMargin.GRID
        assert cfg.smoothing_method == SmoothingMethod.BINNED
        assert cfg.clamp_critical_bandwidth is False

    def test_sequences(self) -> None:
        cfg = config_from_mapping(
            ExperimentConfig,
            {"t_grid": "(10, 20, 40, 80)", "initial": "point", "initial_point": "0.5"},
        )
        assert cfg.t_grid == (10.0, 20.0, 40.0, 80.0)
        assert cfg.initial_point == (0.5,)

    def test_protocol_keys(self) -> None:
        cfg = config_from_mapping(ExperimentConfig, {"w2_solver": "entropic", "W2_EPSILON": "0.001"})
        assert cfg.protocol.solver == SolverKind.ENTROPIC
        assert cfg.protocol.epsilon == pytest.approx(0.001)
        assert cfg.protocol.n_ref == 1000

    def test_empty_values_keep_defaults(self) -> None:
        cfg = config_from_mapping(ExperimentConfig, {"dt": "", "kernel": None})
        assert cfg.dt is None
        assert cfg.kernel == "poly:r=4"

    def test_other_models(self) -> None:
        kl = config_from_mapping(KLCheckConfig, {"horizon": "5", "adjudicate_with": "compensator"})
        assert kl.horizon == 5.0
        mm = config_from_mapping(MinimaxConfig, {"epsilons": "0.2,0.1", "amplitude_fractions": "0.5,1"})
        assert mm.epsilons == (0.2, 0.1)

    def test_unknown_key(self) -> None:
        with pytest.raises(InputError, match="Unknown configuration key 'SPEED'") as exc_info:
            config_from_mapping(ExperimentConfig, {"SPEED": "fast"})
        assert "replicas" in exc_info.value.details["known"]

    def test_protocol_key_is_not_a_field(self) -> None:
        with pytest.raises(InputError, match="Unknown configuration key"):
            config_from_mapping(ExperimentConfig, {"protocol": "exact"})

    def test_unknown_protocol_key(self) -> None:
        with pytest.raises(InputError, match="Unknown W2 protocol key"):
            config_from_mapping(ExperimentConfig, {"W2_SPEED": "1"})

    def test_protocol_prefix_only_for_nested_models(self) -> None:
        with pytest.raises(InputError, match="Unknown configuration key"):
            config_from_mapping(KLCheckConfig, {"w2_solver": "exact"})

    def test_invalid_values_become_input_errors(self) -> None:
        with pytest.raises(InputError, match="Invalid ExperimentConfig") as exc_info:
            config_from_mapping(ExperimentConfig, {"t_grid": "1,2,3"})
        assert exc_info.value.details["errors"]

    def test_negative_replicas(self) -> None:
        with pytest.raises(InputError, match="Invalid ExperimentConfig"):
            config_from_mapping(ExperimentConfig, {"replicas": "0"})


class TestLoadConfig:
    def test_file(self, config_file: Path) -> None:
        cfg = load_config(config_file, environ={})
        assert cfg.manifold == "torus:d=5,s=1"
        assert cfg.estimator_mode == EstimatorMode.SMOOTHED
        assert cfg.t_grid == (256.0, 512.0, 1024.0, 2048.0)
        assert cfg.protocol.n_est == 2000
        assert cfg.master_seed == 3

    def test_environment_overrides_file(self, config_file: Path) -> None:
        cfg = load_config(config_file, environ={"OCCUPATION_REPLICAS": "4", "HOME": "/root"})
        assert cfg.replicas == 4

    def test_explicit_overrides_win(self, config_file: Path) -> None:
        cfg = load_config(
            config_file,
            overrides={"replicas": "2"},
            environ={"OCCUPATION_REPLICAS": "4"},
        )
        assert cfg.replicas == 2

    def test_environment_only(self) -> None:
        cfg = load_config(environ={"OCCUPATION_W2_N_REF": "50"})
        assert cfg.protocol.n_ref == 50

    def test_unknown_environment_key(self) -> None:
        with pytest.raises(InputError, match="Unknown configuration key"):
            load_config(environ={"OCCUPATION_COLOUR": "blue"})

    def test_missing_file(self, tmp_path: Path) -> None:
        with pytest.raises(InputError, match="Configuration file not found"):
            load_config(tmp_path / "missing.env", environ={})

    def test_logs_environment_overrides(self, caplog: pytest.LogCaptureFixture) -> None:
        with caplog.at_level(logging.INFO, logger="occupation_estimator.config"):
            load_config(environ={"OCCUPATION_REPLICAS": "3"})
        assert "environment overrides" in caplog.text
