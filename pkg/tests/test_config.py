"""
Tests for solver settings, problem files and the log level.
"""

import logging

import pytest

from varbvp.config import (
    DEFAULT_GRID_INTERVALS,
    LOG_ENV_VAR,
    SolverConfig,
    get_log_level_name,
    load_problem_file,
    setup_logging,
)
from varbvp.errors import InvalidConfig


class TestSolverConfig:
    """Tests for SolverConfig validation."""

    def test_defaults_are_valid(self):
        config = SolverConfig().validate()
        assert config.N == DEFAULT_GRID_INTERVALS

    @pytest.mark.parametrize(
        "overrides",
        [{"N": 1}, {"tol": 0.0}, {"tol": 2.0}, {"damping_factor": 1.0}, {"max_iter": 0}, {"v_max": -1.0}],
    )
    def test_out_of_range_rejected(self, overrides):
        with pytest.raises(InvalidConfig):
            SolverConfig(**overrides).validate()

    def test_overrides_skip_none(self):
        config = SolverConfig().with_overrides(N=128, tol=None)
        assert config.N == 128
        assert config.tol == SolverConfig().tol

    def test_from_mapping_casts_types(self):
        config = SolverConfig.from_mapping({"N": "32", "tol": "1e-9"})
        assert config.N == 32 and isinstance(config.N, int)
        assert config.tol == 1e-9

    def test_from_mapping_rejects_unknown_keys(self):
        with pytest.raises(InvalidConfig):
            SolverConfig.from_mapping({"grid": 32})

    def test_from_mapping_rejects_bad_values(self):
        with pytest.raises(InvalidConfig):
            SolverConfig.from_mapping({"N": "many"})

    def test_empty_mapping_gives_defaults(self):
        assert SolverConfig.from_mapping(None) == SolverConfig()


class TestLoadProblemFile:
    """Tests for YAML problem files."""

    def test_loads_nested_solver_section(self, tmp_path):
        path = tmp_path / "problem.yml"
        path.write_text("model: harmonic\nparameters:\n  omega: 2.0\nq1: 0\nq2: 1\nh: 0.5\nsolver:\n  N: 32\n")
        problem = load_problem_file(path)
        assert problem["model"] == "harmonic"
        assert problem["parameters"] == {"omega": 2.0}
        assert problem["solver"] == {"N": 32}

    def test_missing_file(self, tmp_path):
        with pytest.raises(InvalidConfig):
            load_problem_file(tmp_path / "absent.yml")

    def test_malformed_yaml(self, tmp_path):
        path = tmp_path / "bad.yml"
        path.write_text("model: [unclosed\n")
        with pytest.raises(InvalidConfig):
            load_problem_file(path)

    def test_top_level_must_be_mapping(self, tmp_path):
        path = tmp_path / "list.yml"
        path.write_text("- harmonic\n- pendulum\n")
        with pytest.raises(InvalidConfig):
            load_problem_file(path)

    def test_unknown_keys_rejected(self, tmp_path):
        path = tmp_path / "extra.yml"
        path.write_text("model: free\nmethod: shooting\n")
        with pytest.raises(InvalidConfig):
            load_problem_file(path)

    def test_shipped_problems_load(self):
        from varbvp.config import PROBLEMS_DIR

        files = sorted(PROBLEMS_DIR.glob("*.yml"))
        assert files
        for path in files:
            assert "model" in load_problem_file(path)


class TestLogLevel:
    """Tests for the VARBVP_LOG environment variable."""

    def test_default_is_info(self, monkeypatch):
        monkeypatch.delenv(LOG_ENV_VAR, raising=False)
        assert get_log_level_name() == "info"

    def test_reads_environment(self, monkeypatch):
        monkeypatch.setenv(LOG_ENV_VAR, " Debug ")
        assert get_log_level_name() == "debug"

    def test_unknown_value_falls_back(self, monkeypatch):
        monkeypatch.setenv(LOG_ENV_VAR, "verbose")
        assert get_log_level_name() == "info"

    def test_quiet_maps_to_warning(self):
        setup_logging("quiet")
        assert logging.getLogger().level == logging.WARNING
        setup_logging("info")
