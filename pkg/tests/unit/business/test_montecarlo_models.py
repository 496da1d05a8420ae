"""Tests for study configuration parsing and report rows."""

import pytest

from ctdr.business.montecarlo_models import (
    REPORT_COLUMNS,
    ScenarioReport,
    parse_study_config,
)
from ctdr.core.errors import ConfigurationError


class TestParseStudyConfig:
    """Tests for parse_study_config()."""

    def test_minimal_config(self) -> None:
        """Test only dgp.scenario is required."""
        config = parse_study_config({"dgp.scenario": "truncation"})
        assert config.scenario.dgp.scenario == "truncation"
        assert config.scenario.estimator == "mdr"
        assert config.scenario.master_seed == 20240101
        assert config.study == "scenario"
        assert config.decompose_n_grid == (2000,)

    def test_missing_scenario_names_key(self) -> None:
        """Test the error names dgp.scenario."""
        with pytest.raises(ConfigurationError) as excinfo:
            parse_study_config({"run.n": "500"})
        assert excinfo.value.context["key"] == "dgp.scenario"
        assert "dgp.scenario" in excinfo.value.format_error()

    def test_unknown_key(self) -> None:
        """Test misspelt keys are reported."""
        with pytest.raises(ConfigurationError) as excinfo:
            parse_study_config({"dgp.scenario": "censoring", "run.sede": "1"})
        assert excinfo.value.context["key"] == "run.sede"

    @pytest.mark.parametrize(
        "key,value",
        [
            ("run.n", "many"),
            ("dgp.event_rate", "inf"),
            ("estimator.kind", "tmle"),
            ("run.seed", "-1"),
            ("diagnose.n_grid", "100,,0"),
            ("diagnose.alpha_grid", "0.3"),
            ("nuisance.event.mode", "kernel"),
        ],
    )
    def test_invalid_values_name_key(self, key: str, value: str) -> None:
        """Test each invalid value reports its key."""
        with pytest.raises(ConfigurationError) as excinfo:
            parse_study_config({"dgp.scenario": "censoring", key: value})
        assert excinfo.value.context["key"] == key

    def test_small_n_rejected(self) -> None:
        """Test run.n below 50 is refused."""
        with pytest.raises(ConfigurationError) as excinfo:
            parse_study_config({"dgp.scenario": "censoring", "run.n": "10"})
        assert excinfo.value.context["key"] == "run.n"

    def test_seed_formats_and_override(self) -> None:
        """Test hexadecimal seeds and the override precedence."""
        raw = {"dgp.scenario": "censoring", "run.seed": "0xFFFFFFFFFFFFFFFF"}
        assert parse_study_config(raw).scenario.master_seed == 2**64 - 1
        assert parse_study_config(raw, seed_override=5).scenario.master_seed == 5

    def test_full_config(self) -> None:
        """Test every section is parsed."""
        raw = {
            "dgp.scenario": "censoring",
            "dgp.covariate": "uniform",
            "estimator.kind": "rdr",
            "estimator.folds": "3",
            "nuisance.event.mode": "synthetic-rate",
            "nuisance.event.alpha": "0.4",
            "nuisance.coarsening.mode": "fitted-misspecified",
            "run.n": "300",
            "run.replications": "7",
            "run.study": "dr-matrix",
            "diagnose.n_grid": "10, 20",
            "diagnose.distribution": "exponential",
            "diagnose.alpha_grid": "0.2:0.3,0.4:0.1",
            "decompose.n_grid": "100,200",
        }
        config = parse_study_config(raw)
        scenario = config.scenario
        assert scenario.dgp.covariate == "uniform"
        assert (scenario.estimator, scenario.folds) == ("rdr", 3)
        assert scenario.event.mode == "synthetic-rate"
        assert scenario.event.alpha == 0.4
        assert scenario.coarsening.shape_seed == 11
        assert (scenario.n, scenario.replications) == (300, 7)
        assert config.study == "dr-matrix"
        assert config.diagnose.n_grid == (10, 20)
        assert config.diagnose.distribution == "exponential"
        assert config.diagnose.alpha_grid == ((0.2, 0.3), (0.4, 0.1))
        assert config.decompose_n_grid == (100, 200)

    def test_alpha_grid_range(self) -> None:
        """Test rate exponents outside (0, 1) are refused."""
        with pytest.raises(ConfigurationError) as excinfo:
            parse_study_config({"dgp.scenario": "censoring", "diagnose.alpha_grid": "0.5:1.5"})
        assert excinfo.value.context["key"] == "diagnose.alpha_grid"

    def test_horizon_beyond_tau(self) -> None:
        """Test DGP consistency errors carry the key."""
        with pytest.raises(ConfigurationError) as excinfo:
            parse_study_config({"dgp.scenario": "censoring", "dgp.horizon": "3.0"})
        assert excinfo.value.context["key"] == "dgp.horizon"


class TestScenarioReport:
    """Tests for ScenarioReport rows."""

    def test_row_matches_columns(self) -> None:
        """Test the row keys follow the report header."""
        report = ScenarioReport("scenario", 100, 1, 0.5, 0.01, None, 0.02, 1.0, None, 0)
        assert tuple(report.to_row()) == REPORT_COLUMNS

    def test_coverage_range(self) -> None:
        """Test coverage must be a fraction."""
        with pytest.raises(ValueError):
            ScenarioReport("scenario", 100, 1, 0.5, 0.0, None, 0.02, 1.5, None, 0)
