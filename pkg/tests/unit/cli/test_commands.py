"""Tests for the study commands: simulate, dr-matrix, diagnose and decompose."""

from pathlib import Path
from typing import List

import pandas as pd
import pytest
import yaml
from click.testing import CliRunner
from pytest_mock import MockerFixture

from ctdr.business.montecarlo_models import (
    NormRow,
    RateRow,
    ScenarioReport,
    TvGapRow,
)
from ctdr.cli.main import cli
from ctdr.core.errors import ScenarioError

SMALL_STUDY = """\
dgp.scenario=censoring
nuisance.event.mode=oracle
nuisance.coarsening.mode=oracle
run.n=60
run.replications=2
run.seed=11
"""


@pytest.fixture
def config_file(tmp_path: Path) -> Path:
    """A fast oracle study."""
    path = tmp_path / "study.conf"
    path.write_text(SMALL_STUDY)
    return path


@pytest.fixture
def out_dir(tmp_path: Path) -> Path:
    return tmp_path / "results"


def invoke(args: List[str], **kwargs):
    return CliRunner().invoke(cli, args, **kwargs)


def report(cell: str = "scenario") -> ScenarioReport:
    return ScenarioReport(cell, 60, 2, 0.5, 0.001, 0.02, 0.019, 1.0, 0.014, 0)


class TestSimulate:
    """Tests for the simulate command."""

    def test_writes_report_and_manifest(self, config_file: Path, out_dir: Path) -> None:
        """Test report.csv and manifest.yaml are produced."""
        result = invoke(["simulate", "-c", str(config_file), "-o", str(out_dir), "-t", "1"])

        assert result.exit_code == 0, result.output
        frame = pd.read_csv(out_dir / "report.csv")
        assert list(frame.columns) == [
            "cell", "n", "R", "bias", "sd", "mean_se", "coverage", "mcse", "failures"
        ]
        assert frame.loc[0, "R"] == 2
        manifest = yaml.safe_load((out_dir / "manifest.yaml").read_text())
        assert manifest["command"] == "simulate"
        assert manifest["master_seed"] == 11
        assert manifest["outputs"] == ["report.csv", "manifest.yaml"]
        assert len(manifest["config_digest"]) == 16

    def test_dump_sample(self, config_file: Path, out_dir: Path) -> None:
        """Test --dump-sample writes the data of replication 0."""
        result = invoke(
            ["simulate", "-c", str(config_file), "-o", str(out_dir), "--dump-sample"]
        )

        assert result.exit_code == 0, result.output
        sample = pd.read_csv(out_dir / "sample.csv")
        assert list(sample.columns) == ["z", "t_tilde", "delta"]
        assert len(sample) == 60

    def test_single_replication_writes_na(self, tmp_path: Path, out_dir: Path) -> None:
        """Test sd and mcse are NA when R = 1."""
        path = tmp_path / "one.conf"
        path.write_text(SMALL_STUDY.replace("run.replications=2", "run.replications=1"))

        result = invoke(["simulate", "-c", str(path), "-o", str(out_dir)])

        assert result.exit_code == 0, result.output
        row = (out_dir / "report.csv").read_text().splitlines()[1].split(",")
        assert row[4] == "NA"
        assert row[7] == "NA"

    @pytest.mark.parametrize(
        "env,flag,expected",
        [
            ({"CTDR_SEED": None}, [], 11),
            ({"CTDR_SEED": "5"}, [], 5),
            ({"CTDR_SEED": "5"}, ["--seed", "0x7"], 7),
        ],
    )
    def test_seed_precedence(
        self, config_file: Path, out_dir: Path, env: dict, flag: List[str], expected: int
    ) -> None:
        """Test --seed beats CTDR_SEED, which beats run.seed."""
        result = invoke(["simulate", "-c", str(config_file), "-o", str(out_dir)] + flag, env=env)

        assert result.exit_code == 0, result.output
        manifest = yaml.safe_load((out_dir / "manifest.yaml").read_text())
        assert manifest["master_seed"] == expected

    @pytest.mark.parametrize("seed", ["abc", "-1", str(2**64)])
    def test_invalid_seed(self, config_file: Path, out_dir: Path, seed: str) -> None:
        """Test non-u64 seeds are usage errors."""
        result = invoke(["simulate", "-c", str(config_file), "-o", str(out_dir), "--seed", seed])

        assert result.exit_code == 2

    def test_missing_config_file(self, tmp_path: Path, out_dir: Path) -> None:
        """Test a missing file exits 2 with a CTDR-E2 message."""
        result = invoke(["simulate", "-c", str(tmp_path / "none.conf"), "-o", str(out_dir)])

        assert result.exit_code == 2
        assert "CTDR-E2: Config file not found" in result.output

    def test_missing_scenario_key(self, tmp_path: Path, out_dir: Path) -> None:
        """Test the message names the missing key."""
        path = tmp_path / "bad.conf"
        path.write_text("run.n=100\n")

        result = invoke(["simulate", "-c", str(path), "-o", str(out_dir)])

        assert result.exit_code == 2
        assert "dgp.scenario" in result.output
        assert not (out_dir / "manifest.yaml").exists()

    def test_scenario_error_exit_code(
        self, config_file: Path, out_dir: Path, mocker: MockerFixture
    ) -> None:
        """Test too many failed replications exit 3."""
        mocker.patch(
            "ctdr.cli.commands.simulate.run_scenario",
            side_effect=ScenarioError("3 of 20 replications failed", context={"cell": "scenario"}),
        )

        result = invoke(["simulate", "-c", str(config_file), "-o", str(out_dir)])

        assert result.exit_code == 3
        assert "CTDR-E3: 3 of 20 replications failed [cell=scenario]" in result.output

    def test_unexpected_error(
        self, config_file: Path, out_dir: Path, mocker: MockerFixture
    ) -> None:
        """Test unexpected exceptions exit 1."""
        mocker.patch(
            "ctdr.cli.commands.simulate.run_scenario", side_effect=RuntimeError("boom")
        )

        result = invoke(["simulate", "-c", str(config_file), "-o", str(out_dir)])

        assert result.exit_code == 1
        assert "CTDR-E1: Unexpected error: boom" in result.output

    def test_keyboard_interrupt(
        self, config_file: Path, out_dir: Path, mocker: MockerFixture
    ) -> None:
        """Test Ctrl-C exits 130."""
        mocker.patch(
            "ctdr.cli.commands.simulate.run_scenario", side_effect=KeyboardInterrupt()
        )

        result = invoke(["simulate", "-c", str(config_file), "-o", str(out_dir)])

        assert result.exit_code == 130

    def test_study_key_selects_dr_matrix(
        self, tmp_path: Path, out_dir: Path, mocker: MockerFixture
    ) -> None:
        """Test run.study=dr-matrix routes simulate to the matrix."""
        path = tmp_path / "matrix.conf"
        path.write_text(SMALL_STUDY + "run.study=dr-matrix\n")
        matrix = mocker.patch(
            "ctdr.cli.commands.simulate.dr_matrix", return_value=[report("a"), report("b")]
        )

        result = invoke(["simulate", "-c", str(path), "-o", str(out_dir), "-t", "3"])

        assert result.exit_code == 0, result.output
        assert matrix.call_args.kwargs["n_jobs"] == 3
        assert len(pd.read_csv(out_dir / "report.csv")) == 2


class TestDrMatrix:
    """Tests for the dr-matrix command."""

    def test_writes_one_row_per_cell(
        self, config_file: Path, out_dir: Path, mocker: MockerFixture
    ) -> None:
        """Test every cell is reported."""
        cells = ["correct/correct", "correct/misspecified"]
        mocker.patch(
            "ctdr.cli.commands.simulate.dr_matrix", return_value=[report(c) for c in cells]
        )

        result = invoke(["dr-matrix", "-c", str(config_file), "-o", str(out_dir)])

        assert result.exit_code == 0, result.output
        assert list(pd.read_csv(out_dir / "report.csv")["cell"]) == cells
        manifest = yaml.safe_load((out_dir / "manifest.yaml").read_text())
        assert manifest["command"] == "dr-matrix"


class TestDiagnose:
    """Tests for the diagnose command."""

    @pytest.fixture
    def studies(self, mocker: MockerFixture) -> dict:
        step = [TvGapRow(100, 0.08, 2.0), TvGapRow(1000, 0.025, 2.0)]
        smooth = [TvGapRow(100, 0.2, 0.3), TvGapRow(1000, 0.1, 0.15)]
        return {
            "tv": mocker.patch(
                "ctdr.cli.commands.diagnose.tv_gap_study", return_value=(step, smooth)
            ),
            "norm": mocker.patch(
                "ctdr.cli.commands.diagnose.norm_decay_study",
                return_value=[NormRow("fitted-correct", 500, 0.05, 0.06)],
            ),
            "rate": mocker.patch(
                "ctdr.cli.commands.diagnose.rate_condition_study",
                return_value=[RateRow(0.3, 0.3, 1000, 0.01, 0.002, 0.95)],
            ),
        }

    def test_writes_all_tables(self, config_file: Path, out_dir: Path, studies: dict) -> None:
        """Test the four CSV files and their headers."""
        result = invoke(["diagnose", "-c", str(config_file), "-o", str(out_dir)])

        assert result.exit_code == 0, result.output
        assert (out_dir / "tv_gap.csv").read_text().splitlines()[0] == "n,sup_err,tv_err"
        assert (out_dir / "tv_gap_smooth.csv").exists()
        assert (out_dir / "norms.csv").read_text().splitlines()[0] == "mode,n,sup_err,tv_err"
        assert (out_dir / "rates.csv").read_text().splitlines() == [
            "alpha_sum,n,sqrtn_bias,cross_integral",
            "0.59999999999999998,1000,0.01,0.002",
        ]

    def test_skip_rates(self, config_file: Path, out_dir: Path, studies: dict) -> None:
        """Test --skip-rates leaves out the rate-condition study."""
        result = invoke(["diagnose", "-c", str(config_file), "-o", str(out_dir), "--skip-rates"])

        assert result.exit_code == 0, result.output
        studies["rate"].assert_not_called()
        assert not (out_dir / "rates.csv").exists()

    def test_settings_are_forwarded(
        self, tmp_path: Path, out_dir: Path, studies: dict
    ) -> None:
        """Test diagnose.* keys reach the studies."""
        path = tmp_path / "diag.conf"
        path.write_text(
            SMALL_STUDY + "diagnose.n_grid=10,20\ndiagnose.distribution=exponential\n"
        )

        result = invoke(["diagnose", "-c", str(path), "-o", str(out_dir)])

        assert result.exit_code == 0, result.output
        args = studies["tv"].call_args.args
        assert args[0] == (10, 20)
        assert args[1] == "exponential"


class TestDecompose:
    """Tests for the decompose command."""

    def test_writes_decomposition_tables(self, tmp_path: Path, out_dir: Path) -> None:
        """Test per-replication terms, the n-grid summary and the limits."""
        path = tmp_path / "decompose.conf"
        path.write_text(SMALL_STUDY + "decompose.n_grid=60,80\n")

        result = invoke(["decompose", "-c", str(path), "-o", str(out_dir)])

        assert result.exit_code == 0, result.output
        terms = pd.read_csv(out_dir / "decomposition.csv")
        assert list(terms["rep"]) == [0, 1]
        assert (terms["T1"] == 0.0).all()
        by_n = pd.read_csv(out_dir / "decomposition_by_n.csv")
        assert list(by_n["n"]) == [60, 80]
        limits = yaml.safe_load((out_dir / "nuisance_limits.yaml").read_text())
        assert set(limits) == {"event", "coarsening"}
        manifest = yaml.safe_load((out_dir / "manifest.yaml").read_text())
        assert manifest["outputs"][-1] == "manifest.yaml"
