"""Monte Carlo scenario commands: simulate and dr-matrix."""

from typing import List, Optional

import click

from ctdr.business.dgp import generate, replication_seed
from ctdr.business.montecarlo import dr_matrix, run_scenario
from ctdr.business.montecarlo_models import REPORT_COLUMNS, ScenarioReport
from ctdr.cli.commands.common import StudyRun, safe_command_execution, start_run, study_options
from ctdr.integrations.report_io import write_table

REPORT_NAME = "report.csv"
SAMPLE_NAME = "sample.csv"


def _write_first_sample(run: StudyRun) -> None:
    scenario = run.config.scenario
    sample = generate(scenario.dgp, scenario.n, replication_seed(scenario.master_seed, 0))
    run.record(write_table(sample.to_frame(), run.path(SAMPLE_NAME), sample.csv_columns))


def _simulate(run: StudyRun, study: str, dump_sample: bool) -> None:
    scenario = run.config.scenario
    run.output.info(
        f"Running {study} for {scenario.dgp.scenario}: estimator={scenario.estimator}, "
        f"n={scenario.n}, R={scenario.replications}, seed={scenario.master_seed}"
    )
    reports: List[ScenarioReport]
    if study == "dr-matrix":
        reports = dr_matrix(scenario, n_jobs=run.threads)
    else:
        reports = [run_scenario(scenario, n_jobs=run.threads)]

    run.output.scenario_summary(reports)
    rows = [r.to_row() for r in reports]
    run.record(write_table(rows, run.path(REPORT_NAME), REPORT_COLUMNS))
    if dump_sample:
        _write_first_sample(run)
    run.finish()


@click.command()
@study_options
@click.option(
    "--dump-sample",
    is_flag=True,
    help=f"Also write the data of replication 0 to {SAMPLE_NAME}",
)
@click.pass_context
@safe_command_execution
def simulate(
    ctx: click.Context,
    config_path: str,
    out_dir: str,
    threads: int,
    seed: Optional[int],
    verbose: bool,
    dump_sample: bool,
) -> None:
    """
    Run the Monte Carlo study named by run.study.

    Writes report.csv (cell,n,R,bias,sd,mean_se,coverage,mcse,failures) and
    manifest.yaml. SD and MCSE are NA when R = 1.

    \b
    Examples:
      # One cell with the settings of the config file
      $ ctdr simulate --config configs/censoring.conf --out results/

      # Same study with another master seed
      $ ctdr simulate -c configs/censoring.conf -o results/ --seed 0x2a
    """
    run = start_run(ctx, "simulate", config_path, out_dir, threads, seed, verbose)
    _simulate(run, run.config.study, dump_sample)


@click.command(name="dr-matrix")
@study_options
@click.pass_context
@safe_command_execution
def dr_matrix_command(
    ctx: click.Context,
    config_path: str,
    out_dir: str,
    threads: int,
    seed: Optional[int],
    verbose: bool,
) -> None:
    """
    Run the four correct/misspecified nuisance cells.

    The event and coarsening modes of the config are replaced by
    fitted-correct and fitted-misspecified; every cell reuses the same
    replication seeds. Writes report.csv with one row per cell.
    """
    run = start_run(ctx, "dr-matrix", config_path, out_dir, threads, seed, verbose)
    _simulate(run, "dr-matrix", dump_sample=False)
