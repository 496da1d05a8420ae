"""Diagnostic studies: TV gap, nuisance norm decay and the rate condition."""

from dataclasses import asdict
from typing import Optional

import click

from ctdr.business.dgp import derive_seed
from ctdr.business.montecarlo import (
    loglog_slope,
    norm_decay_study,
    rate_condition_study,
    tv_gap_study,
)
from ctdr.business.montecarlo_models import NORM_COLUMNS, RATE_COLUMNS, TV_GAP_COLUMNS
from ctdr.cli.commands.common import safe_command_execution, start_run, study_options
from ctdr.integrations.report_io import write_table

TV_GAP_SEED_STREAM = 101
NORM_SEED_STREAM = 102


@click.command()
@study_options
@click.option(
    "--skip-rates",
    is_flag=True,
    help="Skip the rate-condition study (the slowest of the three)",
)
@click.pass_context
@safe_command_execution
def diagnose(
    ctx: click.Context,
    config_path: str,
    out_dir: str,
    threads: int,
    seed: Optional[int],
    verbose: bool,
    skip_rates: bool,
) -> None:
    """
    Run the norm and rate diagnostics configured under diagnose.*.

    \b
    Outputs:
      tv_gap.csv         n,sup_err,tv_err of the ECDF
      tv_gap_smooth.csv  n,sup_err,tv_err of a smooth synthetic-rate estimate
      norms.csv          mode,n,sup_err,tv_err of the event cumulative hazard
      rates.csv          alpha_sum,n,sqrtn_bias,cross_integral
    """
    run = start_run(ctx, "diagnose", config_path, out_dir, threads, seed, verbose)
    settings = run.config.diagnose
    scenario = run.config.scenario

    run.output.info(f"TV gap study over n={list(settings.n_grid)}")
    step_rows, smooth_rows = tv_gap_study(
        settings.n_grid,
        settings.distribution,
        settings.replications,
        derive_seed(run.master_seed, TV_GAP_SEED_STREAM),
        alpha=scenario.event.alpha,
        amplitude=settings.amplitude,
    )
    if len(step_rows) > 1:
        slope = loglog_slope([r.n for r in step_rows], [r.sup_err for r in step_rows])
        run.output.progress(f"  sup-error log-log slope: {slope:.3f}")
    run.record(
        write_table([asdict(r) for r in step_rows], run.path("tv_gap.csv"), TV_GAP_COLUMNS)
    )
    run.record(
        write_table(
            [asdict(r) for r in smooth_rows], run.path("tv_gap_smooth.csv"), TV_GAP_COLUMNS
        )
    )

    run.output.info(f"Norm decay study over n={list(settings.norm_n_grid)}")
    norm_rows = norm_decay_study(
        scenario.dgp,
        settings.norm_n_grid,
        settings.replications,
        derive_seed(run.master_seed, NORM_SEED_STREAM),
    )
    run.record(write_table([asdict(r) for r in norm_rows], run.path("norms.csv"), NORM_COLUMNS))

    if not skip_rates:
        run.output.info(
            f"Rate condition study over {len(settings.alpha_grid)} exponent pairs "
            f"and n={list(settings.rate_n_grid)}"
        )
        rate_rows = rate_condition_study(
            scenario,
            settings.alpha_grid,
            settings.rate_n_grid,
            amplitude=settings.amplitude,
            n_jobs=run.threads,
        )
        run.record(
            write_table([r.to_row() for r in rate_rows], run.path("rates.csv"), RATE_COLUMNS)
        )

    run.finish()
