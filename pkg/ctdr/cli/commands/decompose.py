"""Six-term decomposition command."""

import math
from dataclasses import replace
from typing import Optional

import click
import numpy as np

from ctdr.business.montecarlo import decompose_scenario, nuisance_limits
from ctdr.business.montecarlo_models import DECOMPOSITION_COLUMNS
from ctdr.cli.commands.common import safe_command_execution, start_run, study_options
from ctdr.integrations.report_io import write_model_records, write_table

BY_N_COLUMNS = ("n", "replications", "T1", "T2", "T3", "T4", "T5", "T6")


@click.command()
@study_options
@click.pass_context
@safe_command_execution
def decompose(
    ctx: click.Context,
    config_path: str,
    out_dir: str,
    threads: int,
    seed: Optional[int],
    verbose: bool,
) -> None:
    """
    Decompose the estimating-equation value of every replication.

    \b
    Outputs:
      decomposition.csv       rep,T1,...,T6,reconstruction_residual at run.n
      decomposition_by_n.csv  mean |sqrt(n) T_k| for each n of decompose.n_grid
      nuisance_limits.yaml    the event and coarsening limits used for P
    """
    run = start_run(ctx, "decompose", config_path, out_dir, threads, seed, verbose)
    scenario = run.config.scenario
    sizes = sorted(set(run.config.decompose_n_grid) | {scenario.n})

    summary = []
    for n in sizes:
        run.output.info(f"Decomposing {scenario.replications} replications at n={n}")
        reports = decompose_scenario(replace(scenario, n=n), n_jobs=run.threads)
        if n == scenario.n:
            run.record(
                write_table(
                    [r.to_row() for r in reports],
                    run.path("decomposition.csv"),
                    DECOMPOSITION_COLUMNS,
                )
            )
            worst = max((r.reconstruction_residual for r in reports), default=0.0)
            run.output.progress(f"  largest reconstruction residual: {worst:.3g}")
        if n in run.config.decompose_n_grid:
            scaled = np.mean(np.abs([r.terms for r in reports]), axis=0) * math.sqrt(n)
            row = {"n": n, "replications": len(reports)}
            row.update({f"T{k}": float(v) for k, v in enumerate(scaled, start=1)})
            summary.append(row)

    run.record(write_table(summary, run.path("decomposition_by_n.csv"), BY_N_COLUMNS))

    event_limit, coarsening_limit = nuisance_limits(scenario)
    run.record(
        write_model_records(
            {"event": event_limit.to_record(), "coarsening": coarsening_limit.to_record()},
            run.path("nuisance_limits.yaml"),
        )
    )
    run.finish()
