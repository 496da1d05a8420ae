"""Replication engine, verification studies and the six-term decomposition."""

import logging
import math
from dataclasses import replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple, TypeVar

import numpy as np
from joblib import Parallel, delayed
from scipy import stats

from ctdr.business.crossfit import PluginBuilder, cross_fit, split_folds
from ctdr.business.dgp import (
    derive_seed,
    generate,
    replication_seed,
    selection_probability,
    true_estimand,
    true_nuisance,
)
from ctdr.business.dgp_models import DgpSpec
from ctdr.business.estimator import EstimatingFunctionPlugin, solve_linear, solve_mdr
from ctdr.business.estimator_models import EstimatingTerms
from ctdr.business.montecarlo_models import (
    DECOMPOSITION_TOLERANCE,
    MAX_FAILURE_FRACTION,
    DecompositionReport,
    NormRow,
    RateRow,
    ReplicationArtifacts,
    ReplicationOutcome,
    ScalingRow,
    ScenarioConfig,
    ScenarioReport,
    TvGapRow,
)
from ctdr.business.nuisance import (
    REFERENCE_SAMPLE_SIZE,
    fit_piecewise_exponential,
    limit_model,
    make_fitter,
    nelson_aalen_stratified,
    synthetic_rate,
)
from ctdr.business.nuisance_models import ConditionalHazardModel, NuisanceSpec
from ctdr.business.path_models import FiniteVariationPath, Path, StepPath
from ctdr.business.stepfun import ecdf_path, sup_distance, total_variation
from ctdr.core.errors import ConsistencyError, EstimationError, ScenarioError, ValidationError

logger = logging.getLogger(__name__)

FOLD_STREAM = 1
POPULATION_STREAM = 2
TV_GAP_STREAM = 3
NORM_STREAM = 4
SMOOTH_SHAPE_SEED = 7
DR_CELLS = (
    ("fitted-correct", "fitted-correct"),
    ("fitted-correct", "fitted-misspecified"),
    ("fitted-misspecified", "fitted-correct"),
    ("fitted-misspecified", "fitted-misspecified"),
)

P = TypeVar("P")
Probe = Callable[[ReplicationOutcome], P]


def plugin_builder(dgp: DgpSpec) -> PluginBuilder:
    """Builder of estimating-function plugins for the DGP's problem and horizon."""

    def build(
        event: ConditionalHazardModel, coarsening: ConditionalHazardModel
    ) -> EstimatingFunctionPlugin:
        return EstimatingFunctionPlugin(dgp.scenario, event, coarsening, dgp.horizon)

    return build


def run_replication(
    config: ScenarioConfig, index: int, retain: bool = False
) -> ReplicationOutcome:
    """
    Generate, fit and estimate once with the seed of replication ``index``.

    Estimation errors are recorded on the outcome instead of raised. With
    ``retain`` the sample and fitted plugins are kept for the decomposition.
    """
    seed = replication_seed(config.master_seed, index)
    sample = generate(config.dgp, config.n, seed)
    fitter = make_fitter(config.event, config.coarsening, config.dgp, config.n)
    builder = plugin_builder(config.dgp)
    try:
        if config.estimator == "mdr":
            plugin = builder(*fitter(sample))
            estimate = solve_mdr(sample, plugin)
            blocks = ((np.arange(len(sample)), plugin),)
        else:
            folds = split_folds(len(sample), config.folds, derive_seed(seed, FOLD_STREAM))
            crossed = cross_fit(sample, folds, fitter, builder)
            estimate = solve_linear(crossed.terms)
            blocks = tuple(
                (folds.indices(fold), plugin)
                for fold, plugin in enumerate(crossed.plugins, start=1)
            )
    except EstimationError as e:
        logger.warning("replication %d of %s failed: %s", index, config.cell, e.message)
        return ReplicationOutcome(index, seed, error=e)
    artifacts = ReplicationArtifacts(sample, blocks, estimate) if retain else None
    return ReplicationOutcome(index, seed, estimate, artifacts=artifacts)


def _run_one(
    config: ScenarioConfig, index: int, probe: Optional[Probe]
) -> Tuple[ReplicationOutcome, Optional[P]]:
    outcome = run_replication(config, index, retain=probe is not None)
    extra = probe(outcome) if probe is not None and outcome.succeeded else None
    return replace(outcome, artifacts=None), extra


def run_replications(
    config: ScenarioConfig, n_jobs: int = 1, probe: Optional[Probe] = None
) -> Tuple[List[ReplicationOutcome], List[Optional[P]]]:
    """
    Run all replications of a cell, in parallel threads if ``n_jobs`` > 1.

    ``probe`` sees each successful outcome with its artifacts retained; its
    results are returned in replication order. Artifacts are dropped after
    probing.
    """
    indices = range(config.replications)
    if n_jobs == 1:
        results = [_run_one(config, i, probe) for i in indices]
    else:
        results = Parallel(n_jobs=n_jobs, backend="threading")(
            delayed(_run_one)(config, i, probe) for i in indices
        )
    return [o for o, _ in results], [extra for _, extra in results]


def summarize(config: ScenarioConfig, outcomes: Sequence[ReplicationOutcome]) -> ScenarioReport:
    """Aggregate outcomes in index order into a ScenarioReport.

    Raises:
        ScenarioError: If more than 5% of the replications failed
    """
    failures = sum(1 for o in outcomes if not o.succeeded)
    if failures > MAX_FAILURE_FRACTION * len(outcomes):
        first = next(o for o in outcomes if not o.succeeded)
        raise ScenarioError(
            f"{failures} of {len(outcomes)} replications failed in cell {config.cell}",
            suggestions=[
                "Increase run.n so every fitted piece sees events",
                "Reduce the coarsening rate to keep inverse weights bounded",
            ],
            context={"cell": config.cell, "first_failure": first.index},
        )
    estimates = [o.estimate for o in outcomes if o.estimate is not None]
    theta0 = true_estimand(config.dgp)
    theta_hat = np.array([e.theta_hat for e in estimates])
    se = np.array([e.se for e in estimates])
    sd = float(np.std(theta_hat, ddof=1)) if theta_hat.size > 1 else None
    return ScenarioReport(
        cell=config.cell,
        n=config.n,
        replications=config.replications,
        true_value=theta0,
        bias=float(np.mean(theta_hat)) - theta0,
        sd=sd,
        mean_se=float(np.mean(se)),
        coverage=float(np.mean([e.covers(theta0) for e in estimates])),
        mcse=sd / math.sqrt(theta_hat.size) if sd is not None else None,
        failures=failures,
    )


def run_scenario(
    config: ScenarioConfig, n_jobs: int = 1, decompose: bool = False
) -> ScenarioReport:
    """
    Run one Monte Carlo cell.

    With ``decompose`` the report also carries the mean |sqrt(n) T_k| of the
    six-term decomposition over the successful replications.
    """
    logger.info(
        "running %s: n=%d, R=%d, %s", config.cell, config.n, config.replications, config.estimator
    )
    probe = decomposition_probe(config) if decompose else None
    outcomes, extras = run_replications(config, n_jobs, probe)
    report = summarize(config, outcomes)
    if decompose:
        rows = np.array([d.terms for d in extras if d is not None])
        scaled = np.mean(np.abs(rows), axis=0) * math.sqrt(config.n)
        report = replace(
            report, decomposition={f"T{k}": float(v) for k, v in enumerate(scaled, start=1)}
        )
    return report


def dr_matrix(base: ScenarioConfig, n_jobs: int = 1) -> List[ScenarioReport]:
    """The four correct/misspecified cells, sharing replication seeds."""
    reports = []
    for event_mode, coarsening_mode in DR_CELLS:
        cell = "{}/{}".format(
            event_mode.replace("fitted-", ""), coarsening_mode.replace("fitted-", "")
        )
        reports.append(run_scenario(base.with_modes(event_mode, coarsening_mode, cell), n_jobs))
    return reports


def root_n_scaling_study(
    config: ScenarioConfig, n_grid: Sequence[int], n_jobs: int = 1
) -> List[ScalingRow]:
    """SD(theta_hat) * sqrt(n), coverage and SE/SD ratio across sample sizes."""
    rows = []
    for n in n_grid:
        report = run_scenario(replace(config, n=int(n)), n_jobs)
        sd_sqrt_n = report.sd * math.sqrt(n) if report.sd is not None else None
        ratio = report.mean_se / report.sd if report.sd else None
        rows.append(ScalingRow(int(n), sd_sqrt_n, report.coverage, ratio))
    return rows


def _uniform_cdf_path() -> FiniteVariationPath:
    return FiniteVariationPath(density_segments=((0.0, 1.0, 1.0),))


def tv_gap_study(
    n_grid: Sequence[int],
    distribution: str = "uniform",
    replications: int = 20,
    seed: int = 0,
    alpha: float = 0.3,
    amplitude: float = 1.0,
) -> Tuple[List[TvGapRow], List[TvGapRow]]:
    """
    Sup versus total-variation error of a step estimator and of a smooth one.

    The step estimator is the ECDF of n draws against the true CDF.
    Exponential draws are mapped to uniform by their CDF; sup and TV
    distances are invariant under that transform. The smooth contrast is
    the synthetic-rate perturbation of a unit hazard on [0, 1], whose
    errors both shrink like n**-alpha.

    Returns:
        (ECDF rows, smooth-contrast rows)
    """
    if distribution not in ("uniform", "exponential"):
        raise ValidationError(f"unknown distribution {distribution!r}")
    truth_cdf = _uniform_cdf_path()
    unit = ConditionalHazardModel(log_baseline=(0.0,))
    truth_hazard = unit.cumulative_path(0.0, until=1.0)

    step_rows, smooth_rows = [], []
    for n in n_grid:
        sups, tvs = [], []
        for r in range(replications):
            rng = np.random.default_rng(derive_seed(replication_seed(seed, r), TV_GAP_STREAM + n))
            draws = rng.random(n) if distribution == "uniform" else -np.expm1(
                -rng.standard_exponential(n)
            )
            ecdf = ecdf_path(draws)
            sups.append(sup_distance(ecdf, truth_cdf))
            tvs.append(total_variation(ecdf, difference_of=truth_cdf))
        step_rows.append(TvGapRow(int(n), float(np.mean(sups)), float(np.mean(tvs))))

        smooth = synthetic_rate(unit, alpha, amplitude, int(n), SMOOTH_SHAPE_SEED, 1.0)
        path = smooth.cumulative_path(0.0, until=1.0)
        smooth_rows.append(
            TvGapRow(
                int(n),
                sup_distance(path, truth_hazard),
                total_variation(path, difference_of=truth_hazard),
            )
        )
    return step_rows, smooth_rows


def _truncate_step(path: StepPath, end: float) -> StepPath:
    keep = path.jump_times <= end
    return StepPath(path.initial_value, path.jump_times[keep], path.post_jump_values[keep])


def norm_decay_study(
    dgp: DgpSpec,
    n_grid: Sequence[int],
    replications: int,
    seed: int,
    z_ref: float = 1.0,
) -> List[NormRow]:
    """
    Sup and TV error of the estimated event cumulative hazard at ``z_ref``
    on [0, tau_max], averaged over replications.

    Modes: fitted-correct, fitted-misspecified and, for a Bernoulli
    covariate, the Nelson-Aalen estimate of the stratum containing z_ref.
    """
    truth = true_nuisance(dgp)[0].cumulative_path(z_ref, until=dgp.tau_max)
    modes = ["fitted-correct", "fitted-misspecified"]
    if dgp.covariate == "bernoulli":
        modes.append("nelson-aalen")
    rows = []
    for n in n_grid:
        errors: Dict[str, Tuple[List[float], List[float]]] = {m: ([], []) for m in modes}
        for r in range(replications):
            sample = generate(dgp, int(n), replication_seed(derive_seed(seed, NORM_STREAM + n), r))
            for mode in modes:
                estimate: Path
                if mode == "nelson-aalen":
                    fitted = nelson_aalen_stratified(sample, "event", (0.5,))
                    estimate = _truncate_step(fitted.path_for(z_ref), dgp.tau_max)
                else:
                    model = fit_piecewise_exponential(
                        sample, "event", include_covariate=mode == "fitted-correct"
                    )
                    estimate = model.cumulative_path(z_ref, until=dgp.tau_max)
                errors[mode][0].append(sup_distance(estimate, truth))
                errors[mode][1].append(total_variation(estimate, difference_of=truth))
        for mode in modes:
            sups, tvs = errors[mode]
            rows.append(NormRow(mode, int(n), float(np.mean(sups)), float(np.mean(tvs))))
    return rows


def _pooled_terms(
    artifacts: ReplicationArtifacts,
    make_plugin: Callable[[EstimatingFunctionPlugin], EstimatingFunctionPlugin],
) -> EstimatingTerms:
    sample = artifacts.sample
    a = np.empty(len(sample))
    b = np.empty(len(sample))
    for indices, plugin in artifacts.blocks:
        terms = make_plugin(plugin).terms(sample.subset(indices))
        a[indices] = terms.a
        b[indices] = terms.b
    return EstimatingTerms(a, b)


def nuisance_limits(
    config: ScenarioConfig,
) -> Tuple[ConditionalHazardModel, ConditionalHazardModel]:
    """Large-sample limits (event, coarsening) of the configured nuisance modes."""
    return (
        limit_model(config.event, config.dgp, config.master_seed),
        limit_model(config.coarsening, config.dgp, config.master_seed),
    )


def population_moments(config: ScenarioConfig) -> Tuple[float, float]:
    """
    (E a, E b) of the estimating function at the nuisance limits.

    When at least one limit is the truth, double robustness gives
    E Xi(theta) = E b * (theta0 - theta) with E b = 1 (censoring, where
    b = 1 identically) or 1 / P(Q <= T) (truncation). Otherwise the moments
    are averaged over a pinned reference sample.
    """
    dgp = config.dgp
    theta0 = true_estimand(dgp)
    misspecified = [
        spec.mode == "fitted-misspecified" for spec in (config.event, config.coarsening)
    ]
    if not all(misspecified):
        mean_b = 1.0 if dgp.scenario == "censoring" else 1.0 / selection_probability(dgp)
        return theta0 * mean_b, mean_b
    event_limit, coarsening_limit = nuisance_limits(config)
    reference = generate(
        dgp, REFERENCE_SAMPLE_SIZE, derive_seed(config.master_seed, POPULATION_STREAM)
    )
    terms = plugin_builder(dgp)(event_limit, coarsening_limit).terms(reference)
    return float(np.mean(terms.a)), float(np.mean(terms.b))


def decomposition_report(
    artifacts: ReplicationArtifacts,
    config: ScenarioConfig,
    replication: int = 0,
    theta: Optional[float] = None,
    population: Optional[Tuple[float, float]] = None,
) -> DecompositionReport:
    """
    Split (1/n) sum Xi_i(H_hat, Q_hat; theta) into six terms.

    With H*, Q* the nuisance limits, P the population mean and P_n the
    sample mean over the retained blocks (fold-wise for cross-fitting):
      T1 = P_n[Xi(Hh,Qh) - Xi(Hh,Q*) - Xi(H*,Qh) + Xi(H*,Q*)](theta)
      T2 = P_n[Xi(Hh,Q*) - Xi(H*,Q*)](theta)
      T3 = P_n[Xi(H*,Qh) - Xi(H*,Q*)](theta)
      T4 = (P_n - P)Xi(H*,Q*)(theta) - (P_n - P)Xi(H*,Q*)(theta0)
      T5 = (P_n - P)Xi(H*,Q*)(theta0)
      T6 = P Xi(H*,Q*)(theta)
    ``theta`` defaults to the replication's estimate.

    Raises:
        ConsistencyError: If the terms do not add up to the equation value
            within 1e-10
    """
    dgp = config.dgp
    theta_e = artifacts.estimate.theta_hat if theta is None else float(theta)
    theta0 = true_estimand(dgp)
    event_limit, coarsening_limit = nuisance_limits(config)
    mean_a, mean_b = population if population is not None else population_moments(config)
    build = plugin_builder(dgp)

    hat_hat = _pooled_terms(artifacts, lambda p: p)
    hat_star = _pooled_terms(artifacts, lambda p: build(p.event_model, coarsening_limit))
    star_hat = _pooled_terms(artifacts, lambda p: build(event_limit, p.coarsening_model))
    star_star = build(event_limit, coarsening_limit).terms(artifacts.sample)

    def mean(terms: EstimatingTerms, th: float) -> float:
        return float(np.mean(terms.values(th)))

    def population_value(th: float) -> float:
        return mean_a - mean_b * th

    value = mean(hat_hat, theta_e)
    t1 = value - mean(hat_star, theta_e) - mean(star_hat, theta_e) + mean(star_star, theta_e)
    t2 = mean(hat_star, theta_e) - mean(star_star, theta_e)
    t3 = mean(star_hat, theta_e) - mean(star_star, theta_e)
    t5 = mean(star_star, theta0) - population_value(theta0)
    t4 = (mean(star_star, theta_e) - population_value(theta_e)) - t5
    t6 = population_value(theta_e)
    residual = abs(t1 + t2 + t3 + t4 + t5 + t6 - value)
    if residual > DECOMPOSITION_TOLERANCE:
        raise ConsistencyError(
            f"decomposition terms miss the estimating-equation value by {residual:.3g}",
            context={"replication": replication, "theta": theta_e},
        )
    return DecompositionReport(
        replication, len(artifacts.sample), theta_e, t1, t2, t3, t4, t5, t6, value, residual
    )


def decomposition_probe(
    config: ScenarioConfig, theta: Optional[float] = None
) -> Callable[[ReplicationOutcome], DecompositionReport]:
    """Probe for ``run_replications`` decomposing each retained replication."""
    population = population_moments(config)

    def probe(outcome: ReplicationOutcome) -> DecompositionReport:
        if outcome.artifacts is None:
            raise ValidationError("decomposition needs retained replication artifacts")
        return decomposition_report(
            outcome.artifacts, config, outcome.index, theta=theta, population=population
        )

    return probe


def decompose_scenario(config: ScenarioConfig, n_jobs: int = 1) -> List[DecompositionReport]:
    """Decomposition of every successful replication of a cell, in index order."""
    outcomes, extras = run_replications(config, n_jobs, decomposition_probe(config))
    summarize(config, outcomes)
    return [d for d in extras if d is not None]


def _rate_specs(
    config: ScenarioConfig, alpha_event: float, alpha_coarsening: float, amplitude: float
) -> Tuple[NuisanceSpec, NuisanceSpec]:
    return (
        replace(config.event, mode="synthetic-rate", alpha=alpha_event, amplitude=amplitude),
        replace(
            config.coarsening,
            mode="synthetic-rate",
            alpha=alpha_coarsening,
            amplitude=amplitude,
        ),
    )


def rate_condition_study(
    config: ScenarioConfig,
    alpha_pairs: Sequence[Tuple[float, float]],
    n_grid: Sequence[int],
    amplitude: float = 1.0,
    n_jobs: int = 1,
) -> List[RateRow]:
    """
    sqrt(n) * bias under synthetic-rate nuisances of known convergence rates.

    The cross term T1 at the true theta (the measured cross-integral error)
    is averaged over replications next to the bias. The scaled Monte Carlo
    standard error sqrt(n) * MCSE bounds the noise of each sqrt(n) * bias.
    """
    theta0 = true_estimand(config.dgp)
    rows = []
    for alpha_event, alpha_coarsening in alpha_pairs:
        event_spec, coarsening_spec = _rate_specs(
            config, alpha_event, alpha_coarsening, amplitude
        )
        for n in n_grid:
            cell = replace(
                config,
                n=int(n),
                event=event_spec,
                coarsening=coarsening_spec,
                cell=f"{alpha_event}:{alpha_coarsening}",
            )
            probe = decomposition_probe(cell, theta=theta0)
            outcomes, decompositions = run_replications(cell, n_jobs, probe)
            report = summarize(cell, outcomes)
            rows.append(
                RateRow(
                    alpha_event,
                    alpha_coarsening,
                    int(n),
                    math.sqrt(n) * report.bias,
                    float(np.mean([d.t1 for d in decompositions if d is not None])),
                    report.coverage,
                    math.sqrt(n) * report.mcse if report.mcse is not None else None,
                )
            )
    return rows


def loglog_slope(ns: Sequence[float], values: Sequence[float]) -> float:
    """Least-squares slope of log(values) on log(ns)."""
    if len(ns) != len(values) or len(ns) < 2:
        raise ValidationError("a log-log slope needs at least two matching points")
    slope, _ = np.polyfit(np.log(np.asarray(ns, float)), np.log(np.asarray(values, float)), 1)
    return float(slope)


def shape_check(values: Sequence[float]) -> Tuple[float, float]:
    """Sample skewness and excess kurtosis."""
    data = np.asarray(values, dtype=float)
    return float(stats.skew(data)), float(stats.kurtosis(data, fisher=True))
