"""Nuisance estimators: piecewise-exponential MLE, stratified Nelson-Aalen,
controlled-rate synthetic perturbations, and the mode dispatcher."""

import functools
import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from ctdr.business.dgp import derive_seed, generate, true_nuisance
from ctdr.business.dgp_models import CensoringSample, DgpSpec, Sample
from ctdr.business.nuisance_models import (
    ConditionalHazardModel,
    NuisanceSpec,
    ShapeFunction,
    StratifiedNPEstimate,
)
from ctdr.business.path_models import StepPath
from ctdr.core.errors import FittingError, ValidationError

logger = logging.getLogger(__name__)

GRADIENT_TOLERANCE = 1e-10
MAX_NEWTON_ITERATIONS = 100
MAX_STEP_HALVINGS = 40
SYNTHETIC_PIECES = 48
REFERENCE_SAMPLE_SIZE = 200_000
REFERENCE_STREAM = 0x5EED_4EF

NuisanceFitter = Callable[[Sample], Tuple[ConditionalHazardModel, ConditionalHazardModel]]


@dataclass(frozen=True, eq=False)
class ExposureRecords:
    """Poisson-form likelihood data: exposure interval, event flag, event time."""

    entry: np.ndarray
    exit: np.ndarray
    event: np.ndarray
    event_time: np.ndarray
    z: np.ndarray
    horizon: float
    reverse_time: bool


def exposure_records(sample: Sample, target: str) -> ExposureRecords:
    """
    Map a sample to exposure records for one fitting target.

    censoring/event        exposure [0, t~], event delta
    censoring/coarsening   exposure [0, t~], event (1 - delta) * 1(t~ < tau_max)
    truncation/event       exposure [q, t], event 1 (delayed entry)
    truncation/coarsening  reverse time: exposure [q, min(t, tau_max)], event 1(q > 0) at q
    """
    if target not in ("event", "coarsening"):
        raise ValidationError(f"unknown fitting target {target!r}")
    if isinstance(sample, CensoringSample):
        zeros = np.zeros(len(sample))
        if target == "event":
            event = sample.delta.astype(float)
        else:
            event = ((sample.delta == 0) & (sample.t_tilde < sample.tau_max)).astype(float)
        return ExposureRecords(
            zeros, sample.t_tilde, event, sample.t_tilde, sample.z, math.inf, False
        )
    if target == "event":
        return ExposureRecords(
            sample.q, sample.t, np.ones(len(sample)), sample.t, sample.z, math.inf, False
        )
    if not math.isfinite(sample.tau_max):
        raise ValidationError("the reverse-time truncation model needs a finite tau_max")
    exit_time = np.minimum(sample.t, sample.tau_max)
    event = (sample.q > 0).astype(float)
    return ExposureRecords(
        sample.q, exit_time, event, sample.q, sample.z, sample.tau_max, True
    )


def default_cutpoints(records: ExposureRecords) -> Tuple[float, ...]:
    """Quartiles of the observed target event times (none if fewer than 4 events)."""
    times = records.event_time[records.event > 0]
    if times.size < 4:
        return ()
    quartiles = np.unique(np.quantile(times, [0.25, 0.5, 0.75]))
    upper = records.horizon if math.isfinite(records.horizon) else math.inf
    return tuple(float(c) for c in quartiles if 0.0 < c < upper)


def _piece_tables(
    records: ExposureRecords, cutpoints: Sequence[float]
) -> Tuple[np.ndarray, np.ndarray]:
    """Exposure (n x K) and event (n x K) matrices over the pieces."""
    edges = np.concatenate(([0.0], cutpoints, [math.inf]))
    lo = np.maximum(records.entry[:, None], edges[None, :-1])
    hi = np.minimum(records.exit[:, None], edges[None, 1:])
    exposure = np.clip(hi - lo, 0.0, None)
    piece = np.searchsorted(np.asarray(cutpoints, dtype=float), records.event_time, side="right")
    events = np.zeros_like(exposure)
    events[np.arange(records.event.size), piece] = records.event
    return exposure, events


def _log_likelihood(
    alpha: np.ndarray, beta: float, z: np.ndarray, exposure: np.ndarray, events: np.ndarray
) -> float:
    eta = alpha[None, :] + beta * z[:, None]
    return float(np.sum(events * eta) - np.sum(np.exp(eta) * exposure))


def fit_piecewise_exponential(
    sample: Sample,
    target: str,
    cutpoints: Optional[Sequence[float]] = None,
    include_covariate: bool = True,
) -> ConditionalHazardModel:
    """
    Maximum likelihood for a piecewise-exponential proportional hazard.

    Maximises the Poisson-form likelihood sum d*(a_k + b z) - exp(a_k + b z) E
    by damped Newton iterations until the mean score has norm <= 1e-10.
    Without the covariate the coefficient is fixed at 0 (the misspecified
    model) and the solution is closed form: events / exposure per piece.

    Args:
        sample: Censoring or truncation sample
        target: ``event`` or ``coarsening``
        cutpoints: Piece boundaries; defaults to quartiles of the event times
        include_covariate: Estimate the log-linear covariate coefficient

    Returns:
        Fitted model with metadata n, log_likelihood, iterations, score_norm

    Raises:
        FittingError: A piece with zero exposure or zero events, or no
            convergence within 100 iterations (trace in context)
    """
    records = exposure_records(sample, target)
    cuts = tuple(default_cutpoints(records) if cutpoints is None else cutpoints)
    exposure, events = _piece_tables(records, cuts)
    total_exposure = exposure.sum(axis=0)
    total_events = events.sum(axis=0)
    for k, (e, d) in enumerate(zip(total_exposure, total_events)):
        if e <= 0 or d <= 0:
            raise FittingError(
                f"piece {k} of the {target} model has exposure {e:.6g} and {int(d)} events",
                suggestions=["Use fewer cutpoints", "Increase the sample size"],
                context={"target": target, "piece": k},
            )

    n = len(sample)
    z = records.z
    alpha = np.log(total_events / total_exposure)
    beta = 0.0
    trace: List[float] = []
    iterations = 0

    while include_covariate:
        eta = alpha[None, :] + beta * z[:, None]
        mu = np.exp(eta) * exposure
        mu_k = mu.sum(axis=0)
        z_mu = (z[:, None] * mu).sum(axis=0)
        grad = np.append(total_events - mu_k, np.sum(z[:, None] * events) - z_mu.sum())
        score_norm = float(np.linalg.norm(grad) / n)
        trace.append(score_norm)
        if score_norm <= GRADIENT_TOLERANCE:
            break
        if iterations >= MAX_NEWTON_ITERATIONS:
            raise FittingError(
                f"Newton iterations for the {target} model did not converge",
                suggestions=["Check the covariate has variation", "Use fewer cutpoints"],
                context={"target": target, "trace": trace},
            )
        k = alpha.size
        info = np.zeros((k + 1, k + 1))
        info[np.arange(k), np.arange(k)] = mu_k
        info[:k, k] = info[k, :k] = z_mu
        info[k, k] = float(np.sum((z**2)[:, None] * mu))
        step = np.linalg.solve(info, grad)

        current = _log_likelihood(alpha, beta, z, exposure, events)
        scale = 1.0
        for _ in range(MAX_STEP_HALVINGS):
            trial_alpha = alpha + scale * step[:k]
            trial_beta = beta + scale * step[k]
            if _log_likelihood(trial_alpha, trial_beta, z, exposure, events) >= current:
                break
            scale *= 0.5
        alpha, beta = trial_alpha, float(trial_beta)
        iterations += 1

    log_likelihood = _log_likelihood(alpha, beta, z, exposure, events)
    logger.debug(
        "fitted %s model: %d pieces, beta=%.6g, %d Newton iterations",
        target,
        alpha.size,
        beta,
        iterations,
    )
    return ConditionalHazardModel(
        cutpoints=cuts,
        log_baseline=tuple(float(a) for a in alpha),
        covariate_coefficient=beta,
        horizon=records.horizon,
        reverse_time=records.reverse_time,
        fitted=True,
        metadata={
            "n": n,
            "log_likelihood": log_likelihood,
            "iterations": iterations,
            "score_norm": trace[-1] if trace else 0.0,
        },
    )


def nelson_aalen_stratified(
    sample: Sample, target: str, boundaries: Sequence[float] = ()
) -> StratifiedNPEstimate:
    """
    Nelson-Aalen cumulative hazard per covariate stratum.

    Each stratum path jumps by d_j / r_j at its distinct event times, where
    r_j counts subjects with entry < t_j <= exit. Delayed entry (truncation
    event target) is supported; the reverse-time target is not.

    Raises:
        ValidationError: On an empty stratum or the reverse-time target
    """
    records = exposure_records(sample, target)
    if records.reverse_time:
        raise ValidationError("Nelson-Aalen is only implemented for forward-time targets")
    bounds = tuple(float(b) for b in boundaries)
    strata = np.searchsorted(np.asarray(bounds, dtype=float), records.z, side="right")
    paths, sizes = [], []
    for s in range(len(bounds) + 1):
        members = strata == s
        if not np.any(members):
            raise ValidationError(
                f"covariate stratum {s} is empty", context={"boundaries": list(bounds)}
            )
        entry, exit_time = records.entry[members], records.exit[members]
        times = exit_time[records.event[members] > 0]
        event_times, counts = np.unique(times, return_counts=True)
        at_risk = np.array(
            [np.count_nonzero((entry < t) & (t <= exit_time)) for t in event_times]
        )
        paths.append(StepPath(0.0, event_times, np.cumsum(counts / at_risk)))
        sizes.append(int(np.count_nonzero(members)))
    return StratifiedNPEstimate(bounds, tuple(paths), tuple(sizes))


def synthetic_rate(
    truth: ConditionalHazardModel,
    alpha: float,
    amplitude: float,
    n: int,
    shape_seed: int,
    span: float,
) -> ConditionalHazardModel:
    """
    Perturb a hazard smoothly at a controlled rate.

    Returns lambda(t|z) * exp(amplitude * n**-alpha * zeta(t)), with zeta the
    seeded cosine shape, discretised on 48 equal pieces of [0, span] so the
    result stays piecewise exponential. ``amplitude == 0`` returns ``truth``.
    """
    if amplitude == 0:
        return truth
    if not 0.0 < alpha < 1.0:
        raise ValidationError(f"rate exponent must lie in (0, 1), got {alpha}")
    epsilon = amplitude * float(n) ** (-alpha)
    shape = ShapeFunction.from_seed(shape_seed, span)
    grid = np.linspace(0.0, span, SYNTHETIC_PIECES + 1)[1:]
    cuts = np.union1d(grid, np.asarray(truth.cutpoints, dtype=float))
    edges = np.concatenate(([0.0], cuts))
    right = np.concatenate((cuts, [math.inf]))
    mids = np.where(edges < span, 0.5 * (edges + np.minimum(right, span)), span)
    truth_log = np.array(truth.log_baseline)[
        np.searchsorted(np.asarray(truth.cutpoints, dtype=float), edges, side="right")
    ]
    log_baseline = truth_log + epsilon * shape(mids)
    return ConditionalHazardModel(
        cutpoints=tuple(float(c) for c in cuts),
        log_baseline=tuple(float(v) for v in log_baseline),
        covariate_coefficient=truth.covariate_coefficient,
        horizon=truth.horizon,
        reverse_time=truth.reverse_time,
        metadata={"epsilon": epsilon, "alpha": alpha, "shape_seed": shape_seed},
    )


def _true_model(target: str, dgp: DgpSpec) -> ConditionalHazardModel:
    event, coarsening = true_nuisance(dgp)
    return event if target == "event" else coarsening


def build_nuisance(
    spec: NuisanceSpec, dgp: DgpSpec, sample: Sample, n: int
) -> ConditionalHazardModel:
    """
    Produce one nuisance model according to its mode.

    ``n`` is the study sample size (it sets the synthetic perturbation
    size, also when ``sample`` is a cross-fitting training fold).
    """
    truth = _true_model(spec.target, dgp)
    if spec.mode == "oracle":
        return truth
    if spec.mode == "synthetic-rate":
        return synthetic_rate(
            truth, spec.alpha, spec.amplitude, n, spec.shape_seed, dgp.tau_max
        )
    return fit_piecewise_exponential(
        sample, spec.target, include_covariate=spec.mode == "fitted-correct"
    )


def make_fitter(
    event_spec: NuisanceSpec, coarsening_spec: NuisanceSpec, dgp: DgpSpec, n: int
) -> NuisanceFitter:
    """Fitter returning (event model, coarsening model) for a training sample."""

    def fitter(sample: Sample) -> Tuple[ConditionalHazardModel, ConditionalHazardModel]:
        return (
            build_nuisance(event_spec, dgp, sample, n),
            build_nuisance(coarsening_spec, dgp, sample, n),
        )

    return fitter


@functools.lru_cache(maxsize=32)
def _misspecified_limit(target: str, dgp: DgpSpec, seed: int) -> ConditionalHazardModel:
    reference = generate(dgp, REFERENCE_SAMPLE_SIZE, derive_seed(seed, REFERENCE_STREAM))
    logger.info("fitted the misspecified %s limit on %d reference draws", target, len(reference))
    return fit_piecewise_exponential(reference, target, include_covariate=False)


def limit_model(spec: NuisanceSpec, dgp: DgpSpec, seed: int = 0) -> ConditionalHazardModel:
    """
    Large-sample limit of a nuisance mode.

    Truth for oracle, fitted-correct and synthetic-rate; for
    fitted-misspecified, the covariate-free fit on a pinned reference sample.
    """
    if spec.mode == "fitted-misspecified":
        return _misspecified_limit(spec.target, dgp, int(seed))
    return _true_model(spec.target, dgp)
