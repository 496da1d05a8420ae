"""Doubly robust estimating functions, the model-DR solver and its sandwich SE.

Both coarsening problems use D(T, Z; theta) = 1(T > t0) - theta, so every
estimating function is linear in theta: Xi_i(theta) = a_i - b_i * theta.
``EstimatingFunctionPlugin.terms`` computes (a, b) in closed form for whole
samples; ``EstimatingFunctionPlugin.xi`` evaluates one observation by
assembling the martingale increment as a path and calling ``rs_integrate``.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, ClassVar, Sequence, Tuple

import numpy as np
from scipy import special

from ctdr.business.dgp_models import (
    SCENARIOS,
    CensoringObservation,
    CensoringSample,
    Observation,
    Sample,
    TruncationObservation,
    TruncationSample,
)
from ctdr.business.estimator_models import EstimateResult, EstimatingTerms
from ctdr.business.nuisance_models import ConditionalHazardModel
from ctdr.business.path_models import FiniteVariationPath, SmoothIntegrand
from ctdr.business.stepfun import product_limit, rs_integrate
from ctdr.core.errors import PositivityError, SolverError, ValidationError

logger = logging.getLogger(__name__)

POSITIVITY_FLOOR = 1e-12
MAX_INVERSE_WEIGHT = 1.0 / POSITIVITY_FLOOR
DEFAULT_BRACKET = (-1.0, 2.0)
MAX_BISECTIONS = 200

ArrayFn = Callable[[np.ndarray], np.ndarray]


def _global_edges(models: Sequence[ConditionalHazardModel], extra: Sequence[float]) -> np.ndarray:
    points = np.concatenate([m.piece_edges() for m in models] + [np.asarray(extra, float)])
    points = np.unique(points[points > 0])
    return np.concatenate(([0.0], points, [math.inf]))


def _exponential_integral(
    lo: np.ndarray,
    hi: np.ndarray,
    edges: np.ndarray,
    coef: ArrayFn,
    slope: ArrayFn,
    exponent: ArrayFn,
) -> np.ndarray:
    """
    Integral of coef(t) * exp(exponent(t)) over [lo, hi], elementwise.

    ``coef`` and the derivative ``slope`` of the exponent must be constant
    between consecutive ``edges``; each piece then integrates exactly to
    coef * exp(exponent(a)) * w * exprel(slope * w).
    """
    total = np.zeros_like(lo, dtype=float)
    for left, right in zip(edges[:-1], edges[1:]):
        a = np.clip(left, lo, hi)
        b = np.clip(right, lo, hi)
        width = b - a
        active = width > 0
        if not np.any(active):
            continue
        weight = coef(a)
        with np.errstate(over="ignore", invalid="ignore"):
            piece = weight * np.exp(exponent(a)) * width * special.exprel(slope(a) * width)
        total += np.where(active & (weight != 0.0), piece, 0.0)
    return total


def _check_inverse_weight(weights: np.ndarray, ids: np.ndarray, what: str) -> None:
    bad = ~(weights <= MAX_INVERSE_WEIGHT)
    if np.any(bad):
        first = int(np.argmax(bad))
        raise PositivityError(
            f"{what} below the positivity floor {POSITIVITY_FLOOR:g}",
            suggestions=[
                "Lower the coarsening rate or the administrative horizon",
                "Check the fitted coarsening model for extreme rates",
            ],
            context={"observation": int(ids[first]), "inverse_weight": float(weights[first])},
        )


@dataclass(frozen=True, eq=False)
class EstimatingFunctionPlugin:
    """
    Xi for one coarsening problem with fixed nuisances.

    censoring:  Xi = delta D(t~)/K(t~) + int_0^t~ h(t)/K(t) dM_C(t)
    truncation: Xi = D(T)/G(T) + int m(t)/G(t) dMbar_Q(t), where the
                reverse-time residual jumps +1 at Q and has compensator
                -r(t) dt on [Q, min(T, tau)]
    """

    problem: str
    event_model: ConditionalHazardModel
    coarsening_model: ConditionalHazardModel
    horizon: float

    is_linear: ClassVar[bool] = True

    def __post_init__(self) -> None:
        if self.problem not in SCENARIOS:
            raise ValidationError(f"unknown problem {self.problem!r}")
        if self.event_model is None or self.coarsening_model is None:
            raise ValidationError("both nuisance models are required")
        if self.event_model.reverse_time:
            raise ValidationError("the event model must be a forward-time hazard")
        if self.coarsening_model.reverse_time != (self.problem == "truncation"):
            raise ValidationError(
                "the truncation problem needs a reverse-time coarsening model "
                "and the censoring problem a forward-time one"
            )
        if not 0 < self.horizon < math.inf:
            raise ValidationError(f"horizon must be finite and positive, got {self.horizon}")

    def _check_sample(self, sample: Sample) -> None:
        if sample.scenario != self.problem:
            raise ValidationError(
                f"a {self.problem} plugin cannot evaluate a {sample.scenario} sample"
            )

    def terms(self, sample: Sample) -> EstimatingTerms:
        """Closed-form (a, b) for every observation of ``sample``."""
        self._check_sample(sample)
        if isinstance(sample, CensoringSample):
            return self._censoring_terms(sample)
        return self._truncation_terms(sample)

    def values(self, sample: Sample, theta: float) -> np.ndarray:
        return self.terms(sample).values(theta)

    def _censoring_terms(self, sample: CensoringSample) -> EstimatingTerms:
        event, censor, t0 = self.event_model, self.coarsening_model, self.horizon
        z, x = sample.z, sample.t_tilde
        died = sample.delta == 1

        cum_c_x = censor.cumulative_hazard(x, z)
        cum_c_t0 = censor.cumulative_hazard(t0, z)
        with np.errstate(over="ignore"):
            inv_k = np.exp(cum_c_x)
        _check_inverse_weight(inv_k, sample.ids, "censoring survival K_C(t~|z)")

        cum_t0 = event.cumulative_hazard(t0, z)
        h_end = np.where(x >= t0, 1.0, np.exp(event.cumulative_hazard(x, z) - cum_t0))
        direct_a = np.where(died, (x > t0).astype(float), h_end) * inv_k
        direct_b = inv_k

        edges = _global_edges((event, censor), (t0,))
        early = _exponential_integral(
            np.zeros_like(x),
            np.minimum(x, t0),
            edges,
            coef=lambda t: censor.hazard(t, z),
            slope=lambda t: censor.hazard(t, z) + event.hazard(t, z),
            exponent=lambda t: censor.cumulative_hazard(t, z)
            + event.cumulative_hazard(t, z)
            - cum_t0,
        )
        late = np.where(x > t0, inv_k - np.exp(cum_c_t0), 0.0)
        compensator_a = early + late
        compensator_b = inv_k - 1.0
        return EstimatingTerms(direct_a - compensator_a, direct_b - compensator_b)

    def _truncation_terms(self, sample: TruncationSample) -> EstimatingTerms:
        event, trunc, t0 = self.event_model, self.coarsening_model, self.horizon
        z, q, t = sample.z, sample.q, sample.t

        cum_r_total = trunc.cumulative_hazard(trunc.horizon, z)

        def log_inv_g(s: np.ndarray) -> np.ndarray:
            return cum_r_total - trunc.cumulative_hazard(s, z)

        with np.errstate(over="ignore"):
            inv_g_q = np.exp(log_inv_g(q))
            inv_g_t = np.exp(log_inv_g(t))
        _check_inverse_weight(inv_g_q, sample.ids, "truncation distribution G(q|z)")

        cum_t = event.cumulative_hazard(t, z)
        with np.errstate(over="ignore"):
            inv_s_t = np.exp(cum_t)
        _check_inverse_weight(inv_s_t, sample.ids, "event survival 1 - F(t|z)")

        cum_q = event.cumulative_hazard(q, z)
        cum_t0 = event.cumulative_hazard(t0, z)
        m_a_q = np.where(q > t0, np.expm1(cum_q - cum_t0), 0.0)
        m_b_q = np.expm1(cum_q)
        direct_a = (t > t0) * inv_g_t + m_a_q * inv_g_q
        direct_b = inv_g_t + m_b_q * inv_g_q

        edges = _global_edges((event, trunc), (t0,))

        def rate(s: np.ndarray) -> np.ndarray:
            return trunc.hazard(s, z)

        def net_slope(s: np.ndarray) -> np.ndarray:
            return event.hazard(s, z) - trunc.hazard(s, z)

        start_a = np.maximum(q, t0)
        weighted_a = _exponential_integral(
            start_a,
            t,
            edges,
            coef=rate,
            slope=net_slope,
            exponent=lambda s: log_inv_g(s) + event.cumulative_hazard(s, z) - cum_t0,
        )
        with np.errstate(over="ignore"):
            inv_g_start = np.exp(log_inv_g(start_a))
        plain_a = np.where(t > start_a, inv_g_start - inv_g_t, 0.0)
        weighted_b = _exponential_integral(
            q,
            t,
            edges,
            coef=rate,
            slope=net_slope,
            exponent=lambda s: log_inv_g(s) + event.cumulative_hazard(s, z),
        )
        plain_b = inv_g_q - inv_g_t
        return EstimatingTerms(
            direct_a - (weighted_a - plain_a), direct_b - (weighted_b - plain_b)
        )

    def xi(self, observation: Observation, theta: float) -> float:
        """Xi for one observation through the generic path-integration engine."""
        if isinstance(observation, CensoringObservation):
            if self.problem != "censoring":
                raise ValidationError("a truncation plugin needs a TruncationObservation")
            return self._xi_censoring_path(observation, theta)
        if isinstance(observation, TruncationObservation):
            if self.problem != "truncation":
                raise ValidationError("a censoring plugin needs a CensoringObservation")
            return self._xi_truncation_path(observation, theta)
        raise ValidationError(f"unsupported observation type {type(observation).__name__}")

    def _kinks(self) -> Tuple[float, ...]:
        edges = _global_edges((self.event_model, self.coarsening_model), (self.horizon,))
        return tuple(float(e) for e in edges[1:-1])

    def _xi_censoring_path(self, obs: CensoringObservation, theta: float) -> float:
        event, censor, t0 = self.event_model, self.coarsening_model, self.horizon
        z, x = obs.z, obs.t_tilde
        compensator = censor.cumulative_path(z, until=x)
        k_end = product_limit(compensator, x)
        if k_end < POSITIVITY_FLOOR:
            raise PositivityError(
                "censoring survival K_C(t~|z) below the positivity floor",
                context={"t_tilde": x, "survival": k_end},
            )
        counting = FiniteVariationPath(jumps=() if obs.delta else ((x, 1.0),))
        martingale = counting - compensator

        def integrand(s: float) -> float:
            conditional = float(event.survival(max(s, t0), z) / event.survival(s, z))
            return (conditional - theta) / float(censor.survival(s, z))

        outcome = obs.delta * ((1.0 if x > t0 else 0.0) - theta) / k_end
        return outcome + rs_integrate(SmoothIntegrand(integrand, self._kinks()), martingale, x)

    def _xi_truncation_path(self, obs: TruncationObservation, theta: float) -> float:
        event, trunc, t0 = self.event_model, self.coarsening_model, self.horizon
        z, q, t = obs.z, obs.q, obs.t
        g_q = float(trunc.distribution(q, z))
        if g_q < POSITIVITY_FLOOR:
            raise PositivityError(
                "truncation distribution G(q|z) below the positivity floor",
                context={"q": q, "distribution": g_q},
            )
        compensator = trunc.cumulative_path(z, until=t, start=q)
        residual = FiniteVariationPath(jumps=((q, 1.0),)) - compensator
        f_t0 = float(event.distribution(t0, z))

        def integrand(s: float) -> float:
            f_s = float(event.distribution(s, z))
            partial = max(f_s - f_t0, 0.0) - theta * f_s
            return partial / float(event.survival(s, z)) / float(trunc.distribution(s, z))

        outcome = ((1.0 if t > t0 else 0.0) - theta) / float(trunc.distribution(t, z))
        return outcome + rs_integrate(SmoothIntegrand(integrand, self._kinks()), residual, t)


def xi_censoring(
    obs: CensoringObservation,
    event_model: ConditionalHazardModel,
    censor_model: ConditionalHazardModel,
    theta: float,
    horizon: float,
) -> float:
    """AIPCW estimating function of one right-censored observation (closed form)."""
    plugin = EstimatingFunctionPlugin("censoring", event_model, censor_model, horizon)
    sample = CensoringSample.from_observations([obs])
    return float(plugin.values(sample, theta)[0])


def xi_truncation(
    obs: TruncationObservation,
    f_model: ConditionalHazardModel,
    g_model: ConditionalHazardModel,
    theta: float,
    horizon: float,
) -> float:
    """Doubly robust estimating function of one left-truncated observation (closed form)."""
    plugin = EstimatingFunctionPlugin("truncation", f_model, g_model, horizon)
    sample = TruncationSample.from_observations([obs])
    return float(plugin.values(sample, theta)[0])


def _sandwich_se(values: np.ndarray, slope: float) -> float:
    n = values.size
    return float(math.sqrt(float(np.mean(values**2))) / abs(slope) / math.sqrt(n))


def _residual_tolerance(n: int) -> float:
    return min(1e-8, 1.0 / n)


def solve_linear(terms: EstimatingTerms) -> EstimateResult:
    """
    Exact root of the pooled linear equation: theta = sum(a) / sum(b).

    Sums are numpy pairwise reductions in index order, so the result does
    not depend on how the terms were produced (whole sample or folds).
    """
    n = len(terms)
    if n == 0:
        raise ValidationError("cannot solve an estimating equation on an empty sample")
    sum_b = float(np.sum(terms.b))
    if not sum_b > 0:
        raise SolverError(
            f"sum of estimating-function slopes is {sum_b:.6g}; need a positive value",
            suggestions=["Check the nuisance models for extreme inverse weights"],
        )
    theta = float(np.sum(terms.a)) / sum_b
    values = terms.values(theta)
    residual = float(np.mean(values))
    if abs(residual) > _residual_tolerance(n):
        raise SolverError(
            "pooled estimating equation residual exceeds its tolerance",
            context={"residual": residual, "n": n},
        )
    slope = float(np.mean(terms.b))
    return EstimateResult.wald(theta, _sandwich_se(values, slope), n, slope, residual)


def _bisect(
    mean_xi: Callable[[float], float], bracket: Tuple[float, float], tolerance: float
) -> float:
    lo, hi = bracket
    f_lo, f_hi = mean_xi(lo), mean_xi(hi)
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if np.sign(f_lo) == np.sign(f_hi):
        raise SolverError(
            f"estimating equation has no sign change on [{lo}, {hi}]",
            suggestions=["Widen the search interval"],
            context={"f_lo": f_lo, "f_hi": f_hi},
        )
    for _ in range(MAX_BISECTIONS):
        mid = 0.5 * (lo + hi)
        f_mid = mean_xi(mid)
        if abs(f_mid) <= tolerance:
            return mid
        if np.sign(f_mid) == np.sign(f_lo):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    raise SolverError("bisection did not reach the residual tolerance", context={"theta": mid})


def finite_difference_slope(
    plugin: EstimatingFunctionPlugin, sample: Sample, theta: float, step: float = 1e-5
) -> float:
    """Central difference of -mean Xi at ``theta`` (matches mean b for linear Xi)."""
    upper = float(np.mean(plugin.values(sample, theta + step)))
    lower = float(np.mean(plugin.values(sample, theta - step)))
    return -(upper - lower) / (2.0 * step)


def solve_mdr(
    sample: Sample,
    plugin: EstimatingFunctionPlugin,
    bracket: Tuple[float, float] = DEFAULT_BRACKET,
) -> EstimateResult:
    """
    Solve (1/n) sum Xi_i(theta) = 0 with fixed nuisances.

    Linear plugins are solved exactly; anything else by bisection on
    ``bracket`` until |mean Xi| <= min(1e-8, 1/n). The standard error is
    sqrt(mean Xi(theta_hat)^2) / |slope| / sqrt(n), with slope = mean b
    (the negated theta-derivative of mean Xi).

    Raises:
        SolverError: Nonpositive slope sum or no sign change in ``bracket``
        PositivityError: Inverse weights beyond the positivity floor
    """
    n = len(sample)
    if n == 0:
        raise ValidationError("cannot estimate from an empty sample")
    if getattr(plugin, "is_linear", False):
        result = solve_linear(plugin.terms(sample))
    else:
        theta = _bisect(
            lambda th: float(np.mean(plugin.values(sample, th))),
            bracket,
            _residual_tolerance(n),
        )
        values = plugin.values(sample, theta)
        slope = finite_difference_slope(plugin, sample, theta)
        result = EstimateResult.wald(
            theta, _sandwich_se(values, slope), n, slope, float(np.mean(values))
        )
    logger.debug("solved MDR equation: theta=%.10g se=%.4g n=%d", result.theta_hat, result.se, n)
    return result

