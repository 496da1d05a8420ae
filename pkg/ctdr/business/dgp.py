"""Reproducible data-generating processes with known nuisances and estimand."""

import logging
import math
from typing import Callable, Literal, Tuple, Union, overload

import numpy as np
from scipy import integrate, special

from ctdr.business.dgp_models import (
    CensoringSample,
    DgpSpec,
    LatentDraws,
    Sample,
    TruncationSample,
)
from ctdr.business.nuisance_models import ConditionalHazardModel
from ctdr.core.errors import ConfigurationError, ValidationError

logger = logging.getLogger(__name__)

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
MIN_SELECTION_PROBABILITY = 0.01
QUAD_RELATIVE_TOLERANCE = 1e-10


def splitmix64(value: int) -> int:
    """One splitmix64 step: advance by the golden gamma and finalize."""
    z = (value + GOLDEN_GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def replication_seed(master_seed: int, index: int) -> int:
    """Seed of replication ``index``: the index XOR-folded into the master seed."""
    return splitmix64((int(master_seed) ^ int(index)) & MASK64)


def derive_seed(seed: int, stream: int) -> int:
    """Independent sub-stream seed (fold shuffles, reference samples)."""
    return splitmix64((int(seed) ^ splitmix64(int(stream))) & MASK64)


def _draw_covariate(spec: DgpSpec, rng: np.random.Generator, n: int) -> np.ndarray:
    if spec.covariate == "bernoulli":
        return (rng.random(n) < spec.covariate_p).astype(float)
    return rng.random(n)


def _covariate_expectation(spec: DgpSpec, func: Callable[[float], float]) -> float:
    """E_Z[func(Z)] for the configured covariate law."""
    if spec.covariate == "bernoulli":
        p = spec.covariate_p
        return (1.0 - p) * float(func(0.0)) + p * float(func(1.0))
    value, _ = integrate.quad(
        lambda z: float(func(z)), 0.0, 1.0, epsabs=0.0, epsrel=QUAD_RELATIVE_TOLERANCE
    )
    return value


def true_estimand(spec: DgpSpec) -> float:
    """
    Survival probability P(T > t0) = E_Z[exp(-rate(Z) * t0)].

    Closed form for a Bernoulli covariate, adaptive quadrature (relative
    tolerance 1e-10) for a uniform one.
    """
    return _covariate_expectation(
        spec, lambda z: math.exp(-float(spec.event_rate_at(z)) * spec.horizon)
    )


def selection_probability(spec: DgpSpec) -> float:
    """
    Probability that a candidate draw is retained (Q <= T).

    For the reflected-exponential truncation law, conditionally on z:
    P(Q <= T) = lam * exp(-rho tau) * tau * exprel((rho - lam) tau) + exp(-lam tau)
    with lam the event rate and rho the reverse-time truncation rate.
    Always 1 for the censoring scenario.
    """
    if spec.scenario == "censoring":
        return 1.0
    tau = spec.tau_max

    def conditional(z: float) -> float:
        lam = float(spec.event_rate_at(z))
        rho = float(spec.coarsening_rate_at(z))
        inside = lam * math.exp(-rho * tau) * tau * float(special.exprel((rho - lam) * tau))
        return inside + math.exp(-lam * tau)

    return _covariate_expectation(spec, conditional)


def true_nuisance(
    spec: DgpSpec,
) -> Tuple[ConditionalHazardModel, ConditionalHazardModel]:
    """
    The exact generating hazards as (event model, coarsening model).

    The coarsening model is the censoring hazard for ``censoring`` and the
    reverse-time hazard of the truncation time (horizon tau_max) for
    ``truncation``. A zero coarsening rate is encoded as log rate -inf.
    """
    event = ConditionalHazardModel(
        log_baseline=(math.log(spec.event_rate),),
        covariate_coefficient=spec.event_coef,
    )
    log_rate = math.log(spec.coarsening_rate) if spec.coarsening_rate > 0 else -math.inf
    if spec.scenario == "censoring":
        coarsening = ConditionalHazardModel(
            log_baseline=(log_rate,), covariate_coefficient=spec.coarsening_coef
        )
    else:
        coarsening = ConditionalHazardModel(
            log_baseline=(log_rate,),
            covariate_coefficient=spec.coarsening_coef,
            horizon=spec.tau_max,
            reverse_time=True,
        )
    return event, coarsening


def _exponential(rate: np.ndarray, unit: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return unit / rate


def _generate_censoring(
    spec: DgpSpec, n: int, rng: np.random.Generator
) -> Tuple[CensoringSample, LatentDraws]:
    z = _draw_covariate(spec, rng, n)
    event = _exponential(spec.event_rate_at(z), rng.standard_exponential(n))
    censor = _exponential(spec.coarsening_rate_at(z), rng.standard_exponential(n))
    t_tilde = np.minimum(np.minimum(event, censor), spec.tau_max)
    delta = ((event <= censor) & (event <= spec.tau_max)).astype(int)
    sample = CensoringSample(z, t_tilde, delta, tau_max=spec.tau_max)
    return sample, LatentDraws(z, event, censor)


def _generate_truncation(
    spec: DgpSpec, n: int, rng: np.random.Generator
) -> Tuple[TruncationSample, LatentDraws]:
    acceptance = selection_probability(spec)
    if acceptance < MIN_SELECTION_PROBABILITY:
        raise ConfigurationError(
            f"truncation too severe: selection probability {acceptance:.3g} < "
            f"{MIN_SELECTION_PROBABILITY}",
            suggestions=[
                "Lower dgp.coarsening_rate so truncation times sit closer to tau_max",
                "Lower dgp.event_rate or dgp.tau_max",
            ],
            context={"key": "dgp.coarsening_rate"},
        )

    kept_z, kept_q, kept_t = [], [], []
    all_z, all_q, all_t = [], [], []
    retained = 0
    while retained < n:
        batch = int(math.ceil((n - retained) / acceptance * 1.2)) + 16
        z = _draw_covariate(spec, rng, batch)
        event = _exponential(spec.event_rate_at(z), rng.standard_exponential(batch))
        reflected = _exponential(spec.coarsening_rate_at(z), rng.standard_exponential(batch))
        q = np.maximum(spec.tau_max - reflected, 0.0)
        keep = q <= event
        all_z.append(z)
        all_q.append(q)
        all_t.append(event)
        kept_z.append(z[keep])
        kept_q.append(q[keep])
        kept_t.append(event[keep])
        retained += int(np.count_nonzero(keep))

    sample = TruncationSample(
        np.concatenate(kept_z)[:n],
        np.concatenate(kept_q)[:n],
        np.concatenate(kept_t)[:n],
        tau_max=spec.tau_max,
    )
    latent = LatentDraws(np.concatenate(all_z), np.concatenate(all_t), np.concatenate(all_q))
    return sample, latent


@overload
def generate(spec: DgpSpec, n: int, seed: int, latent: Literal[False] = ...) -> Sample: ...


@overload
def generate(
    spec: DgpSpec, n: int, seed: int, latent: Literal[True]
) -> Tuple[Sample, LatentDraws]: ...


def generate(
    spec: DgpSpec, n: int, seed: int, latent: bool = False
) -> Union[Sample, Tuple[Sample, LatentDraws]]:
    """
    Draw ``n`` i.i.d. observations, deterministically given (spec, n, seed).

    Censoring: T|Z and C|Z exponential, observed min(T, C, tau_max) with
    delta = 1(T <= C, T <= tau_max). Truncation: T|Z exponential and Q|Z
    reflected exponential, Q = max(tau_max - E, 0) with E|Z exponential at
    the coarsening rate, so G(t|z) = exp(-rate(z) * (tau_max - t)) on
    [0, tau_max]; Q and T are independent given Z and pairs with q > t are
    rejected until ``n`` are retained.

    Args:
        spec: Data-generating process
        n: Sample size (>= 1)
        seed: Generator seed (any nonnegative integer)
        latent: Also return the pre-coarsening draws

    Raises:
        ValidationError: If ``n`` < 1
        ConfigurationError: If truncation retains fewer than 1% of draws
    """
    if n < 1:
        raise ValidationError(f"sample size must be >= 1, got {n}")
    rng = np.random.default_rng(int(seed))
    if spec.scenario == "censoring":
        sample, draws = _generate_censoring(spec, n, rng)
    else:
        sample, draws = _generate_truncation(spec, n, rng)
    logger.debug("generated %d %s observations (seed=%d)", n, spec.scenario, seed)
    return (sample, draws) if latent else sample
