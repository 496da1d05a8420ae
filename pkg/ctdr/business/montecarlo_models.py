"""Data models for Monte Carlo studies and their configuration."""

import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, Mapping, Optional, Tuple, TypeVar

import numpy as np

from ctdr.business.dgp_models import COVARIATE_LAWS, SCENARIOS, DgpSpec, Sample
from ctdr.business.estimator import EstimatingFunctionPlugin
from ctdr.business.estimator_models import EstimateResult
from ctdr.business.nuisance_models import MODES, NuisanceSpec
from ctdr.core.errors import ConfigurationError, CTDRError

ESTIMATORS = ("mdr", "rdr")
STUDIES = ("scenario", "dr-matrix")
TV_DISTRIBUTIONS = ("uniform", "exponential")
MAX_FAILURE_FRACTION = 0.05
DECOMPOSITION_TOLERANCE = 1e-10

REPORT_COLUMNS = ("cell", "n", "R", "bias", "sd", "mean_se", "coverage", "mcse", "failures")
DECOMPOSITION_COLUMNS = ("rep", "T1", "T2", "T3", "T4", "T5", "T6", "reconstruction_residual")
TV_GAP_COLUMNS = ("n", "sup_err", "tv_err")
NORM_COLUMNS = ("mode", "n", "sup_err", "tv_err")
RATE_COLUMNS = ("alpha_sum", "n", "sqrtn_bias", "cross_integral")

T = TypeVar("T")
_REQUIRED = object()


@dataclass(frozen=True)
class ScenarioConfig:
    """One Monte Carlo cell: DGP, estimator, nuisance modes and run size."""

    dgp: DgpSpec
    event: NuisanceSpec
    coarsening: NuisanceSpec
    estimator: str = "mdr"
    n: int = 2000
    replications: int = 200
    master_seed: int = 20240101
    folds: int = 5
    cell: str = "scenario"

    def __post_init__(self) -> None:
        if self.estimator not in ESTIMATORS:
            raise ConfigurationError(
                f"unknown estimator {self.estimator!r}",
                suggestions=[f"Use one of: {', '.join(ESTIMATORS)}"],
                context={"key": "estimator.kind"},
            )
        if self.n < 50:
            raise ConfigurationError(
                f"sample size must be >= 50, got {self.n}", context={"key": "run.n"}
            )
        if self.replications < 1:
            raise ConfigurationError(
                "at least one replication is required", context={"key": "run.replications"}
            )
        if self.estimator == "rdr" and not 2 <= self.folds <= self.n:
            raise ConfigurationError(
                f"folds must satisfy 2 <= L <= n, got {self.folds}",
                context={"key": "estimator.folds"},
            )
        if self.event.target != "event" or self.coarsening.target != "coarsening":
            raise ConfigurationError("nuisance specs are attached to the wrong targets")

    def with_modes(self, event_mode: str, coarsening_mode: str, cell: str) -> "ScenarioConfig":
        return replace(
            self,
            event=replace(self.event, mode=event_mode),
            coarsening=replace(self.coarsening, mode=coarsening_mode),
            cell=cell,
        )


@dataclass(frozen=True, eq=False)
class ReplicationArtifacts:
    """Retained paths of one replication: the sample and the plugin per index block."""

    sample: Sample
    blocks: Tuple[Tuple[np.ndarray, EstimatingFunctionPlugin], ...]
    estimate: EstimateResult


@dataclass(frozen=True, eq=False)
class ReplicationOutcome:
    """Result of one replication; failed replications keep their error."""

    index: int
    seed: int
    estimate: Optional[EstimateResult] = None
    error: Optional[CTDRError] = None
    artifacts: Optional[ReplicationArtifacts] = None

    @property
    def succeeded(self) -> bool:
        return self.estimate is not None


@dataclass(frozen=True)
class ScenarioReport:
    """Bias, variability and coverage over the replications of one cell."""

    cell: str
    n: int
    replications: int
    true_value: float
    bias: float
    sd: Optional[float]
    mean_se: float
    coverage: float
    mcse: Optional[float]
    failures: int
    decomposition: Optional[Dict[str, float]] = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.coverage <= 1.0:
            raise ValueError(f"coverage must lie in [0, 1], got {self.coverage}")

    def to_row(self) -> Dict[str, Any]:
        """Row of ``report.csv``; absent values become None (written as NA)."""
        return {
            "cell": self.cell,
            "n": self.n,
            "R": self.replications,
            "bias": self.bias,
            "sd": self.sd,
            "mean_se": self.mean_se,
            "coverage": self.coverage,
            "mcse": self.mcse,
            "failures": self.failures,
        }


@dataclass(frozen=True)
class DecompositionReport:
    """Six-term expansion of the estimating-equation value of one replication.

    T1 cross term, T2 event-nuisance term, T3 coarsening-nuisance term,
    T4 equicontinuity term, T5 centred CLT term, T6 population drift.
    """

    replication: int
    n: int
    theta: float
    t1: float
    t2: float
    t3: float
    t4: float
    t5: float
    t6: float
    estimating_value: float
    reconstruction_residual: float

    @property
    def terms(self) -> Tuple[float, float, float, float, float, float]:
        return (self.t1, self.t2, self.t3, self.t4, self.t5, self.t6)

    def to_row(self) -> Dict[str, Any]:
        row: Dict[str, Any] = {"rep": self.replication}
        row.update({f"T{k}": v for k, v in enumerate(self.terms, start=1)})
        row["reconstruction_residual"] = self.reconstruction_residual
        return row


@dataclass(frozen=True)
class DiagnoseConfig:
    """Settings of the TV-gap, norm-decay and rate-condition studies."""

    n_grid: Tuple[int, ...] = (100, 1000, 10000)
    replications: int = 20
    distribution: str = "uniform"
    alpha_grid: Tuple[Tuple[float, float], ...] = (
        (0.2, 0.2),
        (0.25, 0.25),
        (0.3, 0.3),
        (0.4, 0.4),
    )
    amplitude: float = 1.0
    rate_n_grid: Tuple[int, ...] = (1000, 4000, 16000)
    norm_n_grid: Tuple[int, ...] = (500, 2000, 8000)


@dataclass(frozen=True)
class StudyConfig:
    """Everything a CLI command needs, parsed from one config file."""

    scenario: ScenarioConfig
    study: str = "scenario"
    diagnose: DiagnoseConfig = field(default_factory=DiagnoseConfig)
    decompose_n_grid: Tuple[int, ...] = ()


def _parse_value(raw: Mapping[str, str], key: str, parse: Callable[[str], T], default: Any) -> T:
    if key not in raw:
        if default is _REQUIRED:
            raise ConfigurationError(
                f"missing required key '{key}'",
                suggestions=[f"Add a line '{key}=<value>' to the config file"],
                context={"key": key},
            )
        return default  # type: ignore[no-any-return]
    try:
        return parse(raw[key].strip())
    except (TypeError, ValueError) as e:
        raise ConfigurationError(
            f"invalid value {raw[key]!r} for key '{key}': {e}", context={"key": key}
        ) from e


def _choice(options: Tuple[str, ...]) -> Callable[[str], str]:
    def parse(value: str) -> str:
        if value not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return value

    return parse


def _finite(value: str) -> float:
    number = float(value)
    if not math.isfinite(number):
        raise ValueError("expected a finite number")
    return number


def _seed(value: str) -> int:
    number = int(value, 0)
    if not 0 <= number < 2**64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    return number


def _int_list(value: str) -> Tuple[int, ...]:
    items = tuple(int(v) for v in value.split(",") if v.strip())
    if not items or any(v < 1 for v in items):
        raise ValueError("expected a comma-separated list of positive integers")
    return items


def _alpha_pairs(value: str) -> Tuple[Tuple[float, float], ...]:
    pairs = []
    for item in value.split(","):
        if not item.strip():
            continue
        left, sep, right = item.partition(":")
        if not sep:
            raise ValueError("expected comma-separated 'aH:aQ' pairs")
        pairs.append((float(left), float(right)))
    if not pairs:
        raise ValueError("expected at least one 'aH:aQ' pair")
    return tuple(pairs)


KNOWN_KEYS = frozenset(
    [
        "dgp.scenario",
        "dgp.covariate",
        "dgp.covariate_p",
        "dgp.event_rate",
        "dgp.event_coef",
        "dgp.coarsening_rate",
        "dgp.coarsening_coef",
        "dgp.horizon",
        "dgp.tau_max",
        "estimator.kind",
        "estimator.folds",
        "run.n",
        "run.replications",
        "run.seed",
        "run.study",
        "diagnose.n_grid",
        "diagnose.replications",
        "diagnose.distribution",
        "diagnose.alpha_grid",
        "diagnose.amplitude",
        "diagnose.rate_n_grid",
        "diagnose.norm_n_grid",
        "decompose.n_grid",
    ]
    + [
        f"nuisance.{target}.{name}"
        for target in ("event", "coarsening")
        for name in ("mode", "alpha", "amplitude", "shape_seed")
    ]
)


def _nuisance_spec(raw: Mapping[str, str], target: str, shape_seed: int) -> NuisanceSpec:
    prefix = f"nuisance.{target}"
    return NuisanceSpec(
        target=target,
        mode=_parse_value(raw, f"{prefix}.mode", _choice(MODES), "fitted-correct"),
        alpha=_parse_value(raw, f"{prefix}.alpha", _finite, 0.3),
        amplitude=_parse_value(raw, f"{prefix}.amplitude", _finite, 1.0),
        shape_seed=_parse_value(raw, f"{prefix}.shape_seed", int, shape_seed),
    )


def parse_study_config(
    raw: Mapping[str, str], seed_override: Optional[int] = None
) -> StudyConfig:
    """
    Turn flat ``dotted.key=value`` settings into typed study configuration.

    Args:
        raw: Key/value pairs from the config file
        seed_override: Master seed taking precedence over ``run.seed``

    Raises:
        ConfigurationError: Naming the offending key for every missing,
            unknown or invalid setting
    """
    unknown = sorted(set(raw) - KNOWN_KEYS)
    if unknown:
        raise ConfigurationError(
            f"unknown key '{unknown[0]}'",
            suggestions=["Check the key spelling against the documented config keys"],
            context={"key": unknown[0]},
        )

    defaults = DgpSpec(scenario="censoring")
    dgp = DgpSpec(
        scenario=_parse_value(raw, "dgp.scenario", _choice(SCENARIOS), _REQUIRED),
        covariate=_parse_value(raw, "dgp.covariate", _choice(COVARIATE_LAWS), "bernoulli"),
        covariate_p=_parse_value(raw, "dgp.covariate_p", _finite, defaults.covariate_p),
        event_rate=_parse_value(raw, "dgp.event_rate", _finite, defaults.event_rate),
        event_coef=_parse_value(raw, "dgp.event_coef", _finite, defaults.event_coef),
        coarsening_rate=_parse_value(
            raw, "dgp.coarsening_rate", _finite, defaults.coarsening_rate
        ),
        coarsening_coef=_parse_value(
            raw, "dgp.coarsening_coef", _finite, defaults.coarsening_coef
        ),
        horizon=_parse_value(raw, "dgp.horizon", _finite, defaults.horizon),
        tau_max=_parse_value(raw, "dgp.tau_max", _finite, defaults.tau_max),
    )

    master_seed = (
        seed_override
        if seed_override is not None
        else _parse_value(raw, "run.seed", _seed, ScenarioConfig.master_seed)
    )
    scenario = ScenarioConfig(
        dgp=dgp,
        event=_nuisance_spec(raw, "event", 7),
        coarsening=_nuisance_spec(raw, "coarsening", 11),
        estimator=_parse_value(raw, "estimator.kind", _choice(ESTIMATORS), "mdr"),
        n=_parse_value(raw, "run.n", int, ScenarioConfig.n),
        replications=_parse_value(raw, "run.replications", int, ScenarioConfig.replications),
        master_seed=master_seed,
        folds=_parse_value(raw, "estimator.folds", int, ScenarioConfig.folds),
    )

    base = DiagnoseConfig()
    diagnose = DiagnoseConfig(
        n_grid=_parse_value(raw, "diagnose.n_grid", _int_list, base.n_grid),
        replications=_parse_value(raw, "diagnose.replications", int, base.replications),
        distribution=_parse_value(
            raw, "diagnose.distribution", _choice(TV_DISTRIBUTIONS), base.distribution
        ),
        alpha_grid=_parse_value(raw, "diagnose.alpha_grid", _alpha_pairs, base.alpha_grid),
        amplitude=_parse_value(raw, "diagnose.amplitude", _finite, base.amplitude),
        rate_n_grid=_parse_value(raw, "diagnose.rate_n_grid", _int_list, base.rate_n_grid),
        norm_n_grid=_parse_value(raw, "diagnose.norm_n_grid", _int_list, base.norm_n_grid),
    )
    if diagnose.replications < 1:
        raise ConfigurationError(
            "at least one replication is required", context={"key": "diagnose.replications"}
        )
    for alpha_h, alpha_q in diagnose.alpha_grid:
        if not (0 < alpha_h < 1 and 0 < alpha_q < 1):
            raise ConfigurationError(
                f"rate exponents must lie in (0, 1), got {alpha_h}:{alpha_q}",
                context={"key": "diagnose.alpha_grid"},
            )

    return StudyConfig(
        scenario=scenario,
        study=_parse_value(raw, "run.study", _choice(STUDIES), "scenario"),
        diagnose=diagnose,
        decompose_n_grid=_parse_value(raw, "decompose.n_grid", _int_list, (scenario.n,)),
    )


@dataclass(frozen=True)
class ScalingRow:
    """Root-n scaling of one sample size."""

    n: int
    sd_sqrt_n: Optional[float]
    coverage: float
    se_ratio: Optional[float]


@dataclass(frozen=True)
class TvGapRow:
    """Mean sup and TV distance of an estimated to a true distribution function."""

    n: int
    sup_err: float
    tv_err: float


@dataclass(frozen=True)
class NormRow:
    """Mean sup and TV error of an estimated cumulative hazard at a fixed covariate."""

    mode: str
    n: int
    sup_err: float
    tv_err: float


@dataclass(frozen=True)
class RateRow:
    """Bias scaling and measured cross term for one synthetic-rate pair."""

    alpha_event: float
    alpha_coarsening: float
    n: int
    sqrtn_bias: float
    cross_integral: float
    coverage: float
    sqrtn_mcse: Optional[float] = None

    @property
    def alpha_sum(self) -> float:
        return self.alpha_event + self.alpha_coarsening

    def to_row(self) -> Dict[str, Any]:
        return {
            "alpha_sum": self.alpha_sum,
            "n": self.n,
            "sqrtn_bias": self.sqrtn_bias,
            "cross_integral": self.cross_integral,
        }
