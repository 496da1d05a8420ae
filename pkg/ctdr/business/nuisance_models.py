"""Data models for nuisance hazard models and their estimates."""

import math
from dataclasses import dataclass, field
from typing import Any, Dict, Mapping, Sequence, Tuple, Union

import numpy as np

from ctdr.business.path_models import FiniteVariationPath, StepPath
from ctdr.core.errors import ConfigurationError, ValidationError

TARGETS = ("event", "coarsening")
MODES = ("oracle", "fitted-correct", "fitted-misspecified", "synthetic-rate")

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True, eq=False)
class ConditionalHazardModel:
    """
    Piecewise-constant proportional hazard
    lambda(t|z) = exp(log_baseline[k] + covariate_coefficient * z) on piece k.

    Pieces are [0, c_1), [c_1, c_2), ..., [c_K, inf). The hazard is zero at
    and after ``horizon``. With ``reverse_time`` the model describes the
    reverse-time hazard of a truncation time Q on [0, horizon], and
    ``distribution`` returns G(t|z) = P(Q <= t | z) =
    exp(-(Lambda(horizon|z) - Lambda(t|z))).
    """

    cutpoints: Tuple[float, ...] = ()
    log_baseline: Tuple[float, ...] = (0.0,)
    covariate_coefficient: float = 0.0
    horizon: float = math.inf
    reverse_time: bool = False
    fitted: bool = False
    metadata: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        cutpoints = tuple(float(c) for c in self.cutpoints)
        log_baseline = tuple(float(v) for v in self.log_baseline)
        if len(log_baseline) != len(cutpoints) + 1:
            raise ValidationError(
                f"{len(cutpoints)} cutpoints need {len(cutpoints) + 1} log rates, "
                f"got {len(log_baseline)}"
            )
        if any(not math.isfinite(c) or c <= 0 for c in cutpoints):
            raise ValidationError("cutpoints must be finite and positive")
        if any(b <= a for a, b in zip(cutpoints, cutpoints[1:])):
            raise ValidationError("cutpoints must be strictly increasing")
        if any(math.isnan(v) or v == math.inf for v in log_baseline):
            raise ValidationError("log rates must be finite or -inf (zero hazard)")
        if not math.isfinite(self.covariate_coefficient):
            raise ValidationError("covariate coefficient must be finite")
        if not self.horizon > 0:
            raise ValidationError("horizon must be positive")
        if self.reverse_time and not math.isfinite(self.horizon):
            raise ValidationError("a reverse-time model needs a finite horizon")
        object.__setattr__(self, "cutpoints", cutpoints)
        object.__setattr__(self, "log_baseline", log_baseline)
        object.__setattr__(self, "covariate_coefficient", float(self.covariate_coefficient))
        object.__setattr__(self, "metadata", dict(self.metadata))

        edges = np.concatenate(([0.0], cutpoints))
        rates = np.exp(np.array(log_baseline))
        widths = np.diff(edges)
        cumulative = np.concatenate(([0.0], np.cumsum(rates[:-1] * widths)))
        object.__setattr__(self, "_edges", edges)
        object.__setattr__(self, "_base_rates", rates)
        object.__setattr__(self, "_base_cumulative", cumulative)

    @property
    def n_pieces(self) -> int:
        return len(self.log_baseline)

    @property
    def is_zero(self) -> bool:
        """True when the hazard vanishes everywhere."""
        return bool(np.all(self._base_rates == 0.0))

    def piece_edges(self) -> np.ndarray:
        """Finite times where the hazard may change (cutpoints and horizon)."""
        edges = [c for c in self.cutpoints if c < self.horizon]
        if math.isfinite(self.horizon):
            edges.append(self.horizon)
        return np.array(edges, dtype=float)

    def _piece(self, t: np.ndarray) -> np.ndarray:
        return np.searchsorted(np.array(self.cutpoints), t, side="right")

    def _risk(self, z: ArrayLike) -> np.ndarray:
        return np.exp(self.covariate_coefficient * np.asarray(z, dtype=float))

    def hazard(self, t: ArrayLike, z: ArrayLike) -> np.ndarray:
        """Hazard at ``t`` (right-continuous in t)."""
        t = np.asarray(t, dtype=float)
        rate = self._base_rates[self._piece(t)] * self._risk(z)
        return np.where(t < self.horizon, rate, 0.0)

    def cumulative_hazard(self, t: ArrayLike, z: ArrayLike) -> np.ndarray:
        """Lambda(t|z), continuous and piecewise linear in t."""
        t = np.minimum(np.asarray(t, dtype=float), self.horizon)
        if np.any(t < 0):
            raise ValidationError("cumulative hazard is defined for t >= 0")
        k = self._piece(t)
        base = self._base_cumulative[k] + self._base_rates[k] * (t - self._edges[k])
        return base * self._risk(z)

    def survival(self, t: ArrayLike, z: ArrayLike) -> np.ndarray:
        """exp(-Lambda(t|z)), the product limit of a continuous hazard."""
        return np.exp(-self.cumulative_hazard(t, z))

    def distribution(self, t: ArrayLike, z: ArrayLike) -> np.ndarray:
        """F(t|z) = 1 - S(t|z), or G(t|z) for a reverse-time model."""
        if self.reverse_time:
            total = self.cumulative_hazard(self.horizon, z)
            return np.exp(-(total - self.cumulative_hazard(t, z)))
        return -np.expm1(-self.cumulative_hazard(t, z))

    def cumulative_path(
        self, z: float, until: float = math.inf, start: float = 0.0
    ) -> FiniteVariationPath:
        """Lambda(.|z) restricted to [start, until] as an exact path (zero before start)."""
        end = min(until, self.horizon)
        edges = np.concatenate((self._edges, [math.inf]))
        segments = []
        for k in range(self.n_pieces):
            lo, hi = max(edges[k], start), min(edges[k + 1], end)
            rate = float(self._base_rates[k] * self._risk(z))
            if hi > lo and rate > 0.0:
                if not math.isfinite(hi):
                    raise ValidationError(
                        "an unbounded cumulative path needs a finite 'until'"
                    )
                segments.append((float(lo), float(hi), rate))
        return FiniteVariationPath(jumps=(), density_segments=tuple(segments))

    def with_metadata(self, **updates: Any) -> "ConditionalHazardModel":
        merged = dict(self.metadata)
        merged.update(updates)
        return ConditionalHazardModel(
            self.cutpoints,
            self.log_baseline,
            self.covariate_coefficient,
            self.horizon,
            self.reverse_time,
            self.fitted,
            merged,
        )

    def to_record(self) -> Dict[str, Any]:
        """Plain structure for YAML serialisation."""
        return {
            "cutpoints": list(self.cutpoints),
            "log_baseline": [v if math.isfinite(v) else "-inf" for v in self.log_baseline],
            "covariate_coefficient": self.covariate_coefficient,
            "horizon": self.horizon if math.isfinite(self.horizon) else "inf",
            "reverse_time": self.reverse_time,
            "fitted": self.fitted,
            "metadata": {k: _plain(v) for k, v in self.metadata.items()},
        }

    @classmethod
    def from_record(cls, record: Mapping[str, Any]) -> "ConditionalHazardModel":
        try:
            return cls(
                cutpoints=tuple(record.get("cutpoints", ())),
                log_baseline=tuple(float(v) for v in record["log_baseline"]),
                covariate_coefficient=float(record.get("covariate_coefficient", 0.0)),
                horizon=float(record.get("horizon", math.inf)),
                reverse_time=bool(record.get("reverse_time", False)),
                fitted=bool(record.get("fitted", False)),
                metadata=dict(record.get("metadata") or {}),
            )
        except (KeyError, TypeError) as e:
            raise ValidationError(f"malformed model record: {e}") from e


def _plain(value: Any) -> Any:
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return value


@dataclass(frozen=True)
class NuisanceSpec:
    """How one nuisance is obtained in a replication."""

    target: str
    mode: str = "fitted-correct"
    misspecification: str = "omit-covariate"
    alpha: float = 0.3
    amplitude: float = 1.0
    shape_seed: int = 7

    def __post_init__(self) -> None:
        if self.target not in TARGETS:
            raise ConfigurationError(
                f"unknown nuisance target {self.target!r}",
                suggestions=[f"Use one of: {', '.join(TARGETS)}"],
            )
        key = f"nuisance.{self.target}"
        if self.mode not in MODES:
            raise ConfigurationError(
                f"unknown nuisance mode {self.mode!r}",
                suggestions=[f"Use one of: {', '.join(MODES)}"],
                context={"key": f"{key}.mode"},
            )
        if self.misspecification != "omit-covariate":
            raise ConfigurationError(
                f"unsupported misspecification {self.misspecification!r}",
                suggestions=["Only 'omit-covariate' is implemented"],
            )
        if self.mode == "synthetic-rate":
            if not 0.0 < self.alpha < 1.0:
                raise ConfigurationError(
                    f"rate exponent must lie in (0, 1), got {self.alpha}",
                    context={"key": f"{key}.alpha"},
                )
            if self.amplitude < 0:
                raise ConfigurationError(
                    f"amplitude must be nonnegative, got {self.amplitude}",
                    context={"key": f"{key}.amplitude"},
                )


@dataclass(frozen=True, eq=False)
class StratifiedNPEstimate:
    """Per-stratum Nelson-Aalen cumulative hazards; strata split z at ``boundaries``."""

    boundaries: Tuple[float, ...]
    paths: Tuple[StepPath, ...]
    stratum_sizes: Tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if len(self.paths) != len(self.boundaries) + 1:
            raise ValidationError("need one path per stratum")

    def stratum_of(self, z: ArrayLike) -> np.ndarray:
        return np.searchsorted(np.array(self.boundaries, dtype=float), z, side="right")

    def path_for(self, z: float) -> StepPath:
        return self.paths[int(self.stratum_of(z))]


@dataclass(frozen=True, eq=False)
class ShapeFunction:
    """
    Smooth perturbation shape: a three-term cosine series on [0, span],
    normalised to sup 1 and continued constantly after ``span``.
    """

    weights: Tuple[float, float, float]
    span: float
    scale: float = 1.0

    def __call__(self, t: ArrayLike) -> np.ndarray:
        t = np.minimum(np.asarray(t, dtype=float), self.span)
        phase = np.pi * t / self.span
        raw = (
            self.weights[0]
            + self.weights[1] * np.cos(phase)
            + self.weights[2] * np.cos(2.0 * phase)
        )
        return raw / self.scale

    @classmethod
    def from_seed(cls, seed: int, span: float) -> "ShapeFunction":
        """
        Seeded shape with the constant weight pinned to 1 and the two cosine
        weights drawn uniformly from [-0.3, 0.3], so the shape stays positive
        (at least 0.25 after normalisation to sup 1).
        """
        rng = np.random.default_rng(int(seed))
        w1, w2 = rng.uniform(-0.3, 0.3, size=2)
        weights = (1.0, float(w1), float(w2))
        grid = np.linspace(0.0, span, 4097)
        raw = cls(weights, span)(grid)
        return cls(weights, span, float(np.max(np.abs(raw))))

