"""Data models for the censoring and truncation data-generating processes."""

import math
from dataclasses import dataclass, field
from typing import ClassVar, Dict, Sequence, Union

import numpy as np
import pandas as pd

from ctdr.core.errors import ConfigurationError, ValidationError

SCENARIOS = ("censoring", "truncation")
COVARIATE_LAWS = ("bernoulli", "uniform")


@dataclass(frozen=True)
class DgpSpec:
    """Exponential event and coarsening laws with a log-linear covariate effect.

    For ``censoring`` the coarsening law is the censoring time C|Z with
    hazard ``coarsening_rate * exp(coarsening_coef * z)``. For
    ``truncation`` it is the reverse-time hazard of the truncation time:
    ``tau_max - Q`` is exponential with that rate, truncated at ``tau_max``.
    """

    scenario: str
    covariate: str = "bernoulli"
    covariate_p: float = 0.5
    event_rate: float = 0.8
    event_coef: float = 1.0
    coarsening_rate: float = 0.4
    coarsening_coef: float = 1.0
    horizon: float = 0.6
    tau_max: float = 2.0

    def __post_init__(self) -> None:
        if self.scenario not in SCENARIOS:
            raise ConfigurationError(
                f"unknown scenario {self.scenario!r}",
                suggestions=[f"Use one of: {', '.join(SCENARIOS)}"],
                context={"key": "dgp.scenario"},
            )
        if self.covariate not in COVARIATE_LAWS:
            raise ConfigurationError(
                f"unknown covariate law {self.covariate!r}",
                suggestions=[f"Use one of: {', '.join(COVARIATE_LAWS)}"],
                context={"key": "dgp.covariate"},
            )
        if self.covariate == "bernoulli" and not 0.0 < self.covariate_p < 1.0:
            raise ConfigurationError(
                "Bernoulli covariate probability must lie in (0, 1)",
                context={"key": "dgp.covariate_p"},
            )
        if not self.event_rate > 0:
            raise ConfigurationError(
                "event rate must be positive", context={"key": "dgp.event_rate"}
            )
        if not self.coarsening_rate >= 0:
            raise ConfigurationError(
                "coarsening rate must be nonnegative",
                context={"key": "dgp.coarsening_rate"},
            )
        if not 0.0 < self.horizon < self.tau_max or not math.isfinite(self.tau_max):
            raise ConfigurationError(
                "estimand horizon must satisfy 0 < horizon < tau_max < inf",
                context={"key": "dgp.horizon"},
            )

    def event_rate_at(self, z: Union[float, np.ndarray]) -> np.ndarray:
        """Event hazard given the covariate."""
        return self.event_rate * np.exp(self.event_coef * np.asarray(z, dtype=float))

    def coarsening_rate_at(self, z: Union[float, np.ndarray]) -> np.ndarray:
        """Coarsening hazard given the covariate (reverse time for truncation)."""
        return self.coarsening_rate * np.exp(
            self.coarsening_coef * np.asarray(z, dtype=float)
        )


@dataclass(frozen=True)
class CensoringObservation:
    """One right-censored observation."""

    z: float
    t_tilde: float
    delta: int

    def __post_init__(self) -> None:
        if not math.isfinite(self.t_tilde) or self.t_tilde < 0:
            raise ValidationError(f"t_tilde must be finite and >= 0, got {self.t_tilde!r}")
        if self.delta not in (0, 1):
            raise ValidationError(f"delta must be 0 or 1, got {self.delta!r}")


@dataclass(frozen=True)
class TruncationObservation:
    """One left-truncated observation (retained because q <= t)."""

    z: float
    q: float
    t: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.q) and math.isfinite(self.t)):
            raise ValidationError("truncation and event times must be finite")
        if self.q < 0 or self.q > self.t:
            raise ValidationError(
                f"left-truncated sampling requires 0 <= q <= t, got q={self.q!r}, t={self.t!r}"
            )


def _as_ids(ids: Union[Sequence[int], np.ndarray, None], n: int) -> np.ndarray:
    if ids is None:
        return np.arange(n)
    return np.asarray(ids, dtype=int)


@dataclass(frozen=True, eq=False)
class CensoringSample:
    """Column store of right-censored observations."""

    scenario: ClassVar[str] = "censoring"
    csv_columns: ClassVar[Sequence[str]] = ("z", "t_tilde", "delta")

    z: np.ndarray
    t_tilde: np.ndarray
    delta: np.ndarray
    tau_max: float = math.inf
    ids: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        z = np.asarray(self.z, dtype=float)
        t_tilde = np.asarray(self.t_tilde, dtype=float)
        delta = np.asarray(self.delta, dtype=int)
        if not (z.shape == t_tilde.shape == delta.shape) or z.ndim != 1:
            raise ValidationError("sample columns must be 1-D and of equal length")
        if np.any(~np.isfinite(t_tilde)) or np.any(t_tilde < 0):
            raise ValidationError("t_tilde must be finite and nonnegative")
        if np.any((delta != 0) & (delta != 1)):
            raise ValidationError("delta must be 0 or 1")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "t_tilde", t_tilde)
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "ids", _as_ids(self.ids, z.size))

    def __len__(self) -> int:
        return int(self.z.size)

    def __getitem__(self, index: int) -> CensoringObservation:
        return CensoringObservation(
            float(self.z[index]), float(self.t_tilde[index]), int(self.delta[index])
        )

    @classmethod
    def from_observations(
        cls, observations: Sequence[CensoringObservation], tau_max: float = math.inf
    ) -> "CensoringSample":
        """Collect observations into columns."""
        return cls(
            z=np.array([o.z for o in observations], dtype=float),
            t_tilde=np.array([o.t_tilde for o in observations], dtype=float),
            delta=np.array([o.delta for o in observations], dtype=int),
            tau_max=tau_max,
        )

    def subset(self, indices: Union[Sequence[int], np.ndarray]) -> "CensoringSample":
        """Rows at ``indices``, keeping the original ids."""
        idx = np.asarray(indices, dtype=int)
        return CensoringSample(
            self.z[idx], self.t_tilde[idx], self.delta[idx], self.tau_max, self.ids[idx]
        )

    def to_frame(self) -> pd.DataFrame:
        """Export with the header ``z,t_tilde,delta``."""
        return pd.DataFrame({"z": self.z, "t_tilde": self.t_tilde, "delta": self.delta})


@dataclass(frozen=True, eq=False)
class TruncationSample:
    """Column store of left-truncated observations."""

    scenario: ClassVar[str] = "truncation"
    csv_columns: ClassVar[Sequence[str]] = ("z", "q", "t")

    z: np.ndarray
    q: np.ndarray
    t: np.ndarray
    tau_max: float = math.inf
    ids: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        z = np.asarray(self.z, dtype=float)
        q = np.asarray(self.q, dtype=float)
        t = np.asarray(self.t, dtype=float)
        if not (z.shape == q.shape == t.shape) or z.ndim != 1:
            raise ValidationError("sample columns must be 1-D and of equal length")
        if np.any(~np.isfinite(q)) or np.any(~np.isfinite(t)):
            raise ValidationError("truncation and event times must be finite")
        if np.any(q < 0) or np.any(q > t):
            raise ValidationError("left-truncated sampling requires 0 <= q <= t")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "ids", _as_ids(self.ids, z.size))

    def __len__(self) -> int:
        return int(self.z.size)

    def __getitem__(self, index: int) -> TruncationObservation:
        return TruncationObservation(
            float(self.z[index]), float(self.q[index]), float(self.t[index])
        )

    @classmethod
    def from_observations(
        cls, observations: Sequence[TruncationObservation], tau_max: float = math.inf
    ) -> "TruncationSample":
        """Collect observations into columns."""
        return cls(
            z=np.array([o.z for o in observations], dtype=float),
            q=np.array([o.q for o in observations], dtype=float),
            t=np.array([o.t for o in observations], dtype=float),
            tau_max=tau_max,
        )

    def subset(self, indices: Union[Sequence[int], np.ndarray]) -> "TruncationSample":
        """Rows at ``indices``, keeping the original ids."""
        idx = np.asarray(indices, dtype=int)
        return TruncationSample(
            self.z[idx], self.q[idx], self.t[idx], self.tau_max, self.ids[idx]
        )

    def to_frame(self) -> pd.DataFrame:
        """Export with the header ``z,q,t``."""
        return pd.DataFrame({"z": self.z, "q": self.q, "t": self.t})


Sample = Union[CensoringSample, TruncationSample]
Observation = Union[CensoringObservation, TruncationObservation]


@dataclass(frozen=True, eq=False)
class LatentDraws:
    """Pre-coarsening draws, exposed for debugging and oracle checks.

    For truncation these are all candidate draws before the q <= t
    selection step.
    """

    z: np.ndarray
    event_times: np.ndarray
    coarsening_times: np.ndarray

    def as_dict(self) -> Dict[str, np.ndarray]:
        return {
            "z": self.z,
            "event_times": self.event_times,
            "coarsening_times": self.coarsening_times,
        }
