"""Data models for estimating-function values and estimation results."""

import math
from dataclasses import dataclass

import numpy as np

from ctdr.core.errors import ValidationError

NORMAL_QUANTILE_975 = 1.959964


@dataclass(frozen=True, eq=False)
class EstimatingTerms:
    """Per-observation coefficients of a linear estimating function.

    Xi_i(theta) = a[i] - b[i] * theta.
    """

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self) -> None:
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if a.shape != b.shape or a.ndim != 1:
            raise ValidationError("estimating terms need 1-D arrays of equal length")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    def __len__(self) -> int:
        return int(self.a.size)

    def values(self, theta: float) -> np.ndarray:
        return self.a - self.b * theta

    def scaled(self, factor: float) -> "EstimatingTerms":
        return EstimatingTerms(self.a * factor, self.b * factor)


@dataclass(frozen=True)
class EstimateResult:
    """Point estimate, sandwich standard error and Wald interval."""

    theta_hat: float
    se: float
    ci_low: float
    ci_high: float
    n: int
    slope: float
    equation_residual: float

    def __post_init__(self) -> None:
        if math.isnan(self.se) or self.se < 0:
            raise ValidationError(f"standard error must be >= 0, got {self.se}")
        if not self.ci_low <= self.theta_hat <= self.ci_high:
            raise ValidationError("confidence interval must contain the estimate")

    @classmethod
    def wald(
        cls, theta_hat: float, se: float, n: int, slope: float, residual: float
    ) -> "EstimateResult":
        half = NORMAL_QUANTILE_975 * se
        return cls(theta_hat, se, theta_hat - half, theta_hat + half, n, slope, residual)

    def covers(self, theta: float) -> bool:
        return self.ci_low <= theta <= self.ci_high
