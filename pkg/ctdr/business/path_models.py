"""Data models for finite-variation càdlàg paths."""

from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence, Tuple, Union

import numpy as np

from ctdr.core.errors import ValidationError


def _frozen(values: Iterable[float], name: str) -> np.ndarray:
    array = np.array(values, dtype=float).reshape(-1)
    if not np.all(np.isfinite(array)):
        raise ValidationError(
            f"{name} must be finite",
            suggestions=["Represent 'after the last breakpoint' with the terminal value"],
        )
    array.setflags(write=False)
    return array


def _check_increasing(times: np.ndarray, name: str) -> None:
    if times.size and times[0] < 0:
        raise ValidationError(f"{name} must be nonnegative, got {times[0]!r}")
    if times.size > 1 and np.any(np.diff(times) <= 0):
        raise ValidationError(
            f"{name} must be strictly increasing",
            suggestions=["Sort jump times and merge coincident jumps before building a path"],
        )


@dataclass(frozen=True, eq=False)
class StepPath:
    """Right-continuous step path with left limits.

    The value at ``t`` is the post-jump value of the last jump time ``<= t``,
    or ``initial_value`` before the first jump.
    """

    initial_value: float = 0.0
    jump_times: np.ndarray = field(default_factory=lambda: np.empty(0))
    post_jump_values: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self) -> None:
        times = _frozen(self.jump_times, "jump_times")
        values = _frozen(self.post_jump_values, "post_jump_values")
        if times.size != values.size:
            raise ValidationError(
                "StepPath needs one post-jump value per jump time "
                f"({times.size} times, {values.size} values)"
            )
        if not np.isfinite(self.initial_value):
            raise ValidationError("initial_value must be finite")
        _check_increasing(times, "jump_times")
        object.__setattr__(self, "initial_value", float(self.initial_value))
        object.__setattr__(self, "jump_times", times)
        object.__setattr__(self, "post_jump_values", values)

    @property
    def jump_sizes(self) -> np.ndarray:
        """Size of each jump (post-jump value minus pre-jump value)."""
        return np.diff(np.concatenate(([self.initial_value], self.post_jump_values)))

    def values_at(self, t: Union[float, np.ndarray]) -> np.ndarray:
        """Vectorised càdlàg evaluation."""
        index = np.searchsorted(self.jump_times, t, side="right")
        padded = np.concatenate(([self.initial_value], self.post_jump_values))
        return padded[index]

    def left_limits_at(self, t: Union[float, np.ndarray]) -> np.ndarray:
        """Vectorised evaluation of the left limit f(t-)."""
        index = np.searchsorted(self.jump_times, t, side="left")
        padded = np.concatenate(([self.initial_value], self.post_jump_values))
        return padded[index]

    def __call__(self, t: float) -> float:
        return float(self.values_at(t))

    def left_limit(self, t: float) -> float:
        """Value just before ``t``."""
        return float(self.left_limits_at(t))

    def terminal_value(self) -> float:
        """Value beyond all breakpoints (the path at infinity)."""
        if self.post_jump_values.size:
            return float(self.post_jump_values[-1])
        return self.initial_value

    def breakpoints(self) -> np.ndarray:
        """Times where the path may fail to be linear."""
        return self.jump_times

    def as_integrator(self) -> "FiniteVariationPath":
        """Re-express the path as a pure-jump finite-variation path."""
        return FiniteVariationPath.from_arrays(
            initial_value=self.initial_value,
            jump_times=self.jump_times,
            jump_sizes=self.jump_sizes,
        )

    def scaled(self, factor: float) -> "StepPath":
        """Pointwise multiple of the path."""
        return StepPath(
            self.initial_value * factor,
            self.jump_times,
            self.post_jump_values * factor,
        )

    def __neg__(self) -> "StepPath":
        return self.scaled(-1.0)


@dataclass(frozen=True, eq=False)
class FiniteVariationPath:
    """Path with a pure-jump part and a piecewise-constant-density part.

    value(t) = initial_value + sum of jump sizes at times <= t
               + sum over segments of rate * |[start, min(end, t)]|
    """

    jumps: Sequence[Tuple[float, float]] = ()
    density_segments: Sequence[Tuple[float, float, float]] = ()
    initial_value: float = 0.0

    def __post_init__(self) -> None:
        jumps = np.array(self.jumps, dtype=float).reshape(-1, 2)
        segments = np.array(self.density_segments, dtype=float).reshape(-1, 3)
        jump_times = _frozen(jumps[:, 0], "jump times")
        jump_sizes = _frozen(jumps[:, 1], "jump sizes")
        starts = _frozen(segments[:, 0], "segment starts")
        ends = _frozen(segments[:, 1], "segment ends")
        rates = _frozen(segments[:, 2], "segment rates")
        if not np.isfinite(self.initial_value):
            raise ValidationError("initial_value must be finite")
        _check_increasing(jump_times, "jump times")
        if starts.size:
            if starts[0] < 0:
                raise ValidationError("density segments must start at or after 0")
            if np.any(ends <= starts):
                raise ValidationError("every density segment needs end > start")
            if np.any(starts[1:] < ends[:-1]):
                raise ValidationError(
                    "density segments must be ordered and disjoint",
                    suggestions=["Add paths with '+' to merge overlapping densities"],
                )
        object.__setattr__(self, "initial_value", float(self.initial_value))
        object.__setattr__(self, "jumps", tuple(map(tuple, jumps.tolist())))
        object.__setattr__(self, "density_segments", tuple(map(tuple, segments.tolist())))
        object.__setattr__(self, "_jump_times", jump_times)
        object.__setattr__(self, "_jump_sizes", jump_sizes)
        object.__setattr__(self, "_starts", starts)
        object.__setattr__(self, "_ends", ends)
        object.__setattr__(self, "_rates", rates)

    @classmethod
    def from_arrays(
        cls,
        initial_value: float = 0.0,
        jump_times: Optional[Sequence[float]] = None,
        jump_sizes: Optional[Sequence[float]] = None,
        starts: Optional[Sequence[float]] = None,
        ends: Optional[Sequence[float]] = None,
        rates: Optional[Sequence[float]] = None,
    ) -> "FiniteVariationPath":
        """Build a path from parallel arrays instead of tuples."""
        empty: Sequence[float] = ()
        jumps = np.column_stack(
            (
                np.asarray(jump_times if jump_times is not None else empty, float),
                np.asarray(jump_sizes if jump_sizes is not None else empty, float),
            )
        )
        segments = np.column_stack(
            (
                np.asarray(starts if starts is not None else empty, float),
                np.asarray(ends if ends is not None else empty, float),
                np.asarray(rates if rates is not None else empty, float),
            )
        )
        return cls(jumps=jumps, density_segments=segments, initial_value=initial_value)

    @property
    def jump_times(self) -> np.ndarray:
        return self._jump_times  # type: ignore[attr-defined, no-any-return]

    @property
    def jump_sizes(self) -> np.ndarray:
        return self._jump_sizes  # type: ignore[attr-defined, no-any-return]

    @property
    def segment_starts(self) -> np.ndarray:
        return self._starts  # type: ignore[attr-defined, no-any-return]

    @property
    def segment_ends(self) -> np.ndarray:
        return self._ends  # type: ignore[attr-defined, no-any-return]

    @property
    def segment_rates(self) -> np.ndarray:
        return self._rates  # type: ignore[attr-defined, no-any-return]

    def continuous_part(self, t: Union[float, np.ndarray]) -> np.ndarray:
        """Integrated density on [0, t]."""
        t = np.asarray(t, dtype=float)
        covered = np.clip(
            np.minimum(self.segment_ends, t[..., None]) - self.segment_starts, 0.0, None
        )
        return np.sum(covered * self.segment_rates, axis=-1)

    def values_at(self, t: Union[float, np.ndarray]) -> np.ndarray:
        """Vectorised càdlàg evaluation."""
        t = np.asarray(t, dtype=float)
        cumulative = np.concatenate(([0.0], np.cumsum(self.jump_sizes)))
        index = np.searchsorted(self.jump_times, t, side="right")
        return self.initial_value + cumulative[index] + self.continuous_part(t)

    def left_limits_at(self, t: Union[float, np.ndarray]) -> np.ndarray:
        """Vectorised evaluation of the left limit f(t-)."""
        t = np.asarray(t, dtype=float)
        cumulative = np.concatenate(([0.0], np.cumsum(self.jump_sizes)))
        index = np.searchsorted(self.jump_times, t, side="left")
        return self.initial_value + cumulative[index] + self.continuous_part(t)

    def __call__(self, t: float) -> float:
        return float(self.values_at(t))

    def left_limit(self, t: float) -> float:
        """Value just before ``t``."""
        return float(self.left_limits_at(t))

    def terminal_value(self) -> float:
        """Value beyond all breakpoints (the path at infinity)."""
        lengths = self.segment_ends - self.segment_starts
        return float(
            self.initial_value
            + np.sum(self.jump_sizes)
            + np.sum(self.segment_rates * lengths)
        )

    def breakpoints(self) -> np.ndarray:
        """Jump times and segment boundaries, sorted and unique."""
        return np.unique(
            np.concatenate((self.jump_times, self.segment_starts, self.segment_ends))
        )

    def variation(self) -> float:
        """Total variation of the path, excluding the initial value."""
        lengths = self.segment_ends - self.segment_starts
        return float(
            np.sum(np.abs(self.jump_sizes)) + np.sum(np.abs(self.segment_rates) * lengths)
        )

    def is_nondecreasing(self) -> bool:
        """True when every jump and every density rate is nonnegative."""
        return bool(np.all(self.jump_sizes >= 0) and np.all(self.segment_rates >= 0))

    def as_integrator(self) -> "FiniteVariationPath":
        return self

    def scaled(self, factor: float) -> "FiniteVariationPath":
        """Pointwise multiple of the path."""
        return FiniteVariationPath.from_arrays(
            initial_value=self.initial_value * factor,
            jump_times=self.jump_times,
            jump_sizes=self.jump_sizes * factor,
            starts=self.segment_starts,
            ends=self.segment_ends,
            rates=self.segment_rates * factor,
        )

    def __neg__(self) -> "FiniteVariationPath":
        return self.scaled(-1.0)

    def __add__(self, other: "FiniteVariationPath") -> "FiniteVariationPath":
        if isinstance(other, StepPath):
            other = other.as_integrator()
        if not isinstance(other, FiniteVariationPath):
            return NotImplemented

        times = np.concatenate((self.jump_times, other.jump_times))
        sizes = np.concatenate((self.jump_sizes, other.jump_sizes))
        merged_times, inverse = np.unique(times, return_inverse=True)
        merged_sizes = np.zeros_like(merged_times)
        np.add.at(merged_sizes, inverse, sizes)
        keep = merged_sizes != 0.0

        # overlapping densities are re-split on the union of boundaries
        edges = np.unique(
            np.concatenate(
                (self.segment_starts, self.segment_ends, other.segment_starts, other.segment_ends)
            )
        )
        starts, ends = edges[:-1], edges[1:]
        mids = 0.5 * (starts + ends)
        rates = np.zeros_like(mids)
        for path in (self, other):
            inside = (path.segment_starts <= mids[:, None]) & (mids[:, None] < path.segment_ends)
            rates += inside @ path.segment_rates if path.segment_rates.size else 0.0
        dense = rates != 0.0

        return FiniteVariationPath.from_arrays(
            initial_value=self.initial_value + other.initial_value,
            jump_times=merged_times[keep],
            jump_sizes=merged_sizes[keep],
            starts=starts[dense],
            ends=ends[dense],
            rates=rates[dense],
        )

    def __sub__(self, other: "FiniteVariationPath") -> "FiniteVariationPath":
        if isinstance(other, StepPath):
            other = other.as_integrator()
        return self + (-other)


@dataclass(frozen=True)
class SmoothIntegrand:
    """Callable integrand with declared kinks.

    Used for integrands without a closed-form path representation; the
    integration engine falls back to adaptive quadrature split at
    ``breakpoints``.
    """

    func: Callable[[float], float]
    breakpoints: Tuple[float, ...] = ()

    def __call__(self, t: float) -> float:
        return float(self.func(t))

    def left_limit(self, t: float) -> float:
        """Smooth integrands are continuous, so the left limit is the value."""
        return self(t)


Path = Union[StepPath, FiniteVariationPath]
Integrand = Union[StepPath, FiniteVariationPath, SmoothIntegrand, Callable[[float], float]]


@dataclass(frozen=True)
class NormReport:
    """L2 supremum and L2 total-variation norms of a sample of path errors."""

    sup_norm: float
    tv_norm: float
    sample_size: int

    def __post_init__(self) -> None:
        if self.sup_norm < 0 or self.tv_norm < 0:
            raise ValidationError("norms must be nonnegative")
        if self.sample_size < 1:
            raise ValidationError("a norm report needs at least one path")
