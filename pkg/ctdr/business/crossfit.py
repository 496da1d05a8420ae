"""Sample splitting and the cross-fitted (rate doubly robust) estimator."""

import logging
from dataclasses import dataclass
from typing import Callable, List, Tuple

import numpy as np
from joblib import Parallel, delayed
from sklearn.model_selection import KFold

from ctdr.business.dgp_models import Sample
from ctdr.business.estimator import EstimatingFunctionPlugin, solve_linear
from ctdr.business.estimator_models import EstimateResult, EstimatingTerms
from ctdr.business.nuisance import NuisanceFitter
from ctdr.business.nuisance_models import ConditionalHazardModel
from ctdr.core.errors import CTDRError, ValidationError

logger = logging.getLogger(__name__)

DEFAULT_FOLDS = 5

PluginBuilder = Callable[
    [ConditionalHazardModel, ConditionalHazardModel], EstimatingFunctionPlugin
]


@dataclass(frozen=True, eq=False)
class FoldAssignment:
    """Balanced partition of 0..n-1 into folds labelled 1..L."""

    n: int
    folds: int
    assignment: np.ndarray
    seed: int

    def __post_init__(self) -> None:
        assignment = np.asarray(self.assignment, dtype=int)
        if assignment.shape != (self.n,):
            raise ValidationError("fold assignment needs one label per observation")
        sizes = np.bincount(assignment, minlength=self.folds + 1)[1:]
        if assignment.min() < 1 or assignment.max() > self.folds or np.any(sizes == 0):
            raise ValidationError("every fold label in [1, L] must be used")
        if sizes.max() - sizes.min() > 1:
            raise ValidationError("fold sizes may differ by at most 1")
        assignment.setflags(write=False)
        object.__setattr__(self, "assignment", assignment)

    def indices(self, fold: int) -> np.ndarray:
        """Observations held out in ``fold``."""
        return np.flatnonzero(self.assignment == fold)

    def complement(self, fold: int) -> np.ndarray:
        """Observations used to fit the nuisances for ``fold``."""
        return np.flatnonzero(self.assignment != fold)

    def sizes(self) -> List[int]:
        return [int(s) for s in np.bincount(self.assignment, minlength=self.folds + 1)[1:]]


def split_folds(n: int, folds: int, seed: int) -> FoldAssignment:
    """
    Seeded, uniformly random balanced split of n observations into L folds.

    Uses a shuffled ``KFold``; the 64-bit seed is reduced modulo 2**32 for
    the legacy generator behind ``random_state``.

    Raises:
        ValidationError: If L < 2 or L > n
    """
    if folds < 2 or folds > n:
        raise ValidationError(
            f"number of folds must satisfy 2 <= L <= n, got L={folds}, n={n}",
            context={"n": n, "L": folds},
        )
    splitter = KFold(n_splits=folds, shuffle=True, random_state=int(seed) % 2**32)
    assignment = np.empty(n, dtype=int)
    for label, (_, held_out) in enumerate(splitter.split(np.zeros((n, 1))), start=1):
        assignment[held_out] = label
    return FoldAssignment(n, folds, assignment, int(seed))


@dataclass(frozen=True, eq=False)
class CrossFitResult:
    """Pooled terms in original index order plus the per-fold plugins."""

    terms: EstimatingTerms
    folds: FoldAssignment
    plugins: Tuple[EstimatingFunctionPlugin, ...]


def _fit_fold(
    sample: Sample,
    folds: FoldAssignment,
    fold: int,
    fitter: NuisanceFitter,
    builder: PluginBuilder,
) -> Tuple[EstimatingFunctionPlugin, EstimatingTerms]:
    training = folds.complement(fold)
    held_out = folds.indices(fold)
    try:
        plugin = builder(*fitter(sample.subset(training)))
        return plugin, plugin.terms(sample.subset(held_out))
    except CTDRError as e:
        e.context["fold"] = fold
        raise


def cross_fit(
    sample: Sample,
    folds: FoldAssignment,
    fitter: NuisanceFitter,
    builder: PluginBuilder,
    n_jobs: int = 1,
) -> CrossFitResult:
    """
    Fit nuisances on each out-of-fold set and evaluate the held-out fold.

    Errors from fitting or evaluation are tagged with ``context["fold"]``.
    """
    if folds.n != len(sample):
        raise ValidationError("fold assignment and sample sizes differ")
    labels = range(1, folds.folds + 1)
    if n_jobs == 1:
        fitted = [_fit_fold(sample, folds, fold, fitter, builder) for fold in labels]
    else:
        fitted = Parallel(n_jobs=n_jobs, backend="threading")(
            delayed(_fit_fold)(sample, folds, fold, fitter, builder) for fold in labels
        )
    a = np.empty(len(sample))
    b = np.empty(len(sample))
    for fold, (_, terms) in zip(labels, fitted):
        held_out = folds.indices(fold)
        a[held_out] = terms.a
        b[held_out] = terms.b
    return CrossFitResult(EstimatingTerms(a, b), folds, tuple(p for p, _ in fitted))


def solve_rdr(
    sample: Sample,
    folds: int,
    nuisance_fitter: NuisanceFitter,
    plugin_builder: PluginBuilder,
    seed: int,
    n_jobs: int = 1,
) -> EstimateResult:
    """
    Cross-fitted estimator: every Xi_i uses nuisances fitted without fold(i).

    The pooled linear equation is solved exactly; the standard error is the
    sandwich form with the pooled mean of Xi(theta_hat)^2.
    """
    assignment = split_folds(len(sample), folds, seed)
    result = cross_fit(sample, assignment, nuisance_fitter, plugin_builder, n_jobs)
    estimate = solve_linear(result.terms)
    logger.debug(
        "solved RDR equation over %d folds: theta=%.10g", folds, estimate.theta_hat
    )
    return estimate
