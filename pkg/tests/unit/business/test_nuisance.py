"""Tests for nuisance fitting and the mode dispatcher."""

import math

import numpy as np
import pytest

from ctdr.business.dgp import generate, true_nuisance
from ctdr.business.dgp_models import (
    CensoringObservation,
    CensoringSample,
    DgpSpec,
    TruncationObservation,
    TruncationSample,
)
from ctdr.business.nuisance import (
    build_nuisance,
    default_cutpoints,
    exposure_records,
    fit_piecewise_exponential,
    limit_model,
    make_fitter,
    nelson_aalen_stratified,
    synthetic_rate,
)
from ctdr.business.nuisance_models import NuisanceSpec
from ctdr.core.errors import FittingError, ValidationError


@pytest.fixture
def small_censored() -> CensoringSample:
    return CensoringSample.from_observations(
        [
            CensoringObservation(0.0, 1.0, 1),
            CensoringObservation(0.0, 2.0, 0),
            CensoringObservation(0.0, 3.0, 1),
            CensoringObservation(1.0, 0.5, 1),
            CensoringObservation(1.0, 1.5, 1),
        ],
        tau_max=2.0,
    )


@pytest.fixture
def small_truncated() -> TruncationSample:
    return TruncationSample.from_observations(
        [
            TruncationObservation(0.0, 0.5, 1.0),
            TruncationObservation(0.0, 0.0, 2.0),
            TruncationObservation(0.0, 1.5, 3.0),
        ],
        tau_max=2.5,
    )


@pytest.fixture(scope="module")
def large_censored() -> CensoringSample:
    return generate(DgpSpec(scenario="censoring"), 20_000, 101)


@pytest.fixture(scope="module")
def large_truncated() -> TruncationSample:
    return generate(DgpSpec(scenario="truncation"), 20_000, 202)


class TestExposureRecords:
    """Tests for exposure_records()."""

    def test_censoring_coarsening_events(self, small_censored: CensoringSample) -> None:
        """Test administrative censoring at tau_max is not a censoring event."""
        records = exposure_records(small_censored, "coarsening")
        np.testing.assert_array_equal(records.event, [0, 0, 0, 0, 0])
        sample = CensoringSample.from_observations(
            [CensoringObservation(0.0, 1.0, 0), CensoringObservation(0.0, 2.0, 0)], tau_max=2.0
        )
        np.testing.assert_array_equal(exposure_records(sample, "coarsening").event, [1, 0])

    def test_truncation_event_has_delayed_entry(self, small_truncated: TruncationSample) -> None:
        """Test exposure starts at the truncation time."""
        records = exposure_records(small_truncated, "event")
        np.testing.assert_array_equal(records.entry, [0.5, 0.0, 1.5])
        np.testing.assert_array_equal(records.exit, [1.0, 2.0, 3.0])
        assert not records.reverse_time

    def test_truncation_coarsening_is_reverse_time(
        self, small_truncated: TruncationSample
    ) -> None:
        """Test the reverse-time records stop at tau_max and skip q = 0."""
        records = exposure_records(small_truncated, "coarsening")
        np.testing.assert_array_equal(records.exit, [1.0, 2.0, 2.5])
        np.testing.assert_array_equal(records.event, [1, 0, 1])
        assert records.reverse_time
        assert records.horizon == 2.5

    def test_unknown_target(self, small_censored: CensoringSample) -> None:
        """Test an unknown target is a ValidationError."""
        with pytest.raises(ValidationError):
            exposure_records(small_censored, "entry")


class TestDefaultCutpoints:
    """Tests for default_cutpoints()."""

    def test_quartiles_of_event_times(self, large_censored: CensoringSample) -> None:
        """Test the cutpoints are quartiles of the observed event times."""
        records = exposure_records(large_censored, "event")
        expected = np.quantile(large_censored.t_tilde[large_censored.delta == 1], [0.25, 0.5, 0.75])
        np.testing.assert_allclose(default_cutpoints(records), expected)

    def test_too_few_events(self, small_censored: CensoringSample) -> None:
        """Test fewer than four events give a single piece."""
        records = exposure_records(small_censored, "coarsening")
        assert default_cutpoints(records) == ()


class TestFitPiecewiseExponential:
    """Tests for fit_piecewise_exponential()."""

    def test_recovers_censoring_truth(self, large_censored: CensoringSample) -> None:
        """Test the MLE is close to the generating hazards."""
        event = fit_piecewise_exponential(large_censored, "event")
        assert event.covariate_coefficient == pytest.approx(1.0, abs=0.1)
        np.testing.assert_allclose(np.exp(event.log_baseline), 0.8, rtol=0.15)
        assert event.metadata["score_norm"] <= 1e-10
        assert event.fitted

        censor = fit_piecewise_exponential(large_censored, "coarsening")
        assert censor.covariate_coefficient == pytest.approx(1.0, abs=0.15)
        np.testing.assert_allclose(np.exp(censor.log_baseline), 0.4, rtol=0.2)

    def test_recovers_truncation_truth(self, large_truncated: TruncationSample) -> None:
        """Test delayed-entry and reverse-time fits."""
        event = fit_piecewise_exponential(large_truncated, "event")
        assert event.covariate_coefficient == pytest.approx(1.0, abs=0.1)
        np.testing.assert_allclose(np.exp(event.log_baseline), 0.8, rtol=0.15)

        reverse = fit_piecewise_exponential(large_truncated, "coarsening")
        assert reverse.reverse_time
        assert reverse.horizon == 2.0
        assert reverse.covariate_coefficient == pytest.approx(1.0, abs=0.15)
        np.testing.assert_allclose(np.exp(reverse.log_baseline), 0.4, rtol=0.2)

    @pytest.mark.parametrize("fixture", ["large_censored", "large_truncated"])
    def test_mean_score_vanishes(self, fixture: str, request: pytest.FixtureRequest) -> None:
        """Test events minus compensator average to zero overall and weighted by z."""
        sample = request.getfixturevalue(fixture)
        model = fit_piecewise_exponential(sample, "event")
        records = exposure_records(sample, "event")
        compensator = model.cumulative_hazard(records.exit, records.z) - model.cumulative_hazard(
            records.entry, records.z
        )
        residual = records.event - compensator

        assert model.metadata["score_norm"] <= 1e-10
        assert abs(np.sum(residual)) / len(sample) <= 1e-9
        assert abs(np.sum(records.z * residual)) / len(sample) <= 1e-9

    def test_without_covariate_is_closed_form(self, large_censored: CensoringSample) -> None:
        """Test the covariate-free fit is events over exposure."""
        fit = fit_piecewise_exponential(
            large_censored, "event", cutpoints=(), include_covariate=False
        )
        assert fit.covariate_coefficient == 0.0
        expected = math.log(large_censored.delta.sum() / large_censored.t_tilde.sum())
        assert fit.log_baseline[0] == pytest.approx(expected, rel=1e-12)
        assert fit.metadata["iterations"] == 0

    def test_empty_piece(self, large_censored: CensoringSample) -> None:
        """Test a piece without exposure names the target and piece."""
        with pytest.raises(FittingError) as excinfo:
            fit_piecewise_exponential(large_censored, "event", cutpoints=(10.0,))
        assert excinfo.value.context == {"target": "event", "piece": 1}


class TestNelsonAalen:
    """Tests for nelson_aalen_stratified()."""

    def test_stratified_increments(self, small_censored: CensoringSample) -> None:
        """Test jumps of d/r per stratum."""
        estimate = nelson_aalen_stratified(small_censored, "event", boundaries=(0.5,))
        low, high = estimate.paths
        np.testing.assert_allclose(low.jump_times, [1.0, 3.0])
        np.testing.assert_allclose(low.post_jump_values, [1 / 3, 4 / 3])
        np.testing.assert_allclose(high.post_jump_values, [0.5, 1.5])
        assert estimate.stratum_sizes == (3, 2)
        assert estimate.path_for(1.0) is high

    def test_delayed_entry(self, small_truncated: TruncationSample) -> None:
        """Test subjects join the risk set after their truncation time."""
        (path,) = nelson_aalen_stratified(small_truncated, "event").paths
        np.testing.assert_allclose(path.post_jump_values, [0.5, 1.0, 2.0])

    def test_reverse_time_unsupported(self, small_truncated: TruncationSample) -> None:
        """Test the reverse-time target is refused."""
        with pytest.raises(ValidationError):
            nelson_aalen_stratified(small_truncated, "coarsening")

    def test_empty_stratum(self, small_censored: CensoringSample) -> None:
        """Test a stratum without members is refused."""
        with pytest.raises(ValidationError, match="empty"):
            nelson_aalen_stratified(small_censored, "event", boundaries=(2.0,))


class TestSyntheticRate:
    """Tests for synthetic_rate()."""

    @pytest.fixture
    def truth(self):
        event, _ = true_nuisance(DgpSpec(scenario="censoring"))
        return event

    def test_zero_amplitude_returns_truth(self, truth) -> None:
        """Test amplitude 0 is the oracle."""
        assert synthetic_rate(truth, 0.3, 0.0, 1000, 7, 2.0) is truth

    def test_perturbation_size(self, truth) -> None:
        """Test the log hazard moves by at most amplitude * n^-alpha."""
        model = synthetic_rate(truth, 0.25, 2.0, 10_000, 7, 2.0)
        epsilon = 2.0 * 10_000**-0.25
        assert model.metadata["epsilon"] == pytest.approx(epsilon)
        t = np.linspace(0.0, 3.0, 301)
        ratio = model.hazard(t, 1.0) / truth.hazard(t, 1.0)
        assert np.all(np.log(ratio) <= epsilon + 1e-12)
        assert np.all(np.log(ratio) >= 0.25 * epsilon - 1e-12)
        assert model.covariate_coefficient == truth.covariate_coefficient

    def test_shrinks_with_n(self, truth) -> None:
        """Test larger n gives a closer hazard."""
        small = synthetic_rate(truth, 0.4, 1.0, 100, 7, 2.0)
        large = synthetic_rate(truth, 0.4, 1.0, 10_000, 7, 2.0)
        reference = float(truth.cumulative_hazard(2.0, 0.0))
        gap_small = abs(float(small.cumulative_hazard(2.0, 0.0)) - reference)
        gap_large = abs(float(large.cumulative_hazard(2.0, 0.0)) - reference)
        assert gap_large < gap_small

    def test_invalid_alpha(self, truth) -> None:
        """Test the exponent range is enforced."""
        with pytest.raises(ValidationError):
            synthetic_rate(truth, 1.5, 1.0, 100, 7, 2.0)


class TestBuildNuisance:
    """Tests for build_nuisance(), make_fitter() and limit_model()."""

    def test_modes(self, large_censored: CensoringSample) -> None:
        """Test each mode yields the expected kind of model."""
        dgp = DgpSpec(scenario="censoring")
        truth, _ = true_nuisance(dgp)
        oracle = build_nuisance(NuisanceSpec("event", "oracle"), dgp, large_censored, 500)
        assert oracle.log_baseline == truth.log_baseline
        wrong = build_nuisance(
            NuisanceSpec("event", "fitted-misspecified"), dgp, large_censored, 500
        )
        assert wrong.covariate_coefficient == 0.0
        synthetic = build_nuisance(
            NuisanceSpec("event", "synthetic-rate", alpha=0.5), dgp, large_censored, 400
        )
        assert synthetic.metadata["epsilon"] == pytest.approx(400**-0.5)

    def test_make_fitter_pairs(self, small_censored: CensoringSample) -> None:
        """Test the fitter returns (event, coarsening)."""
        dgp = DgpSpec(scenario="censoring")
        fitter = make_fitter(
            NuisanceSpec("event", "oracle"), NuisanceSpec("coarsening", "oracle"), dgp, 5
        )
        event, coarsening = fitter(small_censored)
        assert event.log_baseline == (math.log(0.8),)
        assert coarsening.log_baseline == (math.log(0.4),)

    def test_limit_models(self) -> None:
        """Test the truth is the limit of consistent modes and the reference fit is cached."""
        dgp = DgpSpec(scenario="censoring")
        oracle = limit_model(NuisanceSpec("coarsening", "fitted-correct"), dgp)
        assert oracle.log_baseline == (math.log(0.4),)
        wrong = limit_model(NuisanceSpec("event", "fitted-misspecified"), dgp, seed=3)
        assert wrong.covariate_coefficient == 0.0
        assert limit_model(NuisanceSpec("event", "fitted-misspecified"), dgp, seed=3) is wrong
