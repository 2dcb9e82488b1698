"""Metrics, the safety window, and the repeated-split study."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dosedistill.dataset import load_and_validate
from dosedistill.distillation import DistillationConfig
from dosedistill.evaluation import (
    DoseBand,
    SafetyPartition,
    classify_dose,
    evaluate_model,
    evaluate_predictions,
    mae,
    mape,
    run_study,
)
from dosedistill.models import LinearModel, TrainConfig
from dosedistill.profiles import Profile, ProfileCatalog, default_catalog
from dosedistill.synthetic import SyntheticSpec

from conftest import make_cohort, write_synth


class TestMae:
    def test_perfect(self):
        assert mae([1.0, 2.0], [1.0, 2.0]) == 0.0

    def test_arithmetic(self):
        assert mae([10.0, 20.0], [12.0, 16.0]) == 3.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            mae([1.0], [1.0, 2.0])

    def test_empty(self):
        with pytest.raises(ValueError):
            mae([], [])

    def test_translation_and_permutation_invariance(self):
        rng = np.random.default_rng(0)
        p, t = rng.standard_normal(50), rng.standard_normal(50)
        assert mae(p + 3.7, t + 3.7) == pytest.approx(mae(p, t), rel=1e-12)
        perm = rng.permutation(50)
        assert mae(p[perm], t[perm]) == pytest.approx(mae(p, t), rel=1e-12)


class TestMape:
    def test_ten_percent(self):
        assert mape([9.0], [10.0]) == pytest.approx(10.0)

    def test_perfect(self):
        assert mape([5.0, 6.0], [5.0, 6.0]) == 0.0

    def test_nonpositive_truth_rejected(self):
        with pytest.raises(ValueError):
            mape([1.0], [0.0])
        with pytest.raises(ValueError):
            mape([1.0], [-3.0])


class TestClassifyDose:
    def test_inside_window(self):
        assert classify_dose(40.0, 35.0) is DoseBand.WITHIN_WINDOW

    def test_inclusive_upper_boundary(self):
        assert classify_dose(42.0, 35.0) is DoseBand.WITHIN_WINDOW

    def test_under(self):
        assert classify_dose(27.9, 35.0) is DoseBand.UNDER

    def test_nonpositive_truth(self):
        with pytest.raises(ValueError):
            classify_dose(1.0, 0.0)

    def test_boundaries_classify_within(self):
        rng = np.random.default_rng(1)
        for truth in rng.uniform(0.01, 200.0, 500):
            assert classify_dose(1.2 * truth, truth) is DoseBand.WITHIN_WINDOW
            assert classify_dose(0.8 * truth, truth) is DoseBand.WITHIN_WINDOW

    @settings(max_examples=300, deadline=None)
    @given(
        pred=st.floats(-1e6, 1e6, allow_nan=False),
        truth=st.floats(1e-3, 1e6, allow_nan=False),
    )
    def test_exactly_one_band(self, pred, truth):
        band = classify_dose(pred, truth)
        others = {DoseBand.UNDER, DoseBand.WITHIN_WINDOW, DoseBand.OVER} - {band}
        assert band in DoseBand
        assert len(others) == 2


class TestSafetyPartition:
    def test_counts_and_percentages(self):
        part = SafetyPartition(under=1, within=2, over=1)
        assert part.n == 4
        assert part.under_pct + part.within_pct + part.over_pct == pytest.approx(
            100.0, abs=1e-9
        )

    def test_report_counts_match(self):
        preds = np.array([10.0, 35.0, 50.0])
        truths = np.array([35.0, 35.0, 35.0])
        report = evaluate_predictions(preds, truths)
        assert (report.safety.under, report.safety.within, report.safety.over) == (
            1, 1, 1,
        )
        assert report.n == 3


def two_feature_profile():
    return Profile("Public patient", frozenset(), frozenset(), 2)


class TestEvaluateModel:
    def test_perfect_predictor(self):
        X = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        y = np.array([30.0, 40.0, 50.0])
        cohort = make_cohort(X, y)
        # alpha chosen so predictions equal truths on the standardized matrix
        from dosedistill.models import fit_least_squares

        model = fit_least_squares(cohort.X, cohort.y)
        report = evaluate_model(model, cohort, two_feature_profile())
        assert report.mae == pytest.approx(0.0, abs=1e-6)
        assert report.safety.within_pct == 100.0

    def test_constant_overdoser(self):
        X = np.array([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5], [0.2, 0.9]])
        truth = 35.0
        cohort = make_cohort(X, np.full(4, truth))
        model = LinearModel(np.zeros(2), 1.3 * truth)
        report = evaluate_model(model, cohort, two_feature_profile())
        assert report.safety.over_pct == 100.0

    def test_single_record_equals_pointwise(self):
        X = np.array([[0.3, 1.0], [0.7, -1.0]])
        cohort = make_cohort(X, [40.0, 40.0]).subset([0])
        model = LinearModel(np.zeros(2), 44.0)
        report = evaluate_model(model, cohort, two_feature_profile())
        assert report.n == 1
        assert report.mae == pytest.approx(4.0)
        assert report.mape == pytest.approx(10.0)
        assert report.safety.within == 1

    def test_dimension_mismatch(self):
        cohort = make_cohort(np.eye(3), [30.0, 40.0, 50.0])
        model = LinearModel(np.zeros(2), 1.0)
        with pytest.raises(ValueError):
            evaluate_model(model, cohort, Profile("p", frozenset(), frozenset(), 3))


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("study")
    data, schema = write_synth(tmp, SyntheticSpec(n=200), seed=23)
    return load_and_validate(data, schema)


class TestRunStudy:
    def fast_config(self):
        return DistillationConfig(
            lambda_grid=(0.0, 1.0),
            train=TrainConfig(seed=0, max_epochs=30, patience=5),
        )

    def test_deterministic(self, dataset):
        catalog, records = dataset
        profiles = ProfileCatalog(default_catalog(catalog).profiles[:2])
        a = run_study(records, catalog, profiles, self.fast_config(), runs=1,
                      base_seed=3)
        b = run_study(records, catalog, profiles, self.fast_config(), runs=1,
                      base_seed=3)
        assert a.keys() == b.keys()
        for key in a:
            assert a[key].per_run == b[key].per_run

    def test_public_only_catalog_collapses_arms(self, dataset):
        catalog, records = dataset
        public_only = ProfileCatalog(default_catalog(catalog).profiles[:1])
        results = run_study(
            records, catalog, public_only, self.fast_config(), runs=1, base_seed=1
        )
        name = public_only.public.name
        assert (
            results[("mlp", name)].per_run
            == results[("partial", name)].per_run
            == results[("distilled", name)].per_run
        )

    def test_arms_and_aggregates(self, dataset):
        catalog, records = dataset
        profiles = ProfileCatalog(default_catalog(catalog).profiles[:3])
        runs = 2
        results = run_study(
            records, catalog, profiles, self.fast_config(), runs=runs, base_seed=7
        )
        assert ("linear", profiles.public.name) in results
        assert ("mlp", profiles.public.name) in results
        for profile in profiles:
            assert len(results[("partial", profile.name)].per_run) == runs
            assert len(results[("distilled", profile.name)].per_run) == runs
        r = results[("linear", profiles.public.name)]
        mean, std = r.mae_mean_std
        vals = [rep.mae for rep in r.per_run]
        assert mean == pytest.approx(np.mean(vals))
        assert std == pytest.approx(np.std(vals))

    def test_split_seed_derivation(self, dataset):
        """Run j must use split seed base_seed + j: a 2-run study's second
        run equals a 1-run study at base_seed + 1."""
        catalog, records = dataset
        profiles = ProfileCatalog(default_catalog(catalog).profiles[:2])
        two = run_study(records, catalog, profiles, self.fast_config(), runs=2,
                        base_seed=5)
        one = run_study(records, catalog, profiles, self.fast_config(), runs=1,
                        base_seed=6)
        key = ("partial", profiles.profiles[1].name)
        assert two[key].per_run[1] == one[key].per_run[0]
