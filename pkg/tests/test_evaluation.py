import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import chi2

from boxcoxlogit import (
    Dataset,
    DataValidationError,
    ModelParams,
    NumericalError,
    bin_local_risk,
    cross_validate,
    hosmer_lemeshow,
    stratified_kfold,
)
from boxcoxlogit.core import LognormalSpec
from boxcoxlogit.design import generate_dataset


def _hl_reference(risks, y, g):
    order = np.argsort(risks, kind="stable")
    stat = 0.0
    for idx in np.array_split(order, g):
        # both outcome levels: sum over events and non-events
        o1, e1 = y[idx].sum(), risks[idx].sum()
        o0, e0 = idx.size - o1, idx.size - e1
        stat += (o1 - e1) ** 2 / e1 + (o0 - e0) ** 2 / e0
    return stat


def test_hl_matches_two_level_pearson_form():
    rng = np.random.default_rng(0)
    r = rng.uniform(0.05, 0.6, 700)
    y = (rng.random(700) < r).astype(float)
    for g in (5, 10, 12):
        res = hosmer_lemeshow(r, y, g)
        assert res.statistic == pytest.approx(_hl_reference(r, y, g), rel=1e-12)
        assert res.df == g - 2
        assert res.p_value == pytest.approx(chi2.sf(res.statistic, g - 2))


def test_hl_perfect_calibration():
    # each group of 10 has 3 events and every risk equals 0.3
    y = np.tile([1, 1, 1, 0, 0, 0, 0, 0, 0, 0], 10).astype(float)
    res = hosmer_lemeshow(np.full(100, 0.3), y, 10)
    assert res.statistic == pytest.approx(0.0, abs=1e-20)
    assert res.p_value == pytest.approx(1.0)


def test_hl_errors():
    with pytest.raises(NumericalError):
        hosmer_lemeshow(np.zeros(20), np.zeros(20), 4)
    with pytest.raises(ValueError):
        hosmer_lemeshow(np.full(20, 0.5), np.zeros(20), 2)
    with pytest.raises(ValueError):
        hosmer_lemeshow(np.full(3, 0.5), np.zeros(3), 5)
    with pytest.raises(DataValidationError):
        hosmer_lemeshow(np.full(3, 0.5), np.zeros(4), 3)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_hl_invariant_to_within_group_permutation(seed):
    rng = np.random.default_rng(seed)
    # distinct risk levels, ten of each, so groups are the levels
    r = np.repeat(np.linspace(0.1, 0.5, 5), 10)
    y = (rng.random(50) < r).astype(float)
    a = hosmer_lemeshow(r, y, 5).statistic
    for lev in range(5):
        sl = slice(10 * lev, 10 * lev + 10)
        y[sl] = rng.permutation(y[sl])
    assert hosmer_lemeshow(r, y, 5).statistic == pytest.approx(a, rel=1e-12)


def test_kfold_exact_balance():
    y = np.array([1] * 40 + [0] * 60)
    folds = stratified_kfold(y, 10, seed=1)
    for f in range(10):
        assert (y[folds == f] == 1).sum() == 4
        assert (y[folds == f] == 0).sum() == 6


@settings(max_examples=40, deadline=None)
@given(n1=st.integers(5, 60), n0=st.integers(5, 60), k=st.integers(2, 5), seed=st.integers(0, 99))
def test_kfold_partition_and_remainders(n1, n0, k, seed):
    y = np.array([1] * n1 + [0] * n0)
    folds = stratified_kfold(y, k, seed)
    assert set(np.unique(folds)) == set(range(k))
    for cls, m in ((1, n1), (0, n0)):
        counts = np.bincount(folds[y == cls], minlength=k)
        assert counts.sum() == m
        assert counts.max() - counts.min() <= 1
        # remainders go to the lowest-index folds
        assert np.all(np.diff(counts) <= 0)


def test_kfold_deterministic_and_validated():
    y = np.array([1] * 20 + [0] * 30)
    assert np.array_equal(stratified_kfold(y, 5, 3), stratified_kfold(y, 5, 3))
    assert not np.array_equal(stratified_kfold(y, 5, 3), stratified_kfold(y, 5, 4))
    with pytest.raises(DataValidationError):
        stratified_kfold(np.array([1, 1, 0, 0, 0, 0]), 3, 0)
    with pytest.raises(ValueError):
        stratified_kfold(y, 1, 0)


@pytest.fixture(scope="module")
def null_data():
    truth = ModelParams(-1.0, 0.0, 1.0)
    return generate_dataset(truth, LognormalSpec(0.0, 1.0), 3000, 11)


@pytest.mark.parametrize("model", ["boxcox", 0.0, 0.5, 1.0])
def test_cv_null_data_gives_bernoulli_variance(null_data, model):
    res = cross_validate(null_data, model, 10, seed=2)
    p = null_data.y.mean()
    assert res.mse == pytest.approx(p * (1 - p), rel=0.02)
    assert 0 <= res.mse <= res.mae <= 1
    if res.fold_converged.all():
        assert 0 < res.predictions.min() and res.predictions.max() < 1
    else:
        assert 0 <= res.predictions.min() and res.predictions.max() <= 1
    if model != "boxcox":
        assert res.fold_converged.all()


def test_cv_leave_one_out_equals_direct_holdout():
    from boxcoxlogit import irls_fixed_lambda
    from boxcoxlogit.core import boxcox, expit

    rng = np.random.default_rng(3)
    x = np.exp(rng.standard_normal(24))
    y = np.array([1] * 12 + [0] * 12, dtype=float)
    y = y[rng.permutation(24)]
    d = Dataset(x, y)
    res = cross_validate(d, 0.5, k=12, seed=0)
    # with k = class size every fold holds one event and one non-event
    pred = np.empty(24)
    for f in range(12):
        m = res.fold_assignments == f
        b0, b1, _ = irls_fixed_lambda(d.subset(~m), 0.5)
        pred[m] = expit(b0 + b1 * boxcox(x[m], 0.5))
    np.testing.assert_allclose(res.predictions, pred, rtol=1e-12)
    assert res.mae == pytest.approx(np.abs(y - pred).mean())


def test_cv_rejects_negative_shape(null_data):
    with pytest.raises(ValueError):
        cross_validate(null_data, -1.0)


def test_bins_with_remainder():
    n = 9781
    rng = np.random.default_rng(4)
    d = Dataset(np.exp(rng.standard_normal(n)), (rng.random(n) < 0.15).astype(float))
    bins = bin_local_risk(d, 500)
    counts = [b.count for b in bins]
    assert counts == [500] * 18 + [781]
    assert sum(counts) == n
    assert all(0 <= b.risk <= 1 for b in bins)
    assert all(a.x_max <= b.x_min for a, b in zip(bins, bins[1:]))


def test_bins_are_invariant_to_input_order():
    rng = np.random.default_rng(5)
    x = np.exp(rng.standard_normal(1200))
    y = (rng.random(1200) < 0.3).astype(float)
    o = np.argsort(x)
    a = bin_local_risk(Dataset(x, y), 100)
    b = bin_local_risk(Dataset(x[o], y[o]), 100)
    assert a == b


def test_bins_small_input_and_validation():
    d = Dataset([1.0, 2.0, 3.0], [0, 1, 1])
    (only,) = bin_local_risk(d, 10)
    assert only.count == 3 and only.risk == pytest.approx(2 / 3)
    with pytest.raises(ValueError):
        bin_local_risk(d, 0)
