import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from waveselect.regression import (
    ThresholdPolicy,
    WaveletRegressor,
    choose_resolution,
    fit_wavelet,
    map_to_grid,
    threshold,
    universal_threshold,
)
from waveselect.wavelets import CoefficientPyramid, dwt, make_daubechies


def test_choose_resolution():
    assert choose_resolution(128) == 7
    assert choose_resolution(129) == 8
    assert choose_resolution(1) == 1
    assert choose_resolution(10**6) == 12
    assert choose_resolution(10**6, cap=9) == 9
    with pytest.raises(ValueError):
        choose_resolution(0)


# --- gridding -----------------------------------------------------------------


def test_single_observation_fills_grid():
    g = map_to_grid([0.5], [7.0], 3)
    np.testing.assert_array_equal(g.grid_y, np.full(8, 7.0))


def test_one_observation_per_cell():
    g = map_to_grid([0.1, 0.3, 0.6, 0.9], [1, 2, 3, 4], 2)
    np.testing.assert_array_equal(g.grid_y, [1, 2, 3, 4])


def test_left_fill():
    g = map_to_grid([0.1, 0.9], [1, 4], 2)
    np.testing.assert_array_equal(g.grid_y, [1, 1, 1, 4])
    np.testing.assert_array_equal(g.source_index, [0, 0, 0, 1])


def test_leading_cells_copy_first_occupied():
    g = map_to_grid([0.7, 0.9], [5, 6], 2)
    np.testing.assert_array_equal(g.grid_y, [5, 5, 5, 6])


def test_mean_and_nearest_aggregation():
    x, y = [0.05, 0.12, 0.2, 0.9], [1.0, 2.0, 6.0, 4.0]
    mean = map_to_grid(x, y, 2)
    assert mean.grid_y[0] == pytest.approx(3.0)
    near = map_to_grid(x, y, 2, aggregate="nearest")
    assert near.grid_y[0] == 2.0  # 0.12 is closest to the centre 0.125
    assert near.source_index[0] == 1
    assert mean.multiplicity_fraction == pytest.approx(0.5)


@pytest.mark.parametrize(
    "x,y,J,agg",
    [([], [], 3, "mean"), ([0.2, 1.2], [1, 2], 3, "mean"), ([0.2], [1, 2], 3, "mean"),
     ([0.2], [1], 0, "mean"), ([0.2], [1], 2, "median"), ([0.2, np.nan], [1, 2], 2, "mean")],
)
def test_grid_rejects_bad_input(x, y, J, agg):
    with pytest.raises(ValueError):
        map_to_grid(x, y, J, agg)


@settings(max_examples=80, deadline=None)
@given(
    xs=st.lists(st.floats(0, 1), min_size=1, max_size=60),
    J=st.integers(1, 8),
)
def test_grid_is_total(xs, J):
    y = np.arange(len(xs), dtype=float)
    g = map_to_grid(xs, y, J)
    assert g.size == 2**J
    assert np.all(np.isfinite(g.grid_y))
    assert np.all((g.source_index >= 0) & (g.source_index < len(xs)))


@settings(max_examples=50, deadline=None)
@given(xs=st.lists(st.floats(0, 1), min_size=1, max_size=40, unique=True), J=st.integers(1, 7))
def test_lone_points_keep_their_cell(xs, J):
    """A point alone in its cell stays its own donor when the grid is refined."""
    x = np.array(xs)
    y = np.arange(len(x), dtype=float)
    coarse = map_to_grid(x, y, J, "nearest")
    fine = map_to_grid(x, y, J + 1, "nearest")
    counts = np.bincount(coarse.cell_of_obs, minlength=2**J)
    for i, c in enumerate(coarse.cell_of_obs):
        if counts[c] == 1:
            assert coarse.source_index[c] == i
            assert fine.source_index[fine.cell_of_obs[i]] == i


# --- thresholding -------------------------------------------------------------


def _pyramid(details, approx=(1.0,)):
    j0 = int(math.log2(len(approx)))
    return CoefficientPyramid(j0, j0 + len(details), np.array(approx), {j0 + k: np.array(d) for k, d in enumerate(details)})


def test_zero_finest_level_means_zero_threshold():
    pyr = _pyramid([[0.5], [0.0, 0.0]])
    lam, sigma = universal_threshold(pyr)
    assert lam == 0.0 and sigma == 0.0
    out = threshold(pyr, ThresholdPolicy("soft"))
    np.testing.assert_array_equal(out.flat(), pyr.flat())
    assert out.thresholded and not pyr.thresholded


def test_soft_rule_definition():
    lam = 0.8
    out = threshold(_pyramid([[3 * lam, lam / 2]], approx=(1.0, 2.0)), ThresholdPolicy("soft"), lam)
    np.testing.assert_allclose(out.details[1], [2 * lam, 0.0])
    np.testing.assert_array_equal(out.approx, [1.0, 2.0])


def test_hard_rule_definition():
    out = threshold(_pyramid([[3.0, -0.5, -2.0, 1.0]], approx=(1.0, 2.0)), ThresholdPolicy("hard"), 1.0)
    np.testing.assert_array_equal(out.details[1], [3.0, 0.0, -2.0, 0.0])


def test_threshold_policy_validation():
    with pytest.raises(ValueError):
        ThresholdPolicy("garrote")
    with pytest.raises(ValueError):
        ThresholdPolicy(lambda_rule="sure")
    with pytest.raises(ValueError):
        threshold(_pyramid([[1.0]]), lam=-1)


def test_noise_survivors_match_oracle(derived):
    """Soft universal thresholding of noise, n=512: same counts as the dense-matrix oracle, all < n/4."""
    fp = make_daubechies(2)
    counts = []
    for seed in range(50):
        e = np.random.default_rng(seed).normal(size=512)
        pyr = threshold(dwt(e, fp, 0), ThresholdPolicy("soft"))
        counts.append(int(sum(np.count_nonzero(d) for d in pyr.details.values())))
    assert counts == derived["survivors_n512"]
    assert max(counts) < 512 / 4


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31), lams=st.tuples(st.floats(0, 5), st.floats(0, 5)), rule=st.sampled_from(["soft", "hard"]))
def test_threshold_monotone(seed, lams, rule):
    pyr = dwt(np.random.default_rng(seed).normal(size=64), make_daubechies(2), 1)
    lo, hi = sorted(lams)
    nnz = lambda p: sum(np.count_nonzero(d) for d in p.details.values())  # noqa: E731
    assert nnz(threshold(pyr, ThresholdPolicy(rule), hi)) <= nnz(threshold(pyr, ThresholdPolicy(rule), lo))


# --- fitting ------------------------------------------------------------------


@pytest.mark.parametrize("boundary", ["reflect", "periodic"])
@pytest.mark.parametrize("wavelet", ["haar", "daub2", "daub4"])
def test_constant_is_reproduced(boundary, wavelet, rng):
    x = rng.uniform(0, 1, 100)
    fit = fit_wavelet(x, np.full(100, 2.5), wavelet, boundary=boundary)
    np.testing.assert_allclose(fit.fitted, 2.5, atol=1e-10)


def test_sine_golden(derived):
    x = (np.arange(128) + 0.5) / 128
    y = np.sin(2 * np.pi * x)
    fit = fit_wavelet(x, y, "daub2", policy=ThresholdPolicy("soft"))
    assert np.sqrt(np.mean((fit.fitted - y) ** 2)) < np.sqrt(np.mean(fit.fitted**2))
    r = np.corrcoef(fit.fitted, y)[0, 1]
    assert r > 0.99
    assert r == pytest.approx(derived["sine"]["corr"], abs=1e-10)
    assert np.sqrt(np.mean((fit.fitted - y) ** 2)) == pytest.approx(derived["sine"]["rmse"], rel=1e-8)


def test_noise_is_mostly_zeroed(rng):
    x = np.sort(rng.uniform(0, 1, 128))
    fit = fit_wavelet(x, rng.normal(size=128))
    for j, frac in fit.null_fraction_by_level.items():
        if j >= 3:
            assert frac > 0.6


@pytest.mark.parametrize("j0", [1, 2, 3, 4])
def test_levels_below_j0_untouched(j0, rng):
    x = np.sort(rng.uniform(0, 1, 128))
    fit = fit_wavelet(x, rng.normal(size=128), j0=j0)
    assert sorted(fit.null_fraction_by_level) == list(range(7))
    for j in range(j0):
        assert fit.null_fraction_by_level[j] == 0.0


def test_reflect_pyramid_is_doubled(rng):
    x = np.sort(rng.uniform(0, 1, 64))
    y = rng.normal(size=64)
    refl = fit_wavelet(x, y, j0=2)
    per = fit_wavelet(x, y, j0=2, boundary="periodic")
    assert refl.pyramid.max_level == 7 and per.pyramid.max_level == 6
    assert refl.grid_fit.shape == per.grid_fit.shape == (64,)


def test_nearest_aggregation_warns_on_crowded_cells():
    x = np.repeat(np.linspace(0.05, 0.95, 16), 4)
    fit = fit_wavelet(x, np.arange(64.0), aggregate="nearest", j0=2)
    assert fit.warnings
    assert not fit_wavelet(x, np.arange(64.0), j0=2).warnings


def test_evaluate_is_piecewise_constant(rng):
    x = np.sort(rng.uniform(0, 1, 64))
    fit = fit_wavelet(x, np.sin(4 * x))
    np.testing.assert_array_equal(fit.evaluate(x), fit.fitted)
    assert fit.evaluate([-1.0])[0] == fit.grid_fit[0]


@pytest.mark.parametrize(
    "kw", [dict(j0=7), dict(j0=-1), dict(boundary="zero"), dict(aggregate="sum"), dict(fp="coif1")]
)
def test_fit_rejects_bad_settings(kw, rng):
    x = rng.uniform(0, 1, 128)
    with pytest.raises(ValueError):
        fit_wavelet(x, x, **kw)


def test_fit_needs_eight_points():
    with pytest.raises(ValueError):
        fit_wavelet(np.linspace(0, 1, 7), np.ones(7))


# --- estimator ----------------------------------------------------------------


def test_regressor_round_trip(rng):
    x = rng.uniform(10, 20, 200)
    y = np.sin(x) + rng.normal(0, 0.1, 200)
    est = WaveletRegressor().fit(x.reshape(-1, 1), y)
    pred = est.predict(x.reshape(-1, 1))
    assert pred.shape == (200,)
    assert np.corrcoef(pred, np.sin(x))[0, 1] > 0.95
    assert est.score(x.reshape(-1, 1), y) > 0.8
    assert set(est.null_fraction_by_level_) == set(range(8))


def test_regressor_rejects_constant_predictor():
    with pytest.raises(ValueError):
        WaveletRegressor().fit(np.ones((20, 1)), np.arange(20.0))


def test_regressor_rejects_two_columns(rng):
    with pytest.raises(ValueError):
        WaveletRegressor().fit(rng.normal(size=(20, 2)), np.arange(20.0))
