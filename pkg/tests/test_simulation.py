import json

import numpy as np
import pytest

from waveselect.simulation import (
    GLM_ROWS,
    S1_SETTINGS,
    THREADS_ENV,
    MonteCarloResult,
    ScenarioConfig,
    generate_s1,
    generate_s3,
    generate_s4_gap,
    glm_noise,
    replicate_rng,
    run_scenario,
    s1_noise_sd,
    thread_count,
    with_overrides,
)

pytestmark = pytest.mark.filterwarnings("ignore::waveselect.nls.HeuristicWarning")


def test_table_settings():
    f2 = S1_SETTINGS["f2"]
    assert (f2.x_low, f2.x_high, f2.beta_true) == (1.0, 4.0, (0.25, 1.0))
    assert f2.noise["strong"] == 0.005
    f3 = S1_SETTINGS["f3"]
    assert (f3.x_low, f3.x_high, f3.noise["weak"]) == (5.0, 210.0, 10.0)
    assert s1_noise_sd("f3", "weak") == 10.0
    assert s1_noise_sd("f3", "weak", "variance") == pytest.approx(np.sqrt(10.0))
    with pytest.raises(ValueError):
        s1_noise_sd("f3", "weak", "precision")


def test_s1_draws():
    x, y = generate_s1("f2", 256, "strong", np.random.default_rng(0))
    assert x.min() >= 1 and x.max() <= 4 and np.all(np.diff(x) >= 0)
    resid = y - (0.25 + np.exp(-x))
    assert np.std(resid) == pytest.approx(0.005, rel=0.15)


def test_zero_noise_override():
    x, y = generate_s1("f3", 64, "weak", np.random.default_rng(1), noise_sd=0)
    np.testing.assert_array_equal(y, 120 * x / (20 + x))


def test_gaussian_identity_mean():
    x, y, beta = generate_s3("gaussian", "identity", 4096, "weak", np.random.default_rng(2))
    resid = y - (beta[0] + beta[1] * x)
    sd = glm_noise("gaussian", beta[0] + beta[1] * 1.0, "weak")
    assert abs(resid.mean()) < 4 * sd / np.sqrt(len(y))


@pytest.mark.parametrize("family,link", GLM_ROWS)
def test_glm_draws_are_valid(family, link):
    x, y, _ = generate_s3(family, link, 512, "weak", np.random.default_rng(3))
    assert np.all(np.isfinite(y))
    assert x.min() >= 0.5 and x.max() <= 1.5
    if family != "gaussian":
        assert np.all(y > 0)


def test_inverse_link_means_positive():
    _, _, mu = generate_s4_gap("gamma", "inverse", 512, "strong", np.random.default_rng(4))
    assert np.all(np.isfinite(mu)) and np.all(mu > 0)


def test_zero_gap_equals_s3():
    a = generate_s3("gamma", "log", 128, "moderate", np.random.default_rng(9))
    b = generate_s4_gap("gamma", "log", 128, "moderate", np.random.default_rng(9), gap=0.0)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


def test_gap_raises_upper_half():
    x, _, mu = generate_s4_gap("gaussian", "identity", 256, "strong", np.random.default_rng(9), gap=0.25)
    np.testing.assert_allclose(mu, 0.5 + x + 0.25 * (x > 1.0))


def test_unknown_row_rejected():
    with pytest.raises(ValueError):
        generate_s3("gaussian", "inverse_squared", 128, "weak", np.random.default_rng(0))
    with pytest.raises(ValueError):
        ScenarioConfig("s3", "gamma:inverse_squared", 128)


@pytest.mark.parametrize(
    "kw",
    [dict(scenario="s5"), dict(n=100), dict(n=8), dict(dependence="none"), dict(replications=0),
     dict(criteria=("aic",)), dict(compare_to="truth"), dict(true_model="f24")],
)
def test_config_validation(kw):
    base = dict(scenario="s1", true_model="f1", n=128)
    with pytest.raises(ValueError):
        ScenarioConfig(**{**base, **kw})


def test_candidate_sets():
    assert [c.id for c in ScenarioConfig("s1", "f1", 128).candidate_set()] == ["f1", "f2", "f3", "f4", "f24"]
    assert [c.id for c in ScenarioConfig("s2", "f2", 128).candidate_set()] == ["f2", "f24"]
    ig = ScenarioConfig("s3", "inverse_gaussian:log", 128)
    assert len(ig.candidate_set()) == 4 and ig.true_id() == "glm:inverse_gaussian:log"
    custom = ScenarioConfig("s1", "f2", 128, candidates=("f2", "glm:gaussian:log"))
    assert [c.kind for c in custom.candidate_set()] == ["nonlinear", "glm"]


def test_replicate_streams_are_independent():
    cfg = ScenarioConfig("s1", "f1", 128, seed=5)
    a = replicate_rng(cfg, 0).normal(size=4)
    assert not np.array_equal(a, replicate_rng(cfg, 1).normal(size=4))
    np.testing.assert_array_equal(a, replicate_rng(cfg, 0).normal(size=4))
    other = with_overrides(cfg, n=256)
    assert not np.array_equal(a, replicate_rng(other, 0).normal(size=4))


def test_single_replicate_is_deterministic():
    cfg = ScenarioConfig("s1", "f3", 128, "moderate", replications=1, seed=99)
    assert run_scenario(cfg) == run_scenario(cfg)


def test_thread_count_independence():
    cfg = ScenarioConfig("s3", "gamma:log", 128, "weak", replications=6, seed=3)
    a, b = run_scenario(cfg, n_jobs=1), run_scenario(cfg, n_jobs=3)
    assert json.dumps(a.to_dict(), sort_keys=True) == json.dumps(b.to_dict(), sort_keys=True)


def test_thread_env(monkeypatch):
    monkeypatch.setenv(THREADS_ENV, "3")
    assert thread_count() == 3
    monkeypatch.setenv(THREADS_ENV, "lots")
    with pytest.raises(ValueError):
        thread_count()
    monkeypatch.delenv(THREADS_ENV)
    assert thread_count() == 1


def test_rate_consistency():
    cfg = ScenarioConfig("s1", "f4", 128, "weak", replications=10, seed=4)
    res = run_scenario(cfg)
    assert res.completed + res.failed == 10
    for c in ("rmse", "mae"):
        hits = sum(w[c] == "f4" for w in res.per_replicate_winner)
        assert res.true_classification_rate[c] == 100.0 * hits / res.completed


def test_null_structure_s3():
    for fam, link in GLM_ROWS:
        res = run_scenario(ScenarioConfig("s3", f"{fam}:{link}", 128, "weak", replications=3, seed=1))
        nulls = res.null_fraction_table
        assert nulls[1] == nulls[2] == 0.0
        assert max(v for j, v in nulls.items() if j >= 3) > 0.5


def test_s4_result_shape():
    res = run_scenario(ScenarioConfig("s4", "gamma:log", 128, "strong", replications=4, seed=2, gap=True))
    assert set(res.glm_win_proportion) == {"rmse", "mae"}
    assert len(res.per_replicate_winner) == 4
    assert res.true_classification_rate == {}
    back = MonteCarloResult.from_dict(json.loads(json.dumps(res.to_dict())))
    assert back == res


def test_failures_are_recorded(monkeypatch):
    import waveselect.simulation as sim

    def boom(config, rep):
        if rep == 1:
            raise FloatingPointError("synthetic")
        return {"winner": {"rmse": "f1", "mae": "f2"}, "nulls": {0: 0.0}}

    monkeypatch.setattr(sim, "run_replicate", boom)
    res = sim.run_scenario(ScenarioConfig("s1", "f1", 128, replications=3))
    assert (res.completed, res.failed) == (2, 1)
    assert "synthetic" in res.failures[0]
    assert res.true_classification_rate == {"rmse": 100.0, "mae": 0.0}


@pytest.mark.slow
def test_s2_moderate_256():
    res = run_scenario(ScenarioConfig("s2", "f2", 256, "moderate", replications=100, seed=2024))
    assert res.true_classification_rate["rmse"] >= 98 and res.true_classification_rate["mae"] >= 98


@pytest.mark.slow
def test_s1_f1_strong_128():
    res = run_scenario(ScenarioConfig("s1", "f1", 128, "strong", replications=100, seed=2024))
    assert res.true_classification_rate["rmse"] >= 98


@pytest.mark.slow
def test_s3_gamma_log_strong_512():
    res = run_scenario(ScenarioConfig("s3", "gamma:log", 512, "strong", replications=100, seed=2024))
    assert res.true_classification_rate["rmse"] >= 95


@pytest.mark.slow
def test_s4_gap_strong_512_wavelet_wins():
    res = run_scenario(ScenarioConfig("s4", "gamma:identity", 512, "strong", replications=100, seed=2024, gap=True))
    assert 1 - res.glm_win_proportion["rmse"] > 0.85


@pytest.mark.slow
def test_s4_gap_weak_128_similar():
    res = run_scenario(ScenarioConfig("s4", "gamma:identity", 128, "weak", replications=100, seed=2024, gap=True))
    assert 0.3 <= res.glm_win_proportion["rmse"] <= 0.7
