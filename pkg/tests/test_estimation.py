import json
import math
from importlib import resources

import jsonschema
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import spec_json, toy_dataset, toy_spec, u
from hetchoice import reference as ref
from hetchoice.dataset import Dataset, VariableDef
from hetchoice.draws import DrawConfig, standard_normal_draws
from hetchoice.estimation import (EstimationError, EstimationResult, OptimizerConfig, canonical_order,
                                  estimate, fit_metrics, heterogeneity_workflow, maximize,
                                  numeric_gradient, odds_ratio, relabel_matrix, significance_stars)
from hetchoice.likelihood import (PanelLikelihood, binary_logit_prob, lcm_loglik, lcml_loglik,
                                  panel_loglik_binary)
from hetchoice.modelspec import bind_spec, parse_model_spec

# frozen oracles
EXP_192 = 6.820958469
EXP_M02 = 0.8187307531
LN3 = 1.0986122887


def _schema():
    text = resources.files("hetchoice").joinpath("schemas/estimation_result.schema.json").read_text()
    return json.loads(text)


def _bl_data(rng, beta, n_ind, T=1):
    """Covariates x1, x2 standard normal; choices drawn from the BL model with ASC, B1, B2."""
    ds = toy_dataset(rng, n_ind=n_ind, T=T)
    v = beta[0] + beta[1] * ds.covariates["x1"] + beta[2] * ds.covariates["x2"]
    y = (rng.random(ds.n_observations) < binary_logit_prob(v)).astype(int)
    return ds.replace(choice_y=y)


# -- numeric gradient ---------------------------------------------------------

def test_numeric_gradient_examples():
    assert numeric_gradient(lambda t: t[0] ** 2, [3.0])[0] == pytest.approx(6.0, abs=1e-6)
    assert np.array_equal(numeric_gradient(lambda t: 4.2, [1.0, -2.0, 7.0]), np.zeros(3))
    with pytest.raises(EstimationError):
        numeric_gradient(lambda t: math.inf if t[0] > 0 else 0.0, [0.0])


def test_numeric_gradient_vs_analytic_score(rng):
    ds = toy_dataset(rng, n_ind=20, T=1)
    bound = bind_spec(toy_spec(), ds)
    theta = np.array([0.2, -0.7, 0.4])
    X = bound.classes[0].X
    analytic = X.T @ (ds.choice_y - binary_logit_prob(X @ theta))
    numeric = numeric_gradient(lambda t: panel_loglik_binary(t, bound), theta)
    assert np.max(np.abs(numeric - analytic) / np.maximum(np.abs(analytic), 1e-12)) <= 1e-5


# -- optimizer ------------------------------------------------------------------

def test_concave_quadratic():
    out = maximize(lambda t: -(t[0] - 2.0) ** 2, [-5.0])
    assert out.converged
    assert out.theta[0] == pytest.approx(2.0, abs=1e-5)


def test_intercept_only_recovers_log_odds():
    n = 172
    ds = Dataset((VariableDef("z", "continuous"),), np.arange(n) % 68 + 1, np.arange(n) % 16 + 1,
                 {"z": np.zeros(n)}, choice_y=np.r_[np.ones(129), np.zeros(43)])
    res = estimate(spec_json("BL", [{"utilities": [u("ASC", "CONSTANT")]}]), ds)
    assert res.converged
    assert res.param("ASC") == pytest.approx(LN3, abs=1e-6)
    assert res.loglik == pytest.approx(129 * math.log(0.75) + 43 * math.log(0.25), abs=1e-9)


def test_non_convergence_is_flagged(rng):
    ds = _bl_data(rng, [0.5, 1.0, -1.0], 200)
    res = estimate(toy_spec(), ds, config=OptimizerConfig(max_iter=1))
    assert not res.converged
    assert "above tolerance" in res.message
    assert res.to_dict()["convergence"]["converged"] is False


# -- fit metrics ------------------------------------------------------------------

def test_fit_metrics_bl_row():
    m = fit_metrics(8, -78.280, -119.2213, 172)
    assert m.aic == pytest.approx(172.560, abs=1e-9)
    assert m.bic == pytest.approx(8 * math.log(172) + 156.560, abs=1e-9)


def test_fit_metrics_lcml_row():
    m = fit_metrics(17, -73.729, -119.2213, 172)
    assert m.aic == pytest.approx(181.458, abs=1e-3)
    assert m.bic == pytest.approx(234.965, abs=1e-3)


def test_rho_bar_null_model():
    assert fit_metrics(0, -50.0, -50.0, 10).rho_bar == 0.0


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 200), st.floats(-1e4, -1e-3), st.integers(1, 10 ** 6))
def test_bic_minus_aic(k, LL, n):
    m = fit_metrics(k, LL, -1.0, n)
    assert m.bic - m.aic == pytest.approx(k * (math.log(n) - 2), rel=1e-12, abs=1e-9)


def test_odds_ratio():
    assert odds_ratio(1.92) == pytest.approx(EXP_192, abs=1e-9)
    assert odds_ratio(0.0) == 1.0
    assert odds_ratio(-0.20) == pytest.approx(EXP_M02, abs=1e-10)


@pytest.mark.parametrize("t, stars", [(0.5, "**"), (-1.64, "**"), (1.645, "*"), (1.959, "*"),
                                      (1.96, ""), (-3.0, ""), (None, ""), (float("nan"), "")])
def test_significance_stars(t, stars):
    assert significance_stars(t) == stars


# -- heterogeneity workflow ------------------------------------------------------------

def test_heterogeneity_workflow_reported_table():
    mixl = ref.reported_result("MIXL")
    assert heterogeneity_workflow(mixl, 1.5) == ["male_with_Glicense", "LCI"]
    assert heterogeneity_workflow(mixl, 2.0) == []


def test_heterogeneity_workflow_boundary():
    res = EstimationResult("MIXL", ("B", "B_S"), np.array([1.0, 0.0]), np.eye(2), None, -1.0, -2.0,
                           "equal-shares", {}, 10, 5, sd_variables={"B_S": "x1"})
    assert heterogeneity_workflow(res, 0.0) == ["x1"]


def test_heterogeneity_workflow_requires_sd():
    with pytest.raises(EstimationError):
        heterogeneity_workflow(ref.reported_result("BL"), 1.5)


# -- invariances -------------------------------------------------------------------------

@pytest.mark.parametrize("c", [0.01, 0.5, 3.0, 250.0])
def test_covariate_scaling_invariance(c):
    rng = np.random.default_rng(3)
    ds = _bl_data(rng, [0.3, 0.8, -0.6], 400)
    base = estimate(toy_spec(), ds)
    scaled_ds = ds.replace(covariates={**ds.covariates, "x1": c * ds.covariates["x1"]})
    scaled = estimate(toy_spec(), scaled_ds)
    assert scaled.loglik == pytest.approx(base.loglik, abs=1e-6)
    assert scaled.param("B1") == pytest.approx(base.param("B1") / c, rel=1e-5)


def test_sandwich_matches_hessian_on_large_bl():
    rng = np.random.default_rng(11)
    ds = _bl_data(rng, [0.4, 1.0, -0.5], 5000, T=4)
    res = estimate(toy_spec(), ds)
    assert res.n_observations == 20000
    ratio = res.robust_se / res.hessian_se
    assert np.all(np.abs(ratio - 1) <= 0.05), ratio


def test_robust_covariance_psd_and_t(rng):
    ds = _bl_data(rng, [0.4, 1.0, -0.5], 300, T=2)
    res = estimate(toy_spec(), ds)
    cov = res.robust_cov
    assert np.allclose(cov, cov.T, atol=1e-12)
    assert np.linalg.eigvalsh(cov).min() >= -1e-8
    assert np.allclose(res.robust_t, res.estimates / np.sqrt(np.diag(cov)))


@pytest.mark.parametrize("family, random", [("LCM", ()), ("LCML", ("B1",))])
def test_relabel_invariance(rng, family, random):
    ds = toy_dataset(rng, n_ind=30, T=3)
    spec = toy_spec(family, 3, random=random)
    bound = bind_spec(spec, ds)
    draws = standard_normal_draws(30, DrawConfig(count=20), bound.n_random) if random else None
    theta = rng.normal(size=bound.n_params)
    f = (lambda t: lcml_loglik(t, bound, draws)) if random else (lambda t: lcm_loglik(t, bound))
    for order in ([1, 0, 2], [2, 1, 0], [1, 2, 0]):
        T = relabel_matrix(spec, order)
        if random:
            # class draw dimensions follow class position, so move the draws along with the classes
            v = draws.values[:, :, order]
            moved = type(draws)(v, draws.config)
            ll = lcml_loglik(T @ theta, bound, moved)
        else:
            ll = f(T @ theta)
        assert ll == pytest.approx(f(theta), abs=1e-10)


def test_canonical_order_puts_largest_locus_first(rng):
    spec = toy_spec("LCM", 2)
    theta = np.r_[rng.normal(size=6), 0.3, -1.5]       # A1 (on w) negative -> reference first
    assert canonical_order(spec, theta) == [1, 0]
    assert canonical_order(spec, np.r_[theta[:7], 1.5]) == [0, 1]


# -- end to end -----------------------------------------------------------------------------

def test_lcm_estimation_is_deterministic_and_canonical():
    rng = np.random.default_rng(5)
    ds = toy_dataset(rng, n_ind=150, T=4)
    w = ds.covariates["w"]
    cls = rng.random(150) < binary_logit_prob(0.2 + 2.0 * w[ds.group_starts])
    member = np.repeat(cls, 4)
    v = np.where(member, 1.0 + 1.5 * ds.covariates["x1"], -1.0 - 1.5 * ds.covariates["x2"])
    ds = ds.replace(choice_y=(rng.random(600) < binary_logit_prob(v)).astype(int))
    cfg = OptimizerConfig(restarts=3, seed=2)
    a = estimate(toy_spec("LCM", 2), ds, config=cfg)
    b = estimate(toy_spec("LCM", 2), ds, config=cfg)
    assert a.to_json() == b.to_json()
    assert a.converged
    assert a.param("C1.A1") >= 0                         # positive membership slope class first
    assert a.loglik == max(a.restart_logliks)


def test_ordinal_estimation(rng):
    n = 1500
    schema = (VariableDef("x1", "continuous"),)
    x = rng.normal(size=n)
    latent = 0.8 * x + rng.logistic(size=n)
    k = 1 + (latent > -0.5).astype(int) + (latent > 1.0).astype(int)
    ds = Dataset(schema, np.arange(n) + 1, np.ones(n, int), {"x1": x}, ordinal_category=k)
    spec = spec_json("OL", [{"utilities": [u("B", "x1")]}],
                     thresholds={"first": "tau1", "increments": ["delta2"], "unused": ["delta3"]})
    res = estimate(spec, ds)
    assert res.converged and res.names == ("B", "tau1", "delta2")
    assert abs(res.param("B") - 0.8) < 4 * res.robust_se[0]
    assert abs(res.param("delta2") - 1.5) < 4 * res.robust_se[2]


def test_linear_regression_estimation(rng):
    n = 400
    ds = toy_dataset(rng, n_ind=100, T=4, y=False)
    y = 0.5 + 0.1 * ds.covariates["x1"] + rng.normal(scale=0.05, size=n)
    ds = ds.replace(auto_proportion=y)
    res = estimate(spec_json("LR", [{"utilities": [u("C", "CONSTANT"), u("B", "x1")]}]), ds)
    assert res.family == "LR" and res.null_model == "intercept-only"
    assert res.param("B") == pytest.approx(0.1, abs=0.02)
    assert 0 < res.extra["R2"] < 1


def test_result_json_validates_and_round_trips(rng):
    ds = toy_dataset(rng, n_ind=40, T=3)
    res = estimate(toy_spec("MIXL", random=("B1",)), ds, draw_count=50)
    doc = json.loads(res.to_json())
    jsonschema.validate(doc, _schema())
    assert doc["draws"]["defaulted"] is True
    again = EstimationResult.from_dict(doc)
    assert again.names == res.names
    assert np.array_equal(again.estimates, res.estimates)
    assert again.metrics == res.metrics


def test_reported_results_validate():
    for family in ("BL", "MIXL", "LCML"):
        jsonschema.validate(json.loads(ref.reported_result(family).to_json()), _schema())


def test_bic_sample_size_option(rng):
    ds = _bl_data(rng, [0.1, 0.5, 0.5], 50, T=3)
    obs = estimate(toy_spec(), ds)
    ind = estimate(toy_spec(), ds, bic_n="individuals")
    assert obs.n_used_for_bic == 150 and ind.n_used_for_bic == 50
    assert ind.metrics.bic == pytest.approx(obs.metrics.bic - 3 * math.log(3), abs=1e-9)
    assert "n = 50 individuals" in ind.format_table()


def test_engine_gradient_at_optimum_is_small(rng):
    ds = _bl_data(rng, [0.4, 1.0, -0.5], 300)
    res = estimate(toy_spec(), ds)
    g = PanelLikelihood(bind_spec(toy_spec(), ds)).evaluate(res.estimates)[1].sum(axis=0)
    assert np.max(np.abs(g)) <= 1e-5
