import math

import numpy as np
import pytest

from glassfx.errors import FitError
from glassfx.fitting import (FitResult, SqtFitForm, fit_model_to_ccdfs, fit_model_to_mspd,
                             fit_sqt, model_ccdf_data, sqt_form)
from glassfx.observables import Curve
from glassfx.trapmodel import (MSPD_FIT_0930, MSPD_FIT_1800, PDF_FIT_PARAMS, ModelParams,
                               ccdf_at, mspd_closed_form)


def mspd_curve(p, lags_min):
    lags_min = np.asarray(lags_min, dtype=float)
    return Curve(60 * lags_min, mspd_closed_form(lags_min, p), np.ones(lags_min.size))


def perturbed(p, factors=(1.3, 0.7, 1.3, 0.7, 1.3)):
    return ModelParams(*(getattr(p, n) * f for n, f in zip(ModelParams.NAMES, factors)))


def ccdf_residual(data, p):
    r = [np.log(ccdf_at(d.abscissae, d.lag / 60, p)) - np.log(d.ordinates) for d in data]
    r = np.concatenate(r)
    return float(np.mean(r * r))


def pdf_fit_ccdfs(lags=(25.0, 125.0, 625.0), n=25):
    thresholds = [np.linspace(2e-4, 3.2 * math.sqrt(mspd_closed_form(t, PDF_FIT_PARAMS)), n)
                  for t in lags]
    return model_ccdf_data(PDF_FIT_PARAMS, lags, thresholds)


# -- FitResult -------------------------------------------------------------------

def test_fit_result_json_round_trip():
    r = FitResult(PDF_FIT_PARAMS.as_dict(), frozenset({"tau1"}), 1.5e-12, 321, True)
    back = FitResult.from_json(r.to_json())
    assert back == r
    assert back.params == PDF_FIT_PARAMS
    doc = r.to_json()
    assert '"tau1_frozen": true' in doc and '"D_frozen": false' in doc


# -- ccdf fits -------------------------------------------------------------------

@pytest.fixture(scope="module")
def pdf_fit_ccdf_fit():
    data = pdf_fit_ccdfs()
    init = perturbed(PDF_FIT_PARAMS, (1.2, 0.8, 1.2, 1.0, 1.0))
    return data, init, fit_model_to_ccdfs(data, init, frozen={"tau1", "tau2"}, seed=1)


def test_ccdf_fit_recovers_free_parameters(pdf_fit_ccdf_fit):
    _, _, res = pdf_fit_ccdf_fit
    assert res.converged
    for name in ("D", "l", "d"):
        assert res.values[name] == pytest.approx(getattr(PDF_FIT_PARAMS, name), rel=0.1)


def test_frozen_parameters_exact(pdf_fit_ccdf_fit):
    _, init, res = pdf_fit_ccdf_fit
    for name in ("tau1", "tau2"):
        assert np.float64(res.values[name]).tobytes() == np.float64(getattr(init, name)).tobytes()
    assert res.values["tau1"] == 400.0
    assert res.frozen == {"tau1", "tau2"}


def test_descent_and_no_spurious_minimum(pdf_fit_ccdf_fit):
    data, init, res = pdf_fit_ccdf_fit
    at_init = ccdf_residual(data, init)
    at_fit = ccdf_residual(data, res.params)
    at_truth = ccdf_residual(data, PDF_FIT_PARAMS)
    assert res.residual <= at_init
    assert res.residual == pytest.approx(at_fit, rel=1e-9, abs=1e-20)
    assert at_truth <= at_fit + 1e-10


def test_tail_floor_and_weights_validation():
    data = pdf_fit_ccdfs(n=5)
    with pytest.raises(FitError, match="two or more"):
        fit_model_to_ccdfs(data[:1], PDF_FIT_PARAMS)
    with pytest.raises(FitError, match="freeze"):
        fit_model_to_ccdfs(data, PDF_FIT_PARAMS, frozen={"alpha"})
    with pytest.raises(FitError, match="positive weight"):
        fit_model_to_ccdfs(data, PDF_FIT_PARAMS, tail_floor=2.0)
    with pytest.raises(FitError, match="nothing to fit"):
        fit_model_to_ccdfs(data, PDF_FIT_PARAMS, frozen=set(ModelParams.NAMES))


# -- MSPD fits -------------------------------------------------------------------

def test_mspd_fit_0930_round_trip():
    curve = mspd_curve(MSPD_FIT_0930, np.geomspace(0.005, 3125, 40))
    res = fit_model_to_mspd(curve, perturbed(MSPD_FIT_0930))
    assert res.converged
    for name in ModelParams.NAMES:
        assert res.values[name] == pytest.approx(getattr(MSPD_FIT_0930, name), rel=0.1)


def test_mspd_fit_1800_with_frozen_waits():
    curve = mspd_curve(MSPD_FIT_1800, np.geomspace(0.5, 3125, 30))
    init = MSPD_FIT_1800.replace(l=1.3e-4, d=1.05e-4)
    res = fit_model_to_mspd(curve, init, frozen={"tau1", "tau2"})
    assert res.values["tau1"] == 400.0 and res.values["tau2"] == 300.0
    for name in ("l", "d"):
        assert res.values[name] == pytest.approx(getattr(MSPD_FIT_1800, name), rel=0.1)


def test_mspd_fit_brownian():
    D = 3e-8
    rng = np.random.default_rng(0)
    lags = np.array([1, 2, 5, 10, 20, 50, 100], dtype=float)
    # empirical MSPD of a minute-sampled Brownian walk
    walk = np.cumsum(rng.normal(0, math.sqrt(2 * D), 200_000))
    values = [np.mean((walk[int(k):] - walk[:-int(k)]) ** 2) for k in lags]
    curve = Curve(60 * lags, values, np.full(lags.size, 1000))
    init = ModelParams(D=1e-8, l=1.0, d=1e-9, tau1=1e9, tau2=1e9)
    res = fit_model_to_mspd(curve, init, frozen={"l", "d", "tau1", "tau2"})
    assert res.values["D"] == pytest.approx(D, rel=0.05)


def test_mspd_fit_weight_rescaling_invariance():
    curve = mspd_curve(MSPD_FIT_1800, np.geomspace(0.5, 3125, 12))
    init = MSPD_FIT_1800.replace(l=1.2e-4, d=1.2e-4)
    w = np.linspace(1.0, 2.0, 12)
    kw = dict(frozen={"tau1", "tau2", "D"}, seed=3)
    a = fit_model_to_mspd(curve, init, weights=w, **kw)
    b = fit_model_to_mspd(curve, init, weights=4 * w, **kw)
    c = fit_model_to_mspd(curve, init, weights=3 * w, **kw)
    assert a == b
    for name in ("l", "d"):
        assert c.values[name] == pytest.approx(a.values[name], rel=1e-6)


def test_mspd_fit_validation():
    with pytest.raises(FitError, match="positive"):
        fit_model_to_mspd(Curve([60.0], [0.0], [1]), PDF_FIT_PARAMS)


def test_fit_is_deterministic_given_seed():
    curve = mspd_curve(MSPD_FIT_1800, np.geomspace(0.5, 3125, 10))
    init = MSPD_FIT_1800.replace(l=1.2e-4)
    a = fit_model_to_mspd(curve, init, frozen={"tau1", "tau2"}, seed=5)
    b = fit_model_to_mspd(curve, init, frozen={"tau1", "tau2"}, seed=5)
    assert a == b


# -- S(q, tau) forms ----------------------------------------------------------------

TAU = np.geomspace(0.05, 1000, 60)


def sqt_curve(values):
    return Curve(60 * TAU, values, np.ones(TAU.size))


def test_single_form_recovered():
    res = fit_sqt(sqt_curve(np.exp(-(TAU / 3.25) ** 0.95)), "single")
    assert res.converged and not res.effectively_single
    assert res.values["tau0"] == pytest.approx(3.25, rel=1e-4)
    assert res.values["p"] == pytest.approx(0.95, rel=1e-4)


def test_double_form_recovered():
    truth = dict(A1=0.15, tau_alpha=0.75, alpha=1.05, tau_beta=60.0, beta=1.4)
    res = fit_sqt(sqt_curve(sqt_form("double", truth, TAU)), "double")
    assert res.converged and not res.effectively_single
    for k, v in truth.items():
        assert res.values[k] == pytest.approx(v, rel=0.01)
    np.testing.assert_allclose(res(TAU), sqt_form("double", truth, TAU), atol=1e-8)


def test_constant_curve_diverges():
    res = fit_sqt(sqt_curve(np.ones(TAU.size)), "single")
    assert not res.converged
    assert res.values["tau0"] > 100 * TAU.max()


def test_double_fit_of_single_relaxation_is_flagged():
    res = fit_sqt(sqt_curve(np.exp(-TAU / 5.0)), "double")
    assert res.effectively_single
    np.testing.assert_allclose(res(TAU), np.exp(-TAU / 5.0), atol=1e-6)


def test_double_fit_equal_timescales_flagged():
    truth = dict(A1=0.4, tau_alpha=5.0, alpha=1.0, tau_beta=5.0, beta=1.0)
    res = fit_sqt(sqt_curve(sqt_form("double", truth, TAU)), "double")
    assert res.effectively_single


def test_sqt_fit_validation():
    with pytest.raises(FitError, match="at least 5"):
        fit_sqt(Curve([60, 120, 180], [0.9, 0.8, 0.7], [1, 1, 1]), "single")
    with pytest.raises(FitError, match="at least 8"):
        fit_sqt(Curve(60 * TAU[:6], np.ones(6), np.ones(6)), "double")
    with pytest.raises(FitError, match="lie in"):
        fit_sqt(sqt_curve(np.full(TAU.size, 1.2)), "single")
    with pytest.raises(FitError, match="unknown"):
        fit_sqt(sqt_curve(np.ones(TAU.size)), "triple")


def test_sqt_fit_json():
    res = SqtFitForm("single", {"tau0": 3.25, "p": 0.95})
    doc = res.to_json()
    assert '"tau0": 3.25' in doc and '"form": "single"' in doc
