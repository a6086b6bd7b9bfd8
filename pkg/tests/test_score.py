import math
import warnings

import numpy as np
import pytest
from numpy.polynomial.hermite_e import hermegauss

from ofdiffusion.potentials import sample_double_well
from ofdiffusion.score import (
    FitConfig,
    ScoreFitError,
    ScoreModel,
    TimeRangeWarning,
    eval_score,
    fit_score,
    load_model,
)


def gauss_rule(mean, sd, npts=60):
    y, w = hermegauss(npts)
    return (mean + sd * y)[:, None], w / w.sum()


def ou_score(x, t, mu0, var0, alpha=1.0, beta=1.0):
    e = math.exp(-alpha * t)
    m = mu0 * e
    v = var0 * e * e + (1 - e * e) / (alpha * beta)
    return -(x - m) / v, m, v


@pytest.fixture(scope="module")
def dw_model():
    X = sample_double_well(20000, 1, 2.0, seed=3)
    return fit_score(X, FitConfig(family="hermite", n=5, T=0.1, dt=0.01))


def test_stationary_null_coefficients_vanish():
    N = 40000
    X = np.random.default_rng(0).standard_normal((N, 2))
    model = fit_score(X, FitConfig(family="hermite", n=3, d_b=1, T=1.0, dt=0.01))
    assert model.coefficient_norms().max() <= 5 / math.sqrt(N)


def test_ou_shifted_gaussian_exact_law():
    # Gauss rule for N(0.5, 1): the fit sees the exact law
    X, W = gauss_rule(0.5, 1.0)
    model = fit_score(X, FitConfig(family="hermite", n=3, T=1.0, dt=0.01), weights=W)
    for t in [0.0, 0.5, 1.0]:
        _, m, v = ou_score(0.0, t, 0.5, 1.0)
        Xt, Wt = gauss_rule(m, math.sqrt(v))
        s = model(t, Xt)[:, 0]
        ref = ou_score(Xt[:, 0], t, 0.5, 1.0)[0]
        err = math.sqrt(Wt @ (s - ref) ** 2 / (Wt @ ref**2))
        assert err < 1e-9


@pytest.mark.parametrize("t", [0.0, 0.5, 1.0])
def test_ou_shifted_gaussian_monte_carlo(t):
    N = 200000
    X = np.random.default_rng(1).normal(0.5, 1.0, (N, 1))
    # n = 1 spans the linear score; larger n only adds sampling noise
    model = fit_score(X, FitConfig(family="hermite", n=1, T=1.0, dt=0.01))
    _, m, v = ou_score(0.0, t, 0.5, 1.0)
    E = np.random.default_rng(2).normal(m, math.sqrt(v), (100000, 1))
    s = model(t, E)[:, 0]
    ref = ou_score(E[:, 0], t, 0.5, 1.0)[0]
    assert np.linalg.norm(s - ref) / np.linalg.norm(ref) <= 1e-2


def test_zero_coefficients_give_base_drift(dw_model):
    zero = dw_model.with_coeffs(np.zeros_like(dw_model.coeffs))
    x = np.linspace(-2, 2, 11)[:, None]
    np.testing.assert_allclose(zero(0.05, x), -dw_model.beta * x, atol=1e-15)


def test_fourier_has_no_drift_term():
    X = np.random.default_rng(4).uniform(-1, 1, (3000, 1))
    model = fit_score(X, FitConfig(family="fourier", n=3, L=2.0, beta=0.5, T=0.02, dt=0.01))
    zero = model.with_coeffs(np.zeros_like(model.coeffs))
    assert np.all(zero(0.0, np.linspace(-2, 2, 9)[:, None]) == 0)


def test_linear_in_coefficients(dw_model):
    rng = np.random.default_rng(5)
    C1 = rng.normal(size=dw_model.coeffs.shape)
    C2 = rng.normal(size=dw_model.coeffs.shape)
    x = rng.normal(size=(50, 1))
    m0 = dw_model.with_coeffs(np.zeros_like(C1))
    drift = m0(0.03, x)
    f = lambda C: dw_model.with_coeffs(C)(0.03, x) - drift  # noqa: E731
    np.testing.assert_allclose(f(2.0 * C1 - 3.0 * C2), 2.0 * f(C1) - 3.0 * f(C2), atol=1e-10)


def test_piecewise_constant_lookup(dw_model):
    x = np.array([[0.3]])
    assert np.array_equal(dw_model(0.019999, x), dw_model(0.01, x))
    assert np.array_equal(dw_model(0.02, x), dw_model.score_at_index(2, x))
    assert not np.array_equal(dw_model(0.0, x), dw_model(0.1, x))


def test_time_outside_range(dw_model):
    x = np.zeros((1, 1))
    with pytest.warns(TimeRangeWarning):
        s = dw_model(0.5, x)
    assert np.array_equal(s, dw_model(0.1, x))
    with pytest.raises(ValueError):
        dw_model(-0.1, x, strict=True)


def test_eval_score_single_point(dw_model):
    x = np.array([0.4])
    assert eval_score(dw_model, 0.0, x).shape == (1,)
    assert eval_score(dw_model, 0.0, x)[0] == dw_model(0.0, x[None, :])[0, 0]


def test_double_well_initial_score_pointwise():
    X = sample_double_well(200000, 1, 2.0, seed=0)
    model = fit_score(X, FitConfig(family="hermite", n=5, T=0.01, dt=0.01))
    x = np.linspace(-1.5, 1.5, 301)[:, None]
    ref = -2.0 * x[:, 0] * (x[:, 0] ** 2 - 1)
    assert np.max(np.abs(model(0.0, x)[:, 0] - ref)) <= 0.1


def test_determinism():
    X = sample_double_well(5000, 2, 2.0, seed=6)
    cfg = FitConfig(family="hermite", n=3, d_b=1, T=0.05, dt=0.01, method="sketched", rank=10, seed=3)
    a, b = fit_score(X, cfg), fit_score(X, cfg)
    assert np.array_equal(a.coeffs, b.coeffs)


@pytest.mark.parametrize("family", ["hermite", "fourier", "meanfield"])
def test_roundtrip_bit_exact(tmp_path, family):
    X = sample_double_well(4000, 2, 2.0, seed=7)
    model = fit_score(X, FitConfig(family=family, n=3, d_b=1, T=0.03, dt=0.01, L=3.0, grid_size=801))
    model.save(tmp_path / "m.ofd")
    back = load_model(tmp_path / "m.ofd")
    assert np.array_equal(back.coeffs, model.coeffs)
    assert np.array_equal(back.times, model.times)
    assert back.config == model.config
    assert back.diagnostics == model.diagnostics
    x = np.random.default_rng(8).normal(size=(100, 2))
    assert np.array_equal(back(0.02, x), model(0.02, x))
    back.save(tmp_path / "m2.ofd")
    assert (tmp_path / "m.ofd").read_bytes() == (tmp_path / "m2.ofd").read_bytes()


def test_rank_selection_uses_reference():
    X = sample_double_well(8000, 2, 2.0, seed=9)
    ref = lambda Y: -2.0 * Y * (Y**2 - 1)  # noqa: E731
    cfg = FitConfig(family="hermite", n=4, d_b=1, T=0.02, dt=0.01, method="sketched",
                    rank_candidates=(3, 8, 20, 40))
    model = fit_score(X, cfg, reference_score=ref)
    errs = {int(k): v for k, v in model.info["rank_errors"].items()}
    assert model.config["rank"] == min(errs, key=errs.get)
    assert all(d["rank"] == model.config["rank"] for d in model.diagnostics)


def test_rank_selection_without_reference_uses_threshold():
    X = sample_double_well(3000, 1, 2.0, seed=10)
    model = fit_score(X, FitConfig(family="hermite", n=4, T=0.01, dt=0.01, method="sketched", tau=1e-3))
    assert 1 <= model.config["rank"] <= 5


def test_non_finite_samples():
    X = np.zeros((10, 1))
    X[3] = np.nan
    with pytest.raises(ScoreFitError, match="input"):
        fit_score(X, FitConfig())


def test_stage_label_on_basis_error():
    X = np.random.default_rng(0).normal(size=(100, 3))
    with pytest.raises(ScoreFitError, match="^basis"):
        fit_score(X, FitConfig(d_b=5))


def test_config_roundtrip():
    cfg = FitConfig(family="fourier", n=4, rank_candidates=[5, 10])
    assert FitConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError):
        FitConfig.from_dict({"bogus": 1})
    with pytest.raises(ValueError):
        FitConfig(family="wavelet")


def test_stationary_coefficients_shrink_in_time():
    X = np.random.default_rng(11).normal(1.0, 0.7, (20000, 1))
    model = fit_score(X, FitConfig(family="hermite", n=3, T=4.0, dt=0.01))
    norms = model.coefficient_norms()
    assert norms[-1] < 0.05 * norms[0]
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert isinstance(model, ScoreModel)
