import math

import numpy as np
import pytest

from ofdiffusion.fp_oracle import (
    FokkerPlanckError,
    gibbs_density,
    solve_fp_1d,
    true_score_1d,
)
from ofdiffusion.potentials import double_well

GRID = np.linspace(-4, 5, 2001)


def ou_moments(t, m0=0.5, v0=0.25):
    e = np.exp(-t)
    return m0 * e, v0 * e * e + 1 - e * e


def gaussian(m, v):
    return lambda x: np.exp(-(x - m) ** 2 / (2 * v))


def test_stationary_density_is_fixed():
    g = np.linspace(-3, 3, 1201)
    V = 2.0 * double_well(g)
    rho = gibbs_density(g, V, 1.5)
    ev = solve_fp_1d(rho, V, g, 1.5, 1.0, 0.01)
    l1 = np.abs(ev.rho - rho).sum(axis=1) * ev.h
    assert l1.max() <= 1e-6


@pytest.mark.filterwarnings("ignore:Crank-Nicolson")  # smooth data, stiff modes never excited
def test_ou_moments_track_closed_form():
    ev = solve_fp_1d(gaussian(0.5, 0.25), lambda x: 0.5 * x**2, GRID, 1.0, 1.0, 1e-3, theta=0.5)
    mom = ev.moments(2)
    m, v = ou_moments(ev.times)
    assert np.abs(mom[:, 1] - m).max() <= 1e-4
    assert np.abs(mom[:, 2] - mom[:, 1] ** 2 - v).max() <= 1e-4


def test_backward_euler_default_tracks_moments():
    ev = solve_fp_1d(gaussian(0.5, 0.25), lambda x: 0.5 * x**2, GRID, 1.0, 0.5, 1e-4, store_every=100)
    mom = ev.moments(2)
    m, v = ou_moments(ev.times)
    assert np.abs(mom[:, 1] - m).max() <= 1e-4
    assert np.abs(mom[:, 2] - mom[:, 1] ** 2 - v).max() <= 1e-4


def test_mass_conserved_every_step():
    ev = solve_fp_1d(gaussian(1.0, 0.1), lambda x: 2.0 * double_well(x), GRID, 2.0, 0.5, 0.005)
    assert np.abs(ev.mass() - 1).max() <= 1e-8
    assert ev.times.size == 101


@pytest.mark.filterwarnings("ignore:Crank-Nicolson")  # smooth data, stiff modes never excited
def test_grid_refinement_second_order():
    errs = []
    for M in [101, 201, 401]:
        g = np.linspace(-4, 5, M)
        ev = solve_fp_1d(gaussian(0.5, 0.25), lambda x: 0.5 * x**2, g, 1.0, 1.0, 1e-3, theta=0.5)
        errs.append(np.abs(ev.moments(1)[:, 1] - ou_moments(ev.times)[0]).max())
    assert errs[0] / errs[1] >= 3 and errs[1] / errs[2] >= 3


def test_periodic_flat_potential_spreads_to_uniform():
    g = np.linspace(-2, 2, 400, endpoint=False)
    ev = solve_fp_1d(gaussian(1.5, 0.05), np.zeros_like(g), g, 1.0, 20.0, 0.05, periodic=True)
    np.testing.assert_allclose(ev.rho[-1], 0.25, atol=1e-6)
    assert abs(ev.mass()[-1] - 1) < 1e-10


@pytest.mark.filterwarnings("ignore:Crank-Nicolson")  # smooth data, stiff modes never excited
def test_gaussian_slice_score_is_linear():
    ev = solve_fp_1d(gaussian(0.5, 0.25), lambda x: 0.5 * x**2, GRID, 1.0, 0.3, 1e-3, theta=0.5)
    m, v = ou_moments(0.3)
    x = np.linspace(m - 1.5 * math.sqrt(v), m + 1.5 * math.sqrt(v), 50)
    s = true_score_1d(ev, 0.3, x)
    slope = np.polyfit(x, s, 1)[0]
    assert slope == pytest.approx(-1 / v, abs=1e-3)


def test_symmetric_density_score_zero_at_origin():
    g = np.linspace(-4, 4, 2001)
    ev = solve_fp_1d(lambda x: np.exp(-2 * double_well(x)), lambda x: 0.5 * x**2, g, 1.0, 0.5, 0.01)
    assert abs(true_score_1d(ev, 0.25, np.array([0.0]))[0]) <= 1e-6


def test_stationary_score_matches_potential():
    g = np.linspace(-3, 3, 3001)
    V = 2.0 * double_well(g)
    ev = solve_fp_1d(gibbs_density(g, V, 1.0), V, g, 1.0, 0.1, 0.01)
    x = np.linspace(-2, 2, 41)
    np.testing.assert_allclose(true_score_1d(ev, 0.05, x), -2.0 * x * (x**2 - 1), atol=1e-4)


def test_floor_region_masked():
    g = np.linspace(-10, 10, 2001)
    ev = solve_fp_1d(gaussian(0.0, 0.1), lambda x: 0.5 * x**2, g, 1.0, 0.01, 0.01)
    s = true_score_1d(ev, 0.0, np.array([0.0, 9.5, 20.0]))
    assert np.isfinite(s[0]) and np.isnan(s[1]) and np.isnan(s[2])


def test_crank_nicolson_large_step_warns():
    g = np.linspace(-4, 5, 201)
    with pytest.warns(RuntimeWarning, match="Crank-Nicolson"):
        solve_fp_1d(gaussian(0.0, 1.0), lambda x: 0.5 * x**2, g, 1.0, 0.01, 1e-2, theta=0.5)


def test_input_validation():
    g = np.linspace(-1, 1, 11)
    with pytest.raises(FokkerPlanckError, match="normalized"):
        solve_fp_1d(np.ones(11), np.zeros(11), g, 1.0, 0.1, 0.01)
    with pytest.raises(FokkerPlanckError, match="uniform"):
        solve_fp_1d(np.ones(3), np.zeros(3), np.array([0, 1, 3.0]), 1.0, 0.1, 0.01)
    with pytest.raises(FokkerPlanckError):
        solve_fp_1d(-np.ones(11), np.zeros(11), g, 1.0, 0.1, 0.01)


def test_sampling_and_csv(tmp_path):
    ev = solve_fp_1d(gaussian(0.5, 0.25), lambda x: 0.5 * x**2, GRID, 1.0, 0.1, 0.01)
    x = ev.sample(0.1, 200000, 1)
    m, v = ou_moments(0.1)
    assert abs(x.mean() - m) < 4 * math.sqrt(v / x.size)
    ev.to_csv(tmp_path / "e.csv")
    assert (tmp_path / "e.csv").read_text().startswith("t,x,rho,score")
