"""End-to-end acceptance checks, one test per criterion.

Each test prints a ``criterion N: PASS|FAIL`` line (collected in the terminal
summary). Runs at the full published dimension are gated behind ``OFD_LONG=1``.
"""
import math
import os
import time

import numpy as np
import pytest
from scipy import stats

from ofdiffusion.assembly import SpectralAssembler, em_moments, fill_moment_table
from ofdiffusion.basis import SeparableBasis
from ofdiffusion.cluster import build_local_2cluster
from ofdiffusion.config import resolve_config
from ofdiffusion.eigenbasis import build_hermite_basis
from ofdiffusion.experiments import run_experiment
from ofdiffusion.meanfield import build_meanfield_base, fit_maxent_marginal
from ofdiffusion.metrics import PerturbationSpec, perturbation_study
from ofdiffusion.potentials import sample_double_well
from ofdiffusion.samplers import SdeConfig, forward_em, reverse_em
from ofdiffusion.score import FitConfig, fit_score
from ofdiffusion.solver import sketched_solve, thresholded_solve

LONG = os.environ.get("OFD_LONG") == "1"


def long_only(fn):
    return pytest.mark.slow(pytest.mark.skipif(not LONG, reason="full-dimension run; set OFD_LONG=1")(fn))


def _run(exp, tmp_path, preset="desk", **over):
    cfg = resolve_config(exp, preset=preset, overrides=list(over.items()))
    t0 = time.perf_counter()
    rows = run_experiment(cfg, tmp_path)
    return rows, time.perf_counter() - t0


# --- 1 -----------------------------------------------------------------------

PUBLISHED_SWEEP = {5: 0.0412, 7: 0.0408, 9: 0.0405, 11: 0.0401}


def test_c01_double_well_hermite(tmp_path, report):
    # five fit seeds, fixed evaluation draw, error at t = 0
    (row,), secs = _run("dw1d", tmp_path / "n9", preset="paper", **{"evaluation.times": [0.0]})
    assert row["n"] == 9 and row["repeats"] == 5
    ok_err = report(1, row["error"] <= 0.06 and secs <= 120,
                    f"hermite n=9: error {row['error']:.4f} (<= 0.06), {secs:.0f} s (<= 120 s)")
    errs = {}
    for n in PUBLISHED_SWEEP:
        (r,), _ = _run("dw1d", tmp_path / f"n{n}", preset="paper",
                       **{"evaluation.times": [0.0], "basis.n": n})
        errs[n] = r["error"]
    ok_sweep = all(abs(errs[n] - PUBLISHED_SWEEP[n]) <= 0.02 for n in errs)
    report(1, ok_sweep, "n-sweep " + ", ".join(f"n={n}: {e:.4f}" for n, e in errs.items())
           + " (each within 0.02 of 0.0412/0.0408/0.0405/0.0401)")
    assert ok_err and ok_sweep


# --- 2 -----------------------------------------------------------------------

def test_c02_double_well_fourier(tmp_path, report):
    common = {"base.family": "fourier", "beta": 0.5, "basis.n": 11, "evaluation.times": [0.0]}
    (good,), _ = _run("dw1d", tmp_path / "L3", preset="paper", **common, **{"base.L": 3.0})
    (bad,), _ = _run("dw1d", tmp_path / "L2", preset="paper", **common, **{"base.L": 2.0})
    ok = report(2, good["error"] <= 0.08 and bad["error"] >= 0.25,
                f"fourier n=11: L=3 error {good['error']:.4f} (<= 0.08), L=2 error {bad['error']:.4f} (>= 0.25)")
    assert ok


# --- 3 -----------------------------------------------------------------------

def test_c03_stationary_null(report):
    N, d = 40000, 2
    X = np.random.default_rng(0).standard_normal((N, d))
    model = fit_score(X, FitConfig(family="hermite", n=3, d_b=1, T=1.0, dt=0.01))
    cmax = float(model.coefficient_norms().max())
    xT = np.random.default_rng(1).standard_normal((N, d))
    G = reverse_em(model, xT, seed=2).data
    pvals = [stats.kstest(G[:, i], "norm").pvalue for i in range(d)]
    ok = report(3, cmax <= 5 / math.sqrt(N) and min(pvals) > 0.01,
                f"max |C| {cmax:.2e} (<= {5 / math.sqrt(N):.2e}), KS p-values "
                + ", ".join(f"{p:.3f}" for p in pvals) + " (> 0.01)")
    assert ok


# --- 4 -----------------------------------------------------------------------

def test_c04_ou_closed_loop(report):
    mu0, sd0 = 0.5, 0.5
    Nf, Ng = 200000, 100000
    X = np.random.default_rng(0).normal(mu0, sd0, (Nf, 1))
    # n = 1 spans the exact (linear) score of every Gaussian
    model = fit_score(X, FitConfig(family="hermite", n=1, T=4.0, dt=0.001))
    errs = []
    for t in (0.0, 0.5, 1.0):
        e = math.exp(-t)
        m, v = mu0 * e, sd0**2 * e * e + 1 - e * e
        E = np.random.default_rng(10).normal(m, math.sqrt(v), (100000, 1))
        ref = -(E[:, 0] - m) / v
        errs.append(float(np.linalg.norm(model(t, E)[:, 0] - ref) / np.linalg.norm(ref)))
    G = reverse_em(model, np.random.default_rng(1).standard_normal((Ng, 1)), seed=2).data[:, 0]
    # fit data and generated draws both carry sampling noise
    se_m = sd0 * math.sqrt(1 / Nf + 1 / Ng)
    se_v = sd0**2 * math.sqrt(2 / Nf + 2 / Ng)
    zm, zv = (G.mean() - mu0) / se_m, (G.var(ddof=1) - sd0**2) / se_v
    ok = report(4, max(errs) <= 1e-2 and abs(zm) <= 3 and abs(zv) <= 3,
                "score error at t=0,0.5,1: " + ", ".join(f"{e:.1e}" for e in errs)
                + f" (<= 1e-2); generated mean z={zm:+.2f}, variance z={zv:+.2f} (|z| <= 3)")
    assert ok


# --- 5 -----------------------------------------------------------------------

def test_c05_assembly_matches_simulation(report):
    S = build_local_2cluster(2, 4, 1, include_constant=True)
    basis = SeparableBasis([build_hermite_basis(1.0, 1.0, 9)] * 2, S)
    X0 = sample_double_well(100000, 2, 2.0, seed=0)
    asm = SpectralAssembler(basis, fill_moment_table(X0, basis))
    snaps = forward_em(lambda X: X, X0, SdeConfig(0.001, 0.5, 1.0, seed=1), [0.0, 0.1, 0.5])
    z = stats.norm.ppf(0.995)
    fracs = []
    for t in (0.0, 0.1, 0.5):
        A, B, A_se, B_se = em_moments(snaps[t], basis)
        inside = np.concatenate([(np.abs(asm.A(t) - A) <= z * A_se + 1e-12).ravel(),
                                 (np.abs(asm.B(t) - B) <= z * B_se + 1e-12).ravel()])
        fracs.append(float(inside.mean()))
    ok = report(5, min(fracs) >= 0.99,
                "entries inside 99% CI at t=0,0.1,0.5: " + ", ".join(f"{f:.4f}" for f in fracs) + " (>= 0.99)")
    assert ok


# --- 6 -----------------------------------------------------------------------

def test_c06_double_well_desk(tmp_path, report):
    (row,), secs = _run("dwNd", tmp_path)
    assert row["d"] == 8 and row["family"] == "meanfield" and row["n"] == 10 and row["d_b"] == 2
    ok = report(6, row["marginal_error"] <= 0.08,
                f"d=8 mean marginal error {row['marginal_error']:.4f} (<= 0.08; base alone "
                f"{row['base_marginal_error']:.4f}), {secs:.0f} s")
    assert ok


@long_only
def test_c06_double_well_full(tmp_path, report):
    (row,), secs = _run("dwNd", tmp_path, preset="paper")
    ok = report(6, row["marginal_error"] <= 0.06,
                f"d=32 mean marginal error {row['marginal_error']:.4f} (<= 0.06), {secs:.0f} s")
    assert ok


# --- 7 -----------------------------------------------------------------------

def test_c07_ginzburg_landau_desk(tmp_path, report):
    (row,), secs = _run("gl", tmp_path)
    assert row["d"] == 16 and row["lam"] == 0.05
    ok = report(7, row["second_moment_error"] <= 0.12,
                f"d=16 second-moment error {row['second_moment_error']:.4f} (<= 0.12; base alone "
                f"{row['base_second_moment_error']:.4f}), rank {row['rank']}, {secs:.0f} s")
    assert ok


@long_only
def test_c07_ginzburg_landau_full(tmp_path, report):
    (row,), secs = _run("gl", tmp_path, preset="paper")
    ok = report(7, row["second_moment_error"] <= 0.09,
                f"d=32 second-moment error {row['second_moment_error']:.4f} (<= 0.09), {secs:.0f} s")
    assert ok


# --- 8 -----------------------------------------------------------------------

def test_c08_perturbation_scaling(report):
    rows, slopes = perturbation_study([0.05, 0.1], [8], PerturbationSpec(family="fourier", gamma=0.5, M=40))
    ok = report(8, 1.7 <= slopes[8] <= 2.3,
                f"log-log slope {slopes[8]:.3f} over delta 0.05..0.1 with 8 basis functions (in [1.7, 2.3])")
    assert ok


# --- 9 -----------------------------------------------------------------------

def test_c09_solver_properties(report):
    rel = []
    for trial in range(20):
        rng = np.random.default_rng(1000 + trial)
        n, rank = int(rng.integers(20, 80)), int(rng.integers(1, 15))
        Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
        A = (Q[:, :rank] * np.exp(rng.uniform(-2, 2, rank))) @ Q[:, :rank].T
        B = A @ rng.normal(size=(n, 2))
        Cs, _ = sketched_solve(A, B, rank + 5, rank, trial)
        Ct, _ = thresholded_solve(A, B, 1e-10)
        rel.append(np.linalg.norm(Cs - Ct) / np.linalg.norm(Ct))
    res = []
    for trial in range(10):
        rng = np.random.default_rng(2000 + trial)
        n = int(rng.integers(10, 150))
        M = rng.normal(size=(n, n))
        A = M @ M.T / n + np.eye(n)
        res.append(thresholded_solve(A, rng.normal(size=(n, 3)))[1].residual)
    ok = report(9, max(rel) <= 1e-6 and max(res) <= 1e-8,
                f"sketched vs thresholded max rel. diff {max(rel):.1e} over 20 trials (<= 1e-6); "
                f"max residual {max(res):.1e} (<= 1e-8)")
    assert ok


# --- 10 ----------------------------------------------------------------------

def test_c10_maxent_recovery(report):
    m = fit_maxent_marginal([1.0, 0.0, 1.0, 0.0, 3.0], (-8.0, 8.0))
    X = sample_double_well(40000, 4, 2.0, seed=0)
    base = build_meanfield_base(X, 6)
    worst = max(mg.moment_residual for mg in base.marginals)
    ok = report(10, abs(m.nu[2] - 0.5) <= 1e-6 and abs(m.nu[3]) <= 1e-4 and abs(m.nu[4]) <= 1e-4
                and m.moment_residual <= 1e-6 and worst <= 1e-6,
                f"nu2-0.5 {m.nu[2] - 0.5:.1e}, nu3 {m.nu[3]:.1e}, nu4 {m.nu[4]:.1e}; worst fitted marginal "
                f"moment residual {worst:.1e} (<= 1e-6)")
    assert ok


# --- 11 ----------------------------------------------------------------------

def test_c11_images_smoke(tmp_path, report):
    (row,), secs = _run("images", tmp_path, **{"images.synthetic_per_digit": 300, "images.per_digit": 300})
    inv = max(row["max_roundtrip_error"], row["max_orthonormality_error"], row["max_mean_projection"])
    ok = report(11, row["digits"] == 10 and row["pca_r"] == 10 and inv <= 1e-10,
                f"synthetic images, 10 digits, PCA r=10: worst invariant {inv:.1e} (<= 1e-10), {secs:.0f} s")
    assert ok
