"""End-to-end experiment drivers.

Each driver is a pure function of its resolved configuration: it draws all
randomness from the configured seeds and writes CSV files whose bytes depend
only on that configuration. Wall-clock timings go to the log callback, never
to files.
"""
from __future__ import annotations

import copy
import csv
import itertools
import json
import math
import time
import warnings
from pathlib import Path

import numpy as np

from .config import fit_config_from, set_path
from .fp_oracle import solve_fp_1d
from .io import write_idx, write_matrix
from .metrics import (
    PerturbationSpec,
    marginal_density_error,
    perturbation_study,
    relative_score_error,
    second_moment_error,
)
from .pca import pca_fit, pca_project, pca_reconstruct
from .potentials import (
    GinzburgLandau,
    double_well,
    sample_double_well,
    sample_ginzburg_landau,
)
from .samplers import SdeConfig, forward_em, icdf_sample_base, mh_sample_base, reverse_em
from .score import fit_score

__all__ = ["run_experiment", "base_samples", "synthetic_digits", "write_rows", "DRIVERS"]


def _noop(*_a, **_k):
    pass


def _fmt(v):
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else str(v)
    if isinstance(v, (list, dict)):
        return json.dumps(v, sort_keys=True)
    return v


def write_rows(path, rows: list, fields=None) -> None:
    """CSV with a header row; floats written with full precision."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fields is None:
        fields = []
        for r in rows:
            fields.extend(k for k in r if k not in fields)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r.get(k, "")) for k in fields})


def base_samples(systems, N: int, cfg: dict, seed: int):
    """Draws from the fitted base with the configured sampler."""
    if cfg["sampling"]["base_sampler"] == "icdf":
        return icdf_sample_base(systems, N, seed=seed)
    mh = cfg["sampling"]["mh"]
    return mh_sample_base(systems, N, burn_in=mh["burn_in"], thin=mh["thin"],
                          proposal_sigma=mh["proposal_sigma"], seed=seed, chains=mh["chains"])


def _diag_rows(model, **tags):
    return [{**tags, "t": d["t"], "rank": d["rank"], "residual": d["residual"], "status": d["status"],
             "sv_head": d["sv_head"], "coef_max": d["coef_max"]} for d in model.diagnostics]


# ---------------------------------------------------------------------------
# 1-D double well
# ---------------------------------------------------------------------------

def _dw_oracle(cfg, fc, t_max):
    """Reference density evolution of the 1-D double well under the fit's base dynamics."""
    bdw = cfg["target"]["beta_dw"]
    hsp = cfg["evaluation"]["fp_spacing"]
    if fc.family == "fourier":
        L = fc.L
        grid = np.linspace(-L, L, int(round(2 * L / hsp)), endpoint=False)
        # periodized initial law: the forward process lives on the circle
        rho0 = sum(np.exp(-bdw * double_well(grid + 2 * L * k)) for k in range(-4, 5))
        V = np.zeros_like(grid)
        periodic = True
    else:
        half = max(6.0, 8.0 / math.sqrt(fc.alpha * fc.beta))
        grid = np.linspace(-half, half, int(round(2 * half / hsp)) + 1)
        rho0 = np.exp(-bdw * double_well(grid))
        V = 0.5 * fc.alpha * grid**2
        periodic = False
    rho0 = rho0 / (rho0.sum() * (grid[1] - grid[0]))
    return solve_fp_1d(rho0, V, grid, fc.beta, t_max, fc.dt, periodic=periodic)


def _dw1d(cfg, out: Path, log):
    bdw = cfg["target"]["beta_dw"]
    if cfg["target"]["d"] != 1:
        raise ValueError("config: dw1d needs target.d = 1")
    fc0 = fit_config_from(cfg)
    times = sorted(set(float(t) for t in cfg["evaluation"]["times"]))
    if times[-1] > fc0.T + 1e-12:
        raise ValueError(f"config: evaluation time {times[-1]} beyond the horizon T = {fc0.T}")
    E = sample_double_well(cfg["sampling"]["N_eval"], 1, bdw, seed=cfg["seeds"]["eval"])
    exact = lambda t, X: -bdw * X * (X**2 - 1)
    snaps, evo = {0.0: E}, None
    later = [t for t in times if t > 0]
    if later:
        t0 = time.perf_counter()
        evo = _dw_oracle(cfg, fc0, later[-1])
        sde = SdeConfig(fc0.dt, later[-1], fc0.beta, seed=cfg["seeds"]["eval"] + 1,
                        wrap_L=fc0.L if fc0.family == "fourier" else None)
        grad = (lambda X: np.zeros_like(X)) if fc0.family == "fourier" else (lambda X: fc0.alpha * X)
        snaps.update(forward_em(grad, E, sde, later))
        log(f"oracle ready ({time.perf_counter() - t0:.1f} s)")

    per_seed, diags = [], []
    for r in range(cfg["sampling"]["repeats"]):
        t0 = time.perf_counter()
        X = sample_double_well(cfg["sampling"]["N_fit"], 1, bdw, seed=cfg["seeds"]["data"] + r)
        model = fit_score(X, fit_config_from(cfg, seed_offset=r))
        for t in times:
            ref = exact if t == 0 else evo
            err = relative_score_error(model, ref, t, snaps[t])
            per_seed.append({"repeat": r, "data_seed": cfg["seeds"]["data"] + r, "t": t, "error": err})
        diags += _diag_rows(model, repeat=r)
        log(f"repeat {r}: t=0 error {per_seed[-len(times)]['error']:.4f} "
            f"({time.perf_counter() - t0:.1f} s)")

    timeres = []
    for t in times:
        e = np.array([p["error"] for p in per_seed if p["t"] == t])
        timeres.append({"t": t, "error_mean": float(e.mean()),
                        "error_sd": float(e.std(ddof=1)) if e.size > 1 else 0.0})
    e0 = np.array([p["error"] for p in per_seed if p["t"] == 0.0]) if 0.0 in times else np.array([np.nan])
    summary = {"family": fc0.family, "n": fc0.n, "beta": fc0.beta, "L": fc0.L, "alpha": fc0.alpha,
               "repeats": cfg["sampling"]["repeats"], "error": float(e0.mean()),
               "error_sd": float(e0.std(ddof=1)) if e0.size > 1 else 0.0,
               "error_min": float(e0.min()), "error_max": float(e0.max())}
    return summary, {"seeds.csv": per_seed, "timeres.csv": timeres, "diagnostics.csv": diags}


# ---------------------------------------------------------------------------
# d-dimensional double well
# ---------------------------------------------------------------------------

def _dwNd(cfg, out: Path, log):
    d, bdw = cfg["target"]["d"], cfg["target"]["beta_dw"]
    fc = fit_config_from(cfg)
    t0 = time.perf_counter()
    X = sample_double_well(cfg["sampling"]["N_fit"], d, bdw, seed=cfg["seeds"]["data"])
    ref = lambda X: -bdw * X * (X**2 - 1)
    model = fit_score(X, fc, reference_score=ref)
    log(f"fit |S|={model.info['size']} ({time.perf_counter() - t0:.1f} s)")
    t0 = time.perf_counter()
    xT = base_samples(model.basis.systems, cfg["sampling"]["N_gen"], cfg, cfg["seeds"]["generate"])
    gen = reverse_em(model, xT, seed=cfg["seeds"]["generate"] + 1)
    log(f"generated {gen.n} samples ({time.perf_counter() - t0:.1f} s)")
    R = sample_double_well(cfg["sampling"]["N_eval"], d, bdw, seed=cfg["seeds"]["eval"])
    per_dim, mean = marginal_density_error(gen, R, grid_points=cfg["evaluation"]["kde_grid"])
    # the base alone, as a no-learning baseline
    _, base_err = marginal_density_error(xT, R, grid_points=cfg["evaluation"]["kde_grid"])
    summary = {"family": fc.family, "d": d, "n": fc.n, "d_b": fc.d_b, "size": model.info["size"],
               "rank": model.config["rank"], "marginal_error": mean,
               "marginal_error_max": float(per_dim.max()), "base_marginal_error": base_err,
               "mh_acceptance": xT.meta.get("acceptance")}
    rows = [{"dim": i, "marginal_error": float(e)} for i, e in enumerate(per_dim)]
    return summary, {"marginals.csv": rows, "diagnostics.csv": _diag_rows(model)}


# ---------------------------------------------------------------------------
# Ginzburg-Landau chain
# ---------------------------------------------------------------------------

def _gl(cfg, out: Path, log):
    tg, sm = cfg["target"], cfg["sampling"]
    gl = GinzburgLandau(tg["d"], tg["lam"], tg["h"], tg["beta_gl"])
    fc = fit_config_from(cfg)
    t0 = time.perf_counter()
    X = sample_ginzburg_landau(gl, sm["N_fit"], seed=cfg["seeds"]["data"], n_steps=sm["mala_steps"],
                               step=sm["mala_step"])
    R = sample_ginzburg_landau(gl, sm["N_eval"], seed=cfg["seeds"]["eval"], n_steps=sm["mala_steps"],
                               step=sm["mala_step"])
    log(f"MALA data and reference ({time.perf_counter() - t0:.1f} s, "
        f"acceptance {X.meta['acceptance']:.2f})")
    t0 = time.perf_counter()
    model = fit_score(X, fc, reference_score=gl.score)
    log(f"fit |S|={model.info['size']} rank={model.config['rank']} ({time.perf_counter() - t0:.1f} s)")
    t0 = time.perf_counter()
    xT = base_samples(model.basis.systems, sm["N_gen"], cfg, cfg["seeds"]["generate"])
    gen = reverse_em(model, xT, seed=cfg["seeds"]["generate"] + 1)
    log(f"generated {gen.n} samples ({time.perf_counter() - t0:.1f} s)")
    summary = {"family": fc.family, "d": tg["d"], "lam": tg["lam"], "n": fc.n, "d_b": fc.d_b,
               "size": model.info["size"], "rank": model.config["rank"],
               "second_moment_error": second_moment_error(gen, R),
               "base_second_moment_error": second_moment_error(xT, R),
               "data_second_moment_error": second_moment_error(X, R),
               "mala_acceptance": X.meta["acceptance"]}
    ranks = [{"rank": int(k), "initial_score_error": v} for k, v in model.info["rank_errors"].items()]
    return summary, {"ranks.csv": ranks, "diagnostics.csv": _diag_rows(model)}


# ---------------------------------------------------------------------------
# Images
# ---------------------------------------------------------------------------

def synthetic_digits(per_digit: int, digits=range(10), seed: int = 0):
    """Stand-in for a handwritten-digit corpus: ``28 x 28`` uint8 images and labels.

    Each class is a fixed random stroke template deformed by a dozen smooth
    random modes, so every class spans well over ten principal directions.
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:28, 0:28] / 27.0

    def blob(cx, cy, s):
        return np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * s * s))

    imgs, labels = [], []
    for dgt in digits:
        centers = rng.uniform(0.25, 0.75, size=(6, 2))
        template = sum(blob(cx, cy, 0.08) for cx, cy in centers)
        modes = np.stack([blob(*rng.uniform(0.2, 0.8, 2), 0.12) for _ in range(12)])
        a = rng.standard_normal((per_digit, 12)) * 0.25
        batch = template[None] + np.tensordot(a, modes, axes=1)
        batch = np.clip(batch / template.max(), 0, 1)
        imgs.append(np.round(batch * 255).astype(np.uint8))
        labels += [dgt] * per_digit
    return np.concatenate(imgs), np.array(labels, dtype=np.uint8)


def _images(cfg, out: Path, log):
    from .io import read_idx

    ic = cfg["images"]
    if ic["idx"] is None:
        imgs, labs = synthetic_digits(ic["synthetic_per_digit"], ic["digits"], seed=cfg["seeds"]["data"])
        idx, lab = out / "fixture-images.idx", out / "fixture-labels.idx"
        write_idx(idx, imgs)
        write_idx(lab, labs)
    else:
        idx, lab = Path(ic["idx"]), (Path(ic["labels"]) if ic["labels"] else None)
        if lab is None:
            raise ValueError("config: images.labels is required for per-digit filtering")
    data = read_idx(idx, lab, digits=ic["digits"], per_digit=ic["per_digit"])
    labels = np.asarray(data.meta["labels"])
    fc = fit_config_from(cfg)
    rows, gen_all, gen_lab = [], [], []
    for k, dgt in enumerate(ic["digits"]):
        Xd = data.data[labels == dgt]
        if Xd.shape[0] == 0:
            raise ValueError(f"input: no images with label {dgt}")
        t0 = time.perf_counter()
        pmap = pca_fit(Xd, ic["pca_r"])
        Z = pca_project(pmap, Xd)
        # unit-variance components so every coordinate sits well inside [-L, L]
        scale = Z.std(axis=0, ddof=1)
        model = fit_score(Z / scale, fit_config_from(cfg, seed_offset=k))
        xT = base_samples(model.basis.systems, cfg["sampling"]["N_gen"], cfg, cfg["seeds"]["generate"] + k)
        G = reverse_em(model, xT, seed=cfg["seeds"]["generate"] + 100 + k).data * scale
        imgs = np.clip(pca_reconstruct(pmap, G), 0.0, 1.0)
        # round-trip invariants of the PCA map
        inside = pca_reconstruct(pmap, Z)
        rows.append({
            "digit": int(dgt), "N": int(Xd.shape[0]), "r": pmap.r,
            "explained_ratio": float(pmap.explained_ratio.sum()),
            "loadings_orthonormality": float(np.abs(pmap.loadings.T @ pmap.loadings - np.eye(pmap.r)).max()),
            "roundtrip_error": float(np.abs(pca_reconstruct(pmap, pca_project(pmap, inside)) - inside).max()),
            "mean_projection": float(np.abs(pca_project(pmap, pmap.mean[None])).max()),
            "generated_mean_pixel": float(imgs.mean()), "data_mean_pixel": float(Xd.mean()),
            "component_moment_error": second_moment_error(G, Z),
        })
        gen_all.append(imgs)
        gen_lab += [int(dgt)] * imgs.shape[0]
        log(f"digit {dgt}: {Xd.shape[0]} images, generated {imgs.shape[0]} "
            f"({time.perf_counter() - t0:.1f} s)")
    gen = np.concatenate(gen_all)
    write_matrix(out / "generated.ofdm", gen)
    write_idx(out / "generated-images.idx", np.round(gen * 255).astype(np.uint8).reshape(-1, 28, 28)
              if gen.shape[1] == 784 else gen)
    write_idx(out / "generated-labels.idx", np.array(gen_lab, dtype=np.uint8))
    summary = {"family": fc.family, "n": fc.n, "digits": len(rows), "pca_r": ic["pca_r"],
               "max_roundtrip_error": max(r["roundtrip_error"] for r in rows),
               "max_orthonormality_error": max(r["loadings_orthonormality"] for r in rows),
               "max_mean_projection": max(r["mean_projection"] for r in rows)}
    return summary, {"digits.csv": rows}


# ---------------------------------------------------------------------------
# Perturbation scaling
# ---------------------------------------------------------------------------

def _perturb(cfg, out: Path, log):
    pc = cfg["perturb"]
    spec = PerturbationSpec(family=pc["family"], gamma=pc["gamma"], M=pc["M_fixture"], L=cfg["base"]["L"],
                            alpha=cfg["base"]["alpha"], beta=cfg["beta"])
    t0 = time.perf_counter()
    rows, slopes = perturbation_study(pc["deltas"], pc["Ms"], spec, T=cfg["time"]["T"], dt=cfg["time"]["dt"])
    log(f"perturbation grid done ({time.perf_counter() - t0:.1f} s)")
    srows = [{"M": M, "slope_smallest_pair": slopes[M], "slope_all": slopes[(M, "all")]} for M in pc["Ms"]]
    summary = {"family": spec.family, "gamma": spec.gamma, "M_fixture": spec.M,
               **{f"slope_M{M}": slopes[M] for M in pc["Ms"]}}
    return summary, {"perturb.csv": rows, "slopes.csv": srows}


DRIVERS = {"dw1d": _dw1d, "dwNd": _dwNd, "gl": _gl, "images": _images, "perturb": _perturb}


def _sweep_points(cfg):
    sweep = cfg.get("sweep") or {}
    keys = sorted(sweep)
    if not keys:
        yield {}, cfg
        return
    for values in itertools.product(*(sweep[k] for k in keys)):
        sub = copy.deepcopy(cfg)
        sub["sweep"] = {}
        for k, v in zip(keys, values):
            set_path(sub, k, v)
        yield dict(zip(keys, values)), sub


def run_experiment(cfg: dict, out_dir=None, log=_noop) -> list:
    """Run a resolved configuration (every sweep point) and write its outputs.

    Files land in ``out_dir`` (default ``cfg["paths"]["out"]/<experiment>``):
    ``config.json``, ``results.csv`` (one row per sweep point, with the point's
    full configuration echoed in the ``config`` column) and driver-specific
    tables prefixed by the sweep-point index when sweeping.

    Returns
    -------
    list of dict
        The ``results.csv`` rows.
    """
    exp = cfg["experiment"]
    out = Path(out_dir) if out_dir is not None else Path(cfg["paths"]["out"]) / exp
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg, indent=1, sort_keys=True) + "\n")
    driver = DRIVERS[exp]
    results = []
    points = list(_sweep_points(cfg))
    for i, (point, sub) in enumerate(points):
        label = ", ".join(f"{k}={v}" for k, v in point.items()) or exp
        log(f"[{exp}] {label}")
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            summary, tables = driver(sub, out, log)
        seen = sorted({str(w.message) for w in caught})
        for msg in seen:
            log(f"  warning: {msg}")
        prefix = f"{i:03d}-" if len(points) > 1 else ""
        for name, rows in tables.items():
            if rows:
                write_rows(out / f"{prefix}{name}", rows)
        row = {"experiment": exp, "point": i, **point, **summary, "warnings": len(seen),
               "config": json.dumps(sub, sort_keys=True, separators=(",", ":"))}
        results.append(row)
    write_rows(out / "results.csv", results)
    return results
