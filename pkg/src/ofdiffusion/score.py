"""Fitted time-dependent score model.

The score is represented as ``s(t, x) = F(x) @ C(t) - beta * grad V(x)``
where ``F`` holds the cluster basis functions and ``C(t)`` is obtained at every
point of a uniform time grid from one pass over the initial samples.
"""
from __future__ import annotations

import dataclasses
import json
import math
import time as _time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import io as ofio
from .assembly import SpectralAssembler, fill_moment_table
from .basis import SeparableBasis
from .cluster import BasisIndexSet, build_local_2cluster
from .eigenbasis import build_fourier_basis, build_hermite_basis
from .meanfield import MeanFieldBase, build_meanfield_base
from .sample_matrix import as_array
from .solver import rng_for, select_rank, solve

__all__ = [
    "FitConfig",
    "ScoreModel",
    "ScoreFitError",
    "TimeRangeWarning",
    "fit_score",
    "eval_score",
    "build_systems",
    "save_model",
    "load_model",
]

MODEL_FORMAT = "ofdiffusion-model"
MODEL_VERSION = 1


class ScoreFitError(RuntimeError):
    """Fit failure; the message starts with the pipeline stage."""


class TimeRangeWarning(UserWarning):
    pass


@dataclass
class FitConfig:
    """Everything that determines a fit besides the samples.

    Parameters
    ----------
    family : {"hermite", "fourier", "meanfield"}
        Per-coordinate eigensystem. ``hermite`` uses ``V = alpha x^2 / 2``,
        ``fourier`` the flat potential on ``[-L, L)``, ``meanfield`` a maxent
        fit of each marginal (its inverse temperature is fixed to 1).
    n : int
        Eigenfunctions per coordinate (excluding the constant).
    d_b : int
        Pair bandwidth; 0 keeps singles only.
    T, dt : float
        Horizon and spacing of the time grid.
    method : {"thresholded", "sketched", "ridge"}
    rank, sketch : int, optional
        Sketched-solver rank and width; ``rank=None`` selects it at ``t=0``.
    rank_candidates : sequence of int
        Ranks tried during selection.
    """

    family: str = "hermite"
    n: int = 5
    d_b: int = 0
    include_singles: bool = True
    include_constant: bool = True
    beta: float = 1.0
    alpha: float = 1.0
    L: float = 3.0
    n_m: int = 6
    grid_size: int = 4001
    T: float = 2.0
    dt: float = 0.002
    method: str = "thresholded"
    tau: float = 1e-8
    rank: int | None = None
    sketch: int | None = None
    rank_candidates: tuple = ()
    mu: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        self.rank_candidates = tuple(int(r) for r in self.rank_candidates)
        if self.family not in ("hermite", "fourier", "meanfield"):
            raise ValueError(f"unknown base family {self.family!r}")
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if self.d_b < 0:
            raise ValueError("d_b must be nonnegative")
        if not (self.dt > 0 and self.T >= 0):
            raise ValueError("need dt > 0 and T >= 0")
        if self.beta <= 0 or self.alpha <= 0 or self.L <= 0:
            raise ValueError("beta, alpha and L must be positive")

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["rank_candidates"] = list(self.rank_candidates)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FitConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown fit options {sorted(extra)}")
        return cls(**d)


def _expansion_count(family: str, n: int) -> int:
    if family == "fourier":
        return 4 * ((n + 1) // 2) + 1
    return 2 * n + 1


def build_systems(samples, config: FitConfig):
    """Per-coordinate eigensystems (and the mean-field base when fitted)."""
    X = as_array(samples)
    d = X.shape[1]
    n_prime = _expansion_count(config.family, config.n)
    if config.family == "hermite":
        sys = build_hermite_basis(config.alpha, config.beta, n_prime)
        return [sys] * d, None
    if config.family == "fourier":
        sys = build_fourier_basis(config.L, config.beta, n_prime)
        return [sys] * d, None
    base = build_meanfield_base(X, n_m=config.n_m)
    return base.eigensystems(n_prime, grid_size=config.grid_size), base


@dataclass
class ScoreModel:
    """Coefficients of the score on a uniform time grid.

    Attributes
    ----------
    basis : SeparableBasis
    times : ndarray, shape (K,)
    coeffs : ndarray, shape (K, |S|, d)
    config : dict
        Resolved fit configuration.
    diagnostics : list of dict
        One record per grid time (solver rank, residual, leading singular
        values, coefficient sup-norm).
    base : dict, optional
        Mean-field base descriptor when one was fitted.
    """

    basis: SeparableBasis
    times: np.ndarray
    coeffs: np.ndarray
    config: dict
    diagnostics: list = field(default_factory=list)
    base: dict | None = None
    info: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.basis.d

    @property
    def beta(self) -> float:
        return self.basis.beta

    @property
    def dt(self) -> float:
        return float(self.config["dt"])

    @property
    def T(self) -> float:
        return float(self.times[-1])

    def time_index(self, t: float, strict: bool = False) -> int:
        """Grid index of the latest grid time not after ``t``."""
        if not (0.0 <= t <= self.T * (1 + 1e-12)):
            if strict:
                raise ValueError(f"t = {t} outside [0, {self.T}]")
            warnings.warn(f"t = {t} clamped to [0, {self.T}]", TimeRangeWarning, stacklevel=3)
        k = math.floor(t / self.dt + 1e-9)
        return int(min(max(k, 0), self.times.size - 1))

    def score_at_index(self, k: int, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        Phi = self.basis.phi(X, self.basis.n + 1)
        return self.basis.contract(Phi, self.coeffs[k]) - self.beta * self.basis.grad_potential(X)

    def __call__(self, t: float, X, strict: bool = False) -> np.ndarray:
        return self.score_at_index(self.time_index(t, strict), X)

    def coefficient_norms(self) -> np.ndarray:
        """``max |C(t_k)|`` for every grid time."""
        return np.abs(self.coeffs).reshape(self.coeffs.shape[0], -1).max(axis=1)

    def with_coeffs(self, coeffs) -> "ScoreModel":
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != self.coeffs.shape:
            raise ValueError(f"coefficient shape {coeffs.shape} != {self.coeffs.shape}")
        return dataclasses.replace(self, coeffs=coeffs, diagnostics=list(self.diagnostics))

    def save(self, path) -> None:
        save_model(path, self)

    @classmethod
    def load(cls, path) -> "ScoreModel":
        return load_model(path)


def eval_score(model: ScoreModel, t: float, x, strict: bool = False) -> np.ndarray:
    """Score at time ``t`` for one point (``(d,)``) or a batch (``(N, d)``).

    Times outside ``[0, T]`` are clamped with a :class:`TimeRangeWarning`
    unless ``strict`` is set, in which case they raise ``ValueError``.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1 and x.size == model.d:
        return model(t, x[None, :], strict)[0]
    return model(t, x, strict)


def _reference_error_fn(basis, X, reference_score, max_rows=20000):
    Xs = X[:max_rows]
    Phi = basis.phi(Xs, basis.n + 1)
    drift = basis.beta * basis.grad_potential(Xs)
    ref = np.asarray(reference_score(Xs), dtype=float).reshape(Xs.shape)
    denom = np.linalg.norm(ref)
    if denom == 0:
        raise ScoreFitError("rank selection: reference score is identically zero")

    def err(C):
        return float(np.linalg.norm(basis.contract(Phi, C) - drift - ref) / denom)

    return err


def _default_candidates(size: int) -> list:
    cands, r = [], 25
    while r < size:
        cands.append(r)
        r *= 2
    cands.append(size)
    return cands


def fit_score(samples, config: FitConfig | None = None, *, systems=None, S: BasisIndexSet | None = None,
              reference_score=None, weights=None, progress=None) -> ScoreModel:
    """Fit the score from samples of the initial law.

    Parameters
    ----------
    samples : array_like or SampleMatrix, shape (N, d)
    config : FitConfig
    systems : sequence of EigenSystem1D, optional
        Override the family-based eigensystems.
    S : BasisIndexSet, optional
        Override the local 2-cluster set implied by ``config``.
    reference_score : callable, optional
        ``X -> grad log rho_0(X)``; drives rank selection for the sketched
        solver.
    weights : array_like, shape (N,), optional
        Quadrature weights replacing the uniform ``1/N`` (for example a
        Gauss rule for an exactly known initial law).
    progress : callable, optional
        Called as ``progress(k, K)`` after every solved grid time.
    """
    config = FitConfig() if config is None else config
    X = as_array(samples)
    if X.shape[0] == 0:
        raise ScoreFitError("input: no samples")
    if not np.all(np.isfinite(X)):
        raise ScoreFitError("input: samples contain non-finite values")
    d = X.shape[1]
    t0 = _time.perf_counter()
    base = None
    try:
        if systems is None:
            systems, mf = build_systems(X, config)
            base = mf.descriptor() if isinstance(mf, MeanFieldBase) else None
        if S is None:
            S = build_local_2cluster(d, config.n, config.d_b, include_singles=config.include_singles,
                                     include_constant=config.include_constant)
        basis = SeparableBasis(systems, S)
    except ScoreFitError:
        raise
    except Exception as exc:
        raise ScoreFitError(f"basis: {exc}") from exc
    t1 = _time.perf_counter()
    try:
        table = fill_moment_table(X, basis, weights=weights)
        asm = SpectralAssembler(basis, table)
    except Exception as exc:
        raise ScoreFitError(f"assembly: {exc}") from exc
    t2 = _time.perf_counter()

    K = config.steps + 1
    times = config.dt * np.arange(K)
    rank, sketch = config.rank, config.sketch
    selection = {}
    if config.method == "sketched" and rank is None:
        A0, B0 = asm.A(0.0), asm.B(0.0)
        cands = list(config.rank_candidates) or _default_candidates(len(S))
        cands = [min(c, len(S)) for c in cands]
        err = _reference_error_fn(basis, X, reference_score) if reference_score is not None else None
        try:
            rank, errs = select_rank(A0, B0, cands, err, tau=config.tau, rng_seed=rng_for(config.seed, 0))
        except Exception as exc:
            raise ScoreFitError(f"rank selection: {exc}") from exc
        selection = {str(k): v for k, v in errs.items()}
    if config.method == "sketched" and sketch is None:
        sketch = min(len(S), rank + 10)

    coeffs = np.empty((K, len(S), d))
    diags = []
    for k, t in enumerate(times):
        A, B = asm.A(float(t)), asm.B(float(t))
        try:
            C, rep = solve(A, B, config.method, tau=config.tau, r=rank, r_tilde=sketch, mu=config.mu,
                           rng_seed=rng_for(config.seed, k))
        except Exception as exc:
            raise ScoreFitError(f"solve at t = {t:g}: {exc}") from exc
        if not np.all(np.isfinite(C)):
            raise ScoreFitError(f"solve at t = {t:g}: non-finite coefficients")
        coeffs[k] = C
        diags.append({"t": float(t), "rank": rep.rank, "residual": rep.residual, "status": rep.status,
                      "sv_head": rep.head(), "coef_max": float(np.abs(C).max())})
        if progress is not None:
            progress(k, K)
    t3 = _time.perf_counter()
    cfg = config.to_dict()
    cfg["rank"], cfg["sketch"] = rank, sketch
    info = {"N": int(X.shape[0]), "d": d, "size": len(S), "rank_errors": selection,
            "seconds": {"basis": t1 - t0, "moments": t2 - t1, "solve": t3 - t2}}
    return ScoreModel(basis, times, coeffs, cfg, diags, base, info)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def save_model(path, model: ScoreModel) -> None:
    """Write the model as a JSON header followed by binary matrix blocks."""
    header = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "config": model.config,
        "basis": model.basis.descriptor(),
        "base": model.base,
        "diagnostics": model.diagnostics,
        "info": model.info,
        "shape": list(model.coeffs.shape),
    }
    blocks = []
    for sys in model.basis.systems:
        blocks.extend(ofio.eigensystem_blocks(sys))
    blocks.append(model.times)
    K, s, d = model.coeffs.shape
    blocks.append(model.coeffs.reshape(K * s, d))
    ofio.write_container(path, header, blocks)


def load_model(path) -> ScoreModel:
    header, blocks = ofio.read_container(path)
    if header.get("format") != MODEL_FORMAT:
        raise ofio.FormatError("not a model file")
    if header.get("version") != MODEL_VERSION:
        raise ofio.FormatError(f"unsupported model version {header.get('version')}")
    desc = header["basis"]
    systems, pos = [], 0
    for sd in desc["systems"]:
        take = 4 if sd["kind"] == "numeric" else 0
        systems.append(ofio.eigensystem_from_blocks(sd, blocks[pos : pos + take]))
        pos += take
    if len(blocks) != pos + 2:
        raise ofio.FormatError("model file has the wrong number of blocks")
    S = BasisIndexSet.from_descriptor(desc["S"])
    basis = SeparableBasis(systems, S)
    times = blocks[pos][0].copy()
    K, s, d = header["shape"]
    coeffs = blocks[pos + 1].reshape(K, s, d).copy()
    return ScoreModel(basis, times, coeffs, header["config"], header["diagnostics"], header["base"],
                      header["info"])


def model_header_json(model: ScoreModel) -> str:
    """Config echo used by ``inspect``."""
    return json.dumps({"config": model.config, "info": model.info}, indent=1, sort_keys=True)
