"""Langevin simulation (forward and reverse time) and base-distribution samplers."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .eigenbasis import FourierSystem, HermiteSystem, NumericSystem
from .sample_matrix import SampleMatrix, as_array

__all__ = [
    "SamplerError",
    "SdeConfig",
    "forward_em",
    "reverse_em",
    "mh_sample_base",
    "icdf_sample_base",
    "icdf_sample_1d",
    "tabulate_base_density",
    "mala",
]

DIVERGENCE_BOUND = 1e6


class SamplerError(RuntimeError):
    pass


@dataclass(frozen=True)
class SdeConfig:
    """Time stepping for Euler-Maruyama.

    Parameters
    ----------
    dt, T : float
        Step and horizon.
    beta : float
        Inverse temperature of the forward dynamics.
    seed : int
    wrap_L : float, optional
        Reduce states modulo ``[-L, L)`` after every step (flat periodic bases).
    """

    dt: float
    T: float
    beta: float = 1.0
    seed: int = 0
    wrap_L: float | None = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.T < self.dt:
            raise ValueError("T must be at least dt")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.wrap_L is not None and self.wrap_L <= 0:
            raise ValueError("wrap_L must be positive")

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))


def _wrap(X, L):
    return (X + L) % (2 * L) - L


def _guard(X, step, where):
    if not np.all(np.isfinite(X)) or np.any(np.abs(X) > DIVERGENCE_BOUND):
        raise SamplerError(f"{where}: trajectories diverged at step {step}")


def forward_em(grad_potential, x0, cfg: SdeConfig, record_times=None):
    """Simulate ``dX = -grad V(X) dt + sqrt(2 / beta) dW``.

    Parameters
    ----------
    grad_potential : callable
        ``(N, d) -> (N, d)``.
    x0 : array_like or SampleMatrix, shape (N, d)
    record_times : sequence of float, optional
        Snapshot times (rounded to the step grid); defaults to ``[T]``.

    Returns
    -------
    dict
        Recorded time -> :class:`SampleMatrix`.
    """
    X = np.array(as_array(x0), dtype=float)
    if not np.all(np.isfinite(X)):
        raise SamplerError("forward_em: initial states are not finite")
    record_times = [cfg.T] if record_times is None else list(record_times)
    want = {}
    for t in record_times:
        k = int(round(t / cfg.dt))
        if not 0 <= k <= cfg.steps:
            raise ValueError(f"record time {t} outside [0, {cfg.T}]")
        want.setdefault(k, []).append(t)
    rng = np.random.default_rng(cfg.seed)
    noise = math.sqrt(2.0 * cfg.dt / cfg.beta)
    out = {}

    def snap(k):
        for t in want.get(k, ()):
            out[t] = SampleMatrix(X.copy(), seed=cfg.seed, time=k * cfg.dt, generator="forward_em")

    if cfg.wrap_L is not None:
        X = _wrap(X, cfg.wrap_L)
    snap(0)
    last = max(want)
    for k in range(1, last + 1):
        X = X - grad_potential(X) * cfg.dt + noise * rng.standard_normal(X.shape)
        if cfg.wrap_L is not None:
            X = _wrap(X, cfg.wrap_L)
        _guard(X, k, "forward_em")
        snap(k)
    return out


def reverse_em(model, xT, seed: int = 0, wrap: bool | None = None, record_every: int | None = None):
    """Integrate the reverse-time SDE on the model's time grid.

    Starting from ``xT`` (base samples) at grid time ``t_K = T``, each step to
    ``t_{k-1}`` uses the score at ``t_k``::

        x <- x + (grad V(x) + (2 / beta) s(t_k, x)) dt + sqrt(2 dt / beta) xi

    Parameters
    ----------
    model : ScoreModel
    xT : array_like, shape (N, d)
    wrap : bool, optional
        Periodic reduction; defaults to on for flat periodic bases.
    record_every : int, optional
        Also return intermediate states every this many steps.

    Returns
    -------
    SampleMatrix or (SampleMatrix, dict)
    """
    X = np.array(as_array(xT), dtype=float)
    if X.shape[1] != model.d:
        raise ValueError(f"xT has {X.shape[1]} columns, model has d = {model.d}")
    basis = model.basis
    beta, dt = model.beta, model.dt
    L = None
    if wrap is None:
        wrap = all(isinstance(s, FourierSystem) for s in basis.systems)
    if wrap:
        L = basis.systems[0].L
        X = _wrap(X, L)
    rng = np.random.default_rng(seed)
    noise = math.sqrt(2.0 * dt / beta)
    K = model.times.size - 1
    path = {}
    for k in range(K, 0, -1):
        drift = basis.grad_potential(X) + (2.0 / beta) * model.score_at_index(k, X)
        X = X + drift * dt + noise * rng.standard_normal(X.shape)
        if L is not None:
            X = _wrap(X, L)
        _guard(X, K - k + 1, "reverse_em")
        if record_every and (k - 1) % record_every == 0:
            path[float(model.times[k - 1])] = X.copy()
    out = SampleMatrix(X, seed=seed, time=0.0, generator="reverse_em")
    return (out, path) if record_every else out


# ---------------------------------------------------------------------------
# Base distributions
# ---------------------------------------------------------------------------

def tabulate_base_density(sys, npts: int = 8001):
    """Grid and normalized density ``exp(-beta V)`` of one coordinate's base law."""
    if isinstance(sys, FourierSystem):
        x = np.linspace(-sys.L, sys.L, npts)
        p = np.full(npts, 1.0 / (2 * sys.L))
    elif isinstance(sys, HermiteSystem):
        s = 1.0 / math.sqrt(sys.alpha * sys.beta)
        x = np.linspace(-12 * s, 12 * s, npts)
        p = np.exp(-sys.beta * sys.potential(x))
    elif isinstance(sys, NumericSystem):
        x = sys.grid
        p = np.exp(-sys.beta * (sys.potential_table - sys.potential_table.min()))
    else:
        raise TypeError(f"cannot tabulate {type(sys).__name__}")
    Z = np.trapezoid(p, x) if hasattr(np, "trapezoid") else np.trapz(p, x)
    if not (np.isfinite(Z) and Z > 0):
        raise SamplerError("base density table cannot be normalized")
    return x, p / Z


def icdf_sample_1d(x, p, N: int, rng) -> np.ndarray:
    """Inverse-CDF sampling of a piecewise-linear density tabulated at ``x``."""
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise SamplerError("density table must be finite and nonnegative")
    cell = 0.5 * (p[1:] + p[:-1]) * np.diff(x)
    total = cell.sum()
    if not total > 0:
        raise SamplerError("density table has zero mass")
    if abs(total - 1) > 1e-3:
        raise SamplerError(f"density table is not normalized (mass {total:.6g})")
    cdf = np.concatenate([[0.0], np.cumsum(cell)]) / total
    u = rng.random(N)
    j = np.clip(np.searchsorted(cdf, u, side="right") - 1, 0, x.size - 2)
    # invert the quadratic CDF inside each cell (linear density)
    h = x[j + 1] - x[j]
    p0, p1 = p[j], p[j + 1]
    r = (u - cdf[j]) * total
    slope = (p1 - p0) / h
    lin = np.abs(slope) < 1e-14 * np.maximum(p0, 1e-300)
    with np.errstate(divide="ignore", invalid="ignore"):
        disc = np.sqrt(np.maximum(p0**2 + 2 * slope * r, 0.0))
        dq = np.where(lin, r / np.where(p0 > 0, p0, 1.0), 2 * r / (p0 + disc))
    return x[j] + np.clip(dq, 0, h)


def icdf_sample_base(systems, N: int, seed: int = 0, npts: int = 8001) -> SampleMatrix:
    """Exact (up to tabulation) sampling of a separable base, one column per system."""
    rng = np.random.default_rng(seed)
    cols = []
    for sys in systems:
        x, p = tabulate_base_density(sys, npts)
        cols.append(icdf_sample_1d(x, p, N, rng) if N else np.zeros(0))
    X = np.column_stack(cols) if cols else np.zeros((N, 0))
    return SampleMatrix(X.reshape(N, len(cols)), seed=seed, generator="icdf_base")


def mh_sample_base(systems, N: int, burn_in: int = 1000, thin: int = 10, proposal_sigma=None,
                   seed: int = 0, chains: int | None = None) -> SampleMatrix:
    """Random-walk Metropolis-Hastings, independent chains per coordinate.

    ``chains`` parallel chains (default ``min(N, 1000)``) run ``burn_in`` steps,
    then each contributes a state every ``thin`` steps until ``N`` samples per
    coordinate are collected. Acceptance rates land in ``meta``.
    """
    d = len(systems)
    rng = np.random.default_rng(seed)
    if N == 0:
        return SampleMatrix(np.zeros((0, d)), seed=seed, generator="mh_base")
    chains = min(N, 1000) if chains is None else chains
    if proposal_sigma is None:
        proposal_sigma = []
        for s in systems:
            x, p = tabulate_base_density(s, 2001)
            m = np.trapezoid(x * p, x) if hasattr(np, "trapezoid") else np.trapz(x * p, x)
            v = (np.trapezoid if hasattr(np, "trapezoid") else np.trapz)((x - m) ** 2 * p, x)
            proposal_sigma.append(2.4 * math.sqrt(v))
    sig = np.broadcast_to(np.asarray(proposal_sigma, dtype=float), (d,))
    lo = np.full(d, -np.inf)
    hi = np.full(d, np.inf)
    periodic = np.zeros(d, dtype=bool)
    for i, s in enumerate(systems):
        if isinstance(s, FourierSystem):
            lo[i], hi[i], periodic[i] = -s.L, s.L, True
        elif isinstance(s, NumericSystem):
            lo[i], hi[i] = s.grid[0], s.grid[-1]

    def logp(X):
        out = np.empty_like(X)
        for i, s in enumerate(systems):
            out[:, i] = -s.beta * s.potential(np.clip(X[:, i], lo[i], hi[i])) if not periodic[i] else 0.0
        return np.where((X < lo) | (X > hi), -np.inf, out)

    X = np.empty((chains, d))
    for i, s in enumerate(systems):
        x, p = tabulate_base_density(s, 2001)
        X[:, i] = x[np.argmax(p)] if not periodic[i] else 0.0
    X += 0.1 * sig * rng.standard_normal(X.shape)
    X = np.where(periodic, _wrap(X, np.where(periodic, hi, 1.0)), X)
    lp = logp(X)
    per_chain = -(-N // chains)
    total_steps = burn_in + per_chain * thin
    acc = np.zeros(d)
    out = []
    for k in range(1, total_steps + 1):
        Y = X + sig * rng.standard_normal(X.shape)
        Y = np.where(periodic, _wrap(Y, np.where(periodic, hi, 1.0)), Y)
        lq = logp(Y)
        take = np.log(rng.random(X.shape)) < lq - lp
        X = np.where(take, Y, X)
        lp = np.where(take, lq, lp)
        acc += take.mean(axis=0)
        if k > burn_in and (k - burn_in) % thin == 0:
            out.append(X.copy())
    rate = acc / total_steps
    for i, r in enumerate(rate):
        # flat periodic coordinates accept every move by construction
        if not periodic[i] and not 0.1 <= r <= 0.9:
            suggest = sig[i] * max(r, 0.01) / 0.44
            warnings.warn(f"dimension {i}: MH acceptance {r:.2f} outside [0.1, 0.9]; "
                          f"try proposal_sigma ~ {suggest:.3g}", RuntimeWarning, stacklevel=2)
    # interleave chains so a prefix mixes all chains
    samples = np.stack(out, axis=0).reshape(-1, d)[:N]
    return SampleMatrix(samples, seed=seed, generator="mh_base",
                        meta={"acceptance": rate.tolist(), "proposal_sigma": sig.tolist()})


def mala(grad_log_density, log_density, x0, step: float, n_steps: int, seed: int = 0,
         adapt: bool = True, target: float = 0.57, drift_cap: float = 2.0):
    """Metropolis-adjusted Langevin chains run in parallel over the rows of ``x0``.

    Returns the final states, the mean acceptance rate and the final step.
    With ``adapt`` the step is tuned during the first half of the run toward
    ``target`` acceptance (the second half uses a fixed step, so the output law
    is exact).

    The drift displacement ``h^2 g / 2`` is truncated to ``drift_cap * h * sqrt(d)``
    (the same truncated mean enters the acceptance ratio). Without it, chains
    that reach a steep tail propose moves far past the mode, are rejected
    forever and bias the sample toward the tails.
    """
    rng = np.random.default_rng(seed)
    X = np.array(x0, dtype=float)
    d = X.shape[1]
    lp, g = log_density(X), grad_log_density(X)
    acc_hist = []
    h = float(step)

    def mean(Z, gz):
        disp = 0.5 * h * h * gz
        norm = np.linalg.norm(disp, axis=1, keepdims=True)
        cap = drift_cap * h * math.sqrt(d)
        return Z + disp * np.minimum(1.0, cap / np.maximum(norm, 1e-300))

    for k in range(n_steps):
        mean_x = mean(X, g)
        Y = mean_x + h * rng.standard_normal(X.shape)
        lq, gy = log_density(Y), grad_log_density(Y)
        mean_y = mean(Y, gy)
        log_fwd = -np.sum((Y - mean_x) ** 2, axis=1) / (2 * h * h)
        log_bwd = -np.sum((X - mean_y) ** 2, axis=1) / (2 * h * h)
        take = np.log(rng.random(X.shape[0])) < lq - lp + log_bwd - log_fwd
        X[take], lp[take], g[take] = Y[take], lq[take], gy[take]
        a = float(take.mean())
        acc_hist.append(a)
        if adapt and k < n_steps // 2:
            h *= math.exp(0.5 * (a - target))
    _guard(X, n_steps, "mala")
    return X, float(np.mean(acc_hist[n_steps // 2 :] or acc_hist)), h
