"""Reference 1-D Fokker-Planck solver for ground-truth densities and scores.

Solves ``d rho / dt = d/dx (V' rho) + (1/beta) d^2 rho / dx^2`` on a uniform
cell grid in flux form. The flux between cells ``j`` and ``j+1`` is

    F = -(1 / (beta h)) * (exp(beta dV / 2) rho_{j+1} - exp(-beta dV / 2) rho_j)

with ``dV = V_{j+1} - V_j``. It vanishes exactly on ``exp(-beta V)``, so the
discrete Gibbs density is stationary and mass ``h * sum(rho)`` is conserved to
round-off.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

__all__ = ["DensityEvolution", "FokkerPlanckError", "solve_fp_1d", "true_score_1d", "fp_operator",
           "gibbs_density"]

DENSITY_FLOOR = 1e-12


class FokkerPlanckError(ValueError):
    pass


def gibbs_density(grid, V, beta: float) -> np.ndarray:
    """Normalized ``exp(-beta V)`` on the grid (cell-sum normalization)."""
    grid = np.asarray(grid, dtype=float)
    V = np.asarray(V, dtype=float)
    w = np.exp(-beta * (V - V.min()))
    return w / (w.sum() * (grid[1] - grid[0]))


def fp_operator(grid, V, beta: float, periodic: bool = False) -> sp.csr_matrix:
    """Sparse generator ``M`` with ``d rho / dt = M rho``."""
    grid = np.asarray(grid, dtype=float)
    V = np.asarray(V, dtype=float)
    M = grid.size
    h = grid[1] - grid[0]
    c = 1.0 / (beta * h * h)
    if periodic:
        dV = np.roll(V, -1) - V
        up = c * np.exp(0.5 * beta * dV)    # coefficient of rho_{j+1} in -F_{j+1/2} * (1/h)
        dn = c * np.exp(-0.5 * beta * dV)   # coefficient of rho_j
        j = np.arange(M)
        jp = (j + 1) % M
        rows = np.concatenate([j, j, jp, jp])
        cols = np.concatenate([jp, j, jp, j])
        vals = np.concatenate([up, -dn, -up, dn])
        return sp.csr_matrix((vals, (rows, cols)), shape=(M, M))
    dV = np.diff(V)
    up = c * np.exp(0.5 * beta * dV)
    dn = c * np.exp(-0.5 * beta * dV)
    main = np.zeros(M)
    main[:-1] -= dn
    main[1:] -= up
    return sp.diags([dn, main, up], [-1, 0, 1], format="csr")


@dataclass
class DensityEvolution:
    """Density snapshots on a space-time grid.

    Attributes
    ----------
    grid : ndarray, shape (M,)
    times : ndarray, shape (K,)
    rho : ndarray, shape (K, M)
    score : ndarray, shape (K, M)
        Centered difference of ``log rho``; NaN where ``rho`` is below the floor.
    clipped_mass : float
        Total negative mass removed by clipping.
    """

    grid: np.ndarray
    times: np.ndarray
    rho: np.ndarray
    score: np.ndarray
    beta: float
    clipped_mass: float = 0.0
    info: dict = field(default_factory=dict)

    @property
    def h(self) -> float:
        return float(self.grid[1] - self.grid[0])

    def mass(self) -> np.ndarray:
        return self.rho.sum(axis=1) * self.h

    def density(self, t: float) -> np.ndarray:
        return _time_interp(self.times, self.rho, t)

    def moments(self, order: int = 2) -> np.ndarray:
        """Raw moments of every snapshot, shape ``(K, order + 1)``."""
        P = np.vander(self.grid, order + 1, increasing=True)
        return (self.rho @ P) * self.h

    def sample(self, t: float, N: int, rng) -> np.ndarray:
        """Draw from the snapshot at ``t`` by inverse CDF (piecewise-constant cells)."""
        rng = np.random.default_rng(rng)
        p = np.clip(self.density(t), 0, None)
        cdf = np.concatenate([[0.0], np.cumsum(p)])
        cdf /= cdf[-1]
        edges = np.concatenate([self.grid - self.h / 2, [self.grid[-1] + self.h / 2]])
        return np.interp(rng.random(N), cdf, edges)

    def to_csv(self, path) -> None:
        """Long-format table ``t, x, rho, score``."""
        with open(path, "w") as fh:
            fh.write("t,x,rho,score\n")
            for k, t in enumerate(self.times):
                for x, r, s in zip(self.grid, self.rho[k], self.score[k]):
                    fh.write(f"{t:.17g},{x:.17g},{r:.17g},{s:.17g}\n")


def _time_interp(times, table, t):
    if t <= times[0]:
        return table[0]
    if t >= times[-1]:
        return table[-1]
    k = int(np.searchsorted(times, t, side="right")) - 1
    w = (t - times[k]) / (times[k + 1] - times[k])
    return (1 - w) * table[k] + w * table[k + 1]


def _log_score(rho, h, periodic):
    logp = np.log(np.maximum(rho, DENSITY_FLOOR))
    if periodic:
        s = (np.roll(logp, -1, axis=-1) - np.roll(logp, 1, axis=-1)) / (2 * h)
    else:
        s = np.gradient(logp, h, axis=-1)
    return np.where(rho > DENSITY_FLOOR, s, np.nan)


def solve_fp_1d(rho0, V, grid, beta: float, T: float, dt: float, theta: float = 1.0,
                store_every: int = 1, periodic: bool = False, mass_tol: float = 1e-6) -> DensityEvolution:
    """Integrate the 1-D Fokker-Planck equation.

    Parameters
    ----------
    rho0 : array_like or callable
        Initial density on ``grid`` (normalized so ``h * sum = 1``) or a callable
        evaluated and normalized on the grid.
    V : array_like or callable
        Potential on ``grid``.
    theta : float
        1 is backward Euler, 0.5 Crank-Nicolson.
    store_every : int
        Keep every ``store_every``-th step.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 3:
        raise FokkerPlanckError("grid must be 1-D with at least 3 points")
    h = grid[1] - grid[0]
    if h <= 0 or not np.allclose(np.diff(grid), h, rtol=1e-9, atol=0):
        raise FokkerPlanckError("grid must be uniform and increasing")
    Vt = np.asarray(V(grid) if callable(V) else V, dtype=float)
    r0 = np.asarray(rho0(grid) if callable(rho0) else rho0, dtype=float)
    if callable(rho0):
        r0 = r0 / (r0.sum() * h)
    if r0.shape != grid.shape or Vt.shape != grid.shape:
        raise FokkerPlanckError("rho0 and V must match the grid")
    if np.any(r0 < 0) or not np.all(np.isfinite(r0)):
        raise FokkerPlanckError("rho0 must be finite and nonnegative")
    if abs(r0.sum() * h - 1) > mass_tol:
        raise FokkerPlanckError(f"rho0 is not normalized (mass {r0.sum() * h:.8g})")
    if not 0.5 <= theta <= 1:
        raise FokkerPlanckError("theta must lie in [0.5, 1]")
    if dt <= 0 or T < 0:
        raise FokkerPlanckError("need dt > 0 and T >= 0")

    steps = int(round(T / dt))
    Mop = fp_operator(grid, Vt, beta, periodic)
    I = sp.identity(grid.size, format="csc")
    lhs = splu((I - theta * dt * Mop).tocsc())
    rhs_op = (I + (1 - theta) * dt * Mop).tocsr() if theta < 1 else None
    peclet = float(np.max(np.abs(np.diff(Vt))) * beta / 2)
    if theta < 1 and dt * float(np.max(np.abs(Mop.diagonal()))) > 2:
        warnings.warn("Crank-Nicolson step is large relative to the stiffest mode; "
                      "expect oscillations", RuntimeWarning, stacklevel=2)

    snaps, tk = [r0.copy()], [0.0]
    r = r0.copy()
    clipped = 0.0
    for k in range(1, steps + 1):
        rhs = r if rhs_op is None else rhs_op @ r
        r = lhs.solve(rhs)
        neg = r < 0
        if np.any(neg):
            clipped += float(-r[neg].sum() * h)
            r[neg] = 0.0
        if k % store_every == 0 or k == steps:
            snaps.append(r.copy())
            tk.append(k * dt)
    rho = np.array(snaps)
    ev = DensityEvolution(grid, np.array(tk), rho, _log_score(rho, h, periodic), beta, clipped,
                          {"cell_peclet": peclet, "theta": theta, "dt": dt, "periodic": periodic})
    drift = np.max(np.abs(ev.mass() - 1))
    if drift > mass_tol:
        raise FokkerPlanckError(f"mass drift {drift:.2e} exceeds {mass_tol:g}")
    return ev


def true_score_1d(evo: DensityEvolution, t: float, x) -> np.ndarray:
    """Reference score at time ``t``; NaN where the density is below the floor."""
    x = np.asarray(x, dtype=float)
    s = _time_interp(evo.times, evo.score, t)
    rho = _time_interp(evo.times, evo.rho, t)
    out = np.interp(x, evo.grid, s)
    lo = np.interp(x, evo.grid, rho)
    bad = (lo <= DENSITY_FLOOR) | (x < evo.grid[0]) | (x > evo.grid[-1])
    # NaN neighbours poison interpolation; mask them too
    return np.where(bad | ~np.isfinite(out), np.nan, out)
