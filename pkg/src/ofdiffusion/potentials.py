"""Target densities used in the experiments: double well and Ginzburg-Landau chain."""
from __future__ import annotations

import math

import numpy as np

from .sample_matrix import SampleMatrix
from .samplers import icdf_sample_1d, mala

__all__ = [
    "double_well",
    "double_well_grad",
    "double_well_density",
    "sample_double_well",
    "GinzburgLandau",
    "sample_ginzburg_landau",
]


def double_well(x) -> np.ndarray:
    """``sum_i (1 - x_i^2)^2 / 4`` over the last axis (elementwise for 1-D input)."""
    x = np.asarray(x, dtype=float)
    v = 0.25 * (1.0 - x**2) ** 2
    return v if x.ndim <= 1 else v.sum(axis=-1)


def double_well_grad(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x * (x**2 - 1.0)


def double_well_density(beta_dw: float, npts: int = 20001, energy_cap: float = 60.0):
    """Grid and normalized 1-D density ``exp(-beta_dw (1 - x^2)^2 / 4) / Z``."""
    # |x| where beta_dw * V reaches energy_cap
    edge = math.sqrt(1.0 + math.sqrt(4.0 * energy_cap / beta_dw))
    x = np.linspace(-edge, edge, npts)
    p = np.exp(-beta_dw * double_well(x))
    p /= np.trapezoid(p, x) if hasattr(np, "trapezoid") else np.trapz(p, x)
    return x, p


def sample_double_well(N: int, d: int, beta_dw: float, seed: int = 0) -> SampleMatrix:
    """Independent coordinates from the double-well law by inverse CDF."""
    rng = np.random.default_rng(seed)
    x, p = double_well_density(beta_dw)
    X = np.column_stack([icdf_sample_1d(x, p, N, rng) for _ in range(d)]) if d else np.zeros((N, 0))
    return SampleMatrix(X, seed=seed, generator=f"double_well(beta={beta_dw})")


class GinzburgLandau:
    """Periodic Ginzburg-Landau chain.

    ``V(x) = sum_i [ lam/2 ((x_i - x_{i-1}) / h)^2 + (1 - x_i^2)^2 / (4 lam) ]``
    with ``x_0 = x_d``; the target law is ``exp(-beta V) / Z``.
    """

    def __init__(self, d: int, lam: float = 0.05, h: float = 0.1, beta: float = 0.125):
        if d < 2:
            raise ValueError("chain needs at least two sites")
        self.d, self.lam, self.h, self.beta = d, float(lam), float(h), float(beta)

    def potential(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        diff = X - np.roll(X, 1, axis=-1)
        return (0.5 * self.lam * (diff / self.h) ** 2 + (1 - X**2) ** 2 / (4 * self.lam)).sum(axis=-1)

    def grad(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        c = self.lam / self.h**2
        lap = 2 * X - np.roll(X, 1, axis=-1) - np.roll(X, -1, axis=-1)
        return c * lap + X * (X**2 - 1) / self.lam

    def log_density(self, X) -> np.ndarray:
        return -self.beta * self.potential(X)

    def score(self, X) -> np.ndarray:
        return -self.beta * self.grad(X)


def sample_ginzburg_landau(model: GinzburgLandau, N: int, seed: int = 0, n_steps: int = 3000,
                           step: float = 0.3) -> SampleMatrix:
    """``N`` independent MALA chains from a Gaussian start, final states kept."""
    rng = np.random.default_rng([seed, 1])
    X0 = rng.standard_normal((N, model.d))
    X, acc, h = mala(model.score, model.log_density, X0, step, n_steps, seed=seed)
    return SampleMatrix(X, seed=seed, generator=f"ginzburg_landau(lam={model.lam})",
                        meta={"acceptance": acc, "step": h, "n_steps": n_steps})
