"""Mean-field base distributions by maximum-entropy moment matching.

Each coordinate gets a density ``rho_i(x) ~ exp(-sum_j nu_j x^j)`` whose
first ``n_m`` monomial moments match the sample moments.  The exponents come
from damped Newton on the convex dual ``log Z(nu) + nu . mu`` evaluated by
composite Simpson quadrature on a truncated interval.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial
from numpy.polynomial import legendre as npleg

from .eigenbasis import NumericSystem, build_numeric_basis
from .sample_matrix import as_array

__all__ = [
    "MaxentError",
    "MaxentMarginal",
    "MeanFieldBase",
    "estimate_marginal_moments",
    "fit_maxent_marginal",
    "build_meanfield_base",
    "simpson_weights",
]


class MaxentError(ValueError):
    """Moment vector not attainable, or the dual Newton iteration stalled."""


def simpson_weights(a: float, b: float, npts: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and composite Simpson weights on ``[a, b]`` (``npts`` odd)."""
    if npts < 3 or npts % 2 == 0:
        raise ValueError("Simpson rule needs an odd number of points >= 3")
    x = np.linspace(a, b, npts)
    h = (b - a) / (npts - 1)
    w = np.full(npts, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return x, w * h / 3.0


@dataclass(frozen=True)
class MaxentMarginal:
    """Fitted one-dimensional maximum-entropy density.

    ``nu[0]`` is the log-normalizer so that ``exp(-sum_j nu[j] x^j)``
    integrates to one on ``domain``.
    """

    nu: np.ndarray
    domain: tuple[float, float]
    grid: np.ndarray
    density_grid: np.ndarray
    moments_target: np.ndarray
    moments_achieved: np.ndarray
    iterations: int = 0
    dual_history: tuple = ()
    warnings: tuple = ()

    @property
    def order(self) -> int:
        return len(self.nu) - 1

    @property
    def potential_coeffs(self) -> np.ndarray:
        """Monomial coefficients of ``V(x) = sum_{j>=1} nu_j x^j`` (constant dropped)."""
        c = np.array(self.nu, dtype=float)
        c[0] = 0.0
        return c

    def potential(self, x):
        return np.polynomial.polynomial.polyval(np.asarray(x, dtype=float), self.potential_coeffs)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= self.domain[0]) & (x <= self.domain[1])
        val = np.exp(-np.polynomial.polynomial.polyval(x, self.nu))
        return np.where(inside, val, 0.0)

    @property
    def moment_residual(self) -> float:
        t = self.moments_target
        return float(np.max(np.abs(self.moments_achieved - t) / (1.0 + np.abs(t))))

    def descriptor(self) -> dict:
        return {"nu": [float(v) for v in self.nu], "domain": [float(self.domain[0]), float(self.domain[1])]}


def estimate_marginal_moments(samples, dim: int, n_m: int) -> np.ndarray:
    """Monte Carlo monomial moments ``mu_0..mu_{n_m}`` of coordinate ``dim``."""
    X = as_array(samples)
    if X.shape[0] == 0:
        raise MaxentError("empty sample set")
    if not 0 <= dim < X.shape[1]:
        raise MaxentError(f"dimension {dim} outside 0..{X.shape[1] - 1}")
    if n_m < 2:
        raise MaxentError("moment order must be >= 2")
    if X.shape[0] < 100:
        warnings.warn(f"only {X.shape[0]} samples for moment estimation", RuntimeWarning, stacklevel=2)
    x = X[:, dim]
    mu = np.empty(n_m + 1)
    mu[0] = 1.0
    p = np.ones_like(x)
    for j in range(1, n_m + 1):
        p = p * x
        mu[j] = p.mean()
    return mu


def _affine_moments(mu, c, s):
    """Moments of ``z = (x - c) / s`` from monomial moments of ``x``."""
    n = len(mu) - 1
    out = np.zeros(n + 1)
    for j in range(n + 1):
        acc = 0.0
        for k in range(j + 1):
            acc += math.comb(j, k) * mu[k] * (-c) ** (j - k)
        out[j] = acc / s**j
    return out


def _check_hankel(mz):
    """Positive-definite moment (Hankel) matrix is necessary for a density."""
    half = (len(mz) - 1) // 2
    H = np.array([[mz[i + j] for j in range(half + 1)] for i in range(half + 1)])
    ev = np.linalg.eigvalsh(H)
    if ev[0] <= 1e-12 * max(1.0, ev[-1]):
        raise MaxentError(
            f"moment vector is not attainable by a density (moment-matrix eigenvalue {ev[0]:.3e})")


def fit_maxent_marginal(moments, domain, tol: float = 1e-10, npts: int = 2001,
                        max_iter: int = 200, max_halvings: int = 50) -> MaxentMarginal:
    """Maximum-entropy density on ``domain`` matching monomial ``moments``.

    Parameters
    ----------
    moments : array_like
        ``mu_0..mu_{n_m}`` with ``mu_0 = 1``.
    domain : (float, float)
        Finite truncation interval.
    tol : float
        Bound on the dual gradient (moment residual in a scaled Legendre basis).

    Returns
    -------
    MaxentMarginal

    Notes
    -----
    Newton runs on coefficients of Legendre polynomials in the rescaled
    coordinate ``z = (x - c) / s`` mapping the domain to ``[-1, 1]``; the
    monomial Hessian is hopelessly ill-conditioned for orders around six.
    The converged exponent is converted back to monomial ``nu`` at the end.
    """
    mu = np.asarray(moments, dtype=float)
    if mu.ndim != 1 or mu.size < 2:
        raise MaxentError("need at least moments mu_0, mu_1")
    if abs(mu[0] - 1.0) > 1e-12:
        raise MaxentError(f"mu_0 must be 1, got {mu[0]}")
    lo, hi = map(float, domain)
    if not (np.isfinite(lo) and np.isfinite(hi) and hi > lo):
        raise MaxentError(f"invalid domain {domain}")
    n_m = mu.size - 1
    c, s = 0.5 * (lo + hi), 0.5 * (hi - lo)
    mz = _affine_moments(mu, c, s)
    if n_m >= 2:
        _check_hankel(mz)
    if np.any(np.abs(mz) > 1.0 + 1e-12):
        raise MaxentError("moments not attainable on the domain (|E z^j| > 1)")

    # Legendre moments: row j holds monomial coefficients of P_j
    L2P = np.zeros((n_m + 1, n_m + 1))
    for j in range(n_m + 1):
        coef = npleg.leg2poly(np.eye(n_m + 1)[j])
        L2P[j, : coef.size] = coef
    target = (L2P @ mz)[1:]

    z, wq = simpson_weights(-1.0, 1.0, npts)
    P = npleg.legvander(z, n_m)[:, 1:]
    logw = np.log(wq)

    def dual(theta):
        e = -(P @ theta) + logw
        emax = e.max()
        p = np.exp(e - emax)
        Z = p.sum()
        return emax + math.log(Z) + theta @ target, p / Z

    theta = np.zeros(n_m)
    val, prob = dual(theta)
    history = [val]
    it = 0
    for it in range(1, max_iter + 1):
        mean = prob @ P
        grad = target - mean
        if np.max(np.abs(grad)) <= tol:
            break
        cov = (P * prob[:, None]).T @ P - np.outer(mean, mean)
        try:
            step = np.linalg.solve(cov + 1e-14 * np.eye(n_m), -grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(cov, -grad, rcond=None)[0]
        slope = grad @ step
        t = 1.0
        for _ in range(max_halvings + 1):
            cand = theta + t * step
            cval, cprob = dual(cand)
            if np.isfinite(cval) and cval <= val + 1e-4 * t * slope:
                break
            t *= 0.5
        else:
            break
        if cval > val:
            break
        theta, val, prob = cand, cval, cprob
        history.append(val)

    # exponent sum theta_j P_j(z) as a monomial polynomial in x
    expo_z = Polynomial(npleg.leg2poly(np.concatenate([[0.0], theta])))
    expo_x = expo_z(Polynomial([-c / s, 1.0 / s])).coef
    nu = np.zeros(n_m + 1)
    nu[: expo_x.size] = expo_x[: n_m + 1]

    x, wx = simpson_weights(lo, hi, npts)
    expo = np.polynomial.polynomial.polyval(x, nu)
    shift = expo.min()
    Zx = wx @ np.exp(-(expo - shift))
    nu[0] += math.log(Zx) - shift
    dens = np.exp(-np.polynomial.polynomial.polyval(x, nu))
    vander = np.vander(x, n_m + 1, increasing=True)
    achieved = (wx * dens) @ vander

    resid = np.abs(achieved - mu) / (1.0 + np.abs(mu))
    notes = []
    if n_m % 2 == 0 and nu[-1] < -1e-8 * max(1.0, float(np.max(np.abs(nu[1:])))):
        notes.append("leading even exponent coefficient is not positive")
        warnings.warn(notes[-1], RuntimeWarning, stacklevel=2)
    if np.max(resid) > max(1e-6, tol):
        raise MaxentError(
            f"maxent Newton did not converge after {it} iterations; moment residual "
            f"{np.max(resid):.3e}; achieved moments {np.array2string(achieved, precision=6)}")
    return MaxentMarginal(nu, (lo, hi), x, dens, mu.copy(), achieved, it, tuple(history), tuple(notes))


@dataclass(frozen=True)
class MeanFieldBase:
    """Separable Gibbs base ``prod_i exp(-V_i(x_i))`` with ``beta = 1``."""

    marginals: tuple
    beta: float = 1.0
    meta: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return len(self.marginals)

    def descriptor(self) -> dict:
        return {"kind": "meanfield", "beta": self.beta,
                "marginals": [m.descriptor() for m in self.marginals]}

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.descriptor(), fh, indent=1)

    def eigensystems(self, n_prime: int, grid_size: int = 4001,
                     energy_cap: float = 40.0) -> list[NumericSystem]:
        """Numeric eigensystems of each coordinate's generator.

        The grid is the marginal's domain trimmed to where
        ``V_i - min V_i <= energy_cap``; beyond that the density is below
        ``exp(-energy_cap)`` and the untransformed eigenvectors lose precision.
        """
        out = []
        for m in self.marginals:
            x = np.linspace(m.domain[0], m.domain[1], grid_size)
            v = m.potential(x)
            keep = np.flatnonzero(self.beta * (v - v.min()) <= energy_cap)
            lo, hi = x[keep[0]], x[keep[-1]]
            grid = np.linspace(lo, hi, grid_size)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                out.append(build_numeric_basis(None, self.beta, grid, n_prime, poly=m.potential_coeffs))
        return out


def load_meanfield_base(path) -> MeanFieldBase:
    """Read a base written by :meth:`MeanFieldBase.save` (densities recomputed)."""
    with open(path) as fh:
        desc = json.load(fh)
    margs = []
    for md in desc["marginals"]:
        nu = np.asarray(md["nu"], dtype=float)
        lo, hi = md["domain"]
        x, wx = simpson_weights(lo, hi, 2001)
        dens = np.exp(-np.polynomial.polynomial.polyval(x, nu))
        mom = (wx * dens) @ np.vander(x, nu.size, increasing=True)
        margs.append(MaxentMarginal(nu, (lo, hi), x, dens, mom, mom))
    return MeanFieldBase(tuple(margs), desc.get("beta", 1.0))


def build_meanfield_base(samples, n_m: int = 6, pad: float = 3.0, tol: float = 1e-10,
                         npts: int = 2001) -> MeanFieldBase:
    """Fit an independent maxent marginal to every coordinate of ``samples``.

    The truncation interval for coordinate ``i`` is the sample range widened by
    ``pad`` standard deviations on each side.
    """
    X = as_array(samples)
    margs = []
    for i in range(X.shape[1]):
        col = X[:, i]
        sd = float(col.std())
        if sd <= 0:
            raise MaxentError(f"dimension {i}: degenerate samples (zero variance)")
        dom = (float(col.min()) - pad * sd, float(col.max()) + pad * sd)
        try:
            margs.append(fit_maxent_marginal(estimate_marginal_moments(X, i, n_m), dom, tol, npts))
        except MaxentError as exc:
            raise MaxentError(f"dimension {i}: {exc}") from exc
    return MeanFieldBase(tuple(margs))
