"""Error measures and perturbative test fixtures."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import gaussian_kde

from .eigenbasis import build_fourier_basis, build_hermite_basis
from .fp_oracle import DensityEvolution, true_score_1d
from .sample_matrix import SampleMatrix, as_array
from .samplers import icdf_sample_1d

__all__ = [
    "MetricError",
    "relative_score_error",
    "kde_on_grid",
    "marginal_density_error",
    "second_moment_error",
    "PerturbationSpec",
    "PerturbationFixture",
    "build_perturbation_fixture",
    "perturbation_study",
    "loglog_slope",
]


class MetricError(ValueError):
    pass


def _score_values(model, t, X):
    return np.asarray(model(t, X), dtype=float).reshape(X.shape)


def relative_score_error(model, oracle, t: float, eval_samples) -> float:
    """``||s - s*|| / ||s*||`` in ``L^2(rho_t)`` by Monte Carlo.

    Parameters
    ----------
    model : ScoreModel or callable
        ``model(t, X) -> (N, d)``.
    oracle : DensityEvolution or callable
        Reference score; a callable is called as ``oracle(t, X)``. NaN values
        (density-floor regions) are excluded.
    eval_samples : array_like, shape (N, d)
        Draws from ``rho_t``.
    """
    X = as_array(eval_samples)
    s = _score_values(model, t, X)
    if isinstance(oracle, DensityEvolution):
        if X.shape[1] != 1:
            raise MetricError("density-evolution oracle is one-dimensional")
        ref = true_score_1d(oracle, t, X[:, 0])[:, None]
    else:
        ref = np.asarray(oracle(t, X), dtype=float).reshape(X.shape)
    ok = np.all(np.isfinite(ref), axis=1)
    den = np.sum(ref[ok] ** 2)
    if den == 0:
        raise MetricError("reference score vanishes on the evaluation samples")
    return float(math.sqrt(np.sum((s[ok] - ref[ok]) ** 2) / den))


def silverman_bandwidth(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.std(x, ddof=1) * (0.75 * x.size) ** (-0.2))


def kde_on_grid(x, grid, bandwidth: float) -> np.ndarray:
    """Gaussian-kernel density estimate of 1-D samples evaluated on ``grid``."""
    x = np.asarray(x, dtype=float)
    if not bandwidth > 0:
        raise MetricError("bandwidth must be positive")
    sd = np.std(x, ddof=1)
    if sd == 0:
        raise MetricError("samples have zero spread")
    return gaussian_kde(x, bw_method=bandwidth / sd)(grid)


def marginal_density_error(gen, ref, bandwidth="silverman", bw_scale: float = 1.0,
                           grid_points: int = 512, pad: float = 3.0):
    """Relative L1 distance between per-coordinate KDEs.

    Each sample set gets its own bandwidth (Silverman's rule times
    ``bw_scale``, or a fixed positive number). Both estimates share a grid of
    ``grid_points`` points spanning the pooled samples widened by ``pad``
    bandwidths. The distance is normalized by the mean of the two masses, so
    the measure is symmetric.

    Returns
    -------
    per_dim : ndarray, shape (d,)
    mean : float
    """
    G, R = as_array(gen), as_array(ref)
    if G.shape[1] != R.shape[1]:
        raise MetricError(f"dimension mismatch: {G.shape[1]} vs {R.shape[1]}")
    if min(G.shape[0], R.shape[0]) < 2:
        raise MetricError("need at least two samples per set")
    out = np.empty(G.shape[1])
    for i in range(G.shape[1]):
        g, r = G[:, i], R[:, i]
        if bandwidth == "silverman":
            hg, hr = silverman_bandwidth(g) * bw_scale, silverman_bandwidth(r) * bw_scale
        else:
            hg = hr = float(bandwidth) * bw_scale
        if not (hg > 0 and hr > 0):
            raise MetricError("bandwidth must be positive")
        h = max(hg, hr)
        lo = min(g.min(), r.min()) - pad * h
        hi = max(g.max(), r.max()) + pad * h
        grid = np.linspace(lo, hi, grid_points)
        if np.array_equal(g, r) and hg == hr:
            out[i] = 0.0
            continue
        pg, pr = kde_on_grid(g, grid, hg), kde_on_grid(r, grid, hr)
        out[i] = np.sum(np.abs(pg - pr)) / (0.5 * (pg.sum() + pr.sum()))
    return out, float(out.mean())


def second_moment_error(gen, ref) -> float:
    """``||G^T G / N_g - R^T R / N_r||_F / ||R^T R / N_r||_F``."""
    G, R = as_array(gen), as_array(ref)
    if G.shape[1] != R.shape[1]:
        raise MetricError(f"dimension mismatch: {G.shape[1]} vs {R.shape[1]}")
    Mg = G.T @ G / G.shape[0]
    Mr = R.T @ R / R.shape[0]
    den = np.linalg.norm(Mr)
    if den == 0:
        raise MetricError("reference second-moment matrix is zero")
    return float(np.linalg.norm(Mg - Mr) / den)


# ---------------------------------------------------------------------------
# Perturbative fixtures
# ---------------------------------------------------------------------------

@dataclass
class PerturbationSpec:
    """Initial law ``C rho_inf (1 + delta * sum_i p_i f_i)`` in one dimension.

    Parameters
    ----------
    family : {"fourier", "hermite"}
    delta : float
        Perturbation scale in ``[0, 1]``.
    gamma : float
        Geometric decay of the default coefficients, ``p_k`` proportional to
        ``gamma^k``.
    M : int
        Number of perturbation modes: eigenfunctions ``f_1 .. f_M`` for
        Hermite, cosine frequencies ``1 .. M`` for Fourier.
    p : array_like, optional
        Explicit coefficients, one per mode; by default geometric and scaled
        so that ``sum_k |p_k| sup|f_k| = 1``.
    """

    family: str = "fourier"
    delta: float = 0.1
    gamma: float = 0.5
    M: int = 40
    L: float = 3.0
    alpha: float = 1.0
    beta: float = 1.0
    p: np.ndarray | None = None
    grid_points: int = 1024

    @property
    def n_modes(self) -> int:
        """Eigen indices spanned by the perturbation (Fourier uses cosine slots only)."""
        return 2 * self.M - 1 if self.family == "fourier" else self.M

    def system(self, n_prime=None):
        n_prime = self.n_modes + 1 if n_prime is None else n_prime
        if self.family == "fourier":
            return build_fourier_basis(self.L, self.beta, n_prime)
        if self.family == "hermite":
            return build_hermite_basis(self.alpha, self.beta, n_prime)
        raise MetricError(f"unknown fixture family {self.family!r}")

    def coefficients(self) -> np.ndarray:
        """Coefficients on eigen indices ``1 .. n_modes``.

        For the Fourier family the ``M`` entries refer to the cosine modes of
        frequency ``1 .. M`` (the even-density layout); sine slots are zero.
        """
        if self.p is not None:
            p = np.asarray(self.p, dtype=float)
            if p.shape != (self.M,):
                raise MetricError(f"need {self.M} coefficients, got {p.shape}")
        else:
            if not 0 < self.gamma < 1:
                raise MetricError("gamma must lie in (0, 1)")
            p = self.gamma ** np.arange(1, self.M + 1)
            if self.family == "fourier":
                p = p / (math.sqrt(2) * p.sum())
        if self.family != "fourier":
            return p
        full = np.zeros(self.n_modes)
        full[0::2] = p
        return full

    def grid(self):
        """Quadrature nodes and base weights (``rho_inf`` times cell size)."""
        if self.family == "fourier":
            x = np.linspace(-self.L, self.L, self.grid_points, endpoint=False)
            return x, np.full(x.size, 1.0 / x.size)
        s = 1.0 / math.sqrt(self.alpha * self.beta)
        y, w = np.polynomial.hermite_e.hermegauss(max(self.grid_points // 8, 2 * self.M + 8))
        return s * y, w / w.sum()


def gaussian_cosine_coefficients(a: float, L: float, M: int, npts: int = 20001) -> np.ndarray:
    """Cosine-series coefficients of ``exp(-a^2 x^2)`` on ``[-L, L]`` relative to its mean.

    Entry ``k-1`` multiplies the unit-normalized ``sqrt(2) cos(k pi x / L)``,
    ready for ``PerturbationSpec(p=...)`` with ``delta = 1``.
    """
    tr = np.trapezoid if hasattr(np, "trapezoid") else np.trapz
    x = np.linspace(0, L, npts)
    g = np.exp(-(a * x) ** 2)
    mean = tr(g, x) / L
    k = np.arange(1, M + 1)
    ck = np.array([tr(g * np.cos(j * math.pi * x / L), x) * 2 / L for j in k])
    return ck / (mean * math.sqrt(2))


@dataclass
class PerturbationFixture:
    spec: PerturbationSpec
    system: object
    p: np.ndarray
    C_rho: float
    nodes: np.ndarray
    weights: np.ndarray
    samples: SampleMatrix | None = None
    info: dict = field(default_factory=dict)

    def _series(self, t, x):
        x = np.asarray(x, dtype=float).reshape(-1)
        K = self.spec.n_modes
        lam = self.system.eigenvalues[1 : K + 1]
        c = self.spec.delta * self.p * np.exp(lam * t)
        F = self.system.evaluate(x, K + 1)[:, 1:]
        dF = self.system.derivative(x, K + 1)[:, 1:]
        return F @ c, dF @ c

    def density_ratio(self, t, x) -> np.ndarray:
        """``rho_t / rho_inf``."""
        g, _ = self._series(t, x)
        return self.C_rho * (1 + g)

    def score(self, t, X) -> np.ndarray:
        """Closed-form ``d/dx log rho_t``; accepts ``(N,)`` or ``(N, 1)``."""
        X = np.asarray(X, dtype=float)
        x = X.reshape(-1)
        g, dg = self._series(t, x)
        s = -self.system.beta * self.system.grad_potential(x) + dg / (1 + g)
        return s.reshape(X.shape)

    def rho_weights(self, t) -> np.ndarray:
        """Quadrature weights of ``rho_t`` on the fixture nodes."""
        w = self.weights * self.density_ratio(t, self.nodes)
        return w / w.sum()


def build_perturbation_fixture(spec: PerturbationSpec, N: int = 0, seed: int = 0) -> PerturbationFixture:
    """Validate a perturbation and optionally draw ``N`` samples of ``rho_0``.

    Raises
    ------
    MetricError
        If the sup-norm bound ``|delta sum p_i f_i| <= 1`` or positivity fails
        on the check grid.
    """
    if not 0 <= spec.delta <= 1:
        raise MetricError("delta must lie in [0, 1]")
    sys = spec.system()
    p = spec.coefficients()
    nodes, w = spec.grid()
    if spec.family == "fourier":
        check = np.linspace(-spec.L, spec.L, 8 * spec.grid_points)
    else:
        s = 1.0 / math.sqrt(spec.alpha * spec.beta)
        check = np.linspace(-6 * s, 6 * s, 8001)
    K = spec.n_modes
    F = sys.evaluate(check, K + 1)[:, 1:]
    series = F @ p
    sup = float(np.max(np.abs(series)))
    if spec.delta * sup > 1 + 1e-12:
        raise MetricError(f"perturbation sup-norm {spec.delta * sup:.4g} exceeds 1")
    ratio = 1 + spec.delta * series
    if np.any(ratio < 0):
        raise MetricError("initial density is negative on the check grid")
    # eigenfunctions beyond the constant have zero base mean, so C_rho = 1 up to quadrature
    mass = float(w @ (1 + spec.delta * (sys.evaluate(nodes, K + 1)[:, 1:] @ p)))
    fx = PerturbationFixture(spec, sys, p, 1.0 / mass, nodes, w,
                             info={"sup_norm": sup, "normalization_error": abs(mass - 1)})
    if N:
        rng = np.random.default_rng(seed)
        if spec.family == "fourier":
            xs = np.linspace(-spec.L, spec.L, 8 * spec.grid_points + 1)
            dens = fx.density_ratio(0.0, xs) / (2 * spec.L)
        else:
            s = 1.0 / math.sqrt(spec.alpha * spec.beta)
            xs = np.linspace(-10 * s, 10 * s, 20001)
            dens = fx.density_ratio(0.0, xs) * np.exp(-spec.beta * sys.potential(xs))
            dens /= np.trapezoid(dens, xs) if hasattr(np, "trapezoid") else np.trapz(dens, xs)
        fx.samples = SampleMatrix(icdf_sample_1d(xs, dens, N, rng)[:, None], seed=seed,
                                  generator="perturbation_fixture")
    return fx


def loglog_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    lx, ly = np.log(np.asarray(x, dtype=float)), np.log(np.asarray(y, dtype=float))
    return float(np.polyfit(lx, ly, 1)[0])


def objective_gap(model, fixture: PerturbationFixture) -> float:
    """``int_0^T int 1/2 (s - s*)^2 rho_t dx dt`` on the fixture quadrature."""
    x = fixture.nodes[:, None]
    vals = []
    for k, t in enumerate(model.times):
        diff = model.score_at_index(k, x)[:, 0] - fixture.score(t, x[:, 0])
        vals.append(0.5 * fixture.rho_weights(t) @ diff**2)
    vals = np.asarray(vals)
    tr = np.trapezoid if hasattr(np, "trapezoid") else np.trapz
    return float(tr(vals, model.times))


def perturbation_study(deltas, Ms, spec: PerturbationSpec, T: float = 6.0, dt: float = 0.02,
                       N: int = 0, seed: int = 0):
    """Fitted-score error over a grid of perturbation scales and basis sizes.

    Each cell fits the score with the first ``M`` eigenfunctions of the
    fixture's base and reports the objective gap against the closed-form score.
    With ``N = 0`` the fit uses the fixture quadrature (no sampling error);
    otherwise ``N`` samples of ``rho_0``.

    Returns
    -------
    rows : list of dict
        ``delta, M, error`` per cell.
    slopes : dict
        ``M -> log-log slope in delta`` over the two smallest deltas, and the
        least-squares slope over all deltas under key ``(M, "all")``.
    """
    from .cluster import BasisIndexSet
    from .score import FitConfig, fit_score

    rows = []
    slopes = {}
    for M in Ms:
        errs = []
        for delta in deltas:
            sp = PerturbationSpec(**{**spec.__dict__, "delta": delta})
            fx = build_perturbation_fixture(sp, N, seed)
            m = 4 * ((M + 1) // 2) + 1 if sp.family == "fourier" else 2 * M + 1
            sys = sp.system(max(m, sp.n_modes + 1))
            S = BasisIndexSet(1, M, ((), (0,)))
            cfg = FitConfig(family=sp.family, n=M, T=T, dt=dt, L=sp.L, alpha=sp.alpha, beta=sp.beta)
            if N:
                model = fit_score(fx.samples, cfg, systems=[sys], S=S)
            else:
                model = fit_score(fx.nodes[:, None], cfg, systems=[sys], S=S, weights=fx.weights
                                  * fx.density_ratio(0.0, fx.nodes))
            e = objective_gap(model, fx)
            errs.append(e)
            rows.append({"delta": float(delta), "M": int(M), "error": e})
        order = np.argsort(deltas)
        d2 = np.asarray(deltas, dtype=float)[order[:2]]
        e2 = np.asarray(errs)[order[:2]]
        slopes[M] = loglog_slope(d2, e2)
        slopes[(M, "all")] = loglog_slope(deltas, errs)
    return rows, slopes
