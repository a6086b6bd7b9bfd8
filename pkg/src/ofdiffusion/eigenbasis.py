"""One-dimensional eigensystems of the backward Kolmogorov operator.

For a separable potential the generator ``L = -V'(x) d/dx + beta^{-1} d^2/dx^2``
splits into one-dimensional pieces.  This module builds the eigenpairs of
one such piece for three families:

* ``hermite``  -- Ornstein-Uhlenbeck, ``V = alpha x^2 / 2``; scaled
  probabilists' Hermite polynomials.
* ``fourier``  -- periodic Brownian motion on ``[-L, L)``; real
  trigonometric functions.
* ``numeric``  -- arbitrary confining potential tabulated on a grid; a
  finite-difference eigensolve of the symmetrized operator.

Every system is orthonormal in ``L^2(rho_inf)`` with ``rho_inf ~ exp(-beta V)``
and stores ``f_0 = 1`` with ``lambda_0 = 0``.  Products, derivatives and the
potential gradient are expanded back onto the eigenfunctions by
:meth:`EigenSystem1D.expansion_coeffs`.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal

__all__ = [
    "EigenSystem1D",
    "HermiteSystem",
    "FourierSystem",
    "NumericSystem",
    "ExpansionCoeffs",
    "EigenbasisError",
    "build_hermite_basis",
    "build_fourier_basis",
    "build_numeric_basis",
    "eval_basis",
    "expansion_coeffs",
    "system_from_descriptor",
]

NUMERIC_RESIDUAL_WARN = 1e-3


class EigenbasisError(ValueError):
    """Invalid parameters or a failed eigensolve."""


@dataclass(frozen=True)
class ExpansionCoeffs:
    """Expansion of products and derivatives onto eigenfunctions ``0..m-1``.

    Attributes
    ----------
    n : int
        Number of non-constant representation functions; rows cover ``0..n``.
    m : int
        Size of the expansion set ``S'`` (indices ``0..m-1``).
    u : ndarray, shape (n+1, n+1, m)
        ``f_a f_b = sum_l u[a, b, l] f_l``.
    v : ndarray, shape (n+1, m)
        ``f_a' = sum_l v[a, l] f_l``.
    q : ndarray, shape (m,)
        ``V' = sum_l q[l] f_l``.
    w : ndarray, shape (n+1, m)
        ``f_a V' = sum_l w[a, l] f_l``.  Equals ``sum_j q[j] u[a, j, :]`` for
        the exact families; projected directly for the numeric family.
    residuals : dict
        ``L^2(rho_inf)`` projection residuals, keyed ``u``, ``v``, ``q``, ``w``.
    status : str
        ``"ok"`` or ``"warning"`` (numeric residual above tolerance).
    """

    n: int
    m: int
    u: np.ndarray
    v: np.ndarray
    q: np.ndarray
    w: np.ndarray
    residuals: dict = field(default_factory=dict)
    status: str = "ok"

    @property
    def max_residual(self) -> float:
        if not self.residuals:
            return 0.0
        return float(max(np.max(np.abs(r)) for r in self.residuals.values()))


class EigenSystem1D:
    """Common interface of the three eigensystem families."""

    kind: str = ""
    periodic: bool = False

    def __init__(self, beta: float, n_prime: int, eigenvalues: np.ndarray):
        self.beta = float(beta)
        self.n_prime = int(n_prime)
        self.eigenvalues = np.asarray(eigenvalues, dtype=float)
        self.eigenvalues.setflags(write=False)

    # -- evaluation -------------------------------------------------------
    def evaluate(self, x, count: int | None = None, clip: bool = False) -> np.ndarray:
        """Values ``f_0..f_{count-1}`` at the points ``x``; shape ``(len(x), count)``."""
        raise NotImplementedError

    def derivative(self, x, count: int | None = None, clip: bool = False) -> np.ndarray:
        """Derivatives ``f_0'..f_{count-1}'``; shape ``(len(x), count)``."""
        raise NotImplementedError

    def potential(self, x) -> np.ndarray:
        raise NotImplementedError

    def grad_potential(self, x) -> np.ndarray:
        raise NotImplementedError

    @property
    def domain(self) -> tuple[float, float] | None:
        return None

    # -- expansions -------------------------------------------------------
    def expansion_size(self, n: int) -> int:
        """Size ``m`` of the expansion set for ``n`` representation functions."""
        return 2 * n + 1

    def expansion_coeffs(self, n: int) -> ExpansionCoeffs:
        raise NotImplementedError

    def descriptor(self) -> dict:
        raise NotImplementedError

    def _count(self, count):
        count = self.n_prime if count is None else int(count)
        if not 0 < count <= self.n_prime:
            raise EigenbasisError(f"requested {count} eigenfunctions, {self.n_prime} stored")
        return count

    def __repr__(self):
        return f"{type(self).__name__}({self.descriptor()['params']}, beta={self.beta}, n_prime={self.n_prime})"


# ---------------------------------------------------------------------------
# Hermite / Ornstein-Uhlenbeck
# ---------------------------------------------------------------------------

class HermiteSystem(EigenSystem1D):
    """``f_k(x) = He_k(x sqrt(alpha beta)) / sqrt(k!)``, ``lambda_k = -k alpha``."""

    kind = "hermite"

    def __init__(self, alpha: float, beta: float, n_prime: int):
        self.alpha = float(alpha)
        self.scale = math.sqrt(self.alpha * beta)
        super().__init__(beta, n_prime, -self.alpha * np.arange(n_prime, dtype=float))

    def evaluate(self, x, count=None, clip=False):
        count = self._count(count)
        y = np.asarray(x, dtype=float).reshape(-1) * self.scale
        out = np.empty((y.size, count))
        out[:, 0] = 1.0
        if count > 1:
            out[:, 1] = y
        for k in range(1, count - 1):
            out[:, k + 1] = (y * out[:, k] - math.sqrt(k) * out[:, k - 1]) / math.sqrt(k + 1)
        return out

    def derivative(self, x, count=None, clip=False):
        count = self._count(count)
        vals = self.evaluate(x, max(count - 1, 1))
        out = np.zeros((vals.shape[0], count))
        k = np.arange(1, count)
        out[:, 1:] = self.scale * np.sqrt(k) * vals[:, : count - 1]
        return out

    def potential(self, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * self.alpha * x**2

    def grad_potential(self, x):
        return self.alpha * np.asarray(x, dtype=float)

    def expansion_coeffs(self, n):
        m = self.expansion_size(n)
        if self.n_prime < m:
            raise EigenbasisError(f"need n_prime >= {m} for n={n}, have {self.n_prime}")
        u = np.zeros((n + 1, n + 1, m))
        # He_a He_b = sum_k C(a,k) C(b,k) k! He_{a+b-2k}
        for a in range(n + 1):
            for b in range(n + 1):
                for k in range(min(a, b) + 1):
                    deg = a + b - 2 * k
                    coef = math.comb(a, k) * math.comb(b, k) * math.factorial(k)
                    u[a, b, deg] = coef * math.sqrt(
                        math.factorial(deg) / (math.factorial(a) * math.factorial(b))
                    )
        v = np.zeros((n + 1, m))
        for a in range(1, n + 1):
            v[a, a - 1] = self.scale * math.sqrt(a)
        q = np.zeros(m)
        q[1] = math.sqrt(self.alpha / self.beta)
        w = q[1] * u[:, 1, :]
        zeros = {"u": np.zeros((n + 1, n + 1)), "v": np.zeros(n + 1), "q": np.zeros(1), "w": np.zeros(n + 1)}
        return ExpansionCoeffs(n, m, u, v, q, w, zeros)

    def descriptor(self):
        return {"kind": self.kind, "beta": self.beta, "n_prime": self.n_prime,
                "params": {"alpha": self.alpha}}


def build_hermite_basis(alpha: float, beta: float, n_prime: int) -> HermiteSystem:
    """Eigensystem of the Ornstein-Uhlenbeck generator with spring constant ``alpha``.

    The stationary law is ``N(0, 1/(alpha beta))``.
    """
    if not (alpha > 0 and beta > 0):
        raise EigenbasisError(f"alpha and beta must be positive, got {alpha}, {beta}")
    if n_prime < 1:
        raise EigenbasisError("n_prime must be >= 1")
    return HermiteSystem(alpha, beta, n_prime)


# ---------------------------------------------------------------------------
# Fourier / periodic Brownian motion
# ---------------------------------------------------------------------------

def _fourier_mode(k: int) -> tuple[str, int]:
    """Index -> (``"c"`` | ``"s"``, frequency); index 0 is the constant."""
    if k == 0:
        return "c", 0
    return ("c", (k + 1) // 2) if k % 2 else ("s", k // 2)


def _fourier_index(kind: str, freq: int) -> int:
    if freq == 0:
        return 0
    return 2 * freq - 1 if kind == "c" else 2 * freq


class FourierSystem(EigenSystem1D):
    """Real trigonometric basis on ``[-L, L)`` ordered by ``|lambda|``.

    ``f_0 = 1``, ``f_{2k-1} = sqrt(2) cos(k w x)``, ``f_{2k} = sqrt(2) sin(k w x)``
    with ``w = pi / L`` and ``lambda = -(k w)^2 / beta``.
    """

    kind = "fourier"
    periodic = True

    def __init__(self, L: float, beta: float, n_prime: int):
        self.L = float(L)
        self.omega = math.pi / self.L
        freqs = np.array([_fourier_mode(k)[1] for k in range(n_prime)], dtype=float)
        super().__init__(beta, n_prime, -((freqs * self.omega) ** 2) / beta)

    @property
    def domain(self):
        return (-self.L, self.L)

    def wrap(self, x):
        return np.mod(np.asarray(x, dtype=float) + self.L, 2 * self.L) - self.L

    def evaluate(self, x, count=None, clip=False):
        count = self._count(count)
        x = np.asarray(x, dtype=float).reshape(-1)
        out = np.empty((x.size, count))
        out[:, 0] = 1.0
        for k in range(1, count):
            kind, freq = _fourier_mode(k)
            arg = freq * self.omega * x
            out[:, k] = math.sqrt(2) * (np.cos(arg) if kind == "c" else np.sin(arg))
        return out

    def derivative(self, x, count=None, clip=False):
        count = self._count(count)
        x = np.asarray(x, dtype=float).reshape(-1)
        out = np.zeros((x.size, count))
        for k in range(1, count):
            kind, freq = _fourier_mode(k)
            c = freq * self.omega
            arg = c * x
            out[:, k] = math.sqrt(2) * c * (-np.sin(arg) if kind == "c" else np.cos(arg))
        return out

    def potential(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def grad_potential(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def expansion_size(self, n):
        # exact closure needs every frequency up to twice the largest one in use
        return 4 * ((n + 1) // 2) + 1

    def expansion_coeffs(self, n):
        m = self.expansion_size(n)
        if self.n_prime < m:
            raise EigenbasisError(f"need n_prime >= {m} for n={n}, have {self.n_prime}")
        norm = lambda k: 1.0 if k == 0 else math.sqrt(2)  # noqa: E731
        u = np.zeros((n + 1, n + 1, m))
        for a in range(n + 1):
            ka, fa = _fourier_mode(a)
            for b in range(n + 1):
                kb, fb = _fourier_mode(b)
                # product-to-sum on the bare trig functions, as (kind, signed freq, coef)
                if ka == "c" and kb == "c":
                    terms = [("c", fa - fb, 0.5), ("c", fa + fb, 0.5)]
                elif ka == "s" and kb == "s":
                    terms = [("c", fa - fb, 0.5), ("c", fa + fb, -0.5)]
                elif ka == "s":
                    terms = [("s", fa + fb, 0.5), ("s", fa - fb, 0.5)]
                else:
                    terms = [("s", fa + fb, 0.5), ("s", fa - fb, -0.5)]
                scale = norm(a) * norm(b)
                for kind, freq, coef in terms:
                    if kind == "s":
                        if freq == 0:
                            continue
                        coef, freq = (coef, freq) if freq > 0 else (-coef, -freq)
                    else:
                        freq = abs(freq)
                    idx = _fourier_index(kind, freq)
                    u[a, b, idx] += scale * coef / norm(idx)
        v = np.zeros((n + 1, m))
        for a in range(1, n + 1):
            kind, freq = _fourier_mode(a)
            if kind == "c":
                v[a, _fourier_index("s", freq)] = -freq * self.omega
            else:
                v[a, _fourier_index("c", freq)] = freq * self.omega
        q = np.zeros(m)
        w = np.zeros((n + 1, m))
        zeros = {"u": np.zeros((n + 1, n + 1)), "v": np.zeros(n + 1), "q": np.zeros(1), "w": np.zeros(n + 1)}
        return ExpansionCoeffs(n, m, u, v, q, w, zeros)

    def descriptor(self):
        return {"kind": self.kind, "beta": self.beta, "n_prime": self.n_prime,
                "params": {"L": self.L}}


def build_fourier_basis(L: float, beta: float, n_prime: int) -> FourierSystem:
    """Eigensystem of periodic Brownian motion on ``[-L, L)``; ``rho_inf`` is uniform."""
    if not (L > 0 and beta > 0):
        raise EigenbasisError(f"L and beta must be positive, got {L}, {beta}")
    if n_prime < 1:
        raise EigenbasisError("n_prime must be >= 1")
    return FourierSystem(L, beta, n_prime)


# ---------------------------------------------------------------------------
# Numeric (tabulated potential)
# ---------------------------------------------------------------------------

class NumericSystem(EigenSystem1D):
    """Finite-difference eigensystem of ``-V' d/dx + beta^{-1} d^2/dx^2`` on a grid.

    Eigenfunctions are tabulated on the grid and evaluated by linear
    interpolation.  ``poly`` (increasing-order monomial coefficients of ``V``)
    is kept when the potential is a polynomial so that ``V'`` is exact.
    """

    kind = "numeric"

    def __init__(self, grid, potential_table, beta, eigenvalues, table, poly=None):
        super().__init__(beta, table.shape[1], eigenvalues)
        self.grid = np.asarray(grid, dtype=float)
        self.h = float(self.grid[1] - self.grid[0])
        self.potential_table = np.asarray(potential_table, dtype=float)
        self.table = table
        self.poly = None if poly is None else np.asarray(poly, dtype=float)
        self.dtable = np.gradient(table, self.h, axis=0, edge_order=2)
        logw = -self.beta * (self.potential_table - self.potential_table.min())
        w = np.exp(logw)
        self.weights = w / w.sum()
        for arr in (self.grid, self.potential_table, self.table, self.dtable, self.weights):
            arr.setflags(write=False)

    @property
    def domain(self):
        return (float(self.grid[0]), float(self.grid[-1]))

    def _interp(self, tab, x, clip):
        x = np.asarray(x, dtype=float).reshape(-1)
        lo, hi = self.grid[0], self.grid[-1]
        if clip:
            x = np.clip(x, lo, hi)
        else:
            tol = 1e-12 * max(1.0, abs(lo), abs(hi))
            if x.size and (x.min() < lo - tol or x.max() > hi + tol):
                raise EigenbasisError(
                    f"points outside the tabulated domain [{lo:g}, {hi:g}]: "
                    f"range [{x.min():g}, {x.max():g}]")
        s = (x - lo) / self.h
        idx = np.clip(np.floor(s).astype(np.int64), 0, self.grid.size - 2)
        frac = (s - idx)[:, None]
        return tab[idx] * (1.0 - frac) + tab[idx + 1] * frac

    def evaluate(self, x, count=None, clip=False):
        count = self._count(count)
        out = self._interp(self.table[:, :count], x, clip)
        out[:, 0] = 1.0
        return out

    def derivative(self, x, count=None, clip=False):
        count = self._count(count)
        return self._interp(self.dtable[:, :count], x, clip)

    def potential(self, x):
        if self.poly is not None:
            return np.polynomial.polynomial.polyval(np.asarray(x, dtype=float), self.poly)
        return self._interp(self.potential_table[:, None], x, True)[:, 0]

    def grad_potential(self, x):
        x = np.asarray(x, dtype=float)
        if self.poly is not None:
            return np.polynomial.polynomial.polyval(x, np.polynomial.polynomial.polyder(self.poly))
        g = np.gradient(self.potential_table, self.h, edge_order=2)
        return self._interp(g[:, None], x, True)[:, 0].reshape(x.shape)

    def grad_potential_table(self):
        if self.poly is not None:
            return self.grad_potential(self.grid)
        return np.gradient(self.potential_table, self.h, edge_order=2)

    def apply_operator(self, f: np.ndarray) -> np.ndarray:
        """Discrete ``L f`` on the grid (the operator that was diagonalized)."""
        f = np.asarray(f, dtype=float)
        dv = np.diff(self.potential_table)
        # edge weights relative to node weights, w_{j+1/2}/w_j = exp(-beta dV / 2)
        right = np.exp(-0.5 * self.beta * dv)
        left = np.exp(0.5 * self.beta * dv)
        df = np.diff(f, axis=0)
        out = np.zeros_like(f)
        shape = (-1,) + (1,) * (f.ndim - 1)
        out[:-1] += right.reshape(shape) * df
        out[1:] -= left.reshape(shape) * df
        return out / (self.beta * self.h**2)

    def expansion_coeffs(self, n):
        m = self.expansion_size(n)
        if self.n_prime < m:
            raise EigenbasisError(f"need n_prime >= {m} for n={n}, have {self.n_prime}")
        pi = self.weights
        F = self.table[:, :m]
        Fa = self.table[:, : n + 1]

        def project(g):
            coef = (pi[:, None] * g).T @ F
            resid = g - F @ coef.T
            return coef, np.sqrt(pi @ resid**2)

        prod = Fa[:, :, None] * Fa[:, None, :]
        u = np.einsum("j,jab,jl->abl", pi, prod, F)
        recon = np.einsum("abl,jl->jab", u, F)
        res_u = np.sqrt(np.einsum("j,jab->ab", pi, (prod - recon) ** 2))
        v, res_v = project(self.dtable[:, : n + 1])
        vp = self.grad_potential_table()
        q, res_q = project(vp[:, None])
        w, res_w = project(Fa * vp[:, None])
        residuals = {"u": res_u, "v": res_v, "q": np.atleast_1d(res_q), "w": res_w}
        worst = max(float(np.max(r)) for r in residuals.values())
        status = "ok"
        if worst > NUMERIC_RESIDUAL_WARN:
            status = "warning"
            warnings.warn(f"numeric expansion residual {worst:.2e} exceeds {NUMERIC_RESIDUAL_WARN:g}",
                          RuntimeWarning, stacklevel=2)
        return ExpansionCoeffs(n, m, u, v, q[0], w, residuals, status)

    def descriptor(self):
        params = {"lo": float(self.grid[0]), "hi": float(self.grid[-1]), "size": int(self.grid.size)}
        if self.poly is not None:
            params["poly"] = [float(c) for c in self.poly]
        else:
            params["potential"] = [float(c) for c in self.potential_table]
        return {"kind": self.kind, "beta": self.beta, "n_prime": self.n_prime, "params": params}


def build_numeric_basis(potential, beta: float, grid, n_prime: int, poly=None,
                        residual_tol: float = 1e-6) -> NumericSystem:
    """Finite-difference eigensystem for a tabulated 1-D potential.

    Parameters
    ----------
    potential : callable or array_like
        ``V`` as a function of ``x`` or its values on ``grid``.
    beta : float
        Inverse temperature.
    grid : array_like
        Uniform grid covering the effective support of ``exp(-beta V)``.
    n_prime : int
        Number of eigenpairs to keep (smallest ``|lambda|`` first).
    poly : array_like, optional
        Monomial coefficients of ``V`` (increasing order) for exact gradients.
    residual_tol : float
        Bound on ``||L f_k - lambda_k f_k||`` in ``L^2(rho_inf)``.

    Notes
    -----
    The conservative discretization uses geometric-mean edge weights and
    zero-flux ends, so the similarity transform ``sqrt(w) L / sqrt(w)`` is a
    symmetric tridiagonal matrix and constants lie exactly in the kernel.
    """
    grid = np.asarray(grid, dtype=float)
    if beta <= 0:
        raise EigenbasisError("beta must be positive")
    if grid.ndim != 1 or grid.size < 3:
        raise EigenbasisError("grid must be 1-D with at least 3 points")
    h = np.diff(grid)
    if not np.allclose(h, h[0], rtol=1e-9, atol=0) or h[0] <= 0:
        raise EigenbasisError("grid must be uniform and increasing")
    if not 1 <= n_prime <= grid.size:
        raise EigenbasisError(f"n_prime must lie in [1, {grid.size}]")
    if poly is not None:
        poly = np.asarray(poly, dtype=float)
        vtab = np.polynomial.polynomial.polyval(grid, poly)
    elif callable(potential):
        vtab = np.asarray(potential(grid), dtype=float)
    else:
        vtab = np.asarray(potential, dtype=float)
    if vtab.shape != grid.shape or not np.all(np.isfinite(vtab)):
        raise EigenbasisError("potential table must be finite and match the grid")
    h = float(grid[1] - grid[0])

    dv = np.diff(vtab)
    c = 1.0 / (beta * h**2)
    # symmetrized generator: off-diagonal c, diagonal -c (sqrt(w_{j+1}/w_j) + sqrt(w_{j-1}/w_j))
    diag = np.zeros(grid.size)
    diag[:-1] -= c * np.exp(-0.5 * beta * dv)
    diag[1:] -= c * np.exp(0.5 * beta * dv)
    off = np.full(grid.size - 1, c)
    try:
        vals, vecs = eigh_tridiagonal(-diag, -off, select="i", select_range=(0, n_prime - 1))
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise EigenbasisError(f"eigensolve failed: {exc}") from exc
    order = np.argsort(np.abs(vals), kind="stable")
    vals, vecs = vals[order], vecs[:, order]

    logw = -beta * (vtab - vtab.min())
    half = np.exp(-0.5 * logw)  # 1 / sqrt(w)
    total = np.exp(logw).sum()
    table = vecs * half[:, None] * math.sqrt(total)
    for k in range(1, n_prime):
        # deterministic sign: positive where the function has most weight on the right
        tail = table[-1, k] if abs(table[-1, k]) > 1e-12 else table[np.argmax(np.abs(table[:, k])), k]
        if tail < 0:
            table[:, k] = -table[:, k]
    table[:, 0] = 1.0
    eigenvalues = -vals
    eigenvalues[0] = 0.0
    eigenvalues = np.minimum(eigenvalues, 0.0)

    sys = NumericSystem(grid, vtab, beta, eigenvalues, table, poly=poly)
    resid = sys.apply_operator(table) - table * eigenvalues[None, :]
    norms = np.sqrt(sys.weights @ resid**2)
    if np.max(norms) > residual_tol * max(1.0, float(np.max(np.abs(eigenvalues)))):
        raise EigenbasisError(f"eigen-residual {np.max(norms):.3e} exceeds {residual_tol:g}; refine the grid")
    edge = np.max(np.abs(vecs[[0, -1], :]))
    if edge > 1e-4:
        warnings.warn(f"eigenvectors reach the domain boundary (|psi| = {edge:.1e}); "
                      "widen the grid", RuntimeWarning, stacklevel=2)
    return sys


# ---------------------------------------------------------------------------
# Module-level conveniences
# ---------------------------------------------------------------------------

def eval_basis(sys: EigenSystem1D, k: int, x, clip: bool = False) -> np.ndarray:
    """``f_k(x)`` for a single eigen index ``k``."""
    if not 0 <= k < sys.n_prime:
        raise EigenbasisError(f"index {k} outside 0..{sys.n_prime - 1}")
    scalar = np.ndim(x) == 0
    val = sys.evaluate(np.atleast_1d(x), k + 1, clip=clip)[:, k]
    return float(val[0]) if scalar else val.reshape(np.shape(x))


def expansion_coeffs(sys: EigenSystem1D, n: int) -> ExpansionCoeffs:
    return sys.expansion_coeffs(n)


def system_from_descriptor(desc: dict) -> EigenSystem1D:
    """Rebuild an eigensystem from :meth:`EigenSystem1D.descriptor`."""
    kind, beta, n_prime, p = desc["kind"], desc["beta"], desc["n_prime"], desc["params"]
    if kind == "hermite":
        return build_hermite_basis(p["alpha"], beta, n_prime)
    if kind == "fourier":
        return build_fourier_basis(p["L"], beta, n_prime)
    if kind == "numeric":
        grid = np.linspace(p["lo"], p["hi"], p["size"])
        if "poly" in p:
            poly = np.asarray(p["poly"])
            return build_numeric_basis(np.polynomial.polynomial.polyval(grid, poly), beta, grid,
                                       n_prime, poly=poly)
        return build_numeric_basis(np.asarray(p["potential"]), beta, grid, n_prime)
    raise EigenbasisError(f"unknown eigensystem kind {kind!r}")
