"""Solvers for ``A C = -B`` with symmetric positive semidefinite ``A``.

* ``thresholded`` -- pseudoinverse keeping singular values above
  ``tau * sigma_max``;
* ``sketched``    -- Gaussian range sketch ``A @ Omega``, rank-``r`` truncated
  SVD ``U``, then the reduced least-squares problem ``(U^T A) C = -U^T B``;
* ``ridge``       -- ``(A + mu I) C = -B``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

__all__ = [
    "SolveReport",
    "SolverError",
    "thresholded_solve",
    "sketched_solve",
    "ridge_solve",
    "select_rank",
    "solve",
    "rng_for",
]


class SolverError(ValueError):
    pass


@dataclass
class SolveReport:
    method: str
    rank: int
    sketch_size: int | None
    singular_values: np.ndarray
    residual: float
    status: str = "ok"
    flags: list = field(default_factory=list)

    def head(self, k: int = 5) -> list:
        return [float(s) for s in self.singular_values[:k]]


def _residual(A, C, B):
    nb = np.linalg.norm(B)
    r = np.linalg.norm(A @ C + B)
    return float(r / nb) if nb > 0 else float(r)


def _check(A, B):
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise SolverError(f"A must be square, got {A.shape}")
    if B.ndim == 1:
        B = B[:, None]
    if B.shape[0] != A.shape[0]:
        raise SolverError(f"B has {B.shape[0]} rows, A has {A.shape[0]}")
    return A, B


def rng_for(seed: int, t_index: int = 0) -> np.random.Generator:
    """Independent stream per (seed, time index); order of solves does not matter."""
    return np.random.default_rng([int(seed), int(t_index)])


FAST_PATH_MIN = 64


def _untruncated_solve(A, B, tau):
    """Cholesky solve when no eigenvalue of ``A`` can fall below the cutoff.

    ``g`` (largest absolute row sum) bounds ``sigma_max`` from above, so if
    ``A - tau g I`` is positive definite every eigenvalue exceeds
    ``tau sigma_max``, the cutoff removes nothing and the thresholded
    pseudoinverse is the plain inverse. Returns None when that certificate fails.
    """
    n = A.shape[0]
    g = float(np.abs(A).sum(axis=1).max())
    if not g > 0:
        return None
    try:
        sla.cho_factor(A - tau * g * np.eye(n), check_finite=False)
        cf = sla.cho_factor(A, check_finite=False)
    except sla.LinAlgError:
        return None
    C = -sla.cho_solve(cf, B, check_finite=False)
    # the spectrum is not computed on this path; the report carries the flag instead
    rep = SolveReport("thresholded", n, None, np.zeros(0), _residual(A, C, B), "ok",
                      ["untruncated: Cholesky certificate, spectrum not computed"])
    return C, rep


def thresholded_solve(A, B, tau: float = 1e-8):
    """``C = -A^+_tau B`` with relative singular-value cutoff ``tau``.

    Examples
    --------
    >>> C, rep = thresholded_solve(np.diag([2.0, 1.0, 1e-12]), -np.eye(3), 1e-6)
    >>> np.round(np.diag(C), 12).tolist()
    [0.5, 1.0, 0.0]
    """
    A, B = _check(A, B)
    if tau < 0:
        raise SolverError("tau must be nonnegative")
    if A.shape[0] >= FAST_PATH_MIN:
        fast = _untruncated_solve(A, B, tau)
        if fast is not None:
            return fast
    w, V = sla.eigh(A, driver="evd")
    sv = np.abs(w)
    order = np.argsort(sv)[::-1]
    sv, w, V = sv[order], w[order], V[:, order]
    smax = sv[0] if sv.size else 0.0
    keep = sv > tau * smax if smax > 0 else np.zeros_like(sv, dtype=bool)
    status, flags = "ok", []
    if not np.any(keep):
        status = "warning"
        flags.append("all singular values below threshold")
        warnings.warn("thresholded solve: all singular values below threshold", RuntimeWarning,
                      stacklevel=2)
        C = np.zeros_like(B)
    else:
        Vk = V[:, keep]
        C = -(Vk / w[keep]) @ (Vk.T @ B)
    rep = SolveReport("thresholded", int(keep.sum()), None, sv[keep], _residual(A, C, B), status, flags)
    return C, rep


def sketched_solve(A, B, r_tilde: int, r: int, rng_seed=0, rcond: float = 1e-12):
    """Randomized range-finder reduction of ``A C = -B``.

    Parameters
    ----------
    r_tilde : int
        Sketch width (columns of the Gaussian test matrix).
    r : int
        Rank kept from the SVD of ``A @ Omega``.
    rng_seed : int, sequence or Generator
        Seed material for the test matrix; identical seeds give identical ``C``.
    """
    A, B = _check(A, B)
    n = A.shape[0]
    if not 1 <= r <= r_tilde <= n:
        raise SolverError(f"need 1 <= r <= r_tilde <= |S|, got r={r}, r_tilde={r_tilde}, |S|={n}")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    Omega = rng.standard_normal((n, r_tilde))
    Y = A @ Omega
    U, s, _ = sla.svd(Y, full_matrices=False, lapack_driver="gesdd")
    Ur = U[:, :r]
    M = Ur.T @ A
    rhs = -(Ur.T @ B)
    C, _, rank, _ = sla.lstsq(M, rhs, cond=rcond, lapack_driver="gelsd")
    flags = []
    if rank < r:
        flags.append(f"reduced system rank {rank} < {r}")
    rep = SolveReport("sketched", r, r_tilde, s[:r], _residual(A, C, B),
                      "ok" if not flags else "rank_deficient", flags)
    return C, rep


def ridge_solve(A, B, mu: float):
    """``(A + mu I) C = -B`` by Cholesky."""
    A, B = _check(A, B)
    if mu <= 0:
        raise SolverError("ridge parameter must be positive")
    c, low = sla.cho_factor(A + mu * np.eye(A.shape[0]))
    C = -sla.cho_solve((c, low), B)
    return C, SolveReport("ridge", A.shape[0], None, np.array([]), _residual(A, C, B))


def select_rank(A0, B0, candidates=None, error_fn=None, tau=None, oversample: int = 10,
                rng_seed=0):
    """Choose the sketch rank from the initial-time system.

    Parameters
    ----------
    candidates : sequence of int
        Ranks to try (with ``error_fn``).
    error_fn : callable, optional
        ``C -> relative error of the initial score``; the rank with the smallest
        error wins, ties going to the smaller rank.
    tau : float, optional
        Fallback without ``error_fn``: number of singular values of ``A0``
        at least ``tau * sigma_max``.

    Returns
    -------
    r : int
    errors : dict
        Candidate rank -> error (empty for the threshold fallback).
    """
    A0, B0 = _check(A0, B0)
    n = A0.shape[0]
    if error_fn is None:
        if tau is None:
            raise SolverError("rank selection needs a reference score or a threshold")
        sv = np.abs(np.linalg.eigvalsh(A0))
        return max(1, int(np.sum(sv >= tau * sv.max()))), {}
    if not candidates:
        raise SolverError("no candidate ranks")
    errors = {}
    for r in sorted(set(int(c) for c in candidates)):
        if not 1 <= r <= n:
            raise SolverError(f"candidate rank {r} outside 1..{n}")
        C, _ = sketched_solve(A0, B0, min(n, r + oversample), r, rng_seed)
        errors[r] = float(error_fn(C))
    best = min(errors.values())
    # errors equal to rounding count as ties and go to the smaller rank
    r = min(k for k, v in errors.items() if v <= best * (1 + 1e-9) + 1e-15)
    return r, errors


def solve(A, B, method: str = "thresholded", tau: float = 1e-8, r=None, r_tilde=None,
          mu=None, rng_seed=0):
    """Dispatch to one of the three solvers."""
    if method == "thresholded":
        return thresholded_solve(A, B, tau)
    if method == "sketched":
        if r is None:
            raise SolverError("sketched solve needs a rank")
        n = np.shape(A)[0]
        rt = min(n, r + 10) if r_tilde is None else r_tilde
        return sketched_solve(A, B, rt, r, rng_seed)
    if method == "ridge":
        return ridge_solve(A, B, 1e-8 if mu is None else mu)
    raise SolverError(f"unknown solver method {method!r}")
