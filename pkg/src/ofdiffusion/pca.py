"""Principal-component maps for reducing image data before score fitting."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sample_matrix import as_array

__all__ = ["PCAError", "PCAMap", "pca_fit", "pca_project", "pca_reconstruct"]


class PCAError(ValueError):
    pass


@dataclass(frozen=True)
class PCAMap:
    """Affine map onto the top principal directions.

    Attributes
    ----------
    mean : ndarray, shape (D,)
    loadings : ndarray, shape (D, r)
        Orthonormal columns, leading direction first.
    explained_variance : ndarray, shape (r,)
        Sample variance along each loading (non-increasing).
    total_variance : float
    """

    mean: np.ndarray
    loadings: np.ndarray
    explained_variance: np.ndarray
    total_variance: float

    @property
    def r(self) -> int:
        return self.loadings.shape[1]

    @property
    def D(self) -> int:
        return self.loadings.shape[0]

    @property
    def explained_ratio(self) -> np.ndarray:
        return self.explained_variance / self.total_variance if self.total_variance > 0 else \
            np.zeros_like(self.explained_variance)


def pca_fit(samples, r: int) -> PCAMap:
    """Mean-centered SVD keeping ``r`` components.

    Raises
    ------
    PCAError
        If ``N <= r`` or ``r`` exceeds the numerical rank of the centered data.
    """
    X = as_array(samples)
    N, D = X.shape
    if not 1 <= r <= D:
        raise PCAError(f"component count r={r} must lie in [1, {D}]")
    if N <= r:
        raise PCAError(f"need more samples than components (N={N}, r={r})")
    mean = X.mean(axis=0)
    Xc = X - mean
    _, s, Vt = np.linalg.svd(Xc, full_matrices=False)
    tol = s[0] * max(N, D) * np.finfo(float).eps if s.size else 0.0
    rank = int(np.sum(s > tol))
    # full-dimensional maps are allowed on rank-deficient data: any orthonormal
    # completion gives an exact round trip
    if r > rank and r < D:
        raise PCAError(f"r={r} exceeds the rank {rank} of the centered data")
    var = s**2 / (N - 1)
    return PCAMap(mean, Vt[:r].T.copy(), var[:r].copy(), float(var.sum()))


def _check(pmap: PCAMap, X, width: int, what: str):
    if X.shape[1] != width:
        raise PCAError(f"{what} has {X.shape[1]} columns, expected {width}")


def pca_project(pmap: PCAMap, data) -> np.ndarray:
    """Coordinates of ``data`` along the loadings, shape ``(N, r)``."""
    X = as_array(data)
    _check(pmap, X, pmap.D, "data")
    return (X - pmap.mean) @ pmap.loadings


def pca_reconstruct(pmap: PCAMap, reduced) -> np.ndarray:
    """Map reduced coordinates back to the ambient space."""
    Z = as_array(reduced)
    _check(pmap, Z, pmap.r, "reduced data")
    return Z @ pmap.loadings.T + pmap.mean
