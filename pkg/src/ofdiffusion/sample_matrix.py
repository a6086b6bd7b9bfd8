"""Sample sets with provenance."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

__all__ = ["SampleMatrix", "as_array"]


@dataclass(frozen=True)
class SampleMatrix:
    """An ``N x d`` array of samples plus where it came from.

    Parameters
    ----------
    data : ndarray, shape (N, d)
    seed : int or None
        Seed of the generator that produced the rows.
    time : float or None
        Diffusion time the samples represent (0 for data, ``T`` for base draws).
    generator : str
        Short label, e.g. ``"forward_em"`` or ``"mh"``.
    meta : dict
        Free-form extras (acceptance rates, step counts).
    """

    data: np.ndarray
    seed: int | None = None
    time: float | None = None
    generator: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2:
            raise ValueError(f"sample matrix must be 2-D, got shape {arr.shape}")
        object.__setattr__(self, "data", arr)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self):
        return self.data.shape

    def __len__(self):
        return self.n

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)

    def with_data(self, data, **changes) -> "SampleMatrix":
        return replace(self, data=data, **changes)


def as_array(x) -> np.ndarray:
    """2-D float view of a SampleMatrix, array or 1-D vector (treated as ``N x 1``)."""
    arr = x.data if isinstance(x, SampleMatrix) else np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    return arr
