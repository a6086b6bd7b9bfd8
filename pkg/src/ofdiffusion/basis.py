"""Tensor-product cluster basis over per-coordinate eigensystems."""
from __future__ import annotations

import numpy as np

from .cluster import BasisIndexSet
from .eigenbasis import system_from_descriptor

__all__ = ["SeparableBasis", "khatri_rao"]


def khatri_rao(*mats: np.ndarray) -> np.ndarray:
    """Row-wise Kronecker product: ``(N, a), (N, b) -> (N, a*b)``, first factor slowest."""
    out = mats[0]
    for m in mats[1:]:
        out = (out[:, :, None] * m[:, None, :]).reshape(out.shape[0], -1)
    return out


class SeparableBasis:
    """Cluster basis functions built from one eigensystem per coordinate.

    Parameters
    ----------
    systems : sequence of EigenSystem1D
        One per coordinate; all share ``beta``.
    S : BasisIndexSet

    Attributes
    ----------
    m : int
        Expansion-set size per coordinate.
    lam : ndarray, shape (d, m)
        Eigenvalues of the first ``m`` eigenfunctions of every coordinate.
    coeffs : list of ExpansionCoeffs
    """

    def __init__(self, systems, S: BasisIndexSet):
        systems = tuple(systems)
        if len(systems) != S.d:
            raise ValueError(f"need {S.d} eigensystems, got {len(systems)}")
        betas = {s.beta for s in systems}
        if len(betas) != 1:
            raise ValueError(f"all coordinates must share beta, got {sorted(betas)}")
        sizes = {s.expansion_size(S.n) for s in systems}
        if len(sizes) != 1:
            raise ValueError("all coordinates must use the same expansion size")
        self.systems = systems
        self.S = S
        self.n = S.n
        self.d = S.d
        self.beta = systems[0].beta
        self.m = sizes.pop()
        self.coeffs = [s.expansion_coeffs(S.n) for s in systems]
        self.lam = np.stack([s.eigenvalues[: self.m] for s in systems])
        kt = S.factor_table()
        self.entry_lambda = self.lam[np.arange(self.d)[None, :], kt].sum(axis=1)

    # -- evaluation -------------------------------------------------------------
    def phi(self, X, count: int | None = None) -> np.ndarray:
        """Per-coordinate eigenfunction values, shape ``(N, d, count)``."""
        X = np.asarray(X, dtype=float)
        count = self.m if count is None else count
        out = np.empty((X.shape[0], self.d, count))
        for i, s in enumerate(self.systems):
            out[:, i, :] = s.evaluate(X[:, i], count, clip=True)
        return out

    def dphi(self, X, count: int | None = None) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        count = self.n + 1 if count is None else count
        out = np.empty((X.shape[0], self.d, count))
        for i, s in enumerate(self.systems):
            out[:, i, :] = s.derivative(X[:, i], count, clip=True)
        return out

    def design(self, Phi: np.ndarray) -> np.ndarray:
        """Basis-function values ``F`` of shape ``(N, |S|)`` from :meth:`phi` output."""
        N = Phi.shape[0]
        F = np.empty((N, len(self.S)))
        n = self.n
        for p, g in enumerate(self.S.groups):
            sl = self.S.block(p)
            if not g:
                F[:, sl] = 1.0
            else:
                F[:, sl] = khatri_rao(*[Phi[:, e, 1 : n + 1] for e in g])
        return F

    def design_grad(self, Phi: np.ndarray, dPhi: np.ndarray, i: int) -> np.ndarray:
        """``d/dx_i`` of every basis function, shape ``(N, |S|)``."""
        N = Phi.shape[0]
        G = np.zeros((N, len(self.S)))
        n = self.n
        for p, g in enumerate(self.S.groups):
            if i not in g:
                continue
            G[:, self.S.block(p)] = khatri_rao(
                *[(dPhi if e == i else Phi)[:, e, 1 : n + 1] for e in g])
        return G

    def grad_potential(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return np.column_stack([s.grad_potential(X[:, i]) for i, s in enumerate(self.systems)])

    def potential(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return sum(s.potential(X[:, i]) for i, s in enumerate(self.systems))

    def contract(self, Phi: np.ndarray, C: np.ndarray) -> np.ndarray:
        """``F(x) @ C`` without forming ``F``; ``C`` has shape ``(|S|, k)``."""
        N = Phi.shape[0]
        k = C.shape[1]
        n = self.n
        out = np.zeros((N, k))
        for p, g in enumerate(self.S.groups):
            Cg = C[self.S.block(p)]
            if not g:
                out += Cg[0]
            elif len(g) == 1:
                out += Phi[:, g[0], 1 : n + 1] @ Cg
            elif len(g) == 2:
                tmp = (Phi[:, g[0], 1 : n + 1] @ Cg.reshape(n, n * k)).reshape(N, n, k)
                out += np.matmul(Phi[:, g[1], None, 1 : n + 1], tmp)[:, 0, :]
            else:
                out += khatri_rao(*[Phi[:, e, 1 : n + 1] for e in g]) @ Cg
        return out

    def descriptor(self) -> dict:
        return {"systems": [s.descriptor() for s in self.systems], "S": self.S.descriptor()}

    @classmethod
    def from_descriptor(cls, desc: dict) -> "SeparableBasis":
        return cls([system_from_descriptor(s) for s in desc["systems"]],
                   BasisIndexSet.from_descriptor(desc["S"]))

