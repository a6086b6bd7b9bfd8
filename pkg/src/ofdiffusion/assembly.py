"""Assembly of the per-time normal equations ``A(t) C(t) = -B(t)``.

``A_{ll'}(t) = E_{rho_t}[f_l f_l']`` and
``b^{(i)}_l(t) = E_{rho_t}[d_i f_l - beta f_l d_i V]``.  Every integrand is
expanded onto products of eigenfunctions over distinct coordinates; such a
product evolves under the forward dynamics as ``exp(t * sum lambda)``, so a
single Monte Carlo pass over samples of ``rho_0`` fixes all times.

The pass accumulates

* ``gram``   -- ``E[f_l f_l']`` for all entries (used for pairs of groups
  with no coordinate in common, where the product is already an eigenfunction);
* ``cross``  -- ``E[f_l f^{(i)}_c]`` over the support of the potential-gradient
  expansion (``b`` for coordinates outside the entry's group);
* ``group``  -- full tensors ``E[prod_{e in D} f^{(e)}_{c_e}]`` with
  ``c_e in 0..m-1`` for every group ``D`` (same-group blocks of ``A`` and
  ``b`` for coordinates inside the group);
* ``union``  -- mixed tensors for overlapping groups whose union is not a group.
"""
from __future__ import annotations

import itertools
import string

import numpy as np

from .basis import SeparableBasis, khatri_rao
from .sample_matrix import as_array

__all__ = [
    "AssemblyError",
    "MomentTable",
    "SpectralAssembler",
    "enumerate_required_keys",
    "fill_moment_table",
    "assemble_A",
    "assemble_B",
    "assemble_A_em",
    "assemble_B_em",
    "em_moments",
    "direct_moment",
]


class AssemblyError(RuntimeError):
    """Inconsistent moment table or basis."""


def _overlaps(S):
    """Pairs of group positions ``p <= q`` that share at least one coordinate."""
    out = []
    for p, g in enumerate(S.groups):
        for q in range(p, len(S.groups)):
            h = S.groups[q]
            if set(g) & set(h):
                out.append((p, q))
    return out


def _union_plan(S):
    """Union tensors needed beyond the group tensors: ``{(U, shared): None}``."""
    need = {}
    groups = set(S.groups)
    for p, q in _overlaps(S):
        g, h = S.groups[p], S.groups[q]
        if p == q:
            continue
        U = tuple(sorted(set(g) | set(h)))
        if U in groups:
            continue
        need[(U, tuple(sorted(set(g) & set(h))))] = None
    return list(need)


class MomentTable:
    """Monte Carlo moments of basis products under ``rho_0``.

    Attributes
    ----------
    N : int
        Number of samples (or quadrature nodes).
    gram : ndarray, shape (|S|, |S|)
    cross : ndarray, shape (|S|, d, m)
        Zero outside the support of each coordinate's gradient expansion.
    group : dict
        Coordinate tuple -> tensor of shape ``(m,) * len(tuple)``.
    union : dict
        ``(U, shared)`` -> tensor with ``m`` entries on shared axes and ``n``
        (indices ``1..n``) on the others.
    basis_hash : str
    sample_passes : int
        How many times the fill touched the sample array.
    """

    def __init__(self, N, gram, cross, group, union, n, m, basis_hash="", sample_passes=0,
                 groups=None, entries=None):
        self.N = int(N)
        self.gram = gram
        self.cross = cross
        self.group = group
        self.union = union
        self.n = int(n)
        self.m = int(m)
        self.basis_hash = basis_hash
        self.sample_passes = sample_passes
        self.groups = tuple(groups) if groups is not None else tuple(group)
        # per-entry eigen indices (|S|, d); enables gram and cross lookups
        self.entries = entries
        self._entry_index = None

    # -- key lookups ---------------------------------------------------------------
    def lookup(self, key) -> float:
        """Moment ``E[prod f^{(e)}_{k_e}]`` for a canonical key ``((dim, k), ...)``.

        Factors with ``k = 0`` are ignored.  Raises ``KeyError`` when the key is
        not covered by the stored tensors.
        """
        key = tuple(sorted((int(e), int(k)) for e, k in key if k != 0))
        if not key:
            return 1.0
        dims = tuple(e for e, _ in key)
        if len(set(dims)) != len(dims):
            raise KeyError(f"repeated coordinate in key {key}")
        idx = dict(key)
        for D, T in self.group.items():
            if set(dims) <= set(D):
                return float(T[tuple(idx.get(e, 0) for e in D)])
        for (U, shared), T in self.union.items():
            if set(dims) <= set(U) and all(e in idx for e in U if e not in shared):
                ok = all(1 <= idx[e] <= self.n for e in U if e not in shared)
                if ok and all(idx.get(e, 0) < self.m for e in shared):
                    return float(T[tuple(idx.get(e, 0) if e in shared else idx[e] - 1 for e in U)])
        found = self._lookup_products(key)
        if found is not None:
            return found
        raise KeyError(f"moment key {key} not in table")

    def _lookup_products(self, key):
        """Keys that factor as (entry) x (entry) or (entry) x (one coordinate)."""
        if self.entries is None:
            return None
        if self._entry_index is None:
            self._entry_index = {tuple((e, int(k)) for e, k in enumerate(row) if k): l
                                 for l, row in enumerate(self.entries)}
        index = self._entry_index
        for r in range(len(key) + 1):
            for part in itertools.combinations(key, r):
                rest = tuple(f for f in key if f not in part)
                if part in index and rest in index:
                    return float(self.gram[index[part], index[rest]])
                if part in index and len(rest) == 1:
                    i, c = rest[0]
                    if c < self.m and self.cross[index[part], i, c] != 0.0:
                        return float(self.cross[index[part], i, c])
        return None

    # -- persistence -----------------------------------------------------------------
    def save(self, path):
        arrays = {"gram": self.gram, "cross": self.cross,
                  "meta": np.array([self.N, self.n, self.m, self.sample_passes], dtype=np.int64)}
        for k, (D, T) in enumerate(self.group.items()):
            arrays[f"group_{k}"] = T
            arrays[f"group_{k}_dims"] = np.array(D, dtype=np.int64)
        for k, ((U, sh), T) in enumerate(self.union.items()):
            arrays[f"union_{k}"] = T
            arrays[f"union_{k}_dims"] = np.array(U, dtype=np.int64)
            arrays[f"union_{k}_shared"] = np.array(sh, dtype=np.int64)
        arrays["hash"] = np.frombuffer(self.basis_hash.encode(), dtype=np.uint8)
        if self.entries is not None:
            arrays["entries"] = self.entries
        np.savez(path, **arrays)

    @classmethod
    def load(cls, path) -> "MomentTable":
        z = np.load(path)
        N, n, m, passes = (int(v) for v in z["meta"])
        entries = z["entries"] if "entries" in z else None
        group, union = {}, {}
        k = 0
        while f"group_{k}" in z:
            group[tuple(int(v) for v in z[f"group_{k}_dims"])] = z[f"group_{k}"]
            k += 1
        k = 0
        while f"union_{k}" in z:
            U = tuple(int(v) for v in z[f"union_{k}_dims"])
            sh = tuple(int(v) for v in z[f"union_{k}_shared"])
            union[(U, sh)] = z[f"union_{k}"]
            k += 1
        return cls(N, z["gram"], z["cross"], group, union, n, m,
                   bytes(z["hash"]).decode(), passes, entries=entries)


def _chunks(N, width, target_bytes=64_000_000):
    step = max(256, int(target_bytes // (8 * max(width, 1))))
    for lo in range(0, N, step):
        yield lo, min(N, lo + step)


def _grad_support(basis: SeparableBasis):
    return [np.flatnonzero(c.q != 0.0) for c in basis.coeffs]


def fill_moment_table(samples, basis: SeparableBasis, weights=None) -> MomentTable:
    """Single pass over ``rho_0`` samples accumulating every moment assembly reads.

    Parameters
    ----------
    samples : SampleMatrix or ndarray, shape (N, d)
    basis : SeparableBasis
    weights : ndarray, optional
        Nonnegative quadrature weights summing to one; plain averages otherwise.
    """
    X = as_array(samples)
    if X.shape[1] != basis.d:
        raise AssemblyError(f"samples have {X.shape[1]} coordinates, basis has {basis.d}")
    N = X.shape[0]
    if N == 0:
        raise AssemblyError("no samples")
    S, m, n = basis.S, basis.m, basis.n
    if weights is not None:
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (N,) or np.any(weights < 0):
            raise AssemblyError("weights must be a nonnegative vector, one per sample")
        weights = weights / weights.sum()
    supp = _grad_support(basis)
    gram = np.zeros((len(S), len(S)))
    cross = np.zeros((len(S), basis.d, m))
    group = {g: np.zeros((m,) * len(g)) for g in S.groups if g}
    union_keys = _union_plan(S)
    union = {}
    for U, sh in union_keys:
        union[(U, sh)] = np.zeros(tuple(m if e in sh else n for e in U))

    rows_read = 0
    for lo, hi in _chunks(N, len(S) + basis.d * m):
        Xc = X[lo:hi]
        rows_read += Xc.shape[0]
        Phi = basis.phi(Xc)
        F = basis.design(Phi)
        if weights is None:
            w = None
            Fw = F
        else:
            w = weights[lo:hi]
            Fw = F * w[:, None]
        gram += Fw.T @ F
        for i, sp in enumerate(supp):
            if sp.size:
                cross[:, i, sp] += Fw.T @ Phi[:, i, sp]
        for D, T in group.items():
            _accumulate(T, [Phi[:, e, :] for e in D], w)
        for (U, sh), T in union.items():
            _accumulate(T, [Phi[:, e, :] if e in sh else Phi[:, e, 1 : n + 1] for e in U], w)
    scale = 1.0 / N if weights is None else 1.0
    gram *= scale
    gram = 0.5 * (gram + gram.T)
    cross *= scale
    for T in group.values():
        T *= scale
    for T in union.values():
        T *= scale
    passes = rows_read / N
    return MomentTable(N, gram, cross, group, union, n, m, S.digest(), passes, S.groups,
                       entries=S.factor_table())


def _accumulate(T, factors, w):
    """``T += sum_j w_j prod_r factors[r][j, :]`` as an outer product over axes."""
    k = len(factors)
    if k == 1:
        T += factors[0].sum(axis=0) if w is None else w @ factors[0]
        return
    h = (k + 1) // 2
    left = khatri_rao(*factors[:h])
    right = khatri_rao(*factors[h:])
    if w is not None:
        right = right * w[:, None]
    T += (left.T @ right).reshape(T.shape)


def direct_moment(samples, basis: SeparableBasis, key, weights=None) -> float:
    """Plain Monte Carlo mean of ``prod f^{(e)}_{k_e}`` (test oracle for table lookups)."""
    X = as_array(samples)
    val = np.ones(X.shape[0])
    for e, k in key:
        val = val * basis.systems[e].evaluate(X[:, e], k + 1, clip=True)[:, k]
    if weights is None:
        return float(val.mean())
    return float(np.asarray(weights) @ val / np.sum(weights))


def enumerate_required_keys(basis: SeparableBasis, atol: float = 0.0) -> set:
    """Symbolic list of every moment key that ``A(t)`` and ``B(t)`` depend on.

    Walks all entry pairs and entry/coordinate pairs, expanding products and
    derivatives with the per-coordinate coefficients; quadratic in ``|S|`` so
    intended for small problems.  Coefficients with ``|c| <= atol`` are dropped.
    """
    S = basis.S
    entries = S.factor_table()
    keys = {()}
    for l, lp in itertools.combinations_with_replacement(range(len(S)), 2):
        a, b = entries[l], entries[lp]
        axes = []
        for e in range(basis.d):
            if a[e] and b[e]:
                u = basis.coeffs[e].u[a[e], b[e]]
                axes.append([(e, int(c)) for c in np.flatnonzero(np.abs(u) > atol)])
            elif a[e] or b[e]:
                axes.append([(e, int(a[e] or b[e]))])
        for combo in itertools.product(*axes):
            keys.add(tuple(f for f in combo if f[1] != 0))
    beta = basis.beta
    for l in range(len(S)):
        a = entries[l]
        own = [(e, int(a[e])) for e in range(basis.d) if a[e]]
        for i in range(basis.d):
            co = basis.coeffs[i]
            if a[i]:
                z = co.v[a[i]] - beta * co.w[a[i]]
                for c in np.flatnonzero(np.abs(z) > atol):
                    k = tuple(sorted([f for f in own if f[0] != i] + ([(i, int(c))] if c else [])))
                    keys.add(k)
            else:
                for c in np.flatnonzero(np.abs(co.q) > atol):
                    keys.add(tuple(sorted(own + ([(i, int(c))] if c else []))))
    return keys


class SpectralAssembler:
    """Evaluate ``A(t)`` and ``B(t)`` from a filled :class:`MomentTable`."""

    def __init__(self, basis: SeparableBasis, table: MomentTable):
        if table.basis_hash and table.basis_hash != basis.S.digest():
            raise AssemblyError("moment table was filled for a different basis")
        if table.gram.shape[0] != len(basis.S):
            raise AssemblyError("moment table size does not match the basis")
        self.basis = basis
        self.table = table
        S, n, m = basis.S, basis.n, basis.m
        self.supp = _grad_support(basis)
        self._blocks = []
        for p, q in _overlaps(S):
            g, h = S.groups[p], S.groups[q]
            shared = tuple(sorted(set(g) & set(h)))
            U = tuple(sorted(set(g) | set(h)))
            T = self._union_tensor(U, shared)
            letters = iter(string.ascii_letters)
            la = {e: next(letters) for e in g}
            lb = {e: next(letters) for e in h}
            lc = {e: next(letters) for e in shared}
            tsub = "".join(lc[e] if e in shared else (la[e] if e in g else lb[e]) for e in U)
            subs, ops = [tsub], [("T",)]
            for e in shared:
                subs.append(la[e] + lb[e] + lc[e])
                ops.append(("U", e))
            for e in g:
                if e not in shared:
                    subs.append(la[e])
                    ops.append(("E", e))
            for e in h:
                if e not in shared:
                    subs.append(lb[e])
                    ops.append(("E", e))
            out = "".join(la[e] for e in g) + "".join(lb[e] for e in h)
            spec = ",".join(subs) + "->" + out
            self._blocks.append((S.block(p), S.block(q), p == q, spec, ops, T, None))
        # b for coordinates inside an entry's group
        self._bgroup = []
        for p, g in enumerate(S.groups):
            if not g:
                continue
            T = table.group.get(g)
            if T is None:
                raise AssemblyError(f"missing group tensor for {g}")
            letters = string.ascii_letters
            for r, i in enumerate(g):
                tsub = "".join(letters[k] for k in range(len(g)))
                subs = [tsub, "Z" + letters[r]]
                ops = [("T",), ("Z", i)]
                for k, e in enumerate(g):
                    if e != i:
                        subs.append(letters[k])
                        ops.append(("E", e))
                outs = "".join("Z" if e == i else letters[k] for k, e in enumerate(g))
                sub_T = T[tuple(slice(None) if e == i else slice(1, n + 1) for e in g)]
                self._bgroup.append((S.block(p), i, ",".join(subs) + "->" + outs, ops,
                                     np.ascontiguousarray(sub_T)))
        self._Z = [(c.v - basis.beta * c.w)[1 : n + 1] for c in basis.coeffs]
        self._U = [c.u[1:, 1:, :] for c in basis.coeffs]
        self._in_group = np.zeros((len(S), basis.d), dtype=bool)
        for p, g in enumerate(S.groups):
            for e in g:
                self._in_group[S.block(p), e] = True
        self._paths = {}

    def _union_tensor(self, U, shared):
        tab, n = self.table, self.basis.n
        if U in tab.group:
            T = tab.group[U]
            return np.ascontiguousarray(T[tuple(slice(None) if e in shared else slice(1, n + 1) for e in U)])
        try:
            return tab.union[(U, shared)]
        except KeyError:
            raise AssemblyError(f"moment table lacks the tensor over {U} (shared {shared})") from None

    def _einsum(self, spec, operands):
        key = (spec,) + tuple(o.shape for o in operands)
        path = self._paths.get(key)
        if path is None:
            path = np.einsum_path(spec, *operands, optimize="greedy")[0]
            self._paths[key] = path
        return np.einsum(spec, *operands, optimize=path)

    def A(self, t: float) -> np.ndarray:
        b = self.basis
        n = b.n
        e = np.exp(b.entry_lambda * t)
        # outer(e, e) is bit-symmetric, so the product keeps A exactly symmetric
        A = self.table.gram * np.outer(e, e)
        expm = np.exp(b.lam * t)
        Ut = [u * ex[None, None, :] for u, ex in zip(self._U, expm)]
        En = [ex[1 : n + 1] for ex in expm]
        for bp, bq, diag, spec, ops, T, _ in self._blocks:
            operands = [T if o[0] == "T" else (Ut[o[1]] if o[0] == "U" else En[o[1]]) for o in ops]
            blk = self._einsum(spec, operands).reshape(bp.stop - bp.start, bq.stop - bq.start)
            if diag:
                A[bp, bq] = 0.5 * (blk + blk.T)
            else:
                A[bp, bq] = blk
                A[bq, bp] = blk.T
        return A

    def B(self, t: float) -> np.ndarray:
        b = self.basis
        n, beta = b.n, b.beta
        B = np.zeros((len(b.S), b.d))
        expm = np.exp(b.lam * t)
        el = np.exp(b.entry_lambda * t)
        for i, sp in enumerate(self.supp):
            if sp.size:
                q = b.coeffs[i].q[sp]
                B[:, i] = -beta * el * (self.table.cross[:, i, sp] @ (q * expm[i, sp]))
        B[self._in_group] = 0.0
        Zt = [z * ex[None, :] for z, ex in zip(self._Z, expm)]
        En = [ex[1 : n + 1] for ex in expm]
        for bl, i, spec, ops, T in self._bgroup:
            operands = [T if o[0] == "T" else (Zt[o[1]] if o[0] == "Z" else En[o[1]]) for o in ops]
            B[bl, i] = self._einsum(spec, operands).ravel()
        return B


def assemble_A(t, table: MomentTable, basis: SeparableBasis) -> np.ndarray:
    """``A(t)`` for one time; build a :class:`SpectralAssembler` once for many times."""
    return SpectralAssembler(basis, table).A(t)


def assemble_B(t, table: MomentTable, basis: SeparableBasis) -> np.ndarray:
    return SpectralAssembler(basis, table).B(t)


def em_moments(samples_t, basis: SeparableBasis, grad_potential=None):
    """Direct Monte Carlo ``A``, ``B`` and their standard errors from samples of ``rho_t``.

    Returns
    -------
    A, B, A_se, B_se : ndarray
    """
    X = as_array(samples_t)
    N = X.shape[0]
    S = basis.S
    sA = np.zeros((len(S), len(S)))
    sA2 = np.zeros_like(sA)
    sB = np.zeros((len(S), basis.d))
    sB2 = np.zeros_like(sB)
    for lo, hi in _chunks(N, len(S) ** 2 // 16 + len(S)):
        Xc = X[lo:hi]
        Phi = basis.phi(Xc, basis.n + 1)
        dPhi = basis.dphi(Xc)
        F = basis.design(Phi)
        sA += F.T @ F
        F2 = F * F
        sA2 += F2.T @ F2
        gV = basis.grad_potential(Xc) if grad_potential is None else grad_potential(Xc)
        for i in range(basis.d):
            g = basis.design_grad(Phi, dPhi, i) - basis.beta * F * gV[:, i : i + 1]
            sB[:, i] += g.sum(axis=0)
            sB2[:, i] += (g * g).sum(axis=0)
    A = sA / N
    B = sB / N
    A_se = np.sqrt(np.maximum(sA2 / N - A**2, 0.0) / N)
    B_se = np.sqrt(np.maximum(sB2 / N - B**2, 0.0) / N)
    return A, B, A_se, B_se


def assemble_A_em(samples_t, basis: SeparableBasis) -> np.ndarray:
    """Baseline ``A`` estimated directly from samples of ``rho_t``."""
    return em_moments(samples_t, basis)[0]


def assemble_B_em(samples_t, basis: SeparableBasis, grad_potential=None) -> np.ndarray:
    return em_moments(samples_t, basis, grad_potential)[1]
