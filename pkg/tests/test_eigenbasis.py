import math

import numpy as np
import pytest
from numpy.polynomial.hermite_e import hermegauss

from ofdiffusion.eigenbasis import (
    EigenbasisError,
    build_fourier_basis,
    build_hermite_basis,
    build_numeric_basis,
    eval_basis,
    expansion_coeffs,
    system_from_descriptor,
)


def gauss_hermite_inner(sys, npts=80):
    """Gram matrix of a hermite system under N(0, 1/(alpha beta)) by quadrature."""
    y, wq = hermegauss(npts)
    x = y / math.sqrt(sys.alpha * sys.beta)
    F = sys.evaluate(x)
    return (F * (wq / wq.sum())[:, None]).T @ F


def fd_spectrum(vprime, beta, lo, hi, npts, count):
    """Plain (non-symmetrized) centered-difference spectrum of the generator."""
    x = np.linspace(lo, hi, npts)
    h = x[1] - x[0]
    main = np.full(npts, -2.0 / (beta * h**2))
    up = 1.0 / (beta * h**2) - vprime(x[:-1]) / (2 * h)
    down = 1.0 / (beta * h**2) + vprime(x[1:]) / (2 * h)
    M = np.diag(main) + np.diag(up, 1) + np.diag(down, -1)
    # reflecting ends: ghost point mirrors the interior neighbour
    M[0, 1] = 2.0 / (beta * h**2)
    M[-1, -2] = 2.0 / (beta * h**2)
    ev = np.linalg.eigvals(M).real
    return np.sort(ev)[::-1][:count]


class TestHermite:
    def test_constant_mode(self):
        sys = build_hermite_basis(1.0, 1.0, 6)
        assert sys.eigenvalues[0] == 0.0
        assert np.all(sys.evaluate(np.linspace(-3, 3, 11))[:, 0] == 1.0)

    def test_lambda3_matches_fd_eigensolve(self):
        sys = build_hermite_basis(1.0, 1.0, 6)
        fd = fd_spectrum(lambda x: x, 1.0, -10, 10, 1601, 5)
        assert sys.eigenvalues[3] == -3.0
        assert abs(fd[3] - sys.eigenvalues[3]) < 1e-3

    @pytest.mark.parametrize("alpha,beta", [(1.0, 1.0), (0.5, 2.0), (3.0, 0.25)])
    def test_orthonormal_by_gauss_hermite(self, alpha, beta):
        sys = build_hermite_basis(alpha, beta, 12)
        G = gauss_hermite_inner(sys)
        assert abs(G[2, 3]) < 1e-12
        assert np.max(np.abs(G - np.eye(12))) < 1e-8

    def test_eval_k1_at_2(self):
        sys = build_hermite_basis(1.0, 1.0, 3)
        assert eval_basis(sys, 1, 2.0) == pytest.approx(2.0)

    def test_bad_params(self):
        with pytest.raises(EigenbasisError):
            build_hermite_basis(0.0, 1.0, 3)
        with pytest.raises(EigenbasisError):
            build_hermite_basis(1.0, -1.0, 3)

    def test_f1_squared_support(self):
        sys = build_hermite_basis(1.0, 1.0, 5)
        ec = expansion_coeffs(sys, 2)
        nz = np.flatnonzero(np.abs(ec.u[1, 1]) > 1e-14)
        assert list(nz) == [0, 2]
        # quadrature projection oracle
        y, wq = hermegauss(40)
        F = sys.evaluate(y)
        proj = (wq / wq.sum() * F[:, 1] ** 2) @ F
        np.testing.assert_allclose(ec.u[1, 1], proj[: ec.m], atol=1e-12)

    def test_derivative_vs_finite_difference(self):
        sys = build_hermite_basis(1.0, 1.0, 7)
        ec = expansion_coeffs(sys, 3)
        x0, h = 0.7, 1e-5
        fd = (eval_basis(sys, 2, x0 + h) - eval_basis(sys, 2, x0 - h)) / (2 * h)
        recon = ec.v[2] @ sys.evaluate([x0], ec.m)[0]
        assert abs(recon - fd) < 1e-8

    def test_potential_gradient_on_f1(self):
        sys = build_hermite_basis(2.0, 0.5, 9)
        ec = expansion_coeffs(sys, 4)
        x = np.linspace(-2, 2, 17)
        np.testing.assert_allclose(sys.evaluate(x, ec.m) @ ec.q, sys.grad_potential(x), atol=1e-12)
        assert np.count_nonzero(ec.q) == 1


@pytest.mark.parametrize("family", ["hermite", "fourier"])
def test_exact_expansions_pointwise(family):
    n = 6
    if family == "hermite":
        sys = build_hermite_basis(1.3, 0.7, 2 * n + 1)
        x = np.random.default_rng(0).normal(scale=1.0, size=100)
    else:
        sys = build_fourier_basis(2.5, 0.5, 4 * ((n + 1) // 2) + 1)
        x = np.random.default_rng(0).uniform(-2.5, 2.5, size=100)
    ec = expansion_coeffs(sys, n)
    F = sys.evaluate(x, ec.m)
    Fn = F[:, : n + 1]
    prod = Fn[:, :, None] * Fn[:, None, :]
    recon = np.einsum("abl,jl->jab", ec.u, F)
    scale = max(1.0, np.max(np.abs(prod)))
    assert np.max(np.abs(prod - recon)) <= 1e-10 * scale
    dF = sys.derivative(x, n + 1)
    np.testing.assert_allclose(F @ ec.v.T, dF, atol=1e-10 * max(1, np.abs(dF).max()))
    np.testing.assert_allclose(F @ ec.w.T, Fn * sys.grad_potential(x)[:, None], atol=1e-10 * scale)
    assert ec.max_residual == 0.0


class TestFourier:
    def test_constant(self):
        sys = build_fourier_basis(5.0, 0.25, 5)
        assert sys.eigenvalues[0] == 0.0

    def test_cos1_eigenvalue(self):
        sys = build_fourier_basis(5.0, 0.25, 5)
        assert sys.eigenvalues[1] == pytest.approx(-4 * (math.pi / 5) ** 2, rel=1e-14)
        assert sys.eigenvalues[1] == pytest.approx(-1.5791, abs=1e-4)
        assert sys.eigenvalues[1] == sys.eigenvalues[2]

    def test_cos_sin_orthogonal(self):
        sys = build_fourier_basis(3.0, 1.0, 9)
        x = np.linspace(-3, 3, 2048, endpoint=False)  # periodic trapezoid is exact here
        F = sys.evaluate(x)
        G = F.T @ F / x.size
        assert abs(G[1, 2]) < 1e-14
        assert np.max(np.abs(G - np.eye(9))) < 1e-8

    def test_eval_cos1_at_zero(self):
        sys = build_fourier_basis(math.pi, 1.0, 3)
        assert eval_basis(sys, 1, 0.0) == pytest.approx(math.sqrt(2))

    def test_q_zero(self):
        ec = expansion_coeffs(build_fourier_basis(3.0, 0.5, 25), 11)
        assert not np.any(ec.q)
        assert not np.any(ec.w)

    def test_ordering(self):
        sys = build_fourier_basis(2.0, 0.5, 21)
        assert np.all(np.diff(np.abs(sys.eigenvalues)) >= 0)
        assert np.all(sys.eigenvalues <= 0)

    def test_too_few_stored(self):
        with pytest.raises(EigenbasisError):
            expansion_coeffs(build_fourier_basis(3.0, 0.5, 10), 5)


class TestNumeric:
    def test_quadratic_matches_ou(self):
        grid = np.linspace(-9, 9, 4001)
        num = build_numeric_basis(lambda x: 0.5 * x**2, 1.0, grid, 8)
        np.testing.assert_allclose(num.eigenvalues[:6], -np.arange(6), atol=1e-4)
        her = build_hermite_basis(1.0, 1.0, 8)
        Fh = her.evaluate(grid)
        for k in range(6):
            diff = np.minimum(np.abs(num.table[:, k] - Fh[:, k]), np.abs(num.table[:, k] + Fh[:, k]))
            assert math.sqrt(num.weights @ diff**2) < 1e-3

    def test_clamped_constant(self):
        grid = np.linspace(-3, 3, 801)
        num = build_numeric_basis(lambda x: np.cos(2 * x) + 0.3 * x**4, 1.0, grid, 5)
        assert num.eigenvalues[0] == 0.0
        assert np.all(num.evaluate(np.linspace(-3, 3, 7))[:, 0] == 1.0)

    def test_double_well_nonpositive_and_orthonormal(self):
        grid = np.linspace(-3.5, 3.5, 2001)
        num = build_numeric_basis(lambda x: (1 - x**2) ** 2 / 4, 2.0, grid, 12)
        assert np.all(num.eigenvalues <= 0)
        assert np.all(np.diff(np.abs(num.eigenvalues)) >= 0)
        G = (num.table * num.weights[:, None]).T @ num.table
        assert np.max(np.abs(G - np.eye(12))) < 1e-6
        # double-well has a small first gap (metastable switching)
        assert abs(num.eigenvalues[1]) < abs(num.eigenvalues[2]) / 3

    def test_outside_domain_rejected(self):
        grid = np.linspace(-4, 4, 401)
        with pytest.warns(RuntimeWarning, match="boundary"):
            num = build_numeric_basis(lambda x: 0.5 * x**2, 1.0, grid, 4)
        with pytest.raises(EigenbasisError):
            num.evaluate([4.5])
        assert num.evaluate([4.5], clip=True).shape == (1, 4)

    def test_expansion_residuals_recorded(self):
        grid = np.linspace(-9, 9, 4001)
        poly = np.array([0.0, 0.0, 0.5])
        num = build_numeric_basis(lambda x: 0.5 * x**2, 1.0, grid, 9, poly=poly)
        ec = expansion_coeffs(num, 4)
        her = expansion_coeffs(build_hermite_basis(1.0, 1.0, 9), 4)
        assert ec.status == "ok"
        assert ec.max_residual < 1e-3
        # up to eigenvector signs, which are fixed identically for both families
        np.testing.assert_allclose(ec.u, her.u, atol=5e-3)
        np.testing.assert_allclose(ec.q, her.q, atol=1e-4)

    def test_bad_grid(self):
        with pytest.raises(EigenbasisError):
            build_numeric_basis(lambda x: x**2, 1.0, np.array([0.0, 1.0, 3.0]), 2)
        with pytest.raises(EigenbasisError):
            build_numeric_basis(lambda x: x**2, 1.0, np.linspace(-1, 1, 5), 6)

    def test_coarse_grid_reports_residual(self):
        # the eigen-residual test runs against the same discrete operator, so a
        # deliberately tight tolerance must trip the diagnostic
        grid = np.linspace(-5, 5, 51)
        with pytest.raises(EigenbasisError, match="residual"):
            build_numeric_basis(lambda x: 0.5 * x**2, 1.0, grid, 6, residual_tol=1e-20)


@pytest.mark.parametrize("make", [
    lambda: build_hermite_basis(1.5, 0.5, 7),
    lambda: build_fourier_basis(4.0, 0.5, 7),
    lambda: build_numeric_basis(lambda x: 0.5 * x**2 + 0.1 * x**4, 1.0, np.linspace(-5, 5, 1001), 7,
                                poly=np.array([0, 0, 0.5, 0, 0.1])),
])
def test_descriptor_roundtrip(make):
    sys = make()
    back = system_from_descriptor(sys.descriptor())
    x = np.linspace(-2, 2, 13)
    np.testing.assert_array_equal(sys.evaluate(x), back.evaluate(x))
    np.testing.assert_array_equal(sys.eigenvalues, back.eigenvalues)
