"""Grid, quadrature, spectral operators and the zero-flux splitting."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy.integrate import quad

from willmore.halfsphere import (
    HalfSphereGrid,
    HarmonicIndex,
    SphereFunction,
    boundary_integrate,
    default_grid,
    gradient,
    integrate,
    laplace_beltrami,
    normal_derivative_equator,
    solve_neumann_complement,
    spherical_harmonic,
    split_zero_flux,
)

# ---------------------------------------------------------------------------
# grid invariants and quadrature
# ---------------------------------------------------------------------------


def test_grid_invariants(grid):
    assert grid.n_phi % 2 == 0
    assert np.all(np.diff(grid.theta_nodes) > 0)
    assert grid.theta_nodes[0] > 0
    assert grid.theta_nodes[-1] < np.pi / 2
    one = SphereFunction.constant(grid, 1.0)
    assert abs(integrate(one) - 2 * np.pi) < 1e-12


def test_grid_rejects_odd_nphi():
    with pytest.raises(ValueError):
        HalfSphereGrid.build(16, 31)


def test_integrate_height():
    # oracle: 1-D quadrature of the zonal profile times the azimuth factor
    oracle, err = quad(lambda t: np.cos(t) * np.sin(t), 0.0, np.pi / 2)
    oracle *= 2 * np.pi
    assert err < 1e-12
    g = default_grid()
    f = SphereFunction.from_callable(g, lambda th, ph: np.cos(th))
    assert abs(integrate(f) - oracle) < 1e-12
    assert abs(oracle - np.pi) < 1e-12


def test_integrate_odd_azimuth(grid):
    f = SphereFunction.from_callable(grid, lambda th, ph: np.sin(th) * np.cos(ph))
    assert abs(integrate(f)) < 1e-13


@settings(max_examples=20, deadline=None)
@given(degree=st.integers(min_value=0, max_value=63), seed=st.integers(0, 2**31))
def test_quadrature_polynomial_exactness(degree, seed):
    # Gauss-Legendre in cos(theta): exact for polynomial degree <= 2 n - 1
    g = default_grid()
    coeffs = np.random.default_rng(seed).standard_normal(degree + 1)
    poly = np.polynomial.Polynomial(coeffs)
    f = SphereFunction(g, np.broadcast_to(poly(g.u)[:, None], (g.n_theta, g.n_phi)).copy())
    exact = 2 * np.pi * (poly.integ()(1.0) - poly.integ()(0.0))
    assert abs(integrate(f) - exact) <= 1e-12 * max(1.0, abs(exact))


def test_boundary_integrate(grid):
    one = SphereFunction.constant(grid, 1.0)
    assert abs(boundary_integrate(one) - 2 * np.pi) < 1e-12

    # <omega, e1>^2 restricted to the equator is cos^2(phi)
    oracle, _ = quad(lambda p: np.cos(p) ** 2, 0.0, 2 * np.pi)
    f = SphereFunction.from_callable(
        grid, lambda th, ph: (np.sin(th) * np.cos(ph)) ** 2
    )
    assert abs(boundary_integrate(f) - oracle) < 1e-12

    h = SphereFunction.from_callable(grid, lambda th, ph: np.cos(th))
    assert abs(boundary_integrate(h)) < 1e-12


# ---------------------------------------------------------------------------
# Laplace-Beltrami, gradient, normal derivative
# ---------------------------------------------------------------------------


def even_indices(k_max):
    out = []
    for k in range(k_max + 1):
        for m in range(-k, k + 1):
            if (k - abs(m)) % 2 == 0:
                out.append((k, m))
    return out


@pytest.mark.parametrize("k,m", even_indices(8))
def test_laplace_eigenfunctions(grid, k, m):
    y = spherical_harmonic(grid, k, m)
    lap = laplace_beltrami(y)
    scale = np.max(np.abs(y.values))
    err = np.max(np.abs(lap.values + k * (k + 1) * y.values))
    assert err <= 1e-8 * max(scale * k * (k + 1), 1.0), f"k={k} m={m}: {err}"


def test_laplace_trivial(grid):
    one = SphereFunction.constant(grid, 1.0)
    # floor ~ eps * ||D2|| from cancellation in the clustered-node rows
    assert np.max(np.abs(laplace_beltrami(one).values)) < 1e-9
    h = SphereFunction.from_callable(grid, lambda th, ph: np.cos(th))
    assert_allclose(laplace_beltrami(h).values, -2 * h.values, atol=1e-11)


def test_gradient_basic(grid):
    one = SphereFunction.constant(grid, 1.0)
    gt, gp = gradient(one)
    assert np.max(np.abs(gt.values)) < 1e-12
    assert np.max(np.abs(gp.values)) < 1e-12

    h = SphereFunction.from_callable(grid, lambda th, ph: np.cos(th))
    gt, gp = gradient(h)
    mag = np.sqrt(gt.values**2 + gp.values**2)
    assert_allclose(mag, np.sin(grid.theta_nodes)[:, None] * np.ones(grid.n_phi), atol=1e-11)


def test_gradient_dirichlet_energy(grid):
    # eigenvalue 6 = 2*3 for degree 2; halved domain with even reflection factor 2
    y = spherical_harmonic(grid, 2, 0)
    gt, gp = gradient(y)
    dirichlet = 2 * integrate(SphereFunction(grid, gt.values**2 + gp.values**2))
    norm2 = 2 * integrate(SphereFunction(grid, y.values**2))
    assert abs(dirichlet - 6 * norm2) < 1e-10


def test_normal_derivative(grid):
    for k, m in [(2, 0), (4, 2), (6, -4)]:
        y = spherical_harmonic(grid, k, m)
        nd = normal_derivative_equator(y)
        assert np.max(np.abs(nd)) < 1e-9, f"even harmonic ({k},{m})"

    h = SphereFunction.from_callable(grid, lambda th, ph: np.cos(th))
    assert_allclose(normal_derivative_equator(h), np.ones(grid.n_phi), atol=1e-11)

    one = SphereFunction.constant(grid, 3.5)
    assert np.max(np.abs(normal_derivative_equator(one))) < 1e-12


def test_green_identity(grid, rng):
    # int f Lap g + int <grad f, grad g> = - closed-int f dg/deta
    f = _random_smooth(grid, rng)
    g = _random_smooth(grid, rng)
    lhs = integrate(SphereFunction(grid, f.values * laplace_beltrami(g).values))
    ft, fp = gradient(f)
    gt, gp = gradient(g)
    lhs += integrate(SphereFunction(grid, ft.values * gt.values + fp.values * gp.values))
    fb = grid.boundary_value(f.values)
    flux = grid.boundary_integrate_values(fb * normal_derivative_equator(g))
    assert abs(lhs + flux) < 1e-9


def _random_smooth(grid, rng, k_max=6):
    vals = np.zeros((grid.n_theta, grid.n_phi))
    for k in range(k_max + 1):
        for m in range(-k, k + 1):
            vals += rng.normal(scale=1.0 / (1 + k) ** 2) * spherical_harmonic(grid, k, m).values
    return SphereFunction(grid, vals)


# ---------------------------------------------------------------------------
# eigenvalue identity and coercivity of the constrained bilinear form
# ---------------------------------------------------------------------------


def _bilinear(grid, u, v):
    """2 * int_{half} (Lap u Lap v - 2 <grad u, grad v>) = full-sphere value."""
    lu, lv = laplace_beltrami(u), laplace_beltrami(v)
    ut, up = gradient(u)
    vt, vp = gradient(v)
    val = integrate(SphereFunction(grid, lu.values * lv.values
                                   - 2 * (ut.values * vt.values + up.values * vp.values)))
    return 2 * val


def test_eigenvalue_identity(grid):
    idx = even_indices(6)
    for k, m in idx:
        for l, mm in idx:
            u = spherical_harmonic(grid, k, m)
            v = spherical_harmonic(grid, l, mm)
            lhs = _bilinear(grid, u, v)
            inner = 2 * integrate(SphereFunction(grid, u.values * v.values))
            rhs = k * (k + 1) * (l * (l + 1) - 2) * inner
            assert abs(lhs - rhs) <= 1e-6 * max(1.0, abs(rhs)), (k, m, l, mm)


def test_coercivity_spot_check(grid, rng):
    # random even combination of degrees 2..6
    vals = np.zeros((grid.n_theta, grid.n_phi))
    for k in range(2, 7):
        for m in range(-k, k + 1):
            if (k - abs(m)) % 2 == 0:
                vals += rng.normal() * spherical_harmonic(grid, k, m).values
    u = SphereFunction(grid, vals)
    lap = laplace_beltrami(u)
    lhs = 2 * integrate(SphereFunction(grid, lap.values**2 + u.values**2))
    quad_form = _bilinear(grid, u, u)
    assert lhs <= (37.0 / 12.0) * quad_form * (1 + 1e-10)


# ---------------------------------------------------------------------------
# zero-flux splitting and the Neumann complement solve
# ---------------------------------------------------------------------------


def test_split_even_harmonic(grid):
    w = spherical_harmonic(grid, 4, 2)
    u, v = split_zero_flux(w)
    assert np.max(np.abs(v.values)) < 1e-9
    assert_allclose(u.values, w.values, atol=1e-9)


def test_split_constant(grid):
    w = SphereFunction.constant(grid, 1.0)
    u, v = split_zero_flux(w)
    assert np.max(np.abs(v.values)) < 1e-10
    assert_allclose(u.values, 1.0, atol=1e-10)


def test_split_cos_theta(grid):
    w = SphereFunction.from_callable(grid, lambda th, ph: np.cos(th))
    u, v = split_zero_flux(w)
    assert_allclose(u.values + v.values, w.values, atol=1e-8)
    assert np.max(np.abs(normal_derivative_equator(u))) < 1e-8
    assert abs(integrate(v)) < 1e-8


def test_split_idempotent(grid, rng):
    w = _random_smooth(grid, rng)
    # break the even symmetry so the flux is nonzero
    w = SphereFunction(grid, w.values + 0.3 * np.cos(grid.theta_nodes)[:, None])
    u, v = split_zero_flux(w)
    u2, v2 = split_zero_flux(u)
    assert np.max(np.abs(v2.values)) < 1e-10
    assert_allclose(u2.values, u.values, atol=1e-10)


def test_neumann_zero(grid):
    v = solve_neumann_complement(grid, np.zeros(grid.n_phi))
    assert np.max(np.abs(v.values)) < 1e-13


def test_neumann_constant_flux(grid):
    v = solve_neumann_complement(grid, np.ones(grid.n_phi))
    flux = grid.boundary_integrate_values(normal_derivative_equator(v))
    assert abs(flux - 2 * np.pi) < 1e-8
    assert abs(integrate(v)) < 1e-8
    # Delta v should equal the compatibility constant -1/(2pi) * flux = -1
    lap = laplace_beltrami(v)
    assert_allclose(lap.values, -1.0, atol=1e-7)


def test_neumann_mode_one(grid):
    beta = np.cos(grid.phi)
    v = solve_neumann_complement(grid, beta)
    modes = np.abs(v.modes)
    support = np.zeros(modes.shape[1], dtype=bool)
    support[1] = True
    assert np.max(modes[:, ~support]) < 1e-10
    assert_allclose(normal_derivative_equator(v), beta, atol=1e-8)
    assert np.max(np.abs(laplace_beltrami(v).values)) < 1e-7


# ---------------------------------------------------------------------------
# types
# ---------------------------------------------------------------------------


def test_harmonic_index_parity():
    assert HarmonicIndex(4, 2).parity == "even"
    with pytest.raises(ValueError):
        HarmonicIndex(3, 2, parity="even")
    assert HarmonicIndex(3, 2, parity="odd").eigenvalue == 12.0


def test_sphere_function_rejects_nonfinite(grid):
    vals = np.zeros((grid.n_theta, grid.n_phi))
    vals[0, 0] = np.nan
    with pytest.raises(ValueError):
        SphereFunction(grid, vals)


def test_interpolation_exact_on_class(grid):
    fine = default_grid(48, 96)
    y = spherical_harmonic(grid, 5, 3)
    y_fine = grid.interpolate_to(y.values, fine)
    ref = spherical_harmonic(fine, 5, 3)
    assert_allclose(y_fine, ref.values, atol=1e-11)
