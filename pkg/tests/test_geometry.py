"""Radial-graph geometry: metric, normal, curvatures, energy, variations."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from willmore.ambient import ConformalMetric, EuclideanMetric, ball, make_chart, pullback_metric
from willmore.errors import ImmersionError
from willmore.geometry import (
    ImmersedSurface,
    area,
    boundary_trace,
    first_variation_willmore,
    induced_metric,
    mean_curvature,
    radial_graph,
    surface_laplacian,
    translated_hemisphere_graph,
    unit_normal,
    willmore_energy,
    willmore_operator,
)
from willmore.halfsphere import (
    SphereFunction,
    integrate,
    laplace_beltrami,
    spherical_harmonic,
)


def round_surface(grid, metric=None, radius=1.0):
    return radial_graph(SphereFunction.constant(grid, radius - 1.0),
                        metric or EuclideanMetric())


def small_graph(grid, scale=0.01, seed=3):
    rng = np.random.default_rng(seed)
    vals = np.zeros((grid.n_theta, grid.n_phi))
    for k in range(5):
        for m in range(-k, k + 1):
            vals += rng.normal(scale=scale / (1 + k) ** 2) \
                * spherical_harmonic(grid, k, m).values
    return SphereFunction(grid, vals)


def perturbed_metric(lam=0.1):
    chart = make_chart(ball(1.0), (0.0, 0.0, -1.0))
    return pullback_metric(chart, lam)


# ---------------------------------------------------------------------------
# induced metric / area
# ---------------------------------------------------------------------------


def test_induced_metric_round(grid):
    surf = round_surface(grid)
    g = induced_metric(surf)
    s2 = np.sin(grid.theta_nodes)[:, None] ** 2
    assert_allclose(g[..., 0, 0], 1.0, atol=1e-13)
    assert_allclose(g[..., 0, 1], 0.0, atol=1e-13)
    assert_allclose(g[..., 1, 1], s2 * np.ones(grid.n_phi), atol=1e-13)
    assert_allclose(surf.area_element, 1.0, atol=1e-13)


def test_induced_metric_dilation(grid):
    lam = 0.8
    surf = round_surface(grid, radius=lam)
    g = induced_metric(surf)
    assert_allclose(g[..., 0, 0], lam**2, atol=1e-12)
    assert abs(area(surf) - 2 * np.pi * lam**2) < 1e-12


def test_induced_metric_embedding_oracle(grid):
    # oracle: analytic closed-form graph, tangents by tiny central differences
    # of the exact embedding (independent of the spectral machinery)
    a = np.array([0.07, -0.04])

    def embed(th, ph):
        th, ph = np.broadcast_arrays(th, ph)
        om = np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph),
                       np.cos(th)], axis=-1)
        dot = om[..., 0] * a[0] + om[..., 1] * a[1]
        w = dot - 1.0 + np.sqrt(1.0 - a @ a + dot**2)
        return (1.0 + w)[..., None] * om

    w = translated_hemisphere_graph(grid, a)
    surf = radial_graph(w, EuclideanMetric())
    th = grid.theta_nodes[:, None]
    ph = grid.phi[None, :]
    h = 1e-5
    ft = (embed(th + h, ph) - embed(th - h, ph)) / (2 * h)
    fp = (embed(th, ph + h) - embed(th, ph - h)) / (2 * h)
    g = induced_metric(surf)
    assert_allclose(g[..., 0, 0], np.einsum("tpi,tpi->tp", ft, ft), atol=1e-6)
    assert_allclose(g[..., 0, 1], np.einsum("tpi,tpi->tp", ft, fp), atol=1e-6)
    assert_allclose(g[..., 1, 1], np.einsum("tpi,tpi->tp", fp, fp), atol=1e-6)


def test_immersion_failure_detected(grid):
    with pytest.raises(ImmersionError):
        radial_graph(SphereFunction.constant(grid, -0.9999999), EuclideanMetric())


# ---------------------------------------------------------------------------
# normal
# ---------------------------------------------------------------------------


def test_normal_round(grid):
    surf = round_surface(grid)
    omega = grid.nodes_cartesian()
    assert_allclose(unit_normal(surf), -omega, atol=1e-13)


def test_normal_dilation_direction(grid):
    surf = round_surface(grid, radius=0.6)
    omega = grid.nodes_cartesian()
    assert_allclose(unit_normal(surf), -omega, atol=1e-12)


def test_normal_orthogonality_perturbed_metric(grid):
    metric = perturbed_metric(0.1)
    surf = radial_graph(small_graph(grid), metric)
    nu = unit_normal(surf)
    G = metric.value(surf.position)
    unit = np.einsum("tpi,tpij,tpj->tp", nu, G, nu)
    assert np.max(np.abs(unit - 1.0)) < 1e-12
    for t in (surf.f_t, surf.f_p):
        ortho = np.einsum("tpi,tpij,tpj->tp", nu, G, t)
        assert np.max(np.abs(ortho)) < 1e-10


def test_normal_matches_cross_product_construction(grid):
    metric = perturbed_metric(0.1)
    w = small_graph(grid)
    surf = radial_graph(w, metric)
    generic = ImmersedSurface(grid, surf.position, metric)
    assert_allclose(surf.nu, generic.nu, atol=1e-11)


# ---------------------------------------------------------------------------
# mean curvature / Willmore operator
# ---------------------------------------------------------------------------


def test_mean_curvature_round(grid):
    surf = round_surface(grid)
    assert_allclose(mean_curvature(surf).values, 2.0, atol=1e-13)


def test_mean_curvature_scaling(grid):
    lam = 0.55
    surf = round_surface(grid, radius=lam)
    assert_allclose(mean_curvature(surf).values, 2.0 / lam, atol=1e-11)


def test_mean_curvature_linearization(grid):
    # radial perturbation w = eps*Y20 changes H at rate -(Delta+2)Y20 = +4 Y20
    # (anchor: pure dilation w = eps gives H = 2/(1+eps), slope -2 = -(Delta+2) 1)
    y = spherical_harmonic(grid, 2, 0)
    eps = 1e-5
    hp = radial_graph(SphereFunction(grid, eps * y.values), EuclideanMetric())
    hm = radial_graph(SphereFunction(grid, -eps * y.values), EuclideanMetric())
    slope = (hp.mean_curvature_field - hm.mean_curvature_field) / (2 * eps)
    assert np.max(np.abs(slope - 4.0 * y.values)) < 1e-5


def test_willmore_operator_round_and_dilated(grid):
    assert np.max(np.abs(willmore_operator(round_surface(grid)).values)) < 1e-9
    assert np.max(np.abs(willmore_operator(round_surface(grid, radius=1.3)).values)) < 1e-9


def test_willmore_operator_linearization(grid):
    # w = eps*Y40: the radial linearization is -Delta(Delta+2), eigenvalue
    # lambda_4 (lambda_4 - 2) = 360 with the radial sign convention
    y = spherical_harmonic(grid, 4, 0)
    eps = 1e-4
    wp = radial_graph(SphereFunction(grid, eps * y.values), EuclideanMetric())
    wm = radial_graph(SphereFunction(grid, -eps * y.values), EuclideanMetric())
    slope = (wp.willmore_field - wm.willmore_field) / (2 * eps)
    assert np.max(np.abs(slope + 360.0 * y.values)) / 360.0 < 1e-4


# ---------------------------------------------------------------------------
# energy / area variations
# ---------------------------------------------------------------------------


def test_willmore_energy_round(grid):
    assert abs(willmore_energy(round_surface(grid)) - 2 * np.pi) < 1e-12


def test_willmore_energy_scale_invariant(grid):
    for lam in (0.5, 1.5):
        assert abs(willmore_energy(round_surface(grid, radius=lam)) - 2 * np.pi) < 1e-11


def test_willmore_energy_quadratic_growth(grid):
    y = spherical_harmonic(grid, 2, 0)
    eps_list = np.array([0.02, 0.01, 0.005])
    excess = []
    for eps in eps_list:
        surf = radial_graph(SphereFunction(grid, eps * y.values), EuclideanMetric())
        excess.append(willmore_energy(surf) - 2 * np.pi)
    excess = np.array(excess)
    assert np.all(excess > 0)
    slope = np.polyfit(np.log(eps_list), np.log(excess), 1)[0]
    assert abs(slope - 2.0) < 0.1


def test_area_first_variation(grid):
    # d/dt Area(f + t phi nu) = -int H phi dmu  (vararea)
    w = small_graph(grid)
    metric = EuclideanMetric()
    surf = radial_graph(w, metric)
    phi = spherical_harmonic(grid, 3, 1).values * 0.7
    t = 1e-5
    up = ImmersedSurface(grid, surf.position + t * phi[..., None] * surf.nu, metric)
    dn = ImmersedSurface(grid, surf.position - t * phi[..., None] * surf.nu, metric)
    fd = (up.area_value - dn.area_value) / (2 * t)
    analytic = -surf.integrate(surf.mean_curvature_field * phi)
    assert abs(fd - analytic) < 1e-6


# ---------------------------------------------------------------------------
# boundary trace
# ---------------------------------------------------------------------------


def test_boundary_trace_round_flat(grid):
    b = boundary_trace(round_surface(grid))
    assert np.max(np.abs(b.orthogonality)) < 1e-12
    assert np.max(np.abs(b.dH_deta)) < 1e-11
    assert np.max(np.abs(b.h_plane_nu_nu)) < 1e-13
    # the equator is a geodesic of the half-sphere: kappa_g = 0, consistent
    # with kappa_g = h^S(tau, tau) for the flat supporting plane
    assert np.max(np.abs(b.kappa_g)) < 1e-11
    # h = g on the unit sphere: h(tau, tau) = 1, h(tau, eta) = 0
    assert np.max(np.abs(b.h_tau_tau - 1.0)) < 1e-11
    assert np.max(np.abs(b.h_tau_eta)) < 1e-11
    # tau is unit and tangent to the plane
    assert_allclose(np.linalg.norm(b.tau, axis=1), 1.0, atol=1e-12)
    assert np.max(np.abs(b.tau[:, 2])) < 1e-12


def test_boundary_trace_translated_graph(grid):
    # graph of a horizontally translated half-sphere still meets the plane
    # orthogonally, with H = 2 and vanishing natural-bc residual
    for eps in (0.02, 0.05):
        w = translated_hemisphere_graph(grid, np.array([eps, 0.0]))
        b = boundary_trace(radial_graph(w, EuclideanMetric()))
        assert np.max(np.abs(b.orthogonality)) < 1e-8, eps
        assert np.max(np.abs(b.H - 2.0)) < 1e-8
        assert np.max(np.abs(b.natural_bc)) < 1e-7


def test_boundary_trace_flat_plane_form_zero(grid):
    surf = radial_graph(small_graph(grid), EuclideanMetric())
    b = boundary_trace(surf)
    assert np.max(np.abs(b.h_plane_nu_nu)) < 1e-13


def test_geodesic_curvature_convention(grid):
    # shrink the graph near the boundary: the boundary circle of a spherical
    # cap smaller than a half-sphere curves toward the pole, kappa_g > 0
    cap = radial_graph(SphereFunction.from_callable(
        grid, lambda th, ph: 0.05 * np.cos(th)), EuclideanMetric())
    b = boundary_trace(cap)
    assert np.all(np.abs(b.kappa_g - np.mean(b.kappa_g)) < 1e-8)
    # oracle for r(theta) = 1 + eps cos(theta): unit boundary circle with
    # curvature vector -e_r, conormal (eps e_r + e_3)/sqrt(1+eps^2), so
    # kappa_g = -eps/sqrt(1+eps^2); sign anchor: flat unit disk has kappa_g = +1
    for eps in (0.03, 0.05):
        cap_e = radial_graph(SphereFunction.from_callable(
            grid, lambda th, ph: eps * np.cos(th)), EuclideanMetric())
        expected = -eps / np.sqrt(1.0 + eps**2)
        assert np.max(np.abs(boundary_trace(cap_e).kappa_g - expected)) < 1e-9


# ---------------------------------------------------------------------------
# scaling laws
# ---------------------------------------------------------------------------


def test_scaling_laws(grid):
    w = small_graph(grid)
    lam = 0.65
    surf1 = radial_graph(w, EuclideanMetric())
    w_scaled = SphereFunction(grid, lam * (1.0 + w.values) - 1.0)
    surf2 = radial_graph(w_scaled, EuclideanMetric())
    assert_allclose(surf2.mean_curvature_field, surf1.mean_curvature_field / lam,
                    atol=1e-9)
    # tolerance set by the pointwise fourth-order evaluation floor at n = 32
    assert_allclose(surf2.willmore_field, surf1.willmore_field / lam**3, atol=2e-4)
    assert abs(surf2.willmore_energy_value - surf1.willmore_energy_value) < 1e-9
    assert abs(surf2.area_value - lam**2 * surf1.area_value) < 1e-10


# ---------------------------------------------------------------------------
# first variation of the Willmore energy
# ---------------------------------------------------------------------------


def test_first_variation_zero_flux_round(grid):
    surf = round_surface(grid)
    phi = spherical_harmonic(grid, 4, 2)   # even harmonic: dphi/deta = 0
    val = first_variation_willmore(surf, phi)
    assert abs(val) < 1e-9


def test_first_variation_normal_fd(grid):
    w = small_graph(grid)
    metric = EuclideanMetric()
    surf = radial_graph(w, metric)
    phi = SphereFunction.from_callable(grid, lambda th, ph: np.cos(th))
    analytic = first_variation_willmore(surf, phi)
    t = 1e-4
    up = ImmersedSurface(grid, surf.position + t * phi.values[..., None] * surf.nu, metric)
    dn = ImmersedSurface(grid, surf.position - t * phi.values[..., None] * surf.nu, metric)
    fd = (up.willmore_energy_value - dn.willmore_energy_value) / (2 * t)
    assert abs(fd - analytic) < 1e-5


def test_first_variation_tangential(grid):
    # pure tangential field with g(xi, eta) = 0 on the boundary: zero variation
    surf = round_surface(grid)
    zero = SphereFunction.constant(grid, 0.0)
    xi_phi = SphereFunction.constant(grid, 0.3)
    val = first_variation_willmore(surf, zero, xi=(zero, xi_phi))
    assert abs(val) < 1e-12


def test_first_variation_conormal_term(grid):
    # tangential xi with nonzero g(xi, eta): only -1/2 H^2 g(xi, eta) survives
    surf = round_surface(grid)
    zero = SphereFunction.constant(grid, 0.0)
    xi_t = SphereFunction.constant(grid, 1.0)     # d/dtheta direction
    val = first_variation_willmore(surf, zero, xi=(xi_t, zero))
    # g(xi, eta) = -xi^theta = -1, omega(eta) = -1/2 * 4 * (-1) = 2
    expected = 0.5 * 2.0 * 2 * np.pi
    assert abs(val - expected) < 1e-10


# ---------------------------------------------------------------------------
# variation formulas against central differences (order >= 2)
# ---------------------------------------------------------------------------


def _variation_order(make_err):
    # steps large enough that the O(t^2) truncation dominates evaluation noise
    errs = np.array([make_err(t) for t in (0.08, 0.04, 0.02)])
    orders = np.log2(errs[:-1] / errs[1:])
    return orders.min()


def test_variation_formula_metric(grid):
    # d/dt g_ij = -2 h_ij phi under f + t phi nu; in the flat metric the
    # family is quadratic in t so central differences are exact
    metric = EuclideanMetric()
    surf = radial_graph(small_graph(grid), metric)
    phi = spherical_harmonic(grid, 2, 1).values
    h = surf.second_fundamental_form
    expected = -2.0 * h * phi[..., None, None]

    def err(t):
        up = ImmersedSurface(grid, surf.position + t * phi[..., None] * surf.nu, metric)
        dn = ImmersedSurface(grid, surf.position - t * phi[..., None] * surf.nu, metric)
        fd = (induced_metric(up) - induced_metric(dn)) / (2 * t)
        return np.max(np.abs(fd - expected))

    assert err(1e-3) < 1e-5
    assert err(0.05) < 1e-9

    # perturbed background: genuine O(t^2) truncation, measurable order
    metric_p = perturbed_metric(0.1)
    surf_p = radial_graph(small_graph(grid, scale=0.005), metric_p)
    h_p = surf_p.second_fundamental_form
    expected_p = -2.0 * h_p * phi[..., None, None]

    def err_p(t):
        up = ImmersedSurface(grid, surf_p.position + t * phi[..., None] * surf_p.nu, metric_p)
        dn = ImmersedSurface(grid, surf_p.position - t * phi[..., None] * surf_p.nu, metric_p)
        fd = (induced_metric(up) - induced_metric(dn)) / (2 * t)
        return np.max(np.abs(fd - expected_p))

    assert _variation_order(err_p) >= 1.9


def test_variation_formula_area_measure(grid):
    metric = EuclideanMetric()
    surf = radial_graph(small_graph(grid), metric)
    phi = spherical_harmonic(grid, 3, -2).values
    expected = -surf.mean_curvature_field * phi * surf.area_element

    def err(t):
        up = ImmersedSurface(grid, surf.position + t * phi[..., None] * surf.nu, metric)
        dn = ImmersedSurface(grid, surf.position - t * phi[..., None] * surf.nu, metric)
        fd = (up.area_element - dn.area_element) / (2 * t)
        return np.max(np.abs(fd - expected))

    assert err(1e-3) < 1e-5
    assert _variation_order(err) >= 1.9


def test_variation_formula_mean_curvature(grid):
    # d/dt H = Delta phi + (|h|^2 + Ric(nu, nu)) phi in a perturbed metric
    metric = perturbed_metric(0.08)
    surf = radial_graph(small_graph(grid, scale=0.005), metric)
    phi_fn = spherical_harmonic(grid, 2, 0)
    phi = phi_fn.values
    h2 = surf.tracefree_norm2 + 0.5 * surf.mean_curvature_field**2
    expected = (surface_laplacian(surf, phi_fn).values
                + (h2 + surf.ambient_ricci_nu_nu) * phi)

    def err(t):
        up = ImmersedSurface(grid, surf.position + t * phi[..., None] * surf.nu, metric)
        dn = ImmersedSurface(grid, surf.position - t * phi[..., None] * surf.nu, metric)
        fd = (up.mean_curvature_field - dn.mean_curvature_field) / (2 * t)
        return np.max(np.abs(fd - expected))

    assert err(1e-3) < 2e-4
    assert _variation_order(err) >= 1.9


def test_surface_laplacian_reduces_to_round(grid):
    surf = round_surface(grid)
    f = spherical_harmonic(grid, 5, 3)
    lap1 = surface_laplacian(surf, f)
    lap2 = laplace_beltrami(f)
    assert_allclose(lap1.values, lap2.values, atol=1e-8)


def test_energy_in_perturbed_metric_positive_defect(grid):
    # sanity: perturbed-metric energy of the round graph stays near 2 pi
    metric = perturbed_metric(0.05)
    surf = round_surface(grid, metric=metric)
    assert abs(willmore_energy(surf) - 2 * np.pi) < 0.5
