"""Geometry of immersed graphs over the half-sphere in a background metric.

Surfaces are given by their position components on the collocation grid,
usually as radial graphs f(omega) = (1 + w(omega)) omega.  All first and
second coordinate derivatives of the position are evaluated through the
per-mode spectral representation (exact on products of smooth fields), and
every geometric quantity is then assembled pointwise: induced metric in the
(theta, phi) coordinate frame, unit normal, second fundamental form with the
ambient connection, mean curvature, and the fourth-order Willmore operator

    W = Delta_g H + (|h0|^2 + Ric(nu, nu)) H,

with h0 the tracefree second fundamental form and the ambient Ricci tensor
obtained by finite differences of the Christoffel symbols.  The surface
Laplacian is computed as div_g(grad_g H) with the gradient's Cartesian
components differentiated spectrally; this keeps every spectrally
differentiated field smooth across the pole.

Sign conventions: interior normals, nu = -omega on the round half-sphere,
h(X, Y) = ambient <D_X Y, nu>, so the unit half-sphere has h = g and H = 2.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np

from .ambient import MetricField, christoffel, ricci
from .errors import ImmersionError
from .halfsphere import HalfSphereGrid, SphereFunction

__all__ = [
    "ImmersedSurface",
    "RadialGraphSurface",
    "BoundaryTrace",
    "radial_graph",
    "translated_hemisphere_graph",
    "induced_metric",
    "unit_normal",
    "mean_curvature",
    "willmore_operator",
    "willmore_energy",
    "area",
    "boundary_trace",
    "surface_laplacian",
    "first_variation_willmore",
]

_MIN_EIG = 1e-8
_SQRT8PI = np.sqrt(8.0 * np.pi)


def _omega_jets(grid: HalfSphereGrid):
    """omega and its coordinate derivatives at the nodes, each (nt, np, 3)."""
    s = grid.s[:, None]
    c = grid.u[:, None]
    cp = np.cos(grid.phi)[None, :]
    sp = np.sin(grid.phi)[None, :]
    zero = np.zeros((grid.n_theta, grid.n_phi))

    def pack(x, y, z):
        return np.stack([np.broadcast_to(x, zero.shape),
                         np.broadcast_to(y, zero.shape),
                         np.broadcast_to(z, zero.shape)], axis=-1)

    omega = pack(s * cp, s * sp, c * np.ones_like(cp))
    d_t = pack(c * cp, c * sp, -s * np.ones_like(cp))
    d_p = pack(-s * sp, s * cp, zero)
    d_tt = -omega
    d_tp = pack(-c * sp, c * cp, zero)
    d_pp = pack(-s * cp, -s * sp, zero)
    return omega, d_t, d_p, d_tt, d_tp, d_pp


def _omega_boundary_jets(grid: HalfSphereGrid):
    cp = np.cos(grid.phi)
    sp = np.sin(grid.phi)
    zero = np.zeros(grid.n_phi)
    omega = np.stack([cp, sp, zero], axis=-1)
    d_t = np.stack([zero, zero, -np.ones(grid.n_phi)], axis=-1)
    d_p = np.stack([-sp, cp, zero], axis=-1)
    d_tt = -omega
    d_tp = np.zeros_like(omega)
    d_pp = np.stack([-cp, -sp, zero], axis=-1)
    return omega, d_t, d_p, d_tt, d_tp, d_pp


@dataclass(frozen=True)
class BoundaryTrace:
    """Geometric data along the equator trace of the surface."""

    nu: np.ndarray            # unit normal, (n_phi, 3)
    H: np.ndarray             # mean curvature
    dH_deta: np.ndarray       # normal derivative of H (eta into the surface)
    h_tau_eta: np.ndarray     # second fundamental form on (tau, eta)
    h_plane_nu_nu: np.ndarray  # second fundamental form of {z=0} on (nu, nu)
    kappa_g: np.ndarray       # geodesic curvature of the boundary curve
    tau: np.ndarray           # unit tangent, (n_phi, 3)
    orthogonality: np.ndarray  # g(nu, upper unit normal of the plane)
    natural_bc: np.ndarray    # dH/deta + h_plane(nu, nu) H
    length_element: np.ndarray  # ds/dphi
    h_tau_tau: np.ndarray     # second fundamental form on (tau, tau)
    eta_coord: np.ndarray     # conormal components in the (theta, phi) frame


class ImmersedSurface:
    """Graph-type immersion over the half-sphere with cached geometry."""

    def __init__(self, grid: HalfSphereGrid, position: np.ndarray,
                 metric: MetricField, w: Optional[SphereFunction] = None,
                 _jets=None, _boundary_jets=None):
        self.grid = grid
        self.position = np.asarray(position, dtype=float)
        if self.position.shape != (grid.n_theta, grid.n_phi, 3):
            raise ValueError("position must have shape (n_theta, n_phi, 3)")
        self.metric = metric
        self.w = w
        if _jets is None:
            _jets = tuple(
                np.stack([op(self.position[..., i]) for i in range(3)], axis=-1)
                for op in (grid.dtheta, grid.dphi, grid.dtheta2,
                           grid.dthetaphi, grid.dphi2))
        (self.f_t, self.f_p, self.f_tt, self.f_tp, self.f_pp) = _jets
        if _boundary_jets is None:
            _boundary_jets = tuple(
                np.stack([op(self.position[..., i]) for i in range(3)], axis=-1)
                for op in (grid.boundary_value, grid.boundary_dtheta,
                           grid.boundary_dphi, grid.boundary_dtheta2,
                           grid.boundary_dthetaphi, grid.boundary_dphi2))
        (self.fb, self.fb_t, self.fb_p, self.fb_tt, self.fb_tp,
         self.fb_pp) = _boundary_jets
        self._build_first_order()

    # -- first-order data ----------------------------------------------------

    def _build_first_order(self):
        g = self.metric
        self.G = g.value(self.position)
        self.gtt = np.einsum("tpi,tpij,tpj->tp", self.f_t, self.G, self.f_t)
        self.gtp = np.einsum("tpi,tpij,tpj->tp", self.f_t, self.G, self.f_p)
        self.gpp = np.einsum("tpi,tpij,tpj->tp", self.f_p, self.G, self.f_p)
        s = self.grid.s[:, None]
        # frame metric (orthonormal round frame) for the immersion check
        ftt = self.gtt
        ftp = self.gtp / s
        fpp = self.gpp / s**2
        tr = ftt + fpp
        disc = np.sqrt(np.maximum((ftt - fpp) ** 2 + 4 * ftp**2, 0.0))
        min_eig = 0.5 * (tr - disc)
        if np.min(min_eig) < _MIN_EIG:
            idx = np.unravel_index(np.argmin(min_eig), min_eig.shape)
            raise ImmersionError(
                f"induced metric degenerate at node theta index {idx[0]}, "
                f"phi index {idx[1]} (min eigenvalue {np.min(min_eig):.3e})",
                node=idx)
        self.det_coord = self.gtt * self.gpp - self.gtp**2
        inv_det = 1.0 / self.det_coord
        self.itt = self.gpp * inv_det
        self.itp = -self.gtp * inv_det
        self.ipp = self.gtt * inv_det
        self.area_element = np.sqrt(self.det_coord) / s
        self.nu = self._normal()

    def _normal(self) -> np.ndarray:
        cross = np.cross(self.f_t, self.f_p)
        Ginv = np.linalg.inv(self.G)
        raw = np.einsum("tpij,tpj->tpi", Ginv, cross)
        norm = np.sqrt(np.einsum("tpi,tpij,tpj->tp", raw, self.G, raw))
        nu = raw / norm[..., None]
        omega = _omega_jets(self.grid)[0]
        sign = -np.sign(np.einsum("tpi,tpi->tp", nu, omega))
        return nu * sign[..., None]

    # -- second-order data ----------------------------------------------------

    @cached_property
    def gamma(self) -> np.ndarray:
        return christoffel(self.metric, self.position)

    @cached_property
    def second_fundamental_form(self) -> np.ndarray:
        """h[alpha, beta] per node, shape (nt, np, 2, 2), coordinate frame."""
        out = np.empty(self.position.shape[:2] + (2, 2))
        tangents = (self.f_t, self.f_p)
        seconds = {(0, 0): self.f_tt, (0, 1): self.f_tp, (1, 1): self.f_pp}
        for (a, b), fab in seconds.items():
            vec = fab + np.einsum("tpkij,tpi,tpj->tpk",
                                  self.gamma, tangents[a], tangents[b])
            out[..., a, b] = np.einsum("tpk,tpkl,tpl->tp", vec, self.G, self.nu)
        out[..., 1, 0] = out[..., 0, 1]
        return out

    @cached_property
    def mean_curvature_field(self) -> np.ndarray:
        h = self.second_fundamental_form
        return (self.itt * h[..., 0, 0] + 2 * self.itp * h[..., 0, 1]
                + self.ipp * h[..., 1, 1])

    @cached_property
    def tracefree_norm2(self) -> np.ndarray:
        h = self.second_fundamental_form
        H = self.mean_curvature_field
        # |h|^2 = h^a_b h^b_a with indices raised by the induced metric
        hab = np.empty_like(h)
        hab[..., 0, 0] = self.itt * h[..., 0, 0] + self.itp * h[..., 1, 0]
        hab[..., 0, 1] = self.itt * h[..., 0, 1] + self.itp * h[..., 1, 1]
        hab[..., 1, 0] = self.itp * h[..., 0, 0] + self.ipp * h[..., 1, 0]
        hab[..., 1, 1] = self.itp * h[..., 0, 1] + self.ipp * h[..., 1, 1]
        norm2 = (hab[..., 0, 0] ** 2 + hab[..., 1, 1] ** 2
                 + 2 * hab[..., 0, 1] * hab[..., 1, 0])
        return norm2 - 0.5 * H**2

    @cached_property
    def ambient_ricci_nu_nu(self) -> np.ndarray:
        ric = ricci(self.metric, self.position)
        return np.einsum("tpi,tpij,tpj->tp", self.nu, ric, self.nu)

    def laplacian(self, values: np.ndarray) -> np.ndarray:
        """Laplace-Beltrami of the induced metric applied to a scalar field."""
        grid = self.grid
        vt = grid.dtheta(values)
        vp = grid.dphi(values)
        ct = self.itt * vt + self.itp * vp
        cp = self.itp * vt + self.ipp * vp
        X = ct[..., None] * self.f_t + cp[..., None] * self.f_p
        Xt = np.stack([grid.dtheta(X[..., i]) for i in range(3)], axis=-1)
        Xp = np.stack([grid.dphi(X[..., i]) for i in range(3)], axis=-1)
        Dt = Xt + np.einsum("tpkij,tpi,tpj->tpk", self.gamma, self.f_t, X)
        Dp = Xp + np.einsum("tpkij,tpi,tpj->tpk", self.gamma, self.f_p, X)
        div = (self.itt * np.einsum("tpk,tpkl,tpl->tp", Dt, self.G, self.f_t)
               + self.itp * np.einsum("tpk,tpkl,tpl->tp", Dt, self.G, self.f_p)
               + self.itp * np.einsum("tpk,tpkl,tpl->tp", Dp, self.G, self.f_t)
               + self.ipp * np.einsum("tpk,tpkl,tpl->tp", Dp, self.G, self.f_p))
        return div

    @cached_property
    def willmore_field(self) -> np.ndarray:
        H = self.mean_curvature_field
        return self.laplacian(H) + (self.tracefree_norm2
                                    + self.ambient_ricci_nu_nu) * H

    # -- integral quantities ---------------------------------------------------

    @cached_property
    def area_value(self) -> float:
        return self.grid.integrate_values(self.area_element)

    @cached_property
    def willmore_energy_value(self) -> float:
        H = self.mean_curvature_field
        return 0.25 * self.grid.integrate_values(H**2 * self.area_element)

    def integrate(self, values: np.ndarray) -> float:
        """Integral against the induced area measure."""
        return self.grid.integrate_values(values * self.area_element)

    # -- boundary ---------------------------------------------------------------

    @cached_property
    def boundary(self) -> BoundaryTrace:
        grid = self.grid
        Gb = self.metric.value(self.fb)
        Gb_inv = np.linalg.inv(Gb)
        gam_b = christoffel(self.metric, self.fb)

        def pair(x, y):
            return np.einsum("pi,pij,pj->p", x, Gb, y)

        gtt = pair(self.fb_t, self.fb_t)
        gtp = pair(self.fb_t, self.fb_p)
        gpp = pair(self.fb_p, self.fb_p)
        det = gtt * gpp - gtp**2
        itt = gpp / det
        itp = -gtp / det
        ipp = gtt / det

        # normal: same construction as in the interior
        cross = np.cross(self.fb_t, self.fb_p)
        raw = np.einsum("pij,pj->pi", Gb_inv, cross)
        norm = np.sqrt(np.einsum("pi,pij,pj->p", raw, Gb, raw))
        nu = raw / norm[:, None]
        omega_b = _omega_boundary_jets(grid)[0]
        sign = -np.sign(np.einsum("pi,pi->p", nu, omega_b))
        nu = nu * sign[:, None]

        # upper unit normal of the plane z = 0 under the ambient metric
        g33 = Gb_inv[:, 2, 2]
        nu_plane = Gb_inv[:, 2, :] / np.sqrt(g33)[:, None]
        orthogonality = np.einsum("pi,pij,pj->p", nu, Gb, nu_plane)

        # second fundamental form of the surface at the boundary
        tangents = (self.fb_t, self.fb_p)
        seconds = {(0, 0): self.fb_tt, (0, 1): self.fb_tp, (1, 1): self.fb_pp}
        h = np.empty((grid.n_phi, 2, 2))
        for (a, b), fab in seconds.items():
            vec = fab + np.einsum("pkij,pi,pj->pk", gam_b, tangents[a], tangents[b])
            h[:, a, b] = np.einsum("pk,pkl,pl->p", vec, Gb, nu)
        h[:, 1, 0] = h[:, 0, 1]
        Hb = itt * h[:, 0, 0] + 2 * itp * h[:, 0, 1] + ipp * h[:, 1, 1]

        # unit tangent and interior conormal (coordinate components of the
        # induced metric; eta reduces to -d/dtheta only at the round state)
        speed = np.sqrt(gpp)
        tau_coord = np.stack([np.zeros(grid.n_phi), 1.0 / speed], axis=-1)
        eta_coord = np.stack([-np.sqrt(itt), -itp / np.sqrt(itt)], axis=-1)

        # mean curvature trace and its interior conormal derivative
        Hfield = self.mean_curvature_field
        Hb_trace = grid.boundary_value(Hfield)
        dH_deta = (eta_coord[:, 0] * grid.boundary_dtheta(Hfield)
                   + eta_coord[:, 1] * grid.boundary_dphi(Hfield))
        tau = tau_coord[:, 1:2] * self.fb_p
        eta_vec = eta_coord[:, 0:1] * self.fb_t + eta_coord[:, 1:2] * self.fb_p

        def contract(h2, x, y):
            return (h2[:, 0, 0] * x[:, 0] * y[:, 0] + h2[:, 0, 1] * x[:, 0] * y[:, 1]
                    + h2[:, 1, 0] * x[:, 1] * y[:, 0] + h2[:, 1, 1] * x[:, 1] * y[:, 1])

        h_tau_eta = contract(h, tau_coord, eta_coord)
        h_tau_tau = contract(h, tau_coord, tau_coord)

        # geodesic curvature of the boundary curve inside the surface
        dphi_speed = np.fft.irfft(1j * np.arange(grid.n_phi // 2 + 1)
                                  * np.fft.rfft(speed), n=grid.n_phi)
        acc = self.fb_pp + np.einsum("pkij,pi,pj->pk", gam_b, self.fb_p, self.fb_p)
        ddT = acc / (speed**2)[:, None] - (dphi_speed / speed**3)[:, None] * self.fb_p
        kappa_g = np.einsum("pi,pij,pj->p", ddT, Gb, eta_vec)

        # second fundamental form of the plane on (nu, nu)
        h_plane = np.einsum("pkij,pkl,pl->pij", gam_b, Gb, nu_plane)
        h_plane_nu_nu = np.einsum("pi,pij,pj->p", nu[:, :2],
                                  h_plane[:, :2, :2], nu[:, :2])

        return BoundaryTrace(
            nu=nu, H=Hb_trace, dH_deta=dH_deta, h_tau_eta=h_tau_eta,
            h_plane_nu_nu=h_plane_nu_nu, kappa_g=kappa_g, tau=tau,
            orthogonality=orthogonality,
            natural_bc=dH_deta + h_plane_nu_nu * Hb_trace,
            length_element=speed, h_tau_tau=h_tau_tau, eta_coord=eta_coord)

    def boundary_value(self, values: np.ndarray) -> np.ndarray:
        return self.grid.boundary_value(values)

    def boundary_normal_derivative(self, values: np.ndarray) -> np.ndarray:
        """Derivative along the interior unit conormal of the induced metric."""
        b = self.boundary
        return (b.eta_coord[:, 0] * self.grid.boundary_dtheta(values)
                + b.eta_coord[:, 1] * self.grid.boundary_dphi(values))


class RadialGraphSurface(ImmersedSurface):
    """Radial graph f(omega) = (1 + w(omega)) omega over the half-sphere."""

    def __init__(self, w: SphereFunction, metric: MetricField):
        grid = w.grid
        if np.min(1.0 + w.values) <= 0.0:
            raise ImmersionError("radial graph requires 1 + w > 0 everywhere")
        omega, o_t, o_p, o_tt, o_tp, o_pp = _omega_jets(grid)
        r = (1.0 + w.values)[..., None]
        wt = grid.dtheta(w.values)[..., None]
        wp = grid.dphi(w.values)[..., None]
        wtt = grid.dtheta2(w.values)[..., None]
        wtp = grid.dthetaphi(w.values)[..., None]
        wpp = grid.dphi2(w.values)[..., None]
        position = r * omega
        jets = (
            wt * omega + r * o_t,
            wp * omega + r * o_p,
            wtt * omega + 2 * wt * o_t + r * o_tt,
            wtp * omega + wt * o_p + wp * o_t + r * o_tp,
            wpp * omega + 2 * wp * o_p + r * o_pp,
        )
        ob, ob_t, ob_p, ob_tt, ob_tp, ob_pp = _omega_boundary_jets(grid)
        rb = (1.0 + grid.boundary_value(w.values))[:, None]
        wbt = grid.boundary_dtheta(w.values)[:, None]
        wbp = grid.boundary_dphi(w.values)[:, None]
        wbtt = grid.boundary_dtheta2(w.values)[:, None]
        wbtp = grid.boundary_dthetaphi(w.values)[:, None]
        wbpp = grid.boundary_dphi2(w.values)[:, None]
        bjets = (
            rb * ob,
            wbt * ob + rb * ob_t,
            wbp * ob + rb * ob_p,
            wbtt * ob + 2 * wbt * ob_t + rb * ob_tt,
            wbtp * ob + wbt * ob_p + wbp * ob_t + rb * ob_tp,
            wbpp * ob + 2 * wbp * ob_p + rb * ob_pp,
        )
        super().__init__(grid, position, metric, w=w,
                         _jets=jets, _boundary_jets=bjets)

    def _normal(self) -> np.ndarray:
        # radial-graph normal: project omega off the tangent plane, normalize,
        # orient so that nu = -omega at the round state
        omega = _omega_jets(self.grid)[0]
        a_t = np.einsum("tpi,tpij,tpj->tp", omega, self.G, self.f_t)
        a_p = np.einsum("tpi,tpij,tpj->tp", omega, self.G, self.f_p)
        At = self.itt * a_t + self.itp * a_p
        Ap = self.itp * a_t + self.ipp * a_p
        num = omega - At[..., None] * self.f_t - Ap[..., None] * self.f_p
        oo = np.einsum("tpi,tpij,tpj->tp", omega, self.G, omega)
        denom = np.sqrt(oo - a_t * At - a_p * Ap)
        return -num / denom[..., None]


def radial_graph(w: SphereFunction, metric: MetricField) -> RadialGraphSurface:
    return RadialGraphSurface(w, metric)


def translated_hemisphere_graph(grid: HalfSphereGrid, a) -> SphereFunction:
    """Graph over the half-sphere of the unit half-sphere centered at (a, 0)."""
    a = np.asarray(a, dtype=float)
    if a.shape != (2,) or np.linalg.norm(a) >= 1.0:
        raise ValueError("need a horizontal translation vector with |a| < 1")
    omega = _omega_jets(grid)[0]
    dot = omega[..., 0] * a[0] + omega[..., 1] * a[1]
    vals = dot - 1.0 + np.sqrt(1.0 - a @ a + dot**2)
    return SphereFunction(grid, vals)


# ---------------------------------------------------------------------------
# functional interface
# ---------------------------------------------------------------------------


def induced_metric(surface: ImmersedSurface) -> np.ndarray:
    """Coordinate-frame induced metric per node, shape (nt, np, 2, 2)."""
    g = np.empty(surface.position.shape[:2] + (2, 2))
    g[..., 0, 0] = surface.gtt
    g[..., 0, 1] = g[..., 1, 0] = surface.gtp
    g[..., 1, 1] = surface.gpp
    return g


def unit_normal(surface: ImmersedSurface) -> np.ndarray:
    return surface.nu


def mean_curvature(surface: ImmersedSurface) -> SphereFunction:
    return SphereFunction(surface.grid, surface.mean_curvature_field)


def willmore_operator(surface: ImmersedSurface) -> SphereFunction:
    return SphereFunction(surface.grid, surface.willmore_field)


def willmore_energy(surface: ImmersedSurface) -> float:
    return surface.willmore_energy_value


def area(surface: ImmersedSurface) -> float:
    return surface.area_value


def boundary_trace(surface: ImmersedSurface) -> BoundaryTrace:
    return surface.boundary


def surface_laplacian(surface: ImmersedSurface, f: SphereFunction) -> SphereFunction:
    return SphereFunction(surface.grid, surface.laplacian(f.values))


def first_variation_willmore(surface: ImmersedSurface, phi: SphereFunction,
                             xi: Optional[tuple] = None) -> float:
    """First variation of the Willmore energy along phi * nu + Df . xi.

    xi, if given, is a pair of SphereFunctions holding the tangent-field
    components in the (theta, phi) coordinate frame.
    """
    grid = surface.grid
    W = surface.willmore_field
    interior = 0.5 * surface.integrate(W * phi.values)

    b = surface.boundary
    phi_b = grid.boundary_value(phi.values)
    dphi_deta = surface.boundary_normal_derivative(phi.values)
    omega_eta = phi_b * b.dH_deta - dphi_deta * b.H
    if xi is not None:
        # pairing with the unit conormal covector: g(xi, eta) = -xi^theta / sqrt(g^tt)
        xi_t = grid.boundary_value(xi[0].values)
        sqrt_gtt_inv = -b.eta_coord[:, 0]
        omega_eta = omega_eta - 0.5 * b.H**2 * (-xi_t / sqrt_gtt_inv)
    boundary = 0.5 * grid.boundary_integrate_values(omega_eta * b.length_element)
    return interior + boundary
