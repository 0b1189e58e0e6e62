"""Geodesics, exponential maps and the two-dimensional barycenter.

The exponential map of a background metric close to Euclidean is computed by
classical RK4 shooting on the geodesic equation c'' + Gamma(c)(c', c') = 0;
its inverse by Newton iteration with finite-difference Jacobians.  Metrics
that are exact Euclidean pullbacks (the boundary-chart metrics) expose the
isometry, and for those the exponential map and its inverse are evaluated in
closed form through the chart map; the shooting integrator remains the
general path and is exercised by the conformal-metric tests.

The two-dimensional barycenter of a surface f over the half-sphere is the
point x in the horizontal plane where the projected average of the inverse
exponential images vanishes,

    X(x) = -proj_2 integral (exp_x)^{-1}(f(omega)) dmu_g(omega) = 0,

solved by a planar Newton iteration.  Its L2 gradient with respect to normal
perturbations of the surface is assembled from the same inverse maps; at the
flat metric everything reduces to area-weighted averages.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ambient import MetricField, christoffel
from .errors import DivergenceError, DomainExitError, InjectivityRadiusError
from .geometry import ImmersedSurface
from .halfsphere import SphereFunction

__all__ = [
    "GeodesicProblem",
    "BarycenterResult",
    "shoot_geodesic",
    "exp_map",
    "exp_inverse",
    "barycenter",
    "barycenter_gradient",
]

_VEL_BOUND = 1.5          # |v| < 3/2 for shooting initial data
_TARGET_BOUND = 1.25      # inverse map defined on |p| < 5/4
_CENTER_BOUND = 0.5       # barycenter search neighborhood
_FD_STEP = 1e-5
_NEWTON_TOL = 1e-12
_BARY_TOL = 1e-10
_BARY_MAX_ITER = 25


@dataclass(frozen=True)
class GeodesicProblem:
    """Initial data for geodesic shooting on the cylinder."""

    x: np.ndarray
    v: np.ndarray
    metric: MetricField
    n_steps: int = 64

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        v = np.atleast_2d(np.asarray(self.v, dtype=float))
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)
        if np.any(np.linalg.norm(x[:, :2], axis=-1) > _CENTER_BOUND + 1e-12):
            raise ValueError("start point outside the barycenter neighborhood")
        if np.any(np.linalg.norm(v, axis=-1) >= _VEL_BOUND):
            raise ValueError("initial velocity must satisfy |v| < 3/2")


@dataclass(frozen=True)
class BarycenterResult:
    center: np.ndarray
    residual: float
    iterations: int


def _rk4_geodesic(x, v, metric, n_steps):
    """Batched RK4 for (c, c') with c'' = -Gamma(c)(c', c')."""

    def acc(pos, vel):
        gam = christoffel(metric, pos)
        return -np.einsum("...kij,...i,...j->...k", gam, vel, vel)

    h = 1.0 / n_steps
    c = np.array(x, dtype=float)
    cd = np.array(v, dtype=float)
    traj = [c.copy()]
    for _ in range(n_steps):
        k1c, k1v = cd, acc(c, cd)
        k2c, k2v = cd + 0.5 * h * k1v, acc(c + 0.5 * h * k1c, cd + 0.5 * h * k1v)
        k3c, k3v = cd + 0.5 * h * k2v, acc(c + 0.5 * h * k2c, cd + 0.5 * h * k2v)
        k4c, k4v = cd + h * k3v, acc(c + h * k3c, cd + h * k3v)
        c = c + (h / 6.0) * (k1c + 2 * k2c + 2 * k3c + k4c)
        cd = cd + (h / 6.0) * (k1v + 2 * k2v + 2 * k3v + k4v)
        if np.any(np.abs(c[..., 2]) > 2.0) or np.any(np.linalg.norm(c[..., :2], axis=-1) > 2.0):
            raise DomainExitError("geodesic left the cylinder |x| < 2, |z| < 2")
        traj.append(c.copy())
    return np.array(traj), cd


def shoot_geodesic(problem: GeodesicProblem) -> np.ndarray:
    """Geodesic curve samples at times j/n_steps, shape (n_steps+1, N, 3)."""
    traj, _ = _rk4_geodesic(problem.x, problem.v, problem.metric, problem.n_steps)
    return traj


def exp_map(x, v, metric: MetricField, n_steps: int = 64) -> np.ndarray:
    """Endpoint of the unit-time geodesic with initial data (x, v)."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    cm = metric.chart_map
    if cm is not None:
        return cm.inverse(cm.forward(x) + cm.dforward(x, v))
    traj, _ = _rk4_geodesic(np.atleast_2d(x), np.atleast_2d(v), metric, n_steps)
    out = traj[-1]
    return out.reshape(x.shape)


def exp_inverse(x, p, metric: MetricField, n_steps: int = 64) -> np.ndarray:
    """Velocity v with exp_x(v) = p; Newton with finite-difference Jacobian."""
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    if np.any(np.linalg.norm(np.atleast_2d(p), axis=-1) >= _TARGET_BOUND):
        raise InjectivityRadiusError(
            "target outside the ball |p| < 5/4 of guaranteed invertibility")
    cm = metric.chart_map
    if cm is not None:
        return cm.dforward_inv(x, cm.forward(p) - cm.forward(x))

    xb = np.atleast_2d(np.broadcast_to(x, np.atleast_2d(p).shape).copy())
    pb = np.atleast_2d(p)
    v = pb - xb
    for _ in range(40):
        r = exp_map(xb, v, metric, n_steps) - pb
        if np.max(np.linalg.norm(r, axis=-1)) < _NEWTON_TOL:
            return v.reshape(p.shape)
        jac = np.empty(v.shape[:1] + (3, 3))
        for k in range(3):
            e = np.zeros(3)
            e[k] = _FD_STEP
            jp = exp_map(xb, v + e, metric, n_steps)
            jm = exp_map(xb, v - e, metric, n_steps)
            jac[..., :, k] = (jp - jm) / (2 * _FD_STEP)
        v = v - np.linalg.solve(jac, r[..., None])[..., 0]
        if np.any(np.linalg.norm(v, axis=-1) >= _VEL_BOUND):
            raise InjectivityRadiusError("Newton left the velocity ball |v| < 3/2")
    raise InjectivityRadiusError("inverse exponential map did not converge")


def _center_field(surface: ImmersedSurface, x, n_steps):
    """X(x) = -proj_2 integral exp_x^{-1}(f) dmu_g."""
    pts = surface.position.reshape(-1, 3)
    x3 = np.array([x[0], x[1], 0.0])
    v = exp_inverse(x3, pts, surface.metric, n_steps)
    v = v.reshape(surface.position.shape)
    return -np.array([surface.integrate(v[..., 0]), surface.integrate(v[..., 1])])


def barycenter(surface: ImmersedSurface, n_steps: int = 64) -> BarycenterResult:
    """Planar Newton for the barycenter of the immersed surface."""
    mu = surface.area_value
    # flat-metric closed form as the initial guess
    x = np.array([surface.integrate(surface.position[..., 0]),
                  surface.integrate(surface.position[..., 1])]) / mu
    for it in range(1, _BARY_MAX_ITER + 1):
        X = _center_field(surface, x, n_steps)
        res = float(np.linalg.norm(X))
        if res < _BARY_TOL:
            return BarycenterResult(center=x, residual=res, iterations=it)
        jac = np.empty((2, 2))
        for k in range(2):
            e = np.zeros(2)
            e[k] = _FD_STEP
            jac[:, k] = (_center_field(surface, x + e, n_steps)
                         - _center_field(surface, x - e, n_steps)) / (2 * _FD_STEP)
        x = x - np.linalg.solve(jac, X)
        if np.linalg.norm(x) > _CENTER_BOUND:
            raise DivergenceError("barycenter Newton left its neighborhood")
    raise DivergenceError("barycenter Newton did not converge",
                          history=[res])


def barycenter_gradient(surface: ImmersedSurface, center=None,
                        n_steps: int = 64) -> tuple[SphereFunction, SphereFunction]:
    """L2 gradients of the two barycenter coordinates as fields on the grid.

    Assembles M^{-1} proj_2 [ (exp_x^{-1} f) H - D(exp_x^{-1})(f) nu ] at the
    barycenter x, with M the projected x-derivative of the averaged inverse
    map; all exponential-map derivatives by central finite differences.
    """
    if center is None:
        center = barycenter(surface, n_steps=n_steps).center
    x3 = np.array([center[0], center[1], 0.0])
    pts = surface.position.reshape(-1, 3)
    metric = surface.metric
    grid = surface.grid
    shape = surface.position.shape[:2]

    vmap = exp_inverse(x3, pts, metric, n_steps).reshape(shape + (3,))

    # D_p(exp_x^{-1}) applied to nu, by central differences along nu
    nu_flat = surface.nu.reshape(-1, 3)
    vp = exp_inverse(x3, pts + _FD_STEP * nu_flat, metric, n_steps)
    vm = exp_inverse(x3, pts - _FD_STEP * nu_flat, metric, n_steps)
    dexp_nu = ((vp - vm) / (2 * _FD_STEP)).reshape(shape + (3,))

    # M = proj_2 integral D_x(exp_x^{-1})(f) dmu (2 x 2)
    M = np.empty((2, 2))
    for k in range(2):
        e = np.zeros(3)
        e[k] = _FD_STEP
        dv = (exp_inverse(x3 + e, pts, metric, n_steps)
              - exp_inverse(x3 - e, pts, metric, n_steps)) / (2 * _FD_STEP)
        dv = dv.reshape(shape + (3,))
        M[0, k] = surface.integrate(dv[..., 0])
        M[1, k] = surface.integrate(dv[..., 1])

    H = surface.mean_curvature_field
    field = vmap[..., :2] * H[..., None] - dexp_nu[..., :2]
    sol = np.linalg.solve(M, field.reshape(-1, 2).T).T.reshape(shape + (2,))
    return (SphereFunction(grid, sol[..., 0]), SphereFunction(grid, sol[..., 1]))
