"""Domains, boundary charts and perturbed background metrics.

Domains are implicit surfaces {F = 0} with Omega = {F > 0} and analytic
derivative stacks for F up to third order (generated once with sympy and
evaluated with numpy).  A chart at a boundary point a writes the surface as a
graph over the tangent plane,

    f^a(x) = a + x^1 v1 + x^2 v2 + phi^a(x) N(a),

with N(a) the interior unit normal; the graph function is solved by a 1-D
Newton iteration along N(a) and differentiated implicitly.  Extending the
chart by z N(a) and rescaling by lambda gives the pullback metric on the
cylinder Z_2 = D_2 x [-2, 2],

    g_ij = delta_ij + d_i phi d_j phi,   g_i3 = d_i phi,   g_33 = 1,

with the gradient evaluated at lambda * x.  This metric is the Euclidean
pullback under (x, z) |-> (x, z + phi(lambda x)/lambda); the map is recorded
on the metric so geodesic computations can use it exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
import sympy as sp

from .errors import ChartRadiusError

__all__ = [
    "ImplicitDomain",
    "DomainChart",
    "ShapeOperatorData",
    "MetricField",
    "EuclideanMetric",
    "ChartMetric",
    "ConformalMetric",
    "LinearPerturbation",
    "domain_from_spec",
    "domain_from_json",
    "ball",
    "ellipsoid",
    "perturbed_ball",
    "halfspace",
    "make_chart",
    "shape_operator",
    "pullback_metric",
    "first_order_term",
    "christoffel",
    "ricci",
]

_NEWTON_TOL = 1e-13
_NEWTON_MAX = 60
_FD_STEP = 1e-4          # metric-level finite differences (Ricci, H^S gradient)


# ---------------------------------------------------------------------------
# implicit domains
# ---------------------------------------------------------------------------


def _lambdify_jet(expr, syms):
    """Return callables (f, grad, hess, third) vectorized over (N, 3) points."""
    grads = [sp.diff(expr, s) for s in syms]
    hess = [[sp.diff(g, s) for s in syms] for g in grads]
    third = [[[sp.diff(h, s) for s in syms] for h in row] for row in hess]
    f_fn = sp.lambdify(syms, expr, "numpy")
    g_fn = sp.lambdify(syms, grads, "numpy")
    h_fn = sp.lambdify(syms, hess, "numpy")
    t_fn = sp.lambdify(syms, third, "numpy")

    def _shape(fn, out_shape):
        def call(p):
            p = np.asarray(p, dtype=float)
            pts = p.reshape(-1, 3)
            n = pts.shape[0]
            raw = fn(pts[:, 0], pts[:, 1], pts[:, 2])
            flat: list[np.ndarray] = []

            def rec(x):
                if isinstance(x, (list, tuple)):
                    for y in x:
                        rec(y)
                else:
                    flat.append(np.broadcast_to(np.asarray(x, dtype=float), (n,)))

            rec(raw)
            out = np.stack(flat, axis=-1).reshape((n,) + out_shape)
            return out.reshape(p.shape[:-1] + out_shape)
        return call

    return _shape(f_fn, ()), _shape(g_fn, (3,)), _shape(h_fn, (3, 3)), _shape(t_fn, (3, 3, 3))


@dataclass(frozen=True)
class ImplicitDomain:
    """Smooth bounded domain Omega = {F > 0} given by a level function."""

    spec: dict
    level: Callable = field(repr=False)
    grad: Callable = field(repr=False)
    hess: Callable = field(repr=False)
    third: Callable = field(repr=False)
    r0: float = 0.5
    diameter: float = 2.0

    def surface_point(self, direction, r_init: float = 1.0) -> np.ndarray:
        """Radial Newton: the point t * direction on {F = 0}."""
        d = np.asarray(direction, dtype=float)
        d = d / np.linalg.norm(d)
        t = float(r_init)
        for _ in range(_NEWTON_MAX):
            p = t * d
            val = self.level(p[None, :])[0]
            dv = float(self.grad(p[None, :])[0] @ d)
            if dv == 0.0:
                break
            step = val / dv
            t -= step
            if abs(step) < _NEWTON_TOL:
                return t * d
        raise ChartRadiusError(f"no surface point along direction {direction}")

    def project(self, p) -> np.ndarray:
        """Nearest-level-set projection by Newton along the gradient."""
        q = np.asarray(p, dtype=float).copy()
        for _ in range(_NEWTON_MAX):
            val = self.level(q[None, :])[0]
            g = self.grad(q[None, :])[0]
            step = val / float(g @ g)
            q += step * g
            if abs(val) < _NEWTON_TOL:
                return q
        raise ChartRadiusError("projection to the boundary did not converge")


@lru_cache(maxsize=32)
def _domain_from_key(key: str) -> ImplicitDomain:
    spec = json.loads(key)
    kind = spec.get("type")
    params = spec.get("params", {})
    x, y, z = sp.symbols("x y z", real=True)
    if kind == "ball":
        R = float(params.get("radius", 1.0))
        expr = R**2 - (x**2 + y**2 + z**2)
        r0, diam = 0.8 * R, 2 * R
    elif kind == "ellipsoid":
        a = float(params.get("a", 1.0))
        b = float(params.get("b", 1.0))
        c = float(params.get("c", 1.0))
        expr = 1 - (x**2 / a**2 + y**2 / b**2 + z**2 / c**2)
        semi = np.array([a, b, c])
        r0 = 0.7 * float(np.min(semi) ** 2 / np.max(semi))
        diam = 2 * float(np.max(semi))
    elif kind == "perturbed_ball":
        R = float(params.get("radius", 1.0))
        eps = float(params.get("eps", 0.1))
        r = sp.sqrt(x**2 + y**2 + z**2)
        # low-order zonal bump (degree-3 solid harmonic over r^3)
        bump = sp.Rational(1, 2) * (5 * z**3 / r**3 - 3 * z / r)
        expr = R * (1 + eps * bump) - r
        r0 = 0.5 * R / (1.0 + 12.0 * abs(eps))
        diam = 2 * R * (1 + abs(eps))
    elif kind == "halfspace":
        # flat boundary z = 0, interior z > 0; stand-in for the model problem
        expr = z + 0 * x
        r0, diam = 2.0, 4.0
    else:
        raise ValueError(f"unknown domain type {kind!r}")
    f, g, h, t = _lambdify_jet(expr, (x, y, z))
    return ImplicitDomain(spec=spec, level=f, grad=g, hess=h, third=t,
                          r0=float(spec.get("r0", r0)), diameter=diam)


def domain_from_spec(spec: dict) -> ImplicitDomain:
    return _domain_from_key(json.dumps(spec, sort_keys=True))


def domain_from_json(text: str) -> ImplicitDomain:
    try:
        spec = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"domain JSON parse error at line {exc.lineno}, "
                         f"column {exc.colno}: {exc.msg}") from exc
    if not isinstance(spec, dict) or "type" not in spec:
        raise ValueError("domain spec must be an object with a 'type' field")
    return domain_from_spec(spec)


def ball(radius: float = 1.0) -> ImplicitDomain:
    return domain_from_spec({"type": "ball", "params": {"radius": radius}})


def ellipsoid(a: float, b: float, c: float) -> ImplicitDomain:
    return domain_from_spec({"type": "ellipsoid", "params": {"a": a, "b": b, "c": c}})


def perturbed_ball(radius: float = 1.0, eps: float = 0.1) -> ImplicitDomain:
    return domain_from_spec({"type": "perturbed_ball",
                             "params": {"radius": radius, "eps": eps}})


def halfspace() -> ImplicitDomain:
    return domain_from_spec({"type": "halfspace", "params": {}})


# ---------------------------------------------------------------------------
# charts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DomainChart:
    """Graph data of the boundary over the tangent plane at a."""

    domain: ImplicitDomain
    a: np.ndarray
    normal: np.ndarray          # interior unit normal N(a)
    frame: np.ndarray           # rows v1, v2 spanning T_a S
    r0: float

    def graph_jet(self, x, order: int = 3):
        """phi^a and derivatives at tangent coordinates x, shape (..., 2).

        Returns (phi, dphi, d2phi, d3phi) up to the requested order; higher
        entries are None.  Newton failure outside the graph radius raises
        ChartRadiusError.
        """
        x = np.asarray(x, dtype=float)
        shape = x.shape[:-1]
        xf = x.reshape(-1, 2)
        if np.any(np.linalg.norm(xf, axis=1) > self.r0 + 1e-12):
            raise ChartRadiusError(
                f"chart evaluation at |x| = {np.max(np.linalg.norm(xf, axis=1)):.4f} "
                f"exceeds the graph radius r0 = {self.r0:.4f}")
        base = self.a[None, :] + xf @ self.frame
        t = np.zeros(xf.shape[0])
        n = self.normal
        ok = False
        for _ in range(_NEWTON_MAX):
            p = base + t[:, None] * n[None, :]
            val = self.domain.level(p)
            dv = self.domain.grad(p) @ n
            t = t - val / dv
            if np.max(np.abs(val)) < _NEWTON_TOL:
                ok = True
                break
        if not ok:
            raise ChartRadiusError("graph Newton did not converge (outside reach?)")
        p = base + t[:, None] * n[None, :]

        e = np.vstack([self.frame, n])     # rows: v1, v2, N
        phi = t.reshape(shape)
        if order == 0:
            return phi, None, None, None

        G1 = np.einsum("nk,ak->na", self.domain.grad(p), e)       # (N, 3) dirs v1,v2,N
        gt = G1[:, 2]
        dphi = -G1[:, :2] / gt[:, None]
        if order == 1:
            return phi, dphi.reshape(shape + (2,)), None, None

        G2 = np.einsum("nkl,ak,bl->nab", self.domain.hess(p), e, e)
        dp3 = np.concatenate([dphi, np.ones((len(t), 1))], axis=1)  # d(p)/dx_i in dirs
        # second-order implicit differentiation, indices i,j over tangent dirs
        d2 = np.zeros((len(t), 2, 2))
        for i in range(2):
            for j in range(2):
                term = (G2[:, i, j] + G2[:, i, 2] * dphi[:, j]
                        + G2[:, j, 2] * dphi[:, i]
                        + G2[:, 2, 2] * dphi[:, i] * dphi[:, j])
                d2[:, i, j] = -term / gt
        if order == 2:
            return phi, dphi.reshape(shape + (2,)), d2.reshape(shape + (2, 2)), None

        G3 = np.einsum("nklm,ak,bl,cm->nabc", self.domain.third(p), e, e, e)
        # D_a f(x, phi(x)) for a function with known derivative arrays:
        # d/dx_k [G_{ab}] = G3_{abk} + G3_{ab2} dphi_k   (index 2 = normal dir)
        d3 = np.zeros((len(t), 2, 2, 2))
        for i in range(2):
            for j in range(2):
                for k in range(2):
                    gij_k = G3[:, i, j, k] + G3[:, i, j, 2] * dphi[:, k]
                    gi2_k = G3[:, i, 2, k] + G3[:, i, 2, 2] * dphi[:, k]
                    gj2_k = G3[:, j, 2, k] + G3[:, j, 2, 2] * dphi[:, k]
                    g22_k = G3[:, 2, 2, k] + G3[:, 2, 2, 2] * dphi[:, k]
                    g2_k = G2[:, 2, k] + G2[:, 2, 2] * dphi[:, k]
                    term = (gij_k + gi2_k * dphi[:, j] + G2[:, i, 2] * d2[:, j, k]
                            + gj2_k * dphi[:, i] + G2[:, j, 2] * d2[:, i, k]
                            + g22_k * dphi[:, i] * dphi[:, j]
                            + G2[:, 2, 2] * (d2[:, i, k] * dphi[:, j]
                                             + dphi[:, i] * d2[:, j, k])
                            + g2_k * d2[:, i, j])
                    d3[:, i, j, k] = -term / gt
        return (phi, dphi.reshape(shape + (2,)), d2.reshape(shape + (2, 2)),
                d3.reshape(shape + (2, 2, 2)))

    def point_at(self, x) -> np.ndarray:
        """Surface point f^a(x) for tangent coordinates x."""
        x = np.asarray(x, dtype=float)
        phi, _, _, _ = self.graph_jet(x, order=0)
        return (self.a + x @ self.frame
                + np.asarray(phi)[..., None] * self.normal)


def make_chart(domain: ImplicitDomain, a, frame: Optional[np.ndarray] = None,
               r0: Optional[float] = None) -> DomainChart:
    """Build the boundary graph chart at a point a on {F = 0}.

    The frame defaults to Gram-Schmidt applied to the projections of the
    coordinate axes least aligned with the normal; pass an explicit 2 x 3
    frame to control the tangent basis (used by the rotation tests).
    """
    a = np.asarray(a, dtype=float)
    if abs(domain.level(a[None, :])[0]) > 1e-10:
        raise ValueError(f"point {a} is not on the boundary "
                         f"(F = {domain.level(a[None, :])[0]:.2e})")
    g = domain.grad(a[None, :])[0]
    n = g / np.linalg.norm(g)
    if frame is None:
        order = np.argsort(np.abs(n))
        v1 = np.zeros(3)
        v1[order[0]] = 1.0
        v1 = v1 - (v1 @ n) * n
        v1 /= np.linalg.norm(v1)
        v2raw = np.zeros(3)
        v2raw[order[1]] = 1.0
        v2 = v2raw - (v2raw @ n) * n - (v2raw @ v1) * v1
        v2 /= np.linalg.norm(v2)
        frame = np.vstack([v1, v2])
    else:
        frame = np.asarray(frame, dtype=float)
        checks = np.abs(frame @ frame.T - np.eye(2)).max()
        if checks > 1e-10 or np.abs(frame @ n).max() > 1e-10:
            raise ValueError("frame must be orthonormal and tangent to the boundary")
    return DomainChart(domain=domain, a=a, normal=n, frame=frame,
                       r0=float(r0 if r0 is not None else domain.r0))


@dataclass(frozen=True)
class ShapeOperatorData:
    """Second fundamental form data of the boundary at a chart point."""

    h: np.ndarray            # 2 x 2 in the chart frame, interior normal
    trace: float             # scalar mean curvature H^S(a)
    grad_trace: np.ndarray   # surface gradient of H^S in frame coordinates (2,)

    @property
    def grad_norm(self) -> float:
        return float(np.linalg.norm(self.grad_trace))


def shape_operator(domain: ImplicitDomain, a, frame=None,
                   fd_step: float = _FD_STEP, with_gradient: bool = True) -> ShapeOperatorData:
    """Shape operator of the boundary, sign fixed by the interior normal.

    Convention anchor: the unit ball has h = Id and H^S = 2.  The surface
    gradient of H^S is computed by central differences over neighboring
    charts (H^S is frame invariant).
    """
    chart = make_chart(domain, a, frame=frame)
    _, _, d2, _ = chart.graph_jet(np.zeros(2), order=2)
    h = d2
    trace = float(np.trace(h))
    if not with_gradient:
        return ShapeOperatorData(h=h, trace=trace, grad_trace=np.zeros(2))
    grad = np.zeros(2)
    for i in range(2):
        vals = []
        for s in (+fd_step, -fd_step):
            x = np.zeros(2)
            x[i] = s
            p = chart.point_at(x)
            vals.append(shape_operator(domain, p, with_gradient=False).trace)
        grad[i] = (vals[0] - vals[1]) / (2 * fd_step)
    return ShapeOperatorData(h=h, trace=trace, grad_trace=grad)


# ---------------------------------------------------------------------------
# metric fields
# ---------------------------------------------------------------------------


class MetricField:
    """Symmetric 3 x 3 field on the cylinder with first derivatives.

    value(p) -> (..., 3, 3); d1(p) -> (..., 3, 3, 3) with d1[..., i, j, k]
    = d_k g_ij.  Metrics that are exact Euclidean pullbacks expose chart_map.
    """

    chart_map = None
    z_independent = False

    def value(self, p):
        raise NotImplementedError

    def d1(self, p):
        raise NotImplementedError

    def deviation(self, n_sample: int = 7) -> float:
        """max |g - delta| over a sample grid of the cylinder Z_2."""
        xs = np.linspace(-2.0, 2.0, n_sample)
        X, Y, Z = np.meshgrid(xs, xs, xs, indexing="ij")
        pts = np.stack([X, Y, Z], axis=-1).reshape(-1, 3)
        keep = np.linalg.norm(pts[:, :2], axis=1) <= 2.0
        g = self.value(pts[keep])
        return float(np.max(np.abs(g - np.eye(3))))


class _IdentityChartMap:
    def forward(self, p):
        return np.asarray(p, dtype=float)

    def inverse(self, p):
        return np.asarray(p, dtype=float)

    def dforward(self, p, v):
        return np.asarray(v, dtype=float)

    def dforward_inv(self, p, v):
        return np.asarray(v, dtype=float)


class EuclideanMetric(MetricField):
    z_independent = True

    def __init__(self):
        self.chart_map = _IdentityChartMap()

    def value(self, p):
        p = np.asarray(p, dtype=float)
        return np.broadcast_to(np.eye(3), p.shape[:-1] + (3, 3)).copy()

    def d1(self, p):
        p = np.asarray(p, dtype=float)
        return np.zeros(p.shape[:-1] + (3, 3, 3))


class _GraphChartMap:
    """(x, z) |-> (x, z + phi(lambda x) / lambda), an isometry onto flat space."""

    def __init__(self, chart: DomainChart, lam: float):
        self.chart = chart
        self.lam = lam

    def _phi_jet(self, xy, order):
        return self.chart.graph_jet(self.lam * np.asarray(xy, dtype=float), order=order)

    def forward(self, p):
        p = np.asarray(p, dtype=float)
        phi, _, _, _ = self._phi_jet(p[..., :2], order=0)
        out = p.copy()
        out[..., 2] += phi / self.lam
        return out

    def inverse(self, p):
        p = np.asarray(p, dtype=float)
        phi, _, _, _ = self._phi_jet(p[..., :2], order=0)
        out = p.copy()
        out[..., 2] -= phi / self.lam
        return out

    def dforward(self, p, v):
        p = np.asarray(p, dtype=float)
        v = np.asarray(v, dtype=float)
        _, dphi, _, _ = self._phi_jet(p[..., :2], order=1)
        out = v.copy()
        out[..., 2] += np.einsum("...i,...i->...", dphi, v[..., :2])
        return out

    def dforward_inv(self, p, v):
        p = np.asarray(p, dtype=float)
        v = np.asarray(v, dtype=float)
        _, dphi, _, _ = self._phi_jet(p[..., :2], order=1)
        out = v.copy()
        out[..., 2] -= np.einsum("...i,...i->...", dphi, v[..., :2])
        return out


class ChartMetric(MetricField):
    """Pullback of the Euclidean metric under the rescaled boundary chart."""

    z_independent = True

    def __init__(self, chart: DomainChart, lam: float):
        if lam < 0:
            raise ValueError("lambda must be nonnegative")
        if lam > chart.r0 / 2:
            raise ChartRadiusError(
                f"lambda = {lam} exceeds r0/2 = {chart.r0 / 2:.4f} for this chart")
        self.chart = chart
        self.lam = float(lam)
        self.chart_map = _GraphChartMap(chart, lam) if lam > 0 else _IdentityChartMap()

    def value(self, p):
        p = np.asarray(p, dtype=float)
        if self.lam == 0.0:
            return np.broadcast_to(np.eye(3), p.shape[:-1] + (3, 3)).copy()
        _, dphi, _, _ = self.chart.graph_jet(self.lam * p[..., :2], order=1)
        g = np.zeros(p.shape[:-1] + (3, 3))
        g[..., 0, 0] = 1.0 + dphi[..., 0] * dphi[..., 0]
        g[..., 1, 1] = 1.0 + dphi[..., 1] * dphi[..., 1]
        g[..., 0, 1] = g[..., 1, 0] = dphi[..., 0] * dphi[..., 1]
        g[..., 0, 2] = g[..., 2, 0] = dphi[..., 0]
        g[..., 1, 2] = g[..., 2, 1] = dphi[..., 1]
        g[..., 2, 2] = 1.0
        return g

    def d1(self, p):
        p = np.asarray(p, dtype=float)
        out = np.zeros(p.shape[:-1] + (3, 3, 3))
        if self.lam == 0.0:
            return out
        _, dphi, d2phi, _ = self.chart.graph_jet(self.lam * p[..., :2], order=2)
        lam = self.lam
        for k in range(2):
            dk = lam * d2phi[..., :, k]            # d_k of dphi_i, shape (..., 2)
            out[..., 0, 0, k] = 2 * dphi[..., 0] * dk[..., 0]
            out[..., 1, 1, k] = 2 * dphi[..., 1] * dk[..., 1]
            oij = dk[..., 0] * dphi[..., 1] + dphi[..., 0] * dk[..., 1]
            out[..., 0, 1, k] = out[..., 1, 0, k] = oij
            out[..., 0, 2, k] = out[..., 2, 0, k] = dk[..., 0]
            out[..., 1, 2, k] = out[..., 2, 1, k] = dk[..., 1]
        return out


class ConformalMetric(MetricField):
    """exp(2 u(p)) * delta for a callable u with analytic gradient."""

    def __init__(self, u: Callable, grad_u: Callable):
        self.u = u
        self.grad_u = grad_u

    def value(self, p):
        p = np.asarray(p, dtype=float)
        fac = np.exp(2.0 * np.asarray(self.u(p)))
        return fac[..., None, None] * np.eye(3)

    def d1(self, p):
        p = np.asarray(p, dtype=float)
        fac = np.exp(2.0 * np.asarray(self.u(p)))
        gu = np.asarray(self.grad_u(p))
        eye = np.eye(3)
        return 2.0 * fac[..., None, None, None] * eye[None, :, :, None] * gu[..., None, None, :]


class LinearPerturbation(MetricField):
    """First-order metric perturbation of a chart: q_i3 = h_ik x^k."""

    z_independent = True

    def __init__(self, h: np.ndarray):
        self.h = np.asarray(h, dtype=float)

    def value(self, p):
        p = np.asarray(p, dtype=float)
        q = np.zeros(p.shape[:-1] + (3, 3))
        hx = np.einsum("ik,...k->...i", self.h, p[..., :2])
        q[..., 0, 2] = q[..., 2, 0] = hx[..., 0]
        q[..., 1, 2] = q[..., 2, 1] = hx[..., 1]
        return q

    def d1(self, p):
        p = np.asarray(p, dtype=float)
        out = np.zeros(p.shape[:-1] + (3, 3, 3))
        for i in range(2):
            for k in range(2):
                out[..., i, 2, k] = self.h[i, k]
                out[..., 2, i, k] = self.h[i, k]
        return out


def pullback_metric(chart: DomainChart, lam: float) -> MetricField:
    """Rescaled chart metric on the cylinder; identity for lam = 0."""
    if lam == 0.0:
        return EuclideanMetric()
    return ChartMetric(chart, lam)


def first_order_term(chart: DomainChart) -> LinearPerturbation:
    """d/d lambda of the chart metric at lambda = 0 (linear in position)."""
    _, _, d2, _ = chart.graph_jet(np.zeros(2), order=2)
    return LinearPerturbation(d2)


# ---------------------------------------------------------------------------
# connection coefficients
# ---------------------------------------------------------------------------


def christoffel(metric: MetricField, p) -> np.ndarray:
    """Christoffel symbols Gamma^k_ij of the metric at points p, (..., 3, 3, 3).

    Index layout: out[..., k, i, j].
    """
    p = np.asarray(p, dtype=float)
    g = metric.value(p)
    dg = metric.d1(p)
    eig = np.linalg.eigvalsh(g)
    if np.min(eig) <= 0.0:
        raise ValueError(f"metric not positive definite (min eigenvalue {np.min(eig):.3e})")
    ginv = np.linalg.inv(g)
    # dg[..., i, j, k] = d_k g_ij; T_{ijl} = d_i g_jl + d_j g_il - d_l g_ij
    d = dg
    T = (np.einsum("...jli->...ijl", d) + np.einsum("...ilj->...ijl", d)
         - np.einsum("...ijl->...ijl", d))
    return 0.5 * np.einsum("...kl,...ijl->...kij", ginv, T)


def ricci(metric: MetricField, p, step: float = _FD_STEP) -> np.ndarray:
    """Ricci tensor by central finite differences of the Christoffel symbols."""
    p = np.asarray(p, dtype=float)
    pts = p.reshape(-1, 3)
    n = pts.shape[0]
    dGamma = np.zeros((n, 3, 3, 3, 3))        # [n, k, i, j, m] = d_m Gamma^k_ij
    dirs = range(2) if metric.z_independent else range(3)
    for m in dirs:
        e = np.zeros(3)
        e[m] = step
        gp = christoffel(metric, pts + e)
        gm = christoffel(metric, pts - e)
        dGamma[..., m] = (gp - gm) / (2 * step)
    gam = christoffel(metric, pts)
    ric = (np.einsum("nkjlk->njl", dGamma)
           - np.einsum("nkklj->njl", dGamma)
           + np.einsum("nkkm,nmjl->njl", gam, gam)
           - np.einsum("nkjm,nmkl->njl", gam, gam))
    return ric.reshape(p.shape[:-1] + (3, 3))
