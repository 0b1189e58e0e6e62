"""Spectral machinery on the upper half-sphere.

Fields on S^2_+ live on a tensor grid: Gauss-Legendre collocation in
u = cos(theta) on (0, 1) crossed with an equispaced periodic azimuth grid.
Each azimuthal Fourier mode m is represented as

    f_m(theta) = sin(theta)^(m mod 2) * q_m(cos(theta)),

with q_m the polynomial interpolant through the collocation nodes.  The parity
prefactor keeps the pole coordinate-singularity out of q_m, so differential
operators act exactly on the representation class (products of smooth fields).
Neither the pole nor the equator is a grid node; boundary data at the equator
comes from barycentric evaluation of the global interpolant at u = 0.

The integral of a field is the Gauss-Legendre x trapezoid quadrature, exact for
polynomials in cos(theta) of degree <= 2*n_theta - 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import lpmv, roots_legendre

from .errors import NormalizationError

__all__ = [
    "HalfSphereGrid",
    "SphereFunction",
    "HarmonicIndex",
    "default_grid",
    "spherical_harmonic",
    "integrate",
    "boundary_integrate",
    "laplace_beltrami",
    "gradient",
    "normal_derivative_equator",
    "split_zero_flux",
    "solve_neumann_complement",
]


def _barycentric_weights(x: np.ndarray) -> np.ndarray:
    n = len(x)
    w = np.ones(n)
    for j in range(n):
        w[j] = 1.0 / np.prod(x[j] - np.delete(x, j))
    return w / np.max(np.abs(w))


def _diff_matrix(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    n = len(x)
    D = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                D[i, j] = (w[j] / w[i]) / (x[i] - x[j])
        D[i, i] = -np.sum(D[i])
    return D


def _eval_row(x: np.ndarray, w: np.ndarray, t: float) -> np.ndarray:
    """Barycentric row r with r @ values = p(t) for the interpolant p."""
    d = t - x
    hit = np.isclose(d, 0.0, atol=1e-15)
    if np.any(hit):
        row = np.zeros_like(x)
        row[np.argmax(hit)] = 1.0
        return row
    c = w / d
    return c / np.sum(c)


def _legendre_vandermonde(u: np.ndarray) -> np.ndarray:
    """V[j, d] = P_d(2 u_j - 1), shifted Legendre basis on [0, 1]."""
    n = len(u)
    x = 2.0 * u - 1.0
    V = np.zeros((n, n))
    V[:, 0] = 1.0
    if n > 1:
        V[:, 1] = x
    for d in range(1, n - 1):
        V[:, d + 1] = ((2 * d + 1) * x * V[:, d] - d * V[:, d - 1]) / (d + 1)
    return V


@dataclass(frozen=True)
class HalfSphereGrid:
    """Collocation grid on the upper half-sphere.

    Parameters
    ----------
    n_theta : number of colatitude nodes on (0, pi/2); Gauss-Legendre in
        u = cos(theta) on (0, 1), ordered by increasing theta.
    n_phi : number of equispaced azimuth nodes; must be even.
    """

    n_theta: int
    n_phi: int
    theta_nodes: np.ndarray = field(repr=False)
    theta_weights: np.ndarray = field(repr=False)
    phi_step: float = field(repr=False)
    # derived arrays (u = cos(theta), s = sin(theta), collocation operators)
    u: np.ndarray = field(repr=False)
    s: np.ndarray = field(repr=False)
    phi: np.ndarray = field(repr=False)
    D: np.ndarray = field(repr=False)
    D2: np.ndarray = field(repr=False)
    val0: np.ndarray = field(repr=False)
    der0: np.ndarray = field(repr=False)
    der20: np.ndarray = field(repr=False)
    sigma: np.ndarray = field(repr=False)
    m_values: np.ndarray = field(repr=False)
    lap_ops: np.ndarray = field(repr=False)
    lap_diag: np.ndarray = field(repr=False)
    coeff_inv: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.n_phi % 2 != 0:
            raise ValueError("n_phi must be even")
        if self.n_theta < 4:
            raise ValueError("n_theta must be at least 4")
        if not np.all(np.diff(self.theta_nodes) > 0) or self.theta_nodes[0] <= 0:
            raise ValueError("theta nodes must be strictly increasing and positive")

    # -- construction -----------------------------------------------------

    @staticmethod
    def build(n_theta: int, n_phi: int) -> "HalfSphereGrid":
        x, w = roots_legendre(n_theta)
        u = ((x + 1.0) / 2.0)[::-1]          # decreasing in u = increasing theta
        wq = (w / 2.0)[::-1]
        theta = np.arccos(u)
        s = np.sqrt(1.0 - u * u)
        bw = _barycentric_weights(u)
        D = _diff_matrix(u, bw)
        D2 = D @ D
        # re-center so constants are annihilated exactly (true row sums are 0)
        D2[np.diag_indices_from(D2)] -= D2.sum(axis=1)
        val0 = _eval_row(u, bw, 0.0)
        der0 = val0 @ D
        der20 = val0 @ D2
        n_m = n_phi // 2 + 1
        m_values = np.arange(n_m)
        sigma = m_values % 2
        eye = np.eye(n_theta)
        lap_ops = np.empty((n_m, n_theta, n_theta))
        lap_diag = np.empty((n_m, n_theta))
        one_mu2 = 1.0 - u * u
        for m in range(n_m):
            sg = m % 2
            A = (one_mu2[:, None] * D2
                 - 2.0 * (sg + 1) * u[:, None] * D
                 - sg * eye
                 + np.diag((sg * u * u - m * m) / one_mu2))
            lap_ops[m] = A
            # exact action on constants (the D terms vanish in exact arithmetic)
            lap_diag[m] = -sg + (sg * u * u - m * m) / one_mu2
        coeff_inv = np.linalg.inv(_legendre_vandermonde(u))
        return HalfSphereGrid(
            n_theta=n_theta, n_phi=n_phi,
            theta_nodes=theta, theta_weights=wq, phi_step=2.0 * np.pi / n_phi,
            u=u, s=s, phi=np.arange(n_phi) * (2.0 * np.pi / n_phi),
            D=D, D2=D2, val0=val0, der0=der0, der20=der20,
            sigma=sigma, m_values=m_values, lap_ops=lap_ops, lap_diag=lap_diag,
            coeff_inv=coeff_inv,
        )

    # -- node helpers ------------------------------------------------------

    def nodes_cartesian(self) -> np.ndarray:
        """Unit vectors omega at the grid nodes, shape (n_theta, n_phi, 3)."""
        s = self.s[:, None]
        u = self.u[:, None]
        cp = np.cos(self.phi)[None, :]
        sp = np.sin(self.phi)[None, :]
        out = np.empty((self.n_theta, self.n_phi, 3))
        out[..., 0] = s * cp
        out[..., 1] = s * sp
        out[..., 2] = u * np.ones_like(cp)
        return out

    # -- mode transforms ---------------------------------------------------

    def to_qmodes(self, values: np.ndarray) -> np.ndarray:
        """Azimuthal FFT, divided by the parity prefactor sin(theta)^sigma.

        Coefficients below 1e-14 of the array maximum are zeroed: they are
        sub-roundoff for any field in the representation class, and keeping
        them lets the pole rows of the mode operators (entries ~ m^2/sin^2)
        amplify pure FFT noise into the 1e-10 range.
        """
        c = np.fft.rfft(values, axis=1) / self.n_phi
        floor = 1e-14 * np.max(np.abs(c)) if c.size else 0.0
        if floor > 0.0:
            c = np.where(np.abs(c) < floor, 0.0, c)
        scale = self.s[:, None] ** self.sigma[None, :]
        return c / scale

    def from_qmodes(self, q: np.ndarray) -> np.ndarray:
        scale = self.s[:, None] ** self.sigma[None, :]
        return np.fft.irfft(q * scale * self.n_phi, n=self.n_phi, axis=1)

    def modes_to_values(self, c: np.ndarray) -> np.ndarray:
        """Inverse FFT of raw (unscaled) azimuthal coefficients."""
        return np.fft.irfft(c * self.n_phi, n=self.n_phi, axis=1)

    # -- differentiation ---------------------------------------------------

    def dtheta(self, values: np.ndarray) -> np.ndarray:
        q = self.to_qmodes(values)
        dq = self.D @ q
        sig = self.sigma[None, :]
        s = self.s[:, None]
        u = self.u[:, None]
        c = sig * (s ** np.maximum(sig - 1, 0)) * u * q - (s ** (sig + 1)) * dq
        return self.modes_to_values(c)

    def dphi(self, values: np.ndarray) -> np.ndarray:
        c = np.fft.rfft(values, axis=1) / self.n_phi
        return self.modes_to_values(1j * self.m_values[None, :] * c)

    def dtheta2(self, values: np.ndarray) -> np.ndarray:
        q = self.to_qmodes(values)
        dq = self.D @ q
        # shift by a reference value per column: D2 annihilates constants
        # exactly in exact arithmetic, and the shift removes the accumulated
        # row-sum roundoff of the matrix product D @ D
        d2q = self.D2 @ (q - q[:1, :])
        sig = self.sigma[None, :]
        s = self.s[:, None]
        u = self.u[:, None]
        c = (-sig * (s ** sig) * q
             - (2 * sig + 1) * (s ** sig) * u * dq
             + (s ** (sig + 2)) * d2q)
        return self.modes_to_values(c)

    def dthetaphi(self, values: np.ndarray) -> np.ndarray:
        return self.dphi(self.dtheta(values))

    def dphi2(self, values: np.ndarray) -> np.ndarray:
        c = np.fft.rfft(values, axis=1) / self.n_phi
        return self.modes_to_values(-(self.m_values[None, :] ** 2) * c)

    # -- equator (u = 0) evaluation -----------------------------------------

    def boundary_value(self, values: np.ndarray) -> np.ndarray:
        q = self.to_qmodes(values)
        return self.modes_to_values((self.val0 @ q)[None, :])[0]

    def boundary_dtheta(self, values: np.ndarray) -> np.ndarray:
        q = self.to_qmodes(values)
        return self.modes_to_values((-(self.der0 @ (q - q[:1, :])))[None, :])[0]

    def boundary_dtheta2(self, values: np.ndarray) -> np.ndarray:
        q = self.to_qmodes(values)
        c = self.der20 @ (q - q[:1, :]) - self.sigma * (self.val0 @ q)
        return self.modes_to_values(c[None, :])[0]

    def boundary_dphi(self, values: np.ndarray) -> np.ndarray:
        q = self.to_qmodes(values)
        c = 1j * self.m_values * (self.val0 @ q)
        return self.modes_to_values(c[None, :])[0]

    def boundary_dphi2(self, values: np.ndarray) -> np.ndarray:
        q = self.to_qmodes(values)
        c = -(self.m_values ** 2) * (self.val0 @ q)
        return self.modes_to_values(c[None, :])[0]

    def boundary_dthetaphi(self, values: np.ndarray) -> np.ndarray:
        q = self.to_qmodes(values)
        c = 1j * self.m_values * (-(self.der0 @ (q - q[:1, :])))
        return self.modes_to_values(c[None, :])[0]

    # -- quadrature ----------------------------------------------------------

    def integrate_values(self, values: np.ndarray) -> float:
        return float(np.sum(self.theta_weights @ values) * self.phi_step)

    def boundary_integrate_values(self, boundary: np.ndarray) -> float:
        return float(np.sum(boundary) * self.phi_step)

    def interpolate_to(self, values: np.ndarray, other: "HalfSphereGrid") -> np.ndarray:
        """Spectral interpolation onto a finer grid (exact on the class)."""
        if other.n_phi < self.n_phi:
            raise ValueError("target grid must not reduce the azimuth resolution")
        q = self.to_qmodes(values)
        bw = _barycentric_weights(self.u)
        E = np.array([_eval_row(self.u, bw, t) for t in other.u])
        q_new = np.zeros((other.n_theta, other.n_phi // 2 + 1), dtype=complex)
        q_new[:, : q.shape[1]] = E @ q
        return other.from_qmodes(q_new)


@lru_cache(maxsize=8)
def _cached_grid(n_theta: int, n_phi: int) -> HalfSphereGrid:
    return HalfSphereGrid.build(n_theta, n_phi)


def default_grid(n_theta: int = 32, n_phi: int = 64) -> HalfSphereGrid:
    """Shared grid instances (immutable, safe to share across threads)."""
    return _cached_grid(n_theta, n_phi)


@dataclass(frozen=True)
class SphereFunction:
    """Scalar field on the half-sphere grid."""

    grid: HalfSphereGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n_theta, self.grid.n_phi):
            raise ValueError(
                f"values shape {v.shape} does not match grid "
                f"({self.grid.n_theta}, {self.grid.n_phi})"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("SphereFunction values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def modes(self) -> np.ndarray:
        """Azimuthal Fourier coefficients, shape (n_theta, n_phi // 2 + 1)."""
        return np.fft.rfft(self.values, axis=1) / self.grid.n_phi

    @staticmethod
    def from_callable(grid: HalfSphereGrid, fn) -> "SphereFunction":
        """Sample fn(theta, phi) on the grid (fn must broadcast)."""
        th = grid.theta_nodes[:, None]
        ph = grid.phi[None, :]
        return SphereFunction(grid, np.broadcast_to(fn(th, ph), (grid.n_theta, grid.n_phi)).copy())

    @staticmethod
    def constant(grid: HalfSphereGrid, value: float) -> "SphereFunction":
        return SphereFunction(grid, np.full((grid.n_theta, grid.n_phi), float(value)))


@dataclass(frozen=True)
class HarmonicIndex:
    """Spherical-harmonic label (degree, order) with reflection parity."""

    degree: int
    order: int
    parity: str = "even"

    def __post_init__(self):
        if self.degree < 0 or abs(self.order) > self.degree:
            raise ValueError("need degree >= 0 and |order| <= degree")
        expected = "even" if (self.degree - abs(self.order)) % 2 == 0 else "odd"
        if self.parity != expected:
            raise ValueError(
                f"parity {self.parity!r} inconsistent with degree/order "
                f"({self.degree},{self.order}); expected {expected!r}"
            )

    @property
    def eigenvalue(self) -> float:
        return float(self.degree * (self.degree + 1))


def spherical_harmonic(grid: HalfSphereGrid, degree: int, order: int) -> SphereFunction:
    """Real spherical harmonic, unit L2 norm over the full sphere.

    Uses cos(m phi) for order > 0 and sin(|m| phi) for order < 0.
    """
    k, m = degree, abs(order)
    HarmonicIndex(k, order, "even" if (k - m) % 2 == 0 else "odd")
    norm = np.sqrt((2 * k + 1) / (4 * np.pi)
                   * math.factorial(k - m) / math.factorial(k + m))
    leg = lpmv(m, k, grid.u)[:, None]
    if order == 0:
        vals = norm * leg * np.ones((1, grid.n_phi))
    elif order > 0:
        vals = np.sqrt(2.0) * norm * leg * np.cos(m * grid.phi)[None, :]
    else:
        vals = np.sqrt(2.0) * norm * leg * np.sin(m * grid.phi)[None, :]
    return SphereFunction(grid, vals)


# -- public operations -------------------------------------------------------


def integrate(f: SphereFunction) -> float:
    """Integral of f over the half-sphere with the round measure."""
    return f.grid.integrate_values(f.values)


def boundary_integrate(f: SphereFunction) -> float:
    """Integral of f over the equator circle (arclength measure)."""
    return f.grid.boundary_integrate_values(f.grid.boundary_value(f.values))


def laplace_beltrami(f: SphereFunction) -> SphereFunction:
    """Laplace-Beltrami operator of the round sphere applied to f."""
    g = f.grid
    q = g.to_qmodes(f.values)
    ref = q[:1, :]
    out = np.einsum("mij,jm->im", g.lap_ops, q - ref) + g.lap_diag.T * ref
    return SphereFunction(g, g.from_qmodes(out))


def gradient(f: SphereFunction) -> tuple[SphereFunction, SphereFunction]:
    """Round-sphere gradient in the orthonormal (theta, phi) coframe."""
    g = f.grid
    comp_theta = g.dtheta(f.values)
    q = g.to_qmodes(f.values)
    sig = g.sigma[None, :]
    s = g.s[:, None]
    # (1/s) d/dphi: for even m this divides by s once; the true mode function
    # vanishes at least like s^2 there, so no pole amplification occurs.
    c = np.where(sig == 1, 1j * g.m_values[None, :] * q,
                 1j * g.m_values[None, :] * q / s)
    comp_phi = g.modes_to_values(c)
    return SphereFunction(g, comp_theta), SphereFunction(g, comp_phi)


def normal_derivative_equator(f: SphereFunction) -> np.ndarray:
    """d f / d eta on the equator; eta points into the half-sphere."""
    g = f.grid
    q = g.to_qmodes(f.values)
    return g.modes_to_values((g.der0 @ q)[None, :])[0]


def solve_neumann_complement(grid: HalfSphereGrid, beta: np.ndarray) -> SphereFunction:
    """Solve for v with Delta v = const, dv/deta = beta, integral zero.

    The compatibility constant is -(1/2pi) * integral of beta over the
    equator.  Solved per azimuthal Fourier mode as a collocation two-point
    problem in u = cos(theta); the pole needs no condition (regularity is in
    the representation), the equator row imposes the Neumann data.
    """
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (grid.n_phi,):
        raise ValueError(f"beta must have shape ({grid.n_phi},)")
    n = grid.n_theta
    bmod = np.fft.rfft(beta) / grid.n_phi
    q = np.zeros((n, grid.n_phi // 2 + 1), dtype=complex)

    # mode 0: unknowns (q0, c) with Delta v = c, dv/deta = beta_0, mean zero
    A0 = grid.lap_ops[0]
    M = np.zeros((n + 1, n + 1))
    rhs = np.zeros(n + 1)
    M[: n - 1, :n] = A0[: n - 1]          # collocation at all but the equator-nearest node
    M[: n - 1, n] = -1.0
    M[n - 1, :n] = grid.der0
    rhs[n - 1] = bmod[0].real
    M[n, :n] = grid.theta_weights * 2.0 * np.pi
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > 1e14:
        raise NormalizationError(
            f"mode-0 Neumann system singular (condition number {cond:.3e})"
        )
    sol = np.linalg.solve(M, rhs)
    q[:, 0] = sol[:n]

    for m in range(1, grid.n_phi // 2 + 1):
        Am = grid.lap_ops[m]
        M = np.zeros((n, n))
        M[: n - 1] = Am[: n - 1]
        M[n - 1] = grid.der0
        r = np.zeros(n, dtype=complex)
        r[n - 1] = bmod[m]
        q[:, m] = np.linalg.solve(M, r)

    return SphereFunction(grid, grid.from_qmodes(q))


def split_zero_flux(w: SphereFunction) -> tuple[SphereFunction, SphereFunction]:
    """Split w = u + v with du/deta = 0 and v the Delta=const complement.

    v solves Delta v = -(1/2pi) * (boundary flux of w), dv/deta = dw/deta,
    integral of v zero; u = w - v then has vanishing normal derivative on the
    equator.
    """
    beta = normal_derivative_equator(w)
    v = solve_neumann_complement(w.grid, beta)
    u = SphereFunction(w.grid, w.values - v.values)
    return u, v
