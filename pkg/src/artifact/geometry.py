"""Curves, rigid placements, boundary grids and admissibility checks.

Points of the plane are stored as complex numbers throughout: x = x1 + i x2,
so that the rotation x -> x^perp = (-x2, x1) is multiplication by 1j.

Normal convention: every grid stores the unit normal pointing *out of the
fluid*.  On a body this is the normal pointing into the body, on the outer
boundary it is the usual outward normal.  The tangent ``tau`` is -n^perp,
which runs counterclockwise around a body.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np


class GeometryError(ValueError):
    pass


def perp(v):
    """x^perp = (-x2, x1) for complex-encoded vectors."""
    return 1j * v


def dot(a, b):
    """Euclidean dot product of complex-encoded vectors."""
    return (a * np.conj(b)).real


def rot(theta):
    return np.exp(1j * theta)


# ---------------------------------------------------------------------------
# shapes
# ---------------------------------------------------------------------------

class BodyShape:
    """Smooth closed reference curve, centred at its centre of mass.

    kind='ellipse'        : x(t) = a cos t + i b sin t
    kind='fourier'        : x(t) = sum_k c_k exp(i k t), coeffs is a dict {k: c_k}
    """

    def __init__(self, kind="ellipse", a=1.0, b=1.0, coeffs=None, M=128):
        if kind not in ("ellipse", "fourier"):
            raise GeometryError(f"unknown shape kind {kind!r}")
        if int(M) != M or M < 8:
            raise GeometryError("panel count M must be an integer >= 8")
        self.kind = kind
        self.M = int(M)
        if kind == "ellipse":
            if not (a > 0 and b > 0):
                raise GeometryError("ellipse semi-axes must be positive")
            self.a, self.b = float(a), float(b)
            self.coeffs = {1: (a + b) / 2 + 0j, -1: (a - b) / 2 + 0j}
        else:
            if not coeffs:
                raise GeometryError("fourier curve needs coefficients")
            self.coeffs = {int(k): complex(c) for k, c in dict(coeffs).items()}
            self.a = self.b = None
        self._ks = np.array(sorted(self.coeffs))
        self._cs = np.array([self.coeffs[k] for k in self._ks])
        if self.signed_area() < 0:
            # reverse orientation: t -> -t
            self.coeffs = {-k: c for k, c in self.coeffs.items()}
            self._ks = np.array(sorted(self.coeffs))
            self._cs = np.array([self.coeffs[k] for k in self._ks])
        self._recentre()
        self._check()
        self._cache = {}

    # parametrisation --------------------------------------------------------
    def curve(self, t):
        """Return z, z', z'' at parameter values t."""
        t = np.asarray(t, dtype=float)
        e = np.exp(1j * np.multiply.outer(t, self._ks))
        ik = 1j * self._ks
        z = e @ self._cs
        zt = e @ (ik * self._cs)
        ztt = e @ (ik ** 2 * self._cs)
        return z, zt, ztt

    def signed_area(self):
        # A = 1/2 Im \oint conj(z) dz = pi sum_k k |c_k|^2
        return float(np.pi * np.sum(self._ks * np.abs(self._cs) ** 2))

    def _moments(self, M=512):
        t = 2 * np.pi * np.arange(M) / M
        z, zt, _ = self.curve(t)
        dt = 2 * np.pi / M
        x, y = z.real, z.imag
        # Green: A = \oint x dy, Sx = \oint x^2/2 dy, Sy = -\oint y^2/2 dx
        A = np.sum(x * zt.imag) * dt
        cx = np.sum(0.5 * x ** 2 * zt.imag) * dt / A
        cy = -np.sum(0.5 * y ** 2 * zt.real) * dt / A
        return A, cx + 1j * cy

    def _recentre(self):
        _, c = self._moments()
        self.coeffs[0] = self.coeffs.get(0, 0j) - c
        self._ks = np.array(sorted(self.coeffs))
        self._cs = np.array([self.coeffs[k] for k in self._ks])

    def area(self):
        return self._moments()[0]

    def centroid(self):
        return self._moments()[1]

    def _check(self):
        M = max(self.M, 256)
        t = 2 * np.pi * np.arange(M) / M
        z, zt, _ = self.curve(t)
        if np.min(np.abs(np.diff(np.r_[z, z[0]]))) <= 0 or np.min(np.abs(zt)) <= 1e-12:
            raise GeometryError("degenerate curve: coincident nodes")
        ang = np.unwrap(np.angle(zt))
        wind = (ang[-1] - ang[0] + np.angle(zt[0] / zt[-1])) / (2 * np.pi)
        if abs(wind - 1) > 1e-6:
            raise GeometryError("curve is not simple (tangent winding != 1)")

    def is_disc(self, tol=1e-12):
        t = 2 * np.pi * np.arange(64) / 64
        r = np.abs(self.curve(t)[0])
        return np.ptp(r) <= tol * np.max(r)

    def radius(self):
        t = 2 * np.pi * np.arange(256) / 256
        return float(np.max(np.abs(self.curve(t)[0])))

    def __repr__(self):
        if self.kind == "ellipse":
            return f"BodyShape(ellipse a={self.a}, b={self.b}, M={self.M})"
        return f"BodyShape(fourier {len(self.coeffs)} coeffs, M={self.M})"


def disc_shape(R=1.0, M=128):
    return BodyShape("ellipse", a=R, b=R, M=M)


@dataclass
class Pose:
    h: complex = 0j
    theta: float = 0.0

    def __post_init__(self):
        if isinstance(self.h, (tuple, list, np.ndarray)):
            self.h = complex(self.h[0], self.h[1])
        self.h = complex(self.h)
        self.theta = float(self.theta)
        if not (np.isfinite(self.h.real) and np.isfinite(self.h.imag) and np.isfinite(self.theta)):
            raise GeometryError("pose must be finite")

    def compose(self, other: "Pose") -> "Pose":
        """self o other: first apply other, then self."""
        return Pose(self.h + rot(self.theta) * other.h, self.theta + other.theta)

    def apply(self, z):
        return self.h + rot(self.theta) * z

    def as_array(self):
        return np.array([self.h.real, self.h.imag, self.theta])


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------

class BoundaryGrid:
    """Discretised boundary component with trapezoid weights.

    z, zt, ztt : nodes and parameter derivatives (uniform parameter t_m = 2 pi m/M)
    n          : unit normal pointing out of the fluid
    w          : arclength quadrature weights |z'(t)| 2pi/M
    """

    def __init__(self, z, zt, ztt, outer, center=0j, curve=None, eps=1.0, theta=0.0):
        self.z = np.asarray(z, dtype=complex)
        self.zt = np.asarray(zt, dtype=complex)
        self.ztt = np.asarray(ztt, dtype=complex)
        self.M = len(self.z)
        self.outer = bool(outer)
        self.center = complex(center)
        self.eps = eps
        self.theta = theta
        self._curve = curve
        sp = np.abs(self.zt)
        self.speed = sp
        self.t = 2 * np.pi * np.arange(self.M) / self.M
        self.w = sp * 2 * np.pi / self.M
        # orientation of the parametrisation
        ccw = np.sum((np.conj(self.z) * self.zt).imag) > 0
        outward = -1j * self.zt / sp if ccw else 1j * self.zt / sp
        self.n = outward if self.outer else -outward
        self.tau = -1j * self.n
        # +1 when the parametrisation runs along n^perp (fluid on the left)
        self.sigma = 1.0 if np.mean(dot(self.zt, 1j * self.n)) > 0 else -1.0

    # analytic curve at arbitrary parameter
    def curve(self, t):
        if self._curve is None:
            raise GeometryError("grid has no analytic parametrisation")
        return self._curve(t)

    @property
    def perimeter(self):
        return float(np.sum(self.w))

    def area(self):
        return abs(float(np.sum(self.z.real * self.zt.imag) * 2 * np.pi / self.M))

    def d_dt(self, f):
        return spectral_derivative(f)

    def d_ds_tau(self, f):
        """Derivative of nodal samples along tau."""
        return spectral_derivative(f) / self.speed * np.sign(np.mean(dot(self.zt, self.tau)))

    def primitive_tau(self, g):
        """Zero-mean primitive G with dG/ds = g along tau; requires \\oint g ds = 0."""
        s = np.sign(np.mean(dot(self.zt, self.tau)))
        return spectral_primitive(g * self.speed * s)

    def integrate(self, f):
        return np.sum(f * self.w)


def spectral_derivative(f):
    f = np.asarray(f)
    M = f.shape[-1]
    k = np.fft.fftfreq(M, 1.0 / M)
    if M % 2 == 0:
        k[M // 2] = 0
    return np.fft.ifft(1j * k * np.fft.fft(f, axis=-1), axis=-1) if np.iscomplexobj(f) else \
        np.fft.ifft(1j * k * np.fft.fft(f, axis=-1), axis=-1).real


def spectral_primitive(f):
    """Zero-mean periodic primitive of samples f (with respect to t)."""
    f = np.asarray(f)
    M = f.shape[-1]
    F = np.fft.fft(f, axis=-1)
    k = np.fft.fftfreq(M, 1.0 / M)
    out = np.zeros_like(F)
    nz = k != 0
    if M % 2 == 0:
        nz &= np.abs(k) != M // 2
    out[..., nz] = F[..., nz] / (1j * k[nz])
    r = np.fft.ifft(out, axis=-1)
    return r if np.iscomplexobj(f) else r.real


def place_body(shape: BodyShape, eps: float, q: Pose, M: Optional[int] = None) -> BoundaryGrid:
    """Rigid placement x = h + eps R(theta) x_ref of a body boundary."""
    if not (eps > 0) or eps > 1 + 1e-14:
        raise GeometryError(f"scale must lie in (0, 1], got {eps}")
    M = shape.M if M is None else int(M)
    t = 2 * np.pi * np.arange(M) / M
    R = rot(q.theta)
    z, zt, ztt = shape.curve(t)

    def curve(s, shape=shape, R=R, eps=eps, h=q.h):
        a, b, c = shape.curve(s)
        return h + eps * R * a, eps * R * b, eps * R * c

    return BoundaryGrid(q.h + eps * R * z, eps * R * zt, eps * R * ztt, outer=False,
                        center=q.h, curve=curve, eps=eps, theta=q.theta)


def outer_grid(shape: BodyShape, center=0j, M: Optional[int] = None) -> BoundaryGrid:
    M = shape.M if M is None else int(M)
    t = 2 * np.pi * np.arange(M) / M
    z, zt, ztt = shape.curve(t)
    center = complex(center)

    def curve(s, shape=shape, c=center):
        a, b, d = shape.curve(s)
        return a + c, b, d

    return BoundaryGrid(z + center, zt, ztt, outer=True, center=center, curve=curve)


def curve_grid(z, zt, ztt, outer=True):
    """Grid from raw samples (used for the inverted curves)."""
    return BoundaryGrid(z, zt, ztt, outer=outer)


# ---------------------------------------------------------------------------
# rigid fields
# ---------------------------------------------------------------------------

def xi_field(grid: BoundaryGrid, j: int, h=None):
    """xi_{kappa,j} at the nodes of a body grid, and K_{kappa,j} = n . xi."""
    if j not in (1, 2, 3, 4, 5):
        raise GeometryError(f"xi index must be in 1..5, got {j}")
    h = grid.center if h is None else complex(h)
    y = grid.z - h
    xi = xi_values(y, j)
    return xi, dot(grid.n, xi)


def xi_values(y, j):
    """xi_j evaluated at relative positions y = x - h (complex)."""
    y = np.asarray(y, dtype=complex)
    if j == 1:
        return np.ones_like(y)
    if j == 2:
        return 1j * np.ones_like(y)
    if j == 3:
        return 1j * y
    if j == 4:
        return -y.real + 1j * y.imag
    if j == 5:
        return y.imag + 1j * y.real
    raise GeometryError(f"xi index must be in 1..5, got {j}")


def kirchhoff_primitive(y, j):
    """J_j at relative positions y (grad J_j = -xi_j^perp near the body).

    j=1,2 use absolute coordinates in the formulas; since only derivatives
    matter up to a constant we express them through y as well."""
    x1, x2 = y.real, y.imag
    if j == 1:
        return -x2
    if j == 2:
        return x1
    if j == 3:
        return 0.5 * (x1 ** 2 + x2 ** 2)
    if j == 4:
        return x1 * x2
    if j == 5:
        return 0.5 * (x1 ** 2 - x2 ** 2)
    raise GeometryError(f"xi index must be in 1..5, got {j}")


def rigid_velocity(z, h, p):
    """v = h' + theta' (x - h)^perp with p = (h1', h2', theta')."""
    p = np.asarray(p, dtype=float)
    return (p[0] + 1j * p[1]) + p[2] * 1j * (np.asarray(z) - complex(h))


# ---------------------------------------------------------------------------
# configurations
# ---------------------------------------------------------------------------

FAMILIES = ("i", "ii", "iii")


@dataclass
class Body:
    shape: BodyShape
    eps: float = 1.0
    pose: Pose = field(default_factory=Pose)
    family: str = "i"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise GeometryError(f"family must be one of {FAMILIES}")
        if not (self.eps > 0) or self.eps > 1 + 1e-14:
            raise GeometryError(f"scale must lie in (0, 1], got {self.eps}")
        if self.family == "i" and abs(self.eps - 1) > 1e-14:
            raise GeometryError("family (i) bodies have scale 1")
        if self.family == "iii" and self.shape.is_disc():
            raise GeometryError("family (iii) bodies must not be discs")

    @property
    def small(self):
        return self.family != "i"

    def grid(self, M=None):
        return place_body(self.shape, self.eps, self.pose, M)

    def moved(self, pose):
        return Body(self.shape, self.eps, pose, self.family)


class Configuration:
    """Outer domain plus an ordered list of bodies."""

    def __init__(self, outer: BodyShape, bodies: Sequence[Body], delta=0.05, outer_center=0j):
        self.outer = outer
        self.outer_center = complex(outer_center)
        self.bodies = list(bodies)
        self.delta = float(delta)
        self._grids = None

    @property
    def N(self):
        return len(self.bodies)

    def grids(self):
        if self._grids is None:
            self._grids = (outer_grid(self.outer, self.outer_center),
                           [b.grid() for b in self.bodies])
        return self._grids

    def with_poses(self, poses):
        return Configuration(self.outer, [b.moved(p) for b, p in zip(self.bodies, poses)],
                             self.delta, self.outer_center)

    def subset(self, idx):
        return Configuration(self.outer, [self.bodies[i] for i in idx], self.delta,
                             self.outer_center)

    def big(self):
        return [k for k, b in enumerate(self.bodies) if not b.small]

    def small(self):
        return [k for k, b in enumerate(self.bodies) if b.small]

    def poses(self):
        return [b.pose for b in self.bodies]


# ---------------------------------------------------------------------------
# distances / admissibility
# ---------------------------------------------------------------------------

def _refine_pair(g1, g2, s, t, iters=3):
    """Newton refinement of the closest pair between two analytic curves."""
    best = None
    for _ in range(iters):
        z1, z1s, z1ss = g1.curve(np.array([s]))
        z2, z2t, z2tt = g2.curve(np.array([t]))
        z1, z1s, z1ss, z2, z2t, z2tt = (a[0] for a in (z1, z1s, z1ss, z2, z2t, z2tt))
        d = z1 - z2
        cur = abs(d)
        if best is None or cur < best:
            best = cur
        g = np.array([dot(d, z1s), -dot(d, z2t)])
        H = np.array([[abs(z1s) ** 2 + dot(d, z1ss), -dot(z1s, z2t)],
                      [-dot(z1s, z2t), abs(z2t) ** 2 - dot(d, z2tt)]])
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            break
        s, t = s - step[0], t - step[1]
    z1 = g1.curve(np.array([s]))[0][0]
    z2 = g2.curve(np.array([t]))[0][0]
    return min(best, abs(z1 - z2))


def curve_distance(g1: BoundaryGrid, g2: BoundaryGrid):
    D = np.abs(g1.z[:, None] - g2.z[None, :])
    i, j = np.unravel_index(np.argmin(D), D.shape)
    d0 = D[i, j]
    if g1._curve is None or g2._curve is None:
        return float(d0)
    return float(min(d0, _refine_pair(g1, g2, g1.t[i], g2.t[j])))


def point_curve_distance(g: BoundaryGrid, p: complex):
    d = np.abs(g.z - p)
    i = int(np.argmin(d))
    best = d[i]
    if g._curve is None:
        return float(best)
    t = g.t[i]
    for _ in range(3):
        z, zt, ztt = (a[0] for a in g.curve(np.array([t])))
        e = z - p
        gr = dot(e, zt)
        H = abs(zt) ** 2 + dot(e, ztt)
        if H <= 0:
            break
        t -= gr / H
        best = min(best, abs(g.curve(np.array([t]))[0][0] - p))
    return float(best)


def inside(grid: BoundaryGrid, pts):
    """Winding-number test: points enclosed by the closed curve."""
    pts = np.atleast_1d(np.asarray(pts, dtype=complex))
    dz = grid.zt * (2 * np.pi / grid.M)
    wnd = np.sum(dz[None, :] / (grid.z[None, :] - pts[:, None]), axis=1) / (2j * np.pi)
    return np.abs(wnd.real) > 0.5


@dataclass
class MarginReport:
    body_body: float
    body_outer: float
    body_vorticity: float
    delta: float

    @property
    def min_distance(self):
        return min(self.body_body, self.body_outer, self.body_vorticity)

    @property
    def margin(self):
        return self.min_distance - 2 * self.delta

    @property
    def admissible(self):
        return self.margin > 0


def admissibility(cfg: Configuration, vortex_positions=(), support=0.0) -> MarginReport:
    """Distances between bodies, to the outer boundary and to the vorticity support."""
    og, bgs = cfg.grids()
    bb = np.inf
    bo = np.inf
    bv = np.inf
    for k, g in enumerate(bgs):
        if np.any(~inside(og, g.z)):
            bo = -np.inf
        else:
            bo = min(bo, curve_distance(g, og))
        for l in range(k + 1, len(bgs)):
            g2 = bgs[l]
            if np.any(inside(g2, g.z)) or np.any(inside(g, g2.z)):
                bb = -np.inf
            else:
                bb = min(bb, curve_distance(g, g2))
        for p in np.atleast_1d(np.asarray(vortex_positions, dtype=complex)):
            if inside(g, p)[0]:
                bv = -np.inf
            else:
                bv = min(bv, point_curve_distance(g, p) - support)
    return MarginReport(float(bb), float(bo), float(bv), cfg.delta)
