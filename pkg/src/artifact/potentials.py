"""Named potentials of the fluid domain.

Kirchhoff potentials phi_{k,j} (coupled, standalone, final), circulation
streams psi_k and their standalone / reflected / phantom variants, the
Biot-Savart stream of a blob vorticity, added-mass matrices, conformal centres
and shape derivatives of the Kirchhoff potentials.

Conventions: body index k is 0-based; j runs over 1..5 (1,2 translations,
3 rotation, 4,5 the strain fields used in the modulation).  Velocities are
complex-encoded vectors.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.special import exp1

from .geometry import (BoundaryGrid, Configuration, dot, kirchhoff_primitive, rigid_velocity,
                       xi_field, xi_values)
from .laplace import (DomainSolver, Field, FieldSum, HarmonicField, StandaloneSolver,
                      ZeroField, neumann_from_tangential, neumann_standalone)

log = logging.getLogger(__name__)

EULER_GAMMA = 0.5772156649015329


# ---------------------------------------------------------------------------
# elementary free-space fields
# ---------------------------------------------------------------------------

class PointVortexField(Field):
    """Stream (s/2pi) log|z - h|."""

    def __init__(self, h, s=1.0):
        self.h = complex(h)
        self.s = float(s)

    def value(self, z):
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        return self.s / (2 * np.pi) * np.log(np.abs(z - self.h))

    def cgrad(self, z):
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        return self.s / (2 * np.pi) / (z - self.h)

    def cgrad2(self, z):
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        return -self.s / (2 * np.pi) / (z - self.h) ** 2

    def conjugate(self):
        raise ValueError("the point vortex stream has no single-valued conjugate")


def blob_stream_kernel(r2, delta):
    """G(r) = (1/4pi)[ln r^2 + E1(r^2/delta^2)]; point kernel when delta = 0."""
    r2 = np.asarray(r2, dtype=float)
    if delta <= 0:
        # point kernel; the (infinite) self value is dropped
        with np.errstate(divide="ignore"):
            return np.where(r2 > 0, np.log(np.where(r2 > 0, r2, 1.0)), 0.0) / (4 * np.pi)
    x = r2 / delta ** 2
    out = np.empty_like(r2)
    small = x < 1e-12
    xs = x[~small]
    out[~small] = (np.log(r2[~small]) + exp1(xs)) / (4 * np.pi)
    out[small] = (np.log(delta ** 2) - EULER_GAMMA) / (4 * np.pi)
    return out


class BlobField(Field):
    """Free-space stream of Gaussian-core vortex blobs.

    grad^perp of the stream is K_db(x) = x^perp (1 - exp(-|x|^2/db^2)) / (2 pi |x|^2)
    summed over blobs.  The second complex derivative uses the point-vortex
    formula, valid away from the cores (where it is used: on boundaries).
    """

    def __init__(self, pos, gam, delta):
        self.pos = np.atleast_1d(np.asarray(pos, dtype=complex))
        self.gam = np.atleast_1d(np.asarray(gam, dtype=float))
        self.delta = float(delta)

    def _d(self, z):
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        return z[:, None] - self.pos[None, :]

    def value(self, z):
        d = self._d(z)
        return blob_stream_kernel(np.abs(d) ** 2, self.delta) @ self.gam

    def cgrad(self, z):
        d = self._d(z)
        r2 = np.abs(d) ** 2
        with np.errstate(divide="ignore", invalid="ignore"):
            fac = -np.expm1(-r2 / self.delta ** 2) if self.delta > 0 else np.ones_like(r2)
            k = np.where(r2 > 0, fac / (2 * np.pi * d), 0.0)
        return k @ self.gam

    def cgrad2(self, z):
        d = self._d(z)
        with np.errstate(divide="ignore", invalid="ignore"):
            k = np.where(np.abs(d) > 0, -1.0 / (2 * np.pi * d ** 2), 0.0)
        return k @ self.gam

    def velocity(self, z):
        return 1j * np.conj(self.cgrad(z))


# ---------------------------------------------------------------------------
# vorticity container
# ---------------------------------------------------------------------------

@dataclass
class VorticityField:
    """Blobs (positions, strengths, core radius) and point vortices."""
    pos: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=complex))
    gam: np.ndarray = field(default_factory=lambda: np.zeros(0))
    delta_b: float = 0.05
    points: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=complex))
    point_gam: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.pos = np.atleast_1d(np.asarray(self.pos, dtype=complex))
        self.gam = np.atleast_1d(np.asarray(self.gam, dtype=float))
        self.points = np.atleast_1d(np.asarray(self.points, dtype=complex))
        self.point_gam = np.atleast_1d(np.asarray(self.point_gam, dtype=float))
        if self.pos.shape != self.gam.shape:
            raise ValueError("blob positions and strengths differ in length")

    @property
    def total(self):
        return float(np.sum(self.gam) + np.sum(self.point_gam))

    def moved(self, pos, points=None):
        return VorticityField(pos, self.gam, self.delta_b,
                              self.points if points is None else points, self.point_gam)

    @property
    def all_pos(self):
        return np.concatenate([self.pos, self.points])

    @property
    def all_gam(self):
        return np.concatenate([self.gam, self.point_gam])

    def free_field(self):
        """Blobs with their regularised kernel, point vortices with the exact one."""
        terms = []
        if self.pos.size:
            terms.append((1.0, BlobField(self.pos, self.gam, self.delta_b)))
        if self.points.size:
            terms.append((1.0, BlobField(self.points, self.point_gam, 0.0)))
        if not terms:
            return ZeroField()
        return terms[0][1] if len(terms) == 1 else FieldSum(terms)


def disc_patch(center, radius, strength, n_rings=3, delta_b=None):
    """Blob discretisation of a uniform disc patch of total circulation ``strength``."""
    pts = [0j]
    for r in range(1, n_rings + 1):
        m = 6 * r
        rr = radius * r / (n_rings + 0.5)
        pts += list(rr * np.exp(2j * np.pi * (np.arange(m) + 0.5 * (r % 2)) / m))
    pts = complex(center) + np.array(pts)
    gam = np.full(len(pts), strength / len(pts))
    db = radius / (n_rings + 0.5) if delta_b is None else delta_b
    return VorticityField(pts, gam, db)


# ---------------------------------------------------------------------------
# single solves
# ---------------------------------------------------------------------------

def _zero_mean_on(fld, grid):
    m = grid.integrate(fld.trace(grid)) / grid.perimeter
    return fld.shifted(-m)


def _kirchhoff_in(solver: DomainSolver, ci: int, j: int, normalize="zero_mean"):
    """phi with d_n phi = K_j on component ci (1-based body slot) and 0 elsewhere.

    The primitive of K_j along tau is the Kirchhoff primitive J_j, so the
    Neumann problem reduces to a modified Dirichlet problem for J_j; phi is its
    harmonic conjugate.
    """
    g = solver.comps[ci]
    data = [np.zeros(c.M) for c in solver.comps]
    data[ci] = kirchhoff_primitive(g.z - g.center, j)
    fld = solver.solve_modified(data).field.conjugate()
    if normalize == "zero_mean":
        fld = _zero_mean_on(fld, g)
    elif normalize == "outer_point":
        fld = fld.shifted(-float(fld.trace(solver.outer)[0]))
    return fld


def standalone_solver(grid: BoundaryGrid) -> StandaloneSolver:
    return StandaloneSolver(grid)


def standalone_kirchhoff_on(st: StandaloneSolver, j: int):
    """Decaying phi_hat with d_n phi_hat = K_j on the body and zero mean on it."""
    g = st.grid
    fld = st.conjugate_solve(kirchhoff_primitive(g.z - g.center, j))
    return _zero_mean_on(fld, g)


def standalone_stream_on(st: StandaloneSolver):
    """psi_hat = (1/2pi) log|x - h| + f_hat[-(1/2pi) log|x - h|]: constant on the body,
    unit circulation, gradient decaying like 1/r."""
    g = st.grid
    pv = PointVortexField(g.center)
    corr, _ = st.solve(-pv.trace(g))
    return FieldSum([(1.0, pv), (1.0, corr)])


def standalone_kirchhoff(shape, eps, q, j, M=None):
    from .geometry import place_body
    return standalone_kirchhoff_on(StandaloneSolver(place_body(shape, eps, q, M)), j)


def standalone_stream(shape, eps, q, M=None):
    from .geometry import place_body
    return standalone_stream_on(StandaloneSolver(place_body(shape, eps, q, M)))


def conformal_center_on(grid: BoundaryGrid, psihat=None):
    """zeta = -\\oint (x - h) d_n psi_hat ds."""
    if psihat is None:
        psihat = standalone_stream_on(StandaloneSolver(grid))
    dn = dot(psihat.grad_on(grid), grid.n)
    return complex(-grid.integrate((grid.z - grid.center) * dn))


def conformal_center(shape, eps, q, M=None):
    from .geometry import place_body
    return conformal_center_on(place_body(shape, eps, q, M))


def H_field(h):
    """Limit field H(x) = (x - h)^perp / (2 pi |x - h|^2) as a point-vortex stream."""
    return PointVortexField(h)


# ---------------------------------------------------------------------------
# Biot-Savart
# ---------------------------------------------------------------------------

@dataclass
class BiotSavart:
    """Stream Psi of K[omega]: blob stream plus a modified Dirichlet correction
    (zero on the outer boundary, constant on bodies, zero circulation)."""
    stream: Field
    constants: np.ndarray
    free: Field
    omega_correction: Optional[Field] = None   # stream of K_Omega minus the free part
    warning: Optional[str] = None

    def velocity(self, z):
        return self.stream.perp_grad(z)

    def velocity_omega(self, z):
        """K_Omega[omega]: correction for the outer boundary only."""
        f = self.free if self.omega_correction is None else self.free + self.omega_correction
        return f.perp_grad(z)

    def velocity_R(self, z):
        """R[omega] = K[omega] - K_Omega[omega]."""
        return self.velocity(z) - self.velocity_omega(z)


def biot_savart_in(solver: DomainSolver, vort: VorticityField, with_omega=False):
    free = vort.free_field()
    N = solver.N
    if isinstance(free, ZeroField):
        return BiotSavart(ZeroField(), np.zeros(N), free)
    data = [-free.trace(g) for g in solver.comps]
    sol = solver.solve_modified(data)
    stream = FieldSum([(1.0, free), (1.0, sol.field)])
    warn = None
    dmin = min(float(np.min(np.abs(g.z[:, None] - vort.all_pos[None, :]))) for g in solver.comps)
    if vort.pos.size and dmin < 2 * vort.delta_b:
        warn = f"blob within {dmin:.3g} of a boundary (core {vort.delta_b:.3g})"
        log.warning(warn)
    oc = None
    if with_omega:
        so = DomainSolver(solver.outer)
        oc = so.solve_dirichlet([-free.trace(solver.outer)])
    return BiotSavart(stream, sol.constants, free, oc, warn)


def biot_savart(cfg: Configuration, vort: VorticityField, with_omega=True):
    og, bgs = cfg.grids()
    return biot_savart_in(DomainSolver(og, bgs), vort, with_omega)


# ---------------------------------------------------------------------------
# bundle
# ---------------------------------------------------------------------------

@dataclass
class AddedMass:
    Mg: Optional[np.ndarray]
    Ma: np.ndarray
    standalone: List[np.ndarray]
    final: Optional[np.ndarray] = None

    def symmetry_defect(self):
        return float(np.linalg.norm(self.Ma - self.Ma.T) / max(np.linalg.norm(self.Ma), 1e-300))

    def min_eig(self):
        return float(np.min(np.linalg.eigvalsh(0.5 * (self.Ma + self.Ma.T))))


class PotentialBundle:
    """All potentials of one configuration, built lazily and cached.

    Slots: phi(k, j), phihat(k, j), psi(k) (+ constants), psihat(k), psir(k),
    phicheck / psicheck (final domain of the family (i) bodies).
    """

    def __init__(self, cfg: Configuration, solver: Optional[DomainSolver] = None,
                 normalize="zero_mean"):
        self.cfg = cfg
        self.og, self.bgs = cfg.grids()
        self.solver = solver or DomainSolver(self.og, self.bgs)
        self.normalize = normalize
        self.N = cfg.N
        self._phi: Dict = {}
        self._phihat: Dict = {}
        self._psi: Dict = {}
        self._psihat: Dict = {}
        self._st: Dict = {}
        self._final = None
        self._phicheck: Dict = {}
        self._psicheck: Dict = {}

    # coupled -----------------------------------------------------------------
    def phi(self, k, j):
        if (k, j) not in self._phi:
            self._phi[k, j] = _kirchhoff_in(self.solver, k + 1, j, self.normalize)
        return self._phi[k, j]

    def psi(self, k):
        """(psi_k, constants C_{k nu} on every body)."""
        if k not in self._psi:
            flux = np.zeros(self.N)
            flux[k] = -1.0
            sol = self.solver.solve_modified([np.zeros(g.M) for g in self.solver.comps], flux)
            self._psi[k] = (sol.field, sol.constants)
        return self._psi[k]

    def psi_constants(self):
        """C[k, nu] = value of psi_k on body nu."""
        return np.array([self.psi(k)[1] for k in range(self.N)]).reshape(self.N, self.N)

    # standalone ----------------------------------------------------------------
    def standalone(self, k):
        if k not in self._st:
            self._st[k] = StandaloneSolver(self.bgs[k])
        return self._st[k]

    def phihat(self, k, j):
        if (k, j) not in self._phihat:
            self._phihat[k, j] = standalone_kirchhoff_on(self.standalone(k), j)
        return self._phihat[k, j]

    def psihat(self, k):
        if k not in self._psihat:
            self._psihat[k] = standalone_stream_on(self.standalone(k))
        return self._psihat[k]

    def psir(self, k):
        return FieldSum([(1.0, self.psi(k)[0]), (-1.0, self.psihat(k))])

    def conformal_center(self, k):
        return conformal_center_on(self.bgs[k], self.psihat(k))

    # final domain ------------------------------------------------------------
    @property
    def final_solver(self):
        if self._final is None:
            big = self.cfg.big()
            self._final = (DomainSolver(self.og, [self.bgs[k] for k in big]), big)
        return self._final

    def phicheck(self, k, j):
        S, big = self.final_solver
        if (k, j) not in self._phicheck:
            self._phicheck[k, j] = _kirchhoff_in(S, big.index(k) + 1, j, self.normalize)
        return self._phicheck[k, j]

    def psicheck(self, k):
        S, big = self.final_solver
        if k not in self._psicheck:
            flux = np.zeros(S.N)
            flux[big.index(k)] = -1.0
            sol = S.solve_modified([np.zeros(g.M) for g in S.comps], flux)
            self._psicheck[k] = (sol.field, sol.constants)
        return self._psicheck[k]

    # added mass ----------------------------------------------------------------
    def added_mass(self, masses=None, inertias=None, final=False) -> AddedMass:
        N = self.N
        Ma = np.zeros((3 * N, 3 * N))
        for k in range(N):
            for i in range(1, 4):
                f = self.phi(k, i)
                for l in range(N):
                    g = self.bgs[l]
                    tr = f.trace(g)
                    for i2 in range(1, 4):
                        _, K = xi_field(g, i2)
                        Ma[3 * k + i - 1, 3 * l + i2 - 1] = g.integrate(tr * K)
        sa = [self.standalone_added_mass(k) for k in range(N)]
        Mg = None
        if masses is not None:
            Mg = np.diag(np.concatenate([[m, m, J] for m, J in zip(masses, inertias)]))
        Mf = self.final_added_mass() if final else None
        return AddedMass(Mg, Ma, sa, Mf)

    def standalone_added_mass(self, k):
        g = self.bgs[k]
        out = np.zeros((3, 3))
        for i in range(1, 4):
            tr = self.phihat(k, i).trace(g)
            for i2 in range(1, 4):
                out[i - 1, i2 - 1] = g.integrate(tr * xi_field(g, i2)[1])
        return out

    def final_added_mass(self):
        S, big = self.final_solver
        n = len(big)
        out = np.zeros((3 * n, 3 * n))
        for a, k in enumerate(big):
            for i in range(1, 4):
                f = self.phicheck(k, i)
                for b, l in enumerate(big):
                    g = self.bgs[l]
                    tr = f.trace(g)
                    for i2 in range(1, 4):
                        out[3 * a + i - 1, 3 * b + i2 - 1] = g.integrate(tr * xi_field(g, i2)[1])
        return out

    # velocity ----------------------------------------------------------------
    def potential_field(self, p):
        """Velocity potential sum_k p_k . phi_k (p shape (N, 3))."""
        p = np.asarray(p, dtype=float).reshape(self.N, 3)
        terms = [(p[k, i - 1], self.phi(k, i)) for k in range(self.N) for i in range(1, 4)
                 if p[k, i - 1] != 0.0]
        return FieldSum(terms) if terms else ZeroField()

    def circulation_stream(self, gamma):
        gamma = np.asarray(gamma, dtype=float)
        terms = [(gamma[k], self.psi(k)[0]) for k in range(self.N) if gamma[k] != 0.0]
        return FieldSum(terms) if terms else ZeroField()

    def velocity(self, p, gamma, bs: Optional[BiotSavart] = None):
        return VelocityField(self.potential_field(p), self.circulation_stream(gamma),
                             None if bs is None else bs.stream)

    def shape_derivative(self, lam, ell, mu, m):
        return shape_derivative_kirchhoff(self, (lam, ell), (mu, m))


class VelocityField:
    """u = grad Phi + grad^perp Psi (Phi potential part, Psi circulation + vortical)."""

    def __init__(self, Phi: Field, Psi_circ: Field, Psi_vort: Optional[Field] = None):
        self.Phi = Phi
        self.Psi_circ = Psi_circ
        self.Psi_vort = ZeroField() if Psi_vort is None else Psi_vort

    @property
    def Psi(self):
        return FieldSum([(1.0, self.Psi_circ), (1.0, self.Psi_vort)])

    def __call__(self, z):
        return self.Phi.grad(z) + self.Psi.perp_grad(z)

    def on(self, grid):
        return self.Phi.grad_on(grid) + self.Psi.perp_grad_on(grid)

    def f(self, z):
        """Complex velocity u1 - i u2 (analytic where the flow is irrotational)."""
        return np.conj(self(z))

    def f_prime(self, z):
        return self.Phi.cgrad2(z) - 1j * self.Psi.cgrad2(z)

    def f_prime_on(self, grid):
        return self.Phi.cgrad2_on(grid) - 1j * self.Psi.cgrad2_on(grid)


def assemble_velocity(cfg: Configuration, p, gamma, vort: Optional[VorticityField] = None,
                      bundle: Optional[PotentialBundle] = None):
    bundle = bundle or PotentialBundle(cfg)
    bs = biot_savart_in(bundle.solver, vort, False) if vort is not None and vort.all_pos.size else None
    return bundle.velocity(p, gamma, bs)


def kirchhoff(cfg: Configuration, k, j, normalize="zero_mean"):
    og, bgs = cfg.grids()
    return _kirchhoff_in(DomainSolver(og, bgs), k + 1, j, normalize)


def circulation_stream(cfg: Configuration, k):
    return PotentialBundle(cfg).psi(k)


def added_mass(cfg: Configuration, masses=None, inertias=None, final=False):
    return PotentialBundle(cfg).added_mass(masses, inertias, final)


# ---------------------------------------------------------------------------
# shape derivatives
# ---------------------------------------------------------------------------

def shape_derivative_datum(bundle: PotentialBundle, lam, ell, mu, m):
    """Neumann datum of d phi_{lam,ell} / d q_{mu,m} on body mu (zero elsewhere)."""
    g = bundle.bgs[mu]
    phi = bundle.phi(lam, ell)
    dtau_phi = dot(phi.grad_on(g), g.tau)
    xi_l = xi_values(g.z - bundle.bgs[lam].center, ell)
    xi_m, K_m = xi_field(g, m)
    a = dtau_phi - (dot(xi_l, g.tau) if lam == mu else 0.0)
    datum = g.d_ds_tau(a * K_m)
    if lam == mu and ell >= 3 and m in (1, 2):
        e = 1.0 if m == 1 else 1j
        datum = datum + g.d_ds_tau(dot(1j * xi_l, e))
    return datum


def shape_derivative_kirchhoff(bundle: PotentialBundle, lam_ell, mu_m):
    lam, ell = lam_ell
    mu, m = mu_m
    datum = shape_derivative_datum(bundle, lam, ell, mu, m)
    return neumann_from_tangential(bundle.solver, mu + 1, datum, check=False)


# ---------------------------------------------------------------------------
# phantom domain
# ---------------------------------------------------------------------------

@dataclass
class Phantom:
    """Ingredients of u_check_kappa in the domain where body kappa is removed."""
    kappa: int
    others: List[int]
    bundle: PotentialBundle
    psir: Field             # psi^{r, not kappa}_kappa
    velocity: VelocityField
    stream: Field
    h: complex = 0j

    def u(self, z):
        return self.velocity(z)

    def V(self, h=None):
        """(V1..V5): u_check(h) and the strain entries of grad u_check(h)."""
        h = self.h if h is None else h
        u = complex(self.velocity(np.array([h]))[0])
        fp = complex(self.velocity.f_prime(np.array([h]))[0])
        # f = u1 - i u2; f' = d_x u1 - i d_x u2 ; grad u = [[a, b], [b, -a]]
        a, b = fp.real, -fp.imag
        return np.array([u.real, u.imag, 0.0, -a, b])


def phantom_stream(cfg: Configuration, kappa, p=None, gamma=None, vort=None, psihat=None):
    """Solve the kappa-removed problems and return the u_check_kappa evaluator."""
    N = cfg.N
    others = [k for k in range(N) if k != kappa]
    sub = cfg.subset(others)
    pb = PotentialBundle(sub)
    if psihat is None:
        og, bgs = cfg.grids()
        psihat = standalone_stream_on(StandaloneSolver(bgs[kappa]))
    data = [-psihat.trace(g) for g in pb.solver.comps]
    psir = pb.solver.solve_modified(data).field
    p = np.zeros((N, 3)) if p is None else np.asarray(p, dtype=float).reshape(N, 3)
    gamma = np.zeros(N) if gamma is None else np.asarray(gamma, dtype=float)
    Phi = pb.potential_field(p[others])
    terms = [(1.0, pb.circulation_stream(gamma[others])), (gamma[kappa], psir)]
    Psi = FieldSum(terms)
    Pv = ZeroField()
    if vort is not None and vort.all_pos.size:
        Pv = biot_savart_in(pb.solver, vort).stream
    vel = VelocityField(Phi, Psi, Pv)
    return Phantom(kappa, others, pb, psir, vel, FieldSum([(1.0, Psi), (1.0, Pv)]),
                   cfg.bodies[kappa].pose.h)
