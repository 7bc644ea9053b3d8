"""Nystrom double-layer solvers for the 2D Laplace equation.

A harmonic field in a (possibly multiply connected) bounded domain is
represented as

    u(x) = D[mu](x) + sum_k A_k log|x - c_k|,

where D is the double-layer potential with the out-of-fluid normal and c_k a
point inside the k-th hole.  The double layer is the real part of the Cauchy
integral F(z) = (1/2 pi i) \\oint mu(zeta)/(zeta - z) dzeta, with the boundary
oriented so that the fluid lies on its left.  F is single valued, so Im F is a
harmonic conjugate of D[mu]; derivatives follow from F' = Cauchy[dmu/dzeta].

Exterior problems for a single body are solved by the inversion
w = rho/(z - h), which maps the exterior to a bounded interior problem.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .geometry import (BoundaryGrid, curve_grid, dot, inside, spectral_derivative)


class SolverError(RuntimeError):
    pass


class InvalidDataError(ValueError):
    pass


def _gkey(grid):
    """Cache key for evaluation matrices on a grid."""
    return ("grid", id(grid), grid.M, complex(grid.z[0]))


# ---------------------------------------------------------------------------
# Cauchy-integral evaluation
# ---------------------------------------------------------------------------

def _cauchy_matrix(comps, targets, own=None):
    """Matrix C with F(z_p) = C @ density for the concatenated boundary.

    Per component the entry at the node closest to the target is adjusted so
    that C applied to a constant returns the exact value of
    (1/2pi i) \\oint dzeta/(zeta - z), i.e. 1 on the outer curve and 0 on holes.
    This singularity subtraction keeps near-boundary evaluation accurate.
    When ``own`` = (component index, node indices) the targets are boundary
    nodes of that component; the diagonal term is then added by the caller.
    """
    targets = np.asarray(targets, dtype=complex)
    blocks = []
    for ci, g in enumerate(comps):
        dzeta = 1j * g.n * g.w
        D = g.z[None, :] - targets[:, None]
        exact = 1.0 if g.outer else 0.0
        if own is not None and own[0] == ci:
            idx = own[1]
            D[np.arange(len(targets)), idx] = 1.0
            C = dzeta[None, :] / D / (2j * np.pi)
            C[np.arange(len(targets)), idx] = 0.0
            C[np.arange(len(targets)), idx] = exact - C.sum(axis=1)
        else:
            j = np.argmin(np.abs(D), axis=1)
            C = dzeta[None, :] / D / (2j * np.pi)
            C[np.arange(len(targets)), j] = 0.0
            C[np.arange(len(targets)), j] = exact - C.sum(axis=1)
        blocks.append(C)
    return np.hstack(blocks)


def _d_dzeta(comps, f):
    """d f/d zeta along every component for concatenated nodal samples."""
    out = np.empty_like(f, dtype=complex)
    o = 0
    for g in comps:
        s = slice(o, o + g.M)
        out[s] = spectral_derivative(np.asarray(f[s], dtype=complex)) / g.zt
        o += g.M
    return out


# ---------------------------------------------------------------------------
# the solver
# ---------------------------------------------------------------------------

class DomainSolver:
    """Dirichlet solver in the domain bounded by ``outer`` with holes ``inner``.

    Unknowns: densities on every component and one log strength per hole.
    Extra equations: zero mean density on every hole.  The square system is
    assembled once and LU-factorised.
    """

    def __init__(self, outer: BoundaryGrid, inner: Sequence[BoundaryGrid] = ()):
        self.outer = outer
        self.inner = list(inner)
        self.comps = [outer] + self.inner
        self.sizes = [g.M for g in self.comps]
        self.offsets = np.cumsum([0] + self.sizes)
        self.Mtot = int(self.offsets[-1])
        self.N = len(self.inner)
        self.centers = np.array([g.center for g in self.inner], dtype=complex)
        for g in self.inner:
            if not inside(g, g.center)[0]:
                raise SolverError("hole centre is not inside its curve")
        self._assemble()
        self._basis = None
        self._eval_cache = {}

    # assembly ---------------------------------------------------------------
    def _assemble(self):
        z = np.concatenate([g.z for g in self.comps])
        n = np.concatenate([g.n for g in self.comps])
        w = np.concatenate([g.w for g in self.comps])
        kdiag = np.concatenate([-dot(g.ztt, g.n) / (4 * np.pi * np.abs(g.zt) ** 2)
                                for g in self.comps])
        self.z_all, self.n_all, self.w_all = z, n, w
        D = z[None, :] - z[:, None]         # y_j - x_i
        np.fill_diagonal(D, 1.0)
        K = dot(n[None, :], D) / (2 * np.pi * np.abs(D) ** 2) * w[None, :]
        K[np.diag_indices_from(K)] = kdiag * w
        Mt, N = self.Mtot, self.N
        A = np.zeros((Mt + N, Mt + N))
        A[:Mt, :Mt] = 0.5 * np.eye(Mt) + K
        for k in range(N):
            A[:Mt, Mt + k] = np.log(np.abs(z - self.centers[k]))
            g = self.inner[k]
            s = slice(self.offsets[k + 1], self.offsets[k + 2])
            A[Mt + k, s] = g.w / g.perimeter
        self.matrix = A
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("error")
                self.lu = lu_factor(A)
        except Exception as e:  # pragma: no cover - singular only for broken geometry
            raise SolverError(f"singular boundary system: {e}")

    def condition(self):
        return float(np.linalg.cond(self.matrix))

    # solves -----------------------------------------------------------------
    def _rhs(self, data):
        """data: list of nodal arrays (outer first) or a concatenated array."""
        if isinstance(data, (list, tuple)):
            if len(data) != len(self.comps):
                raise InvalidDataError("one data array per boundary component expected")
            parts = []
            for g, d in zip(self.comps, data):
                d = np.broadcast_to(np.asarray(d, dtype=float), (g.M,))
                parts.append(d)
            f = np.concatenate(parts)
        else:
            f = np.asarray(data, dtype=float)
            if f.shape[0] != self.Mtot:
                raise InvalidDataError("data size does not match the grid")
        rhs = np.zeros(self.Mtot + self.N + (0 if f.ndim == 1 else 0))
        if f.ndim == 1:
            rhs = np.concatenate([f, np.zeros(self.N)])
        else:
            rhs = np.vstack([f, np.zeros((self.N, f.shape[1]))])
        return rhs

    def _solve_raw(self, rhs):
        x = lu_solve(self.lu, rhs)
        r = rhs - self.matrix @ x
        x = x + lu_solve(self.lu, r)
        return x

    def solve_dirichlet(self, data) -> "HarmonicField":
        x = self._solve_raw(self._rhs(data))
        return HarmonicField(self, x[:self.Mtot], x[self.Mtot:])

    def basis(self):
        """Responses to data 1 on hole k (0 elsewhere) and the flux map."""
        if self._basis is None:
            N, Mt = self.N, self.Mtot
            rhs = np.zeros((Mt + N, N))
            for k in range(N):
                rhs[self.offsets[k + 1]:self.offsets[k + 2], k] = 1.0
            X = self._solve_raw(rhs) if N else np.zeros((Mt, 0))
            mus = X[:Mt]
            As = X[Mt:]
            # flux of A_k log|x - c_k| through hole j (normal into the hole) = -2 pi A_j
            self._basis = (mus, As)
        return self._basis

    def solve_modified(self, data, flux=None) -> "ModifiedDirichletSolution":
        """Harmonic u with u = data + c_k on hole k, u = data on the outer curve and
        prescribed fluxes \\oint_{hole k} d_n u ds = flux_k (default 0)."""
        f = self.solve_dirichlet(data)
        return self._modify(f, flux)

    def _modify(self, f, flux=None):
        mus, As = self.basis()
        target = np.zeros(self.N) if flux is None else -np.asarray(flux, dtype=float) / (2 * np.pi)
        if self.N:
            NA = As
            c = np.linalg.solve(NA, target - f.A)
            mu = f.mu + mus @ c
            A = f.A + As @ c
        else:
            c = np.zeros(0)
            mu, A = f.mu, f.A
        return ModifiedDirichletSolution(HarmonicField(self, mu, A), c)

    def flux_condition(self):
        mus, As = self.basis()
        return float(np.linalg.cond(As)) if self.N else 1.0

    # evaluation helpers -------------------------------------------------------
    def comp_index(self, grid):
        for i, g in enumerate(self.comps):
            if g is grid:
                return i
        return None

    def eval_matrix(self, key, targets):
        """Cached Cauchy matrix for a target set (key identifies it)."""
        if key is None and np.size(targets) <= 4096:
            t = np.ascontiguousarray(np.atleast_1d(targets), dtype=complex)
            key = ("pts", t.tobytes())
        if key is not None and key in self._eval_cache:
            return self._eval_cache[key]
        C = _cauchy_matrix(self.comps, targets)
        if key is not None:
            if len(self._eval_cache) > 256:
                self._eval_cache = {k: v for k, v in self._eval_cache.items() if k[0] in ("own", "origin")}
            self._eval_cache[key] = C
        return C

    def boundary_matrix(self, ci):
        key = ("own", ci)
        if key not in self._eval_cache:
            g = self.comps[ci]
            self._eval_cache[key] = _cauchy_matrix(self.comps, g.z, own=(ci, np.arange(g.M)))
        return self._eval_cache[key]

    def densities(self, mu):
        """mu, dmu/dzeta, d2mu/dzeta2 (concatenated)."""
        g1 = _d_dzeta(self.comps, mu)
        g2 = _d_dzeta(self.comps, g1)
        return mu, g1, g2


# ---------------------------------------------------------------------------
# fields
# ---------------------------------------------------------------------------

class Field:
    """Common interface: value, complex gradient f = u_x - i u_y and its
    complex derivative, at points or on boundary grids."""

    def value(self, z):
        raise NotImplementedError

    def cgrad(self, z):
        raise NotImplementedError

    def cgrad2(self, z):
        raise NotImplementedError

    def trace(self, grid):
        return self.value(grid.z)

    def cgrad_on(self, grid):
        return self.cgrad(grid.z)

    def cgrad2_on(self, grid):
        return self.cgrad2(grid.z)

    def grad(self, z):
        """Gradient as complex-encoded vector u_x + i u_y."""
        return np.conj(self.cgrad(z))

    def grad_on(self, grid):
        return np.conj(self.cgrad_on(grid))

    def perp_grad_on(self, grid):
        return 1j * np.conj(self.cgrad_on(grid))

    def perp_grad(self, z):
        return 1j * np.conj(self.cgrad(z))

    def __add__(self, other):
        return FieldSum([(1.0, self), (1.0, other)])

    def __sub__(self, other):
        return FieldSum([(1.0, self), (-1.0, other)])

    def __mul__(self, a):
        return FieldSum([(float(a), self)])

    __rmul__ = __mul__


class HarmonicField(Field):
    """Re(coef * F) + Re(coef) * sum A_k log|z - c_k| + const, optionally composed
    with the inversion w = rho/(z - h) (exterior fields)."""

    def __init__(self, solver: DomainSolver, mu, A, coef=1.0 + 0j, const=0.0, inversion=None,
                 body_grid=None):
        self.solver = solver
        self.mu = np.asarray(mu, dtype=float)
        self.A = np.asarray(A, dtype=float)
        self.coef = complex(coef)
        self.const = float(const)
        self.inversion = inversion      # (h, rho)
        self.body_grid = body_grid      # body curve mapped onto the solver's outer curve
        self._dens = None

    # construction helpers
    def _copy(self, **kw):
        d = dict(solver=self.solver, mu=self.mu, A=self.A, coef=self.coef, const=self.const,
                 inversion=self.inversion, body_grid=self.body_grid)
        d.update(kw)
        return HarmonicField(**d)

    def conjugate(self):
        """Harmonic conjugate v with grad v = grad^perp u (single valued when A = 0)."""
        scale = max(1.0, float(np.max(np.abs(self.mu))) if self.mu.size else 1.0)
        if self.A.size and np.max(np.abs(self.A)) > 1e-9 * scale:
            raise InvalidDataError("conjugate of a field with net fluxes is multivalued")
        out = self._copy(coef=self.coef * (-1j), const=0.0, A=np.zeros_like(self.A))
        return out

    def scaled(self, a):
        return self._copy(coef=self.coef * a, const=self.const * a, mu=self.mu, A=self.A)

    def shifted(self, c):
        return self._copy(const=self.const + c)

    def combine(self, other, a=1.0, b=1.0):
        """a*self + b*other for fields on the same solver and with equal coef/map."""
        assert other.solver is self.solver and other.coef == self.coef
        return self._copy(mu=a * self.mu + b * other.mu, A=a * self.A + b * other.A,
                          const=a * self.const + b * other.const)

    @property
    def dens(self):
        if self._dens is None:
            self._dens = self.solver.densities(self.mu)
        return self._dens

    # core evaluations on the solver plane (w variable) -------------------------
    def _F(self, C, order, w):
        d = self.dens[order]
        F = C @ d
        if self.solver.N:
            dz = w[:, None] - self.solver.centers[None, :]
            if order == 0:
                L = np.log(np.abs(dz)) @ self.A
            elif order == 1:
                L = (1.0 / dz) @ self.A
            else:
                L = (-1.0 / dz ** 2) @ self.A
        else:
            L = 0.0
        return F, L

    def _plane(self, w, order, key=None):
        C = self.solver.eval_matrix(key, w)
        F, L = self._F(C, order, w)
        if order == 0:
            return (self.coef * F).real + self.coef.real * L
        return self.coef * (F + L)

    def _plane_boundary(self, ci, order):
        """Boundary limit from the fluid side on component ci of the solver."""
        g = self.solver.comps[ci]
        C = self.solver.boundary_matrix(ci)
        d = self.dens[order]
        F = C @ d
        # diagonal term of the subtracted integrand: d'(z_i) dzeta_i/(2 pi i)
        s = slice(self.solver.offsets[ci], self.solver.offsets[ci + 1])
        dd = spectral_derivative(np.asarray(d[s], dtype=complex)) / g.zt
        F = F + dd * (1j * g.n * g.w) / (2j * np.pi)
        w = g.z
        if self.solver.N:
            dz = w[:, None] - self.solver.centers[None, :]
            L = [np.log(np.abs(dz)) @ self.A, (1.0 / dz) @ self.A, (-1.0 / dz ** 2) @ self.A][order]
        else:
            L = 0.0
        if order == 0:
            return (self.coef * F).real + self.coef.real * L
        return self.coef * (F + L)

    # public evaluation ----------------------------------------------------------
    def _map(self, z):
        h, rho = self.inversion
        dz = z - h
        return rho / dz, -rho / dz ** 2, 2 * rho / dz ** 3

    def value(self, z, key=None):
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        if self.inversion is None:
            return self._plane(z, 0, key) + self.const
        w, _, _ = self._map(z)
        return self._plane(w, 0, key) + self.const

    def cgrad(self, z, key=None):
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        if self.inversion is None:
            return self._plane(z, 1, key)
        w, w1, _ = self._map(z)
        return self._plane(w, 1, key) * w1

    def cgrad2(self, z, key=None):
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        if self.inversion is None:
            return self._plane(z, 2, key)
        w, w1, w2 = self._map(z)
        return self._plane(w, 2, key) * w1 ** 2 + self._plane(w, 1, key) * w2

    def _own(self, grid):
        if self.inversion is not None:
            return 0 if grid is self.body_grid else None
        return self.solver.comp_index(grid)

    def trace(self, grid):
        ci = self._own(grid)
        if ci is None:
            return self.value(grid.z, key=_gkey(grid))
        return self._plane_boundary(ci, 0) + self.const

    def cgrad_on(self, grid):
        ci = self._own(grid)
        if ci is None:
            return self.cgrad(grid.z, key=_gkey(grid))
        if self.inversion is None:
            return self._plane_boundary(ci, 1)
        _, w1, _ = self._map(grid.z)
        return self._plane_boundary(ci, 1) * w1

    def cgrad2_on(self, grid):
        ci = self._own(grid)
        if ci is None:
            return self.cgrad2(grid.z, key=_gkey(grid))
        if self.inversion is None:
            return self._plane_boundary(ci, 2)
        _, w1, w2 = self._map(grid.z)
        return self._plane_boundary(ci, 2) * w1 ** 2 + self._plane_boundary(ci, 1) * w2


class FieldSum(Field):
    """Linear combination of fields (possibly on different solvers)."""

    def __init__(self, terms, const=0.0):
        self.terms = [(float(a), f) for a, f in terms]
        self.const = const

    def _acc(self, name, *args):
        out = None
        for a, f in self.terms:
            v = a * getattr(f, name)(*args)
            out = v if out is None else out + v
        return out

    def value(self, z):
        return self._acc("value", z) + self.const

    def cgrad(self, z):
        return self._acc("cgrad", z)

    def cgrad2(self, z):
        return self._acc("cgrad2", z)

    def trace(self, grid):
        return self._acc("trace", grid) + self.const

    def cgrad_on(self, grid):
        return self._acc("cgrad_on", grid)

    def cgrad2_on(self, grid):
        return self._acc("cgrad2_on", grid)

    def conjugate(self):
        return FieldSum([(a, f.conjugate()) for a, f in self.terms])

    def shifted(self, c):
        return FieldSum(self.terms, self.const + c)


class ZeroField(Field):
    def value(self, z):
        return np.zeros(np.shape(np.atleast_1d(z)))

    def cgrad(self, z):
        return np.zeros(np.shape(np.atleast_1d(z)), dtype=complex)

    cgrad2 = cgrad

    def conjugate(self):
        return self


@dataclass
class ModifiedDirichletSolution:
    field: HarmonicField
    constants: np.ndarray


# ---------------------------------------------------------------------------
# interior / exterior convenience solvers
# ---------------------------------------------------------------------------

def solve_interior_dirichlet(grid: BoundaryGrid, data) -> HarmonicField:
    return DomainSolver(grid).solve_dirichlet([np.asarray(data, dtype=float)])


class StandaloneSolver:
    """Exterior problems for one body alone in the plane, by inversion.

    The translated body curve is mapped by w = rho/(z - h) onto a closed curve
    enclosing w = 0; an interior Dirichlet problem is solved there.  For data
    alpha the exterior field is f(z) = theta(w(z)) - theta(0), which decays at
    infinity, and f = alpha + c on the body with c = -theta(0).
    """

    def __init__(self, grid: BoundaryGrid, rho=None):
        self.grid = grid
        h = grid.center
        dz = grid.z - h
        self.h = h
        self.rho = float(np.max(np.abs(dz))) if rho is None else float(rho)
        rho = self.rho
        w = rho / dz
        wt = -rho * grid.zt / dz ** 2
        wtt = 2 * rho * grid.zt ** 2 / dz ** 3 - rho * grid.ztt / dz ** 2
        self.image = curve_grid(w, wt, wtt, outer=True)
        self.solver = DomainSolver(self.image)
        # node k of the body corresponds to node k of the image curve
        self._zero_row = self.solver.eval_matrix(("origin",), np.array([0j]))

    def solve(self, alpha):
        """Return (field, c_hat)."""
        alpha = np.broadcast_to(np.asarray(alpha, dtype=float), (self.grid.M,))
        f = self.solver.solve_dirichlet([alpha])
        theta0 = float((self._zero_row @ f.mu).real[0])
        fld = HarmonicField(self.solver, f.mu, f.A, const=-theta0, inversion=(self.h, self.rho),
                            body_grid=self.grid)
        return fld, -theta0

    def conjugate_solve(self, alpha):
        """Field whose gradient is grad^perp of the standalone solution (decaying)."""
        fld, c = self.solve(alpha)
        F0 = complex((self._zero_row @ fld.mu)[0])
        conj = HarmonicField(self.solver, fld.mu, fld.A, coef=-1j, const=-F0.imag,
                             inversion=(self.h, self.rho), body_grid=self.grid)
        return conj


def solve_exterior_standalone(grid: BoundaryGrid, alpha):
    return StandaloneSolver(grid).solve(alpha)


def check_zero_mean(grid: BoundaryGrid, beta, rtol=1e-8):
    tot = grid.integrate(beta)
    scale = grid.integrate(np.abs(beta)) + 1e-300
    if abs(tot) > rtol * max(scale, grid.perimeter * 1e-300) and abs(tot) > 1e-12:
        raise InvalidDataError(f"Neumann datum has nonzero mean flux {tot:.3e}")


def neumann_from_tangential(solver: DomainSolver, k: int, beta, check=True) -> HarmonicField:
    """Harmonic phi with d_n phi = beta on component k and 0 on the others.

    beta is routed through its tangential primitive B (d B/d tau = beta) and
    the modified Dirichlet problem; phi is the conjugate of the solution,
    so that grad phi = grad^perp f[B].  k indexes solver.comps (0 = outer).
    """
    g = solver.comps[k]
    beta = np.asarray(beta, dtype=float)
    if check:
        check_zero_mean(g, beta)
    B = g.primitive_tau(beta)
    data = [np.zeros(c.M) for c in solver.comps]
    data[k] = B
    sol = solver.solve_modified(data)
    return sol.field.conjugate()


def neumann_standalone(st: StandaloneSolver, beta, check=True) -> HarmonicField:
    g = st.grid
    beta = np.asarray(beta, dtype=float)
    if check:
        check_zero_mean(g, beta)
    B = g.primitive_tau(beta)
    return st.conjugate_solve(B)
