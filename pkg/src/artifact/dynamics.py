"""Full fluid-body system: forces, energy and RK4 time stepping.

Newton's law for the bodies is written in the weak form

    (Mg + Ma) p' = T1 + ... + T7,

where, for body kappa and component j,

  T1 : quadratic shape-derivative term of the potential part,
  T2 : transport of the standalone circulation fields by the body motions,
  T3 : exterior acceleration  -\\oint (d_t u_ext . n) phi_{kappa,j} ds,
  T4 : -1/2 \\oint |gamma_k W_k|^2 K  (zero by Blasius' lemma),
  T5 : -1/2 \\oint |w|^2 K,  w = u - gamma_k W_k,
  T6 : -gamma_k \\oint (w . W_k) K,
  T7 : -\\int omega u^perp . grad phi_{kappa,j}  (sum over blobs),

with W_k = grad^perp psi_hat_k.  A classical boundary form of the same
balance is kept as an independent cross-check.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence

import numpy as np

from .geometry import (Body, Configuration, MarginReport, Pose, admissibility, dot, xi_field)
from .laplace import FieldSum, ZeroField
from .potentials import PotentialBundle, VorticityField, biot_savart_in

log = logging.getLogger(__name__)


class BreachError(RuntimeError):
    """Raised when the configuration leaves the admissible set."""

    def __init__(self, msg, report: Optional[MarginReport] = None):
        super().__init__(msg)
        self.report = report


def family_masses(body: Body, m1: float, J1: float, alpha: float = 0.0):
    """(m, J) of a body from its reference values and scaling family."""
    e = body.eps
    if body.family == "i":
        return m1, J1
    if body.family == "ii":
        return m1, e ** 2 * J1
    return e ** alpha * m1, e ** (alpha + 2) * J1


@dataclass
class FullState:
    t: float
    cfg: Configuration          # carries shapes, scales, families and current poses
    p: np.ndarray               # (N, 3): h1', h2', theta'
    vort: VorticityField
    gamma: np.ndarray           # (N,)
    m: np.ndarray               # (N,)
    J: np.ndarray               # (N,)
    pinned: bool = False        # bodies held fixed (infinite mass)

    def __post_init__(self):
        N = self.cfg.N
        self.p = np.asarray(self.p, dtype=float).reshape(N, 3)
        self.gamma = np.asarray(self.gamma, dtype=float).reshape(N)
        self.m = np.asarray(self.m, dtype=float).reshape(N)
        self.J = np.asarray(self.J, dtype=float).reshape(N)

    @property
    def N(self):
        return self.cfg.N

    @property
    def q(self):
        return np.array([b.pose.as_array() for b in self.cfg.bodies]).reshape(self.N, 3)

    def with_arrays(self, t, q, p, pos):
        poses = [Pose(complex(q[k, 0], q[k, 1]), q[k, 2]) for k in range(self.N)]
        return replace(self, t=t, cfg=self.cfg.with_poses(poses), p=np.array(p),
                       vort=self.vort.moved(pos))

    def Mg(self):
        return np.diag(np.concatenate([[m, m, J] for m, J in zip(self.m, self.J)])) \
            if self.N else np.zeros((0, 0))


@dataclass
class ForceBreakdown:
    T: np.ndarray               # (7, N, 3)
    rhs: np.ndarray             # (N, 3)
    M: np.ndarray               # Mg + Ma
    Ma: np.ndarray
    pdot: np.ndarray            # (N, 3)
    classical: np.ndarray       # (N, 3) right-hand side of the classical form
    t4_residual: float
    blob_velocity: np.ndarray
    energy: float
    circulation: np.ndarray
    bundle: PotentialBundle = field(repr=False, default=None)


def _rigid(z, h, p):
    return (p[0] + 1j * p[1]) + 1j * p[2] * (z - h)


class FlowEvaluator:
    """All boundary quantities of one state (potentials rebuilt from scratch).

    solver: None (direct), a solver built for this configuration, or a factory cfg -> solver.
    point_velocity: transport velocities of the point vortices when they do not move
    with the local flow (massive vortices of the limit system)."""

    def __init__(self, state: FullState, solver=None, point_velocity=None):
        self.s = state
        self.point_velocity = point_velocity
        cfg = state.cfg
        self.cfg = cfg
        if solver is not None and (isinstance(solver, type) or not hasattr(solver, "solve_modified")):
            solver = solver(cfg)         # factory taking the configuration of this state
        self.og, self.bgs = cfg.grids()
        self.comps = [self.og] + list(self.bgs)
        self.B = PotentialBundle(cfg, solver=solver)
        N = cfg.N
        self.N = N
        vort = state.vort
        self.bs = biot_savart_in(self.B.solver, vort) if vort.all_pos.size else None
        self.Phi = self.B.potential_field(state.p)
        terms = [(1.0, self.B.circulation_stream(state.gamma))]
        if self.bs is not None:
            terms.append((1.0, self.bs.stream))
        self.Psi = FieldSum(terms)

    # helpers --------------------------------------------------------------------
    def velocity(self, z):
        return self.Phi.grad(z) + self.Psi.perp_grad(z)

    def blob_velocity(self):
        v = self.s.vort
        if v.all_pos.size == 0:
            return np.zeros(0, dtype=complex)
        return self.velocity(v.all_pos)

    def energy(self, Ma=None):
        s = self.s
        if Ma is None:
            Ma = self.B.added_mass().Ma
        pv = s.p.reshape(-1)
        kin = 0.5 * pv @ ((s.Mg() + Ma) @ pv) if self.N else 0.0
        vort = 0.0
        if s.vort.all_pos.size:
            vort -= float(np.sum(s.vort.all_gam * self.Psi.value(s.vort.all_pos)))
        for k, g in enumerate(self.bgs):
            if s.gamma[k] != 0:
                C = g.integrate(self.Psi.trace(g)) / g.perimeter
                vort -= C * s.gamma[k]
        return float(kin + 0.5 * vort)

    def circulation(self):
        out = []
        for g in self.bgs:
            u = self.Phi.grad_on(g) + self.Psi.perp_grad_on(g)
            out.append(g.integrate(dot(u, g.tau)))
        return np.array(out)

    # forces ---------------------------------------------------------------------
    def forces(self) -> ForceBreakdown:
        s, B, N = self.s, self.B, self.N
        comps, bgs = self.comps, self.bgs
        p, gam = s.p, s.gamma
        hs = [g.center for g in bgs]
        V = [lambda z, k=k: _rigid(z, hs[k], p[k]) for k in range(N)]

        upot = [self.Phi.grad_on(g) for g in comps]
        FPsi = [self.Psi.cgrad_on(g) for g in comps]
        FPsi2 = [self.Psi.cgrad2_on(g) for g in comps]
        uc = [1j * np.conj(F) for F in FPsi]
        u = [a + b for a, b in zip(upot, uc)]
        # standalone circulation fields on every component
        Fh = [[B.psihat(l).cgrad_on(g) for g in comps] for l in range(N)]
        Fh2 = [[B.psihat(l).cgrad2_on(g) for g in comps] for l in range(N)]
        W = [[1j * np.conj(F) for F in row] for row in Fh]

        # phi_{kappa,j} traces and tangential derivatives
        phi_tr = {}
        phi_dt = {}
        for k in range(N):
            for j in (1, 2, 3):
                f = B.phi(k, j)
                for c, g in enumerate(comps):
                    phi_tr[k, j, c] = f.trace(g)
                    if c >= 1:
                        phi_dt[k, j, c] = dot(f.grad_on(g), g.tau)
        Ma = np.zeros((3 * N, 3 * N))
        for k in range(N):
            for j in (1, 2, 3):
                for l, g in enumerate(bgs):
                    for j2 in (1, 2, 3):
                        Ma[3 * k + j - 1, 3 * l + j2 - 1] = g.integrate(phi_tr[k, j, l + 1]
                                                                        * xi_field(g, j2)[1])

        # d_t u_ext . n on every component
        dtun = []
        for c, g in enumerate(comps):
            acc = np.zeros(g.M)
            for l in range(N):
                if gam[l] == 0:
                    continue
                Vl = V[l](g.z)
                dF = -Fh2[l][c] * Vl - 1j * p[l, 2] * Fh[l][c]
                acc -= gam[l] * dot(1j * np.conj(dF), g.n)
            if c >= 1:
                nu = c - 1
                Vn = V[nu](g.z)
                fcp = -1j * FPsi2[c]                 # derivative of conj(u_c)
                acc -= dot(np.conj(fcp * Vn), g.n)
                acc -= p[nu, 2] * dot(uc[c], 1j * g.n)
            dtun.append(acc)

        T = np.zeros((7, N, 3))
        bv = self.blob_velocity()
        vel = bv
        if self.point_velocity is not None and s.vort.points.size:
            vel = np.concatenate([bv[:s.vort.pos.size], self.point_velocity])
        t4res = 0.0
        for k in range(N):
            gk = bgs[k]
            Wk = W[k][k + 1]
            w = u[k + 1] - gam[k] * Wk
            G = []
            for mu in range(N):
                g = bgs[mu]
                Vm = V[mu](g.z)
                G.append(dot(upot[mu + 1] - Vm, g.tau) * dot(Vm, g.n)
                         - p[mu, 2] * dot(p[mu, 0] + 1j * p[mu, 1], g.z - hs[mu]))
            for j in (1, 2, 3):
                K = xi_field(gk, j)[1]
                T[0, k, j - 1] = sum(bgs[mu].integrate(G[mu] * phi_dt[k, j, mu + 1])
                                     for mu in range(N))
                T[1, k, j - 1] = sum(gam[nu] * gk.integrate(dot(V[nu](gk.z), W[nu][k + 1]) * K)
                                     for nu in range(N) if gam[nu] != 0)
                T[2, k, j - 1] = -sum(g.integrate(dtun[c] * phi_tr[k, j, c])
                                      for c, g in enumerate(comps))
                t4 = -0.5 * gam[k] ** 2 * gk.integrate(np.abs(Wk) ** 2 * K)
                t4res = max(t4res, abs(t4))
                T[4, k, j - 1] = -0.5 * gk.integrate(np.abs(w) ** 2 * K)
                T[5, k, j - 1] = -gam[k] * gk.integrate(dot(w, Wk) * K)
                if bv.size:
                    gphi = B.phi(k, j).grad(s.vort.all_pos)
                    T[6, k, j - 1] = -float(np.sum(s.vort.all_gam * dot(1j * vel, gphi)))
        rhs = T.sum(axis=0)

        # classical boundary form
        cl = np.zeros((N, 3))
        fprime = [self.Phi.cgrad2_on(g) - 1j * F2 for g, F2 in zip(comps, FPsi2)]
        for k in range(N):
            gk = bgs[k]
            for j in (1, 2, 3):
                acc = 0.0
                for nu in range(N):
                    g = bgs[nu]
                    c = nu + 1
                    Vn = V[nu](g.z)
                    a = (-p[nu, 2] ** 2 * dot(g.z - hs[nu], g.n)
                         + p[nu, 2] * dot(Vn - u[c], 1j * g.n)
                         - dot(np.conj(fprime[c] * Vn), g.n))
                    acc -= g.integrate(a * phi_tr[k, j, c])
                acc -= 0.5 * gk.integrate(np.abs(u[k + 1]) ** 2 * xi_field(gk, j)[1])
                cl[k, j - 1] = acc + T[6, k, j - 1]

        M = s.Mg() + Ma
        if s.pinned or N == 0:
            pdot = np.zeros((N, 3))
        else:
            try:
                pdot = np.linalg.solve(M, rhs.reshape(-1)).reshape(N, 3)
            except np.linalg.LinAlgError as e:
                raise np.linalg.LinAlgError(f"singular mass matrix: {e}")
        circ = np.array([gk.integrate(dot(u[k + 1], gk.tau)) for k, gk in enumerate(bgs)])
        E = self.energy(Ma)
        return ForceBreakdown(T, rhs, M, Ma, pdot, cl, t4res, bv, E, circ, B)


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def check_admissible(state: FullState) -> MarginReport:
    support = 2 * state.vort.delta_b if state.vort.pos.size else 0.0
    rep = admissibility(state.cfg, state.vort.pos, support)
    if not rep.admissible:
        raise BreachError(f"admissibility margin {rep.margin:.3e} <= 0 at t={state.t:.6g}", rep)
    return rep


def force_terms(state: FullState, solver=None, check=True) -> ForceBreakdown:
    if check:
        check_admissible(state)
    return FlowEvaluator(state, solver).forces()


def mass_matrix(state: FullState) -> np.ndarray:
    B = PotentialBundle(state.cfg)
    M = state.Mg() + B.added_mass().Ma
    M = 0.5 * (M + M.T)
    ev = np.linalg.eigvalsh(M) if M.size else np.zeros(0)
    if ev.size and ev[0] <= 0:
        raise ValueError(f"mass matrix not positive definite (min eigenvalue {ev[0]:.3e})")
    return M


def energy(state: FullState) -> float:
    return FlowEvaluator(state).energy()


def rhs(state: FullState, solver=None, check=False):
    """(q', p', blob velocities) and the force breakdown."""
    fb = force_terms(state, solver, check)
    qdot = np.zeros((state.N, 3)) if state.pinned else state.p.copy()
    return qdot, fb.pdot, fb.blob_velocity, fb


def step_rk4(state: FullState, dt: float, solver=None):
    if not dt > 0:
        raise ValueError("dt must be positive")
    q0, p0, z0 = state.q, state.p, state.vort.pos
    k1 = rhs(state, solver)
    s2 = state.with_arrays(state.t + dt / 2, q0 + dt / 2 * k1[0], p0 + dt / 2 * k1[1],
                           z0 + dt / 2 * k1[2])
    k2 = rhs(s2, solver)
    s3 = state.with_arrays(state.t + dt / 2, q0 + dt / 2 * k2[0], p0 + dt / 2 * k2[1],
                           z0 + dt / 2 * k2[2])
    k3 = rhs(s3, solver)
    s4 = state.with_arrays(state.t + dt, q0 + dt * k3[0], p0 + dt * k3[1], z0 + dt * k3[2])
    k4 = rhs(s4, solver)
    dq = (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]) / 6
    dp = (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]) / 6
    dz = (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2]) / 6
    new = state.with_arrays(state.t + dt, q0 + dt * dq, p0 + dt * dp, z0 + dt * dz)
    return new, k1[3]


@dataclass
class Trajectory:
    states: List[FullState]
    records: List[dict]
    reason: str = "completed"


def run(state: FullState, dt: float, t_end: float, observers: Sequence[Callable] = (),
        solver=None, stride=1, keep_states=True) -> Trajectory:
    """Integrate to t_end with fixed RK4 steps; observers get (state, record) per sample."""
    n = int(round((t_end - state.t) / dt))
    states = [state] if keep_states else []
    records = []
    reason = "completed"
    s = state
    for i in range(n + 1):
        try:
            rep = check_admissible(s)
        except BreachError as e:
            reason = f"breach: {e}"
            log.warning(reason)
            break
        last = None
        if i < n:
            try:
                s_new, fb = step_rk4(s, dt, solver)
            except BreachError as e:
                reason = f"breach: {e}"
                break
            last = fb
        else:
            fb = force_terms(s, solver, check=False)
        if i % stride == 0 or i == n:
            rec = dict(t=s.t, q=s.q.copy(), p=s.p.copy(), pos=s.vort.pos.copy(),
                       energy=fb.energy, circ=fb.circulation.copy(), margin=rep.margin)
            records.append(rec)
            for ob in observers:
                ob(s, rec)
        if i == n:
            break
        s = s_new
        if keep_states:
            states.append(s)
    return Trajectory(states, records, reason)
