"""Limit system: family (i) bodies in the final domain, point vortices in place
of the small bodies, and blob vorticity.

  * big bodies: Newton's law with the final-domain potentials, the point
    vortices entering the vortical forcing with their desingularised velocity;
  * family (ii) vortices: m h'' = gamma (h' - u*_k(h))^perp  (Kutta-Joukowski);
  * family (iii) vortices: h' = u*_k(h)  (point vortex equation);
  * blobs: advected by u*.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence

import numpy as np

from .dynamics import BreachError, FlowEvaluator, FullState
from .geometry import Configuration, Pose, admissibility, point_curve_distance
from .potentials import VorticityField

log = logging.getLogger(__name__)


@dataclass
class LimitState:
    t: float
    cfg: Configuration            # family (i) bodies only
    p: np.ndarray                 # (Nb, 3)
    gamma: np.ndarray             # circulations of the big bodies
    m: np.ndarray
    J: np.ndarray
    h: np.ndarray                 # vortex positions (complex)
    vgam: np.ndarray              # vortex strengths
    vfam: List[str]               # "ii" or "iii" per vortex
    vmass: np.ndarray             # m^1 for (ii) vortices (ignored for (iii))
    hdot: np.ndarray              # velocities of (ii) vortices (complex; unused for (iii))
    blobs: VorticityField = field(default_factory=VorticityField)

    def __post_init__(self):
        Nb = self.cfg.N
        self.p = np.asarray(self.p, dtype=float).reshape(Nb, 3)
        self.gamma = np.asarray(self.gamma, dtype=float).reshape(Nb)
        self.m = np.asarray(self.m, dtype=float).reshape(Nb)
        self.J = np.asarray(self.J, dtype=float).reshape(Nb)
        self.h = np.atleast_1d(np.asarray(self.h, dtype=complex))
        self.vgam = np.atleast_1d(np.asarray(self.vgam, dtype=float))
        self.vmass = np.atleast_1d(np.asarray(self.vmass, dtype=float))
        self.hdot = np.atleast_1d(np.asarray(self.hdot, dtype=complex))
        self.vfam = list(self.vfam)
        n = self.h.size
        if not (self.vgam.size == n and len(self.vfam) == n):
            raise ValueError("vortex records have inconsistent lengths")
        if self.vmass.size != n:
            self.vmass = np.resize(self.vmass, n) if self.vmass.size else np.zeros(n)
        if self.hdot.size != n:
            self.hdot = np.zeros(n, dtype=complex)
        for k, (f, g) in enumerate(zip(self.vfam, self.vgam)):
            if f not in ("ii", "iii"):
                raise ValueError(f"vortex {k}: family must be ii or iii")
            if f == "iii" and g == 0:
                raise ValueError(f"vortex {k}: family (iii) requires a nonzero circulation")
            if f == "ii" and not self.vmass[k] > 0:
                raise ValueError(f"vortex {k}: family (ii) requires a positive mass")

    @property
    def q(self):
        return np.array([b.pose.as_array() for b in self.cfg.bodies]).reshape(self.cfg.N, 3)

    def vorticity(self):
        return VorticityField(self.blobs.pos, self.blobs.gam, self.blobs.delta_b, self.h, self.vgam)

    def as_full(self) -> FullState:
        return FullState(self.t, self.cfg, self.p, self.vorticity(), self.gamma, self.m, self.J)

    def with_arrays(self, t, q, p, h, hdot, pos):
        poses = [Pose(complex(q[k, 0], q[k, 1]), q[k, 2]) for k in range(self.cfg.N)]
        return replace(self, t=t, cfg=self.cfg.with_poses(poses), p=np.array(p), h=np.array(h),
                       hdot=np.array(hdot), blobs=self.blobs.moved(pos))


def check_admissible(state: LimitState):
    cfg = state.cfg
    blobs = state.blobs
    rep = admissibility(cfg, blobs.pos, 2 * blobs.delta_b if blobs.pos.size else 0.0)
    margin = rep.margin
    og, bgs = cfg.grids()
    d = np.inf
    for z in state.h:
        for g in bgs:
            d = min(d, point_curve_distance(g, z))
        d = min(d, point_curve_distance(og, z))
        for w in state.h:
            if w != z:
                d = min(d, abs(w - z))
    margin = min(margin, d - 2 * cfg.delta)
    if not margin > 0:
        raise BreachError(f"limit-system margin {margin:.3e} <= 0 at t={state.t:.6g}", rep)
    return margin


class LimitEvaluator:
    def __init__(self, state: LimitState):
        self.s = state
        self.fe = FlowEvaluator(state.as_full())
        if any(f == "ii" for f in state.vfam):
            # massive vortices are transported with their own velocity h'
            us = self.desingularized()
            pv = np.array([hd if f == "ii" else u for f, hd, u in zip(state.vfam, state.hdot, us)])
            self.fe.point_velocity = pv

    def ustar(self, z):
        """u* at arbitrary points; at a vortex position its own singular part is excluded."""
        return self.fe.velocity(np.atleast_1d(np.asarray(z, dtype=complex)))

    def desingularized(self, k=None):
        v = self.ustar(self.s.h)
        return v if k is None else v[k]


def ustar(state: LimitState):
    return LimitEvaluator(state).ustar


def desingularized(state: LimitState, k: int) -> complex:
    """u*_k(h_k): the self term is excluded exactly by the point kernel."""
    return complex(LimitEvaluator(state).desingularized(k))


def vortex_rhs(state: LimitState, ev: Optional[LimitEvaluator] = None):
    """(h', h'') per vortex; h'' is zero for family (iii)."""
    ev = ev or LimitEvaluator(state)
    us = ev.desingularized()
    hd = np.zeros(state.h.size, dtype=complex)
    hdd = np.zeros(state.h.size, dtype=complex)
    for k, f in enumerate(state.vfam):
        if f == "iii":
            hd[k] = us[k]
        else:
            hd[k] = state.hdot[k]
            hdd[k] = state.vgam[k] * 1j * (state.hdot[k] - us[k]) / state.vmass[k]
    return hd, hdd


def big_body_forces(state: LimitState, ev: Optional[LimitEvaluator] = None):
    ev = ev or LimitEvaluator(state)
    return ev.fe.forces()


def rhs(state: LimitState):
    ev = LimitEvaluator(state)
    nb = state.cfg.N
    if nb:
        fb = ev.fe.forces()
        pdot = fb.pdot
    else:
        fb = None
        pdot = np.zeros((0, 3))
    hd, hdd = vortex_rhs(state, ev)
    bv = ev.ustar(state.blobs.pos) if state.blobs.pos.size else np.zeros(0, dtype=complex)
    return state.p.copy(), pdot, hd, hdd, bv, (fb, ev)


def step_rk4(state: LimitState, dt: float):
    if not dt > 0:
        raise ValueError("dt must be positive")
    y0 = (state.q, state.p, state.h, state.hdot, state.blobs.pos)

    def shift(k, a):
        return state.with_arrays(state.t + a, *[y + a * d for y, d in zip(y0, k[:5])])

    k1 = rhs(state)
    k2 = rhs(shift(k1, dt / 2))
    k3 = rhs(shift(k2, dt / 2))
    k4 = rhs(shift(k3, dt))
    inc = [(a + 2 * b + 2 * c + d) / 6 for a, b, c, d in zip(k1[:5], k2[:5], k3[:5], k4[:5])]
    new = state.with_arrays(state.t + dt, *[y + dt * d for y, d in zip(y0, inc)])
    return new, k1[5]


def energy(state: LimitState, ev: Optional[LimitEvaluator] = None):
    """Renormalised energy (vortex self-energies dropped) plus (ii) kinetic energy."""
    ev = ev or LimitEvaluator(state)
    E = ev.fe.energy() if state.cfg.N else ev.fe.energy(np.zeros((0, 0)))
    for k, f in enumerate(state.vfam):
        if f == "ii":
            E += 0.5 * state.vmass[k] * abs(state.hdot[k]) ** 2
    return E


@dataclass
class LimitTrajectory:
    states: List[LimitState]
    records: List[dict]
    reason: str = "completed"


def run(state: LimitState, dt: float, t_end: float, observers: Sequence[Callable] = (),
        stride=1, keep_states=True) -> LimitTrajectory:
    n = int(round((t_end - state.t) / dt))
    states = [state] if keep_states else []
    records = []
    reason = "completed"
    s = state
    for i in range(n + 1):
        try:
            margin = check_admissible(s)
        except BreachError as e:
            reason = f"breach: {e}"
            log.warning(reason)
            break
        if i < n:
            s_new, (fb, ev) = step_rk4(s, dt)
        else:
            ev = LimitEvaluator(s)
            fb = ev.fe.forces() if s.cfg.N else None
        if i % stride == 0 or i == n:
            circ = fb.circulation if fb is not None else np.zeros(0)
            rec = dict(t=s.t, q=s.q.copy(), p=s.p.copy(), h=s.h.copy(), hdot=s.hdot.copy(),
                       pos=s.blobs.pos.copy(), energy=energy(s, ev), circ=circ, margin=margin)
            records.append(rec)
            for ob in observers:
                ob(s, rec)
        if i == n:
            break
        s = s_new
        if keep_states:
            states.append(s)
    return LimitTrajectory(states, records, reason)
