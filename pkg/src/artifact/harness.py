"""Convergence sweeps, estimate checks and modulation diagnostics."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .geometry import (Body, BodyShape, Configuration, Pose, disc_shape, dot, inside, xi_field)
from .laplace import DomainSolver, FieldSum
from .potentials import (PointVortexField, PotentialBundle, VorticityField, biot_savart_in,
                         disc_patch, phantom_stream)

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# fits
# ---------------------------------------------------------------------------

class FitError(ValueError):
    pass


def rate_fit(x, y):
    """Least squares of log y against log x: (slope, intercept, R^2)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 3 or x.size != y.size:
        raise FitError("at least three (x, y) samples are needed")
    if np.any(x <= 0) or np.any(y <= 0):
        raise FitError("log-log fit requires positive samples")
    lx, ly = np.log(x), np.log(y)
    A = np.vstack([lx, np.ones_like(lx)]).T
    (s, c), *_ = np.linalg.lstsq(A, ly, rcond=None)
    res = ly - (s * lx + c)
    tot = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - np.sum(res ** 2) / tot if tot > 0 else 1.0
    return float(s), float(c), float(r2)


def strictly_decreasing(v):
    v = np.asarray(v, dtype=float)
    return bool(np.all(np.diff(v) < 0))


def central_diff4(y, dt):
    """4th-order central differences along axis 0; the two end samples on each side are dropped."""
    y = np.asarray(y)
    return (y[:-4] - 8 * y[1:-3] + 8 * y[3:-1] - y[4:]) / (12 * dt)


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# modulation diagnostics
# ---------------------------------------------------------------------------

def modulation_at(state, kappa):
    """V, alpha, beta, zeta, pbar and B for body kappa at one full-system state."""
    cfg = state.cfg
    B = PotentialBundle(cfg)
    ph = phantom_stream(cfg, kappa, state.p, state.gamma, state.vort, psihat=B.psihat(kappa))
    h = cfg.bodies[kappa].pose.h
    V = ph.V(h)
    zeta = B.conformal_center(kappa)
    alpha = complex(V[0], V[1])
    # beta = grad u_check(h) . zeta
    beta = complex(-V[3] * zeta.real + V[4] * zeta.imag, V[4] * zeta.real + V[3] * zeta.imag)
    p = state.p[kappa]
    pbar = np.array([p[0] - (alpha + beta).real, p[1] - (alpha + beta).imag, p[2]])
    g = B.bgs[kappa]
    dn = dot(B.psihat(kappa).grad_on(g), g.n)
    Bk = np.zeros(3)
    for j in (1, 2, 3):
        xj = xi_field(g, j)[0]
        for k in (1, 2, 3):
            xk = xi_field(g, k)[0]
            Bk[j - 1] += -state.gamma[kappa] * pbar[k - 1] * g.integrate(dn * dot(1j * xk, xj))
    Ma = B.added_mass().Ma[3 * kappa:3 * kappa + 3, 3 * kappa:3 * kappa + 3]
    return dict(V=V, alpha=alpha, beta=beta, zeta=zeta, pbar=pbar, B=Bk, Ma=Ma)


def gyro_identity_residual(mod, p, gamma):
    """|(B1, B2) - [gamma (h' - (alpha + beta))^perp - gamma theta' zeta]|.

    The rotational contribution -gamma theta' zeta is O(epsilon) and vanishes for
    centro-symmetric bodies."""
    hp = complex(p[0], p[1])
    pred = gamma * 1j * (hp - mod["alpha"] - mod["beta"]) - gamma * p[2] * mod["zeta"]
    return abs(complex(mod["B"][0], mod["B"][1]) - pred)


def modulation_diagnostics(states, kappa, dt):
    """Time series of V, alpha, beta, B and the normal-form residual
    R = Mg p' + Ma_k pbar' + 1/2 Ma_k' pbar - B  (derivatives by 4th-order differences)."""
    mods = [modulation_at(s, kappa) for s in states]
    t = np.array([s.t for s in states])
    p = np.array([s.p[kappa] for s in states])
    pbar = np.array([m["pbar"] for m in mods])
    Ma = np.array([m["Ma"] for m in mods])
    Bk = np.array([m["B"] for m in mods])
    Mg = np.diag([states[0].m[kappa], states[0].m[kappa], states[0].J[kappa]])
    out = dict(t=t, V=np.array([m["V"] for m in mods]),
               alpha=np.array([m["alpha"] for m in mods]),
               beta=np.array([m["beta"] for m in mods]),
               zeta=np.array([m["zeta"] for m in mods]), pbar=pbar, B=Bk,
               identity=np.array([gyro_identity_residual(m, s.p[kappa], s.gamma[kappa])
                                  for m, s in zip(mods, states)]))
    if len(states) >= 5:
        dp = central_diff4(p, dt)
        dpb = central_diff4(pbar, dt)
        dMa = central_diff4(Ma, dt)
        sl = slice(2, -2)
        R = (dp @ Mg.T + np.einsum("nij,nj->ni", Ma[sl], dpb)
             + 0.5 * np.einsum("nij,nj->ni", dMa, pbar[sl]) - Bk[sl])
        out["t_residual"] = t[sl]
        out["residual"] = R
    return out


# ---------------------------------------------------------------------------
# convergence sweeps
# ---------------------------------------------------------------------------

def _probe_grid(cfg, n=9, exclude=()):
    og, bgs = cfg.grids()
    R = float(np.max(np.abs(og.z - og.center)))
    xs = np.linspace(-0.9 * R, 0.9 * R, n)
    pts = (xs[:, None] + 1j * xs[None, :]).ravel() + og.center
    pts = pts[inside(og, pts)]
    for g in bgs:
        pts = pts[~inside(g, pts)]
        pts = pts[np.min(np.abs(pts[:, None] - g.z[None, :]), axis=1) > 4 * cfg.delta]
    for h, r in exclude:
        pts = pts[np.abs(pts - h) > r]
    return pts


def _sweep_member(scn, eps, dt, t_end, solver, lt, hstar, small):
    from . import dynamics, limitsys
    st = scn.full_state(eps)
    tr = dynamics.run(st, dt, t_end, solver=solver, keep_states=True)
    n = min(len(tr.records), len(lt.records))
    q = np.array([r["q"] for r in tr.records[:n]])
    err = []
    for a, k in enumerate(small):
        hk = q[:, k, 0] + 1j * q[:, k, 1]
        err.append(float(np.max(np.abs(hk - hstar[:n, a]))) if n else float("nan"))
    rec = dict(epsilon=eps, reason=tr.reason, breach=tr.reason != "completed", steps=n - 1,
               t_reached=float(tr.records[n - 1]["t"]) if n else 0.0, h_error=err,
               h_error_max=float(max(err)) if err else 0.0)
    if n:
        # velocity gap at the last common time, away from the small bodies
        s_full = tr.states[n - 1]
        s_lim = lt.states[n - 1]
        excl = [(complex(s_full.q[k, 0], s_full.q[k, 1]), 0.25) for k in small]
        excl += [(z, 0.25) for z in s_lim.h]
        pts = _probe_grid(s_full.cfg, 9, excl)
        if pts.size:
            uf = dynamics.FlowEvaluator(s_full, solver).velocity(pts)
            ul = limitsys.LimitEvaluator(s_lim).ustar(pts)
            d = np.abs(uf - ul)
            rec["u_gap_sup"] = float(d.max())
            rec["u_gap_l2"] = float(np.sqrt(np.mean(d ** 2)))
        if s_full.vort.pos.size:
            # weak-* proxy: moments of omega against fixed smooth test functions
            zf, zl = s_full.vort.pos, s_lim.blobs.pos
            g = s_full.vort.gam
            mom = [np.sum(g * f(zf)) - np.sum(g * f(zl)) for f in
                   (lambda z: z.real, lambda z: z.imag, lambda z: np.abs(z) ** 2)]
            rec["omega_moment_gap"] = float(np.max(np.abs(mom)))
    return rec, tr


def convergence_sweep(scn, epsilons, dt=None, t_end=None, solver=None, observer=None, threads=1):
    """Full runs per epsilon against one limit run.

    Returns per-epsilon records with sup_t |h_eps - h_star| per small body, velocity
    gaps on a probe grid at the final common time and blob moment gaps. A member that
    breaches admissibility is kept with breach=True and errors up to the breach time."""
    from . import limitsys
    dt = scn.numerics["dt"] if dt is None else dt
    t_end = scn.numerics["t_end"] if t_end is None else t_end
    small = [k for k, b in enumerate(scn.bodies) if b.family != "i"]
    lt = limitsys.run(scn.limit_state(), dt, t_end, keep_states=True)
    hstar = np.array([r["h"] for r in lt.records]).reshape(len(lt.records), -1)
    args = (dt, t_end, solver, lt, hstar, small)
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(threads) as ex:
            res = list(ex.map(lambda e: _sweep_member(scn, e, *args), epsilons))
    else:
        res = [_sweep_member(scn, e, *args) for e in epsilons]
    out = []
    for eps, (rec, tr) in zip(epsilons, res):
        out.append(rec)
        if observer is not None:
            observer(eps, tr, rec)
    errs = [r["h_error_max"] for r in out]
    if len(errs) > 1 and small and not strictly_decreasing(errs):
        log.warning("trajectory error is not monotone in epsilon: %s", errs)
    return out


# ---------------------------------------------------------------------------
# estimate checks
# ---------------------------------------------------------------------------

DEFAULT_EPS = (0.1, 0.05, 0.025, 0.0125)
# asymmetric body with translation/rotation coupling and a nonzero conformal center,
# so that no decay rate is accelerated by symmetry
DEFAULT_SHAPE_COEFFS = {1: 1.0, 2: 0.18 + 0.05j, -1: 0.12, -2: 0.06j}


def _small_cfg(shape, eps, R=2.0, h=0.5 + 0.3j, theta=0.3, M_outer=128):
    return Configuration(disc_shape(R, M_outer), [Body(shape, eps, Pose(h, theta), "iii")],
                         delta=0.01)


def _ring(h, r, n=64):
    return h + r * np.exp(2j * np.pi * np.arange(n) / n)


def kirchhoff_gaps(shape, epsilons=DEFAULT_EPS, js=(1, 3), **kw):
    """sup of |grad phi - grad phi_hat| over the body boundary and a probe ring."""
    out = {j: [] for j in js}
    for e in epsilons:
        cfg = _small_cfg(shape, e, **kw)
        B = PotentialBundle(cfg)
        g = B.bgs[0]
        ring = _ring(g.center, 0.5)
        for j in js:
            d1 = np.abs(B.phi(0, j).grad_on(g) - B.phihat(0, j).grad_on(g))
            d2 = np.abs(B.phi(0, j).grad(ring) - B.phihat(0, j).grad(ring))
            out[j].append(float(max(d1.max(), d2.max())))
    return out


def psir_bound(shape, epsilons=DEFAULT_EPS, **kw):
    vals = []
    for e in epsilons:
        cfg = _small_cfg(shape, e, **kw)
        B = PotentialBundle(cfg)
        g = B.bgs[0]
        og = B.og
        ring = _ring(g.center, 0.5)
        f = B.psir(0)
        vals.append(float(max(np.abs(f.grad_on(g)).max(), np.abs(f.grad(ring)).max(),
                              np.abs(f.grad_on(og)).max())))
    return vals


def H_gaps(shape, epsilons=DEFAULT_EPS, **kw):
    vals = []
    for e in epsilons:
        cfg = _small_cfg(shape, e, **kw)
        B = PotentialBundle(cfg)
        h = B.bgs[0].center
        ring = _ring(h, 1.0)
        # only the part of the ring inside the domain matters; the fields are free-space ones
        d = B.psihat(0).perp_grad(ring) - PointVortexField(h).perp_grad(ring)
        vals.append(float(np.abs(d).max()))
    return vals


def added_mass_gaps(shape, epsilons=DEFAULT_EPS, **kw):
    vals = []
    for e in epsilons:
        cfg = _small_cfg(shape, e, **kw)
        B = PotentialBundle(cfg)
        Ma = B.added_mass().Ma
        Ms = B.standalone_added_mass(0)
        vals.append(float(np.abs(Ma - Ms).max()))
    return vals


def biot_savart_gaps(shape, epsilons=DEFAULT_EPS, **kw):
    """sup over probes (away from the small body) of |K[omega] - K_check[omega]|."""
    vort = disc_patch(-0.8 - 0.5j, 0.2, 1.0, 2)
    vals = []
    for e in epsilons:
        cfg = _small_cfg(shape, e, **kw)
        og, bgs = cfg.grids()
        S = DomainSolver(og, bgs)
        Sc = DomainSolver(og, [])
        k1 = biot_savart_in(S, vort).stream
        k2 = biot_savart_in(Sc, vort).stream
        pts = _probe_grid(cfg, 11, [(bgs[0].center, 0.3)] + [(z, 0.3) for z in [-0.8 - 0.5j]])
        vals.append(float(np.abs(k1.perp_grad(pts) - k2.perp_grad(pts)).max()))
    return vals


def contraction_study(shape, epsilons=(0.1, 0.05, 0.025), R=3.0, M_outer=128):
    """Two small bodies: per-sweep ratios and operator norm of T against the sum of scales."""
    from .reflections import ReflectionWorkspace
    rows = []
    for e in epsilons:
        cfg = Configuration(disc_shape(R, M_outer),
                            [Body(shape, e, Pose(-0.6 + 0.2j, 0.3), "iii"),
                             Body(shape, e, Pose(0.7 - 0.1j, 1.1), "ii")], delta=0.01)
        ws = ReflectionWorkspace(cfg)
        og, bgs = cfg.grids()
        A = [np.zeros(og.M)] + [np.cos(g.t) + 0.3 * np.sin(2 * g.t) for g in bgs]
        _, sweeps, ratios = ws.invert(A, 1e-12)
        rows.append(dict(epsilon=e, sum_eps=2 * e, sweeps=sweeps,
                         ratio=float(max(ratios)) if ratios else 0.0,
                         norm=float(ws.operator_norm())))
    return rows


def estimate_checks(shape: Optional[BodyShape] = None, epsilons=DEFAULT_EPS):
    """All quantitative estimates on one small-body family; slope >= exponent - 0.2."""
    shape = shape or BodyShape("fourier", coeffs=DEFAULT_SHAPE_COEFFS, M=128)
    rep = {}
    kg = kirchhoff_gaps(shape, epsilons)
    for j, expo in ((1, 2.0), (3, 3.0)):
        s, c, r2 = rate_fit(epsilons, kg[j])
        rep[f"kirchhoff_gap_j{j}"] = dict(values=kg[j], slope=s, r2=r2, expected=expo,
                                          passed=bool(s >= expo - 0.2))
    hv = H_gaps(shape, epsilons)
    s, c, r2 = rate_fit(epsilons, hv)
    rep["psihat_to_H"] = dict(values=hv, slope=s, r2=r2, expected=1.0, passed=bool(s >= 0.8))
    am = added_mass_gaps(shape, epsilons)
    s, c, r2 = rate_fit(epsilons, am)
    rep["added_mass_gap"] = dict(values=am, slope=s, r2=r2, expected=2.0, passed=bool(s >= 1.8))
    pr = psir_bound(shape, epsilons)
    rep["psir_bounded"] = dict(values=pr, passed=bool(max(pr) <= 2 * pr[0]))
    bs = biot_savart_gaps(shape, epsilons)
    rep["biot_savart_limit"] = dict(values=bs, passed=strictly_decreasing(bs))
    cs = contraction_study(shape, [e for e in epsilons if e <= 0.1][:3])
    x = [r["sum_eps"] for r in cs]
    y = [r["norm"] for r in cs]
    A = np.vstack([x, np.ones(len(x))]).T
    (a, b), *_ = np.linalg.lstsq(A, y, rcond=None)
    rep["contraction"] = dict(rows=cs, line_slope=float(a), line_intercept=float(b),
                              passed=bool(all(r["ratio"] < 0.5 for r in cs)
                                          and abs(b) < 0.1 * max(y)))
    return rep
