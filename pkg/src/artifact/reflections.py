"""Successive reflections for the modified Dirichlet problem.

Small bodies are handled by standalone exterior solves; the outer boundary and
the large (family i) bodies by one modified Dirichlet solve in the final
domain.  The coupling operator T is applied matrix-free and Id + T is
inverted by the fixed point B = A - T(B).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List

import numpy as np

from .geometry import Configuration
from .laplace import (DomainSolver, FieldSum, HarmonicField, ModifiedDirichletSolution,
                      StandaloneSolver)

log = logging.getLogger(__name__)


class ContractionError(RuntimeError):
    def __init__(self, msg, ratios):
        super().__init__(msg)
        self.ratios = ratios


def _sup(data):
    return max(float(np.max(np.abs(d))) if len(d) else 0.0 for d in data)


def _sub(a, b):
    return [x - y for x, y in zip(a, b)]


class ReflectionWorkspace:
    """Solver handles for one configuration.

    Boundary data are lists of nodal arrays ordered as [outer, body_0, ..., body_{N-1}].
    """

    def __init__(self, cfg: Configuration):
        self.cfg = cfg
        self.og, self.bgs = cfg.grids()
        self.big = cfg.big()
        self.small = cfg.small()
        self.final = DomainSolver(self.og, [self.bgs[k] for k in self.big])
        self.standalone = {k: StandaloneSolver(self.bgs[k]) for k in self.small}
        self.comps = [self.og] + list(self.bgs)
        self.log: List[float] = []

    # final-domain correction ----------------------------------------------------
    def gcheck(self, eta):
        """Modified Dirichlet solve in the final domain with the outer / large-body data."""
        data = [eta[0]] + [eta[1 + k] for k in self.big]
        return self.final.solve_modified(data)

    def gcheck_bound(self, eta):
        """Ratio sup|g| / sup|data| measured on all boundary nodes."""
        sol = self.gcheck(eta)
        vals = [sol.field.trace(g) for g in self.comps]
        return _sup(vals) / max(_sup(eta), 1e-300), sol

    # operator T -------------------------------------------------------------------
    def _standalone_fields(self, eta, g):
        out = {}
        for lam in self.small:
            bl = self.bgs[lam]
            fl, _ = self.standalone[lam].solve(eta[1 + lam] - g.trace(bl))
            out[lam] = fl
        return out

    def apply_T(self, eta):
        g = self.gcheck(eta).field
        fs = self._standalone_fields(eta, g)
        out = []
        for ci, grid in enumerate(self.comps):
            acc = np.zeros(grid.M)
            for lam, fl in fs.items():
                if ci == 1 + lam:
                    continue
                acc = acc + fl.trace(grid)
            out.append(acc)
        return out

    def assemble(self, B):
        """m[B] = g[B] + sum_lambda f_lambda[B_lambda - g[B]]."""
        g = self.gcheck(B).field
        fs = self._standalone_fields(B, g)
        return FieldSum([(1.0, g)] + [(1.0, f) for f in fs.values()])

    def invert(self, A, tol=1e-10, max_sweeps=60):
        """Fixed point B = A - T(B); returns (B, sweeps, ratios)."""
        scale = max(_sup(A), 1e-300)
        B = [np.array(a, dtype=float) for a in A]
        if _sup(A) == 0:
            return B, 1, []
        ratios = []
        prev = None
        for it in range(1, max_sweeps + 1):
            TB = self.apply_T(B)
            Bn = _sub(A, TB)
            diff = _sup(_sub(Bn, B))
            if prev is not None and prev > 0:
                ratios.append(diff / prev)
            prev = diff
            B = Bn
            res = _sup(_sub([b + t for b, t in zip(B, self.apply_T(B))], A)) if diff < tol * scale * 10 else np.inf
            if res < tol * scale:
                self.log = ratios
                return B, it, ratios
        self.log = ratios
        raise ContractionError(f"no convergence in {max_sweeps} sweeps (ratios {ratios[-3:]})", ratios)

    def operator_norm(self, modes=3):
        """sup of ||T eta|| over unit probes (Fourier modes on each component)."""
        best = 0.0
        for ci, grid in enumerate(self.comps):
            for k in range(0, modes + 1):
                for fn in ((np.cos,) if k == 0 else (np.cos, np.sin)):
                    eta = [np.zeros(g.M) for g in self.comps]
                    eta[ci] = fn(k * grid.t)
                    best = max(best, _sup(self.apply_T(eta)))
        return best


def solve_final_gcheck(cfg: Configuration, eta):
    ws = ReflectionWorkspace(cfg)
    C, sol = ws.gcheck_bound(eta)
    return sol, C


def apply_T(cfg: Configuration, eta):
    return ReflectionWorkspace(cfg).apply_T(eta)


def invert_id_plus_T(cfg: Configuration, A, tol=1e-10, max_sweeps=60):
    ws = ReflectionWorkspace(cfg)
    B, n, ratios = ws.invert(A, tol, max_sweeps)
    return B, n, ratios


def solve_H_by_reflections(cfg: Configuration, A, tol=1e-12, max_sweeps=80, ws=None):
    """h[A] = m[(Id + T)^{-1} A].  Falls back to the direct solve when the first
    measured sweep ratio exceeds 0.9."""
    ws = ws or ReflectionWorkspace(cfg)
    if not ws.small:
        sol = ws.gcheck(A)
        return sol
    try:
        B, n, ratios = ws.invert(A, tol, max_sweeps)
        if ratios and ratios[0] > 0.9:
            raise ContractionError("first sweep ratio above 0.9", ratios)
    except ContractionError as e:
        log.warning("reflections not contracting (%s); using direct solve", e)
        from .laplace import DomainSolver as _DS
        S = _DS(ws.og, ws.bgs)
        return S.solve_modified(A)
    fld = ws.assemble(B)
    consts = np.array([np.mean(fld.trace(g) - a) for g, a in zip(ws.bgs, A[1:])])
    return ModifiedDirichletSolution(fld, consts)


class ReflectionDomainSolver:
    """Drop-in replacement for DomainSolver.solve_modified based on reflections.

    Zero-flux problems go through (Id + T)^{-1}; problems with prescribed fluxes
    (circulation streams) use the direct solver, built on first use.
    """

    def __init__(self, cfg: Configuration, tol=1e-10, max_sweeps=80):
        self.ws = ReflectionWorkspace(cfg)
        self.tol = tol
        self.max_sweeps = max_sweeps
        self.comps = self.ws.comps
        self.outer = self.ws.og
        self.inner = list(self.ws.bgs)
        self.N = len(self.inner)
        self._direct = None
        self.sweeps: List[int] = []

    @property
    def direct(self):
        if self._direct is None:
            self._direct = DomainSolver(self.ws.og, self.ws.bgs)
        return self._direct

    def solve_modified(self, data, flux=None):
        if flux is not None and np.any(np.asarray(flux) != 0):
            return self.direct.solve_modified(data, flux)
        data = [np.broadcast_to(np.asarray(d, dtype=float), (g.M,)).copy()
                for g, d in zip(self.comps, data)]
        return solve_H_by_reflections(self.ws.cfg, data, self.tol, self.max_sweeps, ws=self.ws)

    def solve_dirichlet(self, data):
        return self.direct.solve_dirichlet(data)
