"""Scenario files: JSON schema, validation and construction of the initial
full-system and limit-system states."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from .geometry import (Body, BodyShape, Configuration, GeometryError, Pose, admissibility)
from .potentials import VorticityField, disc_patch

SPEC_VERSION = 1


class ScenarioError(ValueError):
    """Validation failure; ``path`` names the offending field (e.g. bodies[0].epsilon)."""

    def __init__(self, path, msg):
        super().__init__(f"{path}: {msg}" if path else msg)
        self.path = path


_TOP = {"spec_version", "name", "domain", "bodies", "blobs", "numerics", "outputs", "sweep"}
_DOMAIN = {"kind", "radius", "center", "a", "b", "coeffs"}
_SHAPE = {"kind", "a", "b", "coeffs"}
_BODY = {"shape", "epsilon", "family", "m1", "J1", "alpha", "gamma", "q0", "p0"}
_BLOBS = {"positions", "strengths", "core", "patches"}
_PATCH = {"center", "radius", "strength", "rings"}
_NUM = {"M_outer", "M_body", "dt", "t_end", "delta", "blob_core", "reflection_tol", "solver"}
_OUT = {"stride", "prefix"}
_SWEEP = {"epsilons", "dt_scale"}

NUMERIC_DEFAULTS = dict(M_outer=128, M_body=64, dt=0.01, t_end=1.0, delta=0.02, blob_core=0.05,
                        reflection_tol=1e-10, solver="direct")


def _keys(d, allowed, path):
    if not isinstance(d, dict):
        raise ScenarioError(path, "expected an object")
    for k in d:
        if k not in allowed:
            raise ScenarioError(f"{path}.{k}" if path else k, "unknown key")


def _num(d, key, path, default=None, positive=False, nonneg=False):
    if key not in d:
        if default is None:
            raise ScenarioError(f"{path}.{key}", "missing required field")
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not np.isfinite(v):
        raise ScenarioError(f"{path}.{key}", "expected a finite number")
    if positive and not v > 0:
        raise ScenarioError(f"{path}.{key}", "must be positive")
    if nonneg and v < 0:
        raise ScenarioError(f"{path}.{key}", "must be non-negative")
    return float(v)


def _vec(d, key, n, path, default=None):
    if key not in d:
        if default is None:
            raise ScenarioError(f"{path}.{key}", "missing required field")
        return list(default)
    v = d[key]
    if not isinstance(v, list) or len(v) != n or not all(
            isinstance(x, (int, float)) and not isinstance(x, bool) and np.isfinite(x) for x in v):
        raise ScenarioError(f"{path}.{key}", f"expected a list of {n} finite numbers")
    return [float(x) for x in v]


def _shape(d, path, M):
    _keys(d, _SHAPE | ({"radius", "center"} if path == "domain" else set()), path)
    kind = d.get("kind")
    try:
        if kind == "ellipse":
            return BodyShape("ellipse", a=_num(d, "a", path, positive=True),
                             b=_num(d, "b", path, positive=True), M=M)
        if kind == "disc":
            r = _num(d, "radius", path, positive=True)
            return BodyShape("ellipse", a=r, b=r, M=M)
        if kind == "fourier":
            cs = d.get("coeffs")
            if not isinstance(cs, list) or not cs:
                raise ScenarioError(f"{path}.coeffs", "expected a list of [k, re, im]")
            coeffs = {}
            for i, c in enumerate(cs):
                if not (isinstance(c, list) and len(c) == 3 and isinstance(c[0], int)):
                    raise ScenarioError(f"{path}.coeffs[{i}]", "expected [k, re, im]")
                coeffs[c[0]] = complex(c[1], c[2])
            return BodyShape("fourier", coeffs=coeffs, M=M)
    except GeometryError as e:
        raise ScenarioError(path, str(e))
    raise ScenarioError(f"{path}.kind", "expected ellipse, disc or fourier")


@dataclass
class BodyEntry:
    shape: BodyShape
    epsilon: float
    family: str
    m1: float
    J1: float
    alpha: float
    gamma: float
    q0: List[float]
    p0: Any                  # list of 3 numbers or "limit"


@dataclass
class Scenario:
    name: str
    outer: BodyShape
    outer_center: complex
    bodies: List[BodyEntry]
    blobs: VorticityField
    numerics: Dict[str, Any]
    outputs: Dict[str, Any]
    sweep: Dict[str, Any] = field(default_factory=dict)
    raw: Dict[str, Any] = field(default_factory=dict, repr=False)

    # construction ------------------------------------------------------------------
    def configuration(self, eps_override: Optional[float] = None) -> Configuration:
        bodies = []
        for b in self.bodies:
            e = b.epsilon if (eps_override is None or b.family == "i") else eps_override
            bodies.append(Body(b.shape, e, Pose(complex(b.q0[0], b.q0[1]), b.q0[2]), b.family))
        return Configuration(self.outer, bodies, self.numerics["delta"], self.outer_center)

    def full_state(self, eps_override: Optional[float] = None):
        from .dynamics import FullState, family_masses
        cfg = self.configuration(eps_override)
        m, J, p = [], [], []
        need_limit = any(isinstance(b.p0, str) for b in self.bodies)
        us = None
        if need_limit:
            from .limitsys import LimitEvaluator
            ls = self.limit_state()
            us = LimitEvaluator(ls).desingularized() if ls.h.size else np.zeros(0)
        small_idx = 0
        for b, body in zip(self.bodies, cfg.bodies):
            mm, JJ = family_masses(body, b.m1, b.J1, b.alpha)
            m.append(mm)
            J.append(JJ)
            if isinstance(b.p0, str):
                u = us[small_idx]
                p.append([u.real, u.imag, 0.0])
            else:
                p.append(b.p0)
            if b.family != "i":
                small_idx += 1
        return FullState(0.0, cfg, np.array(p).reshape(len(p), 3), self.blobs,
                         [b.gamma for b in self.bodies], m, J)

    def limit_state(self):
        from .limitsys import LimitState
        big = [b for b in self.bodies if b.family == "i"]
        small = [b for b in self.bodies if b.family != "i"]
        cfg = Configuration(self.outer, [Body(b.shape, 1.0, Pose(complex(b.q0[0], b.q0[1]), b.q0[2]),
                                              "i") for b in big],
                            self.numerics["delta"], self.outer_center)
        hdot = []
        for b in small:
            hdot.append(0j if isinstance(b.p0, str) else complex(b.p0[0], b.p0[1]))
        st = LimitState(0.0, cfg, np.array([b.p0 for b in big]).reshape(len(big), 3),
                        [b.gamma for b in big], [b.m1 for b in big], [b.J1 for b in big],
                        [complex(b.q0[0], b.q0[1]) for b in small], [b.gamma for b in small],
                        [b.family for b in small], [b.m1 for b in small], hdot, self.blobs)
        if any(isinstance(b.p0, str) and b.family == "ii" for b in small):
            from .limitsys import LimitEvaluator
            us = LimitEvaluator(st).desingularized()
            st.hdot = np.array([us[k] if isinstance(b.p0, str) else st.hdot[k]
                                for k, b in enumerate(small)])
        return st


def parse_scenario(d: Dict[str, Any]) -> Scenario:
    _keys(d, _TOP, "")
    if d.get("spec_version") != SPEC_VERSION:
        raise ScenarioError("spec_version", f"must be {SPEC_VERSION}")
    num = dict(NUMERIC_DEFAULTS)
    nd = d.get("numerics", {})
    _keys(nd, _NUM, "numerics")
    for k, v in nd.items():
        if k == "solver":
            if v not in ("direct", "reflections"):
                raise ScenarioError("numerics.solver", "expected direct or reflections")
            num[k] = v
        elif k in ("M_outer", "M_body"):
            if not isinstance(v, int) or isinstance(v, bool) or v < 16:
                raise ScenarioError(f"numerics.{k}", "expected an integer >= 16")
            num[k] = v
        else:
            num[k] = _num(nd, k, "numerics", positive=True)

    if "domain" not in d:
        raise ScenarioError("domain", "missing required field")
    dom = d["domain"]
    _keys(dom, _DOMAIN, "domain")
    outer = _shape(dom, "domain", num["M_outer"])
    center = _vec(dom, "center", 2, "domain", default=[0.0, 0.0])

    bodies = []
    bl = d.get("bodies", [])
    if not isinstance(bl, list):
        raise ScenarioError("bodies", "expected a list")
    for i, b in enumerate(bl):
        path = f"bodies[{i}]"
        _keys(b, _BODY, path)
        if "shape" not in b:
            raise ScenarioError(f"{path}.shape", "missing required field")
        shape = _shape(b["shape"], f"{path}.shape", num["M_body"])
        fam = b.get("family", "i")
        if fam not in ("i", "ii", "iii"):
            raise ScenarioError(f"{path}.family", "expected i, ii or iii")
        eps = _num(b, "epsilon", path, default=1.0)
        if not 0 < eps <= 1:
            raise ScenarioError(f"{path}.epsilon", "must lie in (0, 1]")
        if fam == "i" and eps != 1.0:
            raise ScenarioError(f"{path}.epsilon", "family (i) bodies have epsilon = 1")
        gamma = _num(b, "gamma", path, default=0.0)
        if fam == "iii" and gamma == 0.0:
            raise ScenarioError(f"{path}.gamma", "family (iii) bodies require a nonzero "
                                "circulation (standing assumption of the limit model)")
        if fam == "iii" and shape.is_disc():
            raise ScenarioError(f"{path}.shape", "family (iii) bodies must not be discs")
        m1 = _num(b, "m1", path, default=1.0, positive=True)
        J1 = _num(b, "J1", path, default=1.0, positive=True)
        alpha = _num(b, "alpha", path, default=1.0 if fam == "iii" else 0.0, nonneg=True)
        if fam == "iii" and not alpha > 0:
            raise ScenarioError(f"{path}.alpha", "family (iii) requires alpha > 0")
        q0 = _vec(b, "q0", 3, path)
        if b.get("p0") == "limit":
            if fam == "i":
                raise ScenarioError(f"{path}.p0", "'limit' is only meaningful for small bodies")
            p0 = "limit"
        else:
            p0 = _vec(b, "p0", 3, path, default=[0.0, 0.0, 0.0])
        bodies.append(BodyEntry(shape, eps, fam, m1, J1, alpha, gamma, q0, p0))

    bd = d.get("blobs", {})
    _keys(bd, _BLOBS, "blobs")
    core = _num(bd, "core", "blobs", default=num["blob_core"], positive=True)
    pos, gam = [], []
    if "positions" in bd or "strengths" in bd:
        P = bd.get("positions", [])
        G = bd.get("strengths", [])
        if not isinstance(P, list) or not isinstance(G, list) or len(P) != len(G):
            raise ScenarioError("blobs.strengths", "positions and strengths must match in length")
        for i, (x, g) in enumerate(zip(P, G)):
            if not (isinstance(x, list) and len(x) == 2):
                raise ScenarioError(f"blobs.positions[{i}]", "expected [x, y]")
            if not isinstance(g, (int, float)) or isinstance(g, bool):
                raise ScenarioError(f"blobs.strengths[{i}]", "expected a number")
            pos.append(complex(x[0], x[1]))
            gam.append(float(g))
    for i, pt in enumerate(bd.get("patches", [])):
        path = f"blobs.patches[{i}]"
        _keys(pt, _PATCH, path)
        c = _vec(pt, "center", 2, path)
        patch = disc_patch(complex(*c), _num(pt, "radius", path, positive=True),
                           _num(pt, "strength", path, default=0.0),
                           int(pt.get("rings", 2)), core)
        pos += list(patch.pos)
        gam += list(patch.gam)
    blobs = VorticityField(np.array(pos, dtype=complex), np.array(gam), core)

    out = {"stride": 1, "prefix": d.get("name", "run")}
    od = d.get("outputs", {})
    _keys(od, _OUT, "outputs")
    if "stride" in od:
        if not isinstance(od["stride"], int) or od["stride"] < 1:
            raise ScenarioError("outputs.stride", "expected a positive integer")
        out["stride"] = od["stride"]
    if "prefix" in od:
        out["prefix"] = str(od["prefix"])

    sw = d.get("sweep", {})
    _keys(sw, _SWEEP, "sweep")
    sweep = {}
    if "epsilons" in sw:
        e = sw["epsilons"]
        if not isinstance(e, list) or not e or not all(isinstance(x, (int, float)) and 0 < x <= 1
                                                       for x in e):
            raise ScenarioError("sweep.epsilons", "expected a list of numbers in (0, 1]")
        sweep["epsilons"] = [float(x) for x in e]
    if "dt_scale" in sw:
        sweep["dt_scale"] = _num(sw, "dt_scale", "sweep", positive=True)

    scn = Scenario(str(d.get("name", "run")), outer, complex(*center), bodies, blobs, num, out,
                   sweep, d)
    # admissibility of the initial configuration
    try:
        cfg = scn.configuration()
        rep = admissibility(cfg, blobs.pos, 2 * core if blobs.pos.size else 0.0)
    except GeometryError as e:
        raise ScenarioError("bodies", str(e))
    if not rep.admissible:
        raise ScenarioError("bodies", f"initial configuration not admissible (margin {rep.margin:.3g})")
    return scn


def load_scenario(path) -> Scenario:
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
    except json.JSONDecodeError as e:
        raise ScenarioError("", f"{path}: JSON parse error at line {e.lineno} column {e.colno}: {e.msg}")
    except OSError as e:
        raise ScenarioError("", f"cannot read {path}: {e}")
    return parse_scenario(d)
