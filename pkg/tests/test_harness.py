import json

import numpy as np
import pytest

from artifact import dynamics
from artifact.harness import (FitError, central_diff4, convergence_sweep, estimate_checks,
                              modulation_diagnostics, rate_fit, strictly_decreasing, write_jsonl)
from artifact.scenario import parse_scenario

FOUR = {"kind": "fourier", "coeffs": [[1, 1.0, 0.0], [2, 0.15, 0.05], [-1, 0.1, 0.0]]}


def lone_scenario(fam, shape=None, t_end=0.3):
    b = {"shape": shape or {"kind": "ellipse", "a": 1.0, "b": 0.6}, "epsilon": 0.1, "family": fam,
         "gamma": 1.0, "q0": [0.5, 0.0, 0.3], "p0": "limit"}
    return parse_scenario({"spec_version": 1, "name": fam, "domain": {"kind": "disc", "radius": 1.0},
                           "bodies": [b], "numerics": {"dt": 0.01, "t_end": t_end}})


def test_rate_fit_synthetic():
    e = np.array([0.1, 0.05, 0.025, 0.0125])
    for k in (1, 2, 3):
        s, c, r2 = rate_fit(e, 3.0 * e ** k)
        assert abs(s - k) < 1e-10 and abs(c - np.log(3.0)) < 1e-9 and abs(r2 - 1) < 1e-12
    with pytest.raises(FitError):
        rate_fit(e, [1.0, 0.0, 2.0, 1.0])
    with pytest.raises(FitError):
        rate_fit(e[:2], e[:2])


def test_central_diff4_exact_on_quartics():
    t = np.linspace(0, 1, 21)
    y = np.stack([t ** 4 - 2 * t ** 3, np.sin(t)], axis=1)
    d = central_diff4(y, t[1] - t[0])
    assert d.shape == (17, 2)
    assert np.max(np.abs(d[:, 0] - (4 * t[2:-2] ** 3 - 6 * t[2:-2] ** 2))) < 1e-12
    assert np.max(np.abs(d[:, 1] - np.cos(t[2:-2]))) < 1e-6
    assert strictly_decreasing([3, 2, 1]) and not strictly_decreasing([3, 3, 1])


def test_sweep_without_small_bodies_is_exact():
    scn = parse_scenario({"spec_version": 1, "domain": {"kind": "disc", "radius": 2.0},
                          "bodies": [{"shape": {"kind": "ellipse", "a": 0.5, "b": 0.3}, "q0": [0.2, 0, 0],
                                      "p0": [0.1, 0.0, 0.2], "gamma": 0.2}],
                          "numerics": {"dt": 0.05, "t_end": 0.2, "M_outer": 64, "M_body": 32}})
    rows = convergence_sweep(scn, [0.1, 0.05])
    for r in rows:
        assert r["h_error"] == [] and not r["breach"]
        assert r["u_gap_sup"] < 1e-12


def test_sweep_records_breach():
    scn = parse_scenario({"spec_version": 1, "domain": {"kind": "disc", "radius": 1.0},
                          "bodies": [{"shape": {"kind": "ellipse", "a": 1.0, "b": 0.6}, "epsilon": 0.1,
                                      "family": "ii", "gamma": 0.1, "q0": [0.7, 0, 0], "p0": [2.0, 0, 0]}],
                          "numerics": {"dt": 0.02, "t_end": 0.4}})
    rows = convergence_sweep(scn, [0.1])
    assert rows[0]["breach"] and rows[0]["t_reached"] < 0.4


def test_sweep_members_in_threads_match_serial():
    scn = lone_scenario("iii", t_end=0.1)
    a = convergence_sweep(scn, [0.1, 0.05])
    b = convergence_sweep(scn, [0.1, 0.05], threads=2)
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)


def test_modulation_identity_and_beta_scaling():
    betas = []
    for e in (0.1, 0.05, 0.025):
        scn = lone_scenario("ii", FOUR, t_end=0.1)
        tr = dynamics.run(scn.full_state(e), 0.01, 0.1)
        md = modulation_diagnostics(tr.states, 0, 0.01)
        assert np.max(md["identity"]) < 1e-8
        assert md["residual"].shape == (len(tr.states) - 4, 3)
        betas.append(np.max(np.abs(md["beta"])))
    assert abs(rate_fit((0.1, 0.05, 0.025), betas)[0] - 1) < 0.1


def test_estimate_checks_report(tmp_path):
    rep = estimate_checks()
    assert all(v["passed"] for v in rep.values())
    path = tmp_path / "e.jsonl"
    write_jsonl(path, [{"check": k, "passed": v["passed"]} for k, v in rep.items()])
    lines = path.read_text().splitlines()
    assert len(lines) == len(rep) and json.loads(lines[0])["passed"] is True
