import numpy as np
import pytest

from artifact import dynamics
from artifact.dynamics import BreachError, FlowEvaluator, FullState, family_masses
from artifact.geometry import Body, BodyShape, Configuration, Pose, disc_shape, xi_field
from artifact.harness import rate_fit
from artifact.potentials import PotentialBundle, VorticityField, assemble_velocity, blob_stream_kernel

ELL = BodyShape("ellipse", a=1.0, b=0.6, M=64)
BIG = BodyShape("ellipse", a=0.6, b=0.35, M=64)


def rest_state():
    cfg = Configuration(disc_shape(2.0, 64), [Body(BIG, 1.0, Pose())], delta=0.05)
    return FullState(0.0, cfg, np.zeros((1, 3)), VorticityField(), [0.0], [1.0], [0.1])


def two_body_state(blob=True):
    cfg = Configuration(disc_shape(3.0, 96),
                        [Body(BIG, 1.0, Pose(-1 + 0.2j, 0.4)),
                         Body(ELL, 0.1, Pose(1 + 0.5j, 0.0), "ii")], delta=0.02)
    vort = VorticityField([0.3 - 1.2j], [0.4], 0.1) if blob else VorticityField()
    return FullState(0.0, cfg, [[0.2, -0.1, 0.3], [0.0, 0.1, 0.0]], vort, [0.3, 0.5], [1.5, 1.0],
                     [0.2, 0.01])


def test_family_masses():
    b = Body(ELL, 0.1, Pose(), "iii")
    m, J = family_masses(b, 2.0, 3.0, 1.0)
    assert np.isclose(m, 0.2) and np.isclose(J, 3e-3)
    assert family_masses(Body(ELL, 0.1, Pose(), "ii"), 2.0, 3.0) == (2.0, pytest.approx(0.03))


def test_rest_state_is_static():
    s = rest_state()
    fb = dynamics.force_terms(s)
    assert np.max(np.abs(fb.T)) < 1e-14 and np.max(np.abs(fb.pdot)) < 1e-14
    qd, pd, bv, _ = dynamics.rhs(s)
    assert np.max(np.abs(qd)) == 0 and np.max(np.abs(pd)) < 1e-14
    s2, _ = dynamics.step_rk4(s, 0.1)
    assert np.max(np.abs(s2.q - s.q)) < 1e-15 and np.max(np.abs(s2.p)) < 1e-14
    assert abs(dynamics.energy(s)) == 0


def test_force_terms_match_classical_form_and_T4():
    fb = dynamics.force_terms(two_body_state())
    assert np.max(np.abs(fb.rhs - fb.classical)) < 1e-8 * np.max(np.abs(fb.rhs))
    assert fb.t4_residual < 1e-8
    assert np.max(np.abs(fb.T[3])) == 0


def test_T6_weight_regression():
    s = two_body_state()
    fb = dynamics.force_terms(s)
    u = assemble_velocity(s.cfg, s.p, s.gamma, s.vort)
    pb = PotentialBundle(s.cfg)
    for k, g in enumerate(s.cfg.grids()[1]):
        W = pb.psihat(k).perp_grad_on(g)
        uk = u.on(g)
        gam = s.gamma[k]
        for j in (1, 2, 3):
            K = xi_field(g, j)[1]
            half = lambda v: 0.5 * g.integrate(np.abs(v) ** 2 * K)
            cross = half(uk) - half(uk - gam * W) - gam ** 2 * half(W)
            assert abs(fb.T[5, k, j - 1] + cross) < 1e-6


def test_mass_matrix_single_ellipse():
    shape = BodyShape("ellipse", a=2, b=1, M=128)
    cfg = Configuration(disc_shape(60.0, 256), [Body(shape, 1.0, Pose())], delta=0.05)
    s = FullState(0.0, cfg, np.zeros((1, 3)), VorticityField(), [0.0], [3.0], [0.5])
    M = dynamics.mass_matrix(s)
    ref = np.diag([3.0, 3.0, 0.5]) + np.pi * np.diag([1.0, 4.0, 1.125])
    assert np.max(np.abs(M - ref)) / np.max(ref) < 2e-3


def test_mass_matrix_family_iii_rescaled_invertible():
    eigs = []
    for e in (0.1, 0.05, 0.025):
        cfg = Configuration(disc_shape(1.0, 128), [Body(ELL, e, Pose(0.3), "iii")], delta=0.01)
        m, J = family_masses(cfg.bodies[0], 1.0, 1.0, 1.0)
        s = FullState(0.0, cfg, np.zeros((1, 3)), VorticityField(), [1.0], [m], [J])
        D = np.diag([1 / e, 1 / e, 1 / e ** 2])
        eigs.append(np.linalg.eigvalsh(D @ dynamics.mass_matrix(s) @ D)[0])
    assert min(eigs) > 0.5 * eigs[0]


def test_mass_matrix_off_diagonal_decay():
    vals, epss = [], (0.1, 0.05, 0.025)
    for e in epss:
        cfg = Configuration(disc_shape(2.0, 128), [Body(ELL, e, Pose(-0.7), "ii"),
                                                   Body(ELL, e, Pose(0.7, 0.5), "ii")], delta=0.01)
        s = FullState(0.0, cfg, np.zeros((2, 3)), VorticityField(), [0, 0], [1, 1], [1, 1])
        vals.append(np.max(np.abs(dynamics.mass_matrix(s)[:2, 3:5])))
    assert rate_fit(epss, vals)[0] >= 3.8


def test_pinned_blob_orbits_at_image_speed():
    cfg = Configuration(disc_shape(1.0, 128), [], delta=0.01)
    s = FullState(0.0, cfg, np.zeros((0, 3)), VorticityField(points=[0.5], point_gam=[1.0]), [], [], [],
                  pinned=True)
    v = FlowEvaluator(s).blob_velocity()[0]
    assert abs(v - 1j / (3 * np.pi)) < 1e-10


def test_mirror_symmetry():
    def state(sign):
        cfg = Configuration(disc_shape(3.0, 96),
                            [Body(BIG, 1.0, Pose(-1 + sign * 0.2j, sign * 0.4)),
                             Body(ELL, 0.1, Pose(1 + sign * 0.5j, 0.0), "ii")], delta=0.02)
        return FullState(0.0, cfg, [[0.2, sign * -0.1, sign * 0.3], [0.0, sign * 0.1, 0.0]],
                         VorticityField([0.3 + sign * -1.2j], [sign * 0.4], 0.1),
                         [sign * 0.3, sign * 0.5], [1.5, 1.0], [0.2, 0.01])
    a = dynamics.rhs(state(1))
    b = dynamics.rhs(state(-1))
    mirror = np.array([1, -1, -1])
    assert np.max(np.abs(a[1] * mirror - b[1])) < 1e-10
    assert np.max(np.abs(np.conj(a[2]) - b[2])) < 1e-12


def test_energy_potential_part_two_paths():
    s = two_body_state(blob=False)
    s.gamma[:] = 0
    fe = FlowEvaluator(s)
    E = fe.energy() - 0.5 * s.p.reshape(-1) @ s.Mg() @ s.p.reshape(-1)
    # boundary form -1/2 \oint Phi d_n Phi with d_n Phi taken from the evaluated gradient
    tot = 0.0
    for g in fe.comps:
        tot += g.integrate(fe.Phi.trace(g) * (fe.Phi.grad_on(g) * np.conj(g.n)).real)
    assert abs(E - 0.5 * tot) < 1e-6 * abs(E)


def test_blob_pair_energy_oracle():
    R, d = 5.0, 0.15
    z1, z2, g1, g2 = 0.3 + 0.2j, -0.4 + 0.1j, 0.4, -0.3
    cfg = Configuration(disc_shape(R, 256), [], delta=0.01)

    def E(pos, gam):
        s = FullState(0.0, cfg, np.zeros((0, 3)), VorticityField(pos, gam, d), [], [], [])
        return FlowEvaluator(s).energy(np.zeros((0, 0)))
    inter = E([z1, z2], [g1, g2]) - E([z1], [g1]) - E([z2], [g2])
    near = blob_stream_kernel(abs(z1 - z2) ** 2, d)
    image = -(np.log(abs(z1 - R ** 2 / np.conj(z2))) + np.log(abs(z2) / R)) / (2 * np.pi)
    assert abs(inter - (-g1 * g2 * (near + image))) < 1e-10


def test_rk4_step_validation_and_breach():
    s = rest_state()
    with pytest.raises(ValueError):
        dynamics.step_rk4(s, 0.0)
    cfg = Configuration(disc_shape(2.0, 64), [Body(BIG, 1.0, Pose(1.2))], delta=0.05)
    s = FullState(0.0, cfg, [[1.0, 0.0, 0.0]], VorticityField(), [0.0], [1.0], [0.1])
    tr = dynamics.run(s, 0.05, 1.0)
    assert tr.reason.startswith("breach")
    with pytest.raises(BreachError):
        dynamics.check_admissible(tr.states[-1].with_arrays(0, np.array([[1.9, 0, 0]]), s.p, s.vort.pos))


def test_conservation_short_run():
    s = two_body_state()
    tr = dynamics.run(s, 0.01, 0.2)
    E = np.array([r["energy"] for r in tr.records])
    C = np.array([r["circ"] for r in tr.records])
    assert tr.reason == "completed"
    assert np.max(np.abs(E - E[0])) / abs(E[0]) < 1e-8
    assert np.max(np.abs(C - C[0])) < 1e-8
    assert all(np.all(st.vort.gam == s.vort.gam) for st in tr.states)
