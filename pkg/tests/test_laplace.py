import numpy as np
import pytest

from artifact.geometry import BodyShape, Pose, disc_shape, outer_grid, place_body, xi_field
from artifact.laplace import (DomainSolver, InvalidDataError, StandaloneSolver, neumann_from_tangential,
                              neumann_standalone, solve_exterior_standalone, solve_interior_dirichlet)

ELL = BodyShape("ellipse", a=2, b=1, M=256)


def joukowski_oracle(z, a=2.0, b=1.0):
    """Decaying harmonic function equal to x1 on the (a, b) ellipse: a exp(xi0 - xi) cos eta."""
    c = np.sqrt(a * a - b * b)
    w = np.arccosh(z / c)
    w = np.where(w.real < 0, -w, w)
    xi0 = np.arctanh(b / a)
    return a * np.exp(xi0 - w.real) * np.cos(w.imag)


def test_interior_disc_cos():
    g = outer_grid(disc_shape(1.0, 64))
    f = solve_interior_dirichlet(g, np.cos(g.t))
    assert abs(f.value(np.array([0.5 + 0j]))[0] - 0.5) < 1e-12
    assert abs(f.value(np.array([0j]))[0]) < 1e-12
    assert abs(f.grad(np.array([0j]))[0] - 1) < 1e-12


def test_interior_constant_and_ellipse_polynomial():
    g = outer_grid(ELL)
    f = solve_interior_dirichlet(g, np.full(g.M, 2.5))
    pts = np.array([0.3 + 0.2j, -1.2 + 0.1j, 0.5j])
    assert np.max(np.abs(f.value(pts) - 2.5)) < 1e-12
    f = solve_interior_dirichlet(g, (g.z ** 3).real)
    assert np.max(np.abs(f.value(pts) - (pts ** 3).real)) < 1e-8
    assert np.max(np.abs(f.grad(pts) - np.conj(3 * pts ** 2))) < 1e-8


def test_exterior_circle_laurent():
    g = place_body(disc_shape(1.0, 256), 1.0, Pose())
    f, c = solve_exterior_standalone(g, np.cos(g.t))
    assert abs(c) < 1e-12
    assert abs(f.value(np.array([2 + 0j]))[0] - 0.5) < 1e-12
    assert abs(f.grad(np.array([2 + 0j]))[0] - (-0.25)) < 1e-12


def test_exterior_constant_data_invisible():
    g = place_body(ELL, 1.0, Pose(0.3, 0.2))
    f, c = solve_exterior_standalone(g, np.full(g.M, 1.7))
    assert abs(c + 1.7) < 1e-12
    assert np.max(np.abs(f.value(np.array([4 + 1j, -3j])))) < 1e-12


def test_exterior_ellipse_joukowski():
    g = place_body(ELL, 1.0, Pose())
    f, c = solve_exterior_standalone(g, g.z.real)
    pts = np.array([10 + 0j, 3 + 2j, -2.5 - 1.5j, 0.3 + 1.6j])
    assert abs(c) < 1e-10
    assert np.max(np.abs(f.value(pts) - joukowski_oracle(pts))) < 1e-8


def test_modified_dirichlet_zero_and_constraints():
    og = outer_grid(disc_shape(5.0, 128))
    bg = place_body(disc_shape(1.0, 64), 1.0, Pose())
    S = DomainSolver(og, [bg])
    sol = S.solve_modified([np.zeros(og.M), np.zeros(bg.M)])
    assert np.max(np.abs(sol.field.value(np.array([3 + 0j])))) == 0 and sol.constants[0] == 0
    # alpha_Omega = 1, alpha_body = 0 with zero flux: the solution is the constant 1
    sol = S.solve_modified([np.ones(og.M), np.zeros(bg.M)])
    assert abs(sol.field.value(np.array([3 + 0j]))[0] - 1) < 1e-10
    assert abs(sol.constants[0] - 1) < 1e-10


def test_modified_dirichlet_flux_and_trace():
    og = outer_grid(BodyShape("ellipse", a=4, b=3, M=128))
    b1 = place_body(BodyShape("ellipse", a=1, b=0.5, M=64), 0.6, Pose(-1 + 0.5j, 0.4))
    b2 = place_body(disc_shape(0.5, 64), 1.0, Pose(1.5 - 0.5j))
    S = DomainSolver(og, [b1, b2])
    data = [np.cos(og.t), b1.z.real ** 2, np.sin(2 * b2.t)]
    sol = S.solve_modified(data, flux=[0.3, -0.1])
    f = sol.field
    assert np.max(np.abs(f.trace(og) - data[0])) < 1e-10
    for k, g in enumerate((b1, b2)):
        assert np.max(np.abs(f.trace(g) - data[k + 1] - sol.constants[k])) < 1e-10
        flux = g.integrate((f.grad_on(g) * np.conj(g.n)).real)
        assert abs(flux - [0.3, -0.1][k]) < 1e-8
    # adding a constant to one body's data only shifts its constant
    sol2 = S.solve_modified([data[0], data[1] + 2.0, data[2]], flux=[0.3, -0.1])
    pts = np.array([0.5 + 1.5j, -2.5 - 1j])
    assert np.max(np.abs(sol2.field.value(pts) - f.value(pts))) < 1e-8
    assert abs(sol2.constants[0] - sol.constants[0] + 2.0) < 1e-8
    assert S.condition() < 1e3


def test_harmonic_away_from_boundaries():
    og = outer_grid(disc_shape(3.0, 128))
    b = place_body(BodyShape("ellipse", a=1, b=0.6, M=64), 1.0, Pose(0.5, 0.3))
    f = DomainSolver(og, [b]).solve_dirichlet([np.cos(og.t), np.sin(b.t)])
    # mean-value property on a small circle (trapezoid rule is spectrally exact here)
    z0 = -1.2 + 0.7j
    ring = z0 + 0.1 * np.exp(2j * np.pi * np.arange(32) / 32)
    assert abs(np.mean(f.value(ring)) - f.value(np.array([z0]))[0]) < 1e-10


def test_spectral_trace_convergence():
    errs = []
    pts = np.array([0.7 + 0.3j, -1.1 - 0.2j])
    for M in (16, 32):
        g = outer_grid(BodyShape("ellipse", a=2, b=1, M=M))
        f = solve_interior_dirichlet(g, np.exp(g.z.real / 2) * np.cos(g.z.imag / 2))
        ex = np.exp(pts.real / 2) * np.cos(pts.imag / 2)
        errs.append(np.max(np.abs(f.value(pts) - ex)))
    assert errs[1] <= errs[0] / 8


def test_neumann_from_tangential():
    g = place_body(disc_shape(1.0, 128), 1.0, Pose())
    st = StandaloneSolver(g)
    _, K1 = xi_field(g, 1)
    phi = neumann_standalone(st, K1)
    # normal derivative reproduces the datum
    assert np.max(np.abs((phi.grad_on(g) * np.conj(g.n)).real - K1)) < 1e-10
    r = np.array([4.0, 8.0, 16.0, 32.0])
    gr = np.abs(phi.grad(r + 0j))
    slope = np.polyfit(np.log(r), np.log(gr), 1)[0]
    assert abs(slope + 2) < 1e-6
    zero = neumann_standalone(st, np.zeros(g.M))
    assert np.max(np.abs(zero.grad(np.array([2 + 1j])))) < 1e-14
    with pytest.raises(InvalidDataError):
        neumann_standalone(st, np.full(g.M, 0.1 / (2 * np.pi)))
    og = outer_grid(disc_shape(4.0, 128))
    S = DomainSolver(og, [g])
    phi = neumann_from_tangential(S, 1, K1)
    assert np.max(np.abs((phi.grad_on(g) * np.conj(g.n)).real - K1)) < 1e-9
    assert np.max(np.abs((phi.grad_on(og) * np.conj(og.n)).real)) < 1e-9
