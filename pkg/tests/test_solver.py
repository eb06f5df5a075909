import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hkflow.domain import Ball, Box, ScalarField, classify_nodes
from hkflow.expression import Expression
from hkflow.operators import OperatorParams, residual_nodal
from hkflow.solver import (SolveOptions, SolverError, compare_fields, gradient_diagnostics,
                           harmonic_extension, newton, radial_oracle, row_scale, solve_dirichlet,
                           solve_on_grid)

DISK = Ball((0.0, 0.0), 1.0)


def test_order_of_accuracy(disk_solutions):
    errs = [e for *_, e in disk_solutions]
    for a, b in zip(errs, errs[1:]):
        assert 3 <= a / b <= 5
    assert all(rep.iterations <= 30 for _, _, rep, _ in disk_solutions)


def test_residual_converged(disk_solutions, p21):
    for grid, u, rep, _ in disk_solutions:
        assert rep.converged
        assert np.max(np.abs(residual_nodal(u, p21) * row_scale(grid))) < 1e-8


@pytest.mark.parametrize("c", [-3.0, 0.5, 7.25])
def test_shift_equivariance(c, p21):
    g = classify_nodes(DISK, 0.1)
    f = Expression("0.3*x1 - 0.2*x2^2", 2)
    u, _ = solve_on_grid(g, f, p21)
    v, _ = solve_on_grid(g, lambda X: f(X) + c, p21)
    assert np.max(np.abs(v.values - u.values - c)) <= 1e-10


def test_lattice_translation_equivariance(p21):
    f = Expression("0.3*x1 + 0.1*x2", 2)
    shift = np.array([0.5, -0.25])
    g1 = classify_nodes(DISK, 0.125)
    g2 = classify_nodes(Ball(tuple(shift), 1.0), 0.125)
    u1, _ = solve_on_grid(g1, f, p21)
    u2, _ = solve_on_grid(g2, lambda X: f(X - shift), p21)
    assert g1.n_nodes == g2.n_nodes
    assert np.allclose(g1.nodes + shift, g2.nodes, atol=1e-14)
    assert np.max(np.abs(u1.values - u2.values)) <= 1e-10


@pytest.mark.parametrize("domain", [DISK, Box((0, 0), (1, 2))])
def test_minimal_mode_reproduces_affine(domain):
    g = classify_nodes(domain, 0.1)
    f = lambda X: 0.4 * X[:, 0] - 1.3 * X[:, 1] + 2
    u, _ = solve_dirichlet(domain, f, OperatorParams(), "minimal", grid=g)
    assert np.max(np.abs(u.nodal - f(g.nodes))) <= 1e-10


@pytest.mark.parametrize("alpha", [0.3, 0.5, 2.0, 3.0])
def test_other_powers_converge(alpha):
    g = classify_nodes(DISK, 0.1)
    P = OperatorParams(2, alpha)
    u, rep = solve_on_grid(g, Expression("0.5*x1", 2), P)
    assert rep.converged
    assert np.max(np.abs(residual_nodal(u, P) * row_scale(g))) < 1e-8


def test_three_dimensional_ball():
    P = OperatorParams(3, 1.0)
    g = classify_nodes(Ball((0, 0, 0), 1.0), 0.2)
    o = radial_oracle(P, 0.0, 1.0, 1e-3)
    u, rep = solve_on_grid(g, o.field, P)
    assert rep.converged and np.max(np.abs(u.nodal - o.field(g.nodes))) < 5e-3


def test_volume_warning():
    g = classify_nodes(Ball((0, 0), 3.0), 0.3)
    _, rep = solve_on_grid(g, 0.0, OperatorParams())
    assert any("uniqueness" in w for w in rep.warnings)


def test_newton_stagnation_reports_history(p21):
    g = classify_nodes(DISK, 0.1)
    u0 = harmonic_extension(g, np.asarray(0.5 * g.bpoints[:, 0] ** 3))
    with pytest.raises(SolverError) as info:
        newton(u0, p21, "translator", SolveOptions(max_steps=1))
    assert len(info.value.history) >= 1


def test_unknown_mode(p21):
    with pytest.raises(ValueError):
        solve_dirichlet(DISK, 0.0, p21, mode="other")


def test_radial_oracle_origin_curvature(p21):
    o = radial_oracle(p21, 0.0, 0.1, 1e-4)
    dr = o.r[1]
    fitted = 2 * (o.u[1] - o.u[0]) / dr**2
    assert fitted == pytest.approx(-0.5, abs=1e-6)


def test_radial_oracle_fourth_order(p21):
    ends = [radial_oracle(p21, 0.0, 4.0, s).u[-1] for s in (0.01, 0.02, 0.04)]
    order = math.log2(abs(ends[2] - ends[1]) / abs(ends[1] - ends[0]))
    assert order >= 3.5


def test_radial_oracle_value_shift(p21):
    a = radial_oracle(p21, 0.0, 1.0, 0.01)
    b = radial_oracle(p21, 2.0, 1.0, 0.01)
    assert np.allclose(b.u - a.u, 2.0, atol=1e-14)


def test_radial_oracle_dense_output(p21):
    o = radial_oracle(p21, 0.0, 1.0, 0.01)
    fine = radial_oracle(p21, 0.0, 1.0, 0.0025)
    r = np.linspace(0, 1, 37)
    assert np.max(np.abs(o(r) - fine(r))) < 1e-9
    assert np.max(np.abs(o.derivative(r) - fine.derivative(r))) < 1e-7


def test_compare_fields_basic(p21):
    g = classify_nodes(DISK, 0.2)
    u = ScalarField(g, np.random.default_rng(0).random(g.size))
    assert compare_fields(u, u + 1.0)["leq"]
    assert not compare_fields(u + 1.0, u)["leq"]
    other = classify_nodes(DISK, 0.2)
    with pytest.raises(ValueError):
        compare_fields(u, ScalarField(other, u.values))


def test_discrete_comparison_random_pairs(p21):
    g = classify_nodes(DISK, 0.125)
    rng = np.random.default_rng(11)
    for _ in range(20):
        c = rng.normal(size=4)
        phi1 = lambda X, c=c: c[0] * X[:, 0] + c[1] * X[:, 1] + c[2] * X[:, 0] * X[:, 1]
        bump = lambda X, c=c: phi1(X) + abs(c[3]) * (1 + X[:, 0]) ** 2
        u1, _ = solve_on_grid(g, phi1, p21)
        u2, _ = solve_on_grid(g, bump, p21)
        assert compare_fields(u1, u2, 1e-8)["leq"]


def test_gradient_diagnostics_affine():
    g = classify_nodes(DISK, 0.1)
    p = np.array([0.6, -0.8])
    u = ScalarField.from_function(g, lambda X: X @ p)
    d = gradient_diagnostics(u)
    assert d["max_interior_gradient"] == pytest.approx(1.0, abs=1e-12)
    assert d["max_boundary_gradient"] == pytest.approx(1.0, abs=1e-12)


def test_gradient_diagnostics_disk(disk_solutions):
    (g1, u1, _, _), (g2, u2, _, _) = disk_solutions[:2]
    d = gradient_diagnostics(u2, coarse=u1)
    assert d["maximum_principle"]
    assert d["relative_change"] < 0.05 and d["stable"]


def test_solve_options_validation():
    with pytest.raises(ValueError):
        SolveOptions(tol=0.0)


@settings(max_examples=8, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(0, 2))
def test_comparison_property(a, b, lift):
    g = classify_nodes(DISK, 0.2)
    P = OperatorParams()
    u1, _ = solve_on_grid(g, lambda X: a * X[:, 0] + b * X[:, 1] ** 2, P)
    u2, _ = solve_on_grid(g, lambda X: a * X[:, 0] + b * X[:, 1] ** 2 + lift * (1 + X[:, 1]), P)
    assert compare_fields(u1, u2)["leq"]
