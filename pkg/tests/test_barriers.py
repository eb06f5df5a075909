import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hkflow.barriers import (C3_FLOOR, BarrierError, barrier_constants, barrier_values,
                             barrier_verify, fd_derivatives, gradient_bound, psi_eval,
                             sup_bound_constant)
from hkflow.domain import Annulus, Ball, Box, classify_nodes
from hkflow.expression import Expression
from hkflow.operators import OperatorParams
from hkflow.solver import solve_on_grid

zero = Expression("0", 2)
DISK = Ball((0.0, 0.0), 1.0)


@pytest.fixture(scope="module")
def spec0():
    return barrier_constants(DISK, zero, OperatorParams(2, 1.0), 1.0)


def test_zero_data_constants(spec0):
    assert spec0.a == 0 and spec0.c1 == 0 and spec0.c2 == 0
    assert spec0.c3 == C3_FLOOR
    k = math.expm1(spec0.c3) / spec0.d1 + spec0.nu * spec0.c3 / (1 - spec0.nu * spec0.c3 * spec0.d1)
    assert spec0.k == pytest.approx(k, rel=1e-14) and spec0.k > 0
    assert spec0.H0 == pytest.approx(1.0)


def test_psi_at_zero(spec0):
    psi, dpsi, _ = psi_eval(spec0, 0.0)
    assert psi == 0.0
    assert dpsi == pytest.approx(spec0.k / spec0.c3, rel=1e-15)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
def test_psi_identities(alpha):
    phi = Expression("0.3*x1 + 0.1*x2^2", 2)
    spec = barrier_constants(DISK, phi, OperatorParams(2, alpha), 1.0)
    d = np.linspace(0, spec.d1, 100)
    psi, dpsi, ddpsi = psi_eval(spec, d)
    assert np.max(np.abs(ddpsi + spec.c3 * dpsi**2)) <= 1e-12 * max(1.0, np.max(ddpsi**2) ** 0.5)
    assert np.all(dpsi[1:] >= spec.nu)
    assert psi_eval(spec, spec.d1)[0] >= spec.a + spec.m


def test_psi_outside_range(spec0):
    with pytest.raises(BarrierError):
        psi_eval(spec0, -1e-3)
    with pytest.raises(BarrierError):
        psi_eval(spec0, 2 * spec0.d1)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("phi", ["0", "0.3*x1 + 0.1*x2^2", "sin(x1)*0.5"])
def test_barrier_certified(alpha, phi):
    f = Expression(phi, 2)
    P = OperatorParams(2, alpha)
    spec = barrier_constants(DISK, f, P, 1.0)
    rep = barrier_verify(spec, DISK, f, P, 2000, seed=1)
    assert rep["pass"] and rep["max_plus"] < 0 and rep["max_minus"] < 0


def test_barrier_in_three_dimensions():
    ball = Ball((0.0, 0.0, 0.0), 1.0)
    f = Expression("0.2*x3", 3)
    P = OperatorParams(3, 1.0)
    spec = barrier_constants(ball, f, P, 1.0)
    assert barrier_verify(spec, ball, f, P, 2000)["pass"]


def test_non_mean_convex_rejected():
    with pytest.raises(BarrierError, match="mean convexity violated"):
        barrier_constants(Annulus((0, 0), 0.5, 1.0), zero, OperatorParams(), 1.0)


def test_box_has_no_curvature():
    with pytest.raises(BarrierError):
        barrier_constants(Box((0, 0), (1, 1)), zero, OperatorParams(), 1.0)


def test_barriers_equal_data_on_boundary():
    f = Expression("0.3*x1 - x2^2", 2)
    spec = barrier_constants(DISK, f, OperatorParams(), 1.0)
    Y, _ = DISK.sample_boundary(200, np.random.default_rng(0))
    # sampled points sit within rounding of the circle, where psi has slope k/c3
    tol = 1e-15 * spec.k / spec.c3
    for s in (1, -1):
        assert np.allclose(barrier_values(spec, DISK, f, Y, s), f(Y), rtol=0, atol=tol)


def test_barrier_ordering_on_inner_edge():
    f = Expression("0.3*x1", 2)
    spec = barrier_constants(DISK, f, OperatorParams(), 2.0)
    Y, nrm = DISK.sample_boundary(100, np.random.default_rng(0))
    X = Y + spec.d1 * nrm
    assert np.all(barrier_values(spec, DISK, f, X, +1) >= spec.m - 1e-12)
    assert np.all(barrier_values(spec, DISK, f, X, -1) <= -spec.m + 1e-12)


def test_gradient_bound_zero_data(spec0):
    assert gradient_bound(spec0) == pytest.approx(spec0.k / spec0.c3)


def test_gradient_bound_grows_with_m():
    f = Expression("0.3*x1 + x2^2", 2)
    b1 = gradient_bound(barrier_constants(DISK, f, OperatorParams(), 1.0))
    b2 = gradient_bound(barrier_constants(DISK, f, OperatorParams(), 2.0))
    assert b2 > b1


def test_solution_boundary_slope_below_bound():
    f = Expression("0.3*x1", 2)
    P = OperatorParams()
    g = classify_nodes(DISK, 0.05)
    u, _ = solve_on_grid(g, f, P)
    m = float(np.max(np.abs(u.values)))
    spec = barrier_constants(DISK, f, P, m)
    cols = g.nbr
    cut = cols >= g.n_nodes
    src = np.nonzero(cut)[0]
    quot = np.abs(u.values[cols[cut]] - u.values[src]) / g.arm[cut]
    assert quot.max() <= gradient_bound(spec)


def test_fd_derivatives_quadratic():
    f = Expression("x1^2 + 3*x1*x2", 2)
    X = np.array([[0.2, -0.4]])
    _, g, H = fd_derivatives(f, X)
    assert np.allclose(g, [[0.4 - 1.2, 0.6]], atol=1e-8)
    assert np.allclose(H[0], [[2, 3], [3, 0]], atol=1e-6)


def test_sup_bound_constant():
    assert sup_bound_constant(3.0, 1.0, 2.0) == 1.0
    assert sup_bound_constant(0.5, 1.0, 2.0) == 0.0


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 5.0))
def test_psi_reaches_height(m):
    spec = barrier_constants(DISK, zero, OperatorParams(), m, samples=500)
    assert psi_eval(spec, spec.d1)[0] >= m * (1 - 1e-12)
