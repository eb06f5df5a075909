import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hkflow.covering import covering_build
from hkflow.domain import Annulus, ScalarField, classify_nodes
from hkflow.operators import OperatorParams, residual_nodal
from hkflow.special_functions import (AuxProfile, ProfileError, build_profile, cone_family_inputs,
                                      cylinder_family, eta, family_build, growth_ratio,
                                      h_closed_form, h_derivatives, h_eval, h_value, h_value_quad,
                                      phi_cap, radial_Q, shell_radii, supersolution_w,
                                      verify_supersolution, xi, xi_eta)


@pytest.mark.parametrize("rho, n, expected", [(0.5, 2, 4.0), (1.0, 3, 2.0), (7.0, 2, 1.0)])
def test_phi_cap_values(rho, n, expected):
    assert phi_cap(rho, n) == expected


def test_phi_cap_rejects_nonpositive():
    with pytest.raises(ProfileError):
        phi_cap(0.0, 2)


@pytest.mark.parametrize("n", [2, 3, 5])
def test_xi_eta_meeting_point(n):
    assert eta(1 / (2 * (n - 1)), n) == pytest.approx(1.0, abs=1e-15)
    assert xi(1.0, n) == pytest.approx(1 / (2 * (n - 1)), abs=1e-15)


def test_xi_eta_examples():
    assert xi(1.0, 2) == 0.5
    assert xi(math.exp(-1), 2) == pytest.approx(1.5, abs=1e-15)
    assert eta(1.5, 2) == pytest.approx(math.exp(-1), abs=1e-15)


@pytest.mark.parametrize("n", [2, 3])
@pytest.mark.parametrize("t", [0.01, 0.3, 0.99, 1.0, 2.0, 40.0])
def test_xi_matches_quadrature(n, t):
    # integrand 1/(rho^3 Phi(rho)) with the kink at rho = 1 as a breakpoint
    f = lambda r: 1 / r if r < 1 else 1 / ((n - 1) * r**3)
    pts = [t, 1, mp.inf] if t < 1 else [t, mp.inf]
    ref = float(mp.quad(f, pts))
    assert xi(t, n) == pytest.approx(ref, rel=1e-12)


def test_xi_eta_dispatch_and_errors():
    assert xi_eta(2.0, "xi", 2) == xi(2.0, 2)
    assert xi_eta(0.1, "eta", 2) == eta(0.1, 2)
    for bad in [("xi", 0.0), ("xi", -1.0), ("eta", 0.0)]:
        with pytest.raises(ProfileError):
            xi_eta(bad[1], bad[0], 2)
    with pytest.raises(ProfileError):
        xi_eta(1.0, "zeta", 2)


@settings(max_examples=60, deadline=None)
@given(st.floats(1e-3, 10), st.sampled_from([2, 3, 4]))
def test_inverse_pair_property(beta, n):
    assert abs(xi(eta(beta, n), n) - beta) <= 1e-10 * max(1, beta)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 20), st.floats(0.05, 20), st.sampled_from([2, 3]))
def test_xi_decreasing(a, b, n):
    if a < b:
        assert xi(a, n) > xi(b, n)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 50), st.floats(0.1, 50), st.floats(0.05, 3.0))
def test_growth_ratio_decreasing(a, b, alpha):
    if a < b * (1 - 1e-9):
        assert growth_ratio(a, alpha) > growth_ratio(b, alpha)


def test_build_profile_reference_case():
    prof = build_profile(2, 1.0, 0.5, 1.0)
    assert prof.Hstar == 3
    assert prof.d == pytest.approx(1 / 9, abs=1e-15)
    assert growth_ratio(3, 1.0) == pytest.approx(10 / 27)
    assert 10 / 27 <= 0.5 / math.exp(1 / 9)
    rejected = AuxProfile(2, 1.0, 0.5, 1.0, 2.0, xi(2.0, 2) / 0.5)
    assert not rejected.feasible()
    assert growth_ratio(2, 1.0) == pytest.approx(0.625)


def test_build_profile_alpha_three_uses_first_rung():
    prof = build_profile(2, 3.0, 0.5, 1.0)
    assert prof.Hstar == 2 and prof.feasible()
    assert growth_ratio(2.0, 3.0) == pytest.approx(1 / 8)


def test_build_profile_infeasible():
    with pytest.raises(ProfileError, match="profile infeasible"):
        build_profile(2, 1.0, 0.5, 1e7, ladder_max=1000)


def test_build_profile_cone_caps_d():
    theta = math.pi / 6
    prof = build_profile(2, 1.0, 0.5, 0.01, "cone", theta)
    assert prof.d <= 0.5 * math.log(1 / math.sin(theta)) + 1e-15


@pytest.fixture(scope="module")
def prof():
    return build_profile(2, 1.0, 0.5, 1.0)


def test_h_vanishes_at_outer_radius(prof):
    assert h_eval(prof, prof.tau)[0] == 0.0


def test_unit_slope_radius(prof):
    r = prof.L * math.exp(xi(1.0, prof.n) / prof.mu)
    assert h_derivatives(prof, r)[0] == pytest.approx(-1.0, abs=1e-14)


def test_inner_radius_slope_sentinel(prof):
    d1, d2 = h_derivatives(prof, prof.L)
    assert d1 == -np.inf and d2 == np.inf


def test_h_out_of_range(prof):
    with pytest.raises(ProfileError):
        h_eval(prof, prof.tau * 1.01)
    with pytest.raises(ProfileError):
        h_eval(prof, 0.5 * prof.L)


@pytest.mark.parametrize("n, alpha, mu", [(2, 1.0, 0.5), (3, 0.5, 0.3), (2, 2.0, 0.8)])
def test_h_value_matches_closed_form_and_quad(n, alpha, mu):
    p = build_profile(n, alpha, mu, 1.3)
    r = np.linspace(p.L, p.tau, 41)
    ref = h_closed_form(p, r)
    assert np.allclose(h_value(p, r), ref, rtol=1e-11, atol=1e-13)
    for x in r[::8]:
        assert h_value_quad(p, x) == pytest.approx(h_closed_form(p, x), rel=1e-10, abs=1e-13)


def test_h_derivative_matches_value_difference(prof):
    # Richardson-extrapolated central difference of h against h'
    r = np.linspace(prof.L, prof.tau, 12)[1:-1]
    e = 1e-3 * np.minimum(r - prof.L, prof.tau - r)
    c1 = (h_value(prof, r + e) - h_value(prof, r - e)) / (2 * e)
    c2 = (h_value(prof, r + e / 2) - h_value(prof, r - e / 2)) / e
    fd = (4 * c2 - c1) / 3
    assert np.allclose(fd, h_derivatives(prof, r)[0], rtol=1e-7)


def test_profile_identity_against_mpmath(prof):
    rng = np.random.default_rng(5)
    r = prof.L + (prof.tau - prof.L) * rng.random(100)
    n, mu, L = prof.n, prof.mu, prof.L
    c = mp.mpf(1) / (2 * (n - 1))

    def dh(x):
        beta = mu * mp.log(x / L)
        return -(1 / mp.sqrt(2 * (n - 1) * beta) if beta < c else mp.exp(c - beta))

    _, d2 = h_derivatives(prof, r)
    ref = np.array([float(mp.diff(dh, mp.mpf(x))) for x in r])
    assert np.max(np.abs(d2 - ref) / np.abs(ref)) <= 1e-6


def test_supersolution_symmetry_and_monotonicity(prof):
    c = np.array([0.3, -0.2])
    rad = 0.5 * (prof.L + prof.tau)
    pts = c + rad * np.array([[1.0, 0.0], [0.0, 1.0], [-math.sqrt(0.5), -math.sqrt(0.5)]])
    vals = supersolution_w(prof, c, pts)
    assert np.ptp(vals) <= 1e-14
    rs = np.linspace(prof.L, prof.tau, 50)[1:]
    w = supersolution_w(prof, (0, 0), np.column_stack([rs, np.zeros_like(rs)]))
    assert np.all(np.diff(w) < 0)
    assert supersolution_w(prof, (0, 0), np.array([prof.tau, 0.0])) == 0.0
    with pytest.raises(ProfileError):
        supersolution_w(prof, (0, 0), np.array([prof.L, 0.0]))


def test_verify_supersolution_reference_and_negative_control(prof):
    rep = verify_supersolution(prof)
    assert rep["max_residual"] < 0 and rep["pass"]
    broken = AuxProfile(2, 1.0, 0.5, 1.0, 1.01, xi(1.01, 2) / 0.5)
    bad = verify_supersolution(broken, samples=shell_radii(broken))
    assert bad["max_residual"] > 0 and not bad["pass"]


def test_verify_supersolution_rejects_points_outside(prof):
    with pytest.raises(ProfileError):
        verify_supersolution(prof, samples=np.array([prof.L]))


def test_grid_residual_matches_radial_formula(prof):
    # compare on nodes at least 2h inside the shell
    P = OperatorParams(2, 1.0)
    errs = []
    for h in (0.004, 0.002):
        g = classify_nodes(Annulus((0.0, 0.0), prof.L, prof.tau), h)
        u = ScalarField(g, h_value(prof, np.clip(np.linalg.norm(g.points, axis=1), prof.L, prof.tau)))
        r = np.linalg.norm(g.nodes, axis=1)
        sel = g.interior & (r > prof.L + 0.03) & (r < prof.tau - 2 * h)
        errs.append(float(np.max(np.abs(residual_nodal(u, P)[sel] - radial_Q(prof, r[sel], P)))))
    assert errs[0] / errs[1] > 3.0


def test_cylinder_family_overlaps():
    fam = cylinder_family(0.0, 1.0, OperatorParams(2, 1.0), 0.5, 6.0)
    assert fam.check_overlaps(1000)["pass"]
    assert np.all(np.diff(fam.offsets) > 0)


def test_first_member_vanishes_on_outer_sphere(prof):
    cov = covering_build("cylinder", 3, prof.d, N=0.0, M=1.0)
    fam = family_build(cov, None, prof)
    ang = np.linspace(0.6, 2.5, 5)
    X = cov.center(1) + prof.tau * np.column_stack([np.cos(ang), np.sin(ang)])
    # the first member's region is empty in the container (a_1 = N); the formula still applies
    assert np.allclose(fam.member(1, X, check=False), 0.0, atol=1e-14)


def test_family_cap_outside_is_inf(prof):
    fam = cylinder_family(0.0, 1.0, OperatorParams(2, 1.0), 0.5, 3.0)
    assert np.isinf(fam.cap(np.array([[-1.0, 0.0]])))[0]


def test_cone_family_overlaps():
    unit, cov = cone_family_inputs(2, 1.0, 0.5, math.pi / 6, 1.0, 5)
    fam = family_build(cov, None, unit)
    assert fam.check_overlaps(1000)["pass"]
    for k in range(1, cov.K + 1):
        assert verify_supersolution(fam.member_profile(k))["pass"]


def test_family_evaluation_outside_member_errors():
    fam = cylinder_family(0.0, 1.0, OperatorParams(2, 1.0), 0.5, 3.0)
    with pytest.raises(ProfileError):
        fam.member(1, np.array([[50.0, 0.0]]))
