import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hkflow.covering import (CoveringError, cone_delta_bound, cone_distances,
                             cone_intersection_x1, cone_ratio_inequality, covered_mask,
                             covering_build, covering_verify, member_contains, member_mask,
                             sphere_intersection_x1)

LN2 = math.log(2)
THETA = math.pi / 6


def test_cylinder_step_condition():
    seq = covering_build("cylinder", 10, LN2, N=0.0, M=1.0, eps=0.9)
    step = seq.positions[1] - seq.positions[0]
    assert step == pytest.approx(0.9)
    assert step < min(math.sqrt(3), 1.0)


def test_cone_ratio_bound_and_default():
    assert cone_delta_bound(THETA, math.log(1.8)) == pytest.approx(5.0)
    seq = covering_build("cone", 8, math.log(1.8), b1=1.0, theta=THETA)
    assert seq.delta0 == pytest.approx(math.sqrt(5))


def test_cone_too_thick():
    with pytest.raises(CoveringError, match="shell too thick for cone angle"):
        covering_build("cone", 4, math.log(2.5), theta=THETA)


@pytest.mark.parametrize("kw", [{"case": "cylinder", "K": 0, "d": LN2},
                                {"case": "cylinder", "K": 3, "d": 0.0},
                                {"case": "cylinder", "K": 3, "d": LN2, "eps": 1.0},
                                {"case": "cone", "K": 3, "d": 0.1, "theta": THETA, "delta0": 1.0},
                                {"case": "tube", "K": 3, "d": LN2}])
def test_build_errors(kw):
    with pytest.raises(CoveringError):
        covering_build(**kw)


def test_membership_examples():
    seq = covering_build("cylinder", 3, LN2, N=0.0, M=1.0)
    assert not member_contains(seq, 1, (-1.5, 0.0))
    assert not member_contains(seq, 3, seq.center(3) + np.array([-1.0, 0.0]))
    assert member_contains(seq, 3, seq.center(3) + np.array([-1.5, 0.0]))
    cone = covering_build("cone", 3, math.log(1.8), theta=THETA)
    assert not member_contains(cone, 1, (0.0, 0.0))
    with pytest.raises(CoveringError):
        member_mask(seq, 4, np.zeros((1, 2)))


def test_cylinder_certified():
    rep = covering_verify(covering_build("cylinder", 10, LN2, M=1.0), 20_000)
    assert rep["pass"] and rep["handoff_samples"] > 0


def test_cone_certified_and_negative_control():
    d = math.log(1.8)
    good = covering_verify(covering_build("cone", 8, d, theta=THETA, delta0=math.sqrt(5)), 20_000)
    assert good["pass"] and good["handoff_samples"] > 0
    bad = covering_verify(covering_build("cone", 8, d, theta=THETA, delta0=6.0), 20_000)
    assert bad["union_violations"] + bad["handoff_violations"] > 0 and not bad["pass"]


def test_cone_intersection_closed_form():
    d, delta0 = math.log(1.8), math.sqrt(5)
    seq = covering_build("cone", 3, d, theta=THETA, delta0=delta0)
    b1, b2 = seq.positions[:2]
    x = sphere_intersection_x1(b1, seq.inner_radius(1), b2, seq.outer_radius(2))
    assert cone_intersection_x1(b1, THETA, d, delta0) == pytest.approx(x, rel=1e-13)


def test_cone_distances_ordering():
    seq = covering_build("cone", 4, math.log(1.8), theta=THETA)
    for k in range(1, 4):
        s, t, s1 = cone_distances(seq, k)
        assert t < s < s1


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 1.2), st.floats(0.02, 1.0))
def test_cone_ratio_inequality_property(theta, d):
    s = math.sin(theta)
    if math.exp(d) * s < 0.999:
        lhs, rhs = cone_ratio_inequality(theta, d)
        assert 1 < lhs < rhs


@settings(max_examples=15, deadline=None)
@given(st.floats(0.3, 0.89), st.floats(0.2, 1.5), st.integers(3, 8))
def test_cylinder_coverage_property(eps, d, K):
    seq = covering_build("cylinder", K, d, M=1.0, eps=eps)
    hi = seq.positions[-1] - math.exp(d)
    if hi > seq.N + 0.1:
        rep = covering_verify(seq, 3000, seed=2)
        assert rep["pass"]


def test_covered_mask_excludes_outside_container():
    seq = covering_build("cylinder", 5, LN2)
    assert not covered_mask(seq, np.array([[1.0, 1.5]]))[0]


@pytest.mark.parametrize("delta0, below", [(math.sqrt(5), True), (1.5, True), (7.0, True), (8.0, False)])
def test_cone_intersection_left_of_tangency(delta0, below):
    # S_k meets the cone wall at x1 = b (1 - sin^2 theta); admissible ratios keep T_{k+1} left of it
    b, d = 1.0, math.log(1.8)
    x = cone_intersection_x1(b, THETA, d, delta0)
    assert (x < b * math.cos(THETA) ** 2) == below
