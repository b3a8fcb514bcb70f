import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.distance import directed_hausdorff

from brokenpde.coefficients import CoefficientModel
from brokenpde.errors import DegenerateGradient
from brokenpde.grid import GridSpec, ScalarField, sample
from brokenpde.nodal import (
    NormalSample,
    clipped_lengths,
    extract_nodal,
    holder_modulus,
    interface_gradient_max,
    nodal_length,
    normal_at,
    normals_along,
    sign_measures,
)
from brokenpde.oracles import transmission_1d
from brokenpde.transforms import w_transform


def test_line_nodal_set():
    ns = extract_nodal(sample("x", GridSpec.square(33)))
    assert np.allclose(ns.segments[..., 0], 0.0)
    assert nodal_length(ns, (0.0, 0.0), 10.0) == pytest.approx(2.0, abs=1e-9)
    assert nodal_length(ns, (0.0, 0.0), 0.5) == pytest.approx(1.0, abs=1e-6)


def test_positive_field_has_empty_nodal_set():
    ns = extract_nodal(sample("x^2+y^2+1", GridSpec.square(33)))
    assert ns.empty and len(ns.segments) == 0
    assert nodal_length(ns) == 0.0


def test_diagonals():
    ns = extract_nodal(sample("x^2-y^2", GridSpec.square(65)))
    assert nodal_length(ns, (0.0, 0.0), 0.5) == pytest.approx(2.0, rel=0.02)


def test_clipped_lengths_analytic():
    seg = np.array([[[-1.0, 0.0], [1.0, 0.0]], [[0.6, 0.6], [0.9, 0.9]]])
    np.testing.assert_allclose(clipped_lengths(seg, (0.0, 0.0), 0.5), [1.0, 0.0], atol=1e-15)
    assert clipped_lengths(np.zeros((0, 2, 2)), (0.0, 0.0), 0.5).sum() == 0.0


def test_1d_sign_changes():
    ns = extract_nodal(sample("x + 0.3", GridSpec.interval(33)))
    np.testing.assert_allclose(ns.sample_points[:, 0], [-0.3], atol=1e-14)


@pytest.mark.parametrize("expr", ["x", "x^2-y^2", "x+0.2*y^3-0.1"])
def test_nodal_length_monotone_in_radius(expr):
    ns = extract_nodal(sample(expr, GridSpec.square(33)))
    lengths = [nodal_length(ns, (0.05, -0.1), r) for r in np.linspace(0.05, 0.85, 17)]
    assert np.all(np.diff(lengths) >= -1e-14)


@pytest.mark.parametrize(
    "expr, expected",
    [("x", (math.pi / 2, math.pi / 2)), ("1", (math.pi, 0.0)), ("-1", (0.0, math.pi))],
)
def test_sign_measures_examples(expr, expected):
    pos, neg = sign_measures(sample(expr, GridSpec.square(65)), (0.0, 0.0), 1.0)
    assert pos == pytest.approx(expected[0], rel=0.01, abs=1e-12)
    assert neg == pytest.approx(expected[1], rel=0.01, abs=1e-12)


def test_sign_measures_transmission_split():
    # the sampled kink moves the interpolated zero by O(h); n = 129 keeps that under 1%
    g = GridSpec.square(129)
    oracle = transmission_1d(2.0, 1.0, -1.0, 1.0)
    X = g.mesh()[0]
    u = ScalarField(g, oracle(X.ravel()).reshape(X.shape))
    d = 1 / 3
    left = math.acos(d) - d * math.sqrt(1 - d * d)  # unit-disk segment x < -1/3
    pos, neg = sign_measures(u, (0.0, 0.0), 1.0)
    assert pos == pytest.approx(math.pi - left, rel=0.01)
    assert neg == pytest.approx(left, rel=0.01)


@given(st.floats(-0.3, 0.3), st.floats(-0.3, 0.3), st.floats(0.1, 0.7))
@settings(max_examples=30, deadline=None)
def test_sign_measures_bounded_by_area(cx, cy, r):
    pos, neg = sign_measures(sample("sin(4*x)+y^2-0.3", GridSpec.square(33)), (cx, cy), r)
    assert pos + neg <= math.pi * r * r * 1.01


def test_normal_examples():
    g = GridSpec.square(33)
    s = normal_at(sample("x", g), (0.0, 0.0), 0.25)
    np.testing.assert_allclose(s.nu, [1.0, 0.0], rtol=0, atol=1e-15)
    s = normal_at(sample("2*x+y", g), (0.0, 0.0), 0.25)
    np.testing.assert_allclose(s.nu, np.array([2.0, 1.0]) / math.sqrt(5), atol=1e-10)
    with pytest.raises(DegenerateGradient):
        normal_at(sample("x^2-y^2", g), (0.0, 0.0), 0.25)


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-0.4, 0.4), st.floats(-0.4, 0.4))
@settings(max_examples=100, deadline=None)
def test_normal_exact_on_affine(a, b, zx, zy):
    if math.hypot(a, b) < 1e-3:
        return
    g = GridSpec.square(33)
    X, Y = g.mesh()
    v = ScalarField(g, a * (X - zx) + b * (Y - zy))
    s = normal_at(v, (zx, zy), 0.3)
    np.testing.assert_allclose(s.nu, np.array([a, b]) / math.hypot(a, b), atol=1e-10)
    assert abs(np.linalg.norm(s.nu) - 1) <= 1e-12


def test_holder_modulus_examples():
    same = [NormalSample(np.array([t, 0.0]), np.array([0.0, 1.0]), 1.0) for t in np.linspace(-0.5, 0.5, 9)]
    assert holder_modulus(same, 0.5) == 0.0
    g = GridSpec.square(33)
    u = sample("x", g)
    ns = extract_nodal(u)
    pts = ns.sample_points[np.abs(ns.sample_points[:, 1]) <= 0.6]
    m = CoefficientModel(s=0, a_plus="2", a_minus="1")
    assert holder_modulus(normals_along(u, m, pts, 0.2), 0.5) <= 1e-6


def test_holder_modulus_needs_two_samples():
    with pytest.raises(ValueError):
        holder_modulus([None, NormalSample(np.zeros(2), np.array([1.0, 0.0]), 1.0)], 0.5)


def test_transform_keeps_nodal_set(broken_s0):
    m, rep = broken_s0
    a = extract_nodal(rep.u).sample_points
    b = extract_nodal(w_transform(rep.u, m).v).sample_points
    dist = max(directed_hausdorff(a, b)[0], directed_hausdorff(b, a)[0])
    assert dist <= rep.u.grid.h


def test_interface_gradient_max():
    g = GridSpec.square(33)
    assert interface_gradient_max(sample("3*x+4*y", g), (0.0, 0.0), 0.5) == pytest.approx(5.0)
    assert interface_gradient_max(sample("1", g)) == 0.0
