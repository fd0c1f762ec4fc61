import math

import numpy as np
from hypothesis import given, settings, strategies as st

from nullitylab.generators import chain_defect_bound, straightness_check, trace_generator
from nullitylab.geometry import second_form, strain
from nullitylab.immersion import (BentFlapDisk, Cone, ConfinementTorus, Cylinder, DomainGrid,
                                  evaluate, sample)
from nullitylab.nullity import FlatForm, cartan_null_vector, is_flat, kernel_basis

angles = st.floats(0.0, 2 * math.pi, allow_nan=False)
radii = st.floats(0.1, 3.0)
unit = st.floats(-1.0, 1.0)


@st.composite
def disk_points(draw, radius=0.95):
    r = radius * math.sqrt(draw(st.floats(0.0, 1.0)))
    t = draw(angles)
    return np.array([r * math.cos(t), r * math.sin(t)])


@st.composite
def isometries(draw):
    which = draw(st.integers(0, 3))
    if which == 0:
        return Cylinder(radius=draw(radii), axis_angle=draw(angles))
    if which == 1:
        return Cone(apex_offset=draw(st.floats(1.2, 4.0)), opening=draw(st.floats(0.1, 1.4)))
    if which == 2:
        return BentFlapDisk(kappa_max=draw(st.floats(0.0, 8.0)), ramp_width=draw(st.floats(0.2, 1.0)))
    return ConfinementTorus(m=2, R_s=draw(st.floats(0.05, 1.0)))


def rotation(theta):
    return np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])


@settings(max_examples=150, deadline=None)
@given(isometries(), disk_points())
def test_strain_zero_and_symmetric(spec, x):
    u = strain(spec, x).entries
    assert np.array_equal(u, u.T)
    assert np.abs(u).max() <= 1e-10


@settings(max_examples=150, deadline=None)
@given(isometries(), disk_points())
def test_sff_flat_and_nullity_bound(spec, x):
    form = FlatForm(second_form(spec, x).components)
    assert is_flat(form)[0]
    k = kernel_basis(form)
    assert k.nu >= 2 * spec.m - spec.d
    if form.dimV > form.dimU:
        p = cartan_null_vector(form).vector
        assert form.kernel_residual(p) <= 1e-9
        assert k.projection_residual(p) <= 1e-8


@settings(max_examples=100, deadline=None)
@given(isometries(), disk_points(), angles, angles)
def test_nullity_invariant_under_rotations(spec, x, a, b):
    sff = second_form(spec, x)
    k = sff.codimension
    Q = rotation(a) if k == 2 else np.array([[-1.0]])
    R = rotation(b)
    base = kernel_basis(FlatForm(sff.components))
    kq = kernel_basis(FlatForm(sff.rotated(Q).components))
    kr = kernel_basis(FlatForm(sff.reparametrized(R).components))
    assert base.nu == kq.nu == kr.nu
    P = base.basis.T @ base.basis
    assert np.allclose(kq.basis.T @ kq.basis, P, atol=1e-9)
    assert np.allclose(R @ kr.basis.T @ kr.basis @ R.T, P, atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(radii, angles, disk_points(0.9), st.booleans())
def test_traced_rulings_certify_both_ways(radius, angle, x, flip):
    spec = Cylinder(radius=radius, axis_angle=angle)
    u = -spec.axis if flip else spec.axis
    seg = trace_generator(spec, x, u)
    assert seg.reason == "boundary"
    if seg.length > 0:
        assert seg.check.collinear and seg.check.isometric_length


@settings(max_examples=60, deadline=None)
@given(radii, st.floats(-0.9, 0.9), st.floats(0.05, 0.6))
def test_circumferential_chords_fail_both_ways(radius, t, half):
    spec = Cylinder(radius=radius)
    r = straightness_check(spec, [t * 0.3, -half], [t * 0.3, half])
    assert r.consistent


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 50), st.floats(0.1, 2), st.floats(0, 1), st.floats(0, 1), st.floats(1.01, 5))
def test_defect_bound_monotone(K, R, e1, e2, C1):
    lo, hi = sorted((e1, e2))
    assert chain_defect_bound(K, R, lo, C1) <= chain_defect_bound(K, R, hi, C1)
    assert chain_defect_bound(K, R, hi, C1) >= 2 * C1 * hi - 1e-15


@settings(max_examples=30, deadline=None)
@given(isometries(), st.sampled_from([21, 31, 41]), st.data())
def test_sampled_grid_reproduces_nodes(spec, res, data):
    if spec.kind == "cone":
        return
    sg = sample(spec, res)
    grid = DomainGrid(2, res)
    idx = data.draw(st.lists(st.integers(0, len(grid.points) - 1), min_size=1, max_size=20))
    stored = sg.values.reshape(-1, spec.d)[grid.flat_index[idx]]
    assert np.array_equal(evaluate(sg, grid.points[idx]), stored)
    assert np.allclose(stored, spec._values(grid.points[idx]), rtol=0, atol=1e-15)
