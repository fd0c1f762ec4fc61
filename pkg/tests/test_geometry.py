import warnings

import numpy as np
import pytest

from conftest import fd_jets, isometric_families, random_disk_points
from nullitylab.errors import MarginError, UnsupportedError
from nullitylab.geometry import (IsometryWarning, codazzi_residual, gauss_residual,
                                 gaussian_curvature, induced_metric, isometry_status,
                                 normal_frame, principal_curvatures, second_form,
                                 second_form_field, shape_operator, strain)
from nullitylab.immersion import (BentFlapDisk, ConfinementTorus, Cylinder, DomainGrid, Plane,
                                  ScaledPlane, SphereChart, central_difference, jet)


def random_rotation(rng, n):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def test_torus_strain_zero():
    spec = ConfinementTorus(m=2, R_s=0.3)
    for x in random_disk_points(np.random.default_rng(0), 10):
        assert strain(spec, x).max_abs <= 1e-15


def test_scaled_plane_strain():
    assert np.allclose(strain(ScaledPlane(c=2.0), [0.1, 0.2]).entries, 3 * np.eye(2))


def test_cylinder_strain_oracle():
    spec = Cylinder(radius=0.37, axis_angle=1.1)
    for x in random_disk_points(np.random.default_rng(1), 10):
        Jo, _ = fd_jets(spec, x, h=1e-6)
        u = strain(spec, x)
        assert u.max_abs <= 1e-12
        assert np.array_equal(u.entries, u.entries.T)
        assert np.allclose(u.entries, Jo.T @ Jo - np.eye(2), atol=1e-8)


@pytest.mark.parametrize("spec", isometric_families(), ids=lambda s: s.kind)
def test_normal_frame_invariants(spec):
    for x in random_disk_points(np.random.default_rng(2), 8, spec.m, 0.9):
        if not spec.analysis_mask(x[None])[0]:
            continue
        nf = normal_frame(spec, x)
        G = nf.vectors @ nf.vectors.T
        assert np.allclose(G, np.eye(spec.d - spec.m), atol=1e-12)
        assert np.abs(nf.vectors @ jet(spec, x).jacobian).max() <= 1e-10


def test_plane_normal():
    assert np.array_equal(normal_frame(Plane(), [0.2, 0.1]).vectors, [[0.0, 0.0, 1.0]])


def test_cylinder_normal_is_cross_product():
    spec = Cylinder(radius=0.5)
    x = np.array([0.2, 0.3])
    J = jet(spec, x).jacobian
    n = np.cross(J[:, 0], J[:, 1])
    nf = normal_frame(spec, x).vectors[0]
    assert abs(abs(nf @ n) - 1) <= 1e-12


def test_torus_m1_normal_radial():
    spec = ConfinementTorus(m=1, R_s=0.4)
    y = jet(spec, [0.3]).value
    n = normal_frame(spec, [0.3]).vectors[0]
    assert abs(abs(n @ y) / np.linalg.norm(y) - 1) <= 1e-12


def test_cylinder_second_form_in_axis_basis():
    rho = 0.3
    spec = Cylinder(radius=rho, axis_angle=0.5)
    x = np.array([0.1, -0.2])
    R = np.column_stack([spec.axis, spec.around])
    K = second_form(spec, x).reparametrized(R).components[0]
    assert np.allclose(K[0], 0, atol=1e-14) and abs(K[0, 1]) <= 1e-14
    assert abs(K[1, 1]) == pytest.approx(1 / rho)
    _, Ho = fd_jets(spec, x)
    n = normal_frame(spec, x).vectors[0]
    assert np.allclose(second_form(spec, x).components[0], np.einsum("k,kij->ij", n, Ho), atol=1e-5)


def test_torus_second_form_diagonal():
    spec = ConfinementTorus(m=2, R_s=0.5)
    K = second_form(spec, [0.2, 0.4]).components
    assert np.allclose(K[:, 0, 1], 0, atol=1e-14)
    assert np.linalg.norm(K[:, 0, 0]) == pytest.approx(4.0)
    assert np.linalg.norm(K[:, 1, 1]) == pytest.approx(4.0)


def test_tangential_part_vanishes_for_isometries():
    for spec in isometric_families():
        pts = DomainGrid(spec.m, 31).points
        pts = pts[spec.analysis_mask(pts)]
        assert second_form_field(spec, pts).tangential_max.max() <= 1e-10


def test_second_form_warns_when_strained():
    with pytest.warns(IsometryWarning):
        second_form(SphereChart(), [0.3, 0.2])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        second_form(Cylinder(), [0.3, 0.2])


def test_shape_operator():
    assert not shape_operator(np.zeros((1, 2, 2)), [1.0]).any()
    rho = 0.4
    sff = second_form(Cylinder(radius=rho), [0.1, 0.1])
    ev = np.linalg.eigvalsh(shape_operator(sff, [1.0]))
    assert ev[np.argmin(np.abs(ev))] == pytest.approx(0, abs=1e-14)
    assert np.abs(ev).max() == pytest.approx(1 / rho)
    with pytest.warns(UserWarning):
        shape_operator(sff, [2.0])


def test_shape_operator_frame_rotation():
    rng = np.random.default_rng(4)
    sff = second_form(ConfinementTorus(m=2, R_s=0.5), [0.1, 0.3])
    Q = random_rotation(rng, 2)
    xi = np.array([0.6, 0.8])
    # rotating the frame by Q and the coefficients by Q gives the same operator
    assert np.allclose(shape_operator(sff.rotated(Q), Q @ xi), shape_operator(sff, xi), atol=1e-12)


@pytest.mark.parametrize("spec", isometric_families(), ids=lambda s: s.kind)
def test_gauss_residual_small(spec):
    pts = DomainGrid(spec.m, 41).points
    pts = pts[spec.analysis_mask(pts)]
    f = second_form_field(spec, pts)
    assert max(gauss_residual(K) for K in f.components) <= 1e-8


def test_gauss_residual_flap_point_and_sphere_control():
    assert gauss_residual(second_form(BentFlapDisk(), [0.8, 0.1])) <= 1e-10
    # the chart is strain-free exactly on the equator, so no warning there
    sff = second_form(SphereChart(), [0.0, 0.0])
    assert gauss_residual(sff) >= 0.1


def test_principal_curvatures():
    assert np.allclose(principal_curvatures(second_form(Plane(), [0.0, 0.0])), 0)
    pc = principal_curvatures(second_form(Cylinder(radius=0.25), [0.1, 0.0]))
    assert sorted(np.abs(pc)) == pytest.approx([0.0, 4.0], abs=1e-12)
    assert gaussian_curvature(second_form(Cylinder(radius=0.25), [0.1, 0.0])) == pytest.approx(0, abs=1e-12)
    with pytest.raises(UnsupportedError):
        principal_curvatures(second_form(ConfinementTorus(), [0.1, 0.0]))


@pytest.mark.parametrize("x", [[0.0, 0.0], [0.3, -0.4], [0.6, 0.2]])
def test_sphere_chart_gaussian_curvature_one(x):
    spec = SphereChart()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IsometryWarning)
        sff = second_form(spec, x)
    assert gaussian_curvature(sff, induced_metric(spec, x)) == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("spec", [Cylinder(), ConfinementTorus(m=2, R_s=0.5)], ids=lambda s: s.kind)
def test_codazzi_residual_discretization(spec):
    x = [0.1, 0.2]
    r1 = codazzi_residual(spec, x, h=0.02)
    r2 = codazzi_residual(spec, x, h=0.01)
    assert r1.value <= 5 * 0.02 and r1.step == 0.02
    assert r2.value <= r1.value + 1e-12
    assert codazzi_residual(Plane(), x).value == 0


def test_codazzi_margin_error():
    sg = central_difference(Cylinder(), 0.05)
    with pytest.raises(MarginError):
        codazzi_residual(sg, [0.95, 0.0])


def test_frame_invariance_of_residuals():
    rng = np.random.default_rng(5)
    sff = second_form(ConfinementTorus(m=2, R_s=0.5), [0.3, 0.1])
    for _ in range(5):
        Q, R = random_rotation(rng, 2), random_rotation(rng, 2)
        assert abs(gauss_residual(sff.rotated(Q)) - gauss_residual(sff)) <= 1e-9
        assert abs(gauss_residual(sff.reparametrized(R)) - gauss_residual(sff)) <= 1e-9
    sff1 = second_form(Cylinder(radius=0.3), [0.2, 0.1])
    assert np.allclose(principal_curvatures(sff1.rotated([[-1.0]])), -principal_curvatures(sff1)[::-1])


@pytest.mark.filterwarnings("ignore::nullitylab.geometry.IsometryWarning")
def test_sampled_convergence_order():
    spec = Cylinder(radius=0.5, axis_angle=0.3)
    x = np.array([0.15, -0.25])
    K0 = second_form(spec, x).components
    u_err, k_err = [], []
    for h in (0.04, 0.02, 0.01):
        fd = central_difference(spec, h)
        u_err.append(np.abs(strain(fd, x).entries).max())
        k_err.append(np.abs(second_form(fd, x).components - K0).max())
    for errs in (u_err, k_err):
        slopes = np.diff(np.log(errs)) / np.diff(np.log([0.04, 0.02, 0.01]))
        assert np.all(slopes >= 1.9)


@pytest.mark.parametrize("u, status", [(0.0, "PASS"), (1e-6, "PASS"), (1e-4, "WARN"), (0.1, "FAIL")])
def test_isometry_status(u, status):
    assert isometry_status(u) == status
