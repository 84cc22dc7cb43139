import numpy as np
import pytest

from curlfem.mesh import Mesh, MeshError, element_map, generate_ball_mesh
from curlfem.reference import quadrature
from curlfem.smallmat import cofactor3, det3
from curlfem.transforms import (DomainMap, ElementPullback, Field,
                                boundary_surface_samples, hausdorff_estimate,
                                pullback_field, pullback_solution,
                                inverse_pullback_solution, radial_domain_map)

REF_VERTS = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])


def random_affine_cell(rng):
    while True:
        verts = REF_VERTS + 0.35 * rng.standard_normal((4, 3))
        try:
            return Mesh(verts, np.array([[0, 1, 2, 3]]))
        except MeshError:
            continue


def random_quadratic_cell(rng):
    verts = REF_VERTS.copy()
    mids = np.array([(verts[a] + verts[b]) / 2 for a, b in
                     ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))])
    mids += 0.05 * rng.standard_normal(mids.shape)
    return Mesh(np.vstack([verts, mids]), np.array([list(range(10))]), order=2)


def poly_field():
    def value(p):
        return np.stack([p[:, 1] * p[:, 2], p[:, 0] ** 2, p[:, 0] * p[:, 1]],
                        axis=1)

    def curl(p):
        return np.stack([p[:, 0] - 0 * p[:, 0], p[:, 1] - p[:, 1] * 0 * 0,
                         2 * p[:, 0] - p[:, 2]], axis=1)

    # curl of (yz, x^2, xy): (x - 0, y - y*0... explicit:
    #   (d_y(xy) - d_z(x^2), d_z(yz) - d_x(xy), d_x(x^2) - d_y(yz))
    # = (x, y - y, 2x - z) -> second entry is 0
    def curl_fixed(p):
        return np.stack([p[:, 0], np.zeros(len(p)), 2 * p[:, 0] - p[:, 2]],
                        axis=1)

    return Field(value=value, curl=curl_fixed)


# -- element pull-back -----------------------------------------------------------


def test_identity_pullback():
    mesh = Mesh(REF_VERTS, np.array([[0, 1, 2, 3]]))
    pb = ElementPullback(element_map(mesh, 0))
    field = poly_field()
    pts = np.random.default_rng(0).dirichlet((1, 1, 1, 1), 20)[:, :3]
    out = pullback_field(pb, field)
    assert np.abs(out.value(pts) - field.value(pts)).max() <= 1e-14
    assert np.abs(out.curl(pts) - field.curl(pts)).max() <= 1e-14


def test_dilation_pullback():
    mesh = Mesh(2.0 * REF_VERTS, np.array([[0, 1, 2, 3]]))
    pb = ElementPullback(element_map(mesh, 0))
    field = poly_field()
    pts = np.random.default_rng(1).dirichlet((1, 1, 1, 1), 20)[:, :3]
    out = pullback_field(pb, field)
    assert np.abs(out.value(pts) - 2.0 * field.value(2.0 * pts)).max() <= 1e-13


def test_constant_curl_cofactor_identity():
    rng = np.random.default_rng(2)
    mesh = random_affine_cell(rng)
    pb = ElementPullback(element_map(mesh, 0))
    rot = Field(value=lambda p: np.stack([-p[:, 1], p[:, 0], 0 * p[:, 0]], axis=1),
                curl=lambda p: np.stack([0 * p[:, 0]] * 2 + [2 + 0 * p[:, 0]], axis=1))
    pts = rng.dirichlet((1, 1, 1, 1), 10)[:, :3]
    jac = element_map(mesh, 0).jacobian(pts[:1])
    expected = cofactor3(jac)[0] @ np.array([0.0, 0.0, 2.0])
    assert np.abs(pb.forward(rot).curl(pts) - expected).max() <= 1e-12


@pytest.mark.parametrize("maker", [random_affine_cell, random_quadratic_cell])
def test_pullback_round_trip_and_curl_identity(maker):
    rng = np.random.default_rng(7)
    mesh = maker(rng)
    gm = element_map(mesh, 0)
    pb = ElementPullback(gm)
    field = poly_field()
    pts = rng.dirichlet((1, 1, 1, 1), 30)[:, :3]
    # round trip through the inverse
    ref = pb.forward(field)
    back = pb.forward(pb.inverse(ref))
    assert np.abs(back.value(pts) - ref.value(pts)).max() <= 1e-10
    assert np.abs(back.curl(pts) - ref.curl(pts)).max() <= 1e-10
    # cofactor curl transport against finite differences of the mapped field
    jac = gm.jacobian(pts)
    expected = np.einsum('qcd,qd->qc', cofactor3(jac), field.curl(gm.map(pts)))
    assert np.abs(ref.curl(pts) - expected).max() <= 1e-10


# -- radial domain map -----------------------------------------------------------


@pytest.fixture(scope="module")
def ball_map():
    return radial_domain_map(generate_ball_mesh(1, order=1))


def test_core_fixed(ball_map):
    rng = np.random.default_rng(0)
    pts = rng.standard_normal((200, 3))
    pts = 0.4 * pts / np.linalg.norm(pts, axis=1)[:, None] * rng.random((200, 1))
    assert np.abs(ball_map.forward(pts) - pts).max() == 0.0


def test_boundary_vertices_fixed(ball_map):
    mesh = ball_map.mesh
    verts = mesh.vertices[mesh.boundary_vertices]
    assert np.abs(ball_map.forward(verts) - verts).max() <= 1e-10


def test_surface_maps_to_sphere(ball_map):
    surf = boundary_surface_samples(ball_map.mesh)
    mapped = ball_map.forward(surf)
    assert np.abs(np.linalg.norm(mapped, axis=1) - 1.0).max() <= 1e-8


def test_forward_inverse_round_trip(ball_map):
    rng = np.random.default_rng(1)
    pts = rng.standard_normal((500, 3))
    pts /= np.linalg.norm(pts, axis=1)[:, None]
    pts *= 1.1 * rng.random((500, 1)) ** (1 / 3)
    fwd = ball_map.forward(pts)
    assert np.abs(ball_map.inverse(fwd) - pts).max() <= 1e-10


def test_jacobian_analytic_matches_fd(ball_map):
    rng = np.random.default_rng(2)
    pts = rng.standard_normal((100, 3))
    pts /= np.linalg.norm(pts, axis=1)[:, None]
    pts *= 0.55 + 0.4 * rng.random((100, 1))
    analytic = ball_map._jacobian_analytic(pts)
    fd = ball_map._jacobian_fd(pts, ball_map.forward)
    assert np.abs(analytic - fd).max() <= 1e-7
    inv_analytic = ball_map._jacobian_analytic(pts, inverse=True)
    inv_fd = ball_map._jacobian_fd(pts, ball_map.inverse)
    assert np.abs(inv_analytic - inv_fd).max() <= 1e-7


def test_non_star_shaped_rejected():
    shifted = generate_ball_mesh(1)
    verts = shifted.vertices + np.array([2.0, 0.0, 0.0])
    mesh = Mesh(verts, shifted.cells.copy())
    with pytest.raises(MeshError, match="star-shaped"):
        radial_domain_map(mesh)


def test_pullback_solution_identity_map_behavior(ball_map):
    # constant field under the global dilation region: inside the fixed core
    # the transported field equals the original
    const = Field(value=lambda p: np.broadcast_to([1.0, 2.0, 3.0], (len(p), 3)),
                  curl=lambda p: np.zeros((len(p), 3)))
    transported = pullback_solution(ball_map, const)
    pts = 0.3 * np.eye(3)
    assert np.abs(transported.value(pts) - [1.0, 2.0, 3.0]).max() <= 1e-12


def test_pullback_solution_dilation_stub():
    # under a pure dilation T(x) = x/(1-delta), a constant transports to
    # its multiple by the constant Jacobian factor
    delta = 0.125

    class Dilation:
        def forward(self, points):
            return np.atleast_2d(points) / (1.0 - delta)

        def jacobian(self, points):
            n = len(np.atleast_2d(points))
            return np.broadcast_to(np.eye(3) / (1.0 - delta), (n, 3, 3))

    const = Field(value=lambda p: np.broadcast_to([1.0, 2.0, -1.0], (len(p), 3)),
                  curl=lambda p: np.zeros((len(p), 3)))
    transported = pullback_solution(Dilation(), const)
    pts = np.random.default_rng(5).random((10, 3))
    expect = np.array([1.0, 2.0, -1.0]) / (1.0 - delta)
    assert np.abs(transported.value(pts) - expect).max() <= 1e-14


def test_pullback_solution_round_trip(ball_map):
    rng = np.random.default_rng(4)
    smooth = Field(
        value=lambda p: np.stack([np.sin(p[:, 1]), np.cos(p[:, 2]),
                                  p[:, 0] ** 2], axis=1),
        curl=lambda p: np.stack([np.sin(p[:, 2]), 2 * p[:, 0],
                                 np.cos(p[:, 1]) * 0], axis=1))
    pts = rng.standard_normal((1000, 3))
    pts /= np.linalg.norm(pts, axis=1)[:, None]
    pts *= 0.95 * rng.random((1000, 1)) ** (1 / 3)
    fwd = pullback_solution(ball_map, inverse_pullback_solution(ball_map, smooth))
    assert np.abs(fwd.value(pts) - smooth.value(pts)).max() <= 1e-8


def test_discrepancy_decay_and_theta():
    reports = [radial_domain_map(generate_ball_mesh(level)).discrepancies()
               for level in (1, 2)]
    assert reports[1].d0 < reports[0].d0
    assert reports[1].d1 < reports[0].d1
    assert reports[1].theta < reports[0].theta
    assert reports[1].theta >= 1.0


def test_hausdorff_monotone_and_matches_gap():
    estimates = [hausdorff_estimate(generate_ball_mesh(level))
                 for level in (0, 1, 2)]
    assert estimates[2] < estimates[1] < estimates[0]


def test_hausdorff_order_two_levels():
    h1, e1 = (lambda m: (m.h, hausdorff_estimate(m)))(generate_ball_mesh(1))
    h2, e2 = (lambda m: (m.h, hausdorff_estimate(m)))(generate_ball_mesh(2))
    slope = np.log(e1 / e2) / np.log(h1 / h2)
    assert 1.5 <= slope <= 2.8
