import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thermocontact.geometry import (GeometryError, InterfaceMesh,
                                    build_rect_two_body, jump_maps,
                                    laplace_beltrami, load_mesh, save_mesh,
                                    surface_gradient)


def test_minimal_rect_mesh_counts():
    mesh = build_rect_two_body(1.0, 0.5, 1, 1)
    assert mesh.n_nodes == 8
    assert len(mesh.triangles) == 4
    assert mesh.n_pairs == 2
    mesh.validate()


def test_pair_nodes_coincide_and_are_disjoint():
    mesh = build_rect_two_body(2.0, 0.7, 5, 3)
    mesh.validate()
    for n1, n2 in mesh.node_pairs:
        assert np.array_equal(mesh.nodes[n1], mesh.nodes[n2])
    # bodies own disjoint node id sets
    s1 = set(mesh.triangles[mesh.tri_labels == 1].ravel())
    s2 = set(mesh.triangles[mesh.tri_labels == 2].ravel())
    assert not (s1 & s2)


def test_normal_and_tangent_convention():
    mesh = build_rect_two_body(1.0, 0.5, 3, 2)
    assert np.allclose(mesh.normal_n2, [0.0, -1.0])
    assert np.allclose(mesh.tangent(), [1.0, 0.0])


def test_triangle_areas_cover_both_rectangles():
    mesh = build_rect_two_body(1.5, 0.5, 4, 2)
    areas = []
    for tri in mesh.triangles:
        p = mesh.nodes[tri]
        d1, d2 = p[1] - p[0], p[2] - p[0]
        areas.append(0.5 * abs(d1[0] * d2[1] - d1[1] * d2[0]))
    assert sum(areas) == pytest.approx(2 * 1.5 * 0.5, rel=1e-14)


def test_boundary_tags():
    mesh = build_rect_two_body(1.0, 0.5, 2, 1)
    tags = set(mesh.boundary_tags)
    assert tags == {"dirichlet", "neumann", "free"}
    # dirichlet edges all on y=0, neumann all on the top
    for (a, b), tag in zip(mesh.boundary_edges, mesh.boundary_tags):
        ys = mesh.nodes[[a, b], 1]
        if tag == "dirichlet":
            assert np.all(ys == 0.0)
        elif tag == "neumann":
            assert np.all(ys == 1.0)


def test_invalid_rect_arguments():
    with pytest.raises(GeometryError):
        build_rect_two_body(-1.0, 0.5, 1, 1)
    with pytest.raises(GeometryError):
        build_rect_two_body(1.0, 0.5, 0, 1)


def test_surface_gradient_two_segments():
    imesh = InterfaceMesh(
        segments=np.array([[0, 1], [1, 2]]),
        lengths=np.array([0.5, 0.5]),
        arclength_coords=np.array([0.0, 0.5, 1.0]),
    )
    G = surface_gradient(imesh)
    vals = G @ np.array([0.0, 1.0, 3.0])
    assert np.allclose(vals, [2.0, 4.0])


def test_laplace_beltrami_kernel_is_constants():
    mesh = build_rect_two_body(1.0, 0.5, 6, 1)
    S = laplace_beltrami(mesh.interface, 3.7)
    ones = np.ones(mesh.n_pairs)
    assert np.linalg.norm(S @ ones) < 1e-14
    x = np.random.default_rng(0).standard_normal(mesh.n_pairs)
    assert x @ (S @ x) >= -1e-14


def test_jump_of_rigid_shift_is_zero_then_signed():
    mesh = build_rect_two_body(1.0, 0.5, 2, 1)
    jm = jump_maps(mesh)
    u = np.tile([0.3, -0.2], mesh.n_nodes)
    assert np.linalg.norm(jm.jump @ u) == 0.0
    # lift the upper body: opening jn > 0
    u = np.zeros(2 * mesh.n_nodes)
    upper = np.unique(mesh.triangles[mesh.tri_labels == 2])
    u[2 * upper + 1] = 0.25
    jn = jm.normal_jump @ u
    jt = jm.tangential_jump @ u
    assert np.allclose(jn, 0.25)
    assert np.allclose(jt, 0.0)
    # shear the upper body: jt = u1 - u2 along +x
    u = np.zeros(2 * mesh.n_nodes)
    u[2 * upper] = 0.1
    assert np.allclose(jm.tangential_jump @ u, -0.1)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 5), st.integers(1, 3), st.integers(0, 2 ** 31 - 1))
def test_jump_recomposition(nx, ny, seed):
    """jump = trace1 - trace2 and (jn, jt) recompose the vector jump."""
    mesh = build_rect_two_body(1.0, 0.5, nx, ny)
    jm = jump_maps(mesh)
    u = np.random.default_rng(seed).standard_normal(2 * mesh.n_nodes)
    j = (jm.jump @ u).reshape(-1, 2)
    jn = jm.normal_jump @ u
    jt = jm.tangential_jump @ u
    recomposed = jn[:, None] * mesh.normal_n2 + jt[:, None] * mesh.tangent()
    assert np.allclose(j, recomposed, atol=1e-12)
    assert np.allclose(jm.jump @ u, (jm.trace1 - jm.trace2) @ u)


def test_mesh_save_load_roundtrip(tmp_path):
    mesh = build_rect_two_body(1.2, 0.4, 3, 2)
    path = tmp_path / "mesh.txt"
    save_mesh(mesh, path)
    back = load_mesh(path)
    back.validate()
    assert np.array_equal(back.triangles, mesh.triangles)
    assert np.allclose(back.nodes, mesh.nodes)
    assert np.array_equal(back.node_pairs, mesh.node_pairs)
    assert back.boundary_tags == mesh.boundary_tags
