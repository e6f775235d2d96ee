import numpy as np
import pytest
import scipy.sparse as sp

from thermocontact.assembly import (AssemblyError, LoadSet, TimeTable,
                                    assemble_F, assemble_all, h_ext_vector)
from thermocontact.geometry import build_rect_two_body
from thermocontact.materials import MaterialSet


@pytest.fixture(scope="module")
def ops():
    return assemble_all(build_rect_two_body(1.0, 0.5, 2, 1), MaterialSet())


def test_mass_matrix_total(ops):
    rho = ops.mat.bulk.rho
    area = 2 * 1.0 * 0.5
    ones = np.ones(2 * ops.n_nodes)
    assert ones @ (ops.M_mass @ ones) == pytest.approx(2 * rho * area, rel=1e-12)


def test_stiffness_annihilates_rigid_shift(ops):
    u = np.tile([0.4, -0.7], ops.n_nodes)
    assert np.linalg.norm(ops.K_elast @ u) < 1e-12
    assert np.linalg.norm(ops.K_visc @ u) < 1e-12


def test_elastic_energy_uniform_extension(ops):
    # u = (0, y*eps): tr e = eps, e22 = eps -> 2*W = area*(lam+2mu)*eps^2
    eps = 0.01
    u = np.zeros(2 * ops.n_nodes)
    u[1::2] = eps * ops.mesh.nodes[:, 1]
    lam, mu = ops.mat.bulk.lam, ops.mat.bulk.mu
    expect = (lam + 2 * mu) * eps ** 2 * 1.0
    assert u @ (ops.K_elast @ u) == pytest.approx(expect, rel=1e-12)


def test_node_areas_partition(ops):
    assert ops.node_areas.sum() == pytest.approx(1.0, rel=1e-12)
    assert np.all(ops.node_areas > 0)


def test_gravity_resultant(ops):
    loads = LoadSet(g_dir=np.array([0.0, -1.0]), g_table=TimeTable.constant(1.0))
    F = assemble_F(0.0, loads, ops)
    assert F[0::2].sum() == pytest.approx(0.0, abs=1e-14)
    assert F[1::2].sum() == pytest.approx(-1.0, rel=1e-12)   # minus the area


def test_traction_resultant_and_window(ops):
    loads = LoadSet(f_dir=np.array([0.0, 1.0]), f_table=TimeTable.constant(1.0))
    F = assemble_F(0.0, loads, ops)
    assert F[1::2].sum() == pytest.approx(1.0, rel=1e-12)    # top edge length 1
    # only the right half of the top edge loaded
    loads = LoadSet(f_dir=np.array([0.0, 1.0]), f_table=TimeTable.constant(1.0),
                    traction_window=(0.5, 1.0))
    F = assemble_F(0.0, loads, ops)
    assert F[1::2].sum() == pytest.approx(0.5, rel=1e-12)


def test_traction_only_on_neumann_nodes(ops):
    loads = LoadSet(f_dir=np.array([1.0, 0.0]), f_table=TimeTable.constant(2.0))
    F = assemble_F(0.0, loads, ops)
    loaded = np.where(F[0::2] != 0.0)[0]
    top = np.where(ops.mesh.nodes[:, 1] == 1.0)[0]
    assert set(loaded) <= set(top)


def test_heat_matrix_annihilates_constants(ops):
    P, N = ops.n_pairs, ops.n_nodes
    K = ops.heat_matrix(np.ones(P), np.ones(N), np.zeros(P), np.ones(P))
    ones = np.ones(P + N)
    assert np.linalg.norm(K @ ones) < 1e-13
    # symmetric PSD
    A = K.toarray()
    assert np.allclose(A, A.T, atol=1e-14)
    assert np.all(np.linalg.eigvalsh(A) > -1e-12)


def test_transfer_drops_with_opening(ops):
    P, N = ops.n_pairs, ops.n_nodes
    K0 = ops.heat_matrix(np.ones(P), np.ones(N), np.zeros(P), np.ones(P))
    Ko = ops.heat_matrix(np.ones(P), np.ones(N), np.full(P, 10.0), np.ones(P))
    # transfer blocks shrink as the interface opens
    assert Ko[0, 0] < K0[0, 0]


def test_time_table_bounds():
    tab = TimeTable([0.0, 1.0], [0.0, 2.0])
    assert tab(0.5) == pytest.approx(1.0)
    with pytest.raises(AssemblyError):
        tab(1.5)
    assert TimeTable.constant(3.0)(42.0) == 3.0
    with pytest.raises(AssemblyError):
        TimeTable([1.0, 0.5], [0.0, 0.0])


def test_h_ext_vector_boundary_only(ops):
    loads = LoadSet(h_table=TimeTable.constant(2.0))
    h = h_ext_vector(0.0, loads, ops)
    assert np.all(h >= 0.0)
    interior = ops.boundary_node_lengths == 0.0
    assert np.all(h[interior] == 0.0)
    with pytest.raises(AssemblyError):
        LoadSet(h_table=TimeTable([0.0], [-1.0])).validate()


def test_strain_matrix_consistency(ops):
    rng = np.random.default_rng(5)
    u = rng.standard_normal(2 * ops.n_nodes)
    e = ops.strains(u)
    assert e.shape == (len(ops.mesh.triangles), 3)
    # uniform x-extension: e11 = eps everywhere
    u = np.zeros(2 * ops.n_nodes)
    u[0::2] = 0.02 * ops.mesh.nodes[:, 0]
    e = ops.strains(u)
    assert np.allclose(e[:, 0], 0.02)
    assert np.allclose(e[:, 1], 0.0, atol=1e-15)
    assert np.allclose(e[:, 2], 0.0, atol=1e-15)


def test_free_dofs_exclude_dirichlet(ops):
    fixed = set()
    for n in ops.dirichlet_nodes:
        fixed.update((2 * n, 2 * n + 1))
    assert not (fixed & set(ops.free_dofs.tolist()))
    assert len(ops.free_dofs) == 2 * ops.n_nodes - len(fixed)
