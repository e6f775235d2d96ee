"""P1 finite-element assembly for the two-body contact problem.

Bulk matrices (mass, elastic/viscous stiffness, thermal coupling, scalar
conduction) are exact for the constant-coefficient P1 terms; interface
integrals use the lumped nodal rule for the 1-homogeneous and viscous terms
and 3-point Gauss per segment for the adhesive energies whose coefficients
depend nonlinearly on the damage field.

The temperature system is monolithic over the stacked vector
(theta_A on interface nodes, theta_B on bulk nodes); its conduction-plus-
transfer matrix annihilates constant vectors, which is the discrete form of
the "test by 1" bookkeeping behind the total-energy inequality.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from . import geometry
from .geometry import TwoBodyMesh, JumpMaps, jump_maps, laplace_beltrami
from .materials import MaterialSet, Pwl


class AssemblyError(ValueError):
    pass


# 3-point Gauss rule on [0, 1]
_GAUSS_PTS = np.array([0.5 - 0.5 * np.sqrt(3.0 / 5.0), 0.5, 0.5 + 0.5 * np.sqrt(3.0 / 5.0)])
_GAUSS_WTS = np.array([5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0])


def _triangle_geometry(nodes, tri, index):
    p = nodes[tri]
    d1 = p[1] - p[0]
    d2 = p[2] - p[0]
    det = d1[0] * d2[1] - d1[1] * d2[0]
    area = 0.5 * det
    if area <= 0.0:
        raise AssemblyError(f"degenerate or inverted triangle #{index}: area {area}")
    # gradients of the three hat functions
    g = np.array([
        [p[1][1] - p[2][1], p[2][0] - p[1][0]],
        [p[2][1] - p[0][1], p[0][0] - p[2][0]],
        [p[0][1] - p[1][1], p[1][0] - p[0][0]],
    ]) / det
    return area, g


def _elastic_cmat(lam, mu):
    """Elasticity in (e11, e22, e12) component form: e^T C e = lam tr^2 + 2 mu e:e."""
    return np.array([
        [lam + 2.0 * mu, lam, 0.0],
        [lam, lam + 2.0 * mu, 0.0],
        [0.0, 0.0, 4.0 * mu],
    ])


@dataclass
class DiscreteOperators:
    mesh: TwoBodyMesh
    mat: MaterialSet
    # bulk displacement operators (2 dofs per node, interleaved)
    M_mass: sp.csr_matrix
    K_elast: sp.csr_matrix
    K_visc: sp.csr_matrix
    B_thermal: sp.csr_matrix        # (2N, N): u^T B theta = int b theta tr e(u)
    D_vol: sp.csr_matrix            # (2N, N) volumetric coupling, unit coefficient
    # jumps and interface operators
    jumps: JumpMaps
    S_pi: sp.csr_matrix             # kappa1-weighted Laplace-Beltrami
    S_alpha: sp.csr_matrix          # kappa2-weighted
    S_unit: sp.csr_matrix           # unit-coefficient Laplace-Beltrami
    iface_weights: np.ndarray       # lumped nodal interface weights
    gauss_interp: sp.csr_matrix     # (n_gp, P) nodal -> Gauss values
    gauss_weights: np.ndarray       # (n_gp,) includes segment lengths
    # scalar bulk helpers
    node_areas: np.ndarray          # lumped areas per bulk node
    tri_areas: np.ndarray
    tri_grads: np.ndarray           # (n_tri, 3, 2) hat gradients
    strain_ops: list                # per triangle sparse rows (3, 2N) is heavy; store (dofs, B) pairs
    # boundary bookkeeping
    dirichlet_nodes: np.ndarray
    free_dofs: np.ndarray           # displacement dof indices kept as unknowns
    neumann_edges: np.ndarray       # (n_e, 2) node pairs
    boundary_node_lengths: np.ndarray  # per bulk node, length weight of the outer boundary
    # element strain matrix (3*n_tri, 2N): stacked per-element (e11,e22,e12)
    strain_matrix: sp.csr_matrix = field(default=None)

    @property
    def n_nodes(self):
        return self.mesh.n_nodes

    @property
    def n_pairs(self):
        return self.mesh.n_pairs

    def strains(self, u: np.ndarray) -> np.ndarray:
        """Per-element strain components (n_tri, 3)."""
        return (self.strain_matrix @ u).reshape(-1, 3)

    def bulk_conduction(self, theta_B: np.ndarray) -> sp.csr_matrix:
        """Scalar stiffness with conductivity k_B(theta) at element means."""
        mesh = self.mesh
        kfun = self.mat.bulk.conductivity
        theta_e = theta_B[mesh.triangles].mean(axis=1)
        kvals = np.asarray(kfun(theta_e), dtype=float)
        rows, cols, vals = [], [], []
        for t, tri in enumerate(mesh.triangles):
            ke = kvals[t] * self.tri_areas[t] * (self.tri_grads[t] @ self.tri_grads[t].T)
            for a in range(3):
                for b in range(3):
                    rows.append(tri[a])
                    cols.append(tri[b])
                    vals.append(ke[a, b])
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.n_nodes, self.n_nodes))

    def interface_conduction(self, theta_A: np.ndarray) -> sp.csr_matrix:
        """Laplace-Beltrami with conductivity K_A(theta) at segment means."""
        imesh = self.mesh.interface
        seg_theta = theta_A[imesh.segments].mean(axis=1)
        coeff = np.asarray(self.mat.interface.conductivity(seg_theta), dtype=float)
        return laplace_beltrami(imesh, coeff)

    def heat_matrix(self, theta_A: np.ndarray, theta_B: np.ndarray,
                    jn: np.ndarray, alpha: np.ndarray) -> sp.csr_matrix:
        """Monolithic conduction + transfer matrix over stacked (theta_A, theta_B).

        Conductivities are evaluated at the supplied (previous-step)
        temperatures; the bulk-to-adhesive transfer coefficients at the
        supplied jump opening and damage.  Symmetric PSD; annihilates the
        constant stacked vector.
        """
        P, N = self.n_pairs, self.n_nodes
        KA = self.interface_conduction(theta_A)
        KB = self.bulk_conduction(theta_B)
        k1, k2 = self.mat.interface.transfer_coeffs(jn, alpha, theta_A)
        rows, cols, vals = [], [], []
        for i in range(P):
            n1, n2 = self.mesh.node_pairs[i]
            w = self.iface_weights[i]
            for k, nb in ((w * k1[i], n1), (w * k2[i], n2)):
                rows += [i, i, P + nb, P + nb]
                cols += [i, P + nb, i, P + nb]
                vals += [k, -k, -k, k]
        transfer = sp.csr_matrix((vals, (rows, cols)), shape=(P + N, P + N))
        return (sp.block_diag([KA, KB], format="csr") + transfer).tocsr()


def assemble_all(mesh: TwoBodyMesh, mat: MaterialSet) -> DiscreteOperators:
    mat.validate()
    N = mesh.n_nodes
    bm = mat.bulk

    tri_areas = np.empty(len(mesh.triangles))
    tri_grads = np.empty((len(mesh.triangles), 3, 2))
    for t, tri in enumerate(mesh.triangles):
        tri_areas[t], tri_grads[t] = _triangle_geometry(mesh.nodes, tri, t)

    Ce = _elastic_cmat(bm.lam, bm.mu)
    Cv = _elastic_cmat(bm.lam_v, bm.mu_v)

    m_rows, m_cols, m_vals = [], [], []
    ke_rows, ke_cols, ke_vals = [], [], []
    kv_vals = []
    s_rows, s_cols, s_vals = [], [], []
    b_rows, b_cols, b_vals = [], [], []
    node_areas = np.zeros(N)

    mass_local = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0

    for t, tri in enumerate(mesh.triangles):
        A = tri_areas[t]
        g = tri_grads[t]
        node_areas[tri] += A / 3.0
        # element strain operator: (3, 6) mapping local dofs to (e11, e22, e12)
        B = np.zeros((3, 6))
        for a in range(3):
            B[0, 2 * a] = g[a, 0]
            B[1, 2 * a + 1] = g[a, 1]
            B[2, 2 * a] = 0.5 * g[a, 1]
            B[2, 2 * a + 1] = 0.5 * g[a, 0]
        dofs = np.array([[2 * n, 2 * n + 1] for n in tri]).ravel()
        Ke = A * (B.T @ Ce @ B)
        Kv = A * (B.T @ Cv @ B)
        for a in range(6):
            for b in range(6):
                ke_rows.append(dofs[a])
                ke_cols.append(dofs[b])
                ke_vals.append(Ke[a, b])
                kv_vals.append(Kv[a, b])
        Me = bm.rho * A * mass_local
        for a in range(3):
            for b in range(3):
                for c in range(2):
                    m_rows.append(2 * tri[a] + c)
                    m_cols.append(2 * tri[b] + c)
                    m_vals.append(Me[a, b])
        # strain rows for this element
        for comp in range(3):
            for a in range(6):
                s_rows.append(3 * t + comp)
                s_cols.append(dofs[a])
                s_vals.append(B[comp, a])
        # volumetric coupling: int theta tr e(u) = A * mean(theta) * div(u)
        div_row = B[0] + B[1]
        for a in range(6):
            for bnode in tri:
                b_rows.append(dofs[a])
                b_cols.append(bnode)
                b_vals.append(A * div_row[a] / 3.0)

    M_mass = sp.csr_matrix((m_vals, (m_rows, m_cols)), shape=(2 * N, 2 * N))
    K_elast = sp.csr_matrix((ke_vals, (ke_rows, ke_cols)), shape=(2 * N, 2 * N))
    K_visc = sp.csr_matrix((kv_vals, (ke_rows, ke_cols)), shape=(2 * N, 2 * N))
    strain_matrix = sp.csr_matrix((s_vals, (s_rows, s_cols)),
                                  shape=(3 * len(mesh.triangles), 2 * N))
    D_vol = sp.csr_matrix((b_vals, (b_rows, b_cols)), shape=(2 * N, N))
    B_thermal = (bm.b_coeff * D_vol).tocsr()

    imesh = mesh.interface
    im = mat.interface
    S_pi = laplace_beltrami(imesh, im.kappa1)
    S_alpha = laplace_beltrami(imesh, im.kappa2)
    S_unit = laplace_beltrami(imesh, 1.0)
    iface_weights = imesh.lumped_weights()

    gi_rows, gi_cols, gi_vals, gw = [], [], [], []
    for s, ((i, j), ell) in enumerate(zip(imesh.segments, imesh.lengths)):
        for q, (xi, wq) in enumerate(zip(_GAUSS_PTS, _GAUSS_WTS)):
            gp = 3 * s + q
            gi_rows += [gp, gp]
            gi_cols += [i, j]
            gi_vals += [1.0 - xi, xi]
            gw.append(wq * ell * (1.0 / sum(_GAUSS_WTS)))
    n_gp = 3 * len(imesh.lengths)
    gauss_interp = sp.csr_matrix((gi_vals, (gi_rows, gi_cols)), shape=(n_gp, imesh.n_nodes))
    gauss_weights = np.asarray(gw)

    dirichlet_nodes = np.unique(np.concatenate([
        mesh.boundary_edges[e] for e, tag in enumerate(mesh.boundary_tags)
        if tag == geometry.DIRICHLET] or [np.array([], dtype=int)]))
    fixed = np.zeros(2 * N, dtype=bool)
    for n in dirichlet_nodes:
        fixed[2 * n] = fixed[2 * n + 1] = True
    free_dofs = np.where(~fixed)[0]

    neumann_edges = np.array([
        mesh.boundary_edges[e] for e, tag in enumerate(mesh.boundary_tags)
        if tag == geometry.NEUMANN] or np.empty((0, 2), dtype=int), dtype=int)

    boundary_node_lengths = np.zeros(N)
    for (a, b), _tag in zip(mesh.boundary_edges, mesh.boundary_tags):
        ell = np.linalg.norm(mesh.nodes[b] - mesh.nodes[a])
        boundary_node_lengths[a] += 0.5 * ell
        boundary_node_lengths[b] += 0.5 * ell

    return DiscreteOperators(
        mesh=mesh, mat=mat,
        M_mass=M_mass, K_elast=K_elast, K_visc=K_visc,
        B_thermal=B_thermal, D_vol=D_vol,
        jumps=jump_maps(mesh),
        S_pi=S_pi, S_alpha=S_alpha, S_unit=S_unit,
        iface_weights=iface_weights,
        gauss_interp=gauss_interp, gauss_weights=gauss_weights,
        node_areas=node_areas, tri_areas=tri_areas, tri_grads=tri_grads,
        strain_ops=[],
        dirichlet_nodes=dirichlet_nodes, free_dofs=free_dofs,
        neumann_edges=neumann_edges,
        boundary_node_lengths=boundary_node_lengths,
        strain_matrix=strain_matrix,
    )


# ---------------------------------------------------------------------------
# loads
# ---------------------------------------------------------------------------

class TimeTable:
    """Linear interpolation over time samples; out-of-range is an error."""

    def __init__(self, times, values):
        self.times = np.asarray(times, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if self.times.size == 0 or self.times.shape != self.values.shape:
            raise AssemblyError("time table needs matching non-empty samples")
        if np.any(np.diff(self.times) <= 0) and self.times.size > 1:
            raise AssemblyError("time samples must be increasing")

    @classmethod
    def constant(cls, value):
        return cls([0.0], [value])

    def __call__(self, t):
        if self.times.size == 1:
            return float(self.values[0])
        if t < self.times[0] - 1e-12 or t > self.times[-1] + 1e-12:
            raise AssemblyError(f"time {t} outside load samples "
                                f"[{self.times[0]}, {self.times[-1]}]")
        return float(np.interp(t, self.times, self.values))


@dataclass
class LoadSet:
    """External loads: bulk force, Neumann traction, boundary heat flux.

    The traction acts on Neumann edges whose midpoint x lies inside
    ``traction_window`` (full edge by default).  Dirichlet displacement is
    time-constant and lives in the state vector, so it needs no terms here.
    """

    g_dir: np.ndarray = field(default_factory=lambda: np.zeros(2))
    g_table: TimeTable = field(default_factory=lambda: TimeTable.constant(0.0))
    f_dir: np.ndarray = field(default_factory=lambda: np.zeros(2))
    f_table: TimeTable = field(default_factory=lambda: TimeTable.constant(0.0))
    traction_window: Optional[tuple] = None
    h_table: TimeTable = field(default_factory=lambda: TimeTable.constant(0.0))
    u_D: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def validate(self):
        if np.any(self.h_table.values < 0.0):
            raise AssemblyError("h_ext must be non-negative")


def assemble_F(t: float, loads: LoadSet, ops: DiscreteOperators) -> np.ndarray:
    """Dual vector of the external mechanical loading at time t."""
    F = np.zeros(2 * ops.n_nodes)
    gmag = loads.g_table(t)
    if gmag != 0.0:
        gvec = gmag * loads.g_dir
        F[0::2] += ops.node_areas * gvec[0]
        F[1::2] += ops.node_areas * gvec[1]
    fmag = loads.f_table(t)
    if fmag != 0.0 and len(ops.neumann_edges):
        fvec = fmag * loads.f_dir
        for a, b in ops.neumann_edges:
            mid_x = 0.5 * (ops.mesh.nodes[a, 0] + ops.mesh.nodes[b, 0])
            if loads.traction_window is not None:
                lo, hi = loads.traction_window
                if not (lo <= mid_x <= hi):
                    continue
            ell = np.linalg.norm(ops.mesh.nodes[b] - ops.mesh.nodes[a])
            for n in (a, b):
                F[2 * n] += 0.5 * ell * fvec[0]
                F[2 * n + 1] += 0.5 * ell * fvec[1]
    return F


def h_ext_vector(t: float, loads: LoadSet, ops: DiscreteOperators) -> np.ndarray:
    """Nodal boundary heat influx (per bulk node), before regularisation."""
    h = loads.h_table(t)
    return h * ops.boundary_node_lengths


def export_triplets(A: sp.spmatrix, path) -> None:
    coo = sp.coo_matrix(A)
    with open(path, "w") as f:
        f.write(f"triplets {A.shape[0]} {A.shape[1]} {coo.nnz}\n")
        for r, c, v in zip(coo.row, coo.col, coo.data):
            f.write(f"{r} {c} {v!r}\n")
