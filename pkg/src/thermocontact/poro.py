"""Fluid-content diffusion coupled to the mechanical step.

The content pair (zeta_A on the interface, zeta_B in the bulk) obeys a
gradient flow driven by chemical potentials mu = (dual) derivative of the
stored energy.  Per time step the content update is folded into the
mechanical minimisation: for given (u, pi) the midpoint content and the
potential mu solve a linear system (everything is quadratic), and the
mechanical objective gains 2*Psi_poro(midpoints) plus the conjugate
dissipation term (tau/2) mu^T D mu.  The outer solver only sees a smooth
convex function of (u, pi); its gradient is exact by the envelope theorem.

The diffusion operator D (mobility Laplace-Beltrami / stiffness plus the
interface-bulk transfer stencil) annihilates constants and is symmetric,
so the total content sum(w*zeta_A) + sum(a*zeta_B) is conserved to solver
precision and tau*mu^T D mu >= 0 is the diffusion dissipation.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import DiscreteOperators
from .geometry import laplace_beltrami


def _bulk_scalar_helpers(ops: DiscreteOperators):
    """(Tr, Zm, S_bulk): trace-of-strain rows, element means, unit stiffness."""
    key = id(ops)
    cached = _HELPER_CACHE.get(key)
    if cached is not None and cached[0] is ops:
        return cached[1]
    n_tri = len(ops.mesh.triangles)
    N = ops.n_nodes
    sel = sp.csr_matrix(
        (np.ones(2 * n_tri),
         (np.repeat(np.arange(n_tri), 2),
          np.stack([3 * np.arange(n_tri), 3 * np.arange(n_tri) + 1], axis=1).ravel())),
        shape=(n_tri, 3 * n_tri))
    Tr = (sel @ ops.strain_matrix).tocsr()
    Zm = sp.csr_matrix(
        (np.full(3 * n_tri, 1.0 / 3.0),
         (np.repeat(np.arange(n_tri), 3), ops.mesh.triangles.ravel())),
        shape=(n_tri, N))
    rows, cols, vals = [], [], []
    for t, tri in enumerate(ops.mesh.triangles):
        ke = ops.tri_areas[t] * (ops.tri_grads[t] @ ops.tri_grads[t].T)
        for a in range(3):
            for b in range(3):
                rows.append(tri[a])
                cols.append(tri[b])
                vals.append(ke[a, b])
    S_bulk = sp.csr_matrix((vals, (rows, cols)), shape=(N, N))
    out = (Tr, Zm, S_bulk)
    _HELPER_CACHE[key] = (ops, out)
    return out


_HELPER_CACHE: dict = {}


def _interface_biot_strain(ops, u, pi):
    jn = ops.jumps.normal_jump @ u
    jt = ops.jumps.tangential_jump @ u
    return (jt - pi) + jn


def poro_energy(ops: DiscreteOperators, state, alpha=None) -> float:
    """Stored energy of the fluid content at the state's (u, pi, zeta)."""
    ip = ops.mat.interface.poro
    bp = ops.mat.bulk.poro
    Tr, Zm, S_bulk = _bulk_scalar_helpers(ops)
    zA = np.asarray(state.zeta_A, dtype=float)
    zB = np.asarray(state.zeta_B, dtype=float)
    wi = ops.iface_weights
    A = ops.tri_areas
    bA = _interface_biot_strain(ops, state.u, state.pi)
    E = 0.5 * float(wi @ (ip.M_A * (ip.beta_A * bA - zA) ** 2))
    E += 0.5 * float(wi @ (ip.K_chem * (zA - ip.zeta_eq) ** 2))
    E += 0.5 * ip.kappa3 * float(zA @ (ops.S_unit @ zA))
    tre = Tr @ state.u
    zbar = Zm @ zB
    E += 0.5 * float(A @ (bp.M_B * (bp.beta_B * tre - zbar) ** 2))
    E += 0.5 * float(ops.node_areas @ (bp.K_chem * (zB - bp.zeta_eq) ** 2))
    E += 0.5 * bp.kappa * float(zB @ (S_bulk @ zB))
    return E


def poro_stress_extension(ops: DiscreteOperators, u: np.ndarray,
                          zeta_B: np.ndarray) -> np.ndarray:
    """Per-element stress addition (s11, s22, s12) from the bulk content.

    This is the strain derivative of the bulk content energy: an isotropic
    pressure M_B * beta_B * (beta_B tr e - zeta_bar) on the diagonal.
    Vanishes identically when beta_B = 0.
    """
    bp = ops.mat.bulk.poro
    Tr, Zm, _ = _bulk_scalar_helpers(ops)
    s = bp.M_B * bp.beta_B * (bp.beta_B * (Tr @ u) - Zm @ np.asarray(zeta_B))
    out = np.zeros((len(ops.mesh.triangles), 3))
    out[:, 0] = s
    out[:, 1] = s
    return out


def chemical_potentials(ops: DiscreteOperators, state):
    """Nodal chemical potentials (mu_A, mu_B): dual energy gradient divided
    by the lumped masses."""
    ip = ops.mat.interface.poro
    bp = ops.mat.bulk.poro
    Tr, Zm, S_bulk = _bulk_scalar_helpers(ops)
    zA = np.asarray(state.zeta_A, dtype=float)
    zB = np.asarray(state.zeta_B, dtype=float)
    wi = ops.iface_weights
    bA = _interface_biot_strain(ops, state.u, state.pi)
    gA = wi * (ip.M_A * (zA - ip.beta_A * bA) + ip.K_chem * (zA - ip.zeta_eq))
    gA = gA + ip.kappa3 * (ops.S_unit @ zA)
    tre = Tr @ state.u
    gB = Zm.T @ (ops.tri_areas * bp.M_B * ((Zm @ zB) - bp.beta_B * tre))
    gB = gB + ops.node_areas * bp.K_chem * (zB - bp.zeta_eq)
    gB = gB + bp.kappa * (S_bulk @ zB)
    return gA / wi, gB / ops.node_areas


def mass_total(ops: DiscreteOperators, state) -> float:
    return float(ops.iface_weights @ state.zeta_A
                 + ops.node_areas @ state.zeta_B)


class PoroRuntime:
    """Per-scenario constant data for the joint mechanical-diffusion step."""

    def __init__(self, scn):
        from . import stepper
        ops = scn.ops
        self.scn = scn
        self.ops = ops
        self.ip = ops.mat.interface.poro
        self.bp = ops.mat.bulk.poro
        self.Tr, self.Zm, self.S_bulk = _bulk_scalar_helpers(ops)
        P, N = ops.n_pairs, ops.n_nodes
        self.P, self.N = P, N
        wi = ops.iface_weights
        self.mz = np.concatenate([wi, ops.node_areas])
        # diffusion operator: mobilities + transfer stencil
        D_if = self.ip.mobility * ops.S_unit
        D_bk = self.bp.mobility * self.S_bulk
        rows, cols, vals = [], [], []
        m = self.ip.m_transfer
        for i in range(P):
            n1, n2 = ops.mesh.node_pairs[i]
            k = wi[i] * m
            for nb in (n1, n2):
                rows += [i, i, P + nb, P + nb]
                cols += [i, P + nb, i, P + nb]
                vals += [k, -k, -k, k]
        transfer = sp.csr_matrix((vals, (rows, cols)), shape=(P + N, P + N))
        self.D = (sp.block_diag([D_if, D_bk], format="csr") + transfer).tocsr()
        # dual content stiffness A_zz
        A_if = sp.diags(wi * (self.ip.M_A + self.ip.K_chem)) + self.ip.kappa3 * ops.S_unit
        A_bk = (self.bp.M_B * (self.Zm.T @ sp.diags(ops.tri_areas) @ self.Zm)
                + sp.diags(ops.node_areas * self.bp.K_chem)
                + self.bp.kappa * self.S_bulk)
        self.A_zz = sp.block_diag([A_if, A_bk], format="csr")
        tau = scn.tau
        S_sys = (sp.diags(self.mz)
                 + 0.5 * tau * (self.A_zz @ sp.diags(1.0 / self.mz) @ self.D))
        self._lu = spla.splu(sp.csc_matrix(S_sys))
        self.cache = stepper._MechCache(scn)
        self._hess_x = None

    # coupling part of the dual content gradient, given midpoint kinematics
    def _c_zeta(self, u_mid, pi_mid):
        wi = self.ops.iface_weights
        bA = _interface_biot_strain(self.ops, u_mid, pi_mid)
        cA = -wi * (self.ip.M_A * self.ip.beta_A * bA
                    + self.ip.K_chem * self.ip.zeta_eq)
        tre = self.Tr @ u_mid
        cB = (-(self.Zm.T @ (self.ops.tri_areas * self.bp.M_B
                             * self.bp.beta_B * tre))
              - self.ops.node_areas * self.bp.K_chem * self.bp.zeta_eq)
        return np.concatenate([cA, cB])

    def solve_inner(self, zeta_prev, u_mid, pi_mid):
        rhs = self.A_zz @ zeta_prev + self._c_zeta(u_mid, pi_mid)
        mu = self._lu.solve(rhs)
        zeta = zeta_prev - self.scn.tau * (self.D @ mu) / self.mz
        return zeta, mu

    def make_context(self, prev):
        zA = prev.zeta_A if prev.zeta_A is not None else np.full(self.P, self.ip.zeta_eq)
        zB = prev.zeta_B if prev.zeta_B is not None else np.full(self.N, self.bp.zeta_eq)
        zeta_prev = np.concatenate([np.asarray(zA, float), np.asarray(zB, float)])
        return _PoroContext(self, prev, zeta_prev)

    def hessian_x(self):
        """Exact reduced Hessian of the poro contribution in x-coordinates.

        The contribution is quadratic in x (the inner solve is affine), so
        columns come from gradient differences of the zero-history problem.
        Computed once and reused across steps (mobilities are constant).
        """
        if self._hess_x is not None:
            return self._hess_x
        c = self.cache
        n = c.nf + c.P
        zero_hist = np.zeros(self.P + self.N)

        def g(x):
            u, pi = c.expand(x)
            # zero previous state: midpoints are half the endpoint values
            zeta, mu = self.solve_inner(zero_hist, 0.5 * u, 0.5 * pi)
            zeta_mid = 0.5 * (zeta + zero_hist)
            gu, gpi = self._grad_xpi(0.5 * u, 0.5 * pi, zeta_mid)
            return c.restrict(gu, gpi)

        g0 = g(np.zeros(n))
        H = np.empty((n, n))
        for j in range(n):
            ej = np.zeros(n)
            ej[j] = 1.0
            H[:, j] = g(ej) - g0
        H = 0.5 * (H + H.T)
        self._hess_x = sp.csr_matrix(H)
        return self._hess_x

    def _grad_xpi(self, u_mid, pi_mid, zeta_mid):
        """d Psi_poro / d(u, pi) at midpoint arguments (full u dofs)."""
        ops = self.ops
        wi = ops.iface_weights
        zA = zeta_mid[:self.P]
        zB = zeta_mid[self.P:]
        bA = _interface_biot_strain(ops, u_mid, pi_mid)
        sA = wi * self.ip.M_A * self.ip.beta_A * (self.ip.beta_A * bA - zA)
        J = ops.jumps.normal_jump + ops.jumps.tangential_jump
        gu = J.T @ sA
        gpi = -sA
        tre = self.Tr @ u_mid
        sB = ops.tri_areas * self.bp.M_B * self.bp.beta_B * (
            self.bp.beta_B * tre - self.Zm @ zB)
        gu = gu + self.Tr.T @ sB
        return gu, gpi


class _PoroContext:
    """Per-step closure handed to the mechanical objective."""

    def __init__(self, runtime: PoroRuntime, prev, zeta_prev):
        self.rt = runtime
        self.prev = prev
        self.zeta_prev = zeta_prev
        self.hess_x = runtime.hessian_x()

    def _psi(self, u, pi, zeta):
        ops = self.rt.ops
        ip, bp = self.rt.ip, self.rt.bp
        wi = ops.iface_weights
        zA, zB = zeta[:self.rt.P], zeta[self.rt.P:]
        bA = _interface_biot_strain(ops, u, pi)
        val = 0.5 * float(wi @ (ip.M_A * (ip.beta_A * bA - zA) ** 2))
        val += 0.5 * float(wi @ (ip.K_chem * (zA - ip.zeta_eq) ** 2))
        val += 0.5 * ip.kappa3 * float(zA @ (ops.S_unit @ zA))
        tre = self.rt.Tr @ u
        zbar = self.rt.Zm @ zB
        val += 0.5 * float(ops.tri_areas @ (bp.M_B * (bp.beta_B * tre - zbar) ** 2))
        val += 0.5 * float(ops.node_areas @ (bp.K_chem * (zB - bp.zeta_eq) ** 2))
        val += 0.5 * bp.kappa * float(zB @ (self.rt.S_bulk @ zB))
        return val

    def value(self, u, pi, u_mid, pi_mid):
        zeta, mu = self.rt.solve_inner(self.zeta_prev, u_mid, pi_mid)
        zeta_mid = 0.5 * (zeta + self.zeta_prev)
        return (2.0 * self._psi(u_mid, pi_mid, zeta_mid)
                + 0.5 * self.rt.scn.tau * float(mu @ (self.rt.D @ mu)))

    def grad(self, u, pi, u_mid, pi_mid):
        zeta, mu = self.rt.solve_inner(self.zeta_prev, u_mid, pi_mid)
        zeta_mid = 0.5 * (zeta + self.zeta_prev)
        return self.rt._grad_xpi(u_mid, pi_mid, zeta_mid)

    def finalize(self, u_k, pi_k, u_mid, pi_mid):
        rt = self.rt
        ops = rt.ops
        tau = rt.scn.tau
        zeta, mu = rt.solve_inner(self.zeta_prev, u_mid, pi_mid)
        mu_A, mu_B = mu[:rt.P], mu[rt.P:]
        tau_R = tau * float(mu @ (rt.D @ mu))
        heat = self._heat_sources(mu)
        return {
            "zeta_A": zeta[:rt.P], "zeta_B": zeta[rt.P:],
            "mu_A": mu_A, "mu_B": mu_B,
            "tau_R_diffusion": tau_R,
            "heat_sources": heat,
        }

    def _heat_sources(self, mu):
        """Nodal (weighted) heat gains from diffusion, regularised like the
        bulk viscous sources."""
        rt = self.rt
        ops = rt.ops
        eps = rt.scn.reg.eps_e
        tau = rt.scn.tau
        P, N = rt.P, rt.N
        mu_A, mu_B = mu[:P], mu[P:]
        out = np.zeros(P + N)
        # interface surface conduction of content
        imesh = ops.mesh.interface
        for s, seg in enumerate(imesh.segments):
            ell = imesh.lengths[s]
            grad = (mu_A[seg[1]] - mu_A[seg[0]]) / ell
            dens = rt.ip.mobility * grad ** 2 / (1.0 + tau * eps * grad ** 2)
            out[seg[0]] += 0.5 * ell * dens
            out[seg[1]] += 0.5 * ell * dens
        # transfer, split half interface / half bulk node
        m = rt.ip.m_transfer
        for i in range(P):
            n1, n2 = ops.mesh.node_pairs[i]
            w = ops.iface_weights[i]
            for nb in (n1, n2):
                d = mu_A[i] - mu_B[nb]
                q = m * d ** 2 / (1.0 + tau * eps * d ** 2)
                out[i] += 0.5 * w * q
                out[P + nb] += 0.5 * w * q
        # bulk Darcy dissipation per element
        for t, tri in enumerate(ops.mesh.triangles):
            g = ops.tri_grads[t].T @ mu_B[tri]
            g2 = float(g @ g)
            dens = rt.bp.mobility * g2 / (1.0 + tau * eps * g2)
            out[P + tri] += dens * ops.tri_areas[t] / 3.0
        return out
