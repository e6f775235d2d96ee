"""Thermodynamic functionals and balance diagnostics.

Evaluates the mechanical energy, the thermal-coupling term, the thermal part
of the free energy, kinetic and heat totals, the dissipation rate with its
per-mechanism breakdown, the per-step mechanical balance residual, and the
sign diagnostics of the entropy production.  All interface quadrature matches
the assembly module (lumped nodal for 1-homogeneous/viscous/stored terms,
3-point Gauss for the adhesive energies), which is what makes the discrete
balance residuals vanish to solver tolerance.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, fields as dc_fields
from typing import Optional

import numpy as np

from .assembly import DiscreteOperators
from .materials import MaterialSet


class DomainError(ValueError):
    pass


THETA_FLOOR_REL = 1e-12


@dataclass
class SystemState:
    u: np.ndarray          # (2N,)
    v: np.ndarray          # (2N,)
    pi: np.ndarray         # (P,)  tangential plastic slip (scalar in 2-D)
    alpha: np.ndarray      # (P,)  delamination, 1 = bonded
    theta_A: np.ndarray    # (P,)
    theta_B: np.ndarray    # (N,)
    vartheta_A: np.ndarray
    vartheta_B: np.ndarray
    zeta_A: Optional[np.ndarray] = None
    zeta_B: Optional[np.ndarray] = None
    mu_A: Optional[np.ndarray] = None
    mu_B: Optional[np.ndarray] = None

    def copy(self) -> "SystemState":
        kw = {}
        for f in dc_fields(self):
            val = getattr(self, f.name)
            kw[f.name] = None if val is None else np.array(val, copy=True)
        return SystemState(**kw)

    @classmethod
    def zero(cls, ops: DiscreteOperators, theta0: float = 1.0,
             alpha0: float = 1.0, poro: bool = False) -> "SystemState":
        N, P = ops.n_nodes, ops.n_pairs
        mat = ops.mat
        thA = np.full(P, float(theta0))
        thB = np.full(N, float(theta0))
        st = cls(
            u=np.zeros(2 * N), v=np.zeros(2 * N),
            pi=np.zeros(P), alpha=np.full(P, float(alpha0)),
            theta_A=thA, theta_B=thB,
            vartheta_A=np.asarray(mat.interface.capacity.content(thA)),
            vartheta_B=np.asarray(mat.bulk.capacity.content(thB)),
        )
        if poro:
            st.zeta_A = np.full(P, mat.interface.poro.zeta_eq)
            st.zeta_B = np.full(N, mat.bulk.poro.zeta_eq)
            st.mu_A = np.zeros(P)
            st.mu_B = np.zeros(N)
        return st


def interface_jumps(ops: DiscreteOperators, u: np.ndarray):
    """Nodal normal/tangential jumps (jn, jt)."""
    return ops.jumps.normal_jump @ u, ops.jumps.tangential_jump @ u


def kinetic_energy(ops: DiscreteOperators, v: np.ndarray) -> float:
    return 0.5 * float(v @ (ops.M_mass @ v))


def heat_total(ops: DiscreteOperators, state: SystemState) -> float:
    return float(ops.iface_weights @ state.vartheta_A
                 + ops.node_areas @ state.vartheta_B)


def mechanical_energy(ops: DiscreteOperators, state: SystemState,
                      alpha: Optional[np.ndarray] = None) -> float:
    """Purely mechanical free energy (theta-independent part).

    ``alpha`` overrides the state's damage field (the mechanical step
    evaluates the energy at the frozen previous damage).
    """
    mat = ops.mat
    im = mat.interface
    a = state.alpha if alpha is None else alpha
    if np.any(a < -1e-12) or np.any(a > 1.0 + 1e-12):
        raise DomainError("damage field outside [0, 1]")
    u, pi = state.u, state.pi
    E = 0.5 * float(u @ (ops.K_elast @ u))
    if mat.bulk.b_coeff != 0.0:
        # theta-independent remainder of the thermal stress: +theta_R*B:e
        E += mat.bulk.theta_R * float(np.sum(ops.B_thermal.T @ u))
    jn, jt = interface_jumps(ops, u)
    jn_g = ops.gauss_interp @ jn
    jt_g = ops.gauss_interp @ jt
    pi_g = ops.gauss_interp @ pi
    a_g = ops.gauss_interp @ a
    wg = ops.gauss_weights
    E += float(wg @ (0.5 * im.kappa_N(a_g) * jn_g ** 2))
    E += float(wg @ (0.5 * im.kappa_T(a_g) * (jt_g - pi_g) ** 2))
    E += float(wg @ im.gamma_C.value(jn_g))
    wi = ops.iface_weights
    E += float(wi @ (0.5 * im.kappa_H * pi ** 2))
    E += 0.5 * float(pi @ (ops.S_pi @ pi))
    E += 0.5 * float(a @ (ops.S_alpha @ a))
    E -= float(wi @ im.a0(a))
    if state.zeta_B is not None:
        from . import poro as poro_mod
        E += poro_mod.poro_energy(ops, state, alpha=a)
    return E


def coupling_energy(ops: DiscreteOperators, state: SystemState) -> float:
    """<b, theta> = -int theta_B B:e(u) - int_Gamma b0(alpha) theta_A."""
    mat = ops.mat
    val = -float(state.theta_B @ (ops.B_thermal.T @ state.u))
    val -= float(ops.iface_weights @ (mat.interface.b0(state.alpha) * state.theta_A))
    return val


def _psi0(capacity, theta, theta_R):
    """psi0 with psi0'' = c/theta, psi0(theta_R) = psi0'(theta_R) = 0."""
    theta = np.asarray(theta, dtype=float)
    floor = THETA_FLOOR_REL * max(theta_R, 1.0)
    xs, ws = np.polynomial.legendre.leggauss(24)
    out = np.zeros_like(theta)
    for i, th in np.ndenumerate(theta):
        a, b = theta_R, max(th, floor)
        s = 0.5 * (b - a) * xs + 0.5 * (a + b)
        w = 0.5 * (b - a) * ws
        out[i] = float(np.sum(w * (b - s) * capacity.c(s) / np.maximum(s, floor)))
    return out


def thermal_energy(ops: DiscreteOperators, state: SystemState) -> float:
    """Psi_th = int psi0(theta) over interface and bulk (diagnostic only)."""
    mat = ops.mat
    tR = mat.bulk.theta_R
    psiA = _psi0(mat.interface.capacity, state.theta_A, tR)
    psiB = _psi0(mat.bulk.capacity, state.theta_B, tR)
    return float(ops.iface_weights @ psiA + ops.node_areas @ psiB)


@dataclass
class FreeEnergyReport:
    mechanical: float
    coupling: float
    thermal: float

    @property
    def total(self) -> float:
        return self.mechanical + self.coupling - self.thermal


def free_energy(state: SystemState, ops: DiscreteOperators,
                mat: Optional[MaterialSet] = None) -> FreeEnergyReport:
    return FreeEnergyReport(
        mechanical=mechanical_energy(ops, state),
        coupling=coupling_energy(ops, state),
        thermal=thermal_energy(ops, state),
    )


@dataclass
class DissipationBreakdown:
    viscous_bulk: float = 0.0
    friction: float = 0.0
    yield_slip: float = 0.0
    damage: float = 0.0
    adhesive_T: float = 0.0
    adhesive_N: float = 0.0
    diffusion: float = 0.0

    @property
    def one_homogeneous(self) -> float:
        return self.friction + self.yield_slip

    @property
    def two_homogeneous(self) -> float:
        return (self.viscous_bulk + self.damage + self.adhesive_T
                + self.adhesive_N + self.diffusion)

    @property
    def total(self) -> float:
        return self.one_homogeneous + self.two_homogeneous


def dissipation_rate(state: SystemState, rates: dict, ops: DiscreteOperators,
                     mat: Optional[MaterialSet] = None) -> DissipationBreakdown:
    """Instantaneous dissipation R at the given state and rates.

    ``rates`` keys: v (bulk velocity), pi_rate, alpha_rate (all optional,
    default zero).  Friction weight uses the non-negative contact pressure
    -gamma_C'(jn) at the state's own jump.
    """
    mat = mat or ops.mat
    im = mat.interface
    out = DissipationBreakdown()
    v = rates.get("v")
    if v is not None and np.any(v):
        e = ops.strains(v)
        lam_v, mu_v = mat.bulk.lam_v, mat.bulk.mu_v
        dens = 0.5 * (lam_v * (e[:, 0] + e[:, 1]) ** 2
                      + 2.0 * mu_v * (e[:, 0] ** 2 + e[:, 1] ** 2 + 2.0 * e[:, 2] ** 2))
        out.viscous_bulk = float(ops.tri_areas @ dens)
        jn_rate, jt_rate = interface_jumps(ops, v)
    else:
        jn_rate = np.zeros(ops.n_pairs)
        jt_rate = np.zeros(ops.n_pairs)
    pi_rate = rates.get("pi_rate", np.zeros(ops.n_pairs))
    alpha_rate = rates.get("alpha_rate", np.zeros(ops.n_pairs))
    wi = ops.iface_weights
    jn, _ = interface_jumps(ops, state.u)
    pressure = np.maximum(-im.gamma_C.prime(jn), 0.0)
    fcoef = im.frict(state.alpha, state.theta_A)
    out.friction = float(wi @ (fcoef * pressure * np.abs(jt_rate)))
    sy = im.sigma_y(state.alpha, state.theta_A)
    out.yield_slip = float(wi @ (sy * np.abs(pi_rate)))
    from .materials import a1_partial
    out.damage = float(wi @ (np.asarray(a1_partial(alpha_rate, im.eps_dam, im.eps_heal))
                             * alpha_rate))
    out.adhesive_T = float(wi @ (im.d_T * (jt_rate - pi_rate) ** 2))
    out.adhesive_N = float(wi @ (im.d_N * jn_rate ** 2))
    return out


def mech_balance_residual(prev: SystemState, next_state: SystemState,
                          step_report) -> float:
    """|Delta(M + E) + tau*R - work - coupling + constraint work|.

    The scalar ingredients (tau*R at frozen coefficients and midpoint rates,
    external work, thermal-coupling work, damage box-constraint work) are
    taken from the step report, which records them exactly as the scheme
    used them.
    """
    r = step_report
    return abs(r.delta_kinetic + r.delta_mechanical + r.tau_R
               - r.work_F - r.work_coupling + r.box_work)


def entropy_production_terms(prev: SystemState, next_state: SystemState,
                             ops: DiscreteOperators, mat: MaterialSet,
                             tau: float) -> dict:
    """Sign diagnostics of the entropy production (per quadrature point).

    Conduction terms K grad(theta).grad(theta)/theta^2, transfer terms
    k_A (theta_B - theta_A)^2/(theta_A theta_B) and the quadratic
    dissipation heats divided by theta, each individually non-negative up
    to round-off.  Temperatures are floored at 1e-12*theta_R for the
    divisions; entries at floored points are flagged by value 0.
    """
    im = mat.interface
    floor = THETA_FLOOR_REL * max(mat.bulk.theta_R, 1.0)
    thA = np.maximum(next_state.theta_A, floor)
    thB = np.maximum(next_state.theta_B, floor)
    out = {}

    # bulk conduction per element
    mesh = ops.mesh
    grads = np.einsum("taj,ta->tj", ops.tri_grads, next_state.theta_B[mesh.triangles])
    th_e = np.maximum(thB[mesh.triangles].mean(axis=1), floor)
    k_e = np.asarray(mat.bulk.conductivity(th_e), dtype=float)
    out["conduction_bulk"] = k_e * np.sum(grads ** 2, axis=1) / th_e ** 2

    # interface conduction per segment
    imesh = mesh.interface
    from .geometry import surface_gradient
    G = surface_gradient(imesh)
    gth = np.asarray(G @ next_state.theta_A)
    th_s = np.maximum(thA[imesh.segments].mean(axis=1), floor)
    k_s = np.asarray(im.conductivity(th_s), dtype=float)
    out["conduction_interface"] = k_s * gth ** 2 / th_s ** 2

    # bulk <-> adhesive transfer per node pair, per side
    jn, _ = interface_jumps(ops, next_state.u)
    k1, k2 = im.transfer_coeffs(jn, next_state.alpha, prev.theta_A)
    n1 = mesh.node_pairs[:, 0]
    n2 = mesh.node_pairs[:, 1]
    out["transfer_side1"] = k1 * (thB[n1] - thA) ** 2 / (thA * thB[n1])
    out["transfer_side2"] = k2 * (thB[n2] - thA) ** 2 / (thA * thB[n2])

    # quadratic dissipation heats / theta
    dv = (next_state.u - prev.u) / tau  # midpoint velocity of the step
    e = ops.strains(dv)
    lam_v, mu_v = mat.bulk.lam_v, mat.bulk.mu_v
    dens = lam_v * (e[:, 0] + e[:, 1]) ** 2 + 2.0 * mu_v * (
        e[:, 0] ** 2 + e[:, 1] ** 2 + 2.0 * e[:, 2] ** 2)
    out["viscous_bulk_over_theta"] = dens / th_e

    jn_r, jt_r = interface_jumps(ops, dv)
    pi_r = (next_state.pi - prev.pi) / tau
    al_r = (next_state.alpha - prev.alpha) / tau
    from .materials import a1_partial
    out["adhesive_T_over_theta"] = im.d_T * (jt_r - pi_r) ** 2 / thA
    out["adhesive_N_over_theta"] = im.d_N * jn_r ** 2 / thA
    out["damage_over_theta"] = np.asarray(
        a1_partial(al_r, im.eps_dam, im.eps_heal)) * al_r / thA
    return out


# ---------------------------------------------------------------------------
# ledger
# ---------------------------------------------------------------------------

LEDGER_COLUMNS = [
    "t", "kinetic", "mechanical", "heat", "R_cum", "work_cum",
    "mech_residual", "total_slack", "min_theta", "max_alpha_change",
    "total_content", "diffusion_dissipation",
]


@dataclass
class EnergyLedger:
    rows: list = field(default_factory=list)

    def add(self, **kw):
        self.rows.append({c: kw.get(c, 0.0) for c in LEDGER_COLUMNS})

    def column(self, name) -> np.ndarray:
        return np.array([r[name] for r in self.rows])

    def to_csv(self, path):
        with open(path, "w", newline="") as f:
            wr = csv.writer(f)
            wr.writerow(LEDGER_COLUMNS)
            for r in self.rows:
                wr.writerow([repr(float(r[c])) for c in LEDGER_COLUMNS])

    @classmethod
    def from_csv(cls, path) -> "EnergyLedger":
        led = cls()
        with open(path, newline="") as f:
            rd = csv.reader(f)
            header = next(rd)
            for row in rd:
                led.rows.append({c: float(v) for c, v in zip(header, row)})
        return led
