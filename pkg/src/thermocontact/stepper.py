"""Three-stage staggered time stepper.

Per step k (fixed step tau): first the mechanical sub-problem for
(u, v, pi) — a convex minimisation whose quadratic energy terms enter at
midpoints and whose penetration penalty enters through its secant
difference-quotient primitive, so that testing the optimality system with
the midpoint velocity telescopes the energy exactly; second the damage
sub-problem for alpha in [0,1] (difference quotients in alpha, optional
monotonicity when healing is disabled); third the heat sub-problem for the
monolithic (theta_A, theta_B) with regularised dissipation sources and the
implicit adiabatic coupling.  The per-step energy identity and the
total-energy inequality are recorded in an EnergyLedger.

External loads are evaluated at the step midpoint t_k - tau/2 by default
(configurable to the right endpoint); the midpoint choice preserves the
second-order accuracy of the underlying one-leg midpoint scheme.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.sparse as sp

from . import assembly as asm
from . import energetics as en
from . import solvers
from .assembly import DiscreteOperators, LoadSet
from .energetics import EnergyLedger, SystemState
from .materials import RegularisationSet, a1_partial, diff_quotient, diff_quotient_dz


class InvariantViolation(RuntimeError):
    def __init__(self, name, step, detail):
        super().__init__(f"invariant '{name}' violated at step {step}: {detail}")
        self.name = name
        self.step = step
        self.detail = detail


@dataclass
class Flags:
    poro_enabled: bool = False
    b_coupling_enabled: bool = False
    friction_enabled: bool = True
    healing_enabled: bool = False


@dataclass
class Scenario:
    ops: DiscreteOperators
    loads: LoadSet
    T: float
    tau: float
    initial: SystemState
    reg: RegularisationSet = field(default_factory=RegularisationSet)
    flags: Flags = field(default_factory=Flags)
    tol_composite: float = 1e-10
    tol_linear: float = 1e-12
    tol_heat: float = 1e-10
    load_time: str = "midpoint"   # or "endpoint"
    snapshot_stride: int = 0      # 0: keep only first/last state

    def validate(self):
        if self.tau <= 0.0:
            raise ValueError("tau must be positive")
        n = self.T / self.tau
        if abs(n - round(n)) > 1e-9:
            raise ValueError("tau must divide the horizon T")
        self.reg.validate()

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.tau))


@dataclass
class StepReport:
    step: int = 0
    t: float = 0.0
    mech_iters: int = 0
    damage_iters: int = 0
    heat_iters: int = 0
    delta_kinetic: float = 0.0
    delta_mechanical: float = 0.0
    delta_heat: float = 0.0
    tau_R: float = 0.0
    tau_R_mech: float = 0.0
    tau_R_damage: float = 0.0
    tau_R_diffusion: float = 0.0
    work_F: float = 0.0
    work_coupling: float = 0.0
    box_work: float = 0.0
    heat_source_total: float = 0.0
    heat_ext_total: float = 0.0
    adiabatic_heat: float = 0.0
    min_theta: float = 0.0
    max_alpha_change: float = 0.0
    stick_nodes: int = 0
    slip_nodes: int = 0


# ---------------------------------------------------------------------------
# mechanical sub-step
# ---------------------------------------------------------------------------

class _MechCache:
    """Scenario-constant matrices restricted to the unknown vector
    x = (u at free dofs, pi)."""

    def __init__(self, scn: Scenario):
        ops = scn.ops
        N2 = 2 * ops.n_nodes
        nf = ops.free_dofs.size
        P = ops.n_pairs
        self.nf, self.P = nf, P
        Z = sp.csr_matrix((np.ones(nf), (ops.free_dofs, np.arange(nf))), shape=(N2, nf))
        self.Z = Z
        self.Jn = ops.jumps.normal_jump
        self.Jt = ops.jumps.tangential_jump
        self.Jng = (ops.gauss_interp @ self.Jn).tocsr()
        self.Jtg = (ops.gauss_interp @ self.Jt).tocsr()
        self.Pg = ops.gauss_interp
        tau = scn.tau
        im = ops.mat.interface
        W = sp.diags(ops.iface_weights)
        # constant part of the Hessian on full (u, pi) coordinates
        Huu = ((2.0 / tau ** 2) * ops.M_mass + (1.0 / tau) * ops.K_visc
               + 0.5 * ops.K_elast
               + (im.d_N / tau) * (self.Jn.T @ W @ self.Jn)
               + (im.d_T / tau) * (self.Jt.T @ W @ self.Jt))
        Hup = (-(im.d_T / tau)) * (self.Jt.T @ W)
        Hpp = ((im.d_T / tau) * W + 0.5 * im.kappa_H * W + 0.5 * ops.S_pi)
        self.H_const = sp.bmat([
            [Z.T @ Huu @ Z, Z.T @ Hup],
            [Hup.T @ Z, Hpp],
        ], format="csr")
        # fixed-dof displacement values (time-constant Dirichlet data)
        u_fix = np.zeros(N2)
        for n in ops.dirichlet_nodes:
            u_fix[2 * n] = scn.loads.u_D[0]
            u_fix[2 * n + 1] = scn.loads.u_D[1]
        self.u_fix = u_fix

    def expand(self, x):
        u = self.u_fix + self.Z @ x[:self.nf]
        return u, x[self.nf:]

    def restrict(self, gu_full, gpi):
        return np.concatenate([self.Z.T @ gu_full, gpi])


def _gamma_secant(gc, jn, jn_prev):
    """Vectorised secant slope of the penetration penalty."""
    out = np.empty_like(jn)
    for i in range(jn.size):
        out[i] = diff_quotient(gc.value, jn[i], jn_prev[i], fprime=gc.prime)
    return out


def _gamma_secant_dz(gc, jn, jn_prev):
    out = np.empty_like(jn)
    for i in range(jn.size):
        out[i] = diff_quotient_dz(gc.value, jn[i], jn_prev[i], gc.prime, gc.second)
    return out


def _gamma_primitive(gc, jn, jn_prev):
    """Integral of the secant slope from jn_prev to jn (per entry)."""
    xs, ws = np.polynomial.legendre.leggauss(8)
    out = np.zeros_like(jn)
    for i in range(jn.size):
        a, b = jn_prev[i], jn[i]
        if a == b:
            continue
        s = 0.5 * (b - a) * xs + 0.5 * (a + b)
        w = 0.5 * (b - a) * ws
        acc = 0.0
        for sv, wv in zip(s, w):
            acc += wv * diff_quotient(gc.value, sv, a, fprime=gc.prime)
        out[i] = acc
    return out


class _MechSmooth:
    """Smooth part of the mechanical-step potential (scaled by tau)."""

    def __init__(self, scn: Scenario, cache: _MechCache, prev: SystemState,
                 F_mid: np.ndarray, poro_ctx=None):
        self.scn = scn
        self.c = cache
        self.prev = prev
        ops = scn.ops
        im = ops.mat.interface
        tau = scn.tau
        self.tau = tau
        self.wi = ops.iface_weights
        self.wg = ops.gauss_weights
        a_g = cache.Pg @ prev.alpha
        self.kN_g = np.asarray(im.kappa_N(a_g), dtype=float)
        self.kT_g = np.asarray(im.kappa_T(a_g), dtype=float)
        self.gc = im.gamma_C
        self.jn_prev = self.c.Jn @ prev.u
        self.jt_prev = self.c.Jt @ prev.u
        self.jn_prev_g = self.c.Jng @ prev.u
        self.F_mid = F_mid
        if scn.flags.b_coupling_enabled and ops.mat.bulk.b_coeff != 0.0:
            self.Bvec = ops.B_thermal @ (prev.theta_B - ops.mat.bulk.theta_R)
        else:
            self.Bvec = np.zeros(2 * ops.n_nodes)
        self.d_N = im.d_N
        self.d_T = im.d_T
        self.kappa_H = im.kappa_H
        self.poro = poro_ctx

    # --- helpers -----------------------------------------------------------
    def _pieces(self, x):
        u, pi = self.c.expand(x)
        return u, pi, u - self.prev.u, pi - self.prev.pi

    def value(self, x):
        ops = self.scn.ops
        tau = self.tau
        u, pi, du, dpi = self._pieces(x)
        w = du - tau * self.prev.v
        val = (1.0 / tau ** 2) * float(w @ (ops.M_mass @ w))
        val += (0.5 / tau) * float(du @ (ops.K_visc @ du))
        djn = self.c.Jn @ du
        djt = self.c.Jt @ du
        val += (0.5 / tau) * float(self.wi @ (self.d_N * djn ** 2
                                              + self.d_T * (djt - dpi) ** 2))
        u_mid = 0.5 * (u + self.prev.u)
        pi_mid = 0.5 * (pi + self.prev.pi)
        val += float(u_mid @ (ops.K_elast @ u_mid))
        jn_gm = self.c.Jng @ u_mid
        jt_gm = self.c.Jtg @ u_mid
        pi_gm = self.c.Pg @ pi_mid
        val += float(self.wg @ (self.kN_g * jn_gm ** 2))
        val += float(self.wg @ (self.kT_g * (jt_gm - pi_gm) ** 2))
        val += float(self.wi @ (self.kappa_H * pi_mid ** 2))
        val += float(pi_mid @ (ops.S_pi @ pi_mid))
        jn_g = self.c.Jng @ u
        val += float(self.wg @ _gamma_primitive(self.gc, jn_g, self.jn_prev_g))
        val -= float(self.Bvec @ u) + float(self.F_mid @ u)
        if self.poro is not None:
            val += self.poro.value(u, pi, 0.5 * (u + self.prev.u),
                                   0.5 * (pi + self.prev.pi))
        return val

    def grad(self, x):
        ops = self.scn.ops
        tau = self.tau
        u, pi, du, dpi = self._pieces(x)
        w = du - tau * self.prev.v
        gu = (2.0 / tau ** 2) * (ops.M_mass @ w)
        gu += (1.0 / tau) * (ops.K_visc @ du)
        djn = self.c.Jn @ du
        djt = self.c.Jt @ du
        gu += self.c.Jn.T @ (self.wi * self.d_N * djn / tau)
        gu += self.c.Jt.T @ (self.wi * self.d_T * (djt - dpi) / tau)
        gpi = -(self.wi * self.d_T * (djt - dpi) / tau)
        u_mid = 0.5 * (u + self.prev.u)
        pi_mid = 0.5 * (pi + self.prev.pi)
        gu += ops.K_elast @ u_mid
        jn_gm = self.c.Jng @ u_mid
        jt_gm = self.c.Jtg @ u_mid
        pi_gm = self.c.Pg @ pi_mid
        gu += self.c.Jng.T @ (self.wg * self.kN_g * jn_gm)
        tg = self.wg * self.kT_g * (jt_gm - pi_gm)
        gu += self.c.Jtg.T @ tg
        gpi += -(self.c.Pg.T @ tg)
        gpi += self.wi * self.kappa_H * pi_mid
        gpi += ops.S_pi @ pi_mid
        jn_g = self.c.Jng @ u
        gu += self.c.Jng.T @ (self.wg * _gamma_secant(self.gc, jn_g, self.jn_prev_g))
        gu -= self.Bvec + self.F_mid
        if self.poro is not None:
            pgu, pgpi = self.poro.grad(u, pi, u_mid, pi_mid)
            gu += pgu
            gpi += pgpi
        return self.c.restrict(gu, gpi)

    def hess(self, x):
        u, _pi = self.c.expand(x)
        jn_g = self.c.Jng @ u
        dsec = self.wg * _gamma_secant_dz(self.gc, jn_g, self.jn_prev_g)
        Jg_x = self.c.Jng @ self.c.Z
        H = self.c.H_const + sp.bmat([
            [Jg_x.T @ sp.diags(dsec) @ Jg_x, None],
            [None, sp.csr_matrix((self.c.P, self.c.P))],
        ], format="csr")
        # alpha-frozen adhesive stiffness (varies per step)
        Jtg_x = self.c.Jtg @ self.c.Z
        WN = sp.diags(0.5 * self.wg * self.kN_g)
        WT = sp.diags(0.5 * self.wg * self.kT_g)
        Jng_x = self.c.Jng @ self.c.Z
        H = H + sp.bmat([
            [Jng_x.T @ WN @ Jng_x + Jtg_x.T @ WT @ Jtg_x, -(Jtg_x.T @ WT @ self.c.Pg)],
            [-(self.c.Pg.T @ WT @ Jtg_x), self.c.Pg.T @ WT @ self.c.Pg],
        ], format="csr")
        if self.poro is not None and self.poro.hess_x is not None:
            H = H + self.poro.hess_x
        return H


def _load_eval_time(scn: Scenario, t_k: float) -> float:
    return t_k - 0.5 * scn.tau if scn.load_time == "midpoint" else t_k


def step_mech(scn: Scenario, prev: SystemState, t_k: float,
              cache: Optional[_MechCache] = None, poro_ctx=None):
    """Mechanical sub-step; returns (u_k, v_k, pi_k, info dict)."""
    ops = scn.ops
    im = ops.mat.interface
    tau = scn.tau
    cache = cache or _MechCache(scn)
    F_mid = asm.assemble_F(_load_eval_time(scn, t_k), scn.loads, ops)
    smooth = _MechSmooth(scn, cache, prev, F_mid, poro_ctx=poro_ctx)

    # frozen nonsmooth weights
    jn_prev = cache.Jn @ prev.u
    pressure = np.maximum(-im.gamma_C.prime(jn_prev), 0.0)
    wf = ops.iface_weights * im.frict(prev.alpha, prev.theta_A) * pressure
    if not scn.flags.friction_enabled:
        wf = np.zeros_like(wf)
    wy = ops.iface_weights * im.sigma_y(prev.alpha, prev.theta_A)

    rows, offs, wts = [], [], []
    JtZ = (cache.Jt @ cache.Z).tocsr()
    jt_off = cache.Jt @ prev.u - cache.Jt @ cache.u_fix
    for i in range(cache.P):
        if wf[i] > 0.0:
            rows.append(JtZ[i])
            offs.append(jt_off[i])
            wts.append(wf[i])
    nfr = len(rows)
    eye_pi = sp.eye(cache.P, format="csr")
    for i in range(cache.P):
        if wy[i] > 0.0:
            rows.append(sp.hstack([sp.csr_matrix((1, 0)), eye_pi[i]], format="csr"))
            offs.append(prev.pi[i])
            wts.append(wy[i])
    if rows:
        blocks = []
        for r in rows[:nfr]:
            blocks.append(sp.hstack([r, sp.csr_matrix((1, cache.P))], format="csr"))
        for r in rows[nfr:]:
            blocks.append(sp.hstack([sp.csr_matrix((1, cache.nf)), r], format="csr"))
        L = sp.vstack(blocks, format="csr")
        prox = solvers.AbsThroughMap(L, np.array(offs), np.array(wts))
    else:
        prox = solvers.ProxNone()

    x0 = np.concatenate([prev.u[ops.free_dofs] , prev.pi])
    problem = solvers.CompositeProblem(
        value=smooth.value, grad=smooth.grad, prox=prox,
        hess=smooth.hess, tol=scn.tol_composite)
    x, rep = solvers.solve_composite(problem, x0)

    u_k, pi_k = cache.expand(x)
    v_k = 2.0 * (u_k - prev.u) / tau - prev.v

    du = u_k - prev.u
    dpi = pi_k - prev.pi
    djn = cache.Jn @ du
    djt = cache.Jt @ du
    tauR = (1.0 / tau) * float(du @ (ops.K_visc @ du))
    tauR += (1.0 / tau) * float(ops.iface_weights @ (
        im.d_N * djn ** 2 + im.d_T * (djt - dpi) ** 2))
    tauR += float(wf @ np.abs(djt)) + float(wy @ np.abs(dpi))

    info = {
        "iters": rep.iterations,
        "tau_R_mech": tauR,
        "work_F": float(F_mid @ du),
        "work_coupling": float(smooth.Bvec @ du),
        "friction_weights": wf,
        "slip_nodes": int(np.sum((wf > 0) & (np.abs(djt) > 1e-13))),
        "stick_nodes": int(np.sum((wf > 0) & (np.abs(djt) <= 1e-13))),
        "F_mid": F_mid,
    }
    if poro_ctx is not None:
        info.update(poro_ctx.finalize(u_k, pi_k,
                                      0.5 * (u_k + prev.u), 0.5 * (pi_k + prev.pi)))
    return u_k, v_k, pi_k, info


# ---------------------------------------------------------------------------
# damage sub-step
# ---------------------------------------------------------------------------

def _table_secant(table, a, a_prev):
    out = np.empty_like(a)
    for i in range(a.size):
        out[i] = diff_quotient(table, a[i], a_prev[i], fprime=table.prime)
    return out


def _table_secant_dz(table, a, a_prev):
    zero = lambda s: 0.0
    out = np.empty_like(a)
    for i in range(a.size):
        out[i] = diff_quotient_dz(table, a[i], a_prev[i], table.prime, zero)
    return out


def _table_primitive(table, a, a_prev):
    xs, ws = np.polynomial.legendre.leggauss(6)
    out = np.zeros_like(a)
    for i in range(a.size):
        lo, hi = a_prev[i], a[i]
        if lo == hi:
            continue
        s = 0.5 * (hi - lo) * xs + 0.5 * (lo + hi)
        w = 0.5 * (hi - lo) * ws
        acc = 0.0
        for sv, wv in zip(s, w):
            acc += wv * diff_quotient(table, sv, lo, fprime=table.prime)
        out[i] = acc
    return out


def step_damage(scn: Scenario, prev: SystemState, u_k: np.ndarray, pi_k: np.ndarray):
    """Damage sub-step; returns (alpha_k, info dict)."""
    ops = scn.ops
    im = ops.mat.interface
    tau = scn.tau
    wi = ops.iface_weights
    wg = ops.gauss_weights
    Pg = ops.gauss_interp
    jn_g = ops.gauss_interp @ (ops.jumps.normal_jump @ u_k)
    jt_g = ops.gauss_interp @ (ops.jumps.tangential_jump @ u_k)
    pi_g = ops.gauss_interp @ pi_k
    drive_N = 0.5 * jn_g ** 2          # multiplies the kappa_N(alpha) secant
    drive_T = 0.5 * (jt_g - pi_g) ** 2
    a_prev = prev.alpha
    a_prev_g = Pg @ a_prev
    thA = prev.theta_A

    def rate_coef(dalpha):
        return np.where(dalpha <= 0.0, im.eps_dam, 1.0 / im.eps_heal)

    def value(a):
        da = a - a_prev
        val = float(wi @ (rate_coef(da) * da ** 2)) / (2.0 * tau)
        a_mid = 0.5 * (a + a_prev)
        val += float(a_mid @ (ops.S_alpha @ a_mid))
        a_g = Pg @ a
        val += float(wg @ (drive_N * _table_primitive(im.kappa_N, a_g, a_prev_g)))
        val += float(wg @ (drive_T * _table_primitive(im.kappa_T, a_g, a_prev_g)))
        val -= float(wi @ _table_primitive(im.a0, a, a_prev))
        val -= float(wi @ (thA * _table_primitive(im.b0, a, a_prev)))
        return val

    def smooth_grad(a):
        da = a - a_prev
        g = wi * np.asarray(a1_partial(da / tau, im.eps_dam, im.eps_heal))
        g = g + ops.S_alpha @ (0.5 * (a + a_prev))
        a_g = Pg @ a
        gg = wg * (drive_N * _table_secant(im.kappa_N, a_g, a_prev_g)
                   + drive_T * _table_secant(im.kappa_T, a_g, a_prev_g))
        g = g + Pg.T @ gg
        g = g - wi * _table_secant(im.a0, a, a_prev)
        g = g - wi * thA * _table_secant(im.b0, a, a_prev)
        return g

    def hess(a):
        da = a - a_prev
        H = sp.diags(wi * rate_coef(da) / tau) + 0.5 * ops.S_alpha
        a_g = Pg @ a
        dg = wg * (drive_N * _table_secant_dz(im.kappa_N, a_g, a_prev_g)
                   + drive_T * _table_secant_dz(im.kappa_T, a_g, a_prev_g))
        H = H + Pg.T @ sp.diags(dg) @ Pg
        H = H - sp.diags(wi * _table_secant_dz(im.a0, a, a_prev))
        H = H - sp.diags(wi * thA * _table_secant_dz(im.b0, a, a_prev))
        return sp.csr_matrix(H)

    upper = np.ones_like(a_prev) if scn.flags.healing_enabled else a_prev.copy()
    prox = solvers.BoxProx(lower=np.zeros_like(a_prev), upper=upper)
    problem = solvers.CompositeProblem(value=value, grad=smooth_grad, prox=prox,
                                       hess=hess, tol=scn.tol_composite)
    a_k, rep = solvers.solve_composite(problem, a_prev.copy())

    da = a_k - a_prev
    g_final = smooth_grad(a_k)
    box_work = -float(g_final @ da)          # multiplier work from stationarity
    tauR = float(wi @ (rate_coef(da) * da ** 2)) / tau
    # thermal-coupling work: theta_A * d(b0(alpha)) (enters <b, theta>)
    work_coupling = float(wi @ (thA * (np.asarray(im.b0(a_k)) - np.asarray(im.b0(a_prev)))))
    info = {"iters": rep.iterations, "tau_R_damage": tauR,
            "box_work": box_work, "work_coupling": work_coupling,
            "max_alpha_change": float(np.max(np.abs(da))) if da.size else 0.0}
    return a_k, info


# ---------------------------------------------------------------------------
# heat sub-step
# ---------------------------------------------------------------------------

def step_heat(scn: Scenario, prev: SystemState, state_k: SystemState,
              t_k: float, poro_heat=None):
    """Heat sub-step; updates theta/vartheta of state_k in place.

    ``state_k`` must already carry (u, v, pi, alpha) at level k.  Returns an
    info dict with the heat bookkeeping (test-by-1 identity pieces).
    """
    ops = scn.ops
    mat = ops.mat
    im = mat.interface
    reg = scn.reg
    tau = scn.tau
    wi = ops.iface_weights
    P, N = ops.n_pairs, ops.n_nodes

    du = state_k.u - prev.u
    dpi = state_k.pi - prev.pi
    dal = state_k.alpha - prev.alpha
    jn_r = (ops.jumps.normal_jump @ du) / tau
    jt_r = (ops.jumps.tangential_jump @ du) / tau
    pi_r = dpi / tau

    # interface dissipation sources, regularised per-factor
    den_v = 1.0 + tau * reg.eps_v * (jn_r ** 2 + jt_r ** 2)
    jn_prev = ops.jumps.normal_jump @ prev.u
    pressure = np.maximum(-im.gamma_C.prime(jn_prev), 0.0)
    fcoef = im.frict(prev.alpha, prev.theta_A)
    if not scn.flags.friction_enabled:
        fcoef = np.zeros_like(np.asarray(fcoef) * np.ones(P))
    r_int = (fcoef * pressure * np.abs(jt_r)
             + im.d_T * (jt_r - pi_r) * jt_r + im.d_N * jn_r ** 2) / den_v
    sy = im.sigma_y(prev.alpha, prev.theta_A)
    r_int = r_int + (sy * np.abs(dpi) + im.d_T * (pi_r - jt_r) * dpi) \
        / (tau + reg.eps_pi * dpi ** 2)
    r_int = r_int + np.asarray(a1_partial(dal / tau, im.eps_dam, im.eps_heal)) * dal \
        / (tau + reg.eps_alpha * dal ** 2)

    # bulk viscous heating per element -> lumped nodal
    e = ops.strains(du / tau)
    lam_v, mu_v = mat.bulk.lam_v, mat.bulk.mu_v
    dens = lam_v * (e[:, 0] + e[:, 1]) ** 2 + 2.0 * mu_v * (
        e[:, 0] ** 2 + e[:, 1] ** 2 + 2.0 * e[:, 2] ** 2)
    e_norm2 = e[:, 0] ** 2 + e[:, 1] ** 2 + 2.0 * e[:, 2] ** 2
    dens = dens / (1.0 + tau * reg.eps_e * e_norm2)
    r_bulk = np.zeros(N)
    for t, tri in enumerate(ops.mesh.triangles):
        r_bulk[tri] += dens[t] * ops.tri_areas[t] / 3.0

    source = np.concatenate([wi * r_int, r_bulk])
    r_reg_total = float(np.sum(source))

    if poro_heat is not None:
        source = source + poro_heat
        r_reg_total = float(np.sum(source))

    # external boundary heat, regularised
    t_h = _load_eval_time(scn, t_k)
    hmag = scn.loads.h_table(t_h)
    h_nodal = hmag / (1.0 + tau * reg.eps_h * hmag) * ops.boundary_node_lengths
    source = source + np.concatenate([np.zeros(P), h_nodal])
    h_total = float(np.sum(h_nodal))

    jn_k = ops.jumps.normal_jump @ state_k.u
    K = scn.ops.heat_matrix(prev.theta_A, prev.theta_B, jn_k, state_k.alpha)

    adiabatic_diag = np.zeros(P + N)
    if scn.flags.b_coupling_enabled:
        b0p = np.asarray(im.b0.prime(prev.alpha), dtype=float)
        adiabatic_diag[:P] = wi * b0p * dal / (tau + reg.eps_alpha * dal ** 2)
        div_rate = (e[:, 0] + e[:, 1]) / (1.0 + tau * reg.eps_e * e_norm2)
        q_bulk = np.zeros(N)
        for t, tri in enumerate(ops.mesh.triangles):
            q_bulk[tri] += mat.bulk.b_coeff * div_rate[t] * ops.tri_areas[t] / 3.0
        adiabatic_diag[P:] = q_bulk
        K = K + sp.diags(adiabatic_diag)

    mass = np.concatenate([wi, ops.node_areas])
    vt_prev = np.concatenate([prev.vartheta_A, prev.vartheta_B])

    def content(th):
        return np.concatenate([mat.interface.capacity.content(np.maximum(th[:P], 0.0)),
                               mat.bulk.capacity.content(np.maximum(th[P:], 0.0))])

    def capacity(th):
        return np.concatenate([mat.interface.capacity.c(np.maximum(th[:P], 0.0)),
                               mat.bulk.capacity.c(np.maximum(th[P:], 0.0))])

    theta0 = np.concatenate([prev.theta_A, prev.theta_B])
    theta = solvers.solve_monotone_heat(
        content, capacity, sp.csc_matrix(K), vt_prev, tau, source,
        theta0=theta0, mass=mass, tol=scn.tol_heat)

    min_theta = float(np.min(theta))
    tol_neg = 1e-12 * max(mat.bulk.theta_R, 1.0)
    if min_theta < -tol_neg:
        raise InvariantViolation("theta_nonnegative", -1,
                                 f"min theta {min_theta:.3e}")

    theta_pos = np.maximum(theta, 0.0)
    state_k.theta_A = theta[:P]
    state_k.theta_B = theta[P:]
    state_k.vartheta_A = np.asarray(mat.interface.capacity.content(theta_pos[:P]))
    state_k.vartheta_B = np.asarray(mat.bulk.capacity.content(theta_pos[P:]))

    adiabatic_heat = -tau * float(adiabatic_diag @ theta)
    info = {
        "min_theta": min_theta,
        "r_reg_total": tau * r_reg_total,
        "h_total": tau * h_total,
        "adiabatic_heat": adiabatic_heat,
    }
    return info


# ---------------------------------------------------------------------------
# run loop
# ---------------------------------------------------------------------------

@dataclass
class Trajectory:
    scenario: Scenario
    states: list
    ledger: EnergyLedger
    reports: list

    @property
    def final(self) -> SystemState:
        return self.states[-1]


def apply_initial_damping(scn: Scenario, state: SystemState) -> SystemState:
    """Initial heat-content damping: theta0 -> theta0/(1 + tau*eps_h*theta0)."""
    st = state.copy()
    damp = lambda th: th / (1.0 + scn.tau * scn.reg.eps_h * th)
    st.theta_A = damp(np.asarray(st.theta_A, dtype=float))
    st.theta_B = damp(np.asarray(st.theta_B, dtype=float))
    st.vartheta_A = np.asarray(scn.ops.mat.interface.capacity.content(st.theta_A))
    st.vartheta_B = np.asarray(scn.ops.mat.bulk.capacity.content(st.theta_B))
    return st


def run(scn: Scenario, progress=None) -> Trajectory:
    scn.validate()
    ops = scn.ops
    tau = scn.tau
    prev = apply_initial_damping(scn, scn.initial)

    if scn.flags.poro_enabled:
        from . import poro as poro_mod
        poro_runtime = poro_mod.PoroRuntime(scn)
    else:
        poro_runtime = None

    cache = _MechCache(scn)
    ledger = EnergyLedger()
    reports = []
    states = [prev.copy()]

    M_prev = en.kinetic_energy(ops, prev.v)
    E_prev = en.mechanical_energy(ops, prev)
    H_prev = en.heat_total(ops, prev)
    R_cum = 0.0
    work_cum = 0.0
    ledger.add(t=0.0, kinetic=M_prev, mechanical=E_prev, heat=H_prev,
               min_theta=float(min(prev.theta_A.min(), prev.theta_B.min())),
               total_content=_total_content(ops, prev))

    for k in range(1, scn.n_steps + 1):
        t_k = k * tau
        report = StepReport(step=k, t=t_k)

        if poro_runtime is not None:
            poro_ctx = poro_runtime.make_context(prev)
            u_k, v_k, pi_k, minfo = step_mech(scn, prev, t_k, cache, poro_ctx=poro_ctx)
        else:
            poro_ctx = None
            u_k, v_k, pi_k, minfo = step_mech(scn, prev, t_k, cache)

        alpha_k, dinfo = step_damage(scn, prev, u_k, pi_k)
        if np.any(alpha_k < -1e-12) or np.any(alpha_k > 1.0 + 1e-12):
            raise InvariantViolation("alpha_box", k, f"range [{alpha_k.min()}, {alpha_k.max()}]")
        if not scn.flags.healing_enabled and np.any(alpha_k > prev.alpha + 1e-12):
            raise InvariantViolation("alpha_monotone", k, "damage increased with healing off")

        state_k = prev.copy()
        state_k.u, state_k.v, state_k.pi, state_k.alpha = u_k, v_k, pi_k, alpha_k
        if poro_ctx is not None:
            state_k.zeta_A = minfo["zeta_A"]
            state_k.zeta_B = minfo["zeta_B"]
            state_k.mu_A = minfo["mu_A"]
            state_k.mu_B = minfo["mu_B"]
            poro_heat = minfo["heat_sources"]
        else:
            poro_heat = None

        try:
            hinfo = step_heat(scn, prev, state_k, t_k, poro_heat=poro_heat)
        except InvariantViolation as exc:
            raise InvariantViolation(exc.name, k, exc.detail) from None

        # bookkeeping
        M_k = en.kinetic_energy(ops, state_k.v)
        E_k = en.mechanical_energy(ops, state_k)
        H_k = en.heat_total(ops, state_k)
        report.mech_iters = minfo["iters"]
        report.damage_iters = dinfo["iters"]
        report.delta_kinetic = M_k - M_prev
        report.delta_mechanical = E_k - E_prev
        report.delta_heat = H_k - H_prev
        report.tau_R_mech = minfo["tau_R_mech"]
        report.tau_R_damage = dinfo["tau_R_damage"]
        report.tau_R_diffusion = minfo.get("tau_R_diffusion", 0.0)
        report.tau_R = (report.tau_R_mech + report.tau_R_damage
                        + report.tau_R_diffusion)
        report.work_F = minfo["work_F"]
        report.work_coupling = minfo["work_coupling"] + dinfo["work_coupling"]
        report.box_work = dinfo["box_work"]
        report.heat_source_total = hinfo["r_reg_total"]
        report.heat_ext_total = hinfo["h_total"]
        report.adiabatic_heat = hinfo["adiabatic_heat"]
        report.min_theta = hinfo["min_theta"]
        report.max_alpha_change = dinfo["max_alpha_change"]
        report.stick_nodes = minfo["stick_nodes"]
        report.slip_nodes = minfo["slip_nodes"]

        residual = en.mech_balance_residual(prev, state_k, report)
        total_slack = (report.delta_kinetic + report.delta_mechanical
                       + report.delta_heat - report.work_F
                       - report.work_coupling - report.adiabatic_heat
                       - report.heat_ext_total)
        R_cum += report.tau_R
        work_cum += report.work_F
        ledger.add(
            t=t_k, kinetic=M_k, mechanical=E_k, heat=H_k,
            R_cum=R_cum, work_cum=work_cum,
            mech_residual=residual, total_slack=total_slack,
            min_theta=report.min_theta,
            max_alpha_change=report.max_alpha_change,
            total_content=_total_content(ops, state_k),
            diffusion_dissipation=report.tau_R_diffusion,
        )
        reports.append(report)

        keep = (scn.snapshot_stride and k % scn.snapshot_stride == 0)
        if keep or k == scn.n_steps:
            states.append(state_k.copy())
        prev = state_k
        M_prev, E_prev, H_prev = M_k, E_k, H_k
        if progress is not None:
            progress(k, scn.n_steps, report)

    return Trajectory(scenario=scn, states=states, ledger=ledger, reports=reports)


def _total_content(ops, state) -> float:
    if state.zeta_A is None:
        return 0.0
    return float(ops.iface_weights @ state.zeta_A + ops.node_areas @ state.zeta_B)


# ---------------------------------------------------------------------------
# tau-refinement study
# ---------------------------------------------------------------------------

def _h1_norm(ops, u):
    return float(np.sqrt(u @ ((ops.K_elast + ops.M_mass) @ u)))


def _l2_norm(ops, v):
    return float(np.sqrt(v @ (ops.M_mass @ v)))


@dataclass
class StudyRow:
    tau: float
    err_u: float = np.nan
    err_v: float = np.nan
    err_theta: float = np.nan
    order_u: float = np.nan
    norm_u_h1: float = 0.0
    norm_theta_linf_l1: float = 0.0
    R_cum: float = 0.0


def convergence_study(scn: Scenario, tau_list, scale_reg: bool = True):
    """Run the scenario at each tau plus a halved reference; report errors.

    Terminal-state errors are measured against the finest-tau/2 reference in
    the natural norms (H1 for u, L2 for v, weighted-L1 for the heat
    content).  Regularisation coefficients scale proportionally to tau (so
    their influence vanishes in the limit) unless ``scale_reg`` is False.
    """
    tau_list = sorted(set(float(t) for t in tau_list), reverse=True)
    tau_ref = tau_list[-1] / 2.0
    ops = scn.ops
    mass = np.concatenate([ops.iface_weights, ops.node_areas])

    def run_at(tau):
        reg = scn.reg.scaled(tau / tau_list[0]) if scale_reg else scn.reg
        sub = replace(scn, tau=tau, reg=reg, snapshot_stride=1)
        traj = run(sub)
        st = traj.final
        vt = np.concatenate([st.vartheta_A, st.vartheta_B])
        norms = {
            "u_h1": float(np.sqrt(sum(
                tau * (_h1_norm(ops, s.u) ** 2 + _l2_norm(ops, s.v) ** 2)
                for s in traj.states[1:]))),
            "theta_linf_l1": float(np.max(traj.ledger.column("heat"))),
            "R_cum": float(traj.ledger.column("R_cum")[-1]),
        }
        return st, vt, norms

    ref_state, ref_vt, _ = run_at(tau_ref)
    rows = []
    for tau in tau_list:
        st, vt, norms = run_at(tau)
        rows.append(StudyRow(
            tau=tau,
            err_u=_h1_norm(ops, st.u - ref_state.u),
            err_v=_l2_norm(ops, st.v - ref_state.v),
            err_theta=float(mass @ np.abs(vt - ref_vt)),
            norm_u_h1=norms["u_h1"],
            norm_theta_linf_l1=norms["theta_linf_l1"],
            R_cum=norms["R_cum"],
        ))
    for i in range(len(rows) - 1):
        r_coarse, r_fine = rows[i], rows[i + 1]
        if r_fine.err_u > 0 and r_coarse.err_u > 0:
            ratio = np.log(r_coarse.err_u / r_fine.err_u)
            rows[i].order_u = float(ratio / np.log(r_coarse.tau / r_fine.tau))
    return rows
