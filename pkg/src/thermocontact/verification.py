"""Built-in acceptance checks.

Each criterion is a function returning a CriterionResult; the CLI `verify`
command and the acceptance test suite both run these, so the pass/fail
surface is identical in both places.  All runs are desk-scale.
"""

from __future__ import annotations

from dataclasses import dataclass, replace as dc_replace
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from . import energetics as en
from . import scenarios, solvers, stepper
from .materials import diff_quotient, DELTA_SWITCH


@dataclass
class CriterionResult:
    index: int
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"[{mark}] #{self.index:2d} {self.name}: {self.detail}"


def _energy_scale(led):
    return np.maximum(np.abs(led.column("kinetic") + led.column("mechanical")
                             + led.column("heat")), 1.0)


# ---------------------------------------------------------------------------

def criterion_mech_balance() -> CriterionResult:
    """Per-step mechanical energy balance exact to solver tolerance, and a
    loosened-tolerance negative control."""
    scn = scenarios.adhesion_friction(n_steps=100, T=0.2)
    traj = stepper.run(scn)
    led = traj.ledger
    rel = led.column("mech_residual")[1:] / _energy_scale(led)[1:]
    tight = float(np.max(rel))

    loose_scn = scenarios.adhesion_friction(n_steps=100, T=0.2)
    loose_scn.tol_composite = 1e-4
    loose_led = stepper.run(loose_scn).ledger
    loose = float(np.max(loose_led.column("mech_residual")[1:]
                         / _energy_scale(loose_led)[1:]))
    ok = tight <= 1e-9 and loose > tight
    return CriterionResult(1, "mechanical energy balance", ok,
                           f"worst relative residual {tight:.2e} at tol 1e-10 "
                           f"(loosened to 1e-4 gives {loose:.2e})")


def criterion_total_energy() -> CriterionResult:
    """M + E + H non-increasing without work input, >= 500 steps."""
    scn = scenarios.relaxation(n_steps=500, T=1.0)
    traj = stepper.run(scn)
    led = traj.ledger
    total = led.column("kinetic") + led.column("mechanical") + led.column("heat")
    inc = np.diff(total) / _energy_scale(led)[1:]
    worst = float(np.max(inc))
    slips = sum(r.slip_nodes for r in traj.reports)
    ok = worst <= 1e-9 and slips > 0
    return CriterionResult(2, "total energy inequality", ok,
                           f"worst relative increase {worst:.2e} over "
                           f"{len(traj.reports)} steps ({slips} slip-node events)")


def criterion_theta_nonnegative() -> CriterionResult:
    """min theta >= -1e-12*theta_R across the shipped scenario set."""
    runs = [
        ("friction_heating", scenarios.friction_heating(n_steps=100, T=0.2)),
        ("shock_heating", scenarios.shock_heating(n_steps=200, T=0.4)),
        ("adhesion_friction", scenarios.adhesion_friction(n_steps=100, T=0.2)),
        ("peel", scenarios.peel(n_steps=100, T=0.4)),
    ]
    worst = np.inf
    for name, scn in runs:
        led = stepper.run(scn).ledger
        worst = min(worst, float(np.min(led.column("min_theta"))))
    tol = -1e-12 * 1.0
    ok = worst >= tol
    return CriterionResult(3, "temperature non-negativity", ok,
                           f"global min theta {worst:.3e} (bound {tol:.1e}; "
                           "includes a theta0 = 0 shock case)")


def criterion_entropy_terms() -> CriterionResult:
    """Each quadratic entropy-production term >= -1e-12 everywhere."""
    worst = {}
    for scn in (scenarios.friction_heating(n_steps=80, T=0.16),
                scenarios.shock_heating(n_steps=80, T=0.16)):
        scn.snapshot_stride = 1
        traj = stepper.run(scn)
        ops, tau = scn.ops, scn.tau
        for prev, nxt in zip(traj.states[:-1], traj.states[1:]):
            terms = en.entropy_production_terms(prev, nxt, ops, ops.mat, tau)
            for key, vals in terms.items():
                m = float(np.min(vals))
                worst[key] = min(worst.get(key, np.inf), m)
    worst_overall = min(worst.values())
    ok = worst_overall >= -1e-12
    return CriterionResult(4, "entropy production signs", ok,
                           f"most negative term value {worst_overall:.3e} "
                           f"over {len(worst)} term families")


def criterion_midpoint_order() -> CriterionResult:
    """Temporal order >= 1.9 on the smooth manufactured case."""
    scn = scenarios.manufactured()
    T = scn.T
    rows = stepper.convergence_study(scn, [T / 50, T / 100, T / 200, T / 400])
    orders = [r.order_u for r in rows if np.isfinite(r.order_u)]
    finest = orders[-1] if orders else float("nan")
    ok = bool(np.isfinite(finest) and finest >= 1.9)
    txt = ", ".join(f"{o:.2f}" for o in orders)
    return CriterionResult(5, "midpoint temporal order", ok,
                           f"observed orders [{txt}], finest {finest:.3f}")


def criterion_stability_norms() -> CriterionResult:
    """A-priori-estimate norms vary <= 5% across tau halvings."""
    scn = scenarios.frictional_study()
    T = scn.T
    rows = stepper.convergence_study(scn, [T / 50, T / 100, T / 200])
    worst = 1.0
    for a, b in zip(rows[:-1], rows[1:]):
        for attr in ("norm_u_h1", "norm_theta_linf_l1", "R_cum"):
            x, y = getattr(a, attr), getattr(b, attr)
            if max(abs(x), abs(y)) < 1e-12:
                continue
            worst = max(worst, max(x, y) / max(min(x, y), 1e-300))
    ok = worst <= 1.05
    return CriterionResult(6, "a-priori norm boundedness", ok,
                           f"worst halving ratio {worst:.4f} (bound 1.05)")


def criterion_stick_slip() -> CriterionResult:
    """0-D Coulomb threshold against the hand closed form."""
    m, tau, wf = 1.0, 0.2, 1.0

    def solve(F):
        prob = solvers.CompositeProblem(
            value=lambda y: (m / tau ** 2) * y[0] ** 2 - F * y[0],
            grad=lambda y: np.array([2.0 * m / tau ** 2 * y[0] - F]),
            hess=lambda y: sp.csr_matrix(np.array([[2.0 * m / tau ** 2]])),
            prox=solvers.AbsThroughMap(sp.eye(1, format="csr"),
                                       np.zeros(1), np.array([wf])),
            tol=1e-13)
        y, _ = solvers.solve_composite(prob, np.zeros(1))
        return float(y[0])

    y_stick = solve(0.99 * wf)
    F_slip = 1.5 * wf
    y_slip = solve(F_slip)
    y_exact = (F_slip - wf) * tau ** 2 / (2.0 * m)
    colinear = np.sign(y_slip) == np.sign(F_slip) and abs(y_slip) > 0
    ok = (abs(y_stick) <= 1e-10 and colinear
          and abs(y_slip - y_exact) <= 1e-8)
    return CriterionResult(7, "Coulomb stick/slip threshold", ok,
                           f"stick |slip|={abs(y_stick):.2e}; slip err "
                           f"{abs(y_slip - y_exact):.2e} vs closed form")


def _grid_min_1d(f, lo, hi, step=1e-4):
    xs = np.arange(lo, hi + step, step)
    return float(xs[np.argmin(f(xs))])


def criterion_prox_oracle() -> CriterionResult:
    """Prox operators and the composite solver against grid minimisation."""
    rng = np.random.default_rng(20240817)
    worst = 0.0
    for _ in range(40):  # scalar soft-threshold
        x = rng.uniform(-3, 3)
        w = rng.uniform(0, 2)
        t = rng.uniform(0.1, 2)
        got = solvers.prox_weighted_norm(np.array([x]), np.array([w]), t)[0]
        ref = _grid_min_1d(lambda y: 0.5 * (y - x) ** 2 + t * w * np.abs(y), -4, 4)
        worst = max(worst, abs(got - ref))
    for _ in range(30):  # box projection
        x = rng.uniform(-2, 3)
        got = solvers.project_box01(np.array([x]))[0]
        ref = _grid_min_1d(lambda y: 0.5 * (y - x) ** 2
                           + np.where((y < 0) | (y > 1), 1e9, 0.0), -0.5, 1.5)
        worst = max(worst, abs(got - ref))
    for _ in range(30):  # composite solver, 2-D quadratic + separable abs
        A = rng.uniform(-1, 1, (2, 2))
        Q = A @ A.T + 0.5 * np.eye(2)
        b = rng.uniform(-2, 2, 2)
        w = rng.uniform(0, 1.5, 2)
        prob = solvers.CompositeProblem(
            value=lambda y, Q=Q, b=b: 0.5 * y @ Q @ y - b @ y,
            grad=lambda y, Q=Q, b=b: Q @ y - b,
            hess=lambda y, Q=Q: sp.csr_matrix(Q),
            prox=solvers.AbsThroughMap(sp.eye(2, format="csr"),
                                       np.zeros(2), w),
            tol=1e-13)
        y, _ = solvers.solve_composite(prob, np.zeros(2))
        # refine a coarse grid near the solver answer at 1e-4 resolution
        best = None
        for y0 in (np.arange(y[0] - 0.05, y[0] + 0.05, 1e-4)):
            y1s = np.arange(y[1] - 0.05, y[1] + 0.05, 1e-4)
            vals = (0.5 * (Q[0, 0] * y0 ** 2 + 2 * Q[0, 1] * y0 * y1s
                           + Q[1, 1] * y1s ** 2) - b[0] * y0 - b[1] * y1s
                    + w[0] * abs(y0) + w[1] * np.abs(y1s))
            j = int(np.argmin(vals))
            if best is None or vals[j] < best[0]:
                best = (float(vals[j]), np.array([y0, y1s[j]]))
        worst = max(worst, float(np.max(np.abs(y - best[1]))))
    ok = worst <= 2e-4
    return CriterionResult(8, "prox/solver oracle agreement", ok,
                           f"worst argmin deviation {worst:.2e} over 100 instances")


def criterion_diff_quotient() -> CriterionResult:
    """Midpoint identity for quadratics; branch continuity for a quartic."""
    rng = np.random.default_rng(7)
    worst_quad = 0.0
    for _ in range(1000):
        a = rng.uniform(0.1, 5)
        z, zt = rng.uniform(-10, 10, 2)
        f = lambda s, a=a: 0.5 * a * s * s
        fp = lambda s, a=a: a * s
        got = diff_quotient(f, z, zt, fprime=fp)
        ref = 0.5 * a * (z + zt)
        worst_quad = max(worst_quad, abs(got - ref) / max(1.0, abs(ref)))
    # quartic branch switch: value just outside vs just inside the window
    f4 = lambda s: s ** 4
    f4p = lambda s: 4.0 * s ** 3
    worst_sw = 0.0
    for zt in (-1.7, -0.3, 0.4, 1.9):
        eps = DELTA_SWITCH * max(1.0, abs(zt))
        lo = diff_quotient(f4, zt + 0.99 * eps, zt, fprime=f4p)
        hi = diff_quotient(f4, zt + 1.01 * eps, zt, fprime=f4p)
        worst_sw = max(worst_sw, abs(hi - lo))
    ok = worst_quad <= 1e-12 and worst_sw <= 1e-7
    return CriterionResult(9, "secant midpoint identity", ok,
                           f"quadratic error {worst_quad:.1e}; "
                           f"branch jump {worst_sw:.1e}")


def criterion_poro() -> CriterionResult:
    """Mass conservation, non-negative diffusion dissipation, and the
    mechanical balance with poro terms included."""
    scn = scenarios.poro_diffusion(n_steps=500, T=1.0)
    traj = stepper.run(scn)
    led = traj.ledger
    content = led.column("total_content")
    drift = float(np.max(np.abs(content - content[0]))) / max(abs(content[0]), 1.0)
    diss_min = float(np.min(led.column("diffusion_dissipation")))
    rel = float(np.max(led.column("mech_residual")[1:] / _energy_scale(led)[1:]))
    ok = drift <= 1e-9 and diss_min >= -1e-15 and rel <= 1e-9
    return CriterionResult(10, "poro conservation and balance", ok,
                           f"mass drift {drift:.2e}, min dissipation "
                           f"{diss_min:.2e}, worst mech residual {rel:.2e}")


def criterion_peel() -> CriterionResult:
    """Damage box/monotonicity and the qualitative peel front."""
    scn = scenarios.peel()
    scn.snapshot_stride = 1
    traj = stepper.run(scn)
    ok_box = all(np.all(s.alpha >= -1e-12) and np.all(s.alpha <= 1 + 1e-12)
                 for s in traj.states)
    ok_mono = all(np.all(b.alpha <= a.alpha + 1e-12)
                  for a, b in zip(traj.states[:-1], traj.states[1:]))
    alpha = traj.final.alpha
    loaded, far = float(alpha[-1]), float(alpha[0])
    ok = ok_box and ok_mono and loaded < 0.05 and far > 0.9
    return CriterionResult(11, "peel debonding front", ok,
                           f"loaded-end alpha {loaded:.3f} (< 0.05), "
                           f"far-end alpha {far:.3f} (> 0.9), "
                           f"monotone={ok_mono}, box={ok_box}")


ALL_CRITERIA = [
    criterion_mech_balance,
    criterion_total_energy,
    criterion_theta_nonnegative,
    criterion_entropy_terms,
    criterion_midpoint_order,
    criterion_stability_norms,
    criterion_stick_slip,
    criterion_prox_oracle,
    criterion_diff_quotient,
    criterion_poro,
    criterion_peel,
]


def run_all(progress: Optional[Callable] = None):
    results = []
    for fn in ALL_CRITERIA:
        try:
            res = fn()
        except Exception as exc:  # a crash is a failure, not an abort
            idx = len(results) + 1
            res = CriterionResult(idx, fn.__name__, False, f"raised {exc!r}")
        results.append(res)
        if progress:
            progress(res.line())
    return results
