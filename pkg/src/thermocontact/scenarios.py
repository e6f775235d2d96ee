"""Shipped desk-scale scenarios.

Each builder returns a ready-to-run Scenario on the canonical two-rectangle
geometry (lower body clamped at the bottom, upper body loaded through the
top edge, horizontal interface).  They are sized so the whole verification
suite stays in the minutes range; builders accept keyword overrides for
mesh resolution and step counts.
"""

from __future__ import annotations

import numpy as np

from .assembly import LoadSet, TimeTable, assemble_all
from .energetics import SystemState
from .geometry import build_rect_two_body
from .materials import (AlphaThetaCoeff, BulkMaterial, BulkPoro, Capacity,
                        InterfaceMaterial, InterfacePoro, MaterialSet,
                        NormalCompliance, Pwl)
from .stepper import Flags, Scenario


class FuncTable:
    """Smooth time profile usable wherever a sampled table is expected."""

    def __init__(self, fn):
        self.fn = fn
        self.values = np.array([0.0])   # keeps LoadSet.validate happy

    def __call__(self, t):
        return float(self.fn(t))


def upper_body_nodes(mesh):
    sel = mesh.tri_labels == 2
    return np.unique(mesh.triangles[sel])


def _rect_ops(mat, nx=4, ny=2, width=1.0, height=0.5):
    mesh = build_rect_two_body(width, height, nx, ny)
    return assemble_all(mesh, mat)


def _zigzag(T, period, amp):
    """Piecewise-linear oscillation between -amp and +amp."""
    n = max(int(round(4 * T / period)), 2)
    times = np.linspace(0.0, T, n + 1)
    vals = amp * np.array([[0, 1, 0, -1][i % 4] for i in range(n + 1)], float)
    return TimeTable(times, vals)


def null_scenario(nx=1, ny=1, n_steps=5) -> Scenario:
    """No loads, zero displacement, uniform temperature: nothing happens."""
    mat = MaterialSet(bulk=BulkMaterial(), interface=InterfaceMaterial(
        a0=Pwl.constant(0.0)))
    ops = _rect_ops(mat, nx, ny)
    T = 0.1
    init = SystemState.zero(ops, theta0=1.0, alpha0=1.0)
    # no eps_h damping surprises in the "all-zero ledger" contract
    scn = Scenario(ops=ops, loads=LoadSet(), T=T, tau=T / n_steps, initial=init)
    return scn


def adhesion_friction(nx=4, ny=2, n_steps=500, T=1.0) -> Scenario:
    """Partially bonded interface under pressure and oscillating shear.

    Friction, yield and adhesive springs are all active; b-coupling off.
    The per-step mechanical balance exactness criterion runs here.
    """
    im = InterfaceMaterial(
        frict=AlphaThetaCoeff(Pwl.constant(0.3), None),
        a0=Pwl.constant(0.0),
        sigma_y=AlphaThetaCoeff(Pwl.constant(0.2), None),
    )
    mat = MaterialSet(bulk=BulkMaterial(), interface=im)
    ops = _rect_ops(mat, nx, ny)
    loads = LoadSet(
        g_dir=np.array([0.0, -1.0]), g_table=TimeTable.constant(1.0),
        f_dir=np.array([1.0, 0.0]), f_table=_zigzag(T, T / 2.0, 0.6),
    )
    init = SystemState.zero(ops, theta0=1.0, alpha0=0.5)
    return Scenario(ops=ops, loads=loads, T=T, tau=T / n_steps, initial=init,
                    flags=Flags())


def frictional_study(nx=3, ny=1, n_steps=50, T=0.2) -> Scenario:
    """Short frictional variant for tau-refinement boundedness sweeps."""
    scn = adhesion_friction(nx=nx, ny=ny, n_steps=n_steps, T=T)
    return scn


def relaxation(nx=4, ny=2, n_steps=500, T=1.0) -> Scenario:
    """Zero external load: a sheared, slightly compressed upper body rings
    down through friction, yield and viscosity.

    With no work input (and b-coupling/h off) the total energy must be
    non-increasing every step; this is the total-energy-inequality run.
    """
    im = InterfaceMaterial(
        a0=Pwl.constant(0.0),
        frict=AlphaThetaCoeff(Pwl.constant(0.3), None),
        sigma_y=AlphaThetaCoeff(Pwl.constant(0.05), None),
    )
    mat = MaterialSet(bulk=BulkMaterial(), interface=im)
    ops = _rect_ops(mat, nx, ny)
    init = SystemState.zero(ops, theta0=1.0, alpha0=0.6)
    up = upper_body_nodes(ops.mesh)
    init.u[2 * up] = 0.05        # shear offset
    init.u[2 * up + 1] = -0.01   # slight penetration -> contact pressure
    init.v[2 * up] = 0.3
    return Scenario(ops=ops, loads=LoadSet(), T=T, tau=T / n_steps, initial=init)


def friction_heating(nx=4, ny=2, n_steps=200, T=0.4, v_slide=0.5) -> Scenario:
    """Fully debonded contact: pressed by gravity, upper body launched
    tangentially; slip converts kinetic energy into interface heat."""
    im = InterfaceMaterial(a0=Pwl.constant(0.0))
    mat = MaterialSet(bulk=BulkMaterial(), interface=im)
    ops = _rect_ops(mat, nx, ny)
    loads = LoadSet(g_dir=np.array([0.0, -1.0]), g_table=TimeTable.constant(2.0))
    init = SystemState.zero(ops, theta0=1.0, alpha0=0.0)
    up = upper_body_nodes(ops.mesh)
    init.v[2 * up] = v_slide
    return Scenario(ops=ops, loads=loads, T=T, tau=T / n_steps, initial=init)


def shock_heating(nx=4, ny=2, n_steps=200, T=0.4) -> Scenario:
    """Sudden shear burst onto a cold (theta = 0) pressed contact.

    Exercises the temperature non-negativity bound where it is sharpest.
    """
    im = InterfaceMaterial(a0=Pwl.constant(0.0),
                           frict=AlphaThetaCoeff(Pwl.constant(0.3), None))
    mat = MaterialSet(bulk=BulkMaterial(), interface=im)
    ops = _rect_ops(mat, nx, ny)
    burst = TimeTable([0.0, 0.45 * T, 0.5 * T, 0.55 * T, T],
                      [0.0, 0.0, 2.0, 0.0, 0.0])
    loads = LoadSet(
        g_dir=np.array([0.0, -1.0]), g_table=TimeTable.constant(2.0),
        f_dir=np.array([1.0, 0.0]), f_table=burst,
    )
    init = SystemState.zero(ops, theta0=0.0, alpha0=0.0)
    return Scenario(ops=ops, loads=loads, T=T, tau=T / n_steps, initial=init)


def manufactured(nx=3, ny=2, n_steps=50, T=0.5) -> Scenario:
    """Smooth Kelvin-Voigt motion with no contact activity.

    Glued interface with damage-independent stiffness (so alpha is exactly
    frozen), no friction or yield activity, smooth-in-time bulk force.
    Used for the temporal-order measurement.
    """
    im = InterfaceMaterial(
        kappa_N=Pwl.constant(50.0), kappa_T=Pwl.constant(50.0),
        a0=Pwl.constant(0.0), b0=Pwl.constant(0.0),
        frict=AlphaThetaCoeff(Pwl.constant(0.0), None),
        sigma_y=AlphaThetaCoeff(Pwl.constant(10.0), None),
    )
    mat = MaterialSet(bulk=BulkMaterial(), interface=im)
    ops = _rect_ops(mat, nx, ny)
    loads = LoadSet(
        g_dir=np.array([0.3, 1.0]),
        g_table=FuncTable(lambda t: np.sin(2.0 * np.pi * t / T)),
    )
    init = SystemState.zero(ops, theta0=1.0, alpha0=1.0)
    return Scenario(ops=ops, loads=loads, T=T, tau=T / n_steps, initial=init)


def peel(nx=6, ny=2, n_steps=250, T=1.0, pull=3.0) -> Scenario:
    """Peel test: upward traction ramped on the right end of the top edge.

    The right end of the interface debonds while the left end stays bonded.
    """
    im = InterfaceMaterial(
        a0=Pwl.constant(0.0), b0=Pwl.constant(0.0),
        frict=AlphaThetaCoeff(Pwl.constant(0.1), None),
    )
    mat = MaterialSet(bulk=BulkMaterial(), interface=im)
    ops = _rect_ops(mat, nx, ny)
    loads = LoadSet(
        f_dir=np.array([0.0, 1.0]),
        f_table=TimeTable([0.0, T], [0.0, pull]),
        traction_window=(0.75, 1.0),
    )
    init = SystemState.zero(ops, theta0=1.0, alpha0=1.0)
    return Scenario(ops=ops, loads=loads, T=T, tau=T / n_steps, initial=init)


def poro_diffusion(nx=4, ny=1, n_steps=500, T=1.0) -> Scenario:
    """Biot-coupled diffusion: non-uniform initial content relaxes while the
    mechanics responds; mass is conserved and diffusion dissipates."""
    ip = InterfacePoro(M_A=1.0, beta_A=0.3, K_chem=0.5, zeta_eq=1.0,
                       kappa3=1e-3, mobility=0.1, m_transfer=0.5)
    bp = BulkPoro(M_B=1.0, beta_B=0.5, K_chem=0.5, zeta_eq=1.0,
                  kappa=1e-3, mobility=0.1)
    im = InterfaceMaterial(a0=Pwl.constant(0.0), poro=ip)
    bm = BulkMaterial(poro=bp)
    mat = MaterialSet(bulk=bm, interface=im)
    ops = _rect_ops(mat, nx, ny)
    loads = LoadSet(g_dir=np.array([0.0, -1.0]), g_table=TimeTable.constant(0.5))
    init = SystemState.zero(ops, theta0=1.0, alpha0=1.0, poro=True)
    left = ops.mesh.nodes[:, 0] < 0.5 - 1e-12
    init.zeta_B = init.zeta_B + 0.5 * left
    return Scenario(ops=ops, loads=loads, T=T, tau=T / n_steps, initial=init,
                    flags=Flags(poro_enabled=True))


REGISTRY = {
    "null": null_scenario,
    "adhesion_friction": adhesion_friction,
    "relaxation": relaxation,
    "frictional_study": frictional_study,
    "friction_heating": friction_heating,
    "shock_heating": shock_heating,
    "manufactured": manufactured,
    "peel": peel,
    "poro_diffusion": poro_diffusion,
}


def get_scenario(name: str, **overrides) -> Scenario:
    try:
        builder = REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown scenario '{name}'; known: {sorted(REGISTRY)}")
    return builder(**overrides)
