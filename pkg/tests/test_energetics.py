import numpy as np
import pytest

from thermocontact.assembly import assemble_all
from thermocontact.energetics import (DomainError, EnergyLedger, SystemState,
                                      coupling_energy, dissipation_rate,
                                      entropy_production_terms,
                                      interface_jumps, kinetic_energy,
                                      mech_balance_residual,
                                      mechanical_energy, thermal_energy)
from thermocontact.geometry import build_rect_two_body
from thermocontact.materials import (AlphaThetaCoeff, BulkMaterial,
                                     InterfaceMaterial, MaterialSet, Pwl)
from thermocontact.stepper import StepReport


def _ops(im=None, nx=1):
    mat = MaterialSet(bulk=BulkMaterial(),
                      interface=im or InterfaceMaterial(a0=Pwl.constant(0.0)))
    return assemble_all(build_rect_two_body(1.0, 0.5, nx, 1), mat)


def _upper(ops):
    m = ops.mesh
    return np.unique(m.triangles[m.tri_labels == 2])


def test_zero_state_energies():
    ops = _ops()
    st = SystemState.zero(ops, theta0=1.0, alpha0=1.0)
    assert kinetic_energy(ops, st.v) == 0.0
    assert mechanical_energy(ops, st) == 0.0
    assert coupling_energy(ops, st) == 0.0
    # theta = theta_R makes the thermal free-energy remainder vanish
    assert thermal_energy(ops, st) == pytest.approx(0.0, abs=1e-14)


def test_yield_dissipation_pinned():
    # sigma_y = 2, |pi_rate| = 1, total interface weight 1  ->  R = 2
    im = InterfaceMaterial(a0=Pwl.constant(0.0),
                           sigma_y=AlphaThetaCoeff(Pwl.constant(2.0)))
    ops = _ops(im)
    st = SystemState.zero(ops)
    out = dissipation_rate(st, {"pi_rate": np.ones(ops.n_pairs)}, ops)
    assert out.yield_slip == pytest.approx(2.0)
    # the slip also shears the adhesive dashpot
    assert out.adhesive_T == pytest.approx(im.d_T)
    assert out.total == pytest.approx(2.0 + im.d_T)


def test_friction_dissipation_pinned():
    # penetration -0.1 at kappa_C = 1000 gives pressure 100; coefficient 0.3
    # and slip rate 0.1 over unit interface length  ->  R = 3
    im = InterfaceMaterial(a0=Pwl.constant(0.0),
                           frict=AlphaThetaCoeff(Pwl.constant(0.3)))
    ops = _ops(im)
    st = SystemState.zero(ops, alpha0=0.0)
    up = _upper(ops)
    st.u[2 * up + 1] = -0.1       # upper body pushed down -> jn = -0.1
    jn, _ = interface_jumps(ops, st.u)
    assert np.allclose(jn, -0.1)
    v = np.zeros_like(st.v)
    v[2 * up] = -0.1              # tangential slip rate magnitude 0.1
    out = dissipation_rate(st, {"v": v}, ops)
    assert out.friction == pytest.approx(3.0, rel=1e-12)


def test_viscous_dissipation_uniform_shear_rate():
    ops = _ops()
    v = np.zeros(2 * ops.n_nodes)
    v[0::2] = 0.1 * ops.mesh.nodes[:, 1]     # e12 = 0.05
    out = dissipation_rate(ops and SystemState.zero(ops), {"v": v}, ops)
    mu_v = ops.mat.bulk.mu_v
    # density = 1/2*2*mu_v*2*e12^2, area 1
    assert out.viscous_bulk == pytest.approx(2 * mu_v * 0.05 ** 2, rel=1e-12)


def test_damage_rate_dissipation_sign_split():
    ops = _ops()
    st = SystemState.zero(ops)
    im = ops.mat.interface
    r = -0.5 * np.ones(ops.n_pairs)
    out = dissipation_rate(st, {"alpha_rate": r}, ops)
    assert out.damage == pytest.approx(im.eps_dam * 0.25)
    out = dissipation_rate(st, {"alpha_rate": -r}, ops)
    assert out.damage == pytest.approx(0.25 / im.eps_heal)


def test_mechanical_energy_rejects_bad_alpha():
    ops = _ops()
    st = SystemState.zero(ops)
    st.alpha[:] = 1.5
    with pytest.raises(DomainError):
        mechanical_energy(ops, st)


def test_adhesive_spring_energy_quadratic_in_opening():
    ops = _ops()
    st = SystemState.zero(ops, alpha0=1.0)
    up = _upper(ops)
    st.u[2 * up + 1] = 0.2        # opening, no normal-compliance energy
    E = mechanical_energy(ops, st)
    kN = ops.mat.interface.kappa_N(1.0)
    assert E == pytest.approx(0.5 * kN * 0.2 ** 2, rel=1e-12)
    st.u[2 * up + 1] = 0.4
    assert mechanical_energy(ops, st) == pytest.approx(4 * E, rel=1e-12)


def test_transfer_entropy_production_pinned():
    # k = 1, theta_B = 2, theta_A = 1  ->  (2-1)^2/(1*2) = 0.5 per side
    ops = _ops()
    prev = SystemState.zero(ops, theta0=1.0)
    nxt = prev.copy()
    nxt.theta_B[:] = 2.0
    nxt.theta_A[:] = 1.0
    terms = entropy_production_terms(prev, nxt, ops, ops.mat, tau=1.0)
    assert np.allclose(terms["transfer_side1"], 0.5)
    assert np.allclose(terms["transfer_side2"], 0.5)
    for key, arr in terms.items():
        assert np.all(np.asarray(arr) >= -1e-12), key


def test_mech_balance_residual_reads_report():
    rep = StepReport()
    rep.delta_kinetic = 1.0
    rep.delta_mechanical = -0.4
    rep.tau_R = 0.1
    rep.work_F = 0.75
    rep.work_coupling = 0.0
    rep.box_work = 0.05
    assert mech_balance_residual(None, None, rep) == pytest.approx(0.0)
    rep.work_F = 0.7
    assert mech_balance_residual(None, None, rep) == pytest.approx(0.05)


def test_ledger_csv_roundtrip(tmp_path):
    led = EnergyLedger()
    led.add(t=0.1, kinetic=1.0 / 3.0, mechanical=1e-300, heat=2.0,
            mech_residual=1.23456789012345e-11)
    led.add(t=0.2, kinetic=0.0, heat=np.pi)
    path = tmp_path / "ledger.csv"
    led.to_csv(path)
    back = EnergyLedger.from_csv(path)
    assert len(back.rows) == 2
    for a, b in zip(led.rows, back.rows):
        for k in a:
            assert b[k] == a[k]      # exact round trip via repr
