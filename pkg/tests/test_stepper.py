import numpy as np
import pytest

from thermocontact import scenarios, stepper
from thermocontact.stepper import InvariantViolation, Scenario


def test_null_scenario_ledger_is_flat():
    traj = stepper.run(scenarios.null_scenario())
    led = traj.ledger
    for col in ("kinetic", "mechanical", "mech_residual", "total_slack",
                "R_cum", "work_cum", "max_alpha_change"):
        assert np.all(led.column(col) == 0.0), col
    heat = led.column("heat")
    assert np.all(heat == heat[0])
    final = traj.final
    assert np.all(final.u == 0.0)
    assert np.all(final.alpha == 1.0)


def test_tau_must_divide_horizon():
    scn = scenarios.null_scenario()
    scn.tau = scn.T / 7.3
    with pytest.raises(ValueError):
        scn.validate()


def test_reports_and_states_counting():
    scn = scenarios.friction_heating(n_steps=8, T=0.016)
    scn.snapshot_stride = 4
    traj = stepper.run(scn)
    assert len(traj.reports) == 8
    # initial, step 4, step 8 (which doubles as the final state)
    assert len(traj.states) == 3
    assert traj.final is traj.states[-1]
    assert traj.reports[-1].t == pytest.approx(0.016)


def test_progress_callback_sees_every_step():
    seen = []
    scn = scenarios.null_scenario(n_steps=5)
    stepper.run(scn, progress=lambda k, n, rep: seen.append((k, n, rep.t)))
    assert [s[0] for s in seen] == [1, 2, 3, 4, 5]
    assert all(s[1] == 5 for s in seen)


def test_mech_balance_tight_on_frictional_run():
    scn = scenarios.adhesion_friction(n_steps=25, T=0.05)
    traj = stepper.run(scn)
    led = traj.ledger
    tot = led.column("kinetic") + led.column("mechanical") + led.column("heat")
    scale = max(1.0, np.abs(tot).max())
    assert led.column("mech_residual")[1:].max() <= 1e-9 * scale


def test_relaxation_total_energy_monotone():
    traj = stepper.run(scenarios.relaxation(n_steps=30, T=0.06))
    led = traj.ledger
    tot = led.column("kinetic") + led.column("mechanical") + led.column("heat")
    assert np.all(np.diff(tot) <= 1e-9 * max(1.0, abs(tot[0])))
    # mechanical energy dissipates into heat
    mech = led.column("kinetic") + led.column("mechanical")
    assert mech[-1] < mech[0] - 1e-4
    assert led.column("heat")[-1] > led.column("heat")[0]


def test_damage_monotone_without_healing():
    scn = scenarios.peel(n_steps=40, T=0.16)
    traj = stepper.run(scn)
    prev = None
    for st in traj.states:
        assert np.all(st.alpha >= -1e-12) and np.all(st.alpha <= 1 + 1e-12)
        if prev is not None:
            assert np.all(st.alpha <= prev + 1e-12)
        prev = st.alpha
    # ledger agrees: alpha only moved downwards
    assert np.all(traj.ledger.column("max_alpha_change") >= 0.0)


def test_velocity_update_consistency():
    # v_k = 2*(u_k - u_prev)/tau - v_prev holds exactly for every step
    scn = scenarios.friction_heating(n_steps=6, T=0.012)
    scn.snapshot_stride = 1
    traj = stepper.run(scn)
    tau = scn.tau
    for a, b in zip(traj.states[:-1], traj.states[1:]):
        assert np.allclose(b.v, 2.0 * (b.u - a.u) / tau - a.v, atol=1e-12)


def test_dirichlet_nodes_pinned():
    scn = scenarios.adhesion_friction(n_steps=5, T=0.01)
    traj = stepper.run(scn)
    bottom = scn.ops.dirichlet_nodes
    u = traj.final.u
    assert np.all(u[2 * bottom] == 0.0)
    assert np.all(u[2 * bottom + 1] == 0.0)


def test_cold_start_temperature_stays_nonnegative():
    scn = scenarios.shock_heating(n_steps=30, T=0.06)
    traj = stepper.run(scn)
    assert traj.ledger.column("min_theta").min() >= -1e-12


def test_invariant_violation_is_reportable():
    exc = InvariantViolation("theta_nonnegative", 3, "min theta -0.1")
    assert "theta_nonnegative" in str(exc)
    assert exc.step == 3


def test_convergence_study_orders():
    scn = scenarios.manufactured(n_steps=10, T=0.5)
    rows = stepper.convergence_study(scn, [0.5 / 10, 0.5 / 20, 0.5 / 40])
    assert [r.tau for r in rows] == [0.05, 0.025, 0.0125]
    # order is attached to the coarser row of each refinement pair
    assert all(r.order_u > 1.5 for r in rows[:-1])
    assert np.isnan(rows[-1].order_u)
    # errors decrease under refinement
    errs = [r.err_u for r in rows]
    assert errs[0] > errs[1] > errs[2]
