"""Run outputs: ledger CSV, snapshot field files, legacy-VTK text grids,
a structured run report, and summary figures.

Everything is post-hoc file output; figures are rendered with the Agg
backend so runs work headless.
"""

from __future__ import annotations

import csv
import json
import os
import time

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .energetics import THETA_FLOOR_REL


def write_snapshot(dirname, tag, ops, state):
    """Node-id -> values field files plus a legacy-VTK unstructured grid."""
    os.makedirs(dirname, exist_ok=True)
    mesh = ops.mesh
    N, P = ops.n_nodes, ops.n_pairs
    with open(os.path.join(dirname, f"fields_{tag}.txt"), "w") as f:
        f.write("# node ux uy vx vy theta_B" +
                (" zeta_B mu_B" if state.zeta_B is not None else "") + "\n")
        for n in range(N):
            row = [n, state.u[2 * n], state.u[2 * n + 1],
                   state.v[2 * n], state.v[2 * n + 1], state.theta_B[n]]
            if state.zeta_B is not None:
                row += [state.zeta_B[n], state.mu_B[n]]
            f.write(" ".join(repr(x) if i else str(x) for i, x in enumerate(row)) + "\n")
        f.write("# interface pi alpha theta_A" +
                (" zeta_A mu_A" if state.zeta_A is not None else "") + "\n")
        for i in range(P):
            row = [i, state.pi[i], state.alpha[i], state.theta_A[i]]
            if state.zeta_A is not None:
                row += [state.zeta_A[i], state.mu_A[i]]
            f.write(" ".join(repr(x) if i else str(x) for i, x in enumerate(row)) + "\n")

    with open(os.path.join(dirname, f"grid_{tag}.vtk"), "w") as f:
        f.write("# vtk DataFile Version 2.0\n")
        f.write(f"two-body snapshot {tag}\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        f.write(f"POINTS {N} double\n")
        for n in range(N):
            f.write(f"{mesh.nodes[n, 0]!r} {mesh.nodes[n, 1]!r} 0.0\n")
        tris = mesh.triangles
        f.write(f"CELLS {len(tris)} {4 * len(tris)}\n")
        for tri in tris:
            f.write(f"3 {tri[0]} {tri[1]} {tri[2]}\n")
        f.write(f"CELL_TYPES {len(tris)}\n")
        f.write("\n".join(["5"] * len(tris)) + "\n")
        f.write(f"POINT_DATA {N}\n")
        f.write("VECTORS displacement double\n")
        for n in range(N):
            f.write(f"{state.u[2 * n]!r} {state.u[2 * n + 1]!r} 0.0\n")
        f.write("SCALARS temperature double 1\nLOOKUP_TABLE default\n")
        for n in range(N):
            f.write(f"{state.theta_B[n]!r}\n")


def render_figures(out_dir, trajectory):
    """Energy/ledger summary figures rendered next to the ledger."""
    led = trajectory.ledger
    t = led.column("t")
    paths = []

    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.plot(t, led.column("kinetic"), label="kinetic")
    ax.plot(t, led.column("mechanical"), label="mechanical")
    ax.plot(t, led.column("heat"), label="heat")
    total = led.column("kinetic") + led.column("mechanical") + led.column("heat")
    ax.plot(t, total, "k--", lw=1, label="total")
    ax.set_xlabel("t")
    ax.set_ylabel("energy")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    p = os.path.join(out_dir, "energies.png")
    fig.savefig(p, dpi=130)
    plt.close(fig)
    paths.append(p)

    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6.4, 5.2), sharex=True)
    ax1.semilogy(t[1:], np.maximum(led.column("mech_residual")[1:], 1e-300))
    ax1.set_ylabel("mech residual")
    ax2.plot(t, led.column("min_theta"))
    ax2.set_ylabel("min theta")
    ax2.set_xlabel("t")
    fig.tight_layout()
    p = os.path.join(out_dir, "diagnostics.png")
    fig.savefig(p, dpi=130)
    plt.close(fig)
    paths.append(p)

    final = trajectory.final
    ops = trajectory.scenario.ops
    s = ops.mesh.interface.arclength_coords
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    ax.plot(s, final.alpha, "o-", label="alpha")
    ax.plot(s, final.pi, "s--", label="pi")
    ax.set_xlabel("interface arclength")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    p = os.path.join(out_dir, "interface.png")
    fig.savefig(p, dpi=130)
    plt.close(fig)
    paths.append(p)
    return paths


def hard_invariant_checks(trajectory):
    """(name, ok, detail) triples for the run-report hard invariants."""
    led = trajectory.ledger
    ops = trajectory.scenario.ops
    theta_R = ops.mat.bulk.theta_R
    checks = []
    mt = led.column("min_theta")
    checks.append(("theta_nonnegative", bool(np.all(mt >= -1e-12 * max(theta_R, 1.0))),
                   f"min over run {mt.min():.3e}"))
    final = trajectory.final
    checks.append(("alpha_box",
                   bool(np.all(final.alpha >= -1e-12) and np.all(final.alpha <= 1 + 1e-12)),
                   f"final range [{final.alpha.min():.3g}, {final.alpha.max():.3g}]"))
    r = led.column("mech_residual")[1:]
    scale = np.maximum(np.abs(led.column("kinetic") + led.column("mechanical")
                              + led.column("heat"))[1:], 1.0)
    worst = float(np.max(r / scale)) if r.size else 0.0
    checks.append(("mech_balance", worst <= 1e-6, f"worst relative residual {worst:.3e}"))
    return checks


def write_run_report(out_dir, trajectory, runtime_s, extra=None):
    checks = hard_invariant_checks(trajectory)
    led = trajectory.ledger
    report = {
        "steps": len(trajectory.reports),
        "runtime_seconds": runtime_s,
        "hard_invariants": [
            {"name": n, "passed": ok, "detail": d} for n, ok, d in checks],
        "worst_mech_residual": float(np.max(led.column("mech_residual")))
        if led.rows else 0.0,
        "min_theta": float(np.min(led.column("min_theta"))) if led.rows else 0.0,
        "final_energies": {
            "kinetic": led.rows[-1]["kinetic"],
            "mechanical": led.rows[-1]["mechanical"],
            "heat": led.rows[-1]["heat"],
        } if led.rows else {},
        "generated": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    if extra:
        report.update(extra)
    path = os.path.join(out_dir, "run_report")
    with open(path, "w") as f:
        json.dump(report, f, indent=2)
        f.write("\n")
    all_ok = all(ok for _, ok, _ in checks)
    return path, all_ok


def write_study_csv(out_dir, rows):
    path = os.path.join(out_dir, "study.csv")
    cols = ["tau", "err_u", "err_v", "err_theta", "order_u",
            "norm_u_h1", "norm_theta_linf_l1", "R_cum"]
    with open(path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(cols)
        for r in rows:
            wr.writerow([repr(float(getattr(r, c))) for c in cols])
    return path


def write_outputs(out_dir, trajectory, runtime_s, verbose=False):
    """Full output bundle for one run; returns (report_path, all_ok)."""
    os.makedirs(out_dir, exist_ok=True)
    trajectory.ledger.to_csv(os.path.join(out_dir, "ledger.csv"))
    snapdir = os.path.join(out_dir, "snapshots")
    ops = trajectory.scenario.ops
    stride = trajectory.scenario.snapshot_stride
    for i, st in enumerate(trajectory.states):
        if i == 0:
            tag = "initial"
        elif i == len(trajectory.states) - 1:
            tag = "final"
        else:
            tag = f"step{(i) * stride:06d}"
        write_snapshot(snapdir, tag, ops, st)
    render_figures(out_dir, trajectory)
    return write_run_report(out_dir, trajectory, runtime_s)
