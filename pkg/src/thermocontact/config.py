"""Plain-text configuration: material files and run configs.

Run configs are flat ``key = value`` sections (INI style).  A mandatory
``[units]`` block fixes the reference length, time, stress and temperature;
every dimensional quantity appearing in the config is divided by the
matching reference on input so all internal computation is nondimensional.
Material files are flat ``key = value`` lines keyed by the constitutive
symbol names; their entries are read as already nondimensional.

Table syntax inside values:
    const V            constant function
    pwl x0 y0 x1 y1 …  piecewise-linear, clamped outside its range
    linear c0 c1 [span] capacity c(theta) = c0 + c1*theta on [0, span]
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field

import numpy as np

from .assembly import LoadSet, TimeTable, assemble_all
from .energetics import SystemState
from .geometry import build_rect_two_body, load_mesh
from .materials import (AlphaThetaCoeff, BulkMaterial, BulkPoro, Capacity,
                        InterfaceMaterial, InterfacePoro, MaterialSet,
                        NormalCompliance, Pwl, RegularisationSet)
from .stepper import Flags, Scenario


class ConfigError(ValueError):
    pass


def _floats(text):
    try:
        return [float(t) for t in text.split()]
    except ValueError:
        raise ConfigError(f"expected numbers, got '{text}'")


def _parse_pwl(text, key):
    toks = text.split()
    if not toks:
        raise ConfigError(f"{key}: empty table")
    if toks[0] == "const":
        return Pwl.constant(float(toks[1]))
    if toks[0] == "pwl":
        vals = [float(t) for t in toks[1:]]
        if len(vals) < 2 or len(vals) % 2:
            raise ConfigError(f"{key}: pwl needs x y pairs")
        return Pwl(vals[0::2], vals[1::2])
    raise ConfigError(f"{key}: unknown table kind '{toks[0]}'")


def _parse_capacity(text, key):
    toks = text.split()
    if toks[0] == "const":
        return Capacity.constant(float(toks[1]))
    if toks[0] == "linear":
        span = float(toks[3]) if len(toks) > 3 else 1e6
        return Capacity.linear(float(toks[1]), float(toks[2]), span=span)
    if toks[0] == "pwl":
        return Capacity(_parse_pwl(text, key))
    raise ConfigError(f"{key}: unknown capacity kind '{toks[0]}'")


def parse_material_file(path) -> MaterialSet:
    """Read a flat key = value material file (symbol-named keys)."""
    if not os.path.exists(path):
        raise ConfigError(f"material file not found: {path}")
    kv = {}
    with open(path) as f:
        for ln, raw in enumerate(f, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{ln}: expected 'key = value'")
            k, v = line.split("=", 1)
            kv[k.strip()] = v.strip()

    def num(key, default):
        return float(kv[key]) if key in kv else default

    bulk = BulkMaterial(
        lam=num("lam", 1.0), mu=num("mu", 1.0),
        lam_v=num("lam_v", 0.05), mu_v=num("mu_v", 0.05),
        rho=num("rho", 1.0), e_th=num("e_th", 0.0),
        theta_R=num("theta_R", 1.0),
        capacity=_parse_capacity(kv.get("c_B", "const 1.0"), "c_B"),
        conductivity=_parse_pwl(kv.get("K_B", "const 1e-2"), "K_B"),
        poro=BulkPoro(
            M_B=num("M_B", 0.0), beta_B=num("beta_B", 0.0),
            K_chem=num("K_chem_B", 0.0), zeta_eq=num("zeta_eq_B", 0.0),
            kappa=num("kappa_B", 0.0), mobility=num("mobility_B", 0.0)),
    )
    gc = _floats(kv.get("gamma_C", "1000 2"))
    iface = InterfaceMaterial(
        kappa_N=_parse_pwl(kv.get("kappa_N", "pwl 0 0 1 50"), "kappa_N"),
        kappa_T=_parse_pwl(kv.get("kappa_T", "pwl 0 0 1 50"), "kappa_T"),
        gamma_C=NormalCompliance(gc[0], gc[1] if len(gc) > 1 else 2.0),
        a0=_parse_pwl(kv.get("a0", "const 0"), "a0"),
        b0=_parse_pwl(kv.get("b0", "const 0"), "b0"),
        eps_dam=num("eps_dam", 1e-2), eps_heal=num("eps_heal", 1e3),
        frict=AlphaThetaCoeff(
            _parse_pwl(kv.get("frict", "pwl 0 0.3 1 0.0"), "frict"),
            _parse_pwl(kv["frict_theta"], "frict_theta") if "frict_theta" in kv else None),
        sigma_y=AlphaThetaCoeff(
            _parse_pwl(kv.get("sigma_y", "const 0.5"), "sigma_y"),
            _parse_pwl(kv["sigma_y_theta"], "sigma_y_theta") if "sigma_y_theta" in kv else None),
        d_N=num("d_N", 0.1), d_T=num("d_T", 0.1),
        kappa_H=num("kappa_H", 1.0),
        kappa1=num("kappa1", 1e-3), kappa2=num("kappa2", 1e-3),
        capacity=_parse_capacity(kv.get("c_A", "const 1.0"), "c_A"),
        conductivity=_parse_pwl(kv.get("K_A", "const 1e-2"), "K_A"),
        k_transfer_1=num("k1", 1.0), k_transfer_2=num("k2", 1.0),
        ell_gap=num("ell_gap", 0.1),
        transfer_alpha=_parse_pwl(kv.get("transfer_alpha", "const 1"), "transfer_alpha"),
        transfer_theta=_parse_pwl(kv.get("transfer_theta", "const 1"), "transfer_theta"),
        poro=InterfacePoro(
            M_A=num("M_A", 0.0), beta_A=num("beta_A", 0.0),
            K_chem=num("K_chem_A", 0.0), zeta_eq=num("zeta_eq_A", 0.0),
            kappa3=num("kappa3", 0.0), mobility=num("mobility_A", 0.0),
            m_transfer=num("m_transfer", 0.0)),
    )
    mat = MaterialSet(bulk=bulk, interface=iface)
    mat.validate()
    return mat


@dataclass
class RunSpec:
    scenario: Scenario
    out_stride: int = 0
    name: str = "run"
    tau_list: list = field(default_factory=list)


def _table(sec, prefix, scale=1.0, default=0.0, time_ref=1.0):
    times = sec.get(f"{prefix}_times")
    vals = sec.get(f"{prefix}_values")
    if vals is None:
        return TimeTable.constant(default)
    v = np.asarray(_floats(vals)) * scale
    if times is None:
        if v.size != 1:
            raise ConfigError(f"{prefix}_values needs {prefix}_times")
        return TimeTable.constant(float(v[0]))
    t = np.asarray(_floats(times)) / time_ref
    return TimeTable(t, v)


def parse_config(path) -> RunSpec:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}")

    if "units" not in cp:
        raise ConfigError(f"{path}: missing mandatory [units] section")
    units = cp["units"]
    try:
        L = float(units["length"])
        t_ref = float(units["time"])
        sig = float(units["stress"])
        th_ref = float(units["temperature"])
    except KeyError as exc:
        raise ConfigError(f"{path}: [units] missing key {exc}")
    if min(L, t_ref, sig, th_ref) <= 0.0:
        raise ConfigError(f"{path}: unit references must be positive")

    base = os.path.dirname(os.path.abspath(path))
    mat_sec = cp["materials"] if "materials" in cp else {}
    if "file" in mat_sec:
        mpath = mat_sec["file"]
        if not os.path.isabs(mpath):
            mpath = os.path.join(base, mpath)
        mat = parse_material_file(mpath)
    else:
        mat = MaterialSet()

    mesh_sec = cp["mesh"] if "mesh" in cp else {}
    kind = mesh_sec.get("kind", "rect")
    if kind == "rect":
        mesh = build_rect_two_body(
            float(mesh_sec.get("width", 1.0)) / L,
            float(mesh_sec.get("height_each", 0.5)) / L,
            int(mesh_sec.get("nx", 2)), int(mesh_sec.get("ny", 1)))
    elif kind == "file":
        mfile = mesh_sec["file"]
        if not os.path.isabs(mfile):
            mfile = os.path.join(base, mfile)
        mesh = load_mesh(mfile)
    else:
        raise ConfigError(f"{path}: unknown mesh kind '{kind}'")
    ops = assemble_all(mesh, mat)

    sc = cp["scenario"] if "scenario" in cp else {}
    try:
        T = float(sc.get("T", 1.0)) / t_ref
        tau = float(sc.get("tau", 0.01)) / t_ref
    except ValueError:
        raise ConfigError(f"{path}: [scenario] T/tau must be numbers")
    if tau <= 0.0:
        raise ConfigError(f"{path}: tau must be positive (got {tau * t_ref})")
    n = T / tau
    if abs(n - round(n)) > 1e-9:
        raise ConfigError(f"{path}: tau must divide T")

    fl = cp["flags"] if "flags" in cp else {}
    flags = Flags(
        poro_enabled=fl.getboolean("poro", False) if hasattr(fl, "getboolean") else False,
        b_coupling_enabled=fl.getboolean("b_coupling", False) if hasattr(fl, "getboolean") else False,
        friction_enabled=fl.getboolean("friction", True) if hasattr(fl, "getboolean") else True,
        healing_enabled=fl.getboolean("healing", False) if hasattr(fl, "getboolean") else False,
    )

    init = SystemState.zero(
        ops, theta0=float(sc.get("theta0", 1.0)) / th_ref,
        alpha0=float(sc.get("alpha0", 1.0)), poro=flags.poro_enabled)
    if "v0_upper" in sc:
        from .scenarios import upper_body_nodes
        vx, vy = _floats(sc["v0_upper"])
        v_ref = L / t_ref
        up = upper_body_nodes(mesh)
        init.v[2 * up] = vx / v_ref
        init.v[2 * up + 1] = vy / v_ref
    if flags.poro_enabled and "zeta_B_step" in sc:
        amp, xsplit = _floats(sc["zeta_B_step"])
        init.zeta_B = init.zeta_B + amp * (mesh.nodes[:, 0] < xsplit / L - 1e-12)

    lo = cp["loads"] if "loads" in cp else {}
    g_dir = np.asarray(_floats(lo.get("gravity_dir", "0 0")) or [0, 0])
    f_dir = np.asarray(_floats(lo.get("traction_dir", "0 0")) or [0, 0])
    window = None
    if "traction_window" in lo:
        wlo, whi = _floats(lo["traction_window"])
        window = (wlo / L, whi / L)
    loads = LoadSet(
        g_dir=g_dir, g_table=_table(lo, "gravity", scale=1.0 / (sig / L), time_ref=t_ref),
        f_dir=f_dir, f_table=_table(lo, "traction", scale=1.0 / sig, time_ref=t_ref),
        traction_window=window,
        h_table=_table(lo, "h", scale=1.0, time_ref=t_ref),
        u_D=np.asarray(_floats(lo.get("u_D", "0 0")) or [0, 0]) / L,
    )
    loads.validate()

    reg = RegularisationSet()
    if "regularisation" in cp:
        rs = cp["regularisation"]
        for name in ("eps_v", "eps_pi", "eps_alpha", "eps_e", "eps_h"):
            if name in rs:
                setattr(reg, name, float(rs[name]))
    reg.validate()

    sv = cp["solver"] if "solver" in cp else {}
    out = cp["output"] if "output" in cp else {}
    scn = Scenario(
        ops=ops, loads=loads, T=T, tau=tau, initial=init, reg=reg, flags=flags,
        tol_composite=float(sv.get("tol_composite", 1e-10)),
        tol_linear=float(sv.get("tol_linear", 1e-12)),
        tol_heat=float(sv.get("tol_heat", 1e-10)),
        load_time=sv.get("load_time", "midpoint"),
        snapshot_stride=int(out.get("stride", 0)),
    )
    scn.validate()
    tau_list = [float(t) / t_ref for t in _floats(sc["tau_list"])] if "tau_list" in sc else []
    name = os.path.splitext(os.path.basename(path))[0]
    return RunSpec(scenario=scn, out_stride=scn.snapshot_stride, name=name,
                   tau_list=tau_list)
