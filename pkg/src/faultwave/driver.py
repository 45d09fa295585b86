"""Run orchestration: build a system from a configuration and integrate it.

Outputs are deterministic: receiver series and the energy log are CSV with
17-significant-digit values, fault snapshots are raw little-endian float64
arrays behind a plain-text header.  Wall-clock time appears only in the
returned summary, never in files.
"""

from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import config as cfgmod
from . import coupling, elastic, friction, mesh, operators, timestepping

MPA = 1e-3
KM = 1e3      # km -> m for outputs; km/s -> m/s likewise
GPA_TO_MPA = 1e3

RECEIVER_HEADER = "t,slip_rate_dip,slip_rate_strike,V,T_m,T_l,T_n,S"
ENERGY_HEADER = ("t,E,dEdt,interface_term,fluc_minus,fluc_plus,"
                 "preload_power,exterior,residual,max_V")
ENERGY_COLUMNS = {name: i for i, name in enumerate(ENERGY_HEADER.split(","))}


def build_operator(family, order, alpha_tol, n):
    if family == "traditional":
        return operators.build_traditional(order, n)
    if family == "dp_upwind":
        return operators.build_dp_upwind(order, n)
    if family == "drp":
        return operators.build_drp(order, alpha_tol, n)
    raise cfgmod.ConfigError(f"unknown operator family {family!r}")


@dataclass
class BuiltRun:
    config: cfgmod.RunConfig
    system: coupling.FaultSystem
    dt: float
    steps: int
    fault_ydip: np.ndarray       # (nr+1, ns+1) down-dip coordinate, km
    fault_z: np.ndarray
    friction_model: object
    receiver_index: dict         # name -> (j, k)
    psi0: np.ndarray | None


def _fault_plane_coords(blk_cfg):
    nr, ns = blk_cfg["cells_r"], blk_cfg["cells_s"]
    dip = math.radians(blk_cfg["dip_deg"])
    y = np.linspace(0.0, blk_cfg["depth"], nr + 1)
    z = np.linspace(blk_cfg["z0"], blk_cfg["z1"], ns + 1)
    ydip = y / math.sin(dip)
    return np.broadcast_to(ydip[:, None], (nr + 1, ns + 1)).copy(), \
        np.broadcast_to(z[None, :], (nr + 1, ns + 1)).copy()


def _friction_fields(cfg, ydip, z):
    base = dict(cfg.friction_base)
    shape = ydip.shape
    if cfg.friction_law == "slip_weakening":
        fields = {}
        for key, default in (("f_s", 0.76), ("f_d", 0.448), ("d_c", 0.5),
                             ("cohesion", 0.0)):
            fields[key] = np.full(shape, base.get(key, default))
        for rect in cfg.friction_regions:
            inside = rect.contains(ydip, z)
            for key, val in rect.values.items():
                fields[key][inside] = val
        model = friction.SlipWeakening(**fields)
        return model, fields
    if cfg.friction_regions:
        raise cfgmod.ConfigError("friction regions require slip weakening")
    law = "aging" if cfg.friction_law.endswith("aging") else "slip"
    model = friction.RateState(a=base.get("a", 0.008), b=base.get("b", 0.012),
                               f0=base.get("f0", 0.6), v0=base.get("v0", 1e-6),
                               d_c=base.get("d_c", 0.02), law=law)
    return model, {}


def _preload(cfg, ydip, z, fields):
    shape = ydip.shape
    pre = np.zeros((3,) + shape)
    t0n = cfg.stress_normal_gradient * ydip * MPA
    sigma0 = np.maximum(-t0n, 0.0)
    pre[0] = t0n
    pre[1] = cfg.stress_shear_ratio * sigma0
    pre[2] = cfg.stress_strike * MPA
    for rect in cfg.stress_patches:
        inside = rect.contains(ydip, z)
        over = rect.values.get("overstress", 0.0)
        f_s = fields.get("f_s", np.full(shape, 0.76))
        c0 = fields.get("cohesion", np.zeros(shape)) * MPA
        pre[1][inside] = ((f_s[inside] + over) * sigma0[inside] + c0[inside])
    return pre


def build(cfg: cfgmod.RunConfig) -> BuiltRun:
    cfg.validate()
    sides = []
    for side_name in ("left", "right"):
        b = cfg.blocks[side_name]
        mapping = mesh.DipShearMap(side=side_name, width=b["width"],
                                   dip_deg=b["dip_deg"], depth=b["depth"],
                                   z0=b["z0"], z1=b["z1"])
        block = mesh.build_block(mapping,
                                 (b["cells_q"], b["cells_r"], b["cells_s"]))
        mat = elastic.MaterialField.uniform(block.shape, rho=cfg.rho,
                                            cp=cfg.cp, cs=cfg.cs)
        ops = tuple(
            build_operator(cfg.family, cfg.order, cfg.alpha_tol, n)
            for n in block.dims)
        bcs = {}
        for (side_key, face), kind in cfg.boundaries.items():
            if side_key == side_name:
                bcs[face] = coupling.BoundaryCondition(kind)
        sides.append(coupling.SideSpec(block=block, material=mat, ops=ops,
                                       boundaries=bcs))

    ydip, zz = _fault_plane_coords(cfg.blocks["left"])
    model, fields = _friction_fields(cfg, ydip, zz)
    preload = _preload(cfg, ydip, zz, fields)
    system = coupling.FaultSystem(sides, friction_model=model,
                                  preload=preload, clamp_tensile=True)

    dt = timestepping.compute_dt([s.block for s in sides],
                                 [s.material for s in sides], cfg.cfl)
    steps = max(1, int(math.ceil(cfg.end_time / dt - 1e-12)))

    receiver_index = {}
    for name, rd, rz in cfg.receivers:
        j = int(np.argmin(np.abs(ydip[:, 0] - rd)))
        k = int(np.argmin(np.abs(zz[0, :] - rz)))
        receiver_index[name] = (j, k)

    psi0 = None
    if model.state_name == "psi":
        psi0 = np.full(ydip.shape, float(model.f0))
    return BuiltRun(config=cfg, system=system, dt=dt, steps=steps,
                    fault_ydip=ydip, fault_z=zz, friction_model=model,
                    receiver_index=receiver_index, psi0=psi0)


def write_fault_snapshot(path, step, t, arrays: dict) -> None:
    """Plain-text header then raw little-endian float64 fields."""
    names = list(arrays)
    shape = arrays[names[0]].shape
    header = (f"faultwave-fault-snapshot 1\nstep {step}\ntime {t!r}\n"
              f"shape {shape[0]} {shape[1]}\nfields {' '.join(names)}\n")
    with open(path, "wb") as fh:
        fh.write(header.encode())
        for name in names:
            fh.write(np.ascontiguousarray(arrays[name], dtype="<f8").tobytes())


def read_fault_snapshot(path):
    with open(path, "rb") as fh:
        data = fh.read()
    head, _, rest = data.partition(b"fields ")
    lines = head.decode().splitlines()
    meta = dict(ln.split(maxsplit=1) for ln in lines[1:] if ln)
    names_line, _, payload = rest.partition(b"\n")
    names = names_line.decode().split()
    shape = tuple(int(v) for v in meta["shape"].split())
    count = shape[0] * shape[1]
    out = {"time": float(meta["time"]), "step": int(meta["step"])}
    for i, name in enumerate(names):
        start = i * count * 8
        out[name] = np.frombuffer(payload[start:start + count * 8],
                                  dtype="<f8").reshape(shape).copy()
    return out


@dataclass
class RunResult:
    config: cfgmod.RunConfig
    dt: float
    steps: int
    receivers: dict              # name -> (n_samples, 8) array
    energy_log: np.ndarray       # (n_samples, 9)
    final_slip: np.ndarray       # km
    final_state: list            # ElasticState per side
    fault_ydip: np.ndarray
    fault_z: np.ndarray
    output_dir: str | None
    summary: dict = field(default_factory=dict)


def _fmt_row(values):
    return ",".join(f"{v:.17g}" for v in values)


def run(cfg: cfgmod.RunConfig, output_dir: str | None = None) -> RunResult:
    """Integrate a configured scenario and write its outputs.

    Deterministic: identical configurations produce bit-identical files.
    """
    built = build(cfg)
    system, dt, steps = built.system, built.dt, built.steps
    out_dir = cfg.output_dir if output_dir is None else output_dir
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)

    states = system.zero_states()
    slip = np.zeros(system.fault_shape)
    psi = built.psi0
    model = built.friction_model
    uses_psi = model.state_name == "psi"

    receiver_rows = {name: [] for name in built.receiver_index}
    energy_rows = []
    snapshots = []
    t0_wall = time.perf_counter()
    max_slip_rate = 0.0

    a_coefs, b_coefs, c_coefs = (timestepping.LSRK_A, timestepping.LSRK_B,
                                 timestepping.LSRK_C)
    q_arrays = [st.q for st in states]
    regs = [np.zeros_like(q) for q in q_arrays] + \
        [np.zeros_like(slip)] + ([np.zeros_like(psi)] if uses_psi else [])

    def sample(t, step, result):
        nonlocal max_slip_rate
        tr = result.trace
        max_slip_rate = max(max_slip_rate, float(tr.vmag.max()))
        for name, (j, k) in built.receiver_index.items():
            receiver_rows[name].append((
                t,
                tr.jump[1, j, k] * KM, tr.jump[2, j, k] * KM,
                tr.vmag[j, k] * KM,
                tr.t_hat[1, j, k] * GPA_TO_MPA,
                tr.t_hat[2, j, k] * GPA_TO_MPA,
                tr.t_hat[0, j, k] * GPA_TO_MPA,
                slip[j, k] * KM,
            ))
        diag = coupling.energy_diagnostics(system, states,
                                           psi if uses_psi else slip,
                                           t=t, result=result)
        energy_rows.append((t, diag.energy, diag.rate, diag.interface_term,
                            diag.fluc_minus, diag.fluc_plus,
                            diag.preload_power, diag.exterior, diag.residual,
                            float(tr.vmag.max()) * KM))
        if out_dir and cfg.snapshot_stride and step % cfg.snapshot_stride == 0:
            path = os.path.join(out_dir, f"fault_{step:06d}.snap")
            write_fault_snapshot(path, step, t,
                                 {"V": tr.vmag * KM, "slip": slip * KM})
            snapshots.append(path)

    for step in range(steps):
        t = step * dt
        for i, (a_c, b_c, c_c) in enumerate(zip(a_coefs, b_coefs, c_coefs)):
            t_stage = t + c_c * dt
            for st in states:
                st.t = t_stage
            fault_state = psi if uses_psi else slip
            result = system.rhs(t_stage, states, fault_state)
            if i == 0:
                sample(t, step, result)
            rates = [result.dq[0], result.dq[1], result.slip_rate]
            if uses_psi:
                rates.append(result.state_rate)
            arrays = q_arrays + [slip] + ([psi] if uses_psi else [])
            for reg, arr, rate in zip(regs, arrays, rates):
                reg *= a_c
                reg += dt * rate
                arr += b_c * reg
        for st in states:
            st.assert_finite(step=step)

    t_end = steps * dt
    for st in states:
        st.t = t_end
    final_result = system.rhs(t_end, states, psi if uses_psi else slip)
    sample(t_end, steps, final_result)

    receivers = {name: np.array(rows) for name, rows in receiver_rows.items()}
    energy_log = np.array(energy_rows)

    if out_dir:
        for name, arr in receivers.items():
            path = os.path.join(out_dir, f"receiver_{name}.csv")
            with open(path, "w") as fh:
                fh.write(RECEIVER_HEADER + "\n")
                for row in arr:
                    fh.write(_fmt_row(row) + "\n")
        with open(os.path.join(out_dir, "energy.csv"), "w") as fh:
            fh.write(ENERGY_HEADER + "\n")
            for row in energy_log:
                fh.write(_fmt_row(row) + "\n")

    summary = {
        "steps": steps,
        "dt": dt,
        "max_slip_rate_mps": max_slip_rate * KM,
        "final_max_slip_m": float(slip.max()) * KM,
        "final_energy": float(energy_log[-1, 1]),
        "wall_seconds": time.perf_counter() - t0_wall,
        "snapshots": snapshots,
    }
    return RunResult(config=cfg, dt=dt, steps=steps, receivers=receivers,
                     energy_log=energy_log, final_slip=slip,
                     final_state=states, fault_ydip=built.fault_ydip,
                     fault_z=built.fault_z,
                     output_dir=out_dir or None, summary=summary)
