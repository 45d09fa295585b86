"""Scenario builders: scaled dipping-fault benchmark, manufactured-solution
convergence cases, and the front-crossing parity probe.

The dipping-fault scenario reproduces the community benchmark's parameter
laws (depth-proportional normal stress, ratio-loaded shear, overstressed
nucleation patch, high-strength barrier) on a desk-scale domain: lengths and
the critical slip distance shrink by ``domain_scale`` so the stress-drop to
strength ratios survive, while the nucleation patch keeps at least five grid
cells across.

The manufactured cases force the two-block problem with a trigonometric
space-time solution whose traces satisfy the linearized interface law
exactly, so the measured convergence isolates the discretization error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import config as cfgmod
from . import coupling, elastic, friction, mesh, timestepping
from .operators import build_dp_upwind, build_drp, build_traditional

MPA = 1e-3


# ---------------------------------------------------------------------------
# scaled dipping-fault benchmark
# ---------------------------------------------------------------------------


def build_tpv10(h: float = 0.25, domain_scale: float = 0.2,
                family: str = "dp_upwind", order: int = 4,
                alpha_tol: float = 0.05, end_time: float | None = None,
                cfl: float = 0.5, snapshot_stride: int = 0,
                output_dir: str = "out") -> cfgmod.RunConfig:
    """Desk-scale 60-degree dipping normal-fault scenario.

    ``domain_scale`` shrinks the 40 km full-scale domain; at the default 0.2
    the domain spans 8 km with a 3 km x 6 km rupture region.  The critical
    slip distance scales with the domain so the fully weakened slip remains
    reachable.  The nucleation patch is widened to ``>= 5`` cells when the
    proportional size would under-resolve it.
    """
    scale = domain_scale
    half_width = 20.0 * scale
    depth = 20.0 * scale
    z_ext = 20.0 * scale
    cells_q = max(4, int(round(half_width / h)))
    cells_r = max(4, int(round(depth / h)))
    cells_s = max(8, int(round(2 * z_ext / h)))

    dip = 60.0
    rupture_dip = 15.0 * scale
    rupture_z = 15.0 * scale
    d_c = 0.5 * scale           # meters

    # The cohesive zone length is set by d_c / sigma_n and does not shrink
    # with the domain, so the proportional 3 km patch becomes subcritical at
    # desk scales; widen it to stay several cohesive zones across.
    nuc_half = max(6.25 * scale, 2.5 * h)
    margin = max(1.5 * scale, h)
    nuc_dip1 = min(12.0 * scale + nuc_half, rupture_dip - margin)
    nuc_dip0 = nuc_dip1 - 2 * nuc_half
    if nuc_dip0 < 0:
        raise ValueError("nucleation patch does not fit the rupture region")
    if 2 * nuc_half < 4 * h:
        raise ValueError("grid spacing does not resolve the nucleation patch")

    cfg = cfgmod.RunConfig(
        end_time=15.0 * scale if end_time is None else end_time,
        cfl=cfl, snapshot_stride=snapshot_stride, output_dir=output_dir,
        family=family, order=order, alpha_tol=alpha_tol,
        rho=2.7, cp=5.716, cs=3.3,
    )
    for side in ("left", "right"):
        cfg.blocks[side] = {"width": half_width, "dip_deg": dip,
                            "depth": depth, "z0": -z_ext, "z1": z_ext,
                            "cells_q": cells_q, "cells_r": cells_r,
                            "cells_s": cells_s}
    for face in ("r0", "r1", "s0", "s1"):
        for side in ("left", "right"):
            kind = "free_surface" if face == "r0" else "absorbing"
            cfg.boundaries[(side, face)] = kind
    cfg.boundaries[("left", "q0")] = "absorbing"
    cfg.boundaries[("right", "q1")] = "absorbing"

    cfg.friction_law = "slip_weakening"
    # barrier everywhere, benchmark values inside the rupture rectangle
    cfg.friction_base = {"f_s": 10000.0, "f_d": 0.448, "d_c": d_c,
                         "cohesion": 1000.0}
    cfg.friction_regions.append(cfgmod.RectValues(
        name="rupture", ydip0=0.0, ydip1=rupture_dip, z0=-rupture_z,
        z1=rupture_z,
        values={"f_s": 0.76, "f_d": 0.448, "d_c": d_c, "cohesion": 0.2}))

    cfg.stress_normal_gradient = -7.387
    cfg.stress_shear_ratio = 0.55
    cfg.stress_patches.append(cfgmod.RectValues(
        name="nucleation", ydip0=nuc_dip0, ydip1=nuc_dip1,
        z0=-nuc_half, z1=nuc_half, values={"overstress": 0.00057}))

    cfg.receivers.append(("station", 7.5 * scale, 12.0 * scale))
    return cfg.validate()


def initial_stress_laws(ydip, f_s=0.76, cohesion_mpa=0.2,
                        overstress=0.00057):
    """Benchmark stress laws at down-dip distance ``ydip`` (km), in MPa.

    Returns (normal traction, nucleation shear, background shear).
    """
    t0n = -7.387 * ydip
    sigma0 = -t0n
    nuc = (f_s + overstress) * sigma0 + cohesion_mpa
    background = 0.55 * sigma0
    return t0n, nuc, background


# ---------------------------------------------------------------------------
# trigonometric manufactured solutions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Wave:
    kind: str          # 'sin' | 'cos' | 'one'
    freq: float = 0.0
    phase: float = 0.0

    def __call__(self, u):
        if self.kind == "one":
            return np.ones_like(np.asarray(u, dtype=float))
        arg = self.freq * np.asarray(u, dtype=float) + self.phase
        return np.sin(arg) if self.kind == "sin" else np.cos(arg)

    def derivative(self):
        if self.kind == "one":
            return 0.0, self
        if self.kind == "sin":
            return self.freq, _Wave("cos", self.freq, self.phase)
        return -self.freq, _Wave("sin", self.freq, self.phase)


_ONE = _Wave("one")


@dataclass(frozen=True)
class _Term:
    coeff: float
    fx: _Wave = _ONE
    fy: _Wave = _ONE
    fz: _Wave = _ONE
    ft: _Wave = _ONE

    def __call__(self, x, y, z, t):
        return self.coeff * self.fx(x) * self.fy(y) * self.fz(z) * self.ft(t)

    def diff(self, which):
        factor = getattr(self, which)
        scale, dfac = factor.derivative()
        if scale == 0.0:
            return None
        return _Term(**{**self.__dict__, "coeff": self.coeff * scale,
                        which: dfac})


class TrigField:
    """Sum of separable trigonometric terms with exact derivatives."""

    def __init__(self, terms=()):
        self.terms = tuple(t for t in terms if t is not None and t.coeff != 0.0)

    def __call__(self, x, y, z, t):
        if not self.terms:
            return np.zeros(np.broadcast_shapes(np.shape(x), np.shape(y),
                                                np.shape(z)))
        return sum(term(x, y, z, t) for term in self.terms)

    def diff(self, which):
        return TrigField(term.diff(which) for term in self.terms)

    def __add__(self, other):
        return TrigField(self.terms + other.terms)

    def __sub__(self, other):
        return self + other * (-1.0)

    def __mul__(self, scalar):
        return TrigField(_Term(**{**t.__dict__, "coeff": t.coeff * scalar})
                         for t in self.terms)

    __rmul__ = __mul__


def _product(coeff, kx, px, ky, py, kz, pz, omega, pt, fx_kind="sin"):
    return TrigField([_Term(coeff, _Wave(fx_kind, kx, px), _Wave("sin", ky, py),
                            _Wave("sin", kz, pz), _Wave("cos", omega, pt))])


class ManufacturedSolution:
    """Two-block exact solution obeying the linearized interface laws.

    Blocks occupy ``[0,1]^3`` and ``[1,2] x [0,1]^2`` with the interface at
    ``x = 1``.  All fields are continuous except the tangential velocity
    ``v_y``, whose jump ``D`` satisfies ``sigma_xy(1) = alpha D``; the other
    tangential traction vanishes on the interface and the velocity normal
    component is continuous, so a frozen-strength interface of coefficient
    ``alpha`` is satisfied exactly.
    """

    def __init__(self, alpha, rho=1.0, cp=2.0, cs=1.0, oscillation=1.0):
        self.alpha = float(alpha)
        self.rho = rho
        self.mu = rho * cs ** 2
        self.lam = rho * cp ** 2 - 2 * self.mu
        k = math.pi * oscillation
        om = 1.7 * k
        d0 = 0.4

        def P(c, kx, px, ky=2 * k, py=0.3, kz=2 * k, pz=0.7, kind="sin"):
            return _product(c, kx, px, ky, py, kz, pz, om, 0.2, fx_kind=kind)

        base_vy = P(0.8, k, 0.4)
        half_jump = P(0.5 * d0, 0.5 * math.pi, 0.0)   # sin(pi x/2): 1 at x=1

        self.fields = {}
        for side, sgn in (("left", -1.0), ("right", +1.0)):
            f = {
                "vx": P(1.0, k, 0.5),
                "vy": base_vy + half_jump * sgn,
                "vz": P(0.7, k, 0.9),
                "sxx": P(0.9, k, 0.1, kind="cos"),
                "syy": P(0.6, k, 0.8, kind="cos"),
                "szz": P(0.5, k, 1.3, kind="cos"),
                "sxy": _product(self.alpha * d0, 0.5 * math.pi, 0.0,
                                2 * k, 0.3, 2 * k, 0.7, om, 0.2),
                "sxz": P(0.45, k, -k),  # sin(k(x-1)): zero on the interface
                "syz": P(0.55, k, 0.6, kind="cos"),
            }
            self.fields[side] = f
        self._forcing = {side: self._build_forcing(side)
                         for side in ("left", "right")}

    _ORDER = ("vx", "vy", "vz", "sxx", "syy", "szz", "sxy", "sxz", "syz")

    def _build_forcing(self, side):
        f = self.fields[side]
        rho, lam, mu = self.rho, self.lam, self.mu
        dx = {n: f[n].diff("fx") for n in f}
        dy = {n: f[n].diff("fy") for n in f}
        dz = {n: f[n].diff("fz") for n in f}
        dt = {n: f[n].diff("ft") for n in f}
        out = {
            "vx": dt["vx"] - (dx["sxx"] + dy["sxy"] + dz["sxz"]) * (1 / rho),
            "vy": dt["vy"] - (dx["sxy"] + dy["syy"] + dz["syz"]) * (1 / rho),
            "vz": dt["vz"] - (dx["sxz"] + dy["syz"] + dz["szz"]) * (1 / rho),
            "sxx": dt["sxx"] - dx["vx"] * (lam + 2 * mu)
                   - (dy["vy"] + dz["vz"]) * lam,
            "syy": dt["syy"] - dy["vy"] * (lam + 2 * mu)
                   - (dx["vx"] + dz["vz"]) * lam,
            "szz": dt["szz"] - dz["vz"] * (lam + 2 * mu)
                   - (dx["vx"] + dy["vy"]) * lam,
            "sxy": dt["sxy"] - (dy["vx"] + dx["vy"]) * mu,
            "sxz": dt["sxz"] - (dz["vx"] + dx["vz"]) * mu,
            "syz": dt["syz"] - (dz["vy"] + dy["vz"]) * mu,
        }
        return out

    def state(self, side, block, t):
        return np.stack([self.fields[side][name](block.x, block.y, block.z, t)
                         for name in self._ORDER])

    def forcing(self, side, block, t):
        return np.stack([self._forcing[side][name](block.x, block.y, block.z, t)
                         for name in self._ORDER])

    def trace(self, side, block, ctx, t):
        """Exact local-frame (v, T) on one face of one block."""
        sl = ctx.slicer
        xs, ys, zs = block.x[sl], block.y[sl], block.z[sl]
        vals = [self.fields[side][name](xs, ys, zs, t) for name in self._ORDER]
        v = np.stack(vals[:3])
        sigma = np.stack(vals[3:])
        T = elastic.traction(sigma, ctx.frame.normal)
        return mesh.rotate(v, ctx.frame.rotation), \
            mesh.rotate(T, ctx.frame.rotation)


def _mms_operator(family, order, alpha_tol, n):
    if family == "traditional":
        return build_traditional(order, n)
    if family == "dp_upwind":
        return build_dp_upwind(order, n)
    return build_drp(order, alpha_tol, n)


@dataclass
class MmsCase:
    system: coupling.FaultSystem
    solution: ManufacturedSolution
    blocks: list
    dt: float

    def exact_states(self, t):
        return [elastic.ElasticState(
            q=self.solution.state(side, blk, t), t=t)
            for side, blk in zip(("left", "right"), self.blocks)]


def build_mms_linear(order: int, cells: int, alpha: float,
                     family: str = "traditional", alpha_tol: float = 0.05,
                     cfl: float = 0.4, oscillation: float = 1.0) -> MmsCase:
    """Two Cartesian blocks forced so the trigonometric field is exact."""
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    sol = ManufacturedSolution(alpha, oscillation=oscillation)
    blocks = [mesh.build_block(mesh.box_map(0, 1, 0, 1, 0, 1),
                               (cells, cells, cells)),
              mesh.build_block(mesh.box_map(1, 2, 0, 1, 0, 1),
                               (cells, cells, cells))]
    ops = tuple(_mms_operator(family, order, alpha_tol, cells)
                for _ in range(3))
    sides = []
    for i, (side_name, block) in enumerate(zip(("left", "right"), blocks)):
        mat = elastic.MaterialField.uniform(block.shape, rho=sol.rho,
                                            cp=2.0, cs=1.0)
        exterior = ["r0", "r1", "s0", "s1",
                    "q0" if side_name == "left" else "q1"]
        bcs = {}
        for face in exterior:
            ctx = coupling.make_face_context(block, mat, ops, face)
            bcs[face] = coupling.BoundaryCondition(
                "data", data=_trace_provider(sol, side_name, block, ctx))
        sides.append(coupling.SideSpec(block=block, material=mat, ops=ops,
                                       boundaries=bcs))

    def forcing(t, side_index):
        side = ("left", "right")[side_index]
        return sol.forcing(side, blocks[side_index], t)

    system = coupling.FaultSystem(
        sides, friction_model=friction.FrozenLinear(alpha), forcing=forcing)
    dt = timestepping.compute_dt(blocks, [s.material for s in sides], cfl)
    return MmsCase(system=system, solution=sol, blocks=blocks, dt=dt)


def _trace_provider(sol, side_name, block, ctx):
    def provider(t):
        return sol.trace(side_name, block, ctx, t)
    return provider


def run_mms(case: MmsCase, end_time: float = 0.4):
    """Integrate from the exact initial data; return the HP-norm error."""
    states = case.exact_states(0.0)
    arrays = tuple(st.q for st in states)
    steps = max(1, int(math.ceil(end_time / case.dt - 1e-12)))
    dt = end_time / steps

    def rhs(t, arrs):
        sts = [elastic.ElasticState(q=arrs[0], t=t),
               elastic.ElasticState(q=arrs[1], t=t)]
        res = case.system.rhs(t, sts)
        return (res.dq[0], res.dq[1])

    for k in range(steps):
        arrays = timestepping.lsrk45_step(arrays, rhs, k * dt, dt)
    exact = case.exact_states(end_time)
    diff = [elastic.ElasticState(q=arrays[i] - exact[i].q) for i in range(2)]
    err = elastic.discrete_energy(
        (d, side.block, side.material, side.ops)
        for d, side in zip(diff, case.system.sides))
    final = [elastic.ElasticState(q=arrays[0], t=end_time),
             elastic.ElasticState(q=arrays[1], t=end_time)]
    return math.sqrt(err), final


def convergence_table(order, sizes, alpha=4.0, family="traditional",
                      end_time=0.3, oscillation=1.0):
    """(h, error, rate) rows for a refinement sweep."""
    rows = []
    prev = None
    for n in sizes:
        case = build_mms_linear(order, n, alpha, family=family,
                                oscillation=oscillation)
        err, _ = run_mms(case, end_time=end_time)
        if prev is None:
            rate = float("nan")
        else:
            rate = math.log(prev[1] / err) / math.log(n / prev[0])
        rows.append((1.0 / n, err, rate))
        prev = (n, err)
    return rows


# ---------------------------------------------------------------------------
# parity probe: steep front crossing a linearized interface
# ---------------------------------------------------------------------------


def high_frequency_fraction(series: np.ndarray) -> float:
    """Top-octave power fraction of a trace's differenced spectrum.

    Differencing whitens the step-like rupture arrivals so that spurious
    grid-scale ringing stands out; a Hann window controls leakage.
    """
    d = np.diff(np.asarray(series, dtype=float))
    if np.abs(d).max() == 0.0:
        return 0.0
    w = np.hanning(len(d))
    power = np.abs(np.fft.rfft(d * w)) ** 2
    if len(power) < 5:
        return 0.0
    half = (len(power) - 1) // 2
    total = power[1:].sum()
    return float(power[half:].sum() / total) if total > 0 else 0.0


def fault_spatial_roughness(field: np.ndarray, ydip: np.ndarray,
                            rupture_dip: float) -> float:
    """High-wavenumber power fraction of a fault field along strike.

    Rows crossing the interior of the rupture stripe are transformed along
    strike; the fraction of (windowed, demeaned) power above half the grid
    Nyquist wavenumber measures grid-scale pollution of the interface trace.
    """
    rows = (ydip[:, 0] > 0.15 * rupture_dip) & \
        (ydip[:, 0] < 0.95 * rupture_dip)
    total = high = 0.0
    for row in field[rows]:
        d = row - row.mean()
        if np.abs(d).max() == 0.0:
            continue
        power = np.abs(np.fft.rfft(d * np.hanning(len(d)))) ** 2
        half = (len(power) - 1) // 2
        total += power[1:].sum()
        high += power[half:].sum()
    return float(high / total) if total > 0 else 0.0


def rupture_roughness(result, cfg, window=(0.4, 0.75)) -> float:
    """Mean slip-rate roughness of a run's fault snapshots in a time window.

    Requires the run to have been made with a snapshot stride and an output
    directory; uses the snapshots whose times fall inside
    ``window * end_time``.
    """
    from . import driver as drv
    rupture_dip = cfg.friction_regions[0].ydip1
    ydip, _ = drv._fault_plane_coords(cfg.blocks["left"])
    t0, t1 = window[0] * cfg.end_time, window[1] * cfg.end_time
    vals = []
    for path in result.summary["snapshots"]:
        snap = drv.read_fault_snapshot(path)
        if t0 <= snap["time"] <= t1:
            vals.append(fault_spatial_roughness(snap["V"], ydip, rupture_dip))
    if not vals:
        raise ValueError("no fault snapshots inside the requested window")
    return float(np.mean(vals))


def settled_energy_monotone(energy_log: np.ndarray, quiet_level: float = 0.05,
                            tol: float = 1e-8) -> bool:
    """True when the energy never grows after the rupture transient.

    The transient is over once the fault's peak slip rate has dropped below
    ``quiet_level`` times its run maximum; afterwards each step's energy may
    not increase by more than ``tol * max(E)``.
    """
    E = energy_log[:, 1]
    vmax = energy_log[:, 9]
    peak = vmax.max()
    if peak == 0.0:
        return bool(np.all(np.diff(E) <= tol * max(E.max(), 1e-300)))
    active = np.where(vmax > quiet_level * peak)[0]
    start = int(active.max()) + 1 if len(active) else 0
    tail = E[start:]
    if len(tail) < 2:
        return False
    return bool(np.all(np.diff(tail) <= tol * E.max()))


@dataclass
class ProbeResult:
    times: np.ndarray
    trace: np.ndarray           # transmitted velocity at the receiver
    fraction: float


def run_parity_probe(order: int, family: str = "dp_upwind",
                     front_cells: float = 2.0, cells: int = 128,
                     alpha: float = 2.0, alpha_tol: float = 0.05) -> ProbeResult:
    """Drive a tanh velocity front through a linearized interface.

    A right-going longitudinal front of width ``front_cells * h`` starts in
    the left block; the trace of the transmitted velocity is recorded in the
    right block and its top-octave energy fraction summarizes how much
    grid-scale ringing the operator family generates.
    """
    blocks = [mesh.build_block(mesh.box_map(0, 1, 0, 0.25, 0, 0.25),
                               (cells, 8, 8)),
              mesh.build_block(mesh.box_map(1, 2, 0, 0.25, 0, 0.25),
                               (cells, 8, 8))]
    mats = [elastic.MaterialField(rho=np.ones(b.shape),
                                  lam=np.zeros(b.shape) + 1e-12,
                                  mu=np.ones(b.shape)) for b in blocks]
    sides = []
    for i, side_name in enumerate(("left", "right")):
        ops = (_mms_operator(family, order, alpha_tol, cells),
               build_traditional(4, 8), build_traditional(4, 8))
        bcs = {f: coupling.BoundaryCondition("free_surface")
               for f in ("r0", "r1", "s0", "s1")}
        bcs["q0" if side_name == "left" else "q1"] = \
            coupling.BoundaryCondition("absorbing")
        sides.append(coupling.SideSpec(block=blocks[i], material=mats[i],
                                       ops=ops, boundaries=bcs))
    shape = (9, 9)
    preload = np.zeros((3,) + shape)
    preload[0] = -50 * MPA
    system = coupling.FaultSystem(sides, friction_model=friction.FrozenLinear(alpha),
                                  preload=preload, fault_m0=(0.0, 1.0, 0.0))

    cp = float(mats[0].cp.flat[0])
    z_imp = float((mats[0].rho * mats[0].cp).flat[0])
    h = 1.0 / cells
    width = front_cells * h
    amp = 1e-3
    states = system.zero_states()
    for i, blk in enumerate(blocks):
        prof = amp * 0.5 * (1.0 + np.tanh((0.5 - blk.x) / width))
        states[i].q[0] = prof
        states[i].q[3] = -z_imp * prof
    dt = timestepping.compute_dt(blocks, mats, 0.5)
    t_end = 1.4 / cp
    steps = int(round(t_end / dt))
    rec = (cells // 2, 4, 4)

    arrays = (states[0].q, states[1].q)
    times, trace = [], []

    def rhs(t, arrs):
        sts = [elastic.ElasticState(q=arrs[0], t=t),
               elastic.ElasticState(q=arrs[1], t=t)]
        res = system.rhs(t, sts, None)
        return (res.dq[0], res.dq[1])

    for k in range(steps):
        times.append(k * dt)
        trace.append(arrays[1][(0,) + rec])
        arrays = timestepping.lsrk45_step(arrays, rhs, k * dt, dt)
    times.append(steps * dt)
    trace.append(arrays[1][(0,) + rec])
    trace = np.array(trace)
    return ProbeResult(times=np.array(times), trace=trace,
                       fraction=high_frequency_fraction(trace / amp))
