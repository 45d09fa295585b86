"""Penalty coupling: fault interface, exterior boundaries, energy accounting.

Every face is treated through the same characteristic machinery.  With the
trace ``(v, T)`` rotated into the face frame and target data ``(v^, T^)``,
the penalties

    G = Z/2 (v - v^) + s/2 (T - T^),    G~ = G / Z,

with ``s = +1`` on faces at the far end of an axis and ``s = -1`` at the near
end, are rotated back to physical components and injected into the rows of
the state through a vector matching the wave-operator eigenstructure, scaled
by ``-H^{-1} e_face J |grad xi|``.  One algebraic identity then turns each
face's energy contribution into ``-sum_j |G_j|^2 / Z_j`` plus the power of
the imposed data, which is what the diagnostics below assemble; for the fault
the data power is the (non-positive) frictional dissipation.

Fault data come from the hat-variable solve; free-surface data set the
traction to zero keeping the outgoing characteristic; absorbing data zero the
incoming characteristic; Dirichlet-type data (manufactured solutions) replace
the incoming characteristic with the exact one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import elastic, friction, mesh

_M0_CANDIDATES = ((0.0, 1.0, 0.0), (1.0, 0.0, 0.0), (0.0, 0.0, 1.0))


def _auto_frame(block, face):
    for m0 in _M0_CANDIDATES:
        try:
            return mesh.face_frame(block, face, m0=m0)
        except mesh.DegenerateBasisError:
            continue
    raise mesh.DegenerateBasisError(f"no usable reference tangent on {face}")


@dataclass(frozen=True)
class BoundaryCondition:
    """Exterior face treatment: free_surface | absorbing | data."""

    kind: str
    data: object = None     # callable(t) -> (v_hat, t_hat) local, for "data"

    def __post_init__(self):
        if self.kind not in ("free_surface", "absorbing", "data"):
            raise ValueError(f"unknown boundary kind {self.kind!r}")


@dataclass
class FaceContext:
    """Static per-face data shared by penalties and diagnostics."""

    face: str
    axis: int
    end: int
    slicer: tuple
    frame: mesh.FaceFrame
    impedance: np.ndarray     # (3, ...) rows n, m, l
    w2: np.ndarray            # transverse quadrature weights per face node
    sat_scale: np.ndarray     # J |grad xi| / H_face per face node
    sign: float               # +1 at end=1 (outgoing p), -1 at end=0

    def cubature(self, values: np.ndarray) -> float:
        return float((values * self.frame.area_scale * self.w2).sum())


def make_face_context(block, material, ops_per_axis, face, m0=None) -> FaceContext:
    axis, end, sl = mesh.face_slicer(face)
    frame = mesh.face_frame(block, face, m0=m0) if m0 is not None \
        else _auto_frame(block, face)
    rho = material.rho[sl]
    zp = rho * material.cp[sl]
    zs = rho * material.cs[sl]
    impedance = np.stack([zp, zs, zs])
    wts = [o.H for o in ops_per_axis]
    tr = [a for a in range(3) if a != axis]
    w2 = np.multiply.outer(wts[tr[0]], wts[tr[1]])
    h_face = ops_per_axis[axis].H[0 if end == 0 else -1]
    sat_scale = frame.area_scale / h_face
    return FaceContext(face=face, axis=axis, end=end, slicer=sl, frame=frame,
                       impedance=impedance, w2=w2, sat_scale=sat_scale,
                       sign=1.0 if end == 1 else -1.0)


def face_trace(state: elastic.ElasticState, ctx: FaceContext):
    """Local-frame velocity and traction on the face."""
    sl = (slice(None),) + ctx.slicer
    v_loc = mesh.rotate(state.q[:3][sl], ctx.frame.rotation)
    T = elastic.traction(state.q[3:][sl], ctx.frame.normal)
    t_loc = mesh.rotate(T, ctx.frame.rotation)
    return v_loc, t_loc


def penalty_terms(v_loc, t_loc, v_hat, t_hat, impedance, side: str):
    """Characteristic penalties ``G`` and ``G~ = G/Z`` in the local frame."""
    if side == "minus":
        g = 0.5 * impedance * (v_loc - v_hat) + 0.5 * (t_loc - t_hat)
    elif side == "plus":
        g = 0.5 * impedance * (v_loc - v_hat) - 0.5 * (t_loc - t_hat)
    else:
        raise ValueError(f"side must be 'minus' or 'plus', got {side!r}")
    return g, g / impedance


def sat_vector(g_phys, gt_phys, normal, sign):
    """Nine-row penalty vector matching the elastic eigenstructure."""
    nx, ny, nz = normal
    gx, gy, gz = gt_phys
    out = np.empty((9,) + g_phys.shape[1:])
    out[:3] = g_phys
    out[3] = sign * nx * gx
    out[4] = sign * ny * gy
    out[5] = sign * nz * gz
    out[6] = sign * (ny * gx + nx * gy)
    out[7] = sign * (nz * gx + nx * gz)
    out[8] = sign * (nz * gy + ny * gz)
    return out


def apply_face_penalty(dq, ctx: FaceContext, block, material, g_loc, gt_loc):
    """Add ``P~ (-H^{-1} e J|grad xi| SAT)`` into the face rows of ``dq``."""
    g_phys = mesh.rotate_back(g_loc, ctx.frame.rotation)
    gt_phys = mesh.rotate_back(gt_loc, ctx.frame.rotation)
    sat = -ctx.sat_scale * sat_vector(g_phys, gt_phys, ctx.frame.normal,
                                      ctx.sign)
    sl = ctx.slicer
    rho = material.rho[sl]
    lam = material.lam[sl]
    mu = material.mu[sl]
    jac = block.jac[sl]
    full = (slice(None),) + sl
    dq[full][:3] += sat[:3] / (rho * jac)
    e = sat[3:] / jac
    trace = e[0] + e[1] + e[2]
    dq[full][3] += lam * trace + 2 * mu * e[0]
    dq[full][4] += lam * trace + 2 * mu * e[1]
    dq[full][5] += lam * trace + 2 * mu * e[2]
    dq[full][6] += mu * e[3]
    dq[full][7] += mu * e[4]
    dq[full][8] += mu * e[5]


def boundary_data(kind, v_loc, t_loc, impedance, sign, external=None):
    """Target ``(v^, T^)`` in the local frame for one exterior face."""
    if kind == "free_surface":
        v_hat = v_loc - sign * t_loc / impedance
        t_hat = np.zeros_like(t_loc)
    elif kind == "absorbing":
        v_hat = 0.5 * (v_loc - sign * t_loc / impedance)
        t_hat = 0.5 * (t_loc - sign * impedance * v_loc)
    elif kind == "data":
        v_ext, t_ext = external
        # keep the outgoing characteristic, impose the incoming one
        out_amp = 0.5 * (impedance * v_loc - sign * t_loc)
        in_amp = 0.5 * (impedance * v_ext + sign * t_ext)
        v_hat = (out_amp + in_amp) / impedance
        t_hat = sign * (in_amp - out_amp)
    else:
        raise ValueError(f"unknown boundary kind {kind!r}")
    return v_hat, t_hat


@dataclass
class FaultTrace:
    """Per-node interface diagnostics from one right-hand-side evaluation."""

    vmag: np.ndarray            # slip-rate magnitude, km/s
    jump: np.ndarray            # (3,...) velocity jumps, local frame
    t_hat: np.ndarray           # (3,...) total traction (incl. preload), GPa
    sigma_n: np.ndarray         # compressive normal stress used, GPa
    phi: np.ndarray             # (3,...) total stress transfers
    eta: np.ndarray             # (3,...) impedance combinations
    dissipation: np.ndarray     # alpha |V|^2 per node (total traction)
    g_minus: np.ndarray         # (3,...) penalties, minus side
    g_plus: np.ndarray
    that_dyn: np.ndarray        # dynamic part of the hat traction
    vhat_minus: np.ndarray
    vhat_plus: np.ndarray


@dataclass
class SideSpec:
    """One elastic block with its operators and exterior boundary table."""

    block: mesh.CurvilinearBlock
    material: elastic.MaterialField
    ops: tuple
    boundaries: dict = field(default_factory=dict)   # face -> BoundaryCondition


@dataclass
class RhsResult:
    dq: list                    # per side, (9, ...) time derivatives
    slip_rate: np.ndarray | None
    state_rate: np.ndarray | None
    trace: FaultTrace | None
    face_energy: dict           # (side_index, face) -> energy contribution
    forcing: list | None        # applied volume forcing fields, if any


class FaultSystem:
    """One or two blocks with penalty-coupled faces.

    For two blocks the fault is the ``q1`` face of side 0 against the ``q0``
    face of side 1 (conforming grids).  ``preload`` is a static local-frame
    traction added to the fault stress transfers, so the evolving fields are
    the perturbation from a prestressed equilibrium.
    """

    def __init__(self, sides, friction_model=None, preload=None,
                 fault_m0=(0.0, 1.0, 0.0), forcing=None, clamp_tensile=False):
        if len(sides) not in (1, 2):
            raise ValueError("FaultSystem supports one or two blocks")
        self.sides = list(sides)
        self.friction_model = friction_model
        self.preload = preload
        self.forcing = forcing
        self.clamp_tensile = clamp_tensile
        self.contexts = []
        for side in self.sides:
            ctxs = {}
            for face, bc in side.boundaries.items():
                ctxs[face] = make_face_context(side.block, side.material,
                                               side.ops, face)
            self.contexts.append(ctxs)
        if len(self.sides) == 2:
            if friction_model is None:
                raise ValueError("two blocks require a friction model")
            self.fault_minus = make_face_context(
                self.sides[0].block, self.sides[0].material, self.sides[0].ops,
                "q1", m0=fault_m0)
            self.fault_plus = make_face_context(
                self.sides[1].block, self.sides[1].material, self.sides[1].ops,
                "q0", m0=fault_m0)
            gap = np.abs(self.fault_minus.frame.normal
                         - self.fault_plus.frame.normal).max()
            if gap > 1e-12:
                raise ValueError(f"fault faces are not conforming ({gap:.2e})")
            if "q1" in self.sides[0].boundaries or \
                    "q0" in self.sides[1].boundaries:
                raise ValueError("fault faces cannot carry exterior conditions")
        else:
            self.fault_minus = self.fault_plus = None

    @property
    def fault_shape(self):
        return self.fault_minus.frame.shape if self.fault_minus else None

    def zero_states(self):
        return [elastic.ElasticState.zeros(s.block.shape) for s in self.sides]

    def rhs(self, t, states, fault_state=None) -> RhsResult:
        dq = [elastic.rhs_interior(st, side.block, side.material, side.ops)
              for st, side in zip(states, self.sides)]
        face_energy = {}

        applied_forcing = None
        if self.forcing is not None:
            applied_forcing = []
            for i, side in enumerate(self.sides):
                f = self.forcing(t, i)
                applied_forcing.append(f)
                if f is not None:
                    dq[i] += f

        slip_rate = state_rate = None
        trace = None
        if self.fault_minus is not None:
            trace = self._fault_rhs(t, states, fault_state, dq, face_energy)
            slip_rate = trace.vmag
            model = self.friction_model
            if model.state_name == "psi":
                state_rate = model.state_rate(trace.vmag, fault_state)
            else:
                state_rate = None

        for i, side in enumerate(self.sides):
            for face, bc in side.boundaries.items():
                ctx = self.contexts[i][face]
                v_loc, t_loc = face_trace(states[i], ctx)
                external = bc.data(t) if bc.kind == "data" else None
                v_hat, t_hat = boundary_data(bc.kind, v_loc, t_loc,
                                             ctx.impedance, ctx.sign, external)
                side_name = "minus" if ctx.end == 1 else "plus"
                g, gt = penalty_terms(v_loc, t_loc, v_hat, t_hat,
                                      ctx.impedance, side_name)
                apply_face_penalty(dq[i], ctx, side.block, side.material, g, gt)
                quad = (g ** 2 / ctx.impedance).sum(axis=0)
                power = (t_hat * v_hat).sum(axis=0)
                face_energy[(i, face)] = -ctx.cubature(quad - ctx.sign * power)

        return RhsResult(dq=dq, slip_rate=slip_rate, state_rate=state_rate,
                         trace=trace, face_energy=face_energy,
                         forcing=applied_forcing)

    def _fault_rhs(self, t, states, fault_state, dq, face_energy):
        ctx_m, ctx_p = self.fault_minus, self.fault_plus
        v_m, t_m = face_trace(states[0], ctx_m)
        v_p, t_p = face_trace(states[1], ctx_p)
        q_plus = 0.5 * (ctx_p.impedance * v_p + t_p)
        p_minus = 0.5 * (ctx_m.impedance * v_m - t_m)
        hat = friction.hat_variables(
            q_plus, p_minus, ctx_p.impedance, ctx_m.impedance,
            self.friction_model, state=fault_state, preload=self.preload,
            clamp_tensile=self.clamp_tensile)

        g_m, gt_m = penalty_terms(v_m, t_m, hat.v_hat_minus,
                                  hat.t_hat if self.preload is None
                                  else hat.t_hat - self.preload,
                                  ctx_m.impedance, "minus")
        g_p, gt_p = penalty_terms(v_p, t_p, hat.v_hat_plus,
                                  hat.t_hat if self.preload is None
                                  else hat.t_hat - self.preload,
                                  ctx_p.impedance, "plus")
        apply_face_penalty(dq[0], ctx_m, self.sides[0].block,
                           self.sides[0].material, g_m, gt_m)
        apply_face_penalty(dq[1], ctx_p, self.sides[1].block,
                           self.sides[1].material, g_p, gt_p)

        that_dyn = hat.t_hat if self.preload is None \
            else hat.t_hat - self.preload
        face_energy[(0, "fault")] = -ctx_m.cubature(
            (g_m ** 2 / ctx_m.impedance).sum(axis=0)
            - (that_dyn * hat.v_hat_minus).sum(axis=0))
        face_energy[(1, "fault")] = -ctx_p.cubature(
            (g_p ** 2 / ctx_p.impedance).sum(axis=0)
            + (that_dyn * hat.v_hat_plus).sum(axis=0))

        return FaultTrace(
            vmag=hat.vmag, jump=hat.jump, t_hat=hat.t_hat,
            sigma_n=hat.sigma_n, phi=hat.phi, eta=hat.eta,
            dissipation=hat.dissipation_density, g_minus=g_m, g_plus=g_p,
            that_dyn=that_dyn, vhat_minus=hat.v_hat_minus,
            vhat_plus=hat.v_hat_plus)

    # -- energy diagnostics -------------------------------------------------

    def energy(self, states) -> float:
        return elastic.discrete_energy(
            (st, side.block, side.material, side.ops)
            for st, side in zip(states, self.sides))

    def _hp_bilinear(self, states, fields) -> float:
        """``<Q, P~^{-1} X>_H`` summed over blocks (X per-block 9-fields)."""
        total = 0.0
        for st, side, x in zip(states, self.sides, fields):
            if x is None:
                continue
            w = elastic.quadrature_weights(side.ops)
            mat = side.material
            vdot = mat.rho * (st.q[:3] * x[:3]).sum(axis=0)
            lam, mu = mat.lam, mat.mu
            det = mu * (3 * lam + 2 * mu)
            a = (lam + mu) / det
            b = -lam / (2 * det)
            s, ds = st.q[3:], x[3:]
            sdot = (a * (s[0] * ds[0] + s[1] * ds[1] + s[2] * ds[2])
                    + b * (s[0] * (ds[1] + ds[2]) + s[1] * (ds[0] + ds[2])
                           + s[2] * (ds[0] + ds[1]))
                    + (s[3] * ds[3] + s[4] * ds[4] + s[5] * ds[5]) / mu)
            total += float(((vdot + sdot) * side.block.jac * w).sum())
        return total

    def energy_rate(self, states, result: RhsResult) -> float:
        """``d/dt <Q, P~^{-1} Q>/2`` from one rhs evaluation."""
        return self._hp_bilinear(states, result.dq)


@dataclass
class EnergyDiagnostics:
    energy: float
    rate: float
    interface_term: float        # -I(alpha V^2), total traction, <= 0
    fluc_minus: float
    fluc_plus: float
    preload_power: float         # I(sum_j preload_j [v_j]); 0 without preload
    exterior: float              # all exterior face contributions
    residual: float


def energy_diagnostics(system: FaultSystem, states, fault_state=None,
                       t=0.0, result: RhsResult | None = None) -> EnergyDiagnostics:
    """Evaluate the semi-discrete energy identity at one instant.

    The rate from one rhs evaluation must equal the fault fluctuation terms
    plus the frictional dissipation, the preload power, and the exterior face
    contributions, to round-off.
    """
    if result is None:
        result = system.rhs(t, states, fault_state)
    energy = system.energy(states)
    rate = system.energy_rate(states, result)

    fluc_minus = fluc_plus = its = pre = 0.0
    if result.trace is not None:
        tr = result.trace
        ctx_m, ctx_p = system.fault_minus, system.fault_plus
        fluc_minus = -ctx_m.cubature(
            (tr.g_minus ** 2 / ctx_m.impedance).sum(axis=0))
        fluc_plus = -ctx_p.cubature(
            (tr.g_plus ** 2 / ctx_p.impedance).sum(axis=0))
        its = -ctx_m.cubature(tr.dissipation)
        if system.preload is not None:
            pre = ctx_m.cubature((system.preload * tr.jump).sum(axis=0))
    exterior = sum(v for (i, f), v in result.face_energy.items()
                   if f != "fault")
    forcing_power = 0.0
    if result.forcing is not None:
        forcing_power = system._hp_bilinear(states, result.forcing)
    expected = fluc_minus + fluc_plus + its + pre + exterior + forcing_power
    residual = abs(rate - expected)
    return EnergyDiagnostics(energy=energy, rate=rate, interface_term=its,
                             fluc_minus=fluc_minus, fluc_plus=fluc_plus,
                             preload_power=pre, exterior=exterior,
                             residual=residual)
