"""Friction laws and the interface gluing (hat-variable) construction.

Internal units are km/s for velocities, GPa for tractions, km for slip;
constructors accept the benchmark-native units (m/s, MPa, m) and convert.
Handily, 1 MPa s/m equals 1 GPa s/km, so linear strengths keep their value.

Given the outgoing characteristics and impedances on both sides of a fault
node, the interface data are the unique velocity/traction pair that keeps the
outgoing characteristic amplitudes, balances traction, forbids opening, and
satisfies the friction law exactly.  The tangential part reduces to a scalar
root problem for the slip-rate magnitude ``V``:

    Theta(V) = sqrt( sum_j Phi_j^2 / (eta_j V + tau_s(V))^2 ) = 1,

with the stress transfers ``Phi_j``, the impedance combinations
``eta_j = Z+ Z- / (Z+ + Z-)``, and the total strength
``tau_s(V) = C0 + sigma_n f(V or S, psi)``.  ``Theta`` decreases strictly
from its value at ``V = 0+`` (possibly infinite) to zero, so a root exists
and is unique whenever the fault is not locked; a bracketed, safeguarded
Newton iteration finds it to relative tolerance 1e-12.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MPA = 1e-3      # MPa  -> GPa
METER = 1e-3    # m    -> km
MPS = 1e-3      # m/s  -> km/s

_TOL = 1e-12
_MAX_ITER = 100


class TensileFaultError(ValueError):
    """Normal traction pulls the interface apart; not modeled."""


class SlipRateSolverError(RuntimeError):
    """Newton/bisection failed to converge (carries the final bracket)."""

    def __init__(self, message, bracket=None):
        super().__init__(message)
        self.bracket = bracket


def _as_field(value):
    return np.asarray(value, dtype=float)


class SlipWeakening:
    """Linear slip-weakening with optional cohesion.

    ``f(S)`` drops linearly from ``f_s`` to ``f_d`` over the critical slip
    distance; parameters may be per-node arrays (barrier regions).  The state
    variable is the accumulated slip ``S`` (km), advanced as ``dS/dt = V``.
    """

    kind = "slip_weakening"
    state_name = "slip"
    uses_normal_stress = True

    def __init__(self, f_s, f_d, d_c, cohesion=0.0):
        self.f_s = _as_field(f_s)
        self.f_d = _as_field(f_d)
        self.dc_km = _as_field(d_c) * METER
        self.c0_gpa = _as_field(cohesion) * MPA
        if np.any(self.f_d <= 0) or np.any(self.f_d >= self.f_s):
            raise ValueError("slip weakening requires 0 < f_d < f_s")
        if np.any(self.dc_km <= 0):
            raise ValueError("critical slip distance must be positive")

    def coefficient(self, slip, state=None):
        if np.any(np.asarray(slip) < 0):
            raise ValueError("slip must be nonnegative")
        frac = np.minimum(np.asarray(slip, dtype=float) / self.dc_km, 1.0)
        return self.f_s - (self.f_s - self.f_d) * frac

    def strength(self, sigma_n, theta, state):
        return self.c0_gpa + sigma_n * self.coefficient(state) \
            + 0.0 * np.asarray(theta)

    def strength_slope(self, sigma_n, theta, state):
        return np.zeros(np.broadcast_shapes(np.shape(sigma_n), np.shape(theta)))

    def state_rate(self, vhat, state):
        return vhat


class RateState:
    """Regularized rate-and-state law with aging or slip state evolution.

    ``f(V, psi) = a asinh( V e^{psi/a} / (2 V0) )``; the nondimensional state
    ``psi`` evolves by the chosen law.
    """

    def __init__(self, a, b, f0, v0, d_c, law="aging"):
        if law not in ("aging", "slip"):
            raise ValueError(f"law must be 'aging' or 'slip', got {law!r}")
        self.a = _as_field(a)
        self.b = _as_field(b)
        self.f0 = _as_field(f0)
        self.v0_kmps = _as_field(v0) * MPS
        self.dc_km = _as_field(d_c) * METER
        self.law = law
        if np.any(self.a <= 0) or np.any(self.v0_kmps <= 0):
            raise ValueError("a and V0 must be positive")
        if np.any(self.dc_km <= 0):
            raise ValueError("state evolution distance must be positive")
        self.c0_gpa = np.zeros(())

    @property
    def kind(self):
        return f"rate_state_{self.law}"

    state_name = "psi"
    uses_normal_stress = True

    def coefficient(self, v, state):
        if np.any(np.asarray(v) < 0):
            raise ValueError("slip rate must be nonnegative")
        u = np.asarray(v, dtype=float) / (2 * self.v0_kmps) * np.exp(state / self.a)
        return self.a * np.arcsinh(u)

    def _dcoefficient_dv(self, v, state):
        scale = np.exp(state / self.a) / (2 * self.v0_kmps)
        u = np.asarray(v, dtype=float) * scale
        return self.a * scale / np.hypot(1.0, u)

    def strength(self, sigma_n, theta, state):
        return sigma_n * self.coefficient(theta, state)

    def strength_slope(self, sigma_n, theta, state):
        return sigma_n * self._dcoefficient_dv(theta, state)

    def steady_state_coefficient(self, v):
        return self.f0 - (self.b - self.a) * np.log(v / self.v0_kmps)

    def steady_state(self, v):
        """State value with zero evolution rate at slip rate ``v`` (aging)."""
        return self.f0 - self.b * np.log(np.asarray(v, dtype=float) / self.v0_kmps)

    def state_rate(self, vhat, state):
        v = np.asarray(vhat, dtype=float)
        if self.law == "aging":
            return (self.b * self.v0_kmps / self.dc_km) * (
                np.exp((self.f0 - state) / self.b) - v / self.v0_kmps)
        out = np.zeros(np.broadcast_shapes(v.shape, np.shape(state)))
        moving = v > 0
        if np.any(moving):
            vm = np.broadcast_to(v, out.shape)[moving]
            sm = np.broadcast_to(state, out.shape)[moving]
            f = self.coefficient(vm, sm)
            fss = np.broadcast_to(self.steady_state_coefficient(vm), f.shape)
            dc = np.broadcast_to(self.dc_km, out.shape)[moving]
            out[moving] = -(vm / dc) * (f - fss)
        return out


class FrozenLinear:
    """Linearized interface: constant strength slope ``T_j = alpha [v_j]``."""

    kind = "frozen_linear"
    state_name = None
    uses_normal_stress = False

    def __init__(self, alpha):
        self.alpha = _as_field(alpha)   # MPa s/m == GPa s/km
        if np.any(self.alpha < 0):
            raise ValueError("alpha must be nonnegative")
        self.c0_gpa = np.zeros(())

    def coefficient(self, v, state=None):
        raise TypeError("frozen linear law has no friction coefficient")

    def strength(self, sigma_n, theta, state):
        return self.alpha * np.asarray(theta, dtype=float)

    def strength_slope(self, sigma_n, theta, state):
        return self.alpha + 0.0 * np.asarray(theta)

    def state_rate(self, vhat, state):
        return np.zeros_like(np.asarray(vhat, dtype=float))


def friction_coefficient(model, v_or_slip, state=None):
    """Friction coefficient of a law at slip (weakening) or slip rate."""
    return model.coefficient(v_or_slip, state)


def state_rate(model, vhat, state):
    return model.state_rate(vhat, state)


def solve_slip_rate(phi_l, phi_m, eta_l, eta_m, sigma_n, model, state=None):
    """Root of ``Theta(V) = 1``: the slip-rate magnitude per fault node.

    All arguments broadcast; returns 0 where the transfers vanish or the
    strength is never overcome.  Raises :class:`TensileFaultError` for
    ``sigma_n < 0`` and :class:`SlipRateSolverError` on non-convergence.
    """
    phi_l, phi_m, eta_l, eta_m, sigma_n = map(
        _as_field, (phi_l, phi_m, eta_l, eta_m, sigma_n))
    if np.any(sigma_n < 0):
        raise TensileFaultError("negative compressive normal stress")
    shape = np.broadcast_shapes(phi_l.shape, phi_m.shape, eta_l.shape,
                                eta_m.shape, sigma_n.shape,
                                np.shape(state) if state is not None else ())
    pl, pm, el, em, sn = (np.broadcast_to(a, shape).astype(float)
                          for a in (phi_l, phi_m, eta_l, eta_m, sigma_n))
    st = None if state is None else \
        np.broadcast_to(state, shape).astype(float)

    mag = np.hypot(pl, pm)
    tau0 = np.broadcast_to(model.strength(sn, np.zeros(shape), st), shape)
    locked = mag <= tau0
    if locked.all():
        return np.zeros(shape)

    def theta_fun(x):
        tau = model.strength(sn, x, st)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = np.sqrt((pl / (el * x + tau)) ** 2
                          + (pm / (em * x + tau)) ** 2)
        return np.where(locked, 0.0, val)

    def theta_slope(x):
        tau = model.strength(sn, x, st)
        dtau = model.strength_slope(sn, x, st)
        t = np.maximum(theta_fun(x), 1e-300)
        dl = el * x + tau
        dm = em * x + tau
        with np.errstate(divide="ignore", invalid="ignore"):
            return -(pl ** 2 * (el + dtau) / dl ** 3
                     + pm ** 2 * (em + dtau) / dm ** 3) / t

    # Newton in (log theta, log Theta): across the arcsinh regime log Theta
    # is close to linear in log theta, so deep roots converge in a few steps.
    with np.errstate(divide="ignore"):
        uhi = np.where(locked, 0.0, np.log(mag / np.minimum(el, em)))
    ulo = uhi - 40.0
    negligible = np.zeros(shape, dtype=bool)
    for _ in range(6):
        open_lanes = (theta_fun(np.exp(ulo)) <= 1.0) & ~negligible & ~locked
        if not np.any(open_lanes):
            break
        ulo = np.where(open_lanes, ulo - 80.0, ulo)
        negligible |= open_lanes & (uhi - ulo > 520.0)
    u = 0.5 * (ulo + uhi)
    converged = negligible | locked
    for _ in range(_MAX_ITER):
        x = np.exp(u)
        g = theta_fun(x) - 1.0
        converged = converged | (np.abs(g) < _TOL)
        if converged.all():
            break
        above = g > 0          # theta too small -> move right
        ulo = np.where(above & ~converged, u, ulo)
        uhi = np.where(~above & ~converged, u, uhi)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            dlog = x * theta_slope(x) / np.maximum(g + 1.0, 1e-300)
            u_new = u - np.log1p(g) / dlog
        bad = ~np.isfinite(u_new) | (u_new <= ulo) | (u_new >= uhi)
        u_new = np.where(bad, 0.5 * (ulo + uhi), u_new)
        u = np.where(converged, u, u_new)
    if not converged.all():
        worst = int(np.argmax(~converged.ravel()))
        raise SlipRateSolverError(
            "slip-rate iteration did not converge",
            bracket=(float(np.exp(ulo.ravel()[worst])),
                     float(np.exp(uhi.ravel()[worst]))))
    theta = np.where(locked | negligible, 0.0, np.exp(u))
    return theta.reshape(shape)


@dataclass(frozen=True)
class HatVariables:
    """Interface data per fault node, local (n, m, l) frame components."""

    t_hat: np.ndarray        # (3, ...) traction, shared by both sides
    jump: np.ndarray         # (3, ...) [v_hat]; normal row exactly zero
    v_hat_plus: np.ndarray   # (3, ...)
    v_hat_minus: np.ndarray  # (3, ...)
    vmag: np.ndarray         # slip-rate magnitude
    strength: np.ndarray     # tau_s(V) actually enforced (GPa)
    sigma_n: np.ndarray      # compressive normal stress used (>= 0)
    phi: np.ndarray          # (3, ...) stress transfers
    eta: np.ndarray          # (3, ...) impedance combinations

    @property
    def dissipation_density(self) -> np.ndarray:
        """``sum_j T_hat_j [v_hat_j] = alpha |V|^2 >= 0`` per node."""
        return (self.t_hat * self.jump).sum(axis=0)


def hat_variables(q_plus, p_minus, z_plus, z_minus, model, state=None,
                  preload=None, clamp_tensile=False) -> HatVariables:
    """Solve the interface conditions given the outgoing characteristics.

    ``q_plus``/``p_minus`` are (3, ...) arrays of the outgoing characteristic
    amplitudes in the local frame (rows n, m, l); ``z_plus``/``z_minus`` the
    matching impedances.  ``preload`` adds a static traction to the stress
    transfers (the evolving fields then carry only the perturbation).  With
    ``clamp_tensile`` transient tensile normal stress contributes zero
    frictional strength instead of raising.
    """
    q_plus, p_minus, z_plus, z_minus = map(_as_field,
                                           (q_plus, p_minus, z_plus, z_minus))
    eta = z_plus * z_minus / (z_plus + z_minus)
    phi = eta * (2 * q_plus / z_plus - 2 * p_minus / z_minus)
    if preload is not None:
        phi = phi + preload

    t_hat_n = phi[0]
    sigma_n = -t_hat_n
    if model.uses_normal_stress and np.any(sigma_n < 0) and not clamp_tensile:
        raise TensileFaultError("interface normal stress became tensile")
    sigma_eff = np.maximum(sigma_n, 0.0)

    vmag = solve_slip_rate(phi[2], phi[1], eta[2], eta[1], sigma_eff, model,
                           state)
    tau = model.strength(sigma_eff, vmag, state)
    jump = np.zeros_like(phi)
    t_hat = np.empty_like(phi)
    t_hat[0] = t_hat_n
    for j in (1, 2):
        den = eta[j] * vmag + tau
        frac = np.where(den > 0, vmag / np.maximum(den, 1e-300), 0.0)
        jump[j] = phi[j] * frac
        t_hat[j] = phi[j] - eta[j] * jump[j]

    that_dyn = t_hat if preload is None else t_hat - preload
    v_hat_plus = (2 * q_plus - that_dyn) / z_plus
    v_hat_minus = (2 * p_minus + that_dyn) / z_minus
    return HatVariables(t_hat=t_hat, jump=jump, v_hat_plus=v_hat_plus,
                        v_hat_minus=v_hat_minus, vmag=vmag,
                        strength=np.broadcast_to(tau, vmag.shape),
                        sigma_n=sigma_eff, phi=phi, eta=eta)


def characteristics(z, v, t):
    """Left- and right-going characteristic amplitudes ``q`` and ``p``."""
    return 0.5 * (z * v + t), 0.5 * (z * v - t)
