"""Velocity-stress elastic fields and the split semi-discrete right-hand side.

The unknown per node is ``Q = (v_x, v_y, v_z, sxx, syy, szz, sxy, sxz, syz)``
in units (km/s, GPa); density is g/cm^3 so that ``rho * c^2`` is in GPa.  On
the reference cube the equation of motion splits into a conservative flux
``F_xi`` carrying tractions into the velocity rows and a non-conservative
product ``B_xi`` carrying velocity gradients into the stress rows; the two
satisfy a pointwise skew-symmetry that the discrete scheme preserves by
differencing ``F`` with the backward operator and the products with the
forward one.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .mesh import CurvilinearBlock
from .operators import apply_axis

N_FIELDS = 9
VOIGT = ("xx", "yy", "zz", "xy", "xz", "yz")
# symmetric tensor component (a, b) for each Voigt slot
_VOIGT_AB = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))


class StateDivergedError(FloatingPointError):
    """NaN or Inf detected in the evolving fields."""

    def __init__(self, message, time=None, step=None):
        super().__init__(message)
        self.time = time
        self.step = step


@dataclass(frozen=True)
class MaterialField:
    """Isotropic material data on one block (possibly varying per node)."""

    rho: np.ndarray     # g/cm^3
    lam: np.ndarray     # GPa
    mu: np.ndarray      # GPa

    def __post_init__(self):
        rho, lam, mu = (np.asarray(a, dtype=float) for a in
                        (self.rho, self.lam, self.mu))
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "mu", mu)
        if rho.min() <= 0:
            raise ValueError("density must be strictly positive")
        if mu.min() <= 0:
            raise ValueError("shear modulus must be strictly positive")
        if np.any(lam <= -mu):
            raise ValueError("admissibility requires lambda > -mu")
        if np.any(lam <= -mu / 2):
            warnings.warn("lambda <= -mu/2: strong ellipticity is not "
                          "guaranteed", RuntimeWarning, stacklevel=2)

    @classmethod
    def uniform(cls, shape, rho, lam=None, mu=None, cp=None, cs=None):
        """Homogeneous material from Lame parameters or wave speeds."""
        if mu is None:
            mu = rho * cs ** 2
        if lam is None:
            lam = rho * cp ** 2 - 2 * mu
        full = np.full(shape, 1.0)
        return cls(rho=rho * full, lam=lam * full, mu=mu * full)

    @property
    def cp(self) -> np.ndarray:
        return np.sqrt((self.lam + 2 * self.mu) / self.rho)

    @property
    def cs(self) -> np.ndarray:
        return np.sqrt(self.mu / self.rho)

    def stiffness(self) -> np.ndarray:
        """6x6 stiffness for uniform material, in the module's Voigt order.

        Maps the velocity-gradient combination vector (the stress rows of the
        non-conservative products) to the stress rate.
        """
        lam = float(self.lam.flat[0])
        mu = float(self.mu.flat[0])
        if np.ptp(self.lam) > 0 or np.ptp(self.mu) > 0:
            raise ValueError("stiffness matrix only defined for uniform material")
        C = np.zeros((6, 6))
        C[:3, :3] = lam
        C[np.arange(3), np.arange(3)] = lam + 2 * mu
        C[np.arange(3, 6), np.arange(3, 6)] = mu
        return C

    def compliance(self) -> np.ndarray:
        return np.linalg.inv(self.stiffness())

    def strain_energy_density(self, sigma: np.ndarray) -> np.ndarray:
        """``sigma^T S sigma / 2`` per node, isotropic closed form (GPa)."""
        lam, mu = self.lam, self.mu
        det = mu * (3 * lam + 2 * mu)
        a = (lam + mu) / det
        b = -lam / (2 * det)
        sxx, syy, szz, sxy, sxz, syz = sigma
        normal = a * (sxx ** 2 + syy ** 2 + szz ** 2) \
            + 2 * b * (sxx * syy + sxx * szz + syy * szz)
        shear = (sxy ** 2 + sxz ** 2 + syz ** 2) / mu
        return 0.5 * (normal + shear)


@dataclass
class ElasticState:
    """Field vector on one block plus current time."""

    q: np.ndarray       # (9, nq+1, nr+1, ns+1)
    t: float = 0.0

    @classmethod
    def zeros(cls, shape) -> "ElasticState":
        return cls(q=np.zeros((N_FIELDS,) + tuple(shape)), t=0.0)

    @property
    def v(self) -> np.ndarray:
        return self.q[:3]

    @property
    def sigma(self) -> np.ndarray:
        return self.q[3:]

    def assert_finite(self, step=None):
        if not np.all(np.isfinite(self.q)):
            raise StateDivergedError(
                f"non-finite field values at t = {self.t:.6g}",
                time=self.t, step=step)


def flux_F(q: np.ndarray, block: CurvilinearBlock, axis: int) -> np.ndarray:
    """Conservative flux: velocity rows carry ``J (grad xi . sigma rows)``."""
    g = block.metrics[axis]
    J = block.jac
    sxx, syy, szz, sxy, sxz, syz = q[3:]
    out = np.zeros_like(q)
    out[0] = J * (g[0] * sxx + g[1] * sxy + g[2] * sxz)
    out[1] = J * (g[0] * sxy + g[1] * syy + g[2] * syz)
    out[2] = J * (g[0] * sxz + g[1] * syz + g[2] * szz)
    return out


def flux_B(dv: np.ndarray, block: CurvilinearBlock, axis: int) -> np.ndarray:
    """Non-conservative products: stress rows from one velocity gradient.

    ``dv`` holds the reference-direction derivatives ``d v / d xi`` of the
    three velocity components along the given axis.
    """
    g = block.metrics[axis]
    J = block.jac
    out = np.zeros((N_FIELDS,) + dv.shape[1:])
    out[3] = J * g[0] * dv[0]
    out[4] = J * g[1] * dv[1]
    out[5] = J * g[2] * dv[2]
    out[6] = J * (g[1] * dv[0] + g[0] * dv[1])
    out[7] = J * (g[2] * dv[0] + g[0] * dv[2])
    out[8] = J * (g[2] * dv[1] + g[1] * dv[2])
    return out


def skew_pair_contraction(q, dq_plus, block, axis):
    """Pointwise residual of the split-form skew symmetry (diagnostic).

    ``(D+ Q)^T F_xi(Q) - Q^T B_xi(grad_D+ Q)`` vanishes identically node by
    node for the corrected flux rows.
    """
    F = flux_F(q, block, axis)
    B = flux_B(dq_plus[:3], block, axis)
    return (dq_plus * F).sum(axis=0) - (q * B).sum(axis=0)


def rhs_interior(state: ElasticState, block: CurvilinearBlock,
                 material: MaterialField, ops_per_axis) -> np.ndarray:
    """Spatial right-hand side before any boundary or interface penalties.

    Backward differences on the conservative fluxes, forward differences
    inside the non-conservative products, then the material map
    ``P~ = J^{-1} P`` (velocity rows by ``1/(rho J)``, stress rows through
    Hooke's law).
    """
    q = state.q
    J = block.jac
    div_f = np.zeros((3,) + q.shape[1:])
    e = np.zeros((6,) + q.shape[1:])
    for axis in range(3):
        ops = ops_per_axis[axis]
        F = flux_F(q, block, axis)
        for comp in range(3):
            div_f[comp] += apply_axis(ops, "minus", axis, F[comp])
        dv = np.stack([apply_axis(ops, "plus", axis, q[c]) for c in range(3)])
        e += flux_B(dv, block, axis)[3:]
    out = np.empty_like(q)
    out[:3] = div_f / (material.rho * J)
    e /= J
    lam, mu = material.lam, material.mu
    trace = e[0] + e[1] + e[2]
    out[3] = lam * trace + 2 * mu * e[0]
    out[4] = lam * trace + 2 * mu * e[1]
    out[5] = lam * trace + 2 * mu * e[2]
    out[6] = mu * e[3]
    out[7] = mu * e[4]
    out[8] = mu * e[5]
    return out


def traction(sigma: np.ndarray, normal: np.ndarray) -> np.ndarray:
    """``T = sigma_bar n`` from Voigt stress components."""
    sxx, syy, szz, sxy, sxz, syz = sigma
    nx, ny, nz = normal
    return np.stack([
        sxx * nx + sxy * ny + sxz * nz,
        sxy * nx + syy * ny + syz * nz,
        sxz * nx + syz * ny + szz * nz,
    ])


def traction_on_face(state: ElasticState, frame, face_slice) -> dict:
    """Physical and frame-local traction on one block face."""
    sigma = state.sigma[(slice(None),) + face_slice]
    T = traction(sigma, frame.normal)
    local = np.einsum("ab...,b...->a...", frame.rotation, T)
    return {"physical": T, "normal": local[0], "dip": local[1],
            "strike": local[2], "local": local}


def quadrature_weights(ops_per_axis) -> np.ndarray:
    """Tensor-product H weights (including the h factors) per node."""
    wq, wr, ws = (ops.H for ops in ops_per_axis)
    return wq[:, None, None] * wr[None, :, None] * ws[None, None, :]


def energy_density(state: ElasticState, material: MaterialField) -> np.ndarray:
    kinetic = 0.5 * material.rho * (state.v ** 2).sum(axis=0)
    return kinetic + material.strain_energy_density(state.sigma)


def discrete_energy(parts) -> float:
    """Total mechanical energy ``<Q, P~^{-1} Q>_H / 2`` over all blocks.

    ``parts`` iterates over ``(state, block, material, ops_per_axis)``.
    """
    total = 0.0
    for state, block, material, ops_per_axis in parts:
        w = quadrature_weights(ops_per_axis)
        total += float((energy_density(state, material) * block.jac * w).sum())
    return total
