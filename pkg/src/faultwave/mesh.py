"""Curvilinear blocks: unit-cube mappings, metric terms, and face frames.

A block maps the reference cube ``(q, r, s) in [0,1]^3`` onto one physical
sub-domain (coordinates in km).  Stored per node: physical coordinates, the
Jacobian determinant ``J`` of the forward map, and the inverse metric partials
``dxi/dx`` obtained from the forward partials through the adjugate formulas,
e.g. ``q_x = (y_r z_s - z_r y_s) / J``.

Forward partials come from the mapping's analytic Jacobian when it has one,
otherwise from differencing the coordinate fields with a high-order central
operator (metrics are precomputed data, not part of the dual-pairing energy
argument, so the central operator is fine here).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .operators import OperatorSizeError, apply_axis, build_traditional

_FACES = ("q0", "q1", "r0", "r1", "s0", "s1")


class FoldedMeshError(ValueError):
    """The mapping folds: non-positive Jacobian at some node."""


class DegenerateBasisError(ValueError):
    """Reference tangent parallel to the face normal somewhere on the face."""


# ---------------------------------------------------------------------------
# analytic mapping descriptors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AffineMap:
    """x = offset + A (q, r, s)^T; metrics are spatially constant."""

    matrix: tuple = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))
    offset: tuple = (0.0, 0.0, 0.0)
    kind: str = field(default="affine", init=False)

    def __call__(self, q, r, s):
        A, b = np.asarray(self.matrix), self.offset
        return (b[0] + A[0, 0] * q + A[0, 1] * r + A[0, 2] * s,
                b[1] + A[1, 0] * q + A[1, 1] * r + A[1, 2] * s,
                b[2] + A[2, 0] * q + A[2, 1] * r + A[2, 2] * s)

    def jacobian(self, q, r, s):
        A = np.asarray(self.matrix)
        shape = np.shape(q)
        return np.broadcast_to(A[:, :, None, None, None],
                               (3, 3) + shape).astype(float)

    def params(self) -> dict:
        return {"matrix": self.matrix, "offset": self.offset}


def identity_map() -> AffineMap:
    return AffineMap()


def box_map(x0, x1, y0, y1, z0, z1) -> AffineMap:
    return AffineMap(matrix=((x1 - x0, 0.0, 0.0),
                             (0.0, y1 - y0, 0.0),
                             (0.0, 0.0, z1 - z0)),
                     offset=(x0, y0, z0))


@dataclass(frozen=True)
class DipShearMap:
    """One block of a domain split by a dipping plane ``x = y / tan(dip)``.

    The ``left`` block puts the dipping plane at its ``q = 1`` face and the
    ``right`` block at ``q = 0``, so the plane normal points left-to-right on
    both.  ``width`` is the block's x-extent at the surface, ``depth`` the
    y-extent, ``(z0, z1)`` the along-strike extent.  The map is affine, so the
    mesh is uniformly skewed.
    """

    side: str
    width: float
    dip_deg: float
    depth: float
    z0: float
    z1: float
    kind: str = field(default="dip_shear", init=False)

    def __post_init__(self):
        if self.side not in ("left", "right"):
            raise ValueError(f"side must be 'left' or 'right', got {self.side!r}")

    @property
    def _x_off(self) -> float:
        return -self.width if self.side == "left" else 0.0

    def __call__(self, q, r, s):
        cot = 1.0 / math.tan(math.radians(self.dip_deg))
        y = r * self.depth
        x = self._x_off + q * self.width + cot * y
        z = self.z0 + s * (self.z1 - self.z0)
        return x, y, z

    def jacobian(self, q, r, s):
        cot = 1.0 / math.tan(math.radians(self.dip_deg))
        A = np.array([[self.width, cot * self.depth, 0.0],
                      [0.0, self.depth, 0.0],
                      [0.0, 0.0, self.z1 - self.z0]])
        return np.broadcast_to(A[:, :, None, None, None],
                               (3, 3) + np.shape(q)).astype(float)

    def params(self) -> dict:
        return {"side": self.side, "width": self.width, "dip_deg": self.dip_deg,
                "depth": self.depth, "z0": self.z0, "z1": self.z1}


@dataclass(frozen=True)
class SinePerturbMap:
    """Smoothly perturbed box for curvilinear testing.

    ``x = x-extent * (q + ax sin(pi r) sin(pi s))`` and cyclically, on top of
    an axis-aligned box.
    """

    bounds: tuple = (0.0, 1.0, 0.0, 1.0, 0.0, 1.0)
    ax: float = 0.05
    ay: float = 0.0
    az: float = 0.0
    kind: str = field(default="sine_perturb", init=False)

    def __call__(self, q, r, s):
        x0, x1, y0, y1, z0, z1 = self.bounds
        pi = math.pi
        x = x0 + (x1 - x0) * (q + self.ax * np.sin(pi * r) * np.sin(pi * s))
        y = y0 + (y1 - y0) * (r + self.ay * np.sin(pi * s) * np.sin(pi * q))
        z = z0 + (z1 - z0) * (s + self.az * np.sin(pi * q) * np.sin(pi * r))
        return x, y, z

    def jacobian(self, q, r, s):
        x0, x1, y0, y1, z0, z1 = self.bounds
        pi = math.pi
        one = np.ones_like(q)
        jac = np.zeros((3, 3) + np.shape(q))
        jac[0, 0] = (x1 - x0) * one
        jac[0, 1] = (x1 - x0) * self.ax * pi * np.cos(pi * r) * np.sin(pi * s)
        jac[0, 2] = (x1 - x0) * self.ax * pi * np.sin(pi * r) * np.cos(pi * s)
        jac[1, 1] = (y1 - y0) * one
        jac[1, 2] = (y1 - y0) * self.ay * pi * np.cos(pi * s) * np.sin(pi * q)
        jac[1, 0] = (y1 - y0) * self.ay * pi * np.sin(pi * s) * np.cos(pi * q)
        jac[2, 2] = (z1 - z0) * one
        jac[2, 0] = (z1 - z0) * self.az * pi * np.cos(pi * q) * np.sin(pi * r)
        jac[2, 1] = (z1 - z0) * self.az * pi * np.sin(pi * q) * np.cos(pi * r)
        return jac

    def params(self) -> dict:
        return {"bounds": self.bounds, "ax": self.ax, "ay": self.ay,
                "az": self.az}


MAP_KINDS = {
    "affine": AffineMap,
    "dip_shear": DipShearMap,
    "sine_perturb": SinePerturbMap,
}


def mapping_from_params(kind: str, params: dict):
    if kind not in MAP_KINDS:
        raise ValueError(f"unknown mapping kind {kind!r}; known: {sorted(MAP_KINDS)}")
    return MAP_KINDS[kind](**params)


# ---------------------------------------------------------------------------
# block construction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CurvilinearBlock:
    dims: tuple                 # (n_q, n_r, n_s) cells per axis
    x: np.ndarray               # physical coordinates, km
    y: np.ndarray
    z: np.ndarray
    jac: np.ndarray             # J per node, km^3
    metrics: np.ndarray         # metrics[i, j] = d xi_i / d x_j, 1/km

    @property
    def shape(self):
        return self.x.shape

    @property
    def spacings(self):
        return tuple(1.0 / n for n in self.dims)

    def metric_row(self, axis: int) -> np.ndarray:
        """Gradient of one reference coordinate, shape (3, ...)."""
        return self.metrics[axis]

    def grad_norm(self, axis: int) -> np.ndarray:
        """|grad xi| per node."""
        g = self.metrics[axis]
        return np.sqrt(g[0] ** 2 + g[1] ** 2 + g[2] ** 2)


def _discrete_forward_partials(coords, dims):
    """Difference the coordinate fields along each axis (central operators)."""
    jac = np.zeros((3, 3) + coords[0].shape)
    for axis, n in enumerate(dims):
        ops = None
        for order in (6, 4, 2):
            try:
                ops = build_traditional(order, n)
                break
            except OperatorSizeError:
                continue
        if ops is None:
            raise OperatorSizeError(f"axis {axis} too short to difference")
        for i, c in enumerate(coords):
            jac[i, axis] = apply_axis(ops, "minus", axis, c)
    return jac


def _invert_metrics(jac):
    """Jacobian determinant and inverse partials via the adjugate formulas."""
    x_q, x_r, x_s = jac[0]
    y_q, y_r, y_s = jac[1]
    z_q, z_r, z_s = jac[2]
    J = (x_q * (y_r * z_s - z_r * y_s)
         - y_q * (x_r * z_s - z_r * x_s)
         + z_q * (x_r * y_s - y_r * x_s))
    m = np.empty_like(jac)
    m[0, 0] = (y_r * z_s - z_r * y_s) / J          # q_x
    m[0, 1] = (z_r * x_s - x_r * z_s) / J          # q_y
    m[0, 2] = (x_r * y_s - y_r * x_s) / J          # q_z
    m[1, 0] = (z_q * y_s - y_q * z_s) / J          # r_x
    m[1, 1] = (x_q * z_s - z_q * x_s) / J          # r_y
    m[1, 2] = (y_q * x_s - x_q * y_s) / J          # r_z
    m[2, 0] = (y_q * z_r - z_q * y_r) / J          # s_x
    m[2, 1] = (z_q * x_r - x_q * z_r) / J          # s_y
    m[2, 2] = (x_q * y_r - x_r * y_q) / J          # s_z
    return J, m


def build_block(mapping, dims, metric_mode: str = "analytic") -> CurvilinearBlock:
    """Sample a mapping on the reference grid and assemble its metric data.

    ``metric_mode`` selects analytic differentiation of the mapping (when it
    provides a Jacobian) or the high-order difference fallback.  Raises
    :class:`FoldedMeshError` when ``J <= 0`` anywhere.
    """
    nq, nr, ns = dims
    q, r, s = np.meshgrid(np.linspace(0, 1, nq + 1),
                          np.linspace(0, 1, nr + 1),
                          np.linspace(0, 1, ns + 1), indexing="ij")
    x, y, z = mapping(q, r, s)
    if metric_mode == "analytic" and hasattr(mapping, "jacobian"):
        fwd = mapping.jacobian(q, r, s)
    elif metric_mode in ("analytic", "discrete"):
        fwd = _discrete_forward_partials((x, y, z), dims)
    else:
        raise ValueError(f"metric_mode must be analytic or discrete, got {metric_mode!r}")
    J, metrics = _invert_metrics(np.asarray(fwd, dtype=float))
    if J.min() <= 0.0:
        idx = np.unravel_index(int(np.argmin(J)), J.shape)
        raise FoldedMeshError(f"non-positive Jacobian {J[idx]:.3e} at node {idx}")
    return CurvilinearBlock(dims=tuple(dims), x=x, y=y, z=z, jac=J,
                            metrics=metrics)


def free_stream_residual(block: CurvilinearBlock, ops_per_axis) -> float:
    """Residual of the discrete metric identity ``sum_xi D(J grad xi) = 0``.

    Diagnostic only; the scheme does not rely on it vanishing.
    """
    worst = 0.0
    for comp in range(3):
        acc = np.zeros(block.shape)
        for axis in range(3):
            fld = block.jac * block.metrics[axis, comp]
            acc += apply_axis(ops_per_axis[axis], "minus", axis, fld)
        worst = max(worst, float(np.abs(acc).max()))
    return worst


# ---------------------------------------------------------------------------
# face frames and rotations
# ---------------------------------------------------------------------------


def face_slicer(face: str):
    """Index tuple selecting one reference-cube face of a node array."""
    if face not in _FACES:
        raise ValueError(f"face must be one of {_FACES}, got {face!r}")
    axis = "qrs".index(face[0])
    end = int(face[1])
    sl = [slice(None)] * 3
    sl[axis] = 0 if end == 0 else -1
    return axis, end, tuple(sl)


@dataclass(frozen=True)
class FaceFrame:
    """Orthonormal frame per face node: rows of R are (n, m, l)."""

    face: str
    axis: int
    end: int
    normal: np.ndarray          # (3, ...) unit normal along +grad(xi)
    tangent_m: np.ndarray
    tangent_l: np.ndarray
    rotation: np.ndarray        # (3, 3, ...) R with rows n, m, l
    area_scale: np.ndarray      # |grad xi| J per face node, km^2

    @property
    def shape(self):
        return self.normal.shape[1:]


def face_frame(block: CurvilinearBlock, face: str,
               m0=(0.0, 1.0, 0.0)) -> FaceFrame:
    """Unit normal, tangents and rotation on one block face.

    The normal points along the positive reference-coordinate gradient (for
    the fault faces this is left block -> right block regardless of side);
    ``m`` is the Gram-Schmidt projection of ``m0`` and ``l = n x m``.
    """
    axis, end, sl = face_slicer(face)
    grad = np.stack([block.metrics[axis, c][sl] for c in range(3)])
    norm = np.sqrt((grad ** 2).sum(axis=0))
    n = grad / norm
    m0 = np.asarray(m0, dtype=float).reshape(3, 1, 1)
    proj = (n * m0).sum(axis=0)
    m_raw = m0 - proj * n
    m_len = np.sqrt((m_raw ** 2).sum(axis=0))
    if m_len.min() < 1e-10:
        raise DegenerateBasisError(
            f"reference tangent parallel to the normal on face {face}")
    m = m_raw / m_len
    l = np.cross(n, m, axis=0)
    R = np.stack([n, m, l])
    area = norm * block.jac[sl]
    return FaceFrame(face=face, axis=axis, end=end, normal=n, tangent_m=m,
                     tangent_l=l, rotation=R, area_scale=area)


def rotate(vec: np.ndarray, rotation: np.ndarray) -> np.ndarray:
    """Physical (x,y,z) components -> local (n,m,l) components."""
    return np.einsum("ab...,b...->a...", rotation, vec)


def rotate_back(vec: np.ndarray, rotation: np.ndarray) -> np.ndarray:
    """Local (n,m,l) components -> physical (x,y,z) components."""
    return np.einsum("ba...,b...->a...", rotation, vec)


def dump_csv(block: CurvilinearBlock, path) -> None:
    """Write ``i,j,k,x,y,z,J`` per node for inspection."""
    with open(path, "w") as fh:
        fh.write("i,j,k,x,y,z,J\n")
        nq, nr, ns = block.shape
        for i in range(nq):
            for j in range(nr):
                for k in range(ns):
                    fh.write(f"{i},{j},{k},{block.x[i, j, k]:.12g},"
                             f"{block.y[i, j, k]:.12g},{block.z[i, j, k]:.12g},"
                             f"{block.jac[i, j, k]:.12g}\n")
